"""Oriented k-cells of boxes in Z^n: enumeration, incidence, boundary classification.

A k-cell is stored as (base point, strictly increasing direction tuple, sign).
The positively oriented representative (sign=+1) is canonical; forms store one
value per positive cell.  Cells are ordered lexicographically by (dirs, base),
and indexing is closed-form (offset per direction set + mixed-radix base), so
hot loops never need hash lookups.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

FREE = "free"
ZERO = "zero"


class DegreeError(ValueError):
    """Raised when an operation is asked for a cell degree it does not support."""


class LatticeSpec:
    """A box prod_i [lo_i, hi_i] in Z^n with a boundary condition.

    The standard lattice is the cube [-j, j]^n (use ``LatticeSpec.cube``).
    General boxes exist for tiny oracle lattices (a single plaquette is the
    box [0,1]^2) and are Free-mode only in practice.
    """

    __slots__ = ("n", "lo", "hi", "boundary")

    def __init__(self, n, j=None, boundary=FREE, lo=None, hi=None):
        if boundary not in (FREE, ZERO):
            raise ValueError(f"unknown boundary condition {boundary!r}")
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if j is not None:
            if j < 1 or int(j) != j:
                raise ValueError("half-side j must be an integer >= 1")
            lo = (-int(j),) * n
            hi = (int(j),) * n
        if lo is None or hi is None:
            raise ValueError("need either j or explicit lo/hi")
        lo = tuple(int(v) for v in lo)
        hi = tuple(int(v) for v in hi)
        if len(lo) != n or len(hi) != n:
            raise ValueError("lo/hi length must equal n")
        if any(h < l for l, h in zip(lo, hi)):
            raise ValueError("need hi >= lo on every axis")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "boundary", boundary)

    def __setattr__(self, name, value):
        raise AttributeError("LatticeSpec is immutable")

    @classmethod
    def cube(cls, n, j, boundary=FREE):
        return cls(n, j=j, boundary=boundary)

    @classmethod
    def box(cls, lo, hi, boundary=FREE):
        lo = tuple(lo)
        return cls(len(lo), boundary=boundary, lo=lo, hi=tuple(hi))

    @property
    def j(self):
        js = {h for h in self.hi} | {-l for l in self.lo}
        if len(js) != 1:
            raise ValueError("not a [-j,j]^n cube")
        return self.hi[0]

    @property
    def is_cube(self):
        return all(h == self.hi[0] and l == -self.hi[0] for l, h in zip(self.lo, self.hi))

    def side(self, axis):
        return self.hi[axis] - self.lo[axis]

    def with_boundary(self, boundary):
        return LatticeSpec(self.n, boundary=boundary, lo=self.lo, hi=self.hi)

    def __eq__(self, other):
        return (isinstance(other, LatticeSpec)
                and (self.n, self.lo, self.hi, self.boundary)
                == (other.n, other.lo, other.hi, other.boundary))

    def __hash__(self):
        return hash((self.n, self.lo, self.hi, self.boundary))

    def __repr__(self):
        if self.is_cube:
            return f"LatticeSpec(n={self.n}, j={self.hi[0]}, boundary={self.boundary!r})"
        return f"LatticeSpec(lo={self.lo}, hi={self.hi}, boundary={self.boundary!r})"


@dataclass(frozen=True)
class CellKey:
    """An oriented k-cell: base corner, spanned directions, orientation sign."""
    base: tuple
    dirs: tuple
    sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(int(v) for v in self.base))
        object.__setattr__(self, "dirs", tuple(int(v) for v in self.dirs))
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if any(a >= b for a, b in zip(self.dirs, self.dirs[1:])):
            raise ValueError("dirs must be strictly increasing")

    @property
    def k(self):
        return len(self.dirs)

    def flipped(self):
        return CellKey(self.base, self.dirs, -self.sign)


@dataclass(frozen=True)
class Incidence:
    cell: CellKey
    coeff: int


def direction_sets(n, k):
    """All k-element direction sets, in the canonical lexicographic order."""
    return list(itertools.combinations(range(n), k))


def base_shape(spec, dirs):
    """Number of admissible base coordinates per axis for cells spanning dirs."""
    ds = set(dirs)
    return tuple(spec.side(a) + (0 if a in ds else 1) for a in range(spec.n))


@lru_cache(maxsize=None)
def _layout(spec, k):
    """Per-direction-set offsets and shapes for degree-k cell indexing."""
    if k < 0 or k > spec.n:
        raise DegreeError(f"degree {k} out of range for n={spec.n}")
    offsets = {}
    shapes = {}
    total = 0
    for dirs in direction_sets(spec.n, k):
        sh = base_shape(spec, dirs)
        offsets[dirs] = total
        shapes[dirs] = sh
        total += int(np.prod(sh))
    return offsets, shapes, total


def cell_count(spec, k):
    """#C^k; for the cube [-j,j]^n this is binom(n,k)(2j+1)^(n-k)(2j)^k."""
    return _layout(spec, k)[2]


def in_box(spec, cell):
    for a in range(spec.n):
        top = cell.base[a] + (1 if a in cell.dirs else 0)
        if cell.base[a] < spec.lo[a] or top > spec.hi[a]:
            return False
    return True


def cell_index(spec, cell):
    """Index of the cell's positive representative in the canonical order."""
    offsets, shapes, _ = _layout(spec, cell.k)
    if cell.dirs not in offsets or not in_box(spec, cell):
        raise ValueError(f"cell {cell} not in {spec}")
    sh = shapes[cell.dirs]
    idx = 0
    for a in range(spec.n):
        idx = idx * sh[a] + (cell.base[a] - spec.lo[a])
    return offsets[cell.dirs] + idx


def cell_at(spec, k, index):
    """Inverse of cell_index (positive representative)."""
    offsets, shapes, total = _layout(spec, k)
    if not 0 <= index < total:
        raise IndexError(index)
    for dirs in reversed(direction_sets(spec.n, k)):
        if index >= offsets[dirs]:
            rem = index - offsets[dirs]
            sh = shapes[dirs]
            base = [0] * spec.n
            for a in range(spec.n - 1, -1, -1):
                base[a] = spec.lo[a] + rem % sh[a]
                rem //= sh[a]
            return CellKey(tuple(base), dirs, 1)
    raise IndexError(index)


def enumerate_cells(spec, k):
    """All positive k-cells in canonical (dirs, base) lexicographic order."""
    _, _, total = _layout(spec, k)
    return [cell_at(spec, k, i) for i in range(total)]


def boundary_of(cell):
    """Signed (k-1)-cells of the boundary; exactly 2k incidences.

    For w = (v_{i_1} ^ ... ^ v_{i_k})_x the boundary is
    sum over eps in {0,1}, position m of (-1)^(eps+m) (drop i_m)_{x + eps e_{i_m}},
    with m counted from 1.
    """
    if cell.k == 0:
        raise DegreeError("0-cells have no boundary")
    out = []
    for m, i in enumerate(cell.dirs, start=1):
        sub = tuple(d for d in cell.dirs if d != i)
        for eps in (0, 1):
            base = list(cell.base)
            base[i] += eps
            coeff = cell.sign * (-1) ** (eps + m)
            out.append(Incidence(CellKey(tuple(base), sub, 1), coeff))
    return out


def coboundary_of(cell, spec):
    """(k+1)-cells inside the box whose boundary contains the cell, with the
    coefficient the cell carries there.  Count varies near a Free boundary."""
    if cell.k == spec.n:
        raise DegreeError("top cells have no coboundary")
    out = []
    for i in range(spec.n):
        if i in cell.dirs:
            continue
        sup = tuple(sorted(cell.dirs + (i,)))
        m = sup.index(i) + 1
        for eps in (0, 1):
            base = list(cell.base)
            base[i] -= eps
            up = CellKey(tuple(base), sup, 1)
            if in_box(spec, up):
                out.append(Incidence(up, cell.sign * (-1) ** (eps + m)))
    return out


def is_boundary_cell(cell, spec):
    """True iff all 2^k corners of the cell lie on the boundary of the box."""
    for corner in itertools.product((0, 1), repeat=cell.k):
        pt = list(cell.base)
        for c, a in zip(corner, cell.dirs):
            pt[a] += c
        if not any(pt[a] == spec.lo[a] or pt[a] == spec.hi[a] for a in range(spec.n)):
            return False
    return True


@lru_cache(maxsize=None)
def boundary_mask(spec, k):
    """Boolean array over positive k-cells: True where the cell is contained
    in the box boundary.  Vectorized corner check."""
    offsets, shapes, total = _layout(spec, k)
    mask = np.zeros(total, dtype=bool)
    for dirs in direction_sets(spec.n, k):
        sh = shapes[dirs]
        grids = np.meshgrid(*[np.arange(spec.lo[a], spec.lo[a] + sh[a]) for a in range(spec.n)],
                            indexing="ij")
        all_corners = np.ones(sh, dtype=bool)
        for corner in itertools.product((0, 1), repeat=k):
            on_bdry = np.zeros(sh, dtype=bool)
            for a in range(spec.n):
                coord = grids[a]
                if a in dirs:
                    coord = coord + corner[dirs.index(a)]
                on_bdry |= (coord == spec.lo[a]) | (coord == spec.hi[a])
            all_corners &= on_bdry
        lo_off = offsets[dirs]
        mask[lo_off:lo_off + all_corners.size] = all_corners.ravel()
    mask.setflags(write=False)
    return mask


def interior_indices(spec, k):
    """Indices of non-boundary k-cells."""
    return np.flatnonzero(~boundary_mask(spec, k))
