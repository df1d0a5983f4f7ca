"""k-forms over a LatticeSpec: inner product, d, d*, Laplacians, integer preimages.

Forms hold one value per positive cell in canonical order.  The exterior
derivative is materialized once per (spec, degree) as a sparse integer matrix
and cached; d* is minus its transpose, with the Zero-mode (ring) variants
masking boundary cells.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import lattice
from .lattice import FREE, ZERO, DegreeError, LatticeSpec

_SNAPSHOT_MAGIC = b"VLF1"


class InconsistencyError(ValueError):
    """Raised when an input violates an exact precondition (e.g. dq != 0)."""


@dataclass
class Form:
    spec: LatticeSpec
    k: int
    values: np.ndarray

    def __post_init__(self):
        n = lattice.cell_count(self.spec, self.k)
        self.values = np.asarray(self.values)
        if self.values.shape != (n,):
            raise ValueError(f"expected {n} values for degree {self.k}, got {self.values.shape}")
        if self.spec.boundary == ZERO:
            bd = lattice.boundary_mask(self.spec, self.k)
            if self.values.dtype.kind in "iu":
                self.values[bd] = 0
            else:
                self.values = np.where(bd, 0.0, self.values)

    @classmethod
    def zeros(cls, spec, k, dtype=np.float64):
        return cls(spec, k, np.zeros(lattice.cell_count(spec, k), dtype=dtype))

    def copy(self):
        return Form(self.spec, self.k, self.values.copy())

    def __call__(self, cell):
        """Evaluate at an oriented cell (negative cells negate the value)."""
        return cell.sign * self.values[lattice.cell_index(self.spec, cell)]


def _check_pair(f1, f2):
    if f1.spec != f2.spec or f1.k != f2.k:
        raise InconsistencyError("forms live on different specs or degrees")


def inner(f1, f2):
    """<f1, f2> = sum over positive cells of f1(w) f2(w)."""
    _check_pair(f1, f2)
    return float(np.dot(np.asarray(f1.values, dtype=np.float64),
                        np.asarray(f2.values, dtype=np.float64)))


@lru_cache(maxsize=None)
def d_matrix(spec, k):
    """Sparse integer matrix of d: degree k -> k+1, shape (#C^{k+1}, #C^k).

    Row w has the 2(k+1) signed entries of the boundary of w; built per
    direction set with closed-form index arithmetic (no per-cell loops).
    """
    if k < 0 or k >= spec.n:
        raise DegreeError(f"d undefined from degree {k} in n={spec.n}")
    n = spec.n
    rows_n = lattice.cell_count(spec, k + 1)
    cols_n = lattice.cell_count(spec, k)
    off_hi, sh_hi, _ = lattice._layout(spec, k + 1)
    off_lo, sh_lo, _ = lattice._layout(spec, k)

    rows, cols, vals = [], [], []
    for dirs in lattice.direction_sets(n, k + 1):
        sh = sh_hi[dirs]
        size = int(np.prod(sh))
        if size == 0:
            continue
        # base-coordinate grids (relative to lo) for all cells spanning dirs
        rel = np.meshgrid(*[np.arange(s) for s in sh], indexing="ij")
        row_idx = off_hi[dirs] + np.arange(size)
        for m, i in enumerate(dirs, start=1):
            sub = tuple(d for d in dirs if d != i)
            ssh = sh_lo[sub]
            # strides of the sub-grid in C order
            strides = np.ones(n, dtype=np.int64)
            for a in range(n - 2, -1, -1):
                strides[a] = strides[a + 1] * ssh[a + 1]
            flat0 = np.zeros(sh, dtype=np.int64)
            for a in range(n):
                flat0 += strides[a] * rel[a]
            for eps in (0, 1):
                col_idx = off_lo[sub] + (flat0 + eps * strides[i]).ravel()
                coeff = (-1) ** (eps + m)
                rows.append(row_idx)
                cols.append(col_idx)
                vals.append(np.full(size, coeff, dtype=np.int64))
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(rows_n, cols_n), dtype=np.int64).tocsr()
    return mat


def _mask_vec(spec, k):
    """Float 0/1 vector killing boundary k-cells."""
    return (~lattice.boundary_mask(spec, k)).astype(np.float64)


def _mode_for(f, mode):
    if mode is None:
        return f.spec.boundary
    if mode not in (FREE, ZERO):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == ZERO and f.spec.boundary != ZERO:
        raise InconsistencyError("Zero mode requires a Zero-boundary spec")
    return mode


def d(f):
    """Exterior derivative; the zero form for k = n."""
    if f.k == f.spec.n:
        top = Form(f.spec, f.k, np.zeros_like(np.asarray(f.values)))
        return top
    out = d_matrix(f.spec, f.k) @ f.values
    return Form(f.spec, f.k + 1, out)


def d_star(f, mode=None):
    """Codifferential -d^t; Zero mode additionally zeroes boundary output cells."""
    if f.k == 0:
        raise DegreeError("d* undefined on 0-forms")
    mode = _mode_for(f, mode)
    out = -(d_matrix(f.spec, f.k - 1).T @ np.asarray(f.values, dtype=np.float64))
    if mode == ZERO:
        out = out * _mask_vec(f.spec, f.k - 1)
    return Form(f.spec, f.k - 1, out)


@lru_cache(maxsize=None)
def lap_matrix(spec, k, mode):
    """Sparse matrix of the (negative semi-definite) Laplacian d d* + d* d."""
    if mode not in (FREE, ZERO):
        raise ValueError(f"unknown mode {mode!r}")
    n_k = lattice.cell_count(spec, k)
    parts = []
    if k >= 1:
        D = d_matrix(spec, k - 1).astype(np.float64)
        if mode == ZERO:
            M = sp.diags(_mask_vec(spec, k - 1))
            parts.append(D @ M @ D.T)
        else:
            parts.append(D @ D.T)
    if k < spec.n:
        D = d_matrix(spec, k).astype(np.float64)
        if mode == ZERO:
            Mk = sp.diags(_mask_vec(spec, k))
            parts.append(Mk @ D.T @ D @ Mk)
        else:
            parts.append(D.T @ D)
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return (-total).tocsr()


def laplacian_apply(f, mode=None):
    mode = _mode_for(f, mode)
    vals = np.asarray(f.values, dtype=np.float64)
    return Form(f.spec, f.k, lap_matrix(f.spec, f.k, mode) @ vals)


# ---------------------------------------------------------------------------
# integer preimage: deterministic n_q with d(n_q) = q, exact over Z
# ---------------------------------------------------------------------------

def _d_dict(vals, kq, lo, hi, n):
    """d of a sparse dict form {(dirs, base): value} on the box [lo, hi]."""
    out = {}
    for (dirs, base), v in vals.items():
        for i in range(n):
            if i in dirs:
                continue
            sup = tuple(sorted(dirs + (i,)))
            m = sup.index(i) + 1
            for eps in (0, 1):
                nb = list(base)
                nb[i] -= eps
                if nb[i] < lo[i] or nb[i] + 1 > hi[i]:
                    continue
                key = (sup, tuple(nb))
                out[key] = out.get(key, 0) + (-1) ** (eps + m) * v
    return {k: v for k, v in out.items() if v != 0}


def _homotopy(qd, kq, lo, hi, n, ring):
    """Particular integer solution of d g = q on the box by summing along the
    highest non-degenerate axis; Zero mode corrects the top slice recursively."""
    axes = [a for a in range(n) if hi[a] > lo[a]]
    if kq > len(axes) or not qd:
        return {}
    t = max(axes)
    sigma = (-1) ** (kq - 1)
    g = {}
    for (dirs, base), v in qd.items():
        if t not in dirs:
            continue
        sub = tuple(a for a in dirs if a != t)
        for y in range(base[t] + 1, hi[t] + 1):
            nb = list(base)
            nb[t] = y
            key = (sub, tuple(nb))
            g[key] = g.get(key, 0) + sigma * v
    g = {k: v for k, v in g.items() if v != 0}

    if ring:
        # by construction the residual vanishes; only the top slab of g can
        # violate the boundary-vanishing requirement
        tvals = {(dirs, base): v for (dirs, base), v in g.items() if base[t] == hi[t]}
        if tvals and kq - 1 >= 1:
            hi_slab = list(hi)
            lo_slab = list(lo)
            lo_slab[t] = hi[t]
            s = _homotopy(tvals, kq - 1, tuple(lo_slab), tuple(hi_slab), n, ring=True)
            for key, v in _d_dict(s, kq - 2, lo, hi, n).items():
                g[key] = g.get(key, 0) - v
            g = {k: v for k, v in g.items() if v != 0}
        return g

    # Free mode: residual r = q - d g is constant along axis t and supported on
    # cells not containing t; recurse on the bottom slab.
    r = dict(qd)
    for key, v in _d_dict(g, kq - 1, lo, hi, n).items():
        r[key] = r.get(key, 0) - v
    r0 = {(dirs, base): v for (dirs, base), v in r.items()
          if v != 0 and base[t] == lo[t]}
    if r0:
        hi_slab = list(hi)
        hi_slab[t] = lo[t]
        g0 = _homotopy(r0, kq, lo, tuple(hi_slab), n, ring=False)
        for (dirs, base), v in g0.items():
            for y in range(lo[t], hi[t] + 1):
                nb = list(base)
                nb[t] = y
                key = (dirs, tuple(nb))
                g[key] = g.get(key, 0) + v
        g = {k: v for k, v in g.items() if v != 0}
    return g


def integer_preimage(q):
    """Deterministic integer form n_q with d(n_q) = q, for closed integer q.

    Zero-boundary specs get a boundary-vanishing preimage.  Raises
    InconsistencyError when dq != 0 (or q is not boundary-vanishing under a
    Zero spec); q = 0 maps to 0.
    """
    spec, kq = q.spec, q.k
    if kq < 1:
        raise DegreeError("preimage needs degree >= 1")
    vals = np.asarray(q.values)
    if vals.dtype.kind not in "iu":
        if not np.all(vals == np.round(vals)):
            raise InconsistencyError("q must be integer valued")
        vals = vals.astype(np.int64)
    if kq < spec.n and np.any(d_matrix(spec, kq) @ vals != 0):
        raise InconsistencyError("dq != 0")
    ring = spec.boundary == ZERO
    if ring and np.any(vals[lattice.boundary_mask(spec, kq)] != 0):
        raise InconsistencyError("Zero spec requires q to vanish on boundary cells")

    qd = {}
    for idx in np.flatnonzero(vals):
        c = lattice.cell_at(spec, kq, int(idx))
        qd[(c.dirs, c.base)] = int(vals[idx])
    gd = _homotopy(qd, kq, spec.lo, spec.hi, spec.n, ring)

    out = np.zeros(lattice.cell_count(spec, kq - 1), dtype=np.int64)
    for (dirs, base), v in gd.items():
        out[lattice.cell_index(spec, lattice.CellKey(base, dirs, 1))] = v
    g = Form(spec, kq - 1, out)
    check = d_matrix(spec, kq - 1) @ out if kq - 1 < spec.n else None
    if check is None or np.any(check != vals):
        raise AssertionError("integer_preimage internal check failed")
    if ring and np.any(out[lattice.boundary_mask(spec, kq - 1)] != 0):
        raise AssertionError("integer_preimage boundary check failed")
    return g


# ---------------------------------------------------------------------------
# snapshot file format (used by the CLI for checkpoints)
# ---------------------------------------------------------------------------

_PAYLOADS = {0: np.float64, 1: np.int64}


def save_form(path, form):
    """Write a Form over a cube spec: magic, n, j, k, mode, payload, count,
    then the flat value array, all little-endian."""
    spec = form.spec
    j = spec.j  # raises for non-cube boxes
    payload = 1 if form.values.dtype.kind in "iu" else 0
    dtype = np.dtype(_PAYLOADS[payload]).newbyteorder("<")
    vals = np.ascontiguousarray(form.values, dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_MAGIC)
        fh.write(struct.pack("<BiBBBQ", spec.n, j, form.k,
                             0 if spec.boundary == FREE else 1, payload, vals.size))
        fh.write(vals.tobytes())


def load_form(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _SNAPSHOT_MAGIC:
            raise InconsistencyError(f"{path}: not a form snapshot")
        n, j, k, mode, payload, count = struct.unpack("<BiBBBQ", fh.read(16))
        spec = LatticeSpec.cube(n, j, FREE if mode == 0 else ZERO)
        expect = lattice.cell_count(spec, k)
        if count != expect:
            raise InconsistencyError(f"{path}: bad value count {count} != {expect}")
        dtype = np.dtype(_PAYLOADS[payload]).newbyteorder("<")
        vals = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype).copy()
    return Form(spec, k, vals.astype(_PAYLOADS[payload]))
