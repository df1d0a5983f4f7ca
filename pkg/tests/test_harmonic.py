import numpy as np
import pytest

from villain import forms, harmonic, lattice
from villain.forms import Form, d_matrix
from villain.harmonic import LOWER, UPPER
from villain.lattice import FREE, ZERO, CellKey, DegreeError, LatticeSpec


def _rand_form(spec, k, rng):
    return Form(spec, k, rng.normal(size=lattice.cell_count(spec, k)))


def test_solve_poisson_residual():
    rng = np.random.default_rng(0)
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(3, 2, mode)
        f = _rand_form(spec, 1, rng)
        if mode == ZERO:
            f = Form(spec, 1, f.values)  # masked by constructor
        sol = harmonic.solve_poisson(1, f, mode)
        res = forms.laplacian_apply(sol, mode).values - np.asarray(f.values)
        if mode == ZERO:
            res = res[~lattice.boundary_mask(spec, 1)]
        assert np.abs(res).max() < 1e-9


def test_singular_degrees_raise():
    with pytest.raises(DegreeError):
        harmonic.solve_poisson_values(LatticeSpec.cube(2, 1), 0,
                                      np.zeros(9), FREE)
    with pytest.raises(DegreeError):
        harmonic.solve_poisson_values(LatticeSpec.cube(2, 1, ZERO), 2,
                                      np.zeros(4), ZERO)


@pytest.mark.parametrize("mode", [FREE, ZERO])
def test_projections_orthogonal_idempotent_complete(mode):
    rng = np.random.default_rng(4)
    spec = LatticeSpec.cube(3, 1, mode)
    for k in (1, 2):
        f = _rand_form(spec, k, rng)
        lo = harmonic.project(k, LOWER, f, mode)
        up = harmonic.project(k, UPPER, f, mode)
        # orthogonal
        assert abs(forms.inner(lo, up)) < 1e-8
        # complete on middle degrees
        assert np.abs(lo.values + up.values - f.values).max() < 1e-8
        # idempotent
        lo2 = harmonic.project(k, LOWER, lo, mode)
        assert np.abs(lo2.values - lo.values).max() < 1e-8


def test_project_values_matches_project():
    rng = np.random.default_rng(5)
    spec = LatticeSpec.cube(2, 2, ZERO)
    f = _rand_form(spec, 1, rng)
    a = harmonic.project(1, UPPER, f, ZERO).values
    b = harmonic.project_values(spec, 1, UPPER, f.values, ZERO)
    assert np.abs(a - b).max() < 1e-10


def test_rank_table_closed_forms_n4():
    # dimension table of the two projections on [-j,j]^4
    for j in (1,):
        free = harmonic.rank_table(LatticeSpec.cube(4, j, FREE))
        zero = harmonic.rank_table(LatticeSpec.cube(4, j, ZERO))
        assert free[1]["lower"] == (2 * j + 1) ** 4 - 1
        assert free[1]["upper"] == (2 * j + 1) ** 3 * (6 * j - 1) + 1
        assert free[2]["upper"] == (2 * j) ** 3 * (6 * j + 4)
        assert free[3]["upper"] == (2 * j) ** 4
        assert zero[1]["lower"] == (2 * j - 1) ** 4
        assert zero[1]["upper"] == (2 * j - 1) ** 3 * (6 * j + 1)
        assert zero[2]["upper"] == (2 * j) ** 3 * (6 * j - 4) + 1
        assert zero[3]["upper"] == (2 * j) ** 4 - 1


def test_green_one_form_against_dense_solve():
    rng = np.random.default_rng(6)
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(3, 1, mode)
        A, _ = harmonic._poisson_system(spec, 1, mode)
        lu = harmonic._poisson_factor(spec, 1, mode)
        n1 = lattice.cell_count(spec, 1)
        for _ in range(6):
            i, j = rng.integers(0, n1, 2)
            e = lattice.cell_at(spec, 1, int(i))
            e1 = lattice.cell_at(spec, 1, int(j))
            if mode == ZERO and (lattice.is_boundary_cell(e, spec)
                                 or lattice.is_boundary_cell(e1, spec)):
                continue
            rhs = np.zeros(n1)
            rhs[i] = 1.0
            ref = lu.solve(rhs)[j]
            assert abs(harmonic.green_one_form(e, e1, spec, mode) - ref) < 1e-10


def test_green_cross_direction_zero():
    spec = LatticeSpec.cube(4, 1, FREE)
    e = CellKey((0, 0, 0, 0), (0,))
    e1 = CellKey((0, 0, 0, 0), (2,))
    assert harmonic.green_one_form(e, e1, spec, FREE) == 0.0


def test_dg_laplacian_matches_masked_one_form_block():
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(2, 2, mode)
        i = 0
        axes = harmonic.dg_axes(spec, i, mode)
        Ldg = harmonic.dg_laplacian(spec, i, mode).toarray()
        # assemble the same block from the full 1-form Laplacian
        L = forms.lap_matrix(spec, 1, mode).toarray()
        dofs = []
        for idx in range(lattice.cell_count(spec, 1)):
            e = lattice.cell_at(spec, 1, idx)
            if e.dirs != (i,):
                continue
            coord = harmonic.edge_dof(spec, mode, e)
            if coord is not None:
                dofs.append((coord, idx))
        dofs.sort()
        sel = [idx for _, idx in dofs]
        assert np.abs(L[np.ix_(sel, sel)] - Ldg).max() < 1e-12


def test_dg_separable_energy_matches_dense():
    rng = np.random.default_rng(7)
    spec = LatticeSpec.cube(2, 3, FREE)
    axes = harmonic.dg_axes(spec, 0, FREE)
    factors = [rng.normal(size=ax.size) for ax in axes]
    r = np.einsum("i,j->ij", *factors).ravel()
    A = (-harmonic.dg_laplacian(spec, 0, FREE)).toarray()
    ref = float(r @ np.linalg.solve(A, r))
    val = harmonic.dg_separable_energy(spec, 0, FREE, factors)
    assert abs(val - ref) < 1e-10 * max(abs(ref), 1.0)


def test_dg_solve_on_plane_matches_dense():
    rng = np.random.default_rng(8)
    spec = LatticeSpec.cube(3, 2, FREE)
    axes = harmonic.dg_axes(spec, 0, FREE)
    factors = [rng.normal(size=ax.size) for ax in axes]
    r = np.einsum("i,j,k->ijk", *factors)
    A = (-harmonic.dg_laplacian(spec, 0, FREE)).toarray()
    sol = np.linalg.solve(A, r.ravel()).reshape(r.shape)
    tcoord = 1
    plane = harmonic.dg_solve_on_plane(spec, 0, FREE, factors, (0, 1),
                                       {2: tcoord})
    assert np.abs(plane - sol[:, :, tcoord]).max() < 1e-10


def test_green_infinite_vertex_properties():
    # -Lap G = delta at the origin: 2n (G(0) - mean of neighbours) = 1
    for n in (3, 4):
        g0 = harmonic.green_infinite_vertex((0,) * n, n)
        g1 = harmonic.green_infinite_vertex((1,) + (0,) * (n - 1), n)
        assert abs(2 * n * (g0 - g1) - 1.0) < 1e-9
    # symmetry under coordinate permutation and reflection
    a = harmonic.green_infinite_vertex((2, 1, 0, 0), 4)
    b = harmonic.green_infinite_vertex((0, -1, 0, 2), 4)
    assert abs(a - b) < 1e-12
    with pytest.raises(ValueError):
        harmonic.green_infinite_vertex((0, 0), 2)


def test_c_gff_bracketed_by_partial_sums():
    c = harmonic.c_gff()
    for K in (40, 60):
        partial, tail = harmonic.c_gff_partial(K)
        assert partial < c < partial + tail


@pytest.mark.parametrize("mode", [FREE, ZERO])
def test_rank_of_d_matches_rank_table(mode):
    for spec in (LatticeSpec.cube(4, 1, mode), LatticeSpec.cube(3, 2, mode),
                 LatticeSpec.box((0, 0), (3, 2), mode)):
        table = harmonic.rank_table(spec)
        for k in range(spec.n):
            assert harmonic.rank_of_d(spec, k) == table[k]["upper"]
    with pytest.raises(lattice.DegreeError):
        harmonic.rank_of_d(LatticeSpec.cube(2, 1, mode), 2)
