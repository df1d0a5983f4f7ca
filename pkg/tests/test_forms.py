import numpy as np
import pytest

from villain import forms, lattice
from villain.forms import Form, InconsistencyError, d, d_matrix, d_star
from villain.lattice import FREE, ZERO, CellKey, DegreeError, LatticeSpec


def _rand_form(spec, k, rng, integer=False):
    n = lattice.cell_count(spec, k)
    vals = rng.integers(-3, 4, n) if integer else rng.normal(size=n)
    return Form(spec, k, vals.astype(np.int64 if integer else np.float64))


def test_d_matrix_matches_boundary_of():
    spec = LatticeSpec.cube(3, 1)
    for k in (0, 1, 2):
        D = d_matrix(spec, k).toarray()
        for ridx in range(0, D.shape[0], 9):
            cell = lattice.cell_at(spec, k + 1, ridx)
            row = {}
            for inc in lattice.boundary_of(cell):
                cidx = lattice.cell_index(spec, inc.cell)
                row[cidx] = row.get(cidx, 0) + inc.coeff
            for cidx in range(D.shape[1]):
                assert D[ridx, cidx] == row.get(cidx, 0)


def test_dd_zero_integer():
    rng = np.random.default_rng(0)
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(4, 1, mode)
        for k in range(3):
            f = _rand_form(spec, k, rng, integer=True)
            assert not np.any(d(d(f)).values)


def test_adjointness():
    rng = np.random.default_rng(1)
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(3, 2, mode)
        for k in range(3):
            f = _rand_form(spec, k, rng)
            g = _rand_form(spec, k + 1, rng)
            lhs = forms.inner(d(f), g)
            rhs = -forms.inner(f, d_star(g, mode))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_d_star_star_vanishes():
    rng = np.random.default_rng(2)
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(4, 1, mode)
        g = _rand_form(spec, 3, rng)
        assert np.abs(d_star(d_star(g, mode), mode).values).max() < 1e-12


def test_laplacian_symmetric_negative():
    for mode in (FREE, ZERO):
        spec = LatticeSpec.cube(2, 2, mode)
        for k in (0, 1, 2):
            L = forms.lap_matrix(spec, k, mode).toarray()
            assert np.abs(L - L.T).max() < 1e-12
            evals = np.linalg.eigvalsh(L)
            assert evals.max() < 1e-10


def test_form_validation_and_zero_mode_masking():
    spec = LatticeSpec.cube(2, 1, ZERO)
    n = lattice.cell_count(spec, 1)
    with pytest.raises(ValueError):
        Form(spec, 1, np.zeros(n + 1))
    f = Form(spec, 1, np.ones(n))
    assert np.all(f.values[lattice.boundary_mask(spec, 1)] == 0)
    with pytest.raises(DegreeError):
        d_star(Form.zeros(spec, 0))


def test_form_call_orientation():
    spec = LatticeSpec.cube(2, 1)
    f = _rand_form(spec, 1, np.random.default_rng(3))
    c = lattice.cell_at(spec, 1, 4)
    assert f(c.flipped()) == -f(c)


def test_inner_rejects_mismatch():
    a = Form.zeros(LatticeSpec.cube(2, 1), 1)
    b = Form.zeros(LatticeSpec.cube(2, 2), 1)
    with pytest.raises(InconsistencyError):
        forms.inner(a, b)


@pytest.mark.parametrize("mode", [FREE, ZERO])
@pytest.mark.parametrize("kq", [1, 2, 3])
def test_integer_preimage_round_trip(mode, kq):
    rng = np.random.default_rng(kq)
    spec = LatticeSpec.cube(3, 2, mode)
    m = _rand_form(spec, kq - 1, rng, integer=True)
    q = d(m)
    g = forms.integer_preimage(q)
    assert g.values.dtype.kind == "i"
    assert np.array_equal(d(g).values, q.values)
    if mode == ZERO:
        assert not np.any(g.values[lattice.boundary_mask(spec, kq - 1)])


def test_integer_preimage_rejects_open_forms():
    spec = LatticeSpec.cube(2, 2)
    vals = np.zeros(lattice.cell_count(spec, 1), dtype=np.int64)
    vals[0] = 1
    with pytest.raises(InconsistencyError):
        forms.integer_preimage(Form(spec, 1, vals))
    bad = Form(spec, 2, np.full(lattice.cell_count(spec, 2), 0.5))
    with pytest.raises(InconsistencyError):
        forms.integer_preimage(bad)


def test_integer_preimage_zero_maps_to_zero():
    spec = LatticeSpec.cube(3, 1, ZERO)
    g = forms.integer_preimage(Form.zeros(spec, 2, dtype=np.int64))
    assert not np.any(g.values)


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    for integer in (False, True):
        spec = LatticeSpec.cube(3, 1, ZERO if integer else FREE)
        f = _rand_form(spec, 2, rng, integer=integer)
        path = tmp_path / f"form_{integer}.vlf"
        forms.save_form(path, f)
        g = forms.load_form(path)
        assert g.spec == spec and g.k == 2
        assert np.array_equal(g.values, f.values)
        assert g.values.dtype == f.values.dtype


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "junk.vlf"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(InconsistencyError):
        forms.load_form(path)
