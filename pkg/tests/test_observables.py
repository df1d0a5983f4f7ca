import csv
import json

import numpy as np
import pytest

from villain import forms, harmonic, lattice, observables as obs, sampler
from villain.forms import Form
from villain.lattice import FREE, ZERO, LatticeSpec
from villain.sampler import ChainConfig
from villain.stats import FAIL, PASS


def test_rect_loop_validation():
    with pytest.raises(ValueError):
        obs.RectLoop((1, 0), (0, 0, 0, 0), 2, 2)
    with pytest.raises(ValueError):
        obs.RectLoop((0, 1), (0, 0, 0, 0), 0, 2)
    loop = obs.RectLoop((0, 2), (-1, 0, -1, 0), 2, 2)
    assert loop.n_edges == 8
    spec = LatticeSpec.cube(4, 3, FREE)
    assert loop.margin(spec) == 2
    loop.check_inside(spec, margin=2)
    with pytest.raises(forms.InconsistencyError):
        loop.check_inside(spec, margin=3)
    with pytest.raises(forms.InconsistencyError):
        obs.RectLoop((0, 1), (0, 0), 1, 1).check_inside(spec)


def test_loop_one_form_is_divergence_free():
    spec = LatticeSpec.cube(3, 2, FREE)
    loop = obs.RectLoop((0, 1), (-1, -1, 0), 2, 2)
    u = obs.loop_one_form(spec, loop)
    assert np.abs(u).sum() == loop.n_edges
    # closed loop: the 1-form has zero divergence at every vertex
    div = forms.d_matrix(spec, 0).T @ u
    assert not np.any(div)


def test_wilson_phase_of_explicit_theta():
    spec = LatticeSpec.cube(2, 2, FREE)
    loop = obs.RectLoop((0, 1), (0, 0), 1, 1)
    u = obs.loop_one_form(spec, loop)
    theta = Form(spec, 1, 0.1 * u)
    val = obs.wilson(theta, loop)
    assert abs(val - np.exp(1j * 0.1 * loop.n_edges)) < 1e-12
    arr = np.stack([0.1 * u, -0.1 * u])
    vals = obs.wilson(arr, loop, spec=spec)
    assert vals.shape == (2,)
    assert abs(vals[1] - np.conj(vals[0])) < 1e-12


@pytest.mark.parametrize("mode", [FREE, ZERO])
def test_loop_energy_full_vs_dg(mode):
    spec = LatticeSpec.cube(3, 3, mode)
    loop = obs.RectLoop((0, 1), (-1, -1, 1), 2, 2)
    full = obs.loop_energy(loop, spec, mode, method="full")
    dg = obs.loop_energy(loop, spec, mode, method="dg")
    assert abs(full - dg) < 1e-9 * max(full, 1.0)
    assert full > 0


def test_loop_energy_zero_mode_needs_margin():
    spec = LatticeSpec.cube(3, 2, ZERO)
    touching = obs.RectLoop((0, 1), (-2, -2, 0), 1, 1)
    with pytest.raises(forms.InconsistencyError):
        obs.loop_energy(touching, spec, ZERO)


def test_spread_profile_matches_direct_projection():
    spec = LatticeSpec.cube(3, 3, FREE)
    loop = obs.RectLoop((0, 1), (-1, -1, 0), 2, 2)
    out = obs.spread_profile(loop, spec, FREE, b=0.4)
    ind = obs.loop_face_indicator(spec, loop)
    proj = harmonic.project_values(spec, 2, harmonic.LOWER, ind, FREE)
    energy = float(proj @ ind)
    assert abs(out["energy"] - energy) < 1e-9
    heavy = float((proj[np.abs(proj) >= 0.4] ** 2).sum())
    assert abs(out["heavy_mass"] - heavy) < 1e-9
    assert 0.0 < out["ratio"] <= 1.0
    # profile values decay away from the loop
    ks = sorted(out["profile"])
    mags = [abs(out["profile"][k]) for k in ks]
    assert mags == sorted(mags, reverse=True)


def test_fourier_m_exact_cases():
    rng = np.random.default_rng(0)
    m = rng.integers(-2, 3, size=(500, 8)).astype(float)
    h0 = np.zeros(8)
    rep = obs.fourier_m(m, h0, beta=1.0)
    assert abs(rep.estimate - 1.0) < 1e-12
    h_int = 2 * np.pi * rng.integers(-1, 2, 8)
    rep = obs.fourier_m(m, h_int, beta=1.0)
    assert abs(rep.estimate - 1.0) < 1e-9
    assert rep.targets[0]["one_sided"]


def test_tilde_M_estimate_floor():
    rng = np.random.default_rng(1)
    s = rng.uniform(-np.pi, np.pi, 400)
    rep = obs.tilde_M_estimate(s, beta=1.0)
    assert rep.verdict == PASS
    assert rep.estimate >= rep.extras["pointwise_floor"] - 3 * rep.se


def test_coulomb_variance_check_gaussian_synthetic():
    # synthetic q built to have exactly the tilde_M variance per face times
    # (d* h)^2 in the quadratic form direction
    spec = LatticeSpec.cube(4, 1, FREE)
    n3 = lattice.cell_count(spec, 3)
    n2 = lattice.cell_count(spec, 2)
    rng = np.random.default_rng(2)
    h = rng.normal(size=n3)
    tilde = np.full(n2, 0.04)
    dsh = -np.asarray(forms.d_matrix(spec, 2).T @ h)
    q2 = forms.d_matrix(spec, 2) @ (rng.normal(
        size=(20_000, n2)) * np.sqrt(tilde)).T
    rep = obs.coulomb_variance_check(q2.T, h, spec, 1.0, tilde)
    assert rep.verdict == PASS


def test_energy_identity_synthetic():
    spec = LatticeSpec.cube(4, 1, FREE)
    beta = 2.0
    dim = harmonic.rank_table(spec)[1]["upper"]
    rng = np.random.default_rng(3)
    w2 = rng.normal(dim / beta, 1.0, size=(4000, 8))
    coul = np.zeros_like(w2)
    rep = obs.energy_identity(w2, coul, spec, beta)
    assert rep.verdict == PASS
    bad = obs.energy_identity(w2 + 5.0, coul, spec, beta)
    assert bad.verdict == FAIL


def test_free_energy_floor_relations():
    spec = LatticeSpec.cube(4, 2, FREE)
    beta = 2.0
    rng = np.random.default_rng(4)
    dim = harmonic.rank_table(spec)[1]["upper"]
    w2 = rng.normal(1.02 * dim / beta, 1.0, size=(3000, 6))
    rep = obs.free_energy_derivative(w2, spec, beta)
    assert rep.extras["rank_floor"] <= 0
    labels = [t["label"] for t in rep.targets]
    assert any("rank" in l for l in labels)
    assert any("bulk" in l for l in labels)
    assert rep.verdict == PASS
    zspec = LatticeSpec.cube(4, 2, ZERO)
    zrep = obs.free_energy_derivative(w2, zspec, beta)
    assert all("bulk" not in t["label"] for t in zrep.targets)


def test_wilson_experiment_small_box():
    spec = LatticeSpec.cube(4, 2, FREE)
    loop = obs.RectLoop((0, 1), (0, 0, 0, 0), 1, 1)
    cfg = ChainConfig(beta=4.0, n_samples=400, burn_in=80, replicas=8, seed=6)
    rep = obs.wilson_experiment(spec, loop, cfg)
    assert rep.verdict == PASS
    assert rep.extras["spin_wave"] == pytest.approx(
        np.exp(-rep.extras["loop_energy"] / 8.0))


def test_wilson_experiment_margin_enforced():
    spec = LatticeSpec.cube(4, 2, FREE)
    loop = obs.RectLoop((0, 1), (-1, -1, 0, 0), 3, 3)
    with pytest.raises(forms.InconsistencyError):
        obs.wilson_experiment(spec, loop, ChainConfig(beta=4.0))


def test_report_emission(tmp_path):
    from villain.stats import MeasureReport
    rep = MeasureReport("demo", 1.0, 0.1, 100)
    rep.compare("target", 1.05)
    plain = MeasureReport("table_only", 2.0, 0.0, 1)
    csv_path = tmp_path / "out.csv"
    json_path = tmp_path / "out.json"
    obs.reports_to_csv([rep, plain], csv_path, meta={"experiment": "demo"})
    verdict = obs.reports_to_json([rep, plain], json_path,
                                  meta={"experiment": "demo"})
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == ["# experiment", "demo"]
    assert rows[1][0] == "name"
    assert any(r[0] == "demo" and r[-1] == PASS for r in rows[2:])
    tree = json.loads(json_path.read_text())
    assert tree["meta"]["experiment"] == "demo"
    assert tree["reports"][0]["verdict"] == PASS
    assert verdict == tree["verdict"]
