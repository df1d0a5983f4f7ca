"""Spin-wave/Coulomb decomposition of sampler states.

Every state (theta, m) splits exactly as dtheta + 2 pi m = rho + sigma where
rho = dtheta + 2 pi P_lower(m) is a gradient spin wave and sigma is determined
by the integer charge q = dm.  The two parts are independent and the energy
splits Pythagoras style: the squared norm of dtheta + 2 pi m equals
|rho|^2 + (2 pi)^2 <q, (-Lap)^-1 q>.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forms, harmonic, lattice, sampler
from .forms import Form, d_matrix
from .harmonic import LOWER, UPPER
from .lattice import FREE, ZERO, LatticeSpec
from .sampler import TWO_PI

TWO_PI_SQ = (2.0 * np.pi) ** 2


@dataclass
class DecoupledPair:
    """rho: real (p+1)-form values, shape (replicas, N); q: integer (p+2)-form
    values (or None when p+2 > n)."""
    spec: LatticeSpec
    p: int
    rho: np.ndarray
    q: np.ndarray | None

    def rho_form(self, r=0):
        return Form(self.spec, self.p + 1, self.rho[r].copy())

    def q_form(self, r=0):
        if self.q is None:
            raise forms.InconsistencyError("no charge form in top degree")
        return Form(self.spec, self.p + 2, self.q[r].copy())


def _mode(spec):
    return spec.boundary


def decompose(state, settings=None):
    """Exact decomposition of a VillainState into (rho, q).

    q = dm is computed in integer arithmetic; rho uses the mode-matched Lower
    projection of m (ring variant in Zero mode).
    """
    spec, p = state.spec, state.p
    mode = _mode(spec)
    D = d_matrix(spec, p)
    w_grad = (D @ state.theta.T).T
    proj = harmonic.project_values(spec, p + 1, LOWER,
                                   state.m.astype(np.float64).T, mode,
                                   settings).T
    rho = w_grad + TWO_PI * proj
    if p + 2 <= spec.n:
        Dq = d_matrix(spec, p + 1)
        q = (Dq @ state.m.T).T
        if mode == ZERO:
            q[:, lattice.boundary_mask(spec, p + 2)] = 0
    else:
        q = None
    return DecoupledPair(spec, p, rho, q)


def coulomb_energy(spec, k, qvals, mode, settings=None):
    """(2 pi)^2-free Coulomb energy <q, (-Lap)^-1 q> per replica row."""
    arr = np.atleast_2d(np.asarray(qvals, dtype=np.float64))
    sol = harmonic.solve_poisson_values(spec, k, arr.T, mode, settings).T
    out = -np.einsum("ij,ij->i", sol, arr)
    return out if np.ndim(qvals) > 1 else float(out[0])


def pythagoras_check(state, pair=None, settings=None):
    """Per-replica triple (|w|^2, |rho|^2, (2 pi)^2 E_coul) whose split
    w = dtheta + 2 pi m should satisfy the first = sum of the other two."""
    spec, p = state.spec, state.p
    if pair is None:
        pair = decompose(state, settings)
    D = d_matrix(spec, p)
    w = (D @ state.theta.T).T + TWO_PI * state.m
    if spec.boundary == ZERO:
        w[:, lattice.boundary_mask(spec, p + 1)] = 0.0
    lhs = np.einsum("ij,ij->i", w, w)
    mid = np.einsum("ij,ij->i", pair.rho, pair.rho)
    if pair.q is not None:
        coul = TWO_PI_SQ * coulomb_energy(spec, p + 2, pair.q, spec.boundary,
                                          settings)
    else:
        coul = np.zeros(state.replicas)
    return lhs, mid, coul


def gsw_sample(spec, beta, mode, rng, p=1, size=None, settings=None):
    """Gradient spin-wave draws: project white noise of variance 1/beta per
    (p+1)-cell onto the image of d.  Returns (N,) or (size, N)."""
    n_cells = lattice.cell_count(spec, p + 1)
    shape = (n_cells,) if size is None else (size, n_cells)
    w = rng.normal(scale=1.0 / np.sqrt(beta), size=shape)
    if mode == ZERO:
        w[..., lattice.boundary_mask(spec, p + 1)] = 0.0
    out = harmonic.project_values(spec, p + 1, LOWER, w.T, mode, settings).T
    return out


def coulomb_sample(n, spec, beta, mode=None, config=None, degree=None):
    """Generator of equilibrium integer charge samples q = dm.

    Runs the (theta, m) chain with theta in the given degree (default n - 2)
    and yields (replicas, #(degree+2)-cells) integer arrays.  With degree = 1
    on an n = 4 box this is the charge chain of the gauge theory, with charges
    on 3-cells.
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    if spec.n != n:
        raise forms.InconsistencyError(f"spec dimension {spec.n} != {n}")
    if mode is not None and mode != spec.boundary:
        raise forms.InconsistencyError("mode does not match the lattice spec")
    p = (n - 2) if degree is None else degree
    if not 0 <= p <= n - 2:
        raise lattice.DegreeError(f"degree {p} leaves no room for charges")
    if config is None:
        config = sampler.ChainConfig(beta=beta)
    Dq = d_matrix(spec, p + 1)
    bd = lattice.boundary_mask(spec, p + 2) if spec.boundary == ZERO else None
    for st in sampler.run_chain(spec, p, config):
        q = (Dq @ st.m.T).T
        if bd is not None:
            q[:, bd] = 0
        yield q


def _moment_normality(x):
    """Z-scores for sample skewness and excess kurtosis (their null standard
    errors are sqrt(6/n) and sqrt(24/n))."""
    x = np.asarray(x, dtype=np.float64)
    nn = x.size
    c = x - x.mean()
    s2 = c.var()
    skew = (c ** 3).mean() / s2 ** 1.5
    kurt = (c ** 4).mean() / s2 ** 2 - 3.0
    return skew / np.sqrt(6.0 / nn), kurt / np.sqrt(24.0 / nn)


def _corr_with_se(x, y, n_batches=20):
    """Correlation estimate and a batch-means s.e. on the standardized
    cross-product stream."""
    from .stats import batch_means
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sx = x.std()
    sy = y.std()
    if sx == 0 or sy == 0:
        return 0.0, 0.0
    z = (x - x.mean()) * (y - y.mean()) / (sx * sy)
    return batch_means(z, n_batches)


def independence_report(rho_samples, q_samples, probes=4, seed=0):
    """Cross-correlation panel between functionals of rho and of q.

    rho_samples: (n, N_rho) array of spin-wave samples; q_samples: (n, N_q)
    integer charge samples, paired by row.  Panels: fixed random linear
    functionals of rho and its squared norm, against individual charge values
    and the total squared charge.  Returns a dict with per-pair correlation
    estimates, standard errors, and normality z-scores for the rho panel.
    """
    rho = np.asarray(rho_samples, dtype=np.float64)
    q = np.asarray(q_samples, dtype=np.float64)
    if rho.shape[0] != q.shape[0]:
        raise ValueError("sample streams must be paired")
    n = rho.shape[0]
    prng = np.random.Generator(np.random.Philox(key=[seed, 0x1de9]))
    vecs = prng.normal(size=(probes, rho.shape[1]))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    rho_panel = {f"rho_lin_{i}": rho @ v for i, v in enumerate(vecs)}
    rho_panel["rho_norm2"] = np.einsum("ij,ij->i", rho, rho)
    live = np.flatnonzero(q.std(axis=0) > 0)
    picks = live[:: max(1, live.size // probes)][:probes]
    q_panel = {f"q_cell_{c}": q[:, c] for c in picks}
    q_panel["q_norm2"] = np.einsum("ij,ij->i", q, q)
    pairs = {}
    underpowered = n < 100
    for rn, rv in rho_panel.items():
        for qn, qv in q_panel.items():
            corr, se = _corr_with_se(rv, qv)
            pairs[f"{rn}|{qn}"] = {"corr": corr, "se": se}
    normality = {rn: _moment_normality(rv) for rn, rv in rho_panel.items()
                 if rn != "rho_norm2"}
    return {"n_samples": n, "pairs": pairs, "normality": normality,
            "underpowered": underpowered}
