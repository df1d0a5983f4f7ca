"""Two-block Gibbs sampler for the joint Villain coupling (theta, m).

theta is a p-form with values in [-pi, pi), m an integer (p+1)-form; the joint
density is proportional to exp(-beta/2 <d theta + 2 pi m, d theta + 2 pi m>).
Both conditionals are exact: m | theta is a product of integer-valued
Gaussians per (p+1)-cell, and theta(c) | rest is a truncated Gaussian.  States
carry a replica axis so many independent chains advance in lockstep with
vectorized updates.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import forms, lattice
from .forms import Form
from .lattice import FREE, ZERO, LatticeSpec

TWO_PI = 2.0 * np.pi
TWO_PI_SQ_ = (2.0 * np.pi) ** 2


@dataclass
class ChainConfig:
    beta: float
    n_samples: int = 1000
    burn_in: int | None = None      # default: 50 sweeps per unit beta, >= 100
    thinning: int = 1
    seed: int = 0
    replicas: int = 1
    chain_id: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.thinning < 1 or (self.burn_in is not None and self.burn_in < 0):
            raise ValueError("burn_in >= 0 and thinning >= 1 required")

    @property
    def resolved_burn_in(self):
        if self.burn_in is not None:
            return self.burn_in
        return max(100, int(50 * self.beta))


@dataclass
class VillainState:
    spec: LatticeSpec
    p: int
    theta: np.ndarray   # (replicas, #p-cells), values in [-pi, pi)
    m: np.ndarray       # (replicas, #(p+1)-cells), int64
    sweep: int = 0

    @property
    def replicas(self):
        return self.theta.shape[0]

    def theta_form(self, r=0):
        return Form(self.spec, self.p, self.theta[r].copy())

    def m_form(self, r=0):
        return Form(self.spec, self.p + 1, self.m[r].copy())


@lru_cache(maxsize=None)
class _Kernel:
    """Precomputed incidence data for sweeps on (spec, p)."""

    def __init__(self, spec, p):
        if not 0 <= p < spec.n:
            raise lattice.DegreeError(f"p={p} out of range")
        self.spec = spec
        self.p = p
        self.D = forms.d_matrix(spec, p).astype(np.float64).tocsr()
        self.n_low = lattice.cell_count(spec, p)
        self.n_high = lattice.cell_count(spec, p + 1)
        zero = spec.boundary == ZERO
        self.low_bd = lattice.boundary_mask(spec, p)
        self.high_bd = lattice.boundary_mask(spec, p + 1)
        self.m_cells = np.flatnonzero(~self.high_bd) if zero else np.arange(self.n_high)
        # kappa: number of (p+1)-cells of the box containing each p-cell
        self.kappa = np.asarray(np.abs(self.D).sum(axis=0)).ravel()
        # update classes: cells with the same direction set whose transverse
        # base-coordinate sums share parity never meet in a (p+1)-cell, so
        # their conditionals are independent and update together
        classes = {}
        for idx in range(self.n_low):
            if zero and self.low_bd[idx]:
                continue
            c = lattice.cell_at(spec, p, idx)
            par = sum(c.base[a] for a in range(spec.n) if a not in c.dirs) % 2
            classes.setdefault((c.dirs, par), []).append(idx)
        self.classes = [np.array(v) for _, v in sorted(classes.items())]
        # integer column blocks of D per class, for the winding shifts
        Dint = forms.d_matrix(spec, p).tocsc()
        self.class_cols = [Dint[:, cls].tocsr() for cls in self.classes]
        self.class_fcols = [c.astype(np.float64) for c in self.class_cols]

    def __hash__(self):
        return hash((self.spec, self.p))


def initial_state(spec, p, replicas=1):
    """theta = 0, m = 0 (the density's mode)."""
    k = _Kernel(spec, p)
    return VillainState(spec, p,
                        np.zeros((replicas, k.n_low)),
                        np.zeros((replicas, k.n_high), dtype=np.int64))


def make_rng(seed, chain_id=0):
    """Counter-based (Philox) stream keyed by (seed, chain id)."""
    return np.random.Generator(np.random.Philox(key=[seed, chain_id]))


def resample_m(state, beta, rng):
    """Redraw every non-frozen m(f) from its exact conditional: an
    integer-valued Gaussian with center -d theta(f)/(2 pi) at inverse
    temperature (2 pi)^2 beta, independently per cell."""
    k = _Kernel(state.spec, state.p)
    centers = -((k.D @ state.theta.T).T) / TWO_PI
    centers = centers[:, k.m_cells]
    bhat = TWO_PI_SQ_ * beta
    W = int(np.ceil(np.sqrt(2.0 * np.log(1e15) / bhat))) + 1
    base = np.rint(centers)
    offs = np.arange(-W, W + 1)
    ks = base[..., None] + offs
    logw = -0.5 * bhat * (ks - centers[..., None]) ** 2
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    cdf = np.cumsum(w, axis=-1)
    u = rng.random(size=centers.shape) * cdf[..., -1]
    pick = (cdf < u[..., None]).sum(axis=-1)
    draws = (base + (pick - W)).astype(np.int64)
    state.m[:, k.m_cells] = draws
    return state


def resample_theta(state, beta, rng):
    """One sweep over all update classes.

    The raw conditional of theta(c) is a Gaussian with precision beta kappa(c)
    and mean theta(c) - (D^t w)(c)/kappa(c) truncated to [-pi, pi), where
    w = d theta + 2 pi m.  Truncated updates cannot cross between winding
    sectors at large beta (the barrier cost is exp(beta pi^2 / 2)), so the
    sweep instead Gibbs-samples the block {(theta(c) + 2 pi t, m + t dI(c))}:
    x = theta(c) + 2 pi t has the same Gaussian law with no truncation; the
    draw is wrapped back to [-pi, pi) and the winding t is pushed into the
    incident m values, which leaves the joint density invariant and tunnels
    freely."""
    k = _Kernel(state.spec, state.p)
    w = (k.D @ state.theta.T).T + TWO_PI * state.m
    for cls, dcols, fcols in zip(k.classes, k.class_cols, k.class_fcols):
        S = (fcols.T @ w.T).T
        kap = k.kappa[cls]
        old = state.theta[:, cls]
        mu = old - S / kap
        sd = 1.0 / np.sqrt(beta * kap)
        x = mu + sd * rng.standard_normal(size=mu.shape)
        t = np.floor((x + np.pi) / TWO_PI).astype(np.int64)
        w += (fcols @ (x - old).T).T
        state.theta[:, cls] = x - TWO_PI * t
        if np.any(t):
            state.m += (dcols @ t.T).T
    return state


def sweep(state, beta, rng):
    resample_m(state, beta, rng)
    resample_theta(state, beta, rng)
    state.sweep += 1
    return state


def run_chain(spec, p, config, state=None):
    """Generator of thinned states at stationarity (after burn-in).

    Yields the live state object (copy if you keep references).  Fully
    reproducible from (seed, chain id): the RNG is counter-based and the
    vectorized update order is canonical.
    """
    rng = make_rng(config.seed, config.chain_id)
    if state is None:
        state = initial_state(spec, p, config.replicas)
    start = state.sweep
    burn = config.resolved_burn_in
    produced = 0
    target = start + burn + config.n_samples * config.thinning
    while state.sweep < target:
        sweep(state, config.beta, rng)
        if state.sweep > start + burn and (state.sweep - start - burn) % config.thinning == 0:
            produced += 1
            yield state


def measure_chain(spec, p, config, observables, state=None):
    """Run a chain and evaluate named observables on each thinned state.

    observables: dict name -> callable(state) returning a scalar or a
    per-replica array.  Returns dict name -> array of shape (n_samples, ...).
    """
    out = {name: [] for name in observables}
    for st in run_chain(spec, p, config, state=state):
        for name, fn in observables.items():
            out[name].append(fn(st))
    return {name: np.asarray(vals) for name, vals in out.items()}


# ---------------------------------------------------------------------------
# checkpoints: snapshot format per replica plus a JSON chain header
# ---------------------------------------------------------------------------

_CK_MAGIC = b"VLCK"


def save_checkpoint(path, state, config, rng=None, config_hash=""):
    header = {
        "p": state.p, "sweep": state.sweep, "replicas": state.replicas,
        "beta": config.beta, "seed": config.seed, "chain_id": config.chain_id,
        "thinning": config.thinning, "n_samples": config.n_samples,
        "burn_in": config.resolved_burn_in,
        "config_hash": config_hash,
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }
    def _jsonable(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        return int(o)

    blob = json.dumps(header, default=_jsonable).encode()
    with open(path, "wb") as fh:
        fh.write(_CK_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for r in range(state.replicas):
            for form in (state.theta_form(r), state.m_form(r)):
                buf = io.BytesIO()
                _write_snapshot(buf, form)
                fh.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != _CK_MAGIC:
            raise forms.InconsistencyError(f"{path}: not a chain checkpoint")
        (ln,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(ln).decode())
        thetas, ms = [], []
        for _ in range(header["replicas"]):
            thetas.append(_read_snapshot(fh))
            ms.append(_read_snapshot(fh))
    spec = thetas[0].spec
    state = VillainState(spec, header["p"],
                         np.stack([t.values for t in thetas]),
                         np.stack([m.values.astype(np.int64) for m in ms]),
                         sweep=header["sweep"])
    config = ChainConfig(beta=header["beta"], n_samples=header["n_samples"],
                         burn_in=header["burn_in"], thinning=header["thinning"],
                         seed=header["seed"], replicas=header["replicas"],
                         chain_id=header["chain_id"])
    return state, config, header


def _write_snapshot(fh, form):
    spec = form.spec
    payload = 1 if form.values.dtype.kind in "iu" else 0
    dtype = np.dtype(np.int64 if payload else np.float64).newbyteorder("<")
    vals = np.ascontiguousarray(form.values, dtype=dtype)
    fh.write(forms._SNAPSHOT_MAGIC)
    fh.write(struct.pack("<BiBBBQ", spec.n, spec.j, form.k,
                         0 if spec.boundary == FREE else 1, payload, vals.size))
    fh.write(vals.tobytes())


def _read_snapshot(fh):
    if fh.read(4) != forms._SNAPSHOT_MAGIC:
        raise forms.InconsistencyError("bad snapshot block")
    n, j, k, mode, payload, count = struct.unpack("<BiBBBQ", fh.read(16))
    spec = LatticeSpec.cube(n, j, FREE if mode == 0 else ZERO)
    dtype = np.dtype(np.int64 if payload else np.float64).newbyteorder("<")
    vals = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype).copy()
    return Form(spec, k, vals.astype(np.int64 if payload else np.float64))
