"""Integer-valued Gaussian: exact truncated-series moments, sampling, and the
error functions M(beta) and the diagnostic ratio K_beta.

The distribution is P[X = k] proportional to e^{-beta/2 (k-a)^2} on Z.  All
series are truncated to the window |k - round(a)| <= W with
W = ceil(sqrt(2 ln(1e15)/beta)) + 1, so the neglected mass is below 1e-13.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

TWO_PI_SQ = (2.0 * np.pi) ** 2
_LOG_CUT = 2.0 * np.log(1e15)


class IvgParams(NamedTuple):
    a: float
    beta: float


def window_halfwidth(beta):
    return int(np.ceil(np.sqrt(_LOG_CUT / beta))) + 1


def _support(a, beta):
    """Integer support window and normalized probabilities, vectorized over a.

    Returns (ks, probs) with shapes (..., 2W+1); ks[..., i] are integers.
    """
    a = np.asarray(a, dtype=np.float64)
    W = window_halfwidth(beta)
    center = np.rint(a)
    ks = center[..., None] + np.arange(-W, W + 1)
    logw = -0.5 * beta * (ks - a[..., None]) ** 2
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return ks, w / w.sum(axis=-1, keepdims=True)


def ivg_pmf(params, k):
    a, beta = params
    ks, probs = _support(np.float64(a), beta)
    hit = ks == k
    return float(np.where(hit, probs, 0.0).sum())


def ivg_mean(params):
    a, beta = params
    ks, probs = _support(np.asarray(a, dtype=np.float64), beta)
    out = (ks * probs).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ivg_var(params):
    a, beta = params
    ks, probs = _support(np.asarray(a, dtype=np.float64), beta)
    mu = (ks * probs).sum(axis=-1, keepdims=True)
    out = (probs * (ks - mu) ** 2).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ivg_t3(params):
    """Third absolute central moment."""
    a, beta = params
    ks, probs = _support(np.asarray(a, dtype=np.float64), beta)
    mu = (ks * probs).sum(axis=-1, keepdims=True)
    out = (probs * np.abs(ks - mu) ** 3).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ivg_sample(params, rng, size=None):
    """Inverse-CDF draw(s) over the truncation window."""
    a, beta = params
    a_arr = np.asarray(a, dtype=np.float64)
    if size is not None:
        a_arr = np.broadcast_to(a_arr, size if isinstance(size, tuple) else (size,))
    ks, probs = _support(a_arr, beta)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(size=a_arr.shape)
    pick = (cdf < u[..., None]).sum(axis=-1)
    out = np.take_along_axis(ks, pick[..., None], axis=-1)[..., 0].astype(np.int64)
    if np.ndim(a) == 0 and size is None:
        return int(out)
    return out


def error_M(beta):
    """(2 pi)^2 beta times the infimum over a in [0, 1/2] of the IV-Gaussian
    variance at inverse temperature (2 pi)^2 beta; grid + golden-section."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    bhat = TWO_PI_SQ * beta
    grid = np.linspace(0.0, 0.5, 101)
    vals = ivg_var(IvgParams(grid, bhat))
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda a: ivg_var(IvgParams(float(a), bhat)),
                          bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    best = min(float(res.fun), float(vals[i]))
    return bhat * best


def error_M_argmin(beta):
    """Location of the minimizing center (diagnostic; conjectured monotone)."""
    bhat = TWO_PI_SQ * beta
    grid = np.linspace(0.0, 0.5, 201)
    vals = ivg_var(IvgParams(grid, bhat))
    i = int(np.argmin(vals))
    res = minimize_scalar(lambda a: ivg_var(IvgParams(float(a), bhat)),
                          bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
                          method="bounded", options={"xatol": 1e-10})
    return float(res.x)


def ratio_K(beta, beta_span=50.0, grid_a=101, grid_b=201):
    """Grid approximation (a lower bound) of sup over beta_hat >= beta and
    centers a of T^IG / Var^IG.  The sup over beta_hat is capped at
    beta + beta_span; a ranges over one period [0, 1]."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    best = 0.0
    for bhat in np.linspace(beta, beta + beta_span, grid_b):
        a = np.linspace(0.0, 1.0, grid_a)
        t3 = ivg_t3(IvgParams(a, bhat))
        var = ivg_var(IvgParams(a, bhat))
        ratio = np.where(var > 0, t3 / np.maximum(var, 1e-300), 0.0)
        best = max(best, float(ratio.max()))
    return best
