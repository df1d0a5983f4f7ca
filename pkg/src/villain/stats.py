"""Batch-means standard errors and measurement reports."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def batch_means(samples, n_batches=20):
    """(mean, standard error) of a 1D sample stream via batch means.

    Uses >= 20 batches (fewer samples than batches falls back to the naive
    i.i.d. standard error).
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    mean = float(x.mean())
    if n < 2 * n_batches:
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return mean, se
    b = n // n_batches
    bm = x[: b * n_batches].reshape(n_batches, b).mean(axis=1)
    se = float(bm.std(ddof=1) / np.sqrt(n_batches))
    return mean, se


def replica_mean_se(samples):
    """(mean, se) for a (n_samples, n_replicas) array of paired streams from
    fully independent chains: the s.e. comes from the spread of per-replica
    means, which is honest under arbitrary within-chain autocorrelation.
    Falls back to batch means for 1D input."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1 or x.shape[1] < 2:
        return batch_means(x.ravel())
    means = x.mean(axis=0)
    return float(means.mean()), float(means.std(ddof=1) / np.sqrt(means.size))


PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass
class MeasureReport:
    """A measurement with its uncertainty and the comparisons made against it.

    Noise policy: a comparison whose target magnitude is below 5 standard
    errors is reported as inconclusive, never as a pass.
    """
    name: str
    estimate: float
    se: float
    n_samples: int
    targets: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def compare(self, label, target, tol_abs=0.0, tol_rel=0.0, sigmas=3.0,
                one_sided=False, noise_floor=True):
        """Record a comparison of the estimate against a target value.

        one_sided: pass when estimate <= target (plus tolerances).
        """
        margin = tol_abs + tol_rel * abs(target) + sigmas * self.se
        gap = self.estimate - target
        if noise_floor and abs(target) > 0 and abs(target) < 5 * self.se:
            verdict = INCONCLUSIVE
        elif one_sided:
            verdict = PASS if gap <= margin else FAIL
        else:
            verdict = PASS if abs(gap) <= margin else FAIL
        self.targets.append({
            "label": label, "target": float(target), "margin": float(margin),
            "gap": float(gap), "verdict": verdict,
            "one_sided": bool(one_sided),
        })
        return verdict

    @property
    def verdict(self):
        if not self.targets:
            return INCONCLUSIVE
        verdicts = {t["verdict"] for t in self.targets}
        if FAIL in verdicts:
            return FAIL
        if verdicts == {PASS}:
            return PASS
        return INCONCLUSIVE

    def as_dict(self):
        return {
            "name": self.name, "estimate": self.estimate, "se": self.se,
            "n_samples": self.n_samples, "targets": self.targets,
            "verdict": self.verdict, **({"extras": self.extras} if self.extras else {}),
        }
