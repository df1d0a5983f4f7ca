"""The integer-valued Gaussian behind the m-update, and its tail bounds.

Run:  python3 demos/integer_gaussian.py
"""
import numpy as np

from villain import ivgauss
from villain.ivgauss import IvgParams

p = IvgParams(a=0.3, beta=5.0)
print(f"pmf at center a={p.a}, beta={p.beta}:")
for k in range(-2, 4):
    pr = ivgauss.ivg_pmf(p, k)
    bar = "#" * int(60 * pr)
    print(f"  m={k:+d}  {pr:.4f} {bar}")
print("mean", ivgauss.ivg_mean(p), " var", ivgauss.ivg_var(p))

print("\nvariance lower bound (1/16) e^{-beta(1-2a)/2} holds on the window:")
worst = np.inf
for beta in np.linspace(10.5, 40.0, 60):
    a = np.arange(0.0, 0.51, 0.01)
    var = ivgauss.ivg_var(IvgParams(a, float(beta)))
    bound = np.exp(-beta * (1 - 2 * a) / 2) / 16
    worst = min(worst, float((var / bound).min()))
print(f"  min ratio var/bound = {worst:.3f}  (>= 1 required)")

print("\nworst-case wrapped-phase moment error M(beta):")
for beta in (0.5, 1.0, 2.0):
    m = ivgauss.error_M(beta)
    floor = 2 * beta * np.exp(-0.5 * (2 * np.pi) ** 2 * beta)
    print(f"  beta={beta}: M = {m:.3e}  >=  2 beta e^(-2 pi^2 beta)"
          f" = {floor:.3e}")

print("\n200k draws at the demo parameters:")
rng = np.random.default_rng(0)
draws = ivgauss.ivg_sample(p, rng, size=200_000)
print(f"  sample mean {draws.mean():+.4f} vs {ivgauss.ivg_mean(p):+.4f}")
print(f"  sample var  {draws.var():.4f} vs {ivgauss.ivg_var(p):.4f}")
