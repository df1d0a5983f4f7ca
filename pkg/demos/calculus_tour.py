"""Tour of the discrete calculus layer: cells, d, d*, Laplacian, ranks.

Run:  python3 demos/calculus_tour.py
"""
import numpy as np

from villain import forms, harmonic, lattice
from villain.forms import Form, d, d_star
from villain.lattice import FREE, ZERO, LatticeSpec

spec = LatticeSpec.cube(4, 1, FREE)
print(f"lattice: {spec}")
for k in range(5):
    print(f"  degree {k}: {lattice.cell_count(spec, k)} cells")

rng = np.random.default_rng(0)
f = Form(spec, 1, rng.normal(size=lattice.cell_count(spec, 1)))
g = Form(spec, 2, rng.normal(size=lattice.cell_count(spec, 2)))

print("\nexact identities (should all vanish):")
print("  max |dd f|   =", np.abs(d(d(f)).values).max())
print("  max |d*d* g| =", np.abs(d_star(d_star(g, FREE), FREE).values).max())
adj = forms.inner(d(f), g) + forms.inner(f, d_star(g, FREE))
print("  <df,g> + <f,d*g> =", adj)

print("\ninteger structure: d of an integer form has an integer preimage")
m = Form(spec, 1, rng.integers(-2, 3, lattice.cell_count(spec, 1)))
q = d(m)
back = forms.integer_preimage(q)
print("  d(preimage) == q:", np.array_equal(d(back).values, q.values),
      "| preimage dtype:", back.values.dtype)

print("\nimage dimensions per degree (Free vs Zero boundary):")
for mode in (FREE, ZERO):
    table = harmonic.rank_table(LatticeSpec.cube(4, 1, mode))
    rows = {k: (v["lower"], v["upper"]) for k, v in table.items()}
    print(f"  {mode:>4}: ", rows)
print("closed-form check, rank of d on 1-forms:",
      harmonic.rank_of_d(spec, 1))
