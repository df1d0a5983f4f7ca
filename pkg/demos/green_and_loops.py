"""Green function structure and loop energies.

Shows the direction-diagonal structure of the 1-form Green function, the
infinite-volume vertex Green function decay, the constant c_gff, and the
perimeter growth of rectangular loop energies in 4d against the log growth
in 3d.

Run:  python3 demos/green_and_loops.py
"""
import numpy as np

from villain import harmonic, observables as obs
from villain.lattice import FREE, CellKey, LatticeSpec

spec = LatticeSpec.cube(4, 2, FREE)
e1 = CellKey((0, 0, 0, 0), (0,))
e_same = CellKey((1, 1, 0, 0), (0,))
e_cross = CellKey((1, 1, 0, 0), (1,))
print("1-form Green function on", spec)
print("  same direction :", harmonic.green_one_form(e1, e_same, spec, FREE))
print("  cross direction:", harmonic.green_one_form(e1, e_cross, spec, FREE))

print("\nvertex Green function decay on Z^n, fitted log-log slope:")
rs = np.arange(8, 21)
for n in (3, 4):
    gs = [harmonic.green_infinite_vertex((int(r),) + (0,) * (n - 1), n)
          for r in rs]
    slope = np.polyfit(np.log(rs), np.log(gs), 1)[0]
    print(f"  n={n}: slope {slope:+.3f} (expect {-(n - 2)})")

c = harmonic.c_gff()
print(f"\nc_gff = {c:.12f}")

print("\nsquare loop energy in 4d grows linearly in the perimeter:")
for L in (8, 16, 24):
    lspec = LatticeSpec.cube(4, (3 * L) // 2, FREE)
    loop = obs.RectLoop((0, 1), (-L // 2, -L // 2, 0, 0), L, L)
    e = obs.loop_energy(loop, lspec, FREE, method="dg")
    print(f"  L={L:2d}: E = {e:8.4f}   E/(2L) = {e / (2 * L):.5f} "
          f"(2 c_gff = {2 * c:.5f})")

print("\nin 3d the same energy grows with log H at fixed L (trapping):")
spec3 = LatticeSpec.cube(3, 48, FREE)
for H in (4, 8, 16):
    loop = obs.RectLoop((0, 1), (-32, -H // 2, 0), 64, H)
    e = obs.loop_energy(loop, spec3, FREE, method="dg")
    print(f"  H={H:2d}: E = {e:8.4f}")
