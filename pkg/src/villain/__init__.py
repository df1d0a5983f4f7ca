"""Villain U(1) lattice gauge theory toolkit.

Cubical discrete exterior calculus, Green functions and projections, the joint
(theta, m) Gibbs sampler, the spin-wave/Coulomb decomposition, and Wilson-loop
estimators on finite boxes of Z^n.
"""

from .lattice import FREE, ZERO, CellKey, LatticeSpec
from .forms import Form

__all__ = ["FREE", "ZERO", "CellKey", "LatticeSpec", "Form"]

__version__ = "0.1.0"
