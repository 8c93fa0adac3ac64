"""
A stationary equation whose solution has no finite second moment
=================================================================

The scalar equation u = 1 + u <> xi has coefficients u_(n) = sqrt(n!), so
the plain L2 norm diverges, while a Kondratiev-weighted norm converges.
A Dirichlet problem with derivative noise shows the same weighted picture.
"""

import math

import numpy as np

from chaosprop.elliptic import StationaryProblem, solve_elliptic_dirichlet, solve_stationary, solve_stationary_exact
from chaosprop.multiindex import MultiIndex
from chaosprop.spatial import Grid1D
from chaosprop.weights import WeightSystem

prob = StationaryProblem([[1.0]], [[[-1.0]]], [1.0], 10)
exact = solve_stationary_exact(prob)
sol = solve_stationary(prob)
for n in range(6):
    a = MultiIndex.unit(1, n) if n else MultiIndex.zero()
    print(f"u_({n}) exact = {exact[a][0]},  float = {sol.coefficient(a)[0]:.6f}")

plain = [math.sqrt(sum(math.factorial(k) for k in range(n + 1))) for n in (4, 8, 10)]
print("truncated L2 norms grow without bound:", np.round(plain, 1))
ws = WeightSystem.kondratiev(-1.0, -1.0)
print("Kondratiev norm (rho = ell = -1):", sol.weighted_norm(ws), "->", math.sqrt(2.0))

# -(u')' + sum_k h_k (sigma u')' <> xi_k = 1 on (0, pi)
grid = Grid1D(math.pi, 63)
_, rep = solve_elliptic_dirichlet(grid, 1.0, 0.3, 1.0, K=4, max_order=4)
print("C_k =", np.round(rep["C_k"], 4))
print("level norms:", {n: f"{v:.2e}" for n, v in rep["level_norms"].items()})
print("weighted norm / |f|_V' =", round(rep["ratio"], 4))
print("level ratios (all <= 1):", {n: round(r, 4) for n, r in rep["level_ratios"].items()})
