"""
Relaxation of a dissipative evolution towards its stationary solution
=====================================================================

When A is dissipative and the noise is a bounded multiplication, the chaos
solution of u' = A u + f(t) + (M u) <> W' approaches the solution of the
paired stationary equation once f(t) settles to f*.  The distance is
measured in weighted chaos norms.
"""

import math

import numpy as np
import scipy.sparse as sp

from chaosprop.elliptic import converge_to_stationary
from chaosprop.parabolic import EvolutionProblem, StepperConfig
from chaosprop.spatial import Grid1D, NormalTriple, assemble_A, dissipativity_constant, noise_basis_sine
from chaosprop.weights import WeightSystem

grid = Grid1D(math.pi, 32)
K, N = 2, 3
A = assemble_A(grid, c=-0.2)
triple = NormalTriple.dirichlet(grid)
c = dissipativity_constant(A, triple)
noise = noise_basis_sine(grid, K)
M = [sp.diags(0.4 * noise[k]) for k in range(1, K + 1)]
f_star = np.ones(grid.m)
T = 20.0 / c
ep = EvolutionProblem(A, M, T, N, u0=np.zeros(grid.m), f=lambda t: f_star * (1 - math.exp(-t)),
                      triple=triple, stepper=StepperConfig(n_steps=2000, n_store=20))
ws = WeightSystem.dirichlet([1.0] * K, 1.0, name="dirichlet")
res = converge_to_stationary(ep, f_star, [ws])
print(f"measured dissipativity c = {c:.4f}, horizon T = 20/c = {T:.1f}")
for t, d, p in zip(res["times"][::4], res["distances"]["dirichlet"][::4], res["posthoc"][::4]):
    print(f"t = {t:6.2f}   weighted distance {d:.3e}   post-hoc weights {p:.3e}   e^(-ct) = {math.exp(-c * t):.3e}")
