"""
Multi-indices, the Cameron-Martin basis and the Wick product
=============================================================

A random variable driven by independent Gaussians xi_1, xi_2, ... is written
as a sum of deterministic coefficients times the basis elements xi_alpha.
This walk-through builds a few expansions by hand.
"""

import math

import numpy as np

from chaosprop.chaos import (
    ChaosExpansion,
    monte_carlo_gram,
    number_operator,
    wick_product,
    xi_alpha,
)
from chaosprop.multiindex import MultiIndex, count_indices, enumerate_indices

# A multi-index lists how often each Gaussian appears.  Labels use k^n.
a = MultiIndex({1: 2, 3: 1})
print("alpha =", a, " |alpha| =", a.order, " alpha! =", a.factorial())
print("characteristic set:", a.characteristic_set())

# The truncated set with |alpha| <= N and modes 1..K, in canonical order
idx = enumerate_indices(2, 2)
print([str(b) for b in idx], "count:", count_indices(2, 2))

# xi_alpha is a product of normalised Hermite polynomials
print("xi_(1^2) at xi_1 = 2:", xi_alpha(MultiIndex.unit(1, 2), [2.0]), "=", 3 / math.sqrt(2))

# The Wick square of xi_1 is sqrt(2) xi_(1^2), i.e. xi_1^2 - 1
x = ChaosExpansion.gaussian(1)
w = wick_product(x, x)
print("xi_1 <> xi_1 =", dict((str(k), v) for k, v in w.items()))
print("evaluated at 1.5:", w.evaluate(np.array([[1.5]]))[0], "vs", 1.5**2 - 1)

# The number operator counts the chaos order of each term
u = ChaosExpansion({MultiIndex.zero(): 1.0, MultiIndex.unit(2): 2.0, a: -1.0})
print("N u =", dict((str(k), v) for k, v in number_operator(u).items()))

# Orthonormality of the basis, checked by sampling
mean, se = monte_carlo_gram(2, 2, 200_000, np.random.default_rng(0))
z = np.abs(mean - np.eye(len(mean)))[se > 0] / se[se > 0]
print(f"Gram matrix from 2e5 samples: max deviation {z.max():.2f} standard errors")
