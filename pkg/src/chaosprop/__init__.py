"""Weighted Wiener chaos solvers for bilinear SPDEs driven by spatial white noise.

Submodules
----------
multiindex
    Multi-index arithmetic and enumeration.
chaos
    Cameron-Martin basis, Wick product, Malliavin derivative, Skorokhod operator.
weights
    Weight systems and weighted norms.
spatial
    1-D finite-difference operators, noise basis, normal triple, time steppers.
parabolic
    Evolution propagator, permutation-sum oracle, closed-form examples.
elliptic
    Stationary propagator, Kondratiev bound, convergence to the stationary solution.
cli
    Scenario-driven command line entry point.
"""

from .chaos import (
    ChaosExpansion,
    hermite,
    malliavin_derivative,
    number_operator,
    skorokhod,
    wick_product,
    xi_alpha,
    xi_from_characteristic_set,
)
from .multiindex import (
    MultiIndex,
    characteristic_set,
    check_factorial_inequality,
    count_indices,
    enumerate_indices,
)
from .weights import WeightSystem, choose_q, kondratiev_constant, weight, weighted_norm

__version__ = "0.1.0"

__all__ = [
    "ChaosExpansion",
    "MultiIndex",
    "WeightSystem",
    "characteristic_set",
    "check_factorial_inequality",
    "choose_q",
    "count_indices",
    "enumerate_indices",
    "hermite",
    "kondratiev_constant",
    "malliavin_derivative",
    "number_operator",
    "skorokhod",
    "weight",
    "weighted_norm",
    "wick_product",
    "xi_alpha",
    "xi_from_characteristic_set",
]
