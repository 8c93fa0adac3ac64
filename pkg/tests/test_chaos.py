import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosprop.chaos import (
    ChaosExpansion,
    basis_matrix,
    gauss_hermite_gram,
    hermite,
    malliavin_derivative,
    monte_carlo_gram,
    number_operator,
    skorokhod,
    wick_product,
    xi_alpha,
    xi_from_characteristic_set,
)
from chaosprop.multiindex import MultiIndex, enumerate_indices

Z = MultiIndex.zero()


def E(k, n=1):
    return MultiIndex.unit(k, n)


def unit(alpha, value=1.0, **kw):
    return ChaosExpansion.unit(alpha, value, **kw)


# -- Hermite polynomials and the basis ----------------------------------------


def test_hermite_examples():
    assert hermite(0, 1.7) == 1.0
    assert hermite(2, 2.0) == 3.0
    assert hermite(3, 1.0) == -2.0
    with pytest.raises(ValueError):
        hermite(-1, 0.0)


@pytest.mark.parametrize("n", range(11))
def test_hermite_matches_rodrigues(n):
    x = sympy.Symbol("x")
    rod = sympy.expand(sympy.simplify((-1) ** n * sympy.exp(x**2 / 2) * sympy.diff(sympy.exp(-(x**2) / 2), x, n)))
    f = sympy.lambdify(x, rod, "numpy")
    pts = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(hermite(n, pts), np.broadcast_to(f(pts), pts.shape), rtol=1e-12, atol=1e-9)


def test_xi_alpha_examples():
    assert xi_alpha(Z, [0.3, -1.2]) == 1.0
    assert xi_alpha(E(1, 2), [2.0]) == pytest.approx(3 / math.sqrt(2), rel=1e-15)
    assert xi_alpha(E(1) + E(2), [1.0, -1.0]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        xi_alpha(E(3), [1.0, 2.0])


def test_basis_matrix_matches_xi_alpha():
    rng = np.random.default_rng(0)
    s = rng.standard_normal((7, 3))
    idx = enumerate_indices(4, 3)
    B = basis_matrix(idx, s)
    for j, a in enumerate(idx):
        np.testing.assert_allclose(B[:, j], xi_alpha(a, s), rtol=1e-12)


def test_gauss_hermite_orthonormality():
    G = gauss_hermite_gram(4, 3)
    np.testing.assert_allclose(G, np.eye(len(G)), atol=1e-12)


# -- expansion container ---------------------------------------------------------


def test_truncation_validation():
    with pytest.raises(ValueError):
        ChaosExpansion({E(1, 3): 1.0}, max_order=2)
    with pytest.raises(ValueError):
        ChaosExpansion({E(3): 1.0}, max_dim=2)
    u = ChaosExpansion({E(2): 1.0})
    assert u.truncation == (1, 2)


def test_arithmetic_is_coefficientwise():
    a = ChaosExpansion({Z: 1.0, E(1): 2.0})
    b = ChaosExpansion({E(1): 3.0, E(2): -1.0})
    s = a + b
    assert s[Z] == 1.0 and s[E(1)] == 5.0 and s[E(2)] == -1.0
    assert (a * 2)[E(1)] == 4.0
    assert (a - a).l2_norm() == 0.0


def test_json_round_trip_vector():
    u = ChaosExpansion({Z: np.array([1.0, 2.0]), E(1) + E(3): np.array([0.5, -0.25])})
    v = ChaosExpansion.from_json(u.to_json())
    assert v.allclose(u, atol=0)
    assert u.to_records()[1]["index"] == "1^1 3^1"


def test_evaluate_is_sum_of_basis():
    rng = np.random.default_rng(1)
    u = ChaosExpansion({Z: 0.5, E(1): 2.0, E(1) + E(2): -1.5})
    s = rng.standard_normal((5, 2))
    expected = 0.5 + 2.0 * s[:, 0] - 1.5 * s[:, 0] * s[:, 1]
    np.testing.assert_allclose(u.evaluate(s), expected, rtol=1e-13)


# -- Wick product ------------------------------------------------------------------


def test_wick_xi1_squared():
    w = wick_product(ChaosExpansion.gaussian(1), ChaosExpansion.gaussian(1))
    assert set(w) == {E(1, 2)}
    assert w[E(1, 2)] == pytest.approx(math.sqrt(2))
    assert w.truncation == (2, 1)


@pytest.mark.parametrize("k,n", [(1, 1), (2, 3), (3, 0), (4, 2)])
def test_wick_hermite_identity(k, n):
    # H_k(xi) is sqrt(k!) xi_{k eps_1}
    hk = unit(E(1, k) if k else Z, math.sqrt(math.factorial(k)))
    hn = unit(E(1, n) if n else Z, math.sqrt(math.factorial(n)))
    w = wick_product(hk, hn)
    x = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(w.evaluate(x), hermite(k + n, x[:, 0]), rtol=1e-12, atol=1e-12)


def test_wick_unit():
    a = ChaosExpansion({Z: 1.0, E(1): 2.0, E(2, 2): 3.0})
    assert wick_product(a, ChaosExpansion.constant(1.0)).allclose(a)


def test_wick_scalar_vector():
    a = ChaosExpansion.gaussian(1)
    v = ChaosExpansion({Z: np.array([1.0, 2.0])})
    w = wick_product(a, v)
    np.testing.assert_array_equal(w[E(1)], [1.0, 2.0])


@st.composite
def expansions(draw, N=3, K=3):
    idx = enumerate_indices(N, K)
    keys = draw(st.lists(st.sampled_from(idx), min_size=1, max_size=5, unique=True))
    vals = draw(st.lists(st.floats(-2, 2), min_size=len(keys), max_size=len(keys)))
    return ChaosExpansion(dict(zip(keys, vals)), max_order=N, max_dim=K)


@settings(max_examples=40, deadline=None)
@given(expansions(), expansions())
def test_wick_commutative(a, b):
    assert wick_product(a, b).allclose(wick_product(b, a), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(expansions(), expansions(), expansions())
def test_wick_associative(a, b, c):
    left = wick_product(wick_product(a, b), c)
    right = wick_product(a, wick_product(b, c))
    assert left.allclose(right, atol=1e-12, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(expansions(), expansions(), st.floats(-3, 3))
def test_wick_bilinear(a, b, s):
    assert wick_product(a * s, b).allclose(wick_product(a, b) * s, atol=1e-11)


# -- Malliavin derivative and Skorokhod operator -------------------------------------


def test_derivative_of_second_chaos():
    d = malliavin_derivative(unit(E(1, 2), max_dim=2))
    assert d[1][E(1)] == pytest.approx(math.sqrt(2))
    assert len(d[2]) == 0


def test_derivative_of_constant():
    d = malliavin_derivative(ChaosExpansion.constant(3.0, max_dim=2))
    assert all(len(p) == 0 for p in d.values())


def test_derivative_mixed():
    d = malliavin_derivative(unit(E(1) + E(2)))
    assert dict(d[1].items()) == {E(2): 1.0}
    assert dict(d[2].items()) == {E(1): 1.0}


def test_skorokhod_examples():
    h = np.array([1.0, -2.0, 0.5])
    s = skorokhod({2: ChaosExpansion({Z: h})})
    np.testing.assert_array_equal(s[E(2)], h)
    s = skorokhod({1: ChaosExpansion({E(1): h})})
    np.testing.assert_allclose(s[E(1, 2)], math.sqrt(2) * h)
    assert len(skorokhod({1: ChaosExpansion({})})) == 0


def test_skorokhod_truncation_grows():
    s = skorokhod({1: ChaosExpansion({E(1, 2): 1.0}, max_order=2)})
    assert s.max_order == 3


def test_number_operator_small():
    for a in enumerate_indices(3, 2):
        u = number_operator(unit(a, max_order=3, max_dim=2))
        if a.is_zero():
            assert len(u) == 0
        else:
            assert set(u) == {a}
            assert u[a] == pytest.approx(a.order, rel=1e-14)


def test_skorokhod_duality_by_quadrature():
    # E[delta(f) xi_beta] computed by exact Gauss-Hermite quadrature, compared with
    # the coordinate formula sum_k sqrt(beta_k) f_{k, beta - eps_k}
    rng = np.random.default_rng(3)
    idx = enumerate_indices(2, 2)
    f = {k: ChaosExpansion({a: rng.normal() for a in idx}, max_order=2, max_dim=2) for k in (1, 2)}
    g = skorokhod(f)
    x, w = np.polynomial.hermite_e.hermegauss(6)
    w = w / math.sqrt(2 * math.pi)
    X = np.array([[u, v] for u in x for v in x])
    W = np.array([a * b for a in w for b in w])
    vals = g.evaluate(X)
    for beta in enumerate_indices(3, 2):
        quad = float(np.sum(W * vals * xi_alpha(beta, X)))
        coord = sum(math.sqrt(v) * f[k].get(beta.sub_eps(k), 0.0) for k, v in beta.items)
        assert quad == pytest.approx(coord, abs=1e-12)


# -- characteristic-set construction -------------------------------------------------


@pytest.mark.parametrize("alpha", [E(1, 2), E(3), E(1) + E(2, 2), E(1, 2) + E(3) + E(4, 2)])
def test_xi_from_characteristic_set(alpha):
    u = xi_from_characteristic_set(alpha)
    assert set(u) == {alpha}
    assert u[alpha] == pytest.approx(1.0, rel=1e-14)


def test_xi_from_characteristic_set_zero_raises():
    with pytest.raises(ValueError):
        xi_from_characteristic_set(Z)


def test_monte_carlo_gram_shapes():
    mean, se = monte_carlo_gram(1, 2, 2000, np.random.default_rng(0))
    assert mean.shape == se.shape == (3, 3)
    assert mean[0, 0] == 1.0 and se[0, 0] == 0.0
