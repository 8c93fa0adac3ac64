import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosprop.spatial import (
    Coefficient,
    Grid1D,
    NormalTriple,
    Stepper,
    as_matrix,
    assemble_A,
    assemble_Mk,
    dissipativity_constant,
    estimate_Ck,
    h_operator_norm,
    inverse_norm,
    laplacian,
    noise_basis_sine,
    semigroup_apply,
    semigroup_growth,
)


def dense(op):
    return as_matrix(op).toarray()


def test_grid_validation():
    g = Grid1D(math.pi, 9)
    assert g.h == pytest.approx(math.pi / 10)
    assert g.x[0] == pytest.approx(g.h) and g.x[-1] == pytest.approx(math.pi - g.h)
    with pytest.raises(ValueError):
        Grid1D(1.0, 2)
    with pytest.raises(ValueError):
        Grid1D(-1.0, 10)


def test_laplacian_lowest_eigenvalue():
    g = Grid1D(math.pi, 400)
    ev = np.linalg.eigvalsh(-dense(assemble_A(g)))
    assert ev[0] == pytest.approx(1.0, abs=2 * g.h**2)
    # discrete eigenvalues are known in closed form
    j = np.arange(1, 6)
    exact = (4 / g.h**2) * np.sin(j * g.h / 2) ** 2
    np.testing.assert_allclose(ev[:5], exact, rtol=1e-10)


def test_constant_shift():
    g = Grid1D(1.0, 20)
    A0 = dense(assemble_A(g, a=2.0))
    A1 = dense(assemble_A(g, a=2.0, c=0.7))
    np.testing.assert_array_equal(A1, A0 + 0.7 * np.eye(20))


def test_divergence_equals_nondivergence_for_constant_a():
    g = Grid1D(1.0, 15)
    np.testing.assert_array_equal(dense(assemble_A(g, form="divergence")), dense(assemble_A(g)))


def test_divergence_form_symmetric():
    g = Grid1D(1.0, 30)
    a = Coefficient.make("bump", 1.0, base=1.0, height=2.0, center=0.3, width=0.1)
    A = dense(assemble_A(g, a=a, form="divergence"))
    np.testing.assert_allclose(A, A.T, atol=0)


def test_ellipticity_violation():
    g = Grid1D(1.0, 10)
    with pytest.raises(ValueError, match="ellipticity"):
        assemble_A(g, a=Coefficient.make("linear", 1.0, a0=1.0, a1=-2.0))
    with pytest.raises(ValueError, match="ellipticity"):
        assemble_A(g, a=0.5, ellipticity=0.6)


def test_coefficient_presets():
    c = Coefficient.from_config({"kind": "linear", "a0": 1.0, "a1": 2.0}, L=2.0)
    np.testing.assert_allclose(c(np.array([0.0, 1.0, 2.0])), [1.0, 2.0, 3.0])
    assert Coefficient.from_config(3.5, 1.0)(np.array([0.2]))[0] == 3.5
    with pytest.raises(ValueError):
        Coefficient.make("bump", 1.0, base=1.0)
    with pytest.raises(ValueError):
        Coefficient.make("spline", 1.0)


def test_Mk_forms():
    g = Grid1D(1.0, 12)
    hk = np.linspace(0.5, 1.5, 12)
    np.testing.assert_array_equal(dense(assemble_Mk(g, hk, nu=1.0)), np.diag(hk))
    np.testing.assert_array_equal(dense(assemble_Mk(g, hk, nu=2.0, form="multiplication")), np.diag(2 * hk))
    D = dense(assemble_Mk(g, 1.0, sigma=1.0))
    np.testing.assert_allclose(D, -D.T, atol=0)
    assert D[0, 1] == pytest.approx(1 / (2 * g.h))
    assert not np.any(dense(assemble_Mk(g, hk, sigma=0.0, form="divergence")))
    with pytest.raises(ValueError):
        assemble_Mk(g, hk, form="bogus")


def test_noise_basis_sine():
    g = Grid1D(math.pi, 63)
    nb = noise_basis_sine(g, 8)
    mid = np.argmin(abs(g.x - math.pi / 2))
    assert nb[1][mid] == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)
    np.testing.assert_allclose(nb.gram(g), np.eye(8), atol=1e-8)
    assert np.all(nb.c == nb.c[0])
    assert np.all(np.abs(nb.values) <= nb.c[:, None] + 1e-15)
    with pytest.raises(IndexError):
        nb[9]


# -- normal triple and constants ----------------------------------------------------


def test_triple_duality():
    g = Grid1D(1.0, 25)
    tr = NormalTriple.dirichlet(g)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(25)
    F = rng.standard_normal(25)
    # |<F, v>_H| <= ||F||_{V'} ||v||_V, with equality for v = G_V^{-1} G_H F
    pair = abs(F @ tr.G_H @ v)
    assert pair <= tr.norm_Vdual(F) * tr.norm_V(v) * (1 + 1e-12)
    w = np.linalg.solve(tr.G_V, tr.G_H @ F)
    assert abs(F @ tr.G_H @ w) == pytest.approx(tr.norm_Vdual(F) * tr.norm_V(w), rel=1e-10)
    U = rng.standard_normal((25, 4))
    np.testing.assert_allclose(tr.norms_V(U), [tr.norm_V(U[:, j]) for j in range(4)], rtol=1e-12)
    np.testing.assert_allclose(tr.norms_H(U), [tr.norm_H(U[:, j]) for j in range(4)], rtol=1e-12)


def test_Ck_zero_and_identity():
    g = Grid1D(math.pi, 30)
    tr = NormalTriple.dirichlet(g)
    A = -assemble_A(g, form="divergence")
    assert estimate_Ck(A, sp.csr_matrix((30, 30)), tr) == 0.0
    assert estimate_Ck(A, A, tr) == pytest.approx(1.0, rel=1e-10)


def test_Ck_matches_dense_svd():
    g = Grid1D(math.pi, 40)
    tr = NormalTriple.dirichlet(g)
    A = -assemble_A(g, form="divergence")
    M = assemble_Mk(g, noise_basis_sine(g, 1)[1], nu=1.0, form="multiplication")
    T = tr.R @ np.linalg.solve(dense(A), dense(M)) @ np.linalg.inv(tr.R)
    svd = np.linalg.svd(T, compute_uv=False)[0]
    assert estimate_Ck(A, M, tr) == pytest.approx(svd, rel=1e-6)


def test_parabolic_Ck_matches_dense():
    g = Grid1D(1.0, 8)
    tr = NormalTriple.dirichlet(g)
    A = assemble_A(g)
    M = assemble_Mk(g, noise_basis_sine(g, 1)[1], sigma=0.3, nu=1.0)
    n, T = 6, 0.5
    dt = T / n
    m = g.m
    Ad, Md = dense(A), dense(M)
    P = np.linalg.inv(np.eye(m) - dt * Ad)
    # block lower-triangular map on stacked V-scaled samples
    big = np.zeros((n * m, n * m))
    for i in range(n):
        for j in range(i + 1):
            big[i * m:(i + 1) * m, j * m:(j + 1) * m] = np.linalg.matrix_power(P, i - j + 1) @ (dt * Md)
    Rb = np.kron(np.eye(n), tr.R) * math.sqrt(dt)
    ref = np.linalg.svd(Rb @ big @ np.linalg.inv(Rb), compute_uv=False)[0]
    assert estimate_Ck(A, M, tr, "parabolic", T=T, n_steps=n) == pytest.approx(ref, rel=1e-6)


def test_Ck_bad_mode():
    g = Grid1D(1.0, 5)
    tr = NormalTriple.dirichlet(g)
    with pytest.raises(ValueError):
        estimate_Ck(assemble_A(g), assemble_A(g), tr, "hyperbolic")
    with pytest.raises(ValueError):
        estimate_Ck(assemble_A(g), assemble_A(g), tr, "parabolic")


def test_inverse_norm_laplacian():
    g = Grid1D(math.pi, 30)
    assert inverse_norm(-assemble_A(g, form="divergence"), NormalTriple.dirichlet(g)) == pytest.approx(1.0, rel=1e-10)


def test_coercivity_surrogate():
    g = Grid1D(1.0, 40)
    A1 = 0.4
    a = Coefficient.make("bump", 1.0, base=A1 + 0.01, height=1.0, center=0.5, width=0.2)
    A = -dense(assemble_A(g, a=a, form="divergence"))
    L = laplacian(g).toarray()
    lam1 = np.linalg.eigvalsh(L)[0]
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = rng.standard_normal(40)
        assert v @ A @ v >= A1 * (v @ L @ v) >= A1 * lam1 * (v @ v) * (1 - 1e-12)


def test_dissipativity_and_contraction():
    g = Grid1D(math.pi, 30)
    tr = NormalTriple.dirichlet(g)
    A = assemble_A(g, a=1.0, c=-0.2)
    c = dissipativity_constant(A, tr)
    lam1 = np.linalg.eigvalsh(-dense(assemble_A(g)))[0]
    assert c == pytest.approx(lam1 + 0.2, rel=1e-10)
    rng = np.random.default_rng(4)
    for t in (0.1, 0.5, 2.0):
        v = rng.standard_normal(30)
        w = semigroup_apply(A, v, t, n_steps=50)
        assert tr.norm_H(w) <= math.exp(-c * t) * tr.norm_H(v) * (1 + 1e-12)
    assert semigroup_growth(A, tr) == pytest.approx(-c)
    assert semigroup_growth(A, tr, dt=0.01) <= -c * 0.98


def test_semigroup_examples():
    g = Grid1D(math.pi, 200)
    A = assemble_A(g)
    v = np.sin(g.x)
    np.testing.assert_array_equal(semigroup_apply(A, v, 0.0), v)
    w = semigroup_apply(A, v, 1.0, n_steps=4000)
    np.testing.assert_allclose(w, math.exp(-1.0) * v, atol=2e-4)
    cn = semigroup_apply(A, v, 1.0, n_steps=200, method="crank_nicolson")
    np.testing.assert_allclose(cn, math.exp(-1.0) * v, atol=2e-5)
    with pytest.raises(ValueError):
        semigroup_apply(A, v, -1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 2.0))
def test_semigroup_linearity(seed, t):
    g = Grid1D(1.0, 20)
    A = assemble_A(g, a=Coefficient.make("linear", 1.0, a0=1.0, a1=0.5), b=0.3)
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal((2, 20))
    lhs = semigroup_apply(A, v + w, t, n_steps=20)
    rhs = semigroup_apply(A, v, t, n_steps=20) + semigroup_apply(A, w, t, n_steps=20)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_stepper_orders():
    # scalar test equation w' = -w: global errors shrink by the method order
    for method, order in (("implicit_euler", 1), ("crank_nicolson", 2)):
        errs = []
        for n in (20, 40):
            st = Stepper(np.array([[-1.0]]), 1.0 / n, method)
            assert st.order == order
            w = np.array([1.0])
            for _ in range(n):
                w = st.step(w)
            errs.append(abs(w[0] - math.exp(-1)))
        assert errs[0] / errs[1] == pytest.approx(2**order, rel=0.1)
    with pytest.raises(ValueError):
        Stepper(np.eye(2), 0.1, "rk4")


def test_h_operator_norm_multiplication():
    g = Grid1D(1.0, 10)
    tr = NormalTriple.dirichlet(g)
    M = assemble_Mk(g, np.linspace(-2, 1, 10), nu=1.0, form="multiplication")
    assert h_operator_norm(M, tr) == pytest.approx(2.0)
