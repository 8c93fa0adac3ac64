import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from chaosprop.multiindex import MultiIndex
from chaosprop.parabolic import (
    EvolutionOracle,
    EvolutionProblem,
    PropagatorBlowUp,
    StepperConfig,
    _series_ratio,
    coef_evol_oracle,
    evol_sp_bound_check,
    example1_closed_form,
    example3_analysis,
    example3_monte_carlo,
    example3_second_moment,
    level_bound_ratios,
    solve_propagator,
)
from chaosprop.spatial import (
    Coefficient,
    Grid1D,
    NormalTriple,
    assemble_A,
    assemble_Mk,
    estimate_Ck,
    noise_basis_sine,
)
from chaosprop.weights import choose_q

Z = MultiIndex.zero()


def E(k, n=1):
    return MultiIndex.unit(k, n)


def small_problem(m=16, K=2, N=2, n_steps=100, g=None, f=None, u0=None, **kw):
    grid = Grid1D(1.0, m)
    a = Coefficient.make("linear", 1.0, a0=1.0, a1=0.5)
    A = assemble_A(grid, a=a, b=0.2)
    noise = noise_basis_sine(grid, K)
    M = [assemble_Mk(grid, noise[k], sigma=0.05, nu=1.0) for k in range(1, K + 1)]
    u0 = np.sin(np.pi * grid.x) if u0 is None else u0
    return grid, EvolutionProblem(
        A, M, 1.0, N, u0=u0, f=f, g=g, noise=noise,
        triple=NormalTriple.dirichlet(grid), stepper=StepperConfig(n_steps=n_steps, **kw),
    )


# -- configuration ------------------------------------------------------------------


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(method="rk4")
    with pytest.raises(ValueError):
        StepperConfig(n_steps=10, n_store=3)
    assert StepperConfig(n_steps=40, richardson=4).total_steps == 40 * 31


def test_problem_validation():
    with pytest.raises(ValueError):
        EvolutionProblem([[-1.0]], [[[1.0]]], 0.0, 2)
    with pytest.raises(ValueError):
        EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, -1)
    with pytest.raises(ValueError):
        EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, 2, g=[1.0])
    with pytest.raises(ValueError):
        EvolutionProblem(np.eye(2), [np.eye(3)], 1.0, 2)


# -- solver examples -----------------------------------------------------------------


def test_zero_data_gives_zero():
    _, p = small_problem(u0=np.zeros(16))
    sol = solve_propagator(p)
    assert not np.any(sol.snapshots)


def test_example1_level_two():
    p = EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, 4, u0=[1.0], stepper=StepperConfig(n_steps=40, richardson=4))
    sol = solve_propagator(p)
    exact = math.exp(-1) / math.sqrt(2)
    assert exact == pytest.approx(0.26013, abs=1e-5)
    assert sol.coefficient(E(1, 2))[0] == pytest.approx(exact, rel=1e-6)
    for n in range(5):
        got = sol.coefficient(E(1, n) if n else Z)[0]
        assert got == pytest.approx(example1_closed_form(n, 1.0), rel=1e-6)


def test_example1_crank_nicolson():
    p = EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, 3, u0=[1.0],
                         stepper=StepperConfig("crank_nicolson", n_steps=50, richardson=2))
    sol = solve_propagator(p)
    for n in range(4):
        assert sol.coefficient(E(1, n) if n else Z)[0] == pytest.approx(example1_closed_form(n, 1.0), rel=1e-7)


def test_no_noise_only_mean():
    grid = Grid1D(1.0, 10)
    p = EvolutionProblem(assemble_A(grid), [np.zeros((10, 10))] * 2, 1.0, 3,
                         u0=np.sin(np.pi * grid.x), f=np.ones(10))
    sol = solve_propagator(p)
    for i, a in enumerate(sol.indices):
        if not a.is_zero():
            assert not np.any(sol.snapshots[:, :, i])


def test_mean_dynamics_is_deterministic_solution():
    grid, p = small_problem(f=lambda t: np.cos(t) * np.ones(16), n_steps=50)
    sol = solve_propagator(p)
    det = EvolutionProblem(p.A, [np.zeros((16, 16))], p.T, 0, u0=p.u0, f=p.f, stepper=p.stepper)
    np.testing.assert_array_equal(solve_propagator(det).coefficient(Z), sol.coefficient(Z))


def test_matches_manual_implicit_euler():
    # hand-written implicit Euler for the triangular system up to level two
    grid, p = small_problem(n_steps=20, g=0.3 * np.ones(16), f=np.ones(16))
    sol = solve_propagator(p)
    A = p.A.toarray()
    M = [Mk.toarray() for Mk in p.M]
    h = p.noise.values
    dt = 1.0 / 20
    P = np.linalg.inv(np.eye(16) - dt * A)
    u = {a: np.zeros(16) for a in sol.indices}
    u[Z] = np.array(p.u0, dtype=float)
    for _ in range(20):
        new = {}
        new[Z] = P @ (u[Z] + dt * np.ones(16))
        for k in (1, 2):
            new[E(k)] = P @ (u[E(k)] + dt * (M[k - 1] @ new[Z] + 0.3 * h[k - 1]))
        new[E(1, 2)] = P @ (u[E(1, 2)] + dt * math.sqrt(2) * M[0] @ new[E(1)])
        new[E(2, 2)] = P @ (u[E(2, 2)] + dt * math.sqrt(2) * M[1] @ new[E(2)])
        new[E(1) + E(2)] = P @ (u[E(1) + E(2)] + dt * (M[0] @ new[E(2)] + M[1] @ new[E(1)]))
        u = new
    for a in sol.indices:
        np.testing.assert_allclose(sol.coefficient(a), u[a], rtol=1e-12, atol=1e-14)


def test_random_initial_condition():
    # u0 = v xi_1 with no noise coupling evolves v deterministically in the eps_1 slot
    grid = Grid1D(1.0, 12)
    A = assemble_A(grid)
    v = np.sin(2 * np.pi * grid.x)
    p = EvolutionProblem(A, [np.zeros((12, 12))], 0.5, 1, u0={E(1): v})
    ref = EvolutionProblem(A, [np.zeros((12, 12))], 0.5, 0, u0=v)
    np.testing.assert_allclose(solve_propagator(p).coefficient(E(1)), solve_propagator(ref).coefficient(Z), rtol=1e-14)
    assert not np.any(solve_propagator(p).coefficient(Z))


def test_chaos_valued_forcing():
    p = EvolutionProblem([[-1.0]], [[[0.0]]], 1.0, 1, f={E(1): [2.0]},
                         stepper=StepperConfig(n_steps=40, richardson=4))
    # u_eps1' = -u + 2, u(0) = 0
    assert solve_propagator(p).coefficient(E(1))[0] == pytest.approx(2 * (1 - math.exp(-1)), rel=1e-7)


def test_blowup_guard():
    p = EvolutionProblem([[-1.0]], [[[1e200]]], 1.0, 3, u0=[1.0], stepper=StepperConfig(n_steps=10))
    with pytest.raises(PropagatorBlowUp) as info:
        solve_propagator(p)
    assert info.value.alpha.order >= 2
    assert "alpha" in str(info.value) or info.value.alpha.label() in str(info.value)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_linearity_in_data(seed, s, r):
    rng = np.random.default_rng(seed)
    grid, _ = small_problem(m=8)
    data = [(rng.standard_normal(8), rng.standard_normal(8), rng.standard_normal(8)) for _ in range(2)]

    def run(u0, f, g):
        return solve_propagator(small_problem(m=8, n_steps=10, u0=u0, f=f, g=g)[1]).snapshots

    (u1, f1, g1), (u2, f2, g2) = data
    combo = run(s * u1 + r * u2, s * f1 + r * f2, s * g1 + r * g2)
    lin = s * run(u1, f1, g1) + r * run(u2, f2, g2)
    np.testing.assert_allclose(combo, lin, atol=1e-12 * max(1.0, np.abs(lin).max()))


# -- oracle -----------------------------------------------------------------------------


def test_oracle_level_one_matches_solver():
    _, p = small_problem(n_steps=200, richardson=2, n_store=4)
    sol = solve_propagator(p)
    orc = EvolutionOracle(p, 800)
    for a in sol.indices:
        ref = orc.coefficient(a)[::200]
        err = np.abs(sol.snapshots[:, :, sol._pos[a]] - ref).max() / np.abs(ref).max()
        assert err < 1e-4, a


def test_oracle_two_distinct_indices():
    # u_{eps_i + eps_j} = int Phi (M_i u_{eps_j} + M_j u_{eps_i}) ds
    _, p = small_problem(n_steps=100)
    orc = EvolutionOracle(p, 400)
    u1, u2 = orc.coefficient(E(1)), orc.coefficient(E(2))
    M = [Mk.toarray() for Mk in p.M]
    F = u2 @ M[0].T + u1 @ M[1].T
    explicit = orc._integrate(F, np.zeros(p.m))
    np.testing.assert_allclose(orc.coefficient(E(1) + E(2)), explicit, rtol=1e-12, atol=1e-15)


def test_oracle_zero_mean_gives_zero():
    _, p = small_problem(u0=np.zeros(16))
    for a in (E(1), E(1, 2), E(1) + E(2)):
        assert not np.any(coef_evol_oracle(a, p, 50))


def test_oracle_limits():
    _, p = small_problem(N=5)
    orc = EvolutionOracle(p, 10)
    with pytest.raises(ValueError):
        orc.coefficient(E(1, 5))
    with pytest.raises(ValueError):
        orc.coefficient(E(3))


def test_oracle_example1():
    p = EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, 4, u0=[1.0])
    orc = EvolutionOracle(p, 400)
    for n in range(1, 5):
        assert orc.coefficient(E(1, n))[-1, 0] == pytest.approx(example1_closed_form(n, 1.0), rel=1e-5)


# -- example with a derivative in the noise -------------------------------------------------


def test_second_moment_reduction_symbolic():
    # E|u0hat e^{-a y^2 t} exp(b t xi - b^2 t^2 / 2)|^2 with b = beta + i sigma y
    xi, y, t, a, beta, sigma = sympy.symbols("xi y t a beta sigma", real=True)
    b = beta + sympy.I * sigma * y
    z = sympy.exp(-a * y**2 * t) * sympy.exp(b * t * xi - b**2 * t**2 / 2)
    sq = sympy.simplify(sympy.expand(z * sympy.conjugate(z)))
    dens = sympy.exp(-(xi**2) / 2) / sympy.sqrt(2 * sympy.pi)
    moment = sympy.simplify(sympy.integrate(sq * dens, (xi, -sympy.oo, sympy.oo)))
    target = sympy.exp(-2 * t * a * y**2 + sigma**2 * y**2 * t**2 + beta**2 * t**2)
    assert sympy.simplify(moment / target) == 1


def test_series_ratio_matches_wick_exponential():
    rng = np.random.default_rng(0)
    xi = rng.standard_normal(20)
    b = 0.3 + 1j * rng.normal(size=20)
    t = 0.4
    exact = np.exp(b * t * xi - b**2 * t**2 / 2)
    np.testing.assert_allclose(_series_ratio(b, t, xi, 80), exact, rtol=1e-12)


def test_example3_t_zero_and_heat_decay():
    assert example3_analysis(1.0, 0.0, 2.0, 0.0)["norm"] == pytest.approx(math.sqrt(math.pi) / (2 * math.pi))
    for t in (0.5, 3.0, 50.0):
        r = example3_analysis(0.7, 0.0, 0.0, t)
        assert r["finite"]
        assert r["norm"] == pytest.approx(math.sqrt(math.pi / (1 + 1.4 * t)) / (2 * math.pi), rel=1e-14)


def test_example3_threshold():
    assert example3_analysis(1.0, 0.0, 2.0, 0.49)["finite"]
    r = example3_analysis(1.0, 0.0, 2.0, 0.51)
    assert not r["finite"] and r["norm"] == math.inf
    assert r["threshold"] == 0.5


def test_example3_quadrature_matches_closed_form():
    for beta, sigma, t in ((0.0, 2.0, 0.3), (0.5, 1.0, 0.8), (1.0, 0.0, 2.0)):
        closed = example3_second_moment(1.0, beta, sigma, t)
        quad = example3_second_moment(1.0, beta, sigma, t, u0hat=lambda y: math.exp(-y * y / 2))
        assert quad == pytest.approx(closed, rel=1e-8)


def test_example3_divergent_integral():
    assert example3_second_moment(1.0, 0.0, 2.0, 1.5) == math.inf
    assert example3_second_moment(1.0, 0.0, 2.0, 1.5, u0hat=lambda y: math.exp(-y * y / 2)) == math.inf
    with pytest.raises(ValueError):
        example3_analysis(0.0, 0.0, 1.0, 0.1)


@pytest.mark.parametrize("beta", [0.0, 0.7])
def test_example3_monte_carlo_small(beta):
    quad = example3_analysis(1.0, beta, 2.0, 0.3)["norm"]
    mc, se = example3_monte_carlo(1.0, beta, 2.0, 0.3, 20_000, np.random.default_rng(5))
    assert abs(mc - quad) <= 4 * se


# -- bounded-operator bound -------------------------------------------------------------------


def test_bound_zero_noise():
    grid = Grid1D(math.pi, 10)
    p = EvolutionProblem(assemble_A(grid), [np.zeros((10, 10))] * 2, 1.0, 3, u0=np.sin(grid.x),
                         triple=NormalTriple.dirichlet(grid), stepper=StepperConfig(n_steps=20))
    rep = evol_sp_bound_check(p, c=[0.0, 0.0])
    assert rep["holds"] and rep["max_ratio"] == 0.0


def test_bound_saturated_scalar():
    # M_k u = c_k u attains the bound, so the ratio is one up to stepper error;
    # plain implicit Euler overshoots at early times, extrapolation removes it
    c = [1.0, 0.5, 0.25]
    p = EvolutionProblem([[-1.0]], [[[ck]] for ck in c], 1.0, 6, u0=[1.0],
                         stepper=StepperConfig(n_steps=50, richardson=3, n_store=5))
    rep = evol_sp_bound_check(p, c=c)
    assert rep["max_ratio"] == pytest.approx(1.0, abs=1e-3)
    raw = EvolutionProblem([[-1.0]], [[[ck]] for ck in c], 1.0, 6, u0=[1.0],
                           stepper=StepperConfig(n_steps=400, n_store=5))
    assert evol_sp_bound_check(raw, c=c)["max_ratio"] > 1.0


def test_bound_closing_identity():
    c = [2.0 ** -(k - 1) for k in range(1, 7)]
    p = EvolutionProblem([[-1.0]], [[[ck]] for ck in c], 1.0, 10, u0=[1.0], stepper=StepperConfig(n_steps=5))
    rep = evol_sp_bound_check(p, c=c)
    assert rep["C_M"] == pytest.approx(4 / 3 * (1 - 4.0**-6))
    assert rep["closed_form"] == pytest.approx(3.7937, abs=2e-3)
    assert rep["identity_error"] < 1e-3


def test_bound_rejects_small_c_and_g():
    p = EvolutionProblem([[-1.0]], [[[2.0]]], 1.0, 2, u0=[1.0])
    with pytest.raises(ValueError):
        evol_sp_bound_check(p, c=[1.0])
    q = EvolutionProblem([[-1.0]], [[[1.0]]], 1.0, 2, u0=[1.0], g=[1.0], noise=[[1.0]])
    with pytest.raises(ValueError):
        evol_sp_bound_check(q)


# -- level bounds ----------------------------------------------------------------------------


def test_level_bound_ratios_below_one():
    grid, p = small_problem(m=24, K=3, N=4, n_steps=60)
    sol = solve_propagator(p)
    C = [estimate_Ck(p.A, Mk, p.triple, "parabolic", T=p.T, n_steps=60) for Mk in p.M]
    q = choose_q(C, 0.5)
    ratios = level_bound_ratios(sol, q, C, float(sol.v_norms[0]))
    assert ratios[0] == pytest.approx(1.0)
    assert all(r <= 1.0 for r in ratios.values())
    assert list(ratios) == [0, 1, 2, 3, 4]
