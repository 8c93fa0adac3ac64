"""Stationary propagator and the parabolic-to-stationary convergence study.

The stationary system is

    A u_alpha + sum_k sqrt(alpha_k) M_k u_{alpha - eps_k} = f_alpha,

solved level by level with one factorisation of ``A``.  A deterministic
``g <> W'`` term adds ``g h_k`` to ``f_{eps_k}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import sympy

from .chaos import ChaosExpansion
from .multiindex import MultiIndex, characteristic_set, enumerate_indices
from .parabolic import EvolutionProblem, StepperConfig, _Layout, solve_propagator
from .spatial import (
    Coefficient,
    Grid1D,
    NoiseBasis,
    NormalTriple,
    as_matrix,
    assemble_A,
    assemble_Mk,
    dissipativity_constant,
    estimate_Ck,
    inverse_norm,
    noise_basis_sine,
)
from .weights import WeightSystem, choose_q, kondratiev_constant, level_sums, weight, weighted_norm

__all__ = [
    "StationaryProblem",
    "StationarySolution",
    "ResidualError",
    "solve_stationary",
    "solve_stationary_exact",
    "coef_stat_oracle",
    "kondratiev_bound_check",
    "converge_to_stationary",
    "solve_elliptic_dirichlet",
    "stationary_level_ratios",
]


class ResidualError(RuntimeError):
    """A stationary coefficient failed the residual check."""


def _mi(a: Any) -> MultiIndex:
    return a if isinstance(a, MultiIndex) else MultiIndex.parse(a)


@dataclass
class StationaryProblem:
    """``A u + (M u) <> W' = f (+ g <> W')`` on a fixed discretisation.

    Parameters
    ----------
    A : operator
        Invertible ``m x m`` matrix.
    M : sequence of operators
        ``M_1..M_K``.
    f : array or mapping
        Deterministic grid vector or ``{alpha: f_alpha}``.
    max_order : int
        Chaos truncation ``N``; ``K = len(M)``.
    g : array, optional
        Deterministic ``g`` for the ``g <> W'`` forcing; requires ``noise``.
    noise : NoiseBasis or array, optional
    triple : NormalTriple, optional
        Defaults to the identity triple.
    """

    A: Any
    M: Sequence[Any]
    f: Any
    max_order: int
    g: Any = None
    noise: Any = None
    triple: NormalTriple | None = None

    def __post_init__(self):
        self.A = as_matrix(self.A)
        self.M = [as_matrix(Mk) for Mk in self.M]
        m = self.A.shape[0]
        if self.A.shape != (m, m):
            raise ValueError(f"A must be square, got {self.A.shape}")
        for k, Mk in enumerate(self.M, start=1):
            if Mk.shape != (m, m):
                raise ValueError(f"M_{k} has shape {Mk.shape}, expected {(m, m)}")
        if not self.M:
            raise ValueError("at least one noise operator is required")
        if self.max_order < 0:
            raise ValueError(f"max_order must be >= 0, got {self.max_order}")
        if self.g is not None and self.noise is None:
            raise ValueError("the g term needs the noise basis h_k")
        if self.triple is None:
            self.triple = NormalTriple.identity(m)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return len(self.M)

    def _noise(self) -> np.ndarray:
        return self.noise.values if isinstance(self.noise, NoiseBasis) else np.asarray(self.noise, dtype=float)

    def rhs(self) -> dict[MultiIndex, np.ndarray]:
        """``{alpha: f_alpha}`` including the ``g h_k`` terms."""
        out: dict[MultiIndex, np.ndarray] = {}
        if isinstance(self.f, (Mapping, ChaosExpansion)):
            for a, v in self.f.items():
                out[_mi(a)] = np.asarray(v, dtype=float).reshape(self.m).copy()
        elif self.f is not None:
            out[MultiIndex.zero()] = np.asarray(self.f, dtype=float).reshape(self.m).copy()
        if self.g is not None:
            g = np.asarray(self.g, dtype=float).reshape(self.m)
            h = self._noise()
            for k in range(1, self.K + 1):
                a = MultiIndex.unit(k)
                out[a] = out.get(a, np.zeros(self.m)) + g * h[k - 1]
        return out

    def is_deterministic(self) -> bool:
        return not isinstance(self.f, (Mapping, ChaosExpansion)) or set(map(_mi, self.f)) <= {MultiIndex.zero()}


@dataclass
class StationarySolution:
    """Coefficients ``u_alpha`` as columns of ``coefficients`` (shape ``(m, count)``)."""

    indices: list[MultiIndex]
    coefficients: np.ndarray
    residuals: np.ndarray
    triple: NormalTriple
    max_order: int
    max_dim: int
    C_k: list[float] | None = None
    C_A: float | None = None
    q: list[float] | None = None
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {a: i for i, a in enumerate(self.indices)}

    def coefficient(self, alpha: MultiIndex) -> np.ndarray:
        return self.coefficients[:, self._pos[alpha]]

    def as_expansion(self) -> ChaosExpansion:
        return ChaosExpansion(
            {a: self.coefficients[:, i] for i, a in enumerate(self.indices)},
            max_order=self.max_order,
            max_dim=self.max_dim,
        )

    def coefficient_norms(self, which: str = "V") -> dict[MultiIndex, float]:
        fn = {"V": self.triple.norms_V, "H": self.triple.norms_H}[which]
        vals = fn(self.coefficients)
        return {a: float(vals[i]) for i, a in enumerate(self.indices)}

    def weighted_norm(self, ws: WeightSystem, which: str = "V") -> float:
        return weighted_norm(self.coefficient_norms(which), ws, coeff_norm=float)

    def level_sums(self, q: Sequence[float] | None = None, which: str = "V") -> dict[int, float]:
        return level_sums(self.coefficient_norms(which), q, coeff_norm=float)


def solve_stationary(problem: StationaryProblem, residual_tol: float = 1e-10) -> StationarySolution:
    """Solve the stationary propagator over ``enumerate_indices(N, K)``.

    ``A`` is factorised once (sparse LU); each level is one batched
    back-substitution.  Every coefficient must satisfy
    ``||A u_alpha + sum_k sqrt(alpha_k) M_k u_{alpha - eps_k} - f_alpha|| <=
    residual_tol * scale`` where ``scale`` is the size of the terms involved.

    Raises
    ------
    ValueError
        If ``A`` is singular.
    ResidualError
        If the residual check fails.
    """
    N, K, m = problem.max_order, problem.K, problem.m
    layout = _Layout.build(N, K)
    try:
        lu = spla.splu(sp.csc_matrix(problem.A))
    except RuntimeError as exc:
        raise ValueError(f"A is singular: {exc}") from None
    pos = {a: i for i, a in enumerate(layout.indices)}
    F = np.zeros((m, len(layout.indices)))
    for a, v in problem.rhs().items():
        if a in pos:
            F[:, pos[a]] = v
    M_stack = sp.vstack(problem.M, format="csr")
    U = np.zeros_like(F)
    residuals = np.zeros(len(layout.indices))
    for lvl, sl in enumerate(layout.levels):
        c = layout.coupling(M_stack, U, lvl, K)
        rhs = F[:, sl] if c is None else F[:, sl] - c
        sol = lu.solve(np.ascontiguousarray(rhs))
        if not np.all(np.isfinite(sol)):
            raise ValueError("A is singular or badly conditioned: non-finite solution")
        U[:, sl] = sol
        res = problem.A @ sol - rhs
        scale = np.maximum(np.abs(rhs).max(axis=0), abs(problem.A).max() * np.abs(sol).max(axis=0))
        rel = np.abs(res).max(axis=0) / np.where(scale > 0, scale, 1.0)
        residuals[sl] = rel
    worst = float(residuals.max(initial=0.0))
    if worst > residual_tol:
        bad = layout.indices[int(np.argmax(residuals))]
        raise ResidualError(f"residual {worst:.3g} at {bad} exceeds {residual_tol:.3g}")
    return StationarySolution(layout.indices, U, residuals, problem.triple, N, K)


def solve_stationary_exact(problem: StationaryProblem) -> dict[MultiIndex, sympy.Matrix]:
    """Exact solve with rational matrices and exact ``sqrt(alpha_k)`` factors.

    Every entry of ``A``, ``M_k`` and the data is converted with
    ``sympy.nsimplify``; intended for small systems with integer or simple
    rational data such as ``u = 1 + u <> xi``.
    """
    def rat(x):
        return sympy.nsimplify(float(x), rational=True)

    A = sympy.Matrix(problem.A.toarray().tolist()).applyfunc(rat)
    Ms = [sympy.Matrix(Mk.toarray().tolist()).applyfunc(rat) for Mk in problem.M]
    Ainv = A.inv()
    rhs = {a: sympy.Matrix([rat(x) for x in v]) for a, v in problem.rhs().items()}
    zero = sympy.zeros(problem.m, 1)
    out: dict[MultiIndex, sympy.Matrix] = {}
    for a in enumerate_indices(problem.max_order, problem.K):
        r = rhs.get(a, zero)
        for k, v in a.items:
            r = r - sympy.sqrt(v) * Ms[k - 1] * out[a.sub_eps(k)]
        out[a] = (Ainv * r).applyfunc(sympy.simplify)
    return out


def coef_stat_oracle(alpha: MultiIndex, problem: StationaryProblem, max_order: int = 5) -> np.ndarray:
    """``u_alpha = (1/sqrt(alpha!)) sum_{sigma in P_n} B_{k_sigma(n)} ... B_{k_sigma(1)} u_(0)``.

    ``B_k = -A^{-1} M_k`` and ``u_(0) = A^{-1} f`` with dense solves.  With a
    ``g`` term the innermost factor gains ``A^{-1} g h_{k_sigma(1)}``.
    """
    if alpha.order > max_order:
        raise ValueError(f"|alpha| = {alpha.order} exceeds the oracle limit {max_order}")
    if not problem.is_deterministic():
        raise ValueError("the permutation-sum oracle needs deterministic f")
    if alpha.max_position > problem.K:
        raise ValueError(f"{alpha} uses a noise mode beyond K = {problem.K}")
    Ad = problem.A.toarray()
    f0 = problem.rhs().get(MultiIndex.zero(), np.zeros(problem.m))
    u0 = np.linalg.solve(Ad, f0)
    if alpha.is_zero():
        return u0
    B = [-np.linalg.solve(Ad, Mk.toarray()) for Mk in problem.M]
    gk = {}
    if problem.g is not None:
        h = problem._noise()
        g = np.asarray(problem.g, dtype=float).reshape(problem.m)
        gk = {k: np.linalg.solve(Ad, g * h[k - 1]) for k in range(1, problem.K + 1)}
    cache: dict[tuple[int, ...], np.ndarray] = {}

    def chain(ks: tuple[int, ...]) -> np.ndarray:
        if ks not in cache:
            if len(ks) == 1:
                cache[ks] = B[ks[0] - 1] @ u0 + gk.get(ks[0], 0.0)
            else:
                cache[ks] = B[ks[-1] - 1] @ chain(ks[:-1])
        return cache[ks]

    total = np.zeros(problem.m)
    for perm in itertools.permutations(characteristic_set(alpha)):
        total += chain(perm)
    return total / math.sqrt(alpha.factorial())


def stationary_level_ratios(
    sol: StationarySolution, q: Sequence[float], C: Sequence[float], reference: float
) -> dict[int, float]:
    """``S_n / (reference^2 n! (sum_k C_k^2 q_k^2)^n)`` for the ``V`` level sums."""
    theta = math.fsum((ck * qk) ** 2 for ck, qk in zip(C, q))
    out = {}
    for n, s in sol.level_sums(q, "V").items():
        denom = reference**2 * math.factorial(n) * theta**n
        out[n] = float(s / denom) if denom > 0 else (0.0 if s == 0 else math.inf)
    return out


def kondratiev_bound_check(problem: StationaryProblem, ell: float, rescale: bool = True) -> dict[str, Any]:
    """Check ``||u||_{(S)_{-1,-ell-4}(V)} <= C(ell) ||f||_{(S)_{-1,-ell}(V')}`` at truncation.

    The operators are first rescaled so that the measured ``C_A`` and
    ``C_k`` are at most one: ``A -> s_A A`` with ``s_A = max(1, C_A)`` and
    ``M_k -> M_k s_A / max(1, C_k)``.  ``C(ell)`` is the truncated constant
    from :func:`~chaosprop.weights.kondratiev_constant`.  For chaos-valued
    ``f`` the right side carries the Cauchy-Schwarz factor
    ``(sum_{gamma in supp f} (2N)^{-4 gamma})^{1/2}``, which equals one for
    deterministic ``f``.
    """
    triple = problem.triple
    C_A = inverse_norm(problem.A, triple)
    C_k = [estimate_Ck(problem.A, Mk, triple, "elliptic") for Mk in problem.M]
    scale_A = max(1.0, C_A) if rescale else 1.0
    scale_M = [scale_A / max(1.0, ck) if rescale else 1.0 for ck in C_k]
    scaled = StationaryProblem(
        A=problem.A * scale_A,
        M=[Mk * s for Mk, s in zip(problem.M, scale_M)],
        f=problem.f,
        max_order=problem.max_order,
        g=problem.g,
        noise=problem.noise,
        triple=triple,
    )
    sol = solve_stationary(scaled)
    C_A_scaled = C_A / scale_A
    C_k_scaled = [ck * s / scale_A for ck, s in zip(C_k, scale_M)]
    lhs_ws = WeightSystem.kondratiev(-1.0, -ell - 4.0)
    rhs_ws = WeightSystem.kondratiev(-1.0, -ell)
    lhs = sol.weighted_norm(lhs_ws, "V")
    f_norms = {a: triple.norm_Vdual(v) for a, v in scaled.rhs().items()}
    f_norm = weighted_norm(f_norms, rhs_ws, coeff_norm=float)
    support = [a for a, v in f_norms.items() if v > 0]
    cs = math.sqrt(math.fsum(a.power_2N(-4.0) for a in support)) if support else 1.0
    C_ell = kondratiev_constant(ell, problem.max_order, problem.K)
    rhs = C_ell * cs * f_norm
    return {
        "lhs": lhs,
        "rhs": rhs,
        "C_ell": C_ell,
        "cauchy_schwarz": cs,
        "f_norm": f_norm,
        "C_A": C_A,
        "C_k": C_k,
        "scale_A": scale_A,
        "scale_M": scale_M,
        "C_A_scaled": C_A_scaled,
        "C_k_scaled": C_k_scaled,
        "holds": lhs <= rhs * (1 + 1e-12),
    }


def converge_to_stationary(
    ep: EvolutionProblem,
    f_star: Any,
    weight_systems: Sequence[WeightSystem],
    g_star: Any = None,
    sp_problem: StationaryProblem | None = None,
    kappa: float = 0.0,
    require_bounded: bool = True,
) -> dict[str, Any]:
    """Distance ``||u(t) - u*||`` in weighted ``H`` norms at the stored times of ``ep``.

    The stationary problem paired with ``u' = A u + f + (M u) <> W' + g <> W'``
    is ``(-A) u* + (-M u*) <> W' = f* + g* <> W'``; it is built from ``ep``
    unless ``sp_problem`` is supplied.  ``A`` must be dissipative
    (``<A v, v> + kappa ||v||_V^2 <= -c ||v||_H^2`` with measured ``c > 0``)
    and, with ``require_bounded``, every ``M_k`` must be a multiplication
    (diagonal) operator.

    Returns
    -------
    dict
        ``c``, ``times``, ``distances`` (``{weight name: list}``),
        ``posthoc`` (distances under the solution-dependent weights
        ``(2N)^{-alpha} / (1 + sup_t ||u_alpha(t) - u*_alpha||_H)``), and the
        two solutions.
    """
    triple = ep.triple
    c = dissipativity_constant(ep.A, triple, kappa)
    if not c > 0:
        raise ValueError(f"A is not dissipative: measured c = {c:.6g} <= 0")
    if require_bounded:
        for k, Mk in enumerate(ep.M, start=1):
            off = Mk - sp.diags(Mk.diagonal())
            if off.nnz and np.any(off.data):
                raise ValueError(f"M_{k} is not a multiplication operator; convergence theory needs M_k bounded on H")
    if sp_problem is None:
        sp_problem = StationaryProblem(
            A=-ep.A,
            M=[-Mk for Mk in ep.M],
            f=f_star,
            max_order=ep.max_order,
            g=g_star,
            noise=ep.noise if g_star is not None else None,
            triple=triple,
        )
    stat = solve_stationary(sp_problem)
    evo = solve_propagator(ep)
    ustar = stat.coefficients
    dist_H = np.stack([triple.norms_H(evo.snapshots[i] - ustar) for i in range(len(evo.times))])
    distances = {}
    for ws in weight_systems:
        w2 = np.array([weight(ws, a) ** 2 for a in evo.indices])
        distances[ws.name] = [float(math.sqrt(math.fsum(w2 * d**2))) for d in dist_H]
    sup = dist_H.max(axis=0)
    post = WeightSystem.posthoc({a: float(sup[i]) for i, a in enumerate(evo.indices)}, kappa=1.0)
    w2 = np.array([weight(post, a) ** 2 for a in evo.indices])
    posthoc = [float(math.sqrt(math.fsum(w2 * d**2))) for d in dist_H]
    return {
        "c": c,
        "times": [float(t) for t in evo.times],
        "distances": distances,
        "posthoc": posthoc,
        "evolution": evo,
        "stationary": stat,
    }


def solve_elliptic_dirichlet(
    grid: Grid1D,
    a: Any,
    sigma: Any,
    f: Any,
    K: int,
    max_order: int,
    theta: float = 0.5,
    noise: NoiseBasis | None = None,
    ellipticity: float = 0.0,
) -> tuple[StationarySolution, dict[str, Any]]:
    """Solve ``-(a u')' + h_k (sigma u')' <> xi_k = f`` with zero boundary values.

    ``A = -(a u')'`` and ``M_k = h_k (sigma u')'`` are assembled in divergence
    form, ``C_k = ||A^{-1} M_k||_{V -> V}`` is estimated, ``q = choose_q(C, theta)``
    and the weighted ``V`` norm with ``r_alpha = q^alpha / sqrt(|alpha|!)`` is
    reported together with its ratio to ``||f||_{V'}``.
    """
    noise = noise_basis_sine(grid, K) if noise is None else noise
    A = -assemble_A(grid, a=a, form="divergence", ellipticity=ellipticity)
    M = [assemble_Mk(grid, noise[k], sigma=sigma, form="divergence") for k in range(1, K + 1)]
    triple = NormalTriple.dirichlet(grid)
    f_vec = f(grid.x) if callable(f) else np.broadcast_to(np.asarray(f, dtype=float), (grid.m,))
    prob = StationaryProblem(A, M, np.array(f_vec, dtype=float), max_order, triple=triple)
    sol = solve_stationary(prob)
    C = [estimate_Ck(A, Mk, triple, "elliptic") for Mk in M]
    q = choose_q(C, theta)
    ws = WeightSystem.propagator(q, name="propagator")
    C_A = inverse_norm(A, triple)
    sol.C_k, sol.C_A, sol.q = C, C_A, q
    wn = sol.weighted_norm(ws, "V")
    f_dual = triple.norm_Vdual(f_vec)
    level_norms = {n: math.sqrt(s) for n, s in sol.level_sums(None, "V").items()}
    report = {
        "C_k": C,
        "C_A": C_A,
        "q": q,
        "weighted_norm": wn,
        "f_dual_norm": f_dual,
        "ratio": wn / f_dual if f_dual > 0 else 0.0,
        "level_norms": level_norms,
        "level_ratios": stationary_level_ratios(sol, q, C, C_A * f_dual),
    }
    return sol, report
