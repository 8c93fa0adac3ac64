"""Evolution propagator: solver, permutation-sum oracle and closed-form checks.

The propagator for ``u' = A u + f + (M u) <> W' `` with ``M u <> W' = sum_k
(M_k u) <> xi_k`` is the lower-triangular system

    u_alpha' = A u_alpha + f_alpha + sum_k sqrt(alpha_k) M_k u_{alpha - eps_k},

    u_alpha(0) = u_{0, alpha}.

A deterministic ``g <> W'`` term adds ``g h_k`` to the equation for
``alpha = eps_k``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy.integrate as sint
import scipy.linalg as sla
import scipy.sparse as sp

from .chaos import ChaosExpansion
from .multiindex import MultiIndex, characteristic_set, enumerate_indices
from .spatial import NoiseBasis, NormalTriple, Stepper, as_matrix, h_operator_norm, semigroup_growth
from .weights import WeightSystem, level_sums, weighted_norm

__all__ = [
    "StepperConfig",
    "EvolutionProblem",
    "EvolutionSolution",
    "PropagatorBlowUp",
    "solve_propagator",
    "coef_evol_oracle",
    "EvolutionOracle",
    "exponential_integrator",
    "example1_closed_form",
    "example3_analysis",
    "example3_second_moment",
    "example3_monte_carlo",
    "evol_sp_bound_check",
    "level_bound_ratios",
]

BLOWUP_GUARD = 1e300


class PropagatorBlowUp(RuntimeError):
    """Raised when a coefficient leaves the finite range during time stepping."""

    def __init__(self, alpha: MultiIndex, t: float, value: float):
        super().__init__(f"coefficient {alpha} reached |u| = {value:.3g} at t = {t:.6g}; stepper unstable")
        self.alpha = alpha
        self.t = t
        self.value = value


@dataclass(frozen=True)
class StepperConfig:
    """Time stepping controls.

    Parameters
    ----------
    method : {"implicit_euler", "crank_nicolson"}
    n_steps : int
        Steps on the coarsest Richardson level.
    richardson : int
        Number of extrapolation levels; ``0`` disables extrapolation.  Level
        ``j`` uses ``n_steps * 2**j`` steps.
    n_store : int
        Number of uniform snapshot intervals; snapshots are kept at
        ``i T / n_store``, ``i = 0..n_store``.  Must divide ``n_steps``.
    """

    method: str = "implicit_euler"
    n_steps: int = 200
    richardson: int = 0
    n_store: int = 1

    def __post_init__(self):
        if self.method not in Stepper.METHODS:
            raise ValueError(f"unknown stepper {self.method!r}; expected one of {Stepper.METHODS}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.richardson < 0:
            raise ValueError(f"richardson must be >= 0, got {self.richardson}")
        if self.n_store < 1 or self.n_steps % self.n_store:
            raise ValueError(f"n_store={self.n_store} must be >= 1 and divide n_steps={self.n_steps}")

    @property
    def total_steps(self) -> int:
        return sum(self.n_steps * 2**j for j in range(self.richardson + 1))


def _as_time_function(value: Any, m: int) -> Callable[[float], np.ndarray] | None:
    if value is None:
        return None
    if callable(value):
        return lambda t: np.asarray(value(t), dtype=float).reshape(m)
    arr = np.asarray(value, dtype=float).reshape(m)
    return lambda t: arr


@dataclass
class EvolutionProblem:
    """Data of the evolution problem on a fixed spatial discretisation.

    Parameters
    ----------
    A : operator
        ``m x m`` generator.
    M : sequence of operators
        ``M_1..M_K``; ``K = len(M)`` is the number of noise modes kept.
    T : float
        Horizon.
    max_order : int
        Chaos truncation ``N``.
    u0 : array or mapping, optional
        Deterministic grid vector, or ``{alpha: vector}`` for random data.
    f : array, callable or mapping, optional
        Forcing ``f(t)``; a mapping gives chaos-valued forcing ``{alpha: f_alpha}``.
    g : array or callable, optional
        Deterministic function for the ``g <> W'`` term; requires ``noise``.
    noise : NoiseBasis or array, optional
        ``h_k`` on the grid, shape ``(K, m)``.
    triple : NormalTriple, optional
        Norms; defaults to the identity triple.
    stepper : StepperConfig
    """

    A: Any
    M: Sequence[Any]
    T: float
    max_order: int
    u0: Any = None
    f: Any = None
    g: Any = None
    noise: Any = None
    triple: NormalTriple | None = None
    stepper: StepperConfig = field(default_factory=StepperConfig)

    def __post_init__(self):
        self.A = as_matrix(self.A)
        self.M = [as_matrix(Mk) for Mk in self.M]
        m = self.A.shape[0]
        if self.A.shape != (m, m):
            raise ValueError(f"A must be square, got {self.A.shape}")
        for k, Mk in enumerate(self.M, start=1):
            if Mk.shape != (m, m):
                raise ValueError(f"M_{k} has shape {Mk.shape}, expected {(m, m)}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.max_order < 0:
            raise ValueError(f"max_order must be >= 0, got {self.max_order}")
        if not self.M:
            raise ValueError("at least one noise operator is required (use a zero matrix for none)")
        if self.g is not None:
            if self.noise is None:
                raise ValueError("the g term needs the noise basis h_k")
            h = self.noise.values if isinstance(self.noise, NoiseBasis) else np.asarray(self.noise, dtype=float)
            if h.shape[0] < self.K or h.shape[1] != m:
                raise ValueError(f"noise basis has shape {h.shape}, need at least ({self.K}, {m})")
        if self.triple is None:
            self.triple = NormalTriple.identity(m)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return len(self.M)

    def initial_condition(self) -> dict[MultiIndex, np.ndarray]:
        return _chaos_data(self.u0, self.m)

    def forcing_terms(self) -> dict[MultiIndex, Callable[[float], np.ndarray]]:
        """``{alpha: t -> f_alpha(t)}`` including the ``g h_k`` contributions."""
        out: dict[MultiIndex, list[Callable[[float], np.ndarray]]] = {}
        if isinstance(self.f, (Mapping, ChaosExpansion)):
            for a, fa in self.f.items():
                out.setdefault(_mi(a), []).append(_as_time_function(fa, self.m))
        elif self.f is not None:
            out.setdefault(MultiIndex.zero(), []).append(_as_time_function(self.f, self.m))
        if self.g is not None:
            h = self.noise.values if isinstance(self.noise, NoiseBasis) else np.asarray(self.noise, dtype=float)
            g = _as_time_function(self.g, self.m)
            for k in range(1, self.K + 1):
                hk = h[k - 1]
                out.setdefault(MultiIndex.unit(k), []).append(lambda t, hk=hk: g(t) * hk)
        merged = {}
        for a, fns in out.items():
            merged[a] = fns[0] if len(fns) == 1 else (lambda t, fns=fns: sum(fn(t) for fn in fns))
        return merged

    def is_deterministic(self) -> bool:
        u0_ok = not isinstance(self.u0, (Mapping, ChaosExpansion)) or set(map(_mi, self.u0)) <= {MultiIndex.zero()}
        f_ok = not isinstance(self.f, (Mapping, ChaosExpansion)) or set(map(_mi, self.f)) <= {MultiIndex.zero()}
        return u0_ok and f_ok


def _mi(a: Any) -> MultiIndex:
    return a if isinstance(a, MultiIndex) else MultiIndex.parse(a)


def _chaos_data(value: Any, m: int) -> dict[MultiIndex, np.ndarray]:
    if value is None:
        return {}
    if isinstance(value, (Mapping, ChaosExpansion)):
        return {_mi(a): np.asarray(v, dtype=float).reshape(m) for a, v in value.items()}
    return {MultiIndex.zero(): np.asarray(value, dtype=float).reshape(m)}


@dataclass
class _Layout:
    """Column layout of the coefficient array and the coupling between levels.

    For level ``n >= 1``, ``gather[n]`` is the sparse ``(size_n, K size_{n-1})``
    matrix with entry ``sqrt(alpha_k)`` at ``(alpha, (k - 1) size_{n-1} + beta)``
    when ``beta = alpha - eps_k``.  Stacking ``Y = [M_1 U_{n-1}, ..., M_K U_{n-1}]``
    column-blockwise, the coupling of level ``n`` is ``Y gather[n]^T``.
    """

    indices: list[MultiIndex]
    levels: list[slice]
    gather: list[sp.csr_matrix | None]

    @classmethod
    def build(cls, N: int, K: int) -> "_Layout":
        indices = enumerate_indices(N, K)
        pos = {a: i for i, a in enumerate(indices)}
        levels, start = [], 0
        for n in range(N + 1):
            size = math.comb(n + K - 1, K - 1)
            levels.append(slice(start, start + size))
            start += size
        gather: list[sp.csr_matrix | None] = [None]
        for n in range(1, N + 1):
            sl, prev = levels[n], levels[n - 1]
            n_prev = prev.stop - prev.start
            rows, cols, vals = [], [], []
            for j in range(sl.start, sl.stop):
                a = indices[j]
                for k, v in a.items:
                    rows.append(j - sl.start)
                    cols.append((k - 1) * n_prev + pos[a.sub_eps(k)] - prev.start)
                    vals.append(math.sqrt(v))
            gather.append(sp.csr_matrix((vals, (rows, cols)), shape=(sl.stop - sl.start, K * n_prev)))
        return cls(indices, levels, gather)

    def coupling(self, M_stack: Any, U: np.ndarray, lvl: int, K: int) -> np.ndarray | None:
        """``sum_k sqrt(alpha_k) M_k u_{alpha - eps_k}`` for every ``alpha`` in level ``lvl``."""
        G = self.gather[lvl]
        if G is None:
            return None
        prev = self.levels[lvl - 1]
        m = U.shape[0]
        with np.errstate(over="ignore", invalid="ignore"):  # the blow-up guard reports it
            Y = M_stack @ U[:, prev]  # (K m, n_prev)
        n_prev = Y.shape[1]
        Yt = Y.reshape(K, m, n_prev).transpose(0, 2, 1).reshape(K * n_prev, m)
        return (G @ Yt).T


@dataclass
class EvolutionSolution:
    """Coefficients ``u_alpha`` at stored times plus norms along the run.

    Attributes
    ----------
    indices : list of MultiIndex
        Column order of ``snapshots``.
    times : ndarray
        Stored times ``i T / n_store``.
    snapshots : ndarray, shape (n_store + 1, m, count)
    v_norms : ndarray
        ``(sum_j dt ||u_alpha(t_j)||_V^2)^{1/2}``, right-endpoint sums.
    h_norms_T : ndarray
        ``||u_alpha(T)||_H``.
    h_sup : ndarray
        ``max_j ||u_alpha(t_j)||_H``.
    h0_history : ndarray
        ``||u_(0)(t_j)||_H`` at every step ``j = 0..n``.
    dt : float
        Step of the run the norms come from (the finest one).
    """

    indices: list[MultiIndex]
    times: np.ndarray
    snapshots: np.ndarray
    v_norms: np.ndarray
    h_norms_T: np.ndarray
    h_sup: np.ndarray
    h0_history: np.ndarray
    dt: float
    method: str
    richardson: int
    max_order: int
    max_dim: int
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {a: i for i, a in enumerate(self.indices)}

    def coefficient(self, alpha: MultiIndex, time_index: int = -1) -> np.ndarray:
        return self.snapshots[time_index, :, self._pos[alpha]]

    def final(self) -> dict[MultiIndex, np.ndarray]:
        return {a: self.snapshots[-1, :, i] for i, a in enumerate(self.indices)}

    def as_expansion(self, time_index: int = -1) -> ChaosExpansion:
        return ChaosExpansion(
            {a: self.snapshots[time_index, :, i] for i, a in enumerate(self.indices)},
            max_order=self.max_order,
            max_dim=self.max_dim,
        )

    def coefficient_norms(self, which: str = "V") -> dict[MultiIndex, float]:
        arr = {"V": self.v_norms, "H_T": self.h_norms_T, "H_sup": self.h_sup}[which]
        return {a: float(arr[i]) for i, a in enumerate(self.indices)}

    def weighted_norm(self, ws: WeightSystem, which: str = "V") -> float:
        return weighted_norm(self.coefficient_norms(which), ws, coeff_norm=float)

    def level_sums(self, q: Sequence[float] | None = None, which: str = "V") -> dict[int, float]:
        return level_sums(self.coefficient_norms(which), q, coeff_norm=float)


def _run(problem: EvolutionProblem, layout: _Layout, n_steps: int, method: str, n_store: int):
    """One time-major sweep with ``n_steps`` steps.  Returns snapshots and norms."""
    m = problem.m
    count = len(layout.indices)
    T = problem.T
    dt = T / n_steps
    st = Stepper(problem.A, dt, method)
    triple = problem.triple
    M = problem.M
    pos = {a: i for i, a in enumerate(layout.indices)}
    forcing = [(pos[a], fn) for a, fn in problem.forcing_terms().items() if a in pos]

    U = np.zeros((m, count))
    for a, v in problem.initial_condition().items():
        if a.order <= problem.max_order and a.max_position <= problem.K:
            U[:, pos[a]] = v

    def source(t: float) -> np.ndarray:
        F = np.zeros((m, count))
        for col, fn in forcing:
            F[:, col] += fn(t)
        return F

    K = problem.K
    M_stack = sp.vstack(M, format="csr")
    if M_stack.shape[0] * m <= 1 << 16:
        M_stack = M_stack.toarray()

    def coupling(Ucur: np.ndarray, lvl: int) -> np.ndarray | None:
        return layout.coupling(M_stack, Ucur, lvl, K)

    store_every = n_steps // n_store
    snaps = np.empty((n_store + 1, m, count))
    snaps[0] = U
    vsq = np.zeros(count)
    h_sup = triple.norms_H(U)
    h0 = np.empty(n_steps + 1)
    h0[0] = h_sup[0]
    cn = method == "crank_nicolson"
    if cn:
        F_old = source(0.0)
        for lvl in range(1, len(layout.levels)):
            c = coupling(U, lvl)
            if c is not None:
                F_old[:, layout.levels[lvl]] += c
    for j in range(1, n_steps + 1):
        t = j * dt
        F_new = source(t)
        for lvl, sl in enumerate(layout.levels):
            c = coupling(U, lvl)
            if c is not None:
                F_new[:, sl] += c
            if cn:
                U[:, sl] = st.step(U[:, sl], F_new[:, sl], F_old[:, sl])
            else:
                U[:, sl] = st.step(U[:, sl], F_new[:, sl])
        if cn:
            F_old = F_new
        peak = np.max(np.abs(U), axis=0) if count else np.zeros(0)
        bad = ~np.isfinite(peak) | (peak > BLOWUP_GUARD)
        if np.any(bad):
            col = int(np.argmax(bad))
            raise PropagatorBlowUp(layout.indices[col], t, float(peak[col]))
        hn = triple.norms_H(U)
        np.maximum(h_sup, hn, out=h_sup)
        h0[j] = hn[0]
        vsq += dt * triple.norms_V(U) ** 2
        if j % store_every == 0:
            snaps[j // store_every] = U
    return snaps, np.sqrt(vsq), triple.norms_H(U), h_sup, h0, dt


def solve_propagator(problem: EvolutionProblem) -> EvolutionSolution:
    """Integrate the propagator over ``enumerate_indices(N, K)``.

    Levels are advanced together in time: at each step the coefficients of
    level ``n`` use the freshly updated level ``n - 1``, which is exactly the
    implicit discretisation of the triangular system.  Richardson
    extrapolation combines runs with ``n, 2n, 4n, ...`` steps on the stored
    snapshots; norms are taken from the finest run.

    Raises
    ------
    PropagatorBlowUp
        If any coefficient becomes non-finite or exceeds ``1e300``.
    """
    cfg = problem.stepper
    layout = _Layout.build(problem.max_order, problem.K)
    runs = [_run(problem, layout, cfg.n_steps * 2**j, cfg.method, cfg.n_store) for j in range(cfg.richardson + 1)]
    snaps = _richardson([r[0] for r in runs], 2 if cfg.method == "implicit_euler" else 4)
    _, vn, hT, hsup, h0, dt = runs[-1]
    if cfg.richardson:
        hT = problem.triple.norms_H(snaps[-1])
    return EvolutionSolution(
        indices=layout.indices,
        times=np.linspace(0.0, problem.T, cfg.n_store + 1),
        snapshots=snaps,
        v_norms=vn,
        h_norms_T=hT,
        h_sup=hsup,
        h0_history=h0,
        dt=dt,
        method=cfg.method,
        richardson=cfg.richardson,
        max_order=problem.max_order,
        max_dim=problem.K,
    )


def _richardson(values: list[np.ndarray], ratio: int) -> np.ndarray:
    """Neville-style tableau ``R_{j,i} = (r^i R_{j,i-1} - R_{j-1,i-1}) / (r^i - 1)``."""
    row = list(values)
    for i in range(1, len(values)):
        fac = float(ratio) ** i
        row = [(fac * row[j] - row[j - 1]) / (fac - 1) for j in range(1, len(row))]
    return row[-1]


# -- independent oracle -----------------------------------------------------


def exponential_integrator(A: Any, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(E, phi1, phi2)`` for ``w' = A w + F`` with ``F`` linear on each step.

    ``w_{j+1} = E w_j + dt phi1 F_j + dt phi2 (F_{j+1} - F_j)``, taken from the
    top block row of ``expm([[dt A, I, 0], [0, 0, I], [0, 0, 0]])``.
    """
    Ad = as_matrix(A).toarray()
    m = Ad.shape[0]
    Z = np.zeros((3 * m, 3 * m))
    Z[:m, :m] = dt * Ad
    Z[:m, m : 2 * m] = np.eye(m)
    Z[m : 2 * m, 2 * m :] = np.eye(m)
    X = sla.expm(Z)
    return X[:m, :m], X[:m, m : 2 * m], X[:m, 2 * m :]


class EvolutionOracle:
    """Permutation-sum evaluation of single coefficients.

    ``u_alpha = (1/sqrt(alpha!)) sum_{sigma in P_n} T_{k_sigma(n)} ... T_{k_sigma(1)} u_(0)``
    with ``T_k v = int_0^t Phi_{t-s} M_k v(s) ds`` and ``(k_1..k_n)`` the
    characteristic set of ``alpha``; when ``g`` is present the innermost
    factor is ``T_{k_sigma(1)} u_(0) + int_0^t Phi_{t-s} g h_{k_sigma(1)} ds``.
    Each ``T_k`` is evaluated with the exponential integrator on a uniform
    grid of ``n_steps`` steps, independently of the propagator stepper.
    Nested results are cached by ordered prefix.
    """

    MAX_ORDER = 4

    def __init__(self, problem: EvolutionProblem, n_steps: int = 1000):
        if not problem.is_deterministic():
            raise ValueError("the permutation-sum oracle needs deterministic u0 and f")
        self.p = problem
        self.n_steps = n_steps
        self.dt = problem.T / n_steps
        self.times = np.linspace(0.0, problem.T, n_steps + 1)
        self.E, self.phi1, self.phi2 = exponential_integrator(problem.A, self.dt)
        self.Md = [Mk.toarray() for Mk in problem.M]
        terms = problem.forcing_terms()
        f0 = terms.get(MultiIndex.zero())
        F = np.zeros((n_steps + 1, problem.m)) if f0 is None else np.array([f0(t) for t in self.times])
        u0 = problem.initial_condition().get(MultiIndex.zero(), np.zeros(problem.m))
        self.u_zero = self._integrate(F, u0)
        self._gk = {}
        if problem.g is not None:
            for k in range(1, problem.K + 1):
                fn = terms[MultiIndex.unit(k)]
                # g h_k enters only through the eps_k equation
                self._gk[k] = self._integrate(np.array([fn(t) for t in self.times]), np.zeros(problem.m))
        self._cache: dict[tuple[int, ...], np.ndarray] = {(): self.u_zero}

    def _integrate(self, F: np.ndarray, w0: np.ndarray) -> np.ndarray:
        out = np.empty((self.n_steps + 1, w0.shape[0]))
        out[0] = w0
        dt = self.dt
        a = (self.phi1 - self.phi2) @ F.T * dt
        b = self.phi2 @ F.T * dt
        for j in range(self.n_steps):
            out[j + 1] = self.E @ out[j] + a[:, j] + b[:, j + 1]
        return out

    def chain(self, ks: tuple[int, ...]) -> np.ndarray:
        """``T_{k_n} ... T_{k_1} u_(0)`` (plus the ``g`` term) as a trajectory."""
        if ks in self._cache:
            return self._cache[ks]
        inner = self.chain(ks[:-1])
        k = ks[-1]
        traj = self._integrate(inner @ self.Md[k - 1].T, np.zeros(self.p.m))
        if len(ks) == 1 and k in self._gk:
            traj = traj + self._gk[k]
        self._cache[ks] = traj
        return traj

    def coefficient(self, alpha: MultiIndex) -> np.ndarray:
        """Trajectory of ``u_alpha`` on ``self.times``, shape ``(n_steps + 1, m)``."""
        if alpha.order > self.MAX_ORDER:
            raise ValueError(f"|alpha| = {alpha.order} exceeds the oracle limit {self.MAX_ORDER}")
        if alpha.max_position > self.p.K:
            raise ValueError(f"{alpha} uses a noise mode beyond K = {self.p.K}")
        if alpha.is_zero():
            return self.u_zero
        total = np.zeros_like(self.u_zero)
        for perm in itertools.permutations(characteristic_set(alpha)):
            total += self.chain(perm)
        return total / math.sqrt(alpha.factorial())


def coef_evol_oracle(alpha: MultiIndex, problem: EvolutionProblem, n_steps: int = 1000) -> np.ndarray:
    """Single-coefficient convenience wrapper around :class:`EvolutionOracle`."""
    return EvolutionOracle(problem, n_steps).coefficient(alpha)


# -- closed-form examples ---------------------------------------------------


def example1_closed_form(n: int, t: float, phi: float = 1.0, lam: float = 1.0, b: float = 1.0) -> float:
    """``u_(n)(t) = phi (b t)^n e^{-lam t} / sqrt(n!)`` for ``u' = -lam u + b u <> xi``."""
    return phi * (b * t) ** n * math.exp(-lam * t) / math.sqrt(math.factorial(n))


def example3_second_moment(a: float, beta: float, sigma: float, t: float, u0hat: Callable | None = None) -> float:
    """``E ||u(t)||^2 = (1/2 pi) int |u0hat(y)|^2 exp(-2 t a y^2 + sigma^2 y^2 t^2 + beta^2 t^2) dy``.

    ``u0hat`` defaults to the Gaussian profile ``exp(-y^2 / 2)``.  Returns
    ``inf`` when the integral diverges.
    """
    if u0hat is None:
        s = 1.0 + 2.0 * t * a - sigma**2 * t**2
        if s <= 0:
            return math.inf
        return math.exp(beta**2 * t**2) * math.sqrt(math.pi / s) / (2 * math.pi)
    expo = sigma**2 * t**2 - 2 * t * a

    def integrand(y):
        w = abs(u0hat(y)) ** 2
        if w == 0:
            return 0.0
        try:
            return w * math.exp(expo * y * y + beta**2 * t**2)
        except OverflowError:
            return math.inf

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sint.IntegrationWarning)
        val, err = sint.quad(integrand, -np.inf, np.inf, limit=200)
    if not math.isfinite(val) or err > 1e-6 * max(abs(val), 1e-300):
        return math.inf
    return val / (2 * math.pi)


def example3_analysis(
    a: float, beta: float, sigma: float, t: float, u0hat: Callable | None = None
) -> dict[str, Any]:
    """Second moment and finiteness verdict for ``u_t = a u_xx + (beta u + sigma u_x) <> xi``.

    Returns
    -------
    dict
        ``finite``: ``sigma^2 t < 2a`` (always true for ``sigma = 0``), the
        condition for a finite second moment for every ``u0`` in ``L_2``.
        ``norm``: ``E ||u(t)||^2`` by quadrature, or ``inf`` when ``finite``
        is false.  ``profile_norm``: the same moment for the given profile
        regardless of the flag (a concentrated profile can stay finite a
        little longer).  ``threshold``: ``2a / sigma^2``.
    """
    if not a > 0:
        raise ValueError(f"a must be positive, got {a}")
    if sigma < 0 or t < 0:
        raise ValueError("sigma and t must be non-negative")
    threshold = math.inf if sigma == 0 else 2 * a / sigma**2
    finite = sigma == 0 or sigma**2 * t < 2 * a
    profile = example3_second_moment(a, beta, sigma, t, u0hat)
    return {
        "norm": profile if finite else math.inf,
        "finite": bool(finite),
        "profile_norm": profile,
        "threshold": threshold,
    }


def _series_ratio(b: np.ndarray, t: float, xi: np.ndarray, n_terms: int) -> np.ndarray:
    """``sum_{n < n_terms} (b t)^n H_n(xi) / n!`` evaluated termwise.

    Uses ``p_n = H_n / sqrt(n!)`` (stable recurrence) and ``c_n = (b t)^n / sqrt(n!)``.
    """
    bt = b * t
    p_prev = np.ones_like(xi)
    p = xi.copy()
    c = np.ones_like(bt)
    total = c * p_prev
    c = c * bt
    total = total + c * p
    for n in range(1, n_terms - 1):
        p_prev, p = p, (xi * p - math.sqrt(n) * p_prev) / math.sqrt(n + 1)
        c = c * bt / math.sqrt(n + 1)
        total = total + c * p
    return total


def example3_monte_carlo(
    a: float,
    beta: float,
    sigma: float,
    t: float,
    n_samples: int,
    rng: np.random.Generator,
    n_terms: int = 80,
    chunk: int = 50_000,
) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of ``E ||u(t)||^2`` for the Gaussian profile.

    Each sample draws ``xi ~ N(0, 1)`` and a frequency ``y ~ N(0, 1/2)``
    (the normalised density of ``|u0hat|^2 = e^{-y^2}``), evaluates
    ``u_hat(t, y) / u0hat(y)`` through its chaos series in ``xi`` and
    averages ``|.|^2``.  The factor ``sqrt(pi) / (2 pi)`` restores the
    Plancherel normalisation.  Drawing ``y`` as well keeps the estimator
    non-degenerate when ``beta = 0``, where the pathwise ``L_2`` norm does
    not depend on ``xi``.
    """
    s1 = s2 = 0.0
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        xi = rng.standard_normal(n)
        y = rng.standard_normal(n) / math.sqrt(2.0)
        b = beta + 1j * sigma * y
        ratio = np.exp(-t * a * y**2) * _series_ratio(b, t, xi, n_terms)
        val = np.abs(ratio) ** 2
        s1 += float(np.sum(val))
        s2 += float(np.sum(val**2))
        done += n
    scale = math.sqrt(math.pi) / (2 * math.pi)
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean**2, 0.0)
    return scale * mean, scale * math.sqrt(var / n_samples)


# -- bounded-operator bound -------------------------------------------------


def evol_sp_bound_check(
    problem: EvolutionProblem,
    c: Sequence[float] | None = None,
    rtol: float = 1e-6,
    solution: EvolutionSolution | None = None,
) -> dict[str, Any]:
    """Check ``||u_alpha(t)||_H <= e^{p t} t^{|alpha|} c^alpha / sqrt(alpha!) * S`` at stored times.

    ``S = max_{s <= T} e^{-p s} ||u_(0)(s)||_H`` over the step grid and ``p``
    is the measured growth rate of one stepper step in ``H``.  With zero
    forcing ``S = ||u_0||_H`` and the bound is the classical one; the
    ``e^{-p s}`` weighting keeps it valid with forcing and ``p < 0``.
    ``c`` defaults to the measured ``||M_k||_{H -> H}``.  Also reports the
    closing identity ``sum_alpha c^{2 alpha} t^{2|alpha|} / alpha! = e^{C_M t^2}``
    over the truncation.
    """
    if not problem.is_deterministic() or problem.g is not None:
        raise ValueError("the bound applies to deterministic u0 and f without a g term")
    triple = problem.triple
    measured = [h_operator_norm(Mk, triple) for Mk in problem.M]
    if c is None:
        c = measured
    c = [float(v) for v in c]
    too_big = [k + 1 for k, (cm, ck) in enumerate(zip(measured, c)) if cm > ck * (1 + 1e-12)]
    if too_big:
        raise ValueError(f"measured ||M_k|| exceeds the supplied c_k for k = {too_big}")
    sol = solve_propagator(problem) if solution is None else solution
    dt_fine = sol.dt
    p = semigroup_growth(problem.A, triple, dt=dt_fine, method=problem.stepper.method)
    steps = np.arange(sol.h0_history.size) * dt_fine
    S = float(np.max(np.exp(-p * steps) * sol.h0_history))
    violations = []
    worst = 0.0
    for ti, t in enumerate(sol.times):
        norms = triple.norms_H(sol.snapshots[ti])
        for i, a in enumerate(sol.indices):
            if a.is_zero():
                continue
            bound = math.exp(p * t) * t ** a.order * a.power(c) / math.sqrt(a.factorial()) * S
            ratio = norms[i] / bound if bound > 0 else (math.inf if norms[i] > 0 else 0.0)
            worst = max(worst, ratio)
            if norms[i] > bound * (1 + rtol) + 1e-300:
                violations.append({"alpha": a.label(), "t": float(t), "norm": float(norms[i]), "bound": bound})
    T = problem.T
    C_M = math.fsum(ck**2 for ck in c)
    series = math.fsum(a.power(c) ** 2 * T ** (2 * a.order) / a.factorial() for a in sol.indices)
    closed = math.exp(C_M * T**2)
    return {
        "p": p,
        "S": S,
        "c": c,
        "measured_c": measured,
        "C_M": C_M,
        "max_ratio": worst,
        "violations": violations,
        "holds": not violations,
        "series": series,
        "closed_form": closed,
        "identity_error": abs(series - closed) / closed,
    }


def level_bound_ratios(
    sol: EvolutionSolution,
    q: Sequence[float],
    C: Sequence[float],
    reference: float,
    max_level: int | None = None,
) -> dict[int, float]:
    """``S_n / (reference^2 n! (sum_k C_k^2 q_k^2)^n)`` with ``S_n`` the weighted level sums.

    ``reference`` is the norm the constant is measured against, e.g. the
    ``L_2(0, T; V)`` norm of ``u_(0)``.
    """
    theta = math.fsum((ck * qk) ** 2 for ck, qk in zip(C, q))
    sums = sol.level_sums(q, "V")
    out = {}
    for n, s in sums.items():
        if max_level is not None and n > max_level:
            continue
        denom = reference**2 * math.factorial(n) * theta**n
        out[n] = float(s / denom) if denom > 0 else (0.0 if s == 0 else math.inf)
    return out
