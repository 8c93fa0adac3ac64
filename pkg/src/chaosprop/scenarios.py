"""Scenario definitions for the command line: schema, validation and runners.

A scenario is one JSON or TOML file with a ``kind`` and kind-specific
sections.  Every runner returns a :class:`Result` holding the summary, the
named pass/fail checks and any CSV tables; :mod:`chaosprop.cli` writes them.
"""

from __future__ import annotations

import copy
import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import chaos, elliptic, multiindex, parabolic, spatial, weights
from .multiindex import MultiIndex, count_indices, enumerate_indices

SPEC_VERSION = "1"
DEFAULT_BUDGET = 500_000


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Settings:
    """Run-wide knobs resolved from flags, environment and config."""

    threads: int = 1
    seed: int = 12345
    tolerance_scale: float = 1.0


@dataclass
class Table:
    header: list[str]
    rows: list[list[Any]]


@dataclass
class Result:
    summary: dict[str, Any]
    checks: dict[str, bool] = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)
    extra_json: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# -- config access --------------------------------------------------------------


def load_config(path: str | os.PathLike) -> dict[str, Any]:
    """Read a ``.json`` or ``.toml`` scenario file."""
    p = Path(path)
    try:
        text = p.read_bytes()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {p}: {exc.strerror}") from None
    try:
        if p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(text.decode("utf-8"))
        else:
            data = json.loads(text.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError("config", f"cannot parse {p.name}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a table/object")
    return data


class _Cfg:
    """Typed access to a nested config section with field-path error messages."""

    def __init__(self, data: dict[str, Any], path: str = "", used: set[str] | None = None):
        self.data = data
        self.path = path
        # dotted paths of every key read, shared by all sub-sections
        self.used = set() if used is None else used

    def _name(self, key: str) -> str:
        name = f"{self.path}.{key}" if self.path else key
        self.used.add(name)
        return name

    def section(self, key: str) -> "_Cfg":
        name = self._name(key)
        val = self.data.get(key, {})
        if not isinstance(val, dict):
            raise ConfigError(name, "must be a table/object")
        return _Cfg(val, name, self.used)

    def raw(self, key: str, default: Any = None) -> Any:
        self._name(key)
        return self.data.get(key, default)

    def int(self, key: str, default: int | None = None, lo: int | None = None) -> int:
        self._name(key)
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(self._name(key), "is required")
        if isinstance(val, bool) or not isinstance(val, (int, float)) or int(val) != val:
            raise ConfigError(self._name(key), f"must be an integer, got {val!r}")
        val = int(val)
        if lo is not None and val < lo:
            raise ConfigError(self._name(key), f"must be >= {lo}, got {val}")
        return val

    def float(self, key: str, default: float | None = None, lo: float | None = None, strict: bool = False) -> float:
        self._name(key)
        val = self.data.get(key, default)
        if val is None:
            raise ConfigError(self._name(key), "is required")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(self._name(key), f"must be a number, got {val!r}")
        val = float(val)
        if not math.isfinite(val):
            raise ConfigError(self._name(key), "must be finite")
        if lo is not None and (val <= lo if strict else val < lo):
            raise ConfigError(self._name(key), f"must be {'>' if strict else '>='} {lo}, got {val}")
        return val

    def str(self, key: str, default: str | None = None, choices: tuple[str, ...] | None = None) -> str:
        self._name(key)
        val = self.data.get(key, default)
        if not isinstance(val, str):
            raise ConfigError(self._name(key), f"must be a string, got {val!r}")
        if choices is not None and val not in choices:
            raise ConfigError(self._name(key), f"must be one of {list(choices)}, got {val!r}")
        return val

    def bool(self, key: str, default: bool = False) -> bool:
        self._name(key)
        val = self.data.get(key, default)
        if not isinstance(val, bool):
            raise ConfigError(self._name(key), f"must be true or false, got {val!r}")
        return val

    def floats(self, key: str, default: list[float] | None = None) -> list[float]:
        self._name(key)
        val = self.data.get(key, default)
        if not isinstance(val, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
            raise ConfigError(self._name(key), f"must be a list of numbers, got {val!r}")
        return [float(v) for v in val]


def merged_with_defaults(kind: str, data: dict[str, Any]) -> dict[str, Any]:
    """Merge user config over the defaults for ``kind``.

    Top-level tables merge key by key; anything below (coefficient presets,
    profiles, weight lists) replaces the default as a whole.
    """
    out = copy.deepcopy(KINDS[kind].defaults)
    for k, v in data.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(copy.deepcopy(v))
        else:
            out[k] = copy.deepcopy(v)
    return out


def _user_paths(data: dict[str, Any]) -> list[str]:
    out = []
    for k, v in data.items():
        if isinstance(v, dict) and v:
            out.extend(f"{k}.{j}" for j in v)
        else:
            out.append(k)
    return out


# -- shared builders ------------------------------------------------------------


def _truncation(cfg: _Cfg, budget: int) -> tuple[int, int]:
    tr = cfg.section("truncation")
    N = tr.int("N", lo=0)
    K = tr.int("K", lo=1)
    cost = N * count_indices(N, K)
    if cost > budget:
        raise ConfigError("truncation", f"N * binomial(N+K, K) = {cost} exceeds the budget {budget}")
    return N, K


def _coefficient(spec: Any, L: float, name: str) -> Any:
    try:
        return spatial.Coefficient.from_config(spec, L)
    except (TypeError, ValueError) as exc:
        raise ConfigError(name, str(exc)) from None


def _profile(spec: Any, grid: spatial.Grid1D, name: str) -> np.ndarray:
    """Grid samples of a data profile: number, coefficient preset or ``sine``."""
    if spec is None or spec == "zero":
        return np.zeros(grid.m)
    if isinstance(spec, dict) and spec.get("kind") == "sine":
        extra = set(spec) - {"kind", "mode", "amplitude"}
        if extra:
            raise ConfigError(name, f"unexpected fields {sorted(extra)}")
        mode = _Cfg(spec, name).int("mode", 1, lo=1)
        amp = _Cfg(spec, name).float("amplitude", 1.0)
        return amp * np.sin(mode * np.pi * grid.x / grid.L)
    return _coefficient(spec, grid.L, name)(grid.x)


def _grid(cfg: _Cfg) -> spatial.Grid1D:
    g = cfg.section("grid")
    L = g.float("L", lo=0.0, strict=True)
    m = g.int("m", lo=3)
    return spatial.Grid1D(L, m)


def _stepper(cfg: _Cfg) -> parabolic.StepperConfig:
    s = cfg.section("stepper")
    try:
        return parabolic.StepperConfig(
            method=s.str("method", choices=spatial.Stepper.METHODS),
            n_steps=s.int("n_steps", lo=1),
            richardson=s.int("richardson", lo=0),
            n_store=s.int("n_store", lo=1),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("stepper", str(exc)) from None


def _weight_systems(cfg: _Cfg, extra: list[weights.WeightSystem] = ()) -> list[weights.WeightSystem]:
    specs = cfg.raw("weights", [])
    if not isinstance(specs, list):
        raise ConfigError("weights", "must be a list of weight-system tables")
    out = list(extra)
    for i, spec in enumerate(specs):
        if not isinstance(spec, dict):
            raise ConfigError(f"weights[{i}]", "must be a table/object")
        try:
            ws = weights.WeightSystem.from_config(spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"weights[{i}]", str(exc)) from None
        out.append(ws)
    names = [w.name for w in out]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError("weights", f"duplicate weight-system names {sorted(dup)}; set 'name'")
    return out


def _norm_table(indices, v_norms, h_norms, ws_list, v_label="v_norm", h_label="h_norm_at_T") -> Table:
    header = ["alpha", "level", v_label, h_label] + [f"weighted_v:{w.name}" for w in ws_list]
    rows = []
    for i, a in enumerate(indices):
        row = [a.label(), a.order, float(v_norms[i]), float(h_norms[i])]
        row += [_safe_weight(w, a) * float(v_norms[i]) for w in ws_list]
        rows.append(row)
    return Table(header, rows)


def _safe_weight(ws: weights.WeightSystem, a: MultiIndex) -> float:
    try:
        return weights.weight(ws, a)
    except ValueError:
        return math.nan


def _parabolic_operators(cfg: _Cfg, grid: spatial.Grid1D, K: int):
    co = cfg.section("coefficients")
    L = grid.L
    a = _coefficient(co.raw("a", 1.0), L, "coefficients.a")
    b = _coefficient(co.raw("b", 0.0), L, "coefficients.b")
    c = _coefficient(co.raw("c", 0.0), L, "coefficients.c")
    sigma = _coefficient(co.raw("sigma", 0.0), L, "coefficients.sigma")
    nu = _coefficient(co.raw("nu", 0.0), L, "coefficients.nu")
    form = co.str("noise_form", "first_order", choices=("first_order", "multiplication", "divergence"))
    try:
        A = spatial.assemble_A(grid, a=a, b=b, c=c, form="nondivergence")
    except ValueError as exc:
        raise ConfigError("coefficients.a", str(exc)) from None
    noise = spatial.noise_basis_sine(grid, K)
    M = [spatial.assemble_Mk(grid, noise[k], sigma=sigma, nu=nu, form=form) for k in range(1, K + 1)]
    return A, M, noise


# -- runners --------------------------------------------------------------------


def run_parabolic(cfg: _Cfg, st: Settings, budget: int) -> Result:
    grid = _grid(cfg)
    N, K = _truncation(cfg, budget)
    A, M, noise = _parabolic_operators(cfg, grid, K)
    T = cfg.float("T", lo=0.0, strict=True)
    data = cfg.section("data")
    u0 = _profile(data.raw("u0"), grid, "data.u0")
    f = _profile(data.raw("f"), grid, "data.f")
    g_spec = data.raw("g")
    g = None if g_spec in (None, "zero") else _profile(g_spec, grid, "data.g")
    step = _stepper(cfg)
    triple = spatial.NormalTriple.dirichlet(grid)
    theta = cfg.float("theta", 0.5, lo=0.0, strict=True)
    if theta >= 1:
        raise ConfigError("theta", f"must be < 1, got {theta}")
    problem = parabolic.EvolutionProblem(A, M, T, N, u0=u0, f=f, g=g, noise=noise, triple=triple, stepper=step)
    try:
        sol = parabolic.solve_propagator(problem)
    except parabolic.PropagatorBlowUp as exc:
        return Result({"kind": "parabolic", "error": str(exc), "alpha": exc.alpha.label(), "t": exc.t}, {"stable": False})
    C = [spatial.estimate_Ck(A, Mk, triple, "parabolic", T=T, n_steps=step.n_steps) for Mk in M]
    q = weights.choose_q(C, theta)
    auto = weights.WeightSystem.propagator(q, name="propagator_auto")
    ws_list = _weight_systems(cfg, [auto])
    summary = {
        "kind": "parabolic",
        "grid": {"L": grid.L, "m": grid.m},
        "truncation": {"N": N, "K": K, "count": len(sol.indices)},
        "stepper": {"method": step.method, "n_steps": step.n_steps, "richardson": step.richardson},
        "T": T,
        "C_k": C,
        "q": q,
        "weighted_norms": {w.name: _maybe(lambda w=w: sol.weighted_norm(w, "V")) for w in ws_list},
        "weighted_norms_H_T": {w.name: _maybe(lambda w=w: sol.weighted_norm(w, "H_T")) for w in ws_list},
        "mean_h_norm_at_T": float(sol.h_norms_T[0]),
    }
    checks = {"stable": True}
    if g is None and step.richardson == 0 and step.method == "implicit_euler":
        ratios = parabolic.level_bound_ratios(sol, q, C, float(sol.v_norms[0]))
        summary["level_bound_ratios"] = {str(n): r for n, r in ratios.items()}
        checks["level_bounds"] = all(r <= 1.0 + 1e-9 * st.tolerance_scale for r in ratios.values())
    tables = {"coeff_norms.csv": _norm_table(sol.indices, sol.v_norms, sol.h_norms_T, ws_list)}
    extra = {}
    if cfg.section("output").bool("coefficients", False):
        extra["coefficients.json"] = sol.as_expansion().to_records()
    return Result(summary, checks, tables, extra)


def _maybe(fn: Callable[[], float]) -> float:
    try:
        return fn()
    except ValueError:
        return math.nan


def run_elliptic(cfg: _Cfg, st: Settings, budget: int) -> Result:
    grid = _grid(cfg)
    N, K = _truncation(cfg, budget)
    co = cfg.section("coefficients")
    a = _coefficient(co.raw("a", 1.0), grid.L, "coefficients.a")
    sigma = _coefficient(co.raw("sigma", 0.0), grid.L, "coefficients.sigma")
    f = _profile(cfg.section("data").raw("f", 1.0), grid, "data.f")
    theta = cfg.float("theta", 0.5, lo=0.0, strict=True)
    if theta >= 1:
        raise ConfigError("theta", f"must be < 1, got {theta}")
    try:
        sol, rep = elliptic.solve_elliptic_dirichlet(grid, a, sigma, f, K, N, theta=theta)
    except ValueError as exc:
        raise ConfigError("coefficients.a", str(exc)) from None
    auto = weights.WeightSystem.propagator(rep["q"], name="propagator_auto")
    ws_list = _weight_systems(cfg, [auto])
    norms_V = sol.triple.norms_V(sol.coefficients)
    norms_H = sol.triple.norms_H(sol.coefficients)
    ratios = rep["level_ratios"]
    summary = {
        "kind": "elliptic",
        "grid": {"L": grid.L, "m": grid.m},
        "truncation": {"N": N, "K": K, "count": len(sol.indices)},
        "C_A": rep["C_A"],
        "C_k": rep["C_k"],
        "q": rep["q"],
        "f_dual_norm": rep["f_dual_norm"],
        "empirical_constant": rep["ratio"],
        "level_norms": {str(n): v for n, v in rep["level_norms"].items()},
        "level_bound_ratios": {str(n): r for n, r in ratios.items()},
        "max_residual": float(sol.residuals.max()),
        "weighted_norms": {w.name: _maybe(lambda w=w: sol.weighted_norm(w, "V")) for w in ws_list},
    }
    checks = {
        "residual": float(sol.residuals.max()) <= 1e-10 * st.tolerance_scale,
        "level_bounds": all(r <= 1.0 + 1e-9 * st.tolerance_scale for r in ratios.values()),
    }
    ell = cfg.raw("kondratiev_ell")
    if ell is not None:
        ell = cfg.float("kondratiev_ell", lo=1.0, strict=True)
        prob = elliptic.StationaryProblem(-spatial.assemble_A(grid, a=a, form="divergence"),
                                          [spatial.assemble_Mk(grid, spatial.noise_basis_sine(grid, K)[k], sigma=sigma,
                                                               form="divergence") for k in range(1, K + 1)],
                                          f, N, triple=sol.triple)
        kb = elliptic.kondratiev_bound_check(prob, ell)
        summary["kondratiev_bound"] = {k: kb[k] for k in ("lhs", "rhs", "C_ell", "scale_A", "scale_M", "holds")}
        checks["kondratiev_bound"] = bool(kb["holds"])
    tables = {"coeff_norms.csv": _norm_table(sol.indices, norms_V, norms_H, ws_list, h_label="h_norm")}
    extra = {}
    if cfg.section("output").bool("coefficients", False):
        extra["coefficients.json"] = sol.as_expansion().to_records()
    return Result(summary, checks, tables, extra)


def run_converge(cfg: _Cfg, st: Settings, budget: int) -> Result:
    grid = _grid(cfg)
    N, K = _truncation(cfg, budget)
    A, M, noise = _parabolic_operators(cfg, grid, K)
    triple = spatial.NormalTriple.dirichlet(grid)
    c = spatial.dissipativity_constant(A, triple)
    if not c > 0:
        raise ConfigError("coefficients", f"A is not dissipative (measured c = {c:.6g}); pick a, b, c accordingly")
    data = cfg.section("data")
    f_star = _profile(data.raw("f_star", 1.0), grid, "data.f_star")
    g_spec = data.raw("g_star")
    g_star = None if g_spec in (None, "zero") else _profile(g_spec, grid, "data.g_star")
    u0 = _profile(data.raw("u0"), grid, "data.u0")
    rate = data.float("forcing_rate", 1.0, lo=0.0, strict=True)
    horizon = cfg.float("horizon_factor", 40.0, lo=0.0, strict=True)
    T = horizon / c
    step = _stepper(cfg)
    f = lambda t: f_star * (1.0 - math.exp(-rate * t))
    g = None if g_star is None else (lambda t: g_star * (1.0 - math.exp(-rate * t)))
    ep = parabolic.EvolutionProblem(A, M, T, N, u0=u0, f=f, g=g, noise=noise, triple=triple, stepper=step)
    ws_list = _weight_systems(cfg)
    if not ws_list:
        ws_list = [weights.WeightSystem.dirichlet([1.0] * K, 1.0, name="dirichlet")]
    try:
        res = elliptic.converge_to_stationary(ep, f_star, ws_list, g_star=g_star)
    except ValueError as exc:
        raise ConfigError("coefficients", str(exc)) from None
    burn = cfg.float("burn_in_fraction", 0.25, lo=0.0)
    tol = cfg.float("tolerance", 1e-6, lo=0.0, strict=True) * st.tolerance_scale
    times = res["times"]
    first = next(i for i, t in enumerate(times) if t >= burn * T)
    checks, verdicts = {}, {}
    for name, d in res["distances"].items():
        tail = d[first:]
        mono = all(b < a or (a == 0 and b == 0) for a, b in zip(tail, tail[1:]))
        verdicts[name] = {"monotone_after_burn_in": mono, "final": d[-1], "below_tolerance": d[-1] < tol}
        checks[f"monotone:{name}"] = mono
        checks[f"final:{name}"] = d[-1] < tol
    header = ["t"] + [f"distance:{n}" for n in res["distances"]] + ["distance:posthoc"]
    rows = [[t] + [res["distances"][n][i] for n in res["distances"]] + [res["posthoc"][i]] for i, t in enumerate(times)]
    summary = {
        "kind": "converge",
        "grid": {"L": grid.L, "m": grid.m},
        "truncation": {"N": N, "K": K},
        "c": c,
        "T": T,
        "tolerance": tol,
        "burn_in_time": times[first],
        "verdicts": verdicts,
        "posthoc_final": res["posthoc"][-1],
    }
    stat = res["stationary"]
    tables = {
        "decay.csv": Table(header, rows),
        "coeff_norms.csv": _norm_table(stat.indices, triple.norms_V(stat.coefficients),
                                       triple.norms_H(stat.coefficients), ws_list, h_label="h_norm"),
    }
    return Result(summary, checks, tables)


def _variable_problem(grid: spatial.Grid1D, K: int):
    """Variable-coefficient Dirichlet operators shared by the oracle comparisons."""
    L = grid.L
    a = spatial.Coefficient.make("bump", L, base=1.0, height=0.5, center=0.4 * L, width=0.2 * L)
    b = spatial.Coefficient.make("linear", L, a0=0.3, a1=-0.6)
    nu = spatial.Coefficient.make("linear", L, a0=1.0, a1=0.5)
    sig = spatial.Coefficient.make("linear", L, a0=0.1, a1=0.05)
    noise = spatial.noise_basis_sine(grid, K)
    A_par = spatial.assemble_A(grid, a=a, b=b, c=-0.5)
    M_par = [spatial.assemble_Mk(grid, noise[k], sigma=0.05, nu=nu) for k in range(1, K + 1)]
    A_ell = -spatial.assemble_A(grid, a=a, form="divergence")
    M_ell = [spatial.assemble_Mk(grid, noise[k], sigma=sig, form="divergence") for k in range(1, K + 1)]
    return A_par, M_par, A_ell, M_ell, noise


def _map_threads(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def run_oracle_compare(cfg: _Cfg, st: Settings, budget: int) -> Result:
    grid = _grid(cfg)
    N, K = _truncation(cfg, budget)
    if N > parabolic.EvolutionOracle.MAX_ORDER:
        raise ConfigError("truncation.N", f"oracle supports N <= {parabolic.EvolutionOracle.MAX_ORDER}, got {N}")
    A_par, M_par, A_ell, M_ell, noise = _variable_problem(grid, K)
    triple = spatial.NormalTriple.dirichlet(grid)
    T = cfg.float("T", 1.0, lo=0.0, strict=True)
    step = _stepper(cfg)
    oracle_steps = cfg.int("oracle_steps", 2000, lo=1)
    if oracle_steps % step.n_store:
        raise ConfigError("oracle_steps", f"must be a multiple of stepper.n_store = {step.n_store}")
    u0 = np.sin(np.pi * grid.x / grid.L) * (1 + grid.x / grid.L)
    f = lambda t: math.cos(3 * t) * grid.x * (grid.L - grid.x) / grid.L**2
    g = 0.5 * grid.x / grid.L
    ep = parabolic.EvolutionProblem(A_par, M_par, T, N, u0=u0, f=f, g=g, noise=noise, triple=triple, stepper=step)
    sol = parabolic.solve_propagator(ep)
    orc = parabolic.EvolutionOracle(ep, oracle_steps)
    stride = oracle_steps // step.n_store

    def par_err(i_a):
        i, a = i_a
        ref = orc.coefficient(a)[::stride]
        got = sol.snapshots[:, :, i]
        scale = np.abs(ref).max()
        return float(np.abs(got - ref).max() / scale) if scale > 0 else float(np.abs(got).max())

    # memoised chains are filled serially first so threads only read the cache
    for a in sol.indices:
        orc.coefficient(a)
    par = _map_threads(par_err, list(enumerate(sol.indices)), st.threads)
    Ne = cfg.int("elliptic_N", 4, lo=0)
    fe = 1.0 + np.sin(3 * np.pi * grid.x / grid.L)
    sp_prob = elliptic.StationaryProblem(A_ell, M_ell, fe, Ne, g=0.3 * grid.x / grid.L, noise=noise, triple=triple)
    ssol = elliptic.solve_stationary(sp_prob)

    def ell_err(a):
        ref = elliptic.coef_stat_oracle(a, sp_prob)
        scale = np.abs(ref).max()
        got = ssol.coefficient(a)
        return float(np.abs(got - ref).max() / scale) if scale > 0 else float(np.abs(got).max())

    ell = _map_threads(ell_err, ssol.indices, st.threads)
    tol_p = cfg.float("parabolic_tolerance", 1e-4, lo=0.0, strict=True) * st.tolerance_scale
    tol_e = cfg.float("elliptic_tolerance", 1e-8, lo=0.0, strict=True) * st.tolerance_scale
    rows = [["parabolic", a.label(), a.order, e] for a, e in zip(sol.indices, par)]
    rows += [["elliptic", a.label(), a.order, e] for a, e in zip(ssol.indices, ell)]
    summary = {
        "kind": "oracle-compare",
        "grid": {"L": grid.L, "m": grid.m},
        "truncation": {"N": N, "K": K, "elliptic_N": Ne},
        "parabolic_max_rel_error": max(par),
        "elliptic_max_rel_error": max(ell),
        "parabolic_tolerance": tol_p,
        "elliptic_tolerance": tol_e,
    }
    checks = {"parabolic": max(par) <= tol_p, "elliptic": max(ell) <= tol_e}
    return Result(summary, checks, {"oracle_errors.csv": Table(["problem", "alpha", "level", "rel_error"], rows)})


def run_inequality_suite(cfg: _Cfg, st: Settings, budget: int) -> Result:
    N, K = _truncation(cfg, budget)
    idx = enumerate_indices(N, K)
    holds = [multiindex.check_factorial_inequality(a) for a in idx]
    worst = max(
        (math.lgamma(a.order + 1) - a.log_factorial() - a.log_power_2N(2.0) for a in idx), default=0.0
    )
    rng = np.random.default_rng(st.seed)
    mult_err = 0.0
    n_max = min(N, 8)
    for _ in range(5):
        x = rng.uniform(0.0, 2.0, size=K)
        for n in range(n_max + 1):
            lhs = float(np.sum(x)) ** n
            rhs = math.fsum(multiindex.multinomial_coefficient(a) * a.power(x) for a in multiindex.level_indices(n, K))
            mult_err = max(mult_err, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    q = cfg.float("q", -1.1)
    sums = [weights.power_2N_sum(q, n, K) for n in range(N + 1)]
    bound = weights.power_2N_product_bound(q, K) if q < 0 else math.inf
    tol = 1e-12 * st.tolerance_scale
    summary = {
        "kind": "inequality-suite",
        "truncation": {"N": N, "K": K, "count": len(idx)},
        "factorial_inequality_all_true": all(holds),
        "max_log_ratio": worst,
        "multinomial_max_rel_error": mult_err,
        "power_2N_partial_sums": sums,
        "power_2N_product_bound": bound,
    }
    checks = {
        "factorial_inequality": all(holds),
        "multinomial": mult_err <= tol,
        "partial_sums_monotone": all(b >= a for a, b in zip(sums, sums[1:])),
        "partial_sums_bounded": sums[-1] <= bound * (1 + 1e-12),
    }
    return Result(summary, checks)


def run_example1(cfg: _Cfg, st: Settings, budget: int) -> Result:
    N = cfg.section("truncation").int("N", lo=0)
    phi = cfg.float("phi", 1.0)
    lam = cfg.float("lambda", 1.0)
    b = cfg.float("b", 1.0)
    T = cfg.float("T", 1.0, lo=0.0, strict=True)
    step = _stepper(cfg)
    if step.total_steps > cfg.int("max_total_steps", 10_000, lo=1):
        raise ConfigError("stepper", f"total steps {step.total_steps} exceed max_total_steps")
    p = parabolic.EvolutionProblem([[-lam]], [[[b]]], T, N, u0=[phi], stepper=step)
    sol = parabolic.solve_propagator(p)
    rows, errs = [], []
    for n in range(N + 1):
        got = float(sol.coefficient(MultiIndex.unit(1, n) if n else MultiIndex.zero())[0])
        exact = parabolic.example1_closed_form(n, T, phi, lam, b)
        err = abs(got - exact) / abs(exact) if exact else abs(got)
        errs.append(err)
        rows.append([MultiIndex.unit(1, n).label() if n else "(0)", n, got, exact, err])
    tol = cfg.float("tolerance", 1e-6, lo=0.0, strict=True) * st.tolerance_scale
    summary = {
        "kind": "example1",
        "phi": phi, "lambda": lam, "b": b, "T": T, "N": N,
        "total_steps": step.total_steps,
        "max_rel_error": max(errs),
        "tolerance": tol,
    }
    return Result(summary, {"closed_form": max(errs) <= tol},
                  {"coeff_norms.csv": Table(["alpha", "level", "solver", "closed_form", "rel_error"], rows)})


def run_example2(cfg: _Cfg, st: Settings, budget: int) -> Result:
    import sympy

    N = cfg.section("truncation").int("N", lo=0)
    rho = cfg.float("rho", -1.0)
    ell = cfg.float("ell", -1.0)
    if rho > 0 or ell > 0:
        raise ConfigError("rho", "Kondratiev weights need rho <= 0 and ell <= 0")
    prob = elliptic.StationaryProblem([[1.0]], [[[-1.0]]], [1.0], N)
    exact = elliptic.solve_stationary_exact(prob)
    exact_ok = all(
        sympy.simplify(exact[MultiIndex.unit(1, n) if n else MultiIndex.zero()][0] ** 2 - sympy.factorial(n)) == 0
        for n in range(N + 1)
    )
    sol = elliptic.solve_stationary(prob)
    ws = weights.WeightSystem.kondratiev(rho, ell)
    norm_sq = sol.weighted_norm(ws, "V") ** 2
    direct = math.fsum(math.factorial(n) ** (1 + rho) * 2.0 ** (ell * n) for n in range(N + 1))
    err = abs(norm_sq - direct) / direct
    tol = 1e-12 * st.tolerance_scale
    rows = [[(MultiIndex.unit(1, n) if n else MultiIndex.zero()).label(), n,
             str(exact[MultiIndex.unit(1, n) if n else MultiIndex.zero()][0]),
             float(sol.coefficients[0, n])] for n in range(N + 1)]
    summary = {
        "kind": "example2",
        "N": N, "rho": rho, "ell": ell,
        "exact_sqrt_factorial": exact_ok,
        "kondratiev_norm_sq": norm_sq,
        "direct_sum": direct,
        "rel_error": err,
    }
    return Result(summary, {"exact": exact_ok, "kondratiev_norm": err <= tol},
                  {"coeff_norms.csv": Table(["alpha", "level", "exact", "float"], rows)})


def run_example3(cfg: _Cfg, st: Settings, budget: int) -> Result:
    a = cfg.float("a", 1.0, lo=0.0, strict=True)
    beta = cfg.float("beta", 0.0)
    sigma = cfg.float("sigma", 2.0, lo=0.0)
    times = cfg.floats("times", [0.0, 0.45, 0.49, 0.51])
    if any(t < 0 for t in times):
        raise ConfigError("times", "must be non-negative")
    t_mc = cfg.float("mc_time", 0.45, lo=0.0)
    n_mc = cfg.int("mc_samples", 100_000, lo=2)
    rng = np.random.default_rng(st.seed)
    rows = []
    for t in times:
        r = parabolic.example3_analysis(a, beta, sigma, t)
        rows.append([t, r["finite"], r["norm"], r["profile_norm"]])
    thr = parabolic.example3_analysis(a, beta, sigma, 0.0)["threshold"]
    eps = 1e-9
    flips = math.isinf(thr) or (
        parabolic.example3_analysis(a, beta, sigma, thr * (1 - eps))["finite"]
        and not parabolic.example3_analysis(a, beta, sigma, thr)["finite"]
    )
    quad = parabolic.example3_analysis(a, beta, sigma, t_mc)
    mc, se = parabolic.example3_monte_carlo(a, beta, sigma, t_mc, n_mc, rng)
    z = abs(mc - quad["norm"]) / se if se > 0 else (0.0 if mc == quad["norm"] else math.inf)
    k_se = cfg.float("mc_standard_errors", 3.0, lo=0.0, strict=True) * st.tolerance_scale
    summary = {
        "kind": "example3",
        "a": a, "beta": beta, "sigma": sigma,
        "threshold": thr,
        "flag_flips_at_threshold": flips,
        "mc_time": t_mc,
        "quadrature_norm": quad["norm"],
        "mc_estimate": mc,
        "mc_standard_error": se,
        "z_score": z,
    }
    checks = {"threshold": bool(flips), "monte_carlo": z <= k_se}
    return Result(summary, checks, {"moments.csv": Table(["t", "finite", "norm", "profile_norm"], rows)})


def run_bound_check(cfg: _Cfg, st: Settings, budget: int) -> Result:
    grid = _grid(cfg)
    N, K = _truncation(cfg, budget)
    T = cfg.float("T", 1.0, lo=0.0, strict=True)
    ratio = cfg.float("c_ratio", 0.5, lo=0.0, strict=True)
    c = [ratio ** (k - 1) for k in range(1, K + 1)]
    A = spatial.assemble_A(grid)
    M = [spatial.assemble_Mk(grid, c[k - 1] * np.cos(k * np.pi * grid.x / grid.L), nu=1.0, form="multiplication")
         for k in range(1, K + 1)]
    step = _stepper(cfg)
    triple = spatial.NormalTriple.dirichlet(grid)
    u0 = np.sin(np.pi * grid.x / grid.L) + 0.3 * np.sin(2 * np.pi * grid.x / grid.L)
    p = parabolic.EvolutionProblem(A, M, T, N, u0=u0, triple=triple, stepper=step)
    rep = parabolic.evol_sp_bound_check(p, c=c, rtol=1e-6 * st.tolerance_scale)
    tol = cfg.float("identity_tolerance", 1e-3, lo=0.0, strict=True) * st.tolerance_scale
    summary = {
        "kind": "bound-check",
        "truncation": {"N": N, "K": K},
        "c": c,
        "p": rep["p"],
        "C_M": rep["C_M"],
        "max_ratio": rep["max_ratio"],
        "violations": rep["violations"][:20],
        "series": rep["series"],
        "closed_form": rep["closed_form"],
        "identity_error": rep["identity_error"],
    }
    checks = {"per_alpha_bound": rep["holds"], "closing_identity": rep["identity_error"] <= tol}
    return Result(summary, checks)


# -- registry -------------------------------------------------------------------


@dataclass(frozen=True)
class Kind:
    description: str
    defaults: dict[str, Any]
    runner: Callable[[_Cfg, Settings, int], Result]


_GRID = {"L": 1.0, "m": 64}
_STEPPER = {"method": "implicit_euler", "n_steps": 200, "richardson": 0, "n_store": 1}

KINDS: dict[str, Kind] = {
    "parabolic": Kind(
        "evolution propagator on a 1-D Dirichlet problem; reports coefficient norms and weighted norms",
        {
            "grid": dict(_GRID),
            "truncation": {"N": 3, "K": 3},
            "T": 1.0,
            "theta": 0.5,
            "coefficients": {"a": 1.0, "b": 0.0, "c": 0.0, "sigma": 0.2, "nu": 1.0, "noise_form": "first_order"},
            "data": {"u0": {"kind": "sine", "mode": 1, "amplitude": 1.0}, "f": 1.0},
            "stepper": dict(_STEPPER),
            "weights": [],
            "output": {"coefficients": False},
        },
        run_parabolic,
    ),
    "elliptic": Kind(
        "divergence-form stationary Dirichlet problem with choose_q weights",
        {
            "grid": dict(_GRID),
            "truncation": {"N": 4, "K": 3},
            "theta": 0.5,
            "coefficients": {"a": 1.0, "sigma": 0.1},
            "data": {"f": 1.0},
            "weights": [],
            "output": {"coefficients": False},
        },
        run_elliptic,
    ),
    "converge": Kind(
        "parabolic solution approaching the stationary one; writes decay.csv",
        {
            "grid": {"L": math.pi, "m": 48},
            "truncation": {"N": 4, "K": 3},
            "coefficients": {
                "a": {"kind": "bump", "base": 1.0, "height": 0.3, "center": 1.5, "width": 0.5},
                "b": 0.0, "c": -0.2, "sigma": 0.0, "nu": 0.4, "noise_form": "multiplication",
            },
            "data": {"f_star": {"kind": "linear", "a0": 0.0, "a1": 3.0}, "g_star": 0.5, "u0": "zero",
                     "forcing_rate": 1.0},
            "horizon_factor": 40.0,
            "burn_in_fraction": 0.25,
            "tolerance": 1e-6,
            "stepper": {"method": "implicit_euler", "n_steps": 4000, "richardson": 0, "n_store": 80},
            "weights": [{"variant": "dirichlet", "c": [1.0, 1.0, 1.0], "ell": 1.0, "name": "dirichlet"}],
        },
        run_converge,
    ),
    "oracle-compare": Kind(
        "propagator solvers against the permutation-sum oracles (parabolic and elliptic)",
        {
            "grid": dict(_GRID),
            "truncation": {"N": 3, "K": 3},
            "elliptic_N": 4,
            "T": 1.0,
            "oracle_steps": 2000,
            "stepper": {"method": "implicit_euler", "n_steps": 200, "richardson": 2, "n_store": 4},
            "parabolic_tolerance": 1e-4,
            "elliptic_tolerance": 1e-8,
        },
        run_oracle_compare,
    ),
    "inequality-suite": Kind(
        "factorial inequality, multinomial identity and (2N)^{q alpha} partial sums",
        {"truncation": {"N": 8, "K": 8}, "q": -1.1},
        run_inequality_suite,
    ),
    "example1": Kind(
        "scalar evolution u' = -lambda u + b u <> xi against its closed form",
        {
            "phi": 1.0, "lambda": 1.0, "b": 1.0, "T": 1.0,
            "truncation": {"N": 8},
            "tolerance": 1e-6,
            "max_total_steps": 10000,
            "stepper": {"method": "implicit_euler", "n_steps": 40, "richardson": 4, "n_store": 1},
        },
        run_example1,
    ),
    "example2": Kind(
        "stationary u = 1 + u <> xi: exact sqrt(n!) coefficients and the Kondratiev norm",
        {"truncation": {"N": 12}, "rho": -1.0, "ell": -1.0},
        run_example2,
    ),
    "example3": Kind(
        "second moment of u_t = a u_xx + (beta u + sigma u_x) <> xi: threshold and Monte Carlo",
        {"a": 1.0, "beta": 0.0, "sigma": 2.0, "times": [0.0, 0.45, 0.49, 0.51],
         "mc_time": 0.45, "mc_samples": 100000, "mc_standard_errors": 3.0},
        run_example3,
    ),
    "bound-check": Kind(
        "bounded multiplication noise: per-coefficient H bound and the closing exponential identity",
        {
            "grid": {"L": math.pi, "m": 16},
            "truncation": {"N": 10, "K": 6},
            "T": 1.0,
            "c_ratio": 0.5,
            "identity_tolerance": 1e-3,
            "stepper": {"method": "implicit_euler", "n_steps": 50, "richardson": 2, "n_store": 5},
        },
        run_bound_check,
    ),
}


def list_scenarios() -> list[str]:
    return list(KINDS)


def describe(kind: str) -> str:
    """Schema text with defaults for one kind."""
    if kind not in KINDS:
        raise KeyError(f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    k = KINDS[kind]
    body = json.dumps({"spec_version": SPEC_VERSION, "kind": kind, **k.defaults}, indent=2)
    return f"{kind}: {k.description}\n\ndefaults (JSON; TOML with the same keys also accepted):\n{body}\n"


_META_KEYS = ("spec_version", "kind", "settings", "threads", "seed", "tolerance_scale")


def run_scenario(data: dict[str, Any], settings: Settings) -> Result:
    """Validate ``data`` and run it."""
    version = data.get("spec_version", SPEC_VERSION)
    if str(version) != SPEC_VERSION:
        raise ConfigError("spec_version", f"unsupported version {version!r}; expected {SPEC_VERSION!r}")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    user = {k: v for k, v in data.items() if k not in _META_KEYS}
    merged = merged_with_defaults(kind, user)
    cfg = _Cfg(merged)
    budget = cfg.int("budget", DEFAULT_BUDGET, lo=1)
    result = KINDS[kind].runner(cfg, settings, budget)
    unknown = [p for p in _user_paths(user) if p not in cfg.used]
    if unknown:
        raise ConfigError(unknown[0], f"unknown key for kind {kind!r}")
    result.summary = {"spec_version": SPEC_VERSION, **result.summary,
                      "settings": {"seed": settings.seed, "tolerance_scale": settings.tolerance_scale},
                      "checks": result.checks, "passed": result.passed}
    return result
