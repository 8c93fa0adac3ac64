"""Weight systems ``alpha -> r_alpha`` and weighted chaos norms.

Four closed-form families are provided plus a table variant for weights that
depend on a computed solution (reported post hoc).  All weights are evaluated
in the log domain once ``|alpha| > 20`` so that ratios of large factorials do
not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .multiindex import MultiIndex, enumerate_indices, level_indices, multinomial_coefficient

__all__ = [
    "WeightSystem",
    "weight",
    "log_weight",
    "weighted_norm",
    "level_sums",
    "choose_q",
    "kondratiev_constant",
    "power_2N_sum",
    "power_2N_product_bound",
]

_VARIANTS = ("product", "kondratiev", "propagator", "dirichlet", "table")
_LOG_THRESHOLD = 20


@dataclass(frozen=True)
class WeightSystem:
    """Immutable weight rule.

    Use the classmethod constructors rather than the raw fields.

    ``product``
        ``r_alpha^2 = q^alpha``.
    ``kondratiev``
        ``r_alpha^2 = (alpha!)^rho (2N)^{ell alpha}`` with ``rho, ell <= 0``.
    ``propagator``
        ``r_alpha = q^alpha / sqrt(|alpha|!)``.
    ``dirichlet``
        ``r_alpha^2 = c^{-2 alpha} (|alpha|!)^{-1} (2N)^{-2 ell alpha}``.
    ``table``
        explicit ``{alpha: r_alpha}``; indices outside the table get ``default``.
    """

    variant: str
    q: tuple[float, ...] = ()
    rho: float = 0.0
    ell: float = 0.0
    table: tuple[tuple[MultiIndex, float], ...] = ()
    default: float = 1.0
    name: str = ""
    _lookup: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown weight variant {self.variant!r}; expected one of {_VARIANTS}")
        if self.variant in ("product", "propagator", "dirichlet"):
            if not self.q or any(not (v > 0 and math.isfinite(v)) for v in self.q):
                raise ValueError(f"{self.variant} weights need positive finite parameters, got {self.q}")
        if self.variant == "kondratiev" and (self.rho > 0 or self.ell > 0):
            raise ValueError(f"kondratiev weights need rho <= 0 and ell <= 0, got rho={self.rho}, ell={self.ell}")
        if self.variant == "dirichlet" and not self.ell > 0:
            raise ValueError(f"dirichlet weights need ell > 0, got {self.ell}")
        if self.variant == "table":
            if any(not r > 0 for _, r in self.table) or not self.default > 0:
                raise ValueError("table weights must be positive")
            self._lookup.update(dict(self.table))
        if not self.name:
            object.__setattr__(self, "name", self.variant)

    # -- constructors -----------------------------------------------------
    @classmethod
    def product(cls, q: Sequence[float], name: str = "") -> "WeightSystem":
        return cls("product", q=tuple(float(v) for v in q), name=name)

    @classmethod
    def kondratiev(cls, rho: float = 0.0, ell: float = 0.0, name: str = "") -> "WeightSystem":
        return cls("kondratiev", rho=float(rho), ell=float(ell), name=name)

    @classmethod
    def propagator(cls, q: Sequence[float], name: str = "") -> "WeightSystem":
        return cls("propagator", q=tuple(float(v) for v in q), name=name)

    @classmethod
    def dirichlet(cls, c: Sequence[float], ell: float, name: str = "") -> "WeightSystem":
        return cls("dirichlet", q=tuple(float(v) for v in c), ell=float(ell), name=name)

    @classmethod
    def from_table(cls, table: Mapping[MultiIndex, float], default: float = 1.0, name: str = "") -> "WeightSystem":
        items = tuple(sorted(((a, float(r)) for a, r in table.items()), key=lambda kv: kv[0].sort_key()))
        return cls("table", table=items, default=float(default), name=name)

    @classmethod
    def posthoc(
        cls,
        coefficient_norms: Mapping[MultiIndex, float],
        base: "WeightSystem | None" = None,
        kappa: float = 1.0,
        name: str = "posthoc",
    ) -> "WeightSystem":
        """``r_alpha = min(rbar_alpha, (2N)^{-kappa alpha} / (1 + ||u_alpha||))``.

        ``rbar`` comes from ``base`` (all ones when omitted).  These weights
        depend on the computed solution, so they are only ever reported after
        a solve.
        """
        if not kappa > 0.5:
            raise ValueError(f"kappa must exceed 1/2, got {kappa}")
        table = {}
        for a, nrm in coefficient_norms.items():
            rbar = weight(base, a) if base is not None else 1.0
            table[a] = min(rbar, a.power_2N(-kappa) / (1.0 + float(nrm)))
        return cls.from_table(table, default=1.0, name=name)

    @classmethod
    def from_config(cls, spec: Mapping[str, Any]) -> "WeightSystem":
        """Build from ``{"variant": ..., params...}``; unknown keys raise ``ValueError``."""
        spec = dict(spec)
        variant = spec.pop("variant", None)
        name = str(spec.pop("name", "") or "")
        try:
            if variant == "product":
                return cls.product(spec.pop("q"), name=name) if not spec else _extra(spec)
            if variant == "propagator":
                return cls.propagator(spec.pop("q"), name=name) if not spec else _extra(spec)
            if variant == "kondratiev":
                out = cls.kondratiev(spec.pop("rho", 0.0), spec.pop("ell", 0.0), name=name)
                return out if not spec else _extra(spec)
            if variant == "dirichlet":
                out = cls.dirichlet(spec.pop("c"), spec.pop("ell"), name=name)
                return out if not spec else _extra(spec)
        except KeyError as exc:
            raise ValueError(f"weight system {variant!r} is missing field {exc.args[0]!r}") from None
        raise ValueError(f"unknown weight variant {variant!r}; expected product, kondratiev, propagator or dirichlet")

    def label(self) -> str:
        return self.name


def _extra(spec):
    raise ValueError(f"unexpected weight-system fields: {sorted(spec)}")


def _param(ws: WeightSystem, alpha: MultiIndex) -> None:
    if alpha.max_position > len(ws.q):
        raise ValueError(f"weight system {ws.name!r} has {len(ws.q)} parameters; {alpha} needs {alpha.max_position}")


def log_weight(ws: WeightSystem, alpha: MultiIndex) -> float:
    """``log r_alpha``."""
    v = ws.variant
    if v == "product":
        _param(ws, alpha)
        return 0.5 * alpha.log_power(ws.q)
    if v == "kondratiev":
        return 0.5 * (ws.rho * alpha.log_factorial() + alpha.log_power_2N(ws.ell))
    if v == "propagator":
        _param(ws, alpha)
        return alpha.log_power(ws.q) - 0.5 * math.lgamma(alpha.order + 1)
    if v == "dirichlet":
        _param(ws, alpha)
        return -alpha.log_power(ws.q) - 0.5 * math.lgamma(alpha.order + 1) + alpha.log_power_2N(-ws.ell)
    return math.log(ws._lookup.get(alpha, ws.default))


def weight(ws: WeightSystem, alpha: MultiIndex) -> float:
    """``r_alpha`` for the given system."""
    if ws.variant == "table":
        return ws._lookup.get(alpha, ws.default)
    if alpha.order > _LOG_THRESHOLD:
        return math.exp(log_weight(ws, alpha))
    v = ws.variant
    if v == "product":
        _param(ws, alpha)
        return math.sqrt(alpha.power(ws.q))
    if v == "kondratiev":
        return math.sqrt(float(alpha.factorial()) ** ws.rho * alpha.power_2N(ws.ell))
    if v == "propagator":
        _param(ws, alpha)
        return alpha.power(ws.q) / math.sqrt(math.factorial(alpha.order))
    _param(ws, alpha)
    inv_c = [1.0 / c for c in ws.q]
    return alpha.power(inv_c) / math.sqrt(math.factorial(alpha.order)) * alpha.power_2N(-ws.ell)


def _coeff_norm_default(c: Any) -> float:
    return float(np.sqrt(np.sum(np.abs(c) ** 2)))


def _norm_items(u: Any, coeff_norm: Callable[[Any], float] | None) -> list[tuple[MultiIndex, float]]:
    """Canonically ordered ``(alpha, ||u_alpha||)`` pairs from an expansion or mapping."""
    fn = coeff_norm or _coeff_norm_default
    items = [(a, c) for a, c in u.items()]
    items.sort(key=lambda kv: kv[0].sort_key())
    return [(a, fn(c)) for a, c in items]


def weighted_norm(u: Any, ws: WeightSystem, coeff_norm: Callable[[Any], float] | None = None) -> float:
    """``sqrt(sum_alpha r_alpha^2 ||u_alpha||^2)`` over the support of ``u``.

    ``u`` is a :class:`~chaosprop.chaos.ChaosExpansion` or any mapping from
    multi-indices to coefficients.  ``coeff_norm`` defaults to the Euclidean
    norm of the coefficient array.
    """
    terms = [weight(ws, a) ** 2 * n**2 for a, n in _norm_items(u, coeff_norm)]
    return math.sqrt(math.fsum(terms))


def level_sums(
    u: Any, ws_q: Sequence[float] | None = None, coeff_norm: Callable[[Any], float] | None = None
) -> dict[int, float]:
    """``S_n = sum_{|alpha|=n} q^{2 alpha} ||u_alpha||^2`` for each level present.

    With ``ws_q=None`` the unweighted sums are returned.
    """
    out: dict[int, list[float]] = {}
    for a, n in _norm_items(u, coeff_norm):
        w = a.power(ws_q) ** 2 if ws_q is not None else 1.0
        out.setdefault(a.order, []).append(w * n**2)
    return {lvl: math.fsum(v) for lvl, v in sorted(out.items())}


def choose_q(C: Sequence[float], theta: float = 0.5) -> list[float]:
    """``q_k = sqrt(theta * 6 / (pi^2 k^2)) / C_k``, so ``sum q_k^2 C_k^2 < theta``.

    A mode with ``C_k = 0`` does not enter the sum at all; it gets ``q_k = 1``.
    """
    if not 0 < theta < 1:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    out = []
    for k, ck in enumerate(C, start=1):
        ck = float(ck)
        if ck < 0 or not math.isfinite(ck):
            raise ValueError(f"C_{k} must be finite and non-negative, got {ck}")
        out.append(math.sqrt(theta * 6.0 / (math.pi**2 * k**2)) / ck if ck > 0 else 1.0)
    return out


def kondratiev_constant(ell: float, max_order: int, max_dim: int) -> float:
    """``C(ell) = (sum_alpha (|alpha|!/alpha!)^2 (2N)^{(-ell-4) alpha})^{1/2}`` over ``enumerate_indices(N, K)``."""
    if not ell > 1:
        raise ValueError(f"ell must exceed 1, got {ell}")
    terms = []
    for a in enumerate_indices(max_order, max_dim):
        terms.append(math.exp(2 * math.log(multinomial_coefficient(a)) + a.log_power_2N(-ell - 4)))
    return math.sqrt(math.fsum(terms))


def power_2N_sum(q: float, max_order: int, max_dim: int) -> float:
    """Partial sum ``sum_{alpha in enumerate(N, K)} (2N)^{q alpha}``."""
    return math.fsum(a.power_2N(q) for n in range(max_order + 1) for a in level_indices(n, max_dim))


def power_2N_product_bound(q: float, max_dim: int) -> float:
    """``prod_{k<=K} (1 - (2k)^q)^{-1}``: the full sum over ``alpha`` supported in ``1..K``."""
    if not q < 0:
        raise ValueError(f"q must be negative, got {q}")
    return math.prod(1.0 / (1.0 - (2.0 * k) ** q) for k in range(1, max_dim + 1))
