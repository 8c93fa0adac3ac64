"""Finite Wiener chaos expansions over the Cameron-Martin basis.

An expansion ``u = sum_alpha u_alpha xi_alpha`` is stored as a mapping from
:class:`~chaosprop.multiindex.MultiIndex` to coefficients.  Coefficients may be
Python/numpy scalars or numpy arrays (spatial vectors); all arithmetic is
coefficientwise.  Families indexed by noise mode (the output of the Malliavin
derivative, the input of the Skorokhod operator) are plain ``dict[int,
ChaosExpansion]`` keyed by the mode number ``k >= 1``.
"""

from __future__ import annotations

import json
import math
from typing import Any, Callable, Iterable, Iterator, Mapping

import numpy as np

from .multiindex import MultiIndex, characteristic_set, enumerate_indices

__all__ = [
    "hermite",
    "xi_alpha",
    "basis_matrix",
    "ChaosExpansion",
    "wick_product",
    "malliavin_derivative",
    "skorokhod",
    "number_operator",
    "xi_from_characteristic_set",
    "gauss_hermite_gram",
    "monte_carlo_gram",
]


def hermite(n: int, x):
    """Probabilists' Hermite polynomial ``H_n(x)`` by three-term recurrence.

    ``H_0 = 1``, ``H_1 = x``, ``H_{n+1} = x H_n - n H_{n-1}``.  Works on
    scalars and arrays.
    """
    if n < 0:
        raise ValueError(f"Hermite order must be >= 0, got {n}")
    x = np.asarray(x, dtype=float) if not np.isscalar(x) else float(x)
    h_prev, h = np.ones_like(x) if not np.isscalar(x) else 1.0, x
    if n == 0:
        return h_prev
    for j in range(1, n):
        h_prev, h = h, x * h - j * h_prev
    return h


def _normalized_hermite_table(max_degree: int, x: np.ndarray) -> np.ndarray:
    """Rows ``H_n(x) / sqrt(n!)`` for ``n = 0..max_degree``; stable recurrence."""
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for n in range(1, max_degree):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def xi_alpha(alpha: MultiIndex, sample) -> float | np.ndarray:
    """Evaluate ``xi_alpha = prod_k H_{alpha_k}(xi_k) / sqrt(alpha_k!)``.

    ``sample`` holds ``(xi_1, ..., xi_K)`` along its last axis, so a 2-D array
    of shape ``(n_samples, K)`` gives one value per row.
    """
    s = np.asarray(sample, dtype=float)
    if s.ndim == 0:
        s = s.reshape(1)
    dim = s.shape[-1]
    if alpha.max_position > dim:
        raise ValueError(f"{alpha} needs {alpha.max_position} Gaussian variables, sample has {dim}")
    out = np.ones(s.shape[:-1])
    for k, v in alpha.items:
        out = out * hermite(v, s[..., k - 1]) / math.sqrt(math.factorial(v))
    return float(out) if out.ndim == 0 else out


def basis_matrix(indices: Iterable[MultiIndex], samples) -> np.ndarray:
    """Matrix ``B[i, j] = xi_{alpha_j}(sample_i)`` for 2-D ``samples``."""
    indices = list(indices)
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    dim = s.shape[1]
    max_deg = max((v for a in indices for _, v in a.items), default=0)
    if any(a.max_position > dim for a in indices):
        raise ValueError("index support exceeds the sample dimension")
    table = _normalized_hermite_table(max_deg, s.T)  # (deg, K, n)
    out = np.ones((s.shape[0], len(indices)))
    for j, a in enumerate(indices):
        for k, v in a.items:
            out[:, j] *= table[v, k - 1]
    return out


def _is_zero_coefficient(c: Any) -> bool:
    return not np.any(c)


class ChaosExpansion:
    """Immutable finite expansion ``sum_alpha c_alpha xi_alpha``.

    Parameters
    ----------
    coefficients : mapping
        ``{MultiIndex: coefficient}``.  Array coefficients are copied and
        frozen.
    max_order, max_dim : int, optional
        Truncation ``(N, K)``.  Defaults to the smallest truncation holding
        every key.  Keys outside the truncation raise ``ValueError``.
    """

    __slots__ = ("_coef", "max_order", "max_dim")

    def __init__(
        self,
        coefficients: Mapping[MultiIndex, Any] | None = None,
        max_order: int | None = None,
        max_dim: int | None = None,
    ):
        coef: dict[MultiIndex, Any] = {}
        for alpha, c in (coefficients or {}).items():
            if not isinstance(alpha, MultiIndex):
                alpha = MultiIndex.parse(alpha) if isinstance(alpha, str) else MultiIndex(alpha)
            if isinstance(c, np.ndarray):
                c = c.astype(float if not np.iscomplexobj(c) else complex, copy=True)
                c.setflags(write=False)
            coef[alpha] = c
        n_req = max((a.order for a in coef), default=0)
        k_req = max((a.max_position for a in coef), default=1)
        self.max_order = n_req if max_order is None else int(max_order)
        self.max_dim = max(k_req, 1) if max_dim is None else int(max_dim)
        if n_req > self.max_order or k_req > self.max_dim:
            raise ValueError(
                f"coefficients need truncation (N={n_req}, K={k_req}), "
                f"declared (N={self.max_order}, K={self.max_dim})"
            )
        self._coef = dict(sorted(coef.items(), key=lambda kv: kv[0].sort_key()))

    # -- constructors -----------------------------------------------------
    @classmethod
    def unit(cls, alpha: MultiIndex, value: Any = 1.0, **trunc) -> "ChaosExpansion":
        """Single basis element ``value * xi_alpha``."""
        return cls({alpha: value}, **trunc)

    @classmethod
    def constant(cls, value: Any = 1.0, **trunc) -> "ChaosExpansion":
        return cls({MultiIndex.zero(): value}, **trunc)

    @classmethod
    def gaussian(cls, k: int, **trunc) -> "ChaosExpansion":
        """The Gaussian variable ``xi_k`` itself."""
        return cls({MultiIndex.unit(k): 1.0}, **trunc)

    # -- mapping protocol -------------------------------------------------
    def __getitem__(self, alpha: MultiIndex) -> Any:
        return self._coef[alpha]

    def get(self, alpha: MultiIndex, default: Any = 0.0) -> Any:
        return self._coef.get(alpha, default)

    def __contains__(self, alpha: object) -> bool:
        return alpha in self._coef

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self._coef)

    def __len__(self) -> int:
        return len(self._coef)

    def items(self):
        return self._coef.items()

    def keys(self):
        return self._coef.keys()

    def values(self):
        return self._coef.values()

    @property
    def truncation(self) -> tuple[int, int]:
        return (self.max_order, self.max_dim)

    @property
    def mean(self) -> Any:
        """Coefficient of ``xi_(0)``, i.e. the expectation."""
        return self._coef.get(MultiIndex.zero(), 0.0)

    # -- arithmetic -------------------------------------------------------
    def _combine(self, other: "ChaosExpansion", op: Callable[[Any, Any], Any]) -> "ChaosExpansion":
        keys = list(self._coef) + [a for a in other._coef if a not in self._coef]
        zero_a = _zero_like(next(iter(self._coef.values()), 0.0))
        zero_b = _zero_like(next(iter(other._coef.values()), 0.0))
        out = {a: op(self._coef.get(a, zero_a), other._coef.get(a, zero_b)) for a in keys}
        return ChaosExpansion(
            out,
            max_order=max(self.max_order, other.max_order),
            max_dim=max(self.max_dim, other.max_dim),
        )

    def __add__(self, other: "ChaosExpansion") -> "ChaosExpansion":
        if not isinstance(other, ChaosExpansion):
            return NotImplemented
        return self._combine(other, lambda x, y: x + y)

    def __sub__(self, other: "ChaosExpansion") -> "ChaosExpansion":
        if not isinstance(other, ChaosExpansion):
            return NotImplemented
        return self._combine(other, lambda x, y: x - y)

    def __mul__(self, scalar) -> "ChaosExpansion":
        if isinstance(scalar, ChaosExpansion):
            return NotImplemented
        return self.map(lambda c: c * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "ChaosExpansion":
        return self.map(lambda c: -c)

    def map(self, fn: Callable[[Any], Any]) -> "ChaosExpansion":
        """Apply ``fn`` to every coefficient, keeping the truncation."""
        return ChaosExpansion(
            {a: fn(c) for a, c in self._coef.items()},
            max_order=self.max_order,
            max_dim=self.max_dim,
        )

    def restrict(self, max_order: int, max_dim: int | None = None) -> "ChaosExpansion":
        """Drop coefficients outside ``enumerate_indices(max_order, max_dim)``."""
        max_dim = self.max_dim if max_dim is None else max_dim
        keep = {a: c for a, c in self._coef.items() if a.order <= max_order and a.max_position <= max_dim}
        return ChaosExpansion(keep, max_order=max_order, max_dim=max_dim)

    def pruned(self, atol: float = 0.0) -> "ChaosExpansion":
        """Remove coefficients whose max-abs value is ``<= atol``."""
        keep = {a: c for a, c in self._coef.items() if np.max(np.abs(c)) > atol}
        return ChaosExpansion(keep, max_order=self.max_order, max_dim=self.max_dim)

    # -- norms and evaluation ---------------------------------------------
    def l2_norm(self) -> float:
        """``sqrt(sum_alpha |c_alpha|^2)``, i.e. ``sqrt(E|u|^2)`` by orthonormality."""
        return math.sqrt(math.fsum(float(np.sum(np.abs(c) ** 2)) for c in self._coef.values()))

    def evaluate(self, samples) -> np.ndarray:
        """Realisation(s) of ``u`` at Gaussian samples of shape ``(n, K')``.

        Returns shape ``(n,)`` for scalar coefficients and ``(n, m)`` for
        vector coefficients of length ``m``.
        """
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        keys = list(self._coef)
        if not keys:
            return np.zeros(s.shape[0])
        B = basis_matrix(keys, s)
        C = np.array([np.asarray(self._coef[a]) for a in keys])
        return np.tensordot(B, C, axes=(1, 0))

    def out_of_range(self, max_order: int, max_dim: int) -> list[MultiIndex]:
        """Keys with ``|alpha| > max_order`` or support beyond ``max_dim``."""
        return [a for a in self._coef if a.order > max_order or a.max_position > max_dim]

    def allclose(self, other: "ChaosExpansion", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        keys = set(self._coef) | set(other._coef)
        return all(
            np.allclose(self._coef.get(a, 0.0), other._coef.get(a, 0.0), atol=atol, rtol=rtol)
            for a in keys
        )

    # -- serialisation ----------------------------------------------------
    def to_records(self) -> list[dict[str, Any]]:
        """``[{"index": "1^2 3^1", "coefficient": number | list}, ...]``."""
        out = []
        for a, c in self._coef.items():
            value = np.asarray(c).tolist()
            out.append({"index": a.label(), "coefficient": value})
        return out

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]], **trunc) -> "ChaosExpansion":
        coef = {}
        for rec in records:
            alpha = MultiIndex.parse(rec["index"])
            value = rec["coefficient"]
            coef[alpha] = np.asarray(value, dtype=float) if isinstance(value, list) else float(value)
        return cls(coef, **trunc)

    def to_json(self) -> str:
        return json.dumps(self.to_records())

    @classmethod
    def from_json(cls, text: str, **trunc) -> "ChaosExpansion":
        return cls.from_records(json.loads(text), **trunc)

    def __repr__(self) -> str:
        body = ", ".join(f"{a}: {c!r}" for a, c in list(self._coef.items())[:6])
        more = ", ..." if len(self._coef) > 6 else ""
        return f"ChaosExpansion({{{body}{more}}}, N={self.max_order}, K={self.max_dim})"


def _zero_like(c: Any) -> Any:
    return np.zeros_like(c) if isinstance(c, np.ndarray) else 0.0


def _wick_factor(alpha: MultiIndex, beta: MultiIndex) -> float:
    gamma = alpha + beta
    return math.sqrt(gamma.factorial() / (alpha.factorial() * beta.factorial()))


def wick_product(a: ChaosExpansion, b: ChaosExpansion) -> ChaosExpansion:
    """``(a <> b)_gamma = sum_{alpha+beta=gamma} sqrt(gamma!/(alpha! beta!)) a_alpha b_beta``.

    The result carries truncation ``(N_a + N_b, max(K_a, K_b))``.
    """
    out: dict[MultiIndex, Any] = {}
    for alpha, ca in a.items():
        for beta, cb in b.items():
            gamma = alpha + beta
            term = _wick_factor(alpha, beta) * (ca * cb)
            out[gamma] = out[gamma] + term if gamma in out else term
    return ChaosExpansion(
        out,
        max_order=a.max_order + b.max_order,
        max_dim=max(a.max_dim, b.max_dim),
    )


def malliavin_derivative(a: ChaosExpansion) -> dict[int, ChaosExpansion]:
    """Noise-mode family ``(D a)_{k, alpha} = sqrt(alpha_k + 1) a_{alpha + eps_k}``.

    Modes ``k = 1..K`` are always present (possibly empty).  Each component
    has truncation ``(max(N - 1, 0), K)``.
    """
    n_out = max(a.max_order - 1, 0)
    parts: dict[int, dict[MultiIndex, Any]] = {k: {} for k in range(1, a.max_dim + 1)}
    for beta, c in a.items():
        for k, v in beta.items:
            # alpha = beta - eps_k; terms with alpha_k + 1 = 0 never occur
            parts[k][beta.sub_eps(k)] = math.sqrt(v) * c
    return {k: ChaosExpansion(p, max_order=n_out, max_dim=a.max_dim) for k, p in parts.items()}


def skorokhod(f: Mapping[int, ChaosExpansion]) -> ChaosExpansion:
    """``(delta f)_alpha = sum_k sqrt(alpha_k) f_{k, alpha - eps_k}``.

    Output truncation is ``(N + 1, max(K, largest mode))``.
    """
    out: dict[MultiIndex, Any] = {}
    n_in = max((fk.max_order for fk in f.values()), default=0)
    k_in = max([fk.max_dim for fk in f.values()] + [max(f, default=1)])
    for k, fk in f.items():
        for alpha, c in fk.items():
            gamma = alpha.add_eps(k)
            term = math.sqrt(gamma[k]) * c
            out[gamma] = out[gamma] + term if gamma in out else term
    return ChaosExpansion(out, max_order=n_in + 1, max_dim=k_in)


def number_operator(a: ChaosExpansion) -> ChaosExpansion:
    """``delta(D a)``; acts on ``xi_alpha`` as multiplication by ``|alpha|``."""
    return skorokhod(malliavin_derivative(a)).restrict(a.max_order, a.max_dim)


def xi_from_characteristic_set(alpha: MultiIndex) -> ChaosExpansion:
    """``xi_{k_1} <> ... <> xi_{k_n} / sqrt(alpha!)`` built by repeated Wick products."""
    ks = characteristic_set(alpha)
    dim = max(ks)
    acc = ChaosExpansion.gaussian(ks[0], max_dim=dim)
    for k in ks[1:]:
        acc = wick_product(acc, ChaosExpansion.gaussian(k, max_dim=dim))
    return acc * (1.0 / math.sqrt(alpha.factorial()))


def gauss_hermite_gram(max_order: int, max_dim: int, nodes: int | None = None) -> np.ndarray:
    """Gram matrix ``E[xi_alpha xi_beta]`` over ``enumerate_indices(N, K)`` by tensor Gauss-Hermite.

    With ``nodes >= N + 1`` per dimension the quadrature is exact for the
    polynomial products involved.
    """
    indices = enumerate_indices(max_order, max_dim)
    nodes = max_order + 1 if nodes is None else nodes
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    # per-dimension table of normalised Hermite values at the nodes
    table = _normalized_hermite_table(max_order, x)  # (deg, nodes)
    gram = np.ones((len(indices), len(indices)))
    for k in range(1, max_dim + 1):
        deg = np.array([a[k] for a in indices])
        vals = table[deg]  # (n_idx, nodes)
        gram *= (vals * w) @ vals.T
    return gram


def monte_carlo_gram(
    max_order: int,
    max_dim: int,
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of ``xi_alpha xi_beta`` over ``enumerate_indices(N, K)``."""
    indices = enumerate_indices(max_order, max_dim)
    n_idx = len(indices)
    s1 = np.zeros((n_idx, n_idx))
    s2 = np.zeros((n_idx, n_idx))
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        B = basis_matrix(indices, rng.standard_normal((m, max_dim)))
        s1 += B.T @ B
        B2 = B * B
        s2 += B2.T @ B2
        done += m
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0)
    return mean, np.sqrt(var / n_samples)
