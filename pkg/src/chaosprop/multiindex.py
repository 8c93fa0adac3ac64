"""Multi-indices: finitely supported sequences of non-negative integers.

A multi-index ``alpha = (alpha_1, alpha_2, ...)`` labels one element of the
Cameron-Martin basis.  Positions are 1-based, matching the numbering of the
noise modes ``xi_1, xi_2, ...``.  Only the non-zero entries are stored.
"""

from __future__ import annotations

import itertools
import math
import re
from typing import Iterable, Iterator, Mapping, Sequence

__all__ = [
    "MultiIndex",
    "enumerate_indices",
    "level_indices",
    "count_indices",
    "characteristic_set",
    "from_characteristic_set",
    "check_factorial_inequality",
    "multinomial_coefficient",
]

_TOKEN = re.compile(r"^(\d+)\^(\d+)$")


class MultiIndex:
    """Immutable sparse multi-index.

    Parameters
    ----------
    entries : mapping or iterable of pairs, optional
        ``{k: alpha_k}`` or ``[(k, alpha_k), ...]`` with ``k >= 1``.  Zero
        values are dropped, so equal multi-indices always compare equal.

    Examples
    --------
    >>> a = MultiIndex({1: 1, 3: 2})
    >>> a.order, a.factorial()
    (3, 2)
    >>> str(a)
    '1^1 3^2'
    """

    __slots__ = ("_items", "_hash")

    def __init__(self, entries: Mapping[int, int] | Iterable[tuple[int, int]] = ()):
        if isinstance(entries, Mapping):
            pairs = entries.items()
        else:
            pairs = entries
        merged: dict[int, int] = {}
        for k, v in pairs:
            k, v = int(k), int(v)
            if k < 1:
                raise ValueError(f"multi-index positions start at 1, got {k}")
            if v < 0:
                raise ValueError(f"multi-index entries must be non-negative, got {v} at {k}")
            if v:
                merged[k] = merged.get(k, 0) + v
        self._items: tuple[tuple[int, int], ...] = tuple(sorted(merged.items()))
        self._hash = hash(self._items)

    # -- constructors -----------------------------------------------------
    @classmethod
    def zero(cls) -> "MultiIndex":
        return _ZERO

    @classmethod
    def unit(cls, k: int, n: int = 1) -> "MultiIndex":
        """``n * eps_k``."""
        return cls({k: n})

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> "MultiIndex":
        """Build from a dense tuple ``(alpha_1, ..., alpha_K)``."""
        return cls((k + 1, v) for k, v in enumerate(values))

    @classmethod
    def parse(cls, label: str) -> "MultiIndex":
        """Inverse of :meth:`label`: ``"1^2 3^1"`` or ``"(0)"``."""
        text = label.strip()
        if text in ("(0)", "0", ""):
            return _ZERO
        pairs = []
        for token in text.split():
            m = _TOKEN.match(token)
            if m is None:
                raise ValueError(f"cannot parse multi-index token {token!r} in {label!r}")
            pairs.append((int(m.group(1)), int(m.group(2))))
        ks = [k for k, _ in pairs]
        if ks != sorted(set(ks)):
            raise ValueError(f"positions must be strictly increasing in {label!r}")
        return cls(pairs)

    # -- basic accessors --------------------------------------------------
    @property
    def items(self) -> tuple[tuple[int, int], ...]:
        """Stored ``(k, alpha_k)`` pairs, positions strictly increasing."""
        return self._items

    @property
    def order(self) -> int:
        """``|alpha|``."""
        return sum(v for _, v in self._items)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(k for k, _ in self._items)

    @property
    def max_position(self) -> int:
        """Largest ``k`` with ``alpha_k > 0`` (0 for the zero index)."""
        return self._items[-1][0] if self._items else 0

    def is_zero(self) -> bool:
        return not self._items

    def __getitem__(self, k: int) -> int:
        for j, v in self._items:
            if j == k:
                return v
        return 0

    def to_dense(self, dim: int) -> tuple[int, ...]:
        if self.max_position > dim:
            raise ValueError(f"{self} has support beyond dimension {dim}")
        out = [0] * dim
        for k, v in self._items:
            out[k - 1] = v
        return tuple(out)

    # -- arithmetic -------------------------------------------------------
    def factorial(self) -> int:
        """``alpha! = prod_k alpha_k!`` as an exact integer."""
        out = 1
        for _, v in self._items:
            out *= math.factorial(v)
        return out

    def log_factorial(self) -> float:
        return math.fsum(math.lgamma(v + 1) for _, v in self._items)

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return MultiIndex(self._items + other._items)

    def add_eps(self, k: int) -> "MultiIndex":
        """``alpha + eps_k``."""
        return MultiIndex(self._items + ((k, 1),))

    def sub_eps(self, k: int) -> "MultiIndex":
        """``alpha - eps_k``; requires ``alpha_k >= 1``."""
        if self[k] < 1:
            raise ValueError(f"cannot subtract eps_{k} from {self}: entry is zero")
        return MultiIndex((j, v - 1 if j == k else v) for j, v in self._items)

    def dominates(self, other: "MultiIndex") -> bool:
        """True when ``other_k <= alpha_k`` for every k."""
        return all(self[k] >= v for k, v in other._items)

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        if not isinstance(other, MultiIndex):
            return NotImplemented
        if not self.dominates(other):
            raise ValueError(f"{other} is not dominated by {self}")
        diff = dict(self._items)
        for k, v in other._items:
            diff[k] -= v
        return MultiIndex(diff)

    def power(self, q: Sequence[float]) -> float:
        """``q^alpha = prod_k q_k^{alpha_k}``; ``q[0]`` is ``q_1``."""
        if self.max_position > len(q):
            raise ValueError(f"{self} needs at least {self.max_position} parameters, got {len(q)}")
        out = 1.0
        for k, v in self._items:
            out *= float(q[k - 1]) ** v
        return out

    def log_power(self, q: Sequence[float]) -> float:
        if self.max_position > len(q):
            raise ValueError(f"{self} needs at least {self.max_position} parameters, got {len(q)}")
        return math.fsum(v * math.log(q[k - 1]) for k, v in self._items)

    def power_2N(self, q: float) -> float:
        """``(2N)^{q alpha} = prod_k (2k)^{q alpha_k}``."""
        out = 1.0
        for k, v in self._items:
            out *= (2.0 * k) ** (q * v)
        return out if out > 0 or not self._items else math.exp(self.log_power_2N(q))

    def log_power_2N(self, q: float) -> float:
        return math.fsum(q * v * math.log(2 * k) for k, v in self._items)

    def characteristic_set(self) -> tuple[int, ...]:
        return characteristic_set(self)

    # -- protocol ---------------------------------------------------------
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return self._items == other._items

    def __hash__(self) -> int:
        return self._hash

    def sort_key(self) -> tuple[int, tuple[int, ...]]:
        """Canonical ordering: by order, then by characteristic set."""
        return (self.order, _charset(self._items))

    def __lt__(self, other: "MultiIndex") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "MultiIndex") -> bool:
        return self.sort_key() <= other.sort_key()

    def label(self) -> str:
        if not self._items:
            return "(0)"
        return " ".join(f"{k}^{v}" for k, v in self._items)

    __str__ = label

    def __repr__(self) -> str:
        return f"MultiIndex({dict(self._items)!r})"

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self._items)


_ZERO = MultiIndex()


def _charset(items: Iterable[tuple[int, int]]) -> tuple[int, ...]:
    out: list[int] = []
    for k, v in items:
        out.extend([k] * v)
    return tuple(out)


def characteristic_set(alpha: MultiIndex) -> tuple[int, ...]:
    """Non-decreasing tuple listing each position ``k`` exactly ``alpha_k`` times.

    >>> characteristic_set(MultiIndex.from_dense((1, 0, 2, 0, 0, 1, 0, 3)))
    (1, 3, 3, 6, 8, 8, 8)
    """
    if alpha.is_zero():
        raise ValueError("the characteristic set is defined only for |alpha| >= 1")
    return _charset(alpha.items)


def from_characteristic_set(ks: Iterable[int]) -> MultiIndex:
    return MultiIndex((k, 1) for k in ks)


def level_indices(order: int, max_dim: int) -> list[MultiIndex]:
    """All ``alpha`` with ``|alpha| = order`` supported in ``1..max_dim``."""
    if order < 0 or max_dim < 1:
        raise ValueError(f"need order >= 0 and max_dim >= 1, got {order}, {max_dim}")
    return [
        from_characteristic_set(ks)
        for ks in itertools.combinations_with_replacement(range(1, max_dim + 1), order)
    ]


def enumerate_indices(max_order: int, max_dim: int) -> list[MultiIndex]:
    """Truncated index set ``{alpha : |alpha| <= N, alpha_k = 0 for k > K}``.

    Ordered by ``(|alpha|, characteristic set)``, so every ``alpha - eps_k``
    appears before ``alpha``.  The length is ``binomial(N + K, K)``.
    """
    if max_order < 0:
        raise ValueError(f"max_order must be >= 0, got {max_order}")
    if max_dim < 1:
        raise ValueError(f"max_dim must be >= 1, got {max_dim}")
    out: list[MultiIndex] = []
    for n in range(max_order + 1):
        out.extend(level_indices(n, max_dim))
    return out


def count_indices(max_order: int, max_dim: int) -> int:
    return math.comb(max_order + max_dim, max_dim)


def multinomial_coefficient(alpha: MultiIndex) -> int:
    """``|alpha|! / alpha!``."""
    return math.factorial(alpha.order) // alpha.factorial()


def check_factorial_inequality(alpha: MultiIndex) -> bool:
    """Exact integer test of ``|alpha|! <= alpha! (2N)^{2 alpha}``."""
    rhs = alpha.factorial()
    for k, v in alpha.items:
        rhs *= (2 * k) ** (2 * v)
    return math.factorial(alpha.order) <= rhs
