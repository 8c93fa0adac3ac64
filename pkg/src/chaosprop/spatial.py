"""One-dimensional finite-difference operators on ``(0, L)`` with Dirichlet ends.

Everything acts on vectors of the ``m`` interior node values.  The normal
triple ``V = H^1_0``, ``H = L_2``, ``V' = H^{-1}`` is realised through Gram
matrices: ``G_H = h I`` and ``G_V = h L_h`` where ``L_h`` is the discrete
Dirichlet Laplacian ``-D^2``.  With the Cholesky factor ``G_V = R^T R``,

* ``||v||_V = ||R v||``,
* ``||F||_{V'} = ||R^{-T} G_H F||`` for ``F`` identified with an element of ``H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "Grid1D",
    "Coefficient",
    "DiscreteOperator",
    "NoiseBasis",
    "NormalTriple",
    "Stepper",
    "as_matrix",
    "assemble_A",
    "assemble_Mk",
    "laplacian",
    "noise_basis_sine",
    "power_iteration",
    "estimate_Ck",
    "inverse_norm",
    "dissipativity_constant",
    "h_operator_norm",
    "semigroup_apply",
    "semigroup_growth",
]


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``(0, L)`` with ``m`` interior nodes ``x_i = i h``."""

    L: float
    m: int

    def __post_init__(self):
        if self.m < 3:
            raise ValueError(f"need at least 3 interior nodes, got m={self.m}")
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got L={self.L}")

    @property
    def h(self) -> float:
        return self.L / (self.m + 1)

    @property
    def x(self) -> np.ndarray:
        return self.h * np.arange(1, self.m + 1)

    @property
    def x_half(self) -> np.ndarray:
        """The ``m + 1`` cell midpoints ``(i + 1/2) h``, ``i = 0..m``."""
        return self.h * (np.arange(self.m + 1) + 0.5)


# -- coefficient presets ------------------------------------------------------


@dataclass(frozen=True)
class Coefficient:
    """Named coefficient profile; no expression parsing.

    ``constant``: ``value``.
    ``linear``: ``a0 + a1 * x / L``.
    ``bump``: ``base + height * exp(-((x - center) / width)^2)``.
    """

    kind: str = "constant"
    params: tuple[tuple[str, float], ...] = ()
    L: float = 1.0

    _KINDS = {
        "constant": ("value",),
        "linear": ("a0", "a1"),
        "bump": ("base", "height", "center", "width"),
    }

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown coefficient preset {self.kind!r}; expected one of {sorted(self._KINDS)}")
        got = {k for k, _ in self.params}
        need = set(self._KINDS[self.kind])
        if got != need:
            raise ValueError(f"preset {self.kind!r} needs parameters {sorted(need)}, got {sorted(got)}")
        if self.kind == "bump" and not dict(self.params)["width"] > 0:
            raise ValueError("bump width must be positive")

    @classmethod
    def make(cls, kind: str, L: float = 1.0, **params: float) -> "Coefficient":
        return cls(kind, tuple(sorted((k, float(v)) for k, v in params.items())), float(L))

    @classmethod
    def from_config(cls, spec: Any, L: float) -> "Coefficient":
        if isinstance(spec, (int, float)):
            return cls.make("constant", L, value=spec)
        spec = dict(spec)
        kind = spec.pop("kind", "constant")
        return cls.make(kind, L, **spec)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = dict(self.params)
        if self.kind == "constant":
            return np.full_like(x, p["value"])
        if self.kind == "linear":
            return p["a0"] + p["a1"] * x / self.L
        return p["base"] + p["height"] * np.exp(-(((x - p["center"]) / p["width"]) ** 2))


def _sample(coef: Any, x: np.ndarray) -> np.ndarray:
    """Evaluate a scalar, callable or node array at ``x``."""
    if coef is None:
        return np.zeros_like(x)
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(x), dtype=float), x.shape).copy()
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full_like(x, float(arr))
    if arr.shape != x.shape:
        raise ValueError(f"coefficient array has shape {arr.shape}, expected {x.shape}")
    return arr


# -- operators ----------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse ``m x m`` matrix with a name and a symmetry flag."""

    matrix: sp.csr_matrix
    name: str = ""
    symmetric: bool = False

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=float)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError(f"operator must be square, got {mat.shape}")
        if not np.all(np.isfinite(mat.data)):
            raise ValueError(f"operator {self.name!r} has non-finite entries")
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_array(cls, arr, name: str = "", symmetric: bool | None = None) -> "DiscreteOperator":
        mat = sp.csr_matrix(np.atleast_2d(np.asarray(arr, dtype=float)))
        if symmetric is None:
            symmetric = abs(mat - mat.T).max() == 0 if mat.nnz else True
        return cls(mat, name, bool(symmetric))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return self.matrix @ v

    def __neg__(self) -> "DiscreteOperator":
        return DiscreteOperator(-self.matrix, f"-{self.name}", self.symmetric)

    def scaled(self, s: float, name: str | None = None) -> "DiscreteOperator":
        return DiscreteOperator(s * self.matrix, self.name if name is None else name, self.symmetric)

    def __add__(self, other: "DiscreteOperator") -> "DiscreteOperator":
        return DiscreteOperator(self.matrix + as_matrix(other), self.name, self.symmetric and _sym(other))


def _sym(op: Any) -> bool:
    return op.symmetric if isinstance(op, DiscreteOperator) else False


def as_matrix(op: Any) -> sp.csr_matrix:
    """CSR view of a :class:`DiscreteOperator`, sparse matrix or dense array."""
    if isinstance(op, DiscreteOperator):
        return op.matrix
    if sp.issparse(op):
        return sp.csr_matrix(op, dtype=float)
    return sp.csr_matrix(np.atleast_2d(np.asarray(op, dtype=float)))


def laplacian(grid: Grid1D) -> sp.csr_matrix:
    """Discrete Dirichlet Laplacian ``-D^2`` (positive definite)."""
    m, h = grid.m, grid.h
    return sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1], format="csr") / h**2


def _flux_matrix(grid: Grid1D, a_half: np.ndarray) -> sp.csr_matrix:
    """``(a u')'`` by flux differencing with ``a`` at cell midpoints; symmetric."""
    h = grid.h
    main = -(a_half[:-1] + a_half[1:]) / h**2
    off = a_half[1:-1] / h**2
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _centered_d1(grid: Grid1D) -> sp.csr_matrix:
    m = grid.m
    return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [-1, 1], format="csr") / (2 * grid.h)


def assemble_A(
    grid: Grid1D,
    a: Any = 1.0,
    b: Any = 0.0,
    c: Any = 0.0,
    form: str = "nondivergence",
    ellipticity: float = 0.0,
) -> DiscreteOperator:
    """Second-order operator ``a u'' + b u' + c u`` or ``(a u')' + b u' + c u``.

    Parameters
    ----------
    grid : Grid1D
    a, b, c : float, callable or array
        Coefficients.  In divergence form ``a`` must be a scalar or callable,
        since it is sampled at cell midpoints.
    form : {"nondivergence", "divergence"}
    ellipticity : float, optional
        Lower bound ``A_1``; ``a`` must exceed it (and be positive) everywhere
        it is sampled.

    Returns
    -------
    DiscreteOperator
        The matrix of ``A`` itself, negative definite for ``a > 0`` and
        ``b = c = 0``.  The elliptic operator ``-(a u')'`` is its negative.
    """
    x = grid.x
    if form == "nondivergence":
        a_vals = _sample(a, x)
        second = sp.diags(a_vals) @ (-laplacian(grid))
    elif form == "divergence":
        if not (callable(a) or np.ndim(a) == 0):
            raise ValueError("divergence form needs a scalar or callable a(x) for midpoint sampling")
        a_vals = _sample(a, grid.x_half)
        second = _flux_matrix(grid, a_vals)
    else:
        raise ValueError(f"unknown form {form!r}; expected 'nondivergence' or 'divergence'")
    lower = max(float(ellipticity), 0.0)
    if np.min(a_vals) <= lower:
        raise ValueError(f"ellipticity violated: min a = {np.min(a_vals):.6g} must exceed {lower:.6g}")
    mat = second + sp.diags(_sample(b, x)) @ _centered_d1(grid) + sp.diags(_sample(c, x))
    symmetric = form == "divergence" and not np.any(_sample(b, x))
    return DiscreteOperator(sp.csr_matrix(mat), f"A[{form}]", symmetric)


def assemble_Mk(
    grid: Grid1D,
    h_k: Any,
    sigma: Any = 0.0,
    nu: Any = 0.0,
    form: str = "first_order",
) -> DiscreteOperator:
    """Noise operator for mode ``k``.

    ``first_order``: ``(sigma u' + nu u) h_k``.
    ``divergence``: ``h_k (sigma u')'`` with ``sigma`` at midpoints.
    ``multiplication``: ``diag(nu h_k)``.
    """
    x = grid.x
    hk = _sample(h_k, x)
    if form == "first_order":
        mat = sp.diags(hk) @ (sp.diags(_sample(sigma, x)) @ _centered_d1(grid) + sp.diags(_sample(nu, x)))
    elif form == "divergence":
        if not (callable(sigma) or np.ndim(sigma) == 0):
            raise ValueError("divergence form needs a scalar or callable sigma(x)")
        mat = sp.diags(hk) @ _flux_matrix(grid, _sample(sigma, grid.x_half))
    elif form == "multiplication":
        mat = sp.diags(_sample(nu, x) * hk)
    else:
        raise ValueError(f"unknown form {form!r}; expected first_order, divergence or multiplication")
    return DiscreteOperator(sp.csr_matrix(mat), f"M[{form}]", form == "multiplication")


@dataclass(frozen=True)
class NoiseBasis:
    """Grid samples ``values[k-1] = h_k(x_i)`` and sup-bounds ``c[k-1]``."""

    values: np.ndarray
    c: np.ndarray

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, k: int) -> np.ndarray:
        """``h_k`` on the grid, ``k >= 1``."""
        if not 1 <= k <= self.K:
            raise IndexError(f"noise mode {k} outside 1..{self.K}")
        return self.values[k - 1]

    def gram(self, grid: Grid1D) -> np.ndarray:
        return grid.h * self.values @ self.values.T


def noise_basis_sine(grid: Grid1D, K: int) -> NoiseBasis:
    """``h_k(x) = sqrt(2/L) sin(k pi x / L)``; discretely orthonormal for ``K <= m``."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    k = np.arange(1, K + 1)[:, None]
    amp = math.sqrt(2.0 / grid.L)
    vals = amp * np.sin(k * np.pi * grid.x[None, :] / grid.L)
    return NoiseBasis(vals, np.full(K, amp))


# -- normal triple --------------------------------------------------------------


@dataclass(frozen=True)
class NormalTriple:
    """Gram matrices of ``H`` and ``V`` plus the Cholesky factor of ``G_V``.

    ``dirichlet`` gives ``H^1_0 / L_2 / H^{-1}`` on a grid; ``identity`` uses
    ``G_H = G_V = I`` (for small algebraic systems such as the scalar examples).
    """

    G_H: np.ndarray
    G_V: np.ndarray
    R: np.ndarray = field(repr=False)
    name: str = ""
    _sparse: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_sparse", (sp.csr_matrix(self.G_H), sp.csr_matrix(self.G_V)))

    @classmethod
    def dirichlet(cls, grid: Grid1D) -> "NormalTriple":
        G_H = grid.h * np.eye(grid.m)
        G_V = grid.h * laplacian(grid).toarray()
        return cls(G_H, G_V, sla.cholesky(G_V, lower=False), "dirichlet")

    @classmethod
    def identity(cls, m: int) -> "NormalTriple":
        eye = np.eye(m)
        return cls(eye, eye, eye, "identity")

    @property
    def size(self) -> int:
        return self.G_H.shape[0]

    def norm_H(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(math.sqrt(max(v @ self.G_H @ v, 0.0)))

    def norm_V(self, v) -> float:
        return float(np.linalg.norm(self.R @ np.asarray(v, dtype=float)))

    def norm_Vdual(self, F) -> float:
        y = sla.solve_triangular(self.R, self.G_H @ np.asarray(F, dtype=float), trans="T")
        return float(np.linalg.norm(y))

    def norms_H(self, U: np.ndarray) -> np.ndarray:
        """Column-wise ``H`` norms of an ``(m, n)`` array."""
        return np.sqrt(np.maximum(np.einsum("ij,ij->j", U, self._sparse[0] @ U), 0.0))

    def norms_V(self, U: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(np.einsum("ij,ij->j", U, self._sparse[1] @ U), 0.0))


# -- operator-norm estimates -------------------------------------------------


def power_iteration(
    apply: Callable[[np.ndarray], np.ndarray],
    apply_T: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-12,
    maxiter: int = 10_000,
    x0: np.ndarray | None = None,
) -> float:
    """Largest singular value of a linear map by power iteration on ``T^T T``.

    ``apply`` and ``apply_T`` act on flat vectors of length ``dim``.  The
    start vector is deterministic unless ``x0`` is given.
    """
    x = np.linspace(1.0, 2.0, dim) if x0 is None else np.asarray(x0, dtype=float).ravel()
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0
    x = x / nrm
    sigma_sq = 0.0
    for _ in range(maxiter):
        y = apply_T(apply(x))
        new = float(x @ y)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        if abs(new - sigma_sq) <= tol * abs(new):
            sigma_sq = max(new, ny)
            break
        sigma_sq = new
    return math.sqrt(max(sigma_sq, 0.0))


def _dense(op: Any) -> np.ndarray:
    return as_matrix(op).toarray()


def inverse_norm(A: Any, triple: NormalTriple) -> float:
    """``C_A = ||A^{-1}||_{V' -> V} = ||R A^{-1} G_H^{-1} R^T||_2`` (dense)."""
    Ad = _dense(A)
    T = triple.R @ np.linalg.solve(Ad, np.linalg.solve(triple.G_H, triple.R.T))
    return float(np.linalg.norm(T, 2))


def estimate_Ck(
    A: Any,
    Mk: Any,
    triple: NormalTriple,
    mode: str = "elliptic",
    T: float | None = None,
    n_steps: int | None = None,
    tol: float = 1e-12,
) -> float:
    """Constant ``C_k`` for one noise operator.

    ``elliptic``
        ``||A^{-1} M_k||_{V -> V}``, the largest singular value of
        ``R A^{-1} M_k R^{-1}``, by power iteration.
    ``parabolic``
        Norm in ``L_2(0, T; V)`` of the map ``v -> w`` with ``w' = A w + M_k v``,
        ``w(0) = 0``, discretised by implicit Euler with ``n_steps`` steps and
        right-endpoint time sums (the same discrete norms the solver reports).

    Both are computed by power iteration and are lower estimates that
    converge to the discrete operator norm.
    """
    Am = as_matrix(A)
    Mm = as_matrix(Mk)
    if Mm.nnz == 0 or not np.any(Mm.data):
        return 0.0
    R = triple.R
    m = Am.shape[0]
    if mode == "elliptic":
        lu = spla.splu(sp.csc_matrix(Am))
        MmT = Mm.T.tocsr()

        def fwd(x):
            v = sla.solve_triangular(R, x)
            return R @ lu.solve(Mm @ v)

        def adj(y):
            z = lu.solve(R.T @ y, trans="T")
            return sla.solve_triangular(R, MmT @ z, trans="T")

        return power_iteration(fwd, adj, m, tol=tol)
    if mode != "parabolic":
        raise ValueError(f"unknown mode {mode!r}; expected 'elliptic' or 'parabolic'")
    if T is None or n_steps is None or T <= 0 or n_steps < 1:
        raise ValueError("parabolic mode needs T > 0 and n_steps >= 1")
    dt = T / n_steps
    P = sp.csc_matrix(sp.identity(m) - dt * Am)
    lu = spla.splu(P)
    MmT = Mm.T.tocsr()
    sq = math.sqrt(dt)

    def fwd(xflat):
        X = xflat.reshape(n_steps, m)
        V = sla.solve_triangular(R, X.T).T / sq
        w = np.zeros(m)
        out = np.empty_like(X)
        for j in range(n_steps):
            w = lu.solve(w + dt * (Mm @ V[j]))
            out[j] = sq * (R @ w)
        return out.ravel()

    def adj(gflat):
        G = gflat.reshape(n_steps, m)
        RtG = (R.T @ G.T).T * sq
        lam = np.zeros(m)
        out = np.empty_like(G)
        for j in range(n_steps - 1, -1, -1):
            lam = lu.solve(lam + RtG[j], trans="T")
            out[j] = dt * (MmT @ lam) / sq
        return sla.solve_triangular(R, out.T, trans="T").T.ravel()

    return power_iteration(fwd, adj, n_steps * m, tol=tol)


def dissipativity_constant(A: Any, triple: NormalTriple, kappa: float = 0.0) -> float:
    """Largest ``c`` with ``<A v, v> + kappa ||v||_V^2 <= -c ||v||_H^2`` for all ``v``.

    ``<A v, v> = v^T G_H A v``; ``c`` is minus the top eigenvalue of the
    symmetric pencil ``(sym(G_H A) + kappa G_V, G_H)``.  A positive value
    means the discrete problem is dissipative.
    """
    S = triple.G_H @ _dense(A)
    S = 0.5 * (S + S.T) + kappa * triple.G_V
    top = sla.eigh(S, triple.G_H, eigvals_only=True, subset_by_index=[S.shape[0] - 1, S.shape[0] - 1])
    return float(-top[0])


def h_operator_norm(M: Any, triple: NormalTriple) -> float:
    """``||M||_{H -> H}``."""
    L = sla.cholesky(triple.G_H, lower=False)
    T = L @ _dense(M) @ np.linalg.inv(L)
    return float(np.linalg.norm(T, 2))


# -- time stepping ------------------------------------------------------------


class Stepper:
    """Implicit Euler or Crank-Nicolson step for ``w' = A w + F(t)``.

    One sparse LU of the left-hand matrix is reused for all right-hand
    sides, including 2-D batches of shape ``(m, n)``.

    Implicit Euler: ``w_j = (I - dt A)^{-1} (w_{j-1} + dt F_j)``.
    Crank-Nicolson: ``w_j = (I - dt A / 2)^{-1} ((I + dt A / 2) w_{j-1} + dt (F_j + F_{j-1}) / 2)``.
    """

    METHODS = ("implicit_euler", "crank_nicolson")

    def __init__(self, A: Any, dt: float, method: str = "implicit_euler"):
        if method not in self.METHODS:
            raise ValueError(f"unknown stepper {method!r}; expected one of {self.METHODS}")
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.A = as_matrix(A)
        self.dt = float(dt)
        self.method = method
        m = self.A.shape[0]
        theta = 1.0 if method == "implicit_euler" else 0.5
        self._theta = theta
        self._lu = spla.splu(sp.csc_matrix(sp.identity(m) - theta * dt * self.A))
        self._explicit = None if theta == 1.0 else sp.csr_matrix(sp.identity(m) + (1 - theta) * dt * self.A)

    @property
    def order(self) -> int:
        return 1 if self.method == "implicit_euler" else 2

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``(I - theta dt A)^{-1}``."""
        return self._lu.solve(np.asarray(rhs, dtype=float))

    def step(self, w: np.ndarray, F_new=None, F_old=None) -> np.ndarray:
        """One step from ``w`` with forcing values at the new and old time levels."""
        if self._theta == 1.0:
            rhs = w if F_new is None else w + self.dt * F_new
        else:
            rhs = self._explicit @ w
            if F_new is not None:
                rhs = rhs + 0.5 * self.dt * F_new
            if F_old is not None:
                rhs = rhs + 0.5 * self.dt * F_old
        return self.solve(rhs)

    def matrix_norm_H(self, triple: NormalTriple) -> float:
        """``||one step||_{H -> H}`` for zero forcing (dense)."""
        m = self.A.shape[0]
        S = self._lu.solve(np.eye(m))
        if self._explicit is not None:
            S = S @ self._explicit.toarray()
        L = sla.cholesky(triple.G_H, lower=False)
        return float(np.linalg.norm(L @ S @ np.linalg.inv(L), 2))


def semigroup_apply(A: Any, v, t: float, n_steps: int = 100, method: str = "implicit_euler") -> np.ndarray:
    """Approximate ``Phi_t v`` with ``n_steps`` steps of the chosen stepper."""
    v = np.asarray(v, dtype=float)
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if t == 0:
        return v.copy()
    st = Stepper(A, t / n_steps, method)
    w = v.copy()
    for _ in range(n_steps):
        w = st.step(w)
    return w


def semigroup_growth(A: Any, triple: NormalTriple, dt: float | None = None, method: str = "implicit_euler") -> float:
    """Growth rate ``p`` with ``||Phi_t|| <= e^{p t}`` in ``H``.

    Without ``dt`` this is the continuous rate ``-dissipativity_constant(A)``.
    With ``dt`` it is ``log ||S|| / dt`` for the one-step map ``S`` of the
    stepper, the rate the discrete solution actually obeys.
    """
    if dt is None:
        return -dissipativity_constant(A, triple, 0.0)
    return math.log(Stepper(A, dt, method).matrix_norm_H(triple)) / dt
