"""Polynomials and small dense linear algebra.

Univariate polynomials (:class:`Poly1`) carry the Staeckel data, so every
derivative used downstream is exact. :class:`MPoly` is a sparse multivariate
polynomial used for flat-space phase observables and for polynomial curve
fields read from configuration files.
"""
from __future__ import annotations

import ast
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg


class DefinitenessError(ValueError):
    """Raised when a form that must be positive definite is not."""


@dataclass(frozen=True)
class Poly1:
    """Univariate polynomial with real coefficients in ascending degree."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float] = (0.0,)):
        c = tuple(float(v) for v in coeffs)
        if not c:
            c = (0.0,)
        if not all(math.isfinite(v) for v in c):
            raise ValueError(f"non-finite polynomial coefficient in {c}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def const(cls, value: float) -> "Poly1":
        return cls((value,))

    @classmethod
    def identity(cls) -> "Poly1":
        return cls((0.0, 1.0))

    @property
    def degree(self) -> int:
        """Degree, with -1 standing for the zero polynomial."""
        for k in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[k] != 0.0:
                return k
        return -1

    def __call__(self, t):
        # Horner; works for scalars and numpy arrays alike
        acc = self.coeffs[-1] * np.ones_like(t, dtype=float) if np.ndim(t) else self.coeffs[-1]
        for c in self.coeffs[-2::-1]:
            acc = acc * t + c
        return acc

    def derivative(self) -> "Poly1":
        if len(self.coeffs) == 1:
            return Poly1((0.0,))
        return Poly1(k * c for k, c in enumerate(self.coeffs) if k > 0)

    def trimmed(self) -> "Poly1":
        d = self.degree
        return Poly1(self.coeffs[: max(d, 0) + 1])

    def __add__(self, other):
        other = _as_poly1(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0.0,) * (n - len(self.coeffs))
        b = other.coeffs + (0.0,) * (n - len(other.coeffs))
        return Poly1(x + y for x, y in zip(a, b))

    __radd__ = __add__

    def __neg__(self):
        return Poly1(-c for c in self.coeffs)

    def __sub__(self, other):
        return self + (-_as_poly1(other))

    def __rsub__(self, other):
        return _as_poly1(other) - self

    def __mul__(self, other):
        other = _as_poly1(other)
        out = [0.0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return Poly1(out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0 or int(n) != n:
            raise ValueError("only non-negative integer powers")
        out = Poly1((1.0,))
        for _ in range(int(n)):
            out = out * self
        return out

    def tolist(self) -> list[float]:
        return list(self.coeffs)


def _as_poly1(p) -> Poly1:
    if isinstance(p, Poly1):
        return p
    return Poly1((float(p),))


def poly_eval(p: Poly1, t: float) -> float:
    return p(t)


def poly_derivative(p: Poly1) -> Poly1:
    return p.derivative()


# -- 3x3 determinants -------------------------------------------------------

def det3(m) -> float:
    """Determinant by the six-term expansion.

    With rows ``(E, K, P), (F, L, Q), (G, M, R)`` this is
    ``ELR + FMP + GKQ - EMQ - FKR - GLP``.
    """
    (E, K, P), (F, L, Q), (G, M, R) = np.asarray(m, dtype=float)
    return E * L * R + F * M * P + G * K * Q - E * M * Q - F * K * R - G * L * P


def cofactor3(m, i: int, j: int) -> float:
    """Signed cofactor of entry ``(i, j)``; indices are 1-based."""
    if i not in (1, 2, 3) or j not in (1, 2, 3):
        raise IndexError(f"cofactor indices must lie in 1..3, got ({i}, {j})")
    a = np.asarray(m, dtype=float)
    rows = [r for r in range(3) if r != i - 1]
    cols = [c for c in range(3) if c != j - 1]
    minor = a[rows[0], cols[0]] * a[rows[1], cols[1]] - a[rows[0], cols[1]] * a[rows[1], cols[0]]
    return (-1) ** (i + j) * minor


def cofactor_matrix(m) -> np.ndarray:
    """All nine cofactors; row ``i`` is ``cross(m[i+1], m[i+2])`` (cyclic).

    Broadcasts over leading axes, so ``m`` may have shape ``(..., 3, 3)``.
    """
    a = np.asarray(m, dtype=float)
    return np.stack(
        [np.cross(a[..., (i + 1) % 3, :], a[..., (i + 2) % 3, :]) for i in range(3)],
        axis=-2,
    )


def det3_bruteforce(m) -> float:
    """Leibniz permutation expansion; used as a test oracle."""
    a = np.asarray(m, dtype=float)
    total = 0.0
    for perm in itertools.permutations(range(3)):
        inversions = sum(1 for x, y in itertools.combinations(perm, 2) if x > y)
        total += (-1) ** inversions * a[0, perm[0]] * a[1, perm[1]] * a[2, perm[2]]
    return total


# -- symmetric forms ----------------------------------------------------------

def symform(xx, yy, zz, xy=0.0, xz=0.0, yz=0.0) -> np.ndarray:
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]], dtype=float)


def _cholesky(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.allclose(g, g.T, rtol=0, atol=1e-14 * max(1.0, np.abs(g).max())):
        raise DefinitenessError("metric form is not symmetric")
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("metric form is not positive definite") from exc


def generalized_eigen(I, g):
    """Principal invariants and directions of ``I`` with respect to ``g``.

    Solves ``(I - lam g) v = 0``. Invariants come back in ascending order and
    the directions are g-orthonormal (``v_i^T g v_j = delta_ij``), also for
    repeated invariants.

    Returns
    -------
    lam : ndarray, shape (3,)
    v : ndarray, shape (3, 3)
        Column ``k`` is the direction for ``lam[k]``.
    """
    _cholesky(g)
    lam, v = scipy.linalg.eigh(np.asarray(I, dtype=float), np.asarray(g, dtype=float))
    return lam, v


def simultaneous_diag_test(forms: Sequence, g, tol: float = 1e-10) -> bool:
    """Whether the forms admit a common g-orthogonal eigenbasis.

    Each ``g^{-1} Q`` is g-self-adjoint, so a common eigenbasis exists iff the
    operators pairwise commute. The commutator is compared against
    ``tol * |A| |B|`` (Frobenius norms) so the test does not depend on how
    the forms are scaled.
    """
    _cholesky(g)
    ginv = np.linalg.inv(np.asarray(g, dtype=float))
    ops = [ginv @ np.asarray(q, dtype=float) for q in forms]
    for a, b in itertools.combinations(ops, 2):
        scale = np.linalg.norm(a) * np.linalg.norm(b)
        if np.linalg.norm(a @ b - b @ a) > tol * max(scale, np.finfo(float).tiny):
            return False
    return True


def nullspace_dim(A, tol: float = 1e-8):
    """Numerical nullspace by SVD.

    Singular values below ``tol * s_max`` count as zero; for a wide matrix
    the missing singular values count as zero too.

    Returns
    -------
    dim : int
    basis : ndarray, shape (n, dim)
        Orthonormal right-singular vectors spanning the nullspace.
    s : ndarray
        All singular values, descending.
    """
    a = np.asarray(A, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("nullspace_dim needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol * smax)) if smax > 0 else 0
    basis = vh[rank:].T
    return a.shape[1] - rank, basis, s


# -- sparse multivariate polynomials -----------------------------------------

class MPoly:
    """Sparse polynomial in a fixed number of variables.

    Terms map exponent tuples to coefficients. Only the operations needed for
    exact phase-space calculus are provided.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], float] | None = None):
        self.nvars = nvars
        clean = {}
        for exp, c in (terms or {}).items():
            if len(exp) != nvars:
                raise ValueError("exponent length does not match nvars")
            if c != 0.0:
                clean[tuple(int(e) for e in exp)] = float(c)
        self.terms = clean

    @classmethod
    def const(cls, nvars: int, value: float) -> "MPoly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def var(cls, nvars: int, index: int) -> "MPoly":
        exp = [0] * nvars
        exp[index] = 1
        return cls(nvars, {tuple(exp): 1.0})

    def _coerce(self, other) -> "MPoly":
        if isinstance(other, MPoly):
            if other.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return other
        return MPoly.const(self.nvars, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return MPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return MPoly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = MPoly.const(self.nvars, 1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def diff(self, index: int) -> "MPoly":
        out = {}
        for e, c in self.terms.items():
            k = e[index]
            if k:
                ne = list(e)
                ne[index] = k - 1
                out[tuple(ne)] = out.get(tuple(ne), 0.0) + k * c
        return MPoly(self.nvars, out)

    def __call__(self, *args):
        if len(args) == 1 and np.ndim(args[0]) >= 1 and len(args[0]) == self.nvars:
            args = tuple(args[0])
        if len(args) != self.nvars:
            raise ValueError(f"expected {self.nvars} arguments")
        total = 0.0
        for e, c in self.terms.items():
            term = c
            for v, k in zip(args, e):
                if k:
                    term = term * v**k
            total = total + term
        if np.ndim(total) == 0 and any(np.ndim(a) for a in args):
            total = total * np.ones(np.broadcast(*args).shape)
        return total

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"MPoly({self.nvars}, {self.terms!r})"


_ALLOWED_BINOPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Pow: "**"}


def parse_poly(expr: str, variables: Sequence[str] = ("x", "y", "z")) -> MPoly:
    """Parse a polynomial expression such as ``"(2+y)*(1+x*z)"``.

    Only numbers, the given variable names, ``+ - *`` and non-negative
    integer powers are accepted.
    """
    n = len(variables)
    index = {name: k for k, name in enumerate(variables)}

    def walk(node) -> MPoly:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return MPoly.const(n, float(node.value))
        if isinstance(node, ast.Name):
            if node.id not in index:
                raise ValueError(f"unknown variable {node.id!r} in {expr!r}")
            return MPoly.var(n, index[node.id])
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = walk(node.operand)
            return -inner if isinstance(node.op, ast.USub) else inner
        if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
            left = walk(node.left)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(node.right, ast.Constant) and isinstance(node.right.value, int)
                        and node.right.value >= 0):
                    raise ValueError(f"only non-negative integer powers allowed in {expr!r}")
                return left ** node.right.value
            right = walk(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            return left * right
        raise ValueError(f"unsupported syntax in polynomial expression {expr!r}")

    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse polynomial expression {expr!r}") from exc
    return walk(tree)
