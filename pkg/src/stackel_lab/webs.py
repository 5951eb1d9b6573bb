"""Geodesic webs of a Staeckel metric and their abelian relations.

For pencil parameters ``(lambda, mu)`` the common zero directions of
``I2 - lambda g`` and ``I3 - mu g`` form four line fields. With
``D = (E + lambda K + mu P, F + lambda L + mu Q, G + lambda M + mu R)`` and
the closed forms ``omega_i = dx_i / sqrt|D_i|``, a direction is fixed by
the two linear equations

    e_k K omega_1 + e_l L omega_2 + M omega_3 = 0
    e_k P omega_1 + e_l Q omega_2 + R omega_3 = 0

for a sign pair ``(e_k, e_l)``. Together with the coordinate surfaces each
line field gives a 4-web; its abelian relations are found here both in
closed form and by a grid estimator.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .algebra import MPoly, nullspace_dim, parse_poly
from .staeckel import (StaeckelData, WorkingBox, delta_and_cofactors, integral_coeffs, metric_coeffs,
                       staeckel_from_json)

SIGN_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
PENCIL_LABELS = ("E+lam*K+mu*P", "F+lam*L+mu*Q", "G+lam*M+mu*R")


class RealnessError(ValueError):
    """The pencil factors do not share one sign, so the directions are not real."""

    def __init__(self, factor: str, values):
        self.factor = factor
        self.values = tuple(float(v) for v in values)
        super().__init__(f"realness condition fails at factor {factor}; values {self.values}")


class DegeneracyError(ValueError):
    """The direction system is rank deficient or the web is degenerate."""


def pencil_factors(data: StaeckelData, pt, lam: float, mu: float) -> np.ndarray:
    """``D_i = phi_i1 + lam phi_i2 + mu phi_i3`` at ``pt`` (shape ``(..., 3)``)."""
    m = data.matrix(pt)
    return m[..., 0] + lam * m[..., 1] + mu * m[..., 2]


def check_realness(D, strict: bool = True, zero_tol: float = 1e-14):
    """Raise :class:`RealnessError` unless all factors are nonzero and of one sign.

    With ``strict=False`` vanishing factors are allowed (a direction tangent
    to a coordinate surface); the remaining ones must still share a sign.
    """
    D = np.asarray(D, dtype=float)
    scale = max(float(np.max(np.abs(D))), 1e-300)
    zero = np.abs(D) <= zero_tol * scale
    if strict and zero.any():
        raise RealnessError(PENCIL_LABELS[int(np.argmax(zero))], D)
    live = ~zero
    if not live.any():
        raise RealnessError(PENCIL_LABELS[0], D)
    pos = (D > 0) & live
    neg = (D < 0) & live
    if pos.any() and neg.any():
        # the minority sign is the one that fails
        bad = neg if pos.sum() >= neg.sum() else pos
        raise RealnessError(PENCIL_LABELS[int(np.argmax(bad))], D)


def omega_components(data: StaeckelData, pt, e_k: int, e_l: int) -> np.ndarray:
    """Solution ``(omega_1, omega_2, omega_3)`` of the sign-adapted direction system.

    It is the cross product of the two coefficient rows, which reduces to
    ``(e_k Phi^{11}, e_l Phi^{21}, Phi^{31})`` up to the factor ``e_k e_l``.
    """
    m = data.matrix(pt)
    r1 = np.stack([e_k * m[..., 0, 1], e_l * m[..., 1, 1], m[..., 2, 1]], axis=-1)
    r2 = np.stack([e_k * m[..., 0, 2], e_l * m[..., 1, 2], m[..., 2, 2]], axis=-1)
    return e_k * e_l * np.cross(r1, r2)


def tau_field(data: StaeckelData, lam: float, mu: float, e_k: int, e_l: int) -> Callable:
    """Unnormalized direction field ``tau_i = sqrt|D_i| omega_i`` (vectorized)."""

    def field(pts):
        D = pencil_factors(data, pts, lam, mu)
        return np.sqrt(np.abs(D)) * omega_components(data, pts, e_k, e_l)

    return field


@dataclass
class WebDirectionSet:
    point: np.ndarray
    lam: float
    mu: float
    signs: tuple
    directions: np.ndarray
    metric: np.ndarray
    residuals: dict = field(default_factory=dict)

    def g_norm(self, v) -> float:
        return float(np.sqrt(np.dot(self.metric, np.asarray(v) ** 2)))

    def to_json_obj(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "lambda": self.lam,
            "mu": self.mu,
            "signs": [list(s) for s in self.signs],
            "directions": [[float(c) for c in d] for d in self.directions],
            "residuals": self.residuals,
        }


def web_directions(data: StaeckelData, pt, lam: float, mu: float, strict: bool = True,
                   check_tol: float = 1e-10) -> WebDirectionSet:
    """The four unit directions ``tau_(e_k, e_l)`` in the canonical sign order.

    Each direction is verified against ``I2(tau) = lam g(tau)`` and
    ``I3(tau) = mu g(tau)``; the worst residuals are kept in ``residuals``.
    """
    p = np.asarray(pt, dtype=float)[:3]
    D = pencil_factors(data, p, lam, mu)
    check_realness(D, strict=strict)
    g = metric_coeffs(data, p)
    i2, i3 = integral_coeffs(data, p)
    dirs = []
    for e_k, e_l in SIGN_PAIRS:
        w = omega_components(data, p, e_k, e_l)
        if np.linalg.norm(w) <= 1e-14 * max(1.0, float(np.abs(data.matrix(p)).max()) ** 2):
            raise DegeneracyError(f"direction system is rank deficient at {tuple(p)}")
        tau = np.sqrt(np.abs(D)) * w
        tau = tau / np.sqrt(np.dot(g, tau * tau))
        dirs.append(tau)
    dirs = np.array(dirs)
    r2 = float(np.max(np.abs((i2 - lam * g) @ (dirs * dirs).T)))
    r3 = float(np.max(np.abs((i3 - mu * g) @ (dirs * dirs).T)))
    ws = WebDirectionSet(p, float(lam), float(mu), SIGN_PAIRS, dirs, g, {"I2": r2, "I3": r3})
    if strict:
        if r2 > check_tol or r3 > check_tol:
            raise DegeneracyError(f"direction residuals {r2:.3g}, {r3:.3g} exceed {check_tol}")
        for a in range(4):
            for b in range(a + 1, 4):
                if _line_angle(dirs[a], dirs[b], g) <= 1e-9:
                    raise DegeneracyError("web directions are collinear")
    return ws


def _line_angle(u, v, g) -> float:
    """Angle between the lines spanned by ``u`` and ``v`` in the metric ``g``."""
    best = math.pi
    for s in (1.0, -1.0):
        a = math.sqrt(float(np.dot(g, (u - s * v) ** 2)))
        b = math.sqrt(float(np.dot(g, (u + s * v) ** 2)))
        best = min(best, 2.0 * math.atan2(a, b))
    return best


def reflect(v, axis: int | None):
    """Coordinate-plane reflection; with a diagonal metric this flips one component."""
    out = np.array(v, dtype=float)
    if axis is not None:
        out[..., axis] *= -1.0
    return out


@dataclass
class ReflectionReport:
    permutations: dict
    mismatch: dict
    ok: bool
    tol: float

    @property
    def max_mismatch(self) -> float:
        return max(self.mismatch.values()) if self.mismatch else 0.0

    def transitive(self) -> bool:
        reach = {0}
        frontier = [0]
        while frontier:
            k = frontier.pop()
            for perm in self.permutations.values():
                j = perm[k]
                if j is not None and j not in reach:
                    reach.add(j)
                    frontier.append(j)
        return len(reach) == 4

    def to_json_obj(self) -> dict:
        return {"permutations": {k: list(v) for k, v in self.permutations.items()},
                "mismatch": self.mismatch, "ok": self.ok, "tol": self.tol}


def reflection_permutes(ws: WebDirectionSet, tol: float = 1e-9, include_identity: bool = False) -> ReflectionReport:
    """Permutation of the four directions induced by each coordinate reflection.

    Directions are matched as lines. A reflection whose image misses the set
    by more than ``tol`` (radians) makes the report fail.
    """
    mirrors = [("pi1", 0), ("pi2", 1), ("pi3", 2)]
    if include_identity:
        mirrors.insert(0, ("identity", None))
    perms, mism = {}, {}
    ok = True
    for name, axis in mirrors:
        perm = []
        worst = 0.0
        for tau in ws.directions:
            img = reflect(tau, axis)
            angles = [_line_angle(img, other, ws.metric) for other in ws.directions]
            j = int(np.argmin(angles))
            worst = max(worst, angles[j])
            perm.append(j if angles[j] <= tol else None)
        if None in perm or len(set(perm)) != 4:
            ok = False
        perms[name] = tuple(perm)
        mism[name] = worst
    return ReflectionReport(perms, mism, ok, tol)


# -- abelian relations --------------------------------------------------------------

@dataclass
class AbelianRelation:
    """Four one-forms ``sigma_1..sigma_4``; ``sigma_i`` for ``i<4`` is a multiple of ``dx_i``.

    ``coeffs(pts)`` returns the ``(..., 4, 3)`` coefficient array in the
    coordinate coframe; the fourth row is minus the sum of the first three,
    so the four forms add up to zero exactly.
    """

    radial: Callable
    label: str = "relation"

    def coeffs(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        c = self.radial(pts)
        out = np.zeros(pts.shape[:-1] + (4, 3))
        for i in range(3):
            out[..., i, i] = -c[..., i]
        out[..., 3, :] = -(out[..., 0, :] + out[..., 1, :] + out[..., 2, :])
        return out

    def sum_residual(self, pts) -> float:
        c = self.coeffs(pts)
        return float(np.max(np.abs(c.sum(axis=-2))))

    def annihilation(self, pts, tangent: Callable) -> float:
        """Max of ``|sigma_4(tau)| / (|sigma_4| |tau|)`` over ``pts``."""
        pts = np.asarray(pts, dtype=float)
        s4 = self.coeffs(pts)[..., 3, :]
        t = tangent(pts)
        num = np.abs(np.sum(s4 * t, axis=-1))
        den = np.linalg.norm(s4, axis=-1) * np.linalg.norm(t, axis=-1)
        return float(np.max(num / np.where(den > 0, den, 1.0)))

    def closedness(self, pts, h: float = 1e-4) -> float:
        """Finite-difference curl of each component, relative to its size."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        worst = 0.0
        for pt in pts:
            jac = np.zeros((4, 3, 3))  # [form, coefficient j, derivative k]
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                jac[:, :, k] = (self.coeffs(pt + e) - self.coeffs(pt - e)) / (2 * h)
            scale = max(1.0, float(np.abs(self.coeffs(pt)).max()))
            curl = jac - np.swapaxes(jac, 1, 2)
            worst = max(worst, float(np.abs(curl).max()) / scale)
        return worst


def abelian_relations_a1_a2(data: StaeckelData, lam: float, mu: float, signs=(1, 1),
                            box: WorkingBox | None = None, n_check: int = 50, seed: int = 0,
                            check_tol: float = 1e-10):
    """The relations built from the middle and last columns of the Staeckel matrix.

    ``a1 = (-e_k K w1, -e_l L w2, -M w3, e_k K w1 + e_l L w2 + M w3)`` and the same
    with ``(P, Q, R)``. When ``box`` is given the relations are checked at
    ``n_check`` seeded points: realness, exact sum, and annihilation of the
    fourth form on ``tau``.
    """
    e_k, e_l = signs
    sgn = np.array([e_k, e_l, 1.0])

    def make(col):
        def radial(pts):
            m = data.matrix(pts)
            D = pencil_factors(data, pts, lam, mu)
            return sgn * m[..., :, col] / np.sqrt(np.abs(D))
        return radial

    a1 = AbelianRelation(make(1), "a1")
    a2 = AbelianRelation(make(2), "a2")
    if box is not None:
        rng = np.random.default_rng(seed)
        pts = box.sample(rng, n_check)
        for p in pts:
            check_realness(pencil_factors(data, p, lam, mu))
        tangent = tau_field(data, lam, mu, e_k, e_l)
        for rel in (a1, a2):
            if rel.sum_residual(pts) != 0.0:
                raise AssertionError("abelian relation does not sum to zero")
            res = rel.annihilation(pts, tangent)
            if res > check_tol:
                raise DegeneracyError(f"{rel.label} annihilation residual {res:.3g} exceeds {check_tol}")
    return a1, a2


def relation_gram_det(a1: AbelianRelation, a2: AbelianRelation, pts) -> float:
    """Normalized Gram determinant of two relations sampled at ``pts``; 1 means orthogonal."""
    v1 = a1.coeffs(pts).ravel()
    v2 = a2.coeffs(pts).ravel()
    gram = np.array([[v1 @ v1, v1 @ v2], [v2 @ v1, v2 @ v2]])
    return float(np.linalg.det(gram) / (gram[0, 0] * gram[1, 1]))


# -- grid rank estimator --------------------------------------------------------------

@dataclass
class GridWebSpec:
    """A web of coordinate surfaces plus one foliation by curves, sampled on a grid.

    ``field`` maps points ``(..., 3)`` to curve directions ``(..., 3)``;
    ``surfaces`` lists the coordinate axes whose level sets participate
    (all three for a 4-web, two for a 3-web).
    """

    box: WorkingBox
    n: int
    field: Callable
    surfaces: tuple = (0, 1, 2)
    label: str = "web"
    coframe: Callable | None = None


@dataclass
class RankResult:
    rank: int
    nullspace_dim: int
    basis: np.ndarray
    singular_values: np.ndarray
    gate: dict
    axes: list

    def functions(self, k: int) -> dict:
        """Relation ``k`` as sampled functions on the grid axes."""
        n = len(self.axes[0])
        names = ("u", "v", "w")
        return {names[i]: self.basis[j * n:(j + 1) * n, k] for j, i in enumerate(self.gate["surfaces"])}

    def to_json_obj(self, tail: int = 6) -> dict:
        s = self.singular_values
        return {
            "rank": self.rank,
            "nullspace_dim": self.nullspace_dim,
            "singular_value_tail": [float(v) for v in s[-tail:]],
            "gate": {k: v for k, v in self.gate.items() if k != "surfaces"},
            "basis_samples": [{k: [float(c) for c in v] for k, v in self.functions(j).items()}
                              for j in range(self.basis.shape[1])],
        }


def _assemble_slab(spec: GridWebSpec, axes, i_range):
    n = spec.n
    m = len(spec.surfaces)
    X, Y, Z = np.meshgrid(axes[0][i_range], axes[1], axes[2], indexing="ij")
    V = np.asarray(spec.field(np.stack([X, Y, Z], axis=-1)), dtype=float)
    index = np.meshgrid(i_range, np.arange(n), np.arange(n), indexing="ij")
    rows = np.zeros((X.size, m * n))
    r = np.arange(X.size)
    for j, axis in enumerate(spec.surfaces):
        rows[r, j * n + index[axis].ravel()] = V[..., axis].ravel()
    norms = np.linalg.norm(V[..., list(spec.surfaces)], axis=-1).ravel()
    return rows, norms, V


def assemble_rank_system(spec: GridWebSpec, jobs: int = 1):
    """Rows ``sum_i f_i(x_i) V_i = 0`` at every grid node, normalized by ``|V|``.

    The grid is split into x-slabs; with ``jobs > 1`` slabs are assembled in
    threads and concatenated in slab order, so the result does not depend on
    the partition.
    """
    if spec.n < 4:
        raise ValueError("grid resolution must be at least 4 per axis")
    axes = spec.box.axes(spec.n)
    slabs = [np.arange(i, i + 1) for i in range(spec.n)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda r: _assemble_slab(spec, axes, r), slabs))
    else:
        parts = [_assemble_slab(spec, axes, r) for r in slabs]
    rows = np.vstack([p[0] for p in parts])
    norms = np.concatenate([p[1] for p in parts])
    V = np.concatenate([p[2] for p in parts], axis=0)
    for axis in spec.surfaces:
        if np.max(np.abs(V[..., axis])) < 1e-12:
            raise DegeneracyError(
                f"degenerate web: curve field has vanishing d{'xyz'[axis]}-component on the grid")
    keep = norms > 0
    return rows[keep] / norms[keep, None], axes


def estimate_web_rank(spec: GridWebSpec, tol: float = 1e-8, gate_tol: float = 1e-8, jobs: int = 1) -> RankResult:
    """Dimension of the grid space of separated abelian relations.

    A relation is ``(-u(x) dx, -v(y) dy, -w(z) dz, u dx + v dy + w dz)``; its
    last form must vanish on the curve field at every node. Nullspace vectors
    are gated before they count: annihilation at most ``gate_tol`` relative
    to the vector's size, and the finite-difference curl of the assembled
    forms on the grid must vanish.
    """
    A, axes = assemble_rank_system(spec, jobs=jobs)
    dim, basis, s = nullspace_dim(A, tol)
    n = spec.n
    passed = []
    annih = []
    curls = []
    for k in range(dim):
        b = basis[:, k]
        r = float(np.max(np.abs(A @ b)) / max(float(np.max(np.abs(b))), 1e-300))
        annih.append(r)
        curls.append(_grid_curl(b, spec, axes))
        passed.append(r <= gate_tol and curls[-1] <= 1e-6)
    good = basis[:, [k for k in range(dim) if passed[k]]]
    gate = {"annihilation": annih, "closedness": curls, "passed": int(sum(passed)),
            "surfaces": tuple(spec.surfaces), "tol": tol, "gate_tol": gate_tol}
    return RankResult(int(sum(passed)), dim, good, s, gate, axes)


def _grid_curl(b, spec: GridWebSpec, axes) -> float:
    """Curl of ``u(x) dx + v(y) dy + w(z) dz`` by differences on the grid nodes."""
    n = spec.n
    comps = np.zeros((3, n, n, n))
    for j, axis in enumerate(spec.surfaces):
        f = b[j * n:(j + 1) * n]
        shape = [1, 1, 1]
        shape[axis] = n
        comps[axis] = np.broadcast_to(f.reshape(shape), (n, n, n))
    grads = [np.gradient(comps[a], *axes) for a in range(3)]  # grads[a][k] = d_k comp_a
    worst = 0.0
    for a in range(3):
        for k in range(3):
            if a != k:
                worst = max(worst, float(np.max(np.abs(grads[a][k] - grads[k][a]))))
    return worst / max(float(np.max(np.abs(b))), 1e-300)


def analytic_relation_vectors(data: StaeckelData, lam: float, mu: float, signs, axes) -> np.ndarray:
    """Grid samples of ``a1`` and ``a2`` in the estimator's unknowns (columns)."""
    e_k, e_l = signs
    sgn = (e_k, e_l, 1.0)
    cols = []
    for col in (1, 2):
        vec = []
        for i in range(3):
            t = np.asarray(axes[i])
            phi = data.rows[i][col](t)
            D = data.rows[i][0](t) + lam * data.rows[i][1](t) + mu * data.rows[i][2](t)
            vec.append(sgn[i] * phi / np.sqrt(np.abs(D)))
        cols.append(np.concatenate(vec))
    return np.array(cols).T


def subspace_angle(A, B) -> float:
    """Largest principal angle between ``span(A)`` and ``span(B)`` (columns)."""
    if A.shape[1] == 0 or B.shape[1] == 0:
        return math.pi / 2
    return float(np.max(scipy.linalg.subspace_angles(A, B)))


def staeckel_web_spec(data: StaeckelData, box: WorkingBox, lam: float, mu: float, signs=(1, 1),
                      n: int = 8) -> GridWebSpec:
    return GridWebSpec(box, n, tau_field(data, lam, mu, *signs), (0, 1, 2),
                       label=f"staeckel-tau lam={lam:.6g} mu={mu:.6g} signs={tuple(signs)}")


def admissible_pencil(data: StaeckelData, box: WorkingBox, rng: np.random.Generator, margin: float = 1e-3,
                      grid_n: int = 9, max_tries: int = 20000) -> tuple[float, float]:
    """Draw ``(lambda, mu)`` whose pencil factors are positive on the whole box grid.

    Candidates come from random phase points, where ``D_i = p_i^2 / 2H`` is
    positive by construction; they are kept if positivity holds at every
    grid node with the given margin.
    """
    nodes = box.grid(grid_n).reshape(-1, 3)
    for _ in range(max_tries):
        x = box.sample(rng, 1)[0]
        p = rng.normal(size=3)
        delta, cof = delta_and_cofactors(data, x)
        w = cof.T / delta
        h2 = float(w[0] @ p**2)
        lam, mu = float(w[1] @ p**2) / h2, float(w[2] @ p**2) / h2
        D = pencil_factors(data, nodes, lam, mu)
        if np.all(D > margin):
            return lam, mu
    raise RuntimeError("no admissible pencil parameters found")


# -- 3-webs: connection and curvature -------------------------------------------------

def default_coframe(field: Callable, factor: Callable | None = None) -> Callable:
    """Normalized coframe of a web of ``x``- and ``y``-surfaces and the curves of ``field``.

    ``wbar1 = eta dx``, ``wbar2 = -xi dy``, ``wbar3 = zeta dx - xi dz`` with
    ``(xi, eta, zeta)`` the curve field; then the curves are the kernel of
    ``wbar3`` and of ``wbar4 = wbar1 + wbar2 + wbar3``. ``factor`` multiplies
    all three forms.
    """

    def coframe(pts):
        V = np.asarray(field(pts), dtype=float)
        xi, eta, zeta = V[..., 0], V[..., 1], V[..., 2]
        z = np.zeros_like(xi)
        th = np.stack([np.stack([eta, z, z], -1), np.stack([z, -xi, z], -1), np.stack([zeta, z, -xi], -1)], -2)
        if factor is not None:
            th = th * np.asarray(factor(pts), dtype=float)[..., None, None]
        return th

    return coframe


def _exterior_derivative(forms: Callable, pt, h: float):
    """``d`` of the rows of ``forms`` at ``pt``: array ``[row, j, k] = d_j f_k - d_k f_j``."""
    pt = np.asarray(pt, dtype=float)
    th0 = np.asarray(forms(pt))
    jac = np.zeros(th0.shape + (3,))  # [row, k, j] = d_j theta_{row k}
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        jac[..., j] = (np.asarray(forms(pt + e)) - np.asarray(forms(pt - e))) / (2 * h)
    d = np.swapaxes(jac, -1, -2) - jac
    return th0, d


@dataclass
class ConnectionResult:
    exists: bool
    gamma: np.ndarray | None
    curvature: np.ndarray | None
    structure: dict
    existence_residual: float

    @property
    def curvature_norm(self) -> float:
        return float(np.linalg.norm(self.curvature)) if self.curvature is not None else float("nan")

    def to_json_obj(self) -> dict:
        return {
            "exists": self.exists,
            "gamma": None if self.gamma is None else [float(v) for v in self.gamma],
            "curvature": None if self.curvature is None else [float(v) for v in self.curvature],
            "curvature_norm": None if self.curvature is None else self.curvature_norm,
            "structure": self.structure,
            "existence_residual": self.existence_residual,
        }


def _structure(coframe: Callable, pt, h: float):
    th, d = _exterior_derivative(coframe, pt, h)
    tinv = np.linalg.inv(th)
    # C[a, b, c]: coefficient of wbar_b ^ wbar_c in d wbar_a
    C = np.einsum("ajk,jb,kc->abc", d, tinv, tinv)
    abar, bbar = C[0, 0, 1], C[0, 0, 2]
    pbar, qbar = C[1, 1, 2], -C[1, 0, 1]
    return th, {"a": float(abar), "b": float(bbar), "p": float(pbar), "q": float(qbar)}


def gamma_coordinates(coframe: Callable, pt, h: float) -> np.ndarray:
    """``gamma = qbar wbar1 + abar wbar2 + bbar wbar3`` in the ``dx, dy, dz`` coframe."""
    th, s = _structure(coframe, pt, h)
    return np.array([s["q"], s["a"], s["b"]]) @ th


def connection_and_curvature(web3: GridWebSpec, pt, h: float = 1e-3, exist_tol: float = 1e-3) -> ConnectionResult:
    """Connection form ``gamma`` and curvature ``d gamma`` of a 3-web at ``pt``.

    Structure coefficients come from central differences of the coframe
    with step ``h``; ``d gamma`` uses a second level of central differences.
    The connection exists when ``bbar = pbar`` (the condition
    ``d(wbar1 ^ wbar2) = 0`` written in the normalized coframe); otherwise the
    result reports ``exists=False`` and carries no curvature.

    ``curvature`` holds the ``(dx^dy, dx^dz, dy^dz)`` coefficients.
    """
    if tuple(web3.surfaces) != (0, 1):
        raise ValueError("connection_and_curvature expects a web of x- and y-surfaces")
    coframe = web3.coframe or default_coframe(web3.field)
    pt = np.asarray(pt, dtype=float)
    th, s = _structure(coframe, pt, h)
    resid = abs(s["b"] - s["p"])
    exists = resid <= exist_tol * (1.0 + abs(s["b"]) + abs(s["p"]))
    if not exists:
        return ConnectionResult(False, None, None, s, float(resid))
    gamma = np.array([s["q"], s["a"], s["b"]]) @ th
    _, dg = _exterior_derivative(lambda q: gamma_coordinates(coframe, q, h)[None, :], pt, h)
    dg = dg[0]
    curv = np.array([dg[0, 1], dg[0, 2], dg[1, 2]])
    return ConnectionResult(True, gamma, curv, s, float(resid))


def curvature_decay(web3: GridWebSpec, pt, hs: Sequence[float]) -> dict:
    """``|d gamma|`` at each step and the observed orders between successive steps."""
    norms = []
    exists = []
    for h in hs:
        r = connection_and_curvature(web3, pt, h)
        exists.append(r.exists)
        norms.append(r.curvature_norm)
    orders = []
    for k in range(len(hs) - 1):
        a, b = norms[k], norms[k + 1]
        if exists[k] and exists[k + 1] and a > 0 and b > 0:
            orders.append(math.log(a / b) / math.log(hs[k] / hs[k + 1]))
        else:
            orders.append(float("nan"))
    return {"h": [float(v) for v in hs], "norms": norms, "exists": exists, "orders": orders}


# -- random adapted webs ----------------------------------------------------------------

def random_poly3(rng: np.random.Generator, deg: int) -> MPoly:
    """Dense random polynomial in ``x, y, z`` of total degree ``deg``."""
    terms = {}
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            for c in range(deg + 1 - a - b):
                terms[(a, b, c)] = rng.normal()
    return MPoly(3, terms)


def _eval3(poly: MPoly, pts):
    return np.broadcast_to(np.asarray(poly(pts[..., 0], pts[..., 1], pts[..., 2]), dtype=float),
                           pts.shape[:-1])


def random_adapted_4web(rng: np.random.Generator, box: WorkingBox, n: int = 8, family: int | None = None):
    """Random curve field completing the three coordinate foliations to a 4-web.

    Families: ``0`` generic polynomial fields; ``1`` fields
    ``rho (h - j, f - h, j - f)`` with ``f(x), j(y), h(z)``, which carry two
    relations; ``2`` fields ``(A, B, -A - B)``, which carry one.

    Returns
    -------
    spec : GridWebSpec
    family : int
    """
    family = int(rng.integers(3)) if family is None else family
    if family == 0:
        ps = [random_poly3(rng, int(rng.integers(1, 4))) for _ in range(3)]

        def fld(pts):
            return np.stack([_eval3(q, pts) for q in ps], axis=-1)
    elif family == 1:
        cf, cj, ch = (rng.normal(size=2) for _ in range(3))

        def fld(pts):
            x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
            f = 0.5 + 0.5 * np.tanh(cf[0] + cf[1] * x)
            j = 2.0 + 0.5 * (1.0 + np.sin(cj[0] + cj[1] * y))
            h = 4.0 + 0.5 * (1.0 + np.cos(ch[0] + ch[1] * z))
            rho = 1.5 + np.sin(x + 2 * y - z)
            return np.stack([h - j, f - h, j - f], axis=-1) * rho[..., None]
    elif family == 2:
        A, B = random_poly3(rng, 2), random_poly3(rng, 2)

        def fld(pts):
            a, b = _eval3(A, pts), _eval3(B, pts)
            return np.stack([a, b, -a - b], axis=-1)
    else:
        raise ValueError("4-web family must be 0, 1 or 2")
    return GridWebSpec(box, n, fld, (0, 1, 2), label=f"random-4web-{family}"), family


def random_adapted_3web(rng: np.random.Generator, box: WorkingBox, n: int = 8, family: int | None = None):
    """Random curve field with the ``x``- and ``y``-surfaces: a 3-web.

    Families: ``0`` generic polynomial fields; ``1`` fields
    ``(rho v0(y), -rho u0(x), zeta)``, which carry one relation.
    """
    family = int(rng.integers(2)) if family is None else family
    if family == 0:
        ps = [random_poly3(rng, int(rng.integers(1, 4))) for _ in range(3)]

        def fld(pts):
            return np.stack([_eval3(q, pts) for q in ps], axis=-1)
    elif family == 1:
        cu, cv = rng.normal(size=3), rng.normal(size=3)
        rho, zeta = random_poly3(rng, 2), random_poly3(rng, 2)

        def fld(pts):
            x, y = pts[..., 0], pts[..., 1]
            u0 = cu[0] + cu[1] * x + cu[2] * x * x
            v0 = cv[0] + cv[1] * y + cv[2] * y * y
            r = _eval3(rho, pts)
            return np.stack([r * v0, -r * u0, _eval3(zeta, pts)], axis=-1)
    else:
        raise ValueError("3-web family must be 0 or 1")
    return GridWebSpec(box, n, fld, (0, 1), label=f"random-3web-{family}"), family


# -- configuration -------------------------------------------------------------------

def _poly_field(exprs):
    polys = [parse_poly(e) for e in exprs]

    def field(pts):
        pts = np.asarray(pts, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(p(pts[..., 0], pts[..., 1], pts[..., 2]), dtype=float),
                                         pts.shape[:-1]) for p in polys], axis=-1)

    return field


def web_spec_from_json(obj) -> tuple[GridWebSpec, dict]:
    """Read a web configuration.

    Keys: ``grid_n``, ``metric`` (a metric configuration, needed for
    ``staeckel-tau``) or ``box``, ``surfaces`` (default ``[0, 1, 2]``) and
    ``curve_field``: ``{"type": "staeckel-tau", "lambda", "mu", "e_k", "e_l"}``
    or ``{"type": "explicit", "components": [three polynomial strings]}``.
    Returns the spec and a context dict (metric data, pencil parameters).
    """
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    ctx: dict = {}
    data = None
    if "metric" in obj:
        data, box = staeckel_from_json(obj["metric"])
        ctx["data"] = data
    elif "box" in obj:
        box = WorkingBox(obj["box"])
    else:
        raise ValueError("web config needs 'metric' or 'box'")
    n = int(obj.get("grid_n", 8))
    surfaces = tuple(int(a) for a in obj.get("surfaces", (0, 1, 2)))
    cf = obj.get("curve_field")
    if not isinstance(cf, dict) or "type" not in cf:
        raise ValueError("web config needs a 'curve_field' with a 'type'")
    if cf["type"] == "staeckel-tau":
        if data is None:
            raise ValueError("'staeckel-tau' needs a 'metric'")
        lam, mu = float(cf["lambda"]), float(cf["mu"])
        signs = (int(cf.get("e_k", 1)), int(cf.get("e_l", 1)))
        field = tau_field(data, lam, mu, *signs)
        ctx.update(lam=lam, mu=mu, signs=signs)
    elif cf["type"] == "explicit":
        comps = cf.get("components")
        if not isinstance(comps, list) or len(comps) != 3:
            raise ValueError("'explicit' curve field needs three component expressions")
        field = _poly_field(comps)
    else:
        raise ValueError(f"unknown curve field type {cf['type']!r}")
    return GridWebSpec(box, n, field, surfaces, label=str(cf["type"])), ctx
