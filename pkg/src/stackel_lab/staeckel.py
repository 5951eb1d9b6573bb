"""Staeckel metrics and their quadratic integrals in three dimensions.

The data is a 3x3 matrix of univariate polynomials, row ``i`` depending on
coordinate ``i`` only::

    E(x) K(x) P(x)
    F(y) L(y) Q(y)
    G(z) M(z) R(z)

With ``Delta`` its determinant and ``Phi^{ij}`` the cofactors, the metric is
``sum_i Delta / Phi^{i1} dx_i^2`` and the integrals are
``I_k = sum_i rho_ik Delta / Phi^{i1} dx_i^2`` with
``rho_ik = Phi^{ik} / Phi^{i1}``. All forms here are in velocities; the
momentum versions live in :mod:`stackel_lab.dynamics`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .algebra import Poly1, cofactor_matrix

ROW_LABELS = (("E", "K", "P"), ("F", "L", "Q"), ("G", "M", "R"))
COFACTOR_LABELS = ("LR-MQ", "MP-KR", "KQ-LP")
_SINGULAR_RTOL = 1e-12


class SingularityError(ValueError):
    """Delta or a first-column cofactor vanishes at the queried point."""

    def __init__(self, factor: str, point):
        self.factor = factor
        self.point = tuple(float(v) for v in np.ravel(point))
        super().__init__(f"{factor} vanishes at {self.point}")


class SignatureError(ValueError):
    """A metric coefficient is not strictly positive."""

    def __init__(self, axis: int, value: float, point):
        self.axis = axis
        self.value = float(value)
        self.point = tuple(float(v) for v in np.ravel(point))
        super().__init__(
            f"metric coefficient d{'xyz'[axis]}^2 = {self.value:.6g} is not positive at {self.point}"
        )


@dataclass(frozen=True)
class WorkingBox:
    """Closed coordinate box ``[x0,x1] x [y0,y1] x [z0,z1]``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __init__(self, ranges):
        r = np.asarray(ranges, dtype=float)
        if r.shape != (3, 2):
            raise ValueError("box needs three (lo, hi) pairs")
        if np.any(r[:, 1] < r[:, 0]) or not np.all(np.isfinite(r)):
            raise ValueError(f"empty or invalid box {r.tolist()}")
        object.__setattr__(self, "lo", tuple(r[:, 0].tolist()))
        object.__setattr__(self, "hi", tuple(r[:, 1].tolist()))

    @property
    def ranges(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self.lo, self.hi)]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    def contains(self, pt, tol: float = 0.0) -> bool:
        p = np.asarray(pt, dtype=float)[:3]
        return bool(np.all(p >= np.array(self.lo) - tol) and np.all(p <= np.array(self.hi) + tol))

    def axes(self, n: int) -> list[np.ndarray]:
        return [np.linspace(a, b, n) for a, b in zip(self.lo, self.hi)]

    def grid(self, n: int) -> np.ndarray:
        """Grid nodes, shape ``(n, n, n, 3)``, index order ``[ix, iy, iz]``."""
        X, Y, Z = np.meshgrid(*self.axes(n), indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def sample(self, rng: np.random.Generator, size: int, shrink: float = 0.0) -> np.ndarray:
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        pad = shrink * (hi - lo)
        return rng.uniform(lo + pad, hi - pad, size=(size, 3))


@dataclass(frozen=True)
class StaeckelData:
    """The nine polynomials; row ``i`` is a function of coordinate ``i``."""

    rows: tuple[tuple[Poly1, Poly1, Poly1], ...]
    drows: tuple[tuple[Poly1, Poly1, Poly1], ...] = field(init=False, repr=False, compare=False)

    def __init__(self, rows):
        rr = tuple(tuple(p if isinstance(p, Poly1) else Poly1(p) for p in row) for row in rows)
        if len(rr) != 3 or any(len(row) != 3 for row in rr):
            raise ValueError("Staeckel data needs a 3x3 matrix of polynomials")
        object.__setattr__(self, "rows", rr)
        object.__setattr__(self, "drows", tuple(tuple(p.derivative() for p in row) for row in rr))

    def __getitem__(self, name: str) -> Poly1:
        for i, labels in enumerate(ROW_LABELS):
            if name in labels:
                return self.rows[i][labels.index(name)]
        raise KeyError(name)

    def matrix(self, pt) -> np.ndarray:
        """Entries ``phi_ij(x_i)``; ``pt`` has shape ``(..., 3)``."""
        p = np.asarray(pt, dtype=float)
        return np.stack(
            [np.stack([self.rows[i][j](p[..., i]) for j in range(3)], axis=-1) for i in range(3)],
            axis=-2,
        )

    def dmatrix(self, pt) -> np.ndarray:
        """Derivatives ``phi_ij'(x_i)``; row ``i`` is the x_i-derivative of row ``i``."""
        p = np.asarray(pt, dtype=float)
        return np.stack(
            [np.stack([self.drows[i][j](p[..., i]) for j in range(3)], axis=-1) for i in range(3)],
            axis=-2,
        )

    def scaled_row(self, i: int, s: float) -> "StaeckelData":
        rows = [list(r) for r in self.rows]
        rows[i] = [s * p for p in rows[i]]
        return StaeckelData(rows)

    def kernel_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded coefficient arrays ``(3, 3, deg+1)`` for the compiled kernel."""
        deg = max(len(p.coeffs) for row in self.rows for p in row)
        coef = np.zeros((3, 3, deg))
        dcoef = np.zeros((3, 3, deg))
        for i in range(3):
            for j in range(3):
                c = self.rows[i][j].coeffs
                coef[i, j, : len(c)] = c
                d = self.drows[i][j].coeffs
                dcoef[i, j, : len(d)] = d
        return coef, dcoef

    def to_json_obj(self) -> list:
        return [[p.tolist() for p in row] for row in self.rows]


# -- pointwise quantities -----------------------------------------------------

def _letters(data: StaeckelData, pt):
    m = data.matrix(pt)
    return [m[..., i, j] for i in range(3) for j in range(3)]


def delta_and_cofactors(data: StaeckelData, pt):
    """``Delta`` and the cofactor matrix ``Phi`` (0-based ``[..., i, j]``)."""
    m = data.matrix(pt)
    cof = cofactor_matrix(m)
    delta = np.einsum("...j,...j->...", m[..., 0, :], cof[..., 0, :])
    return delta, cof


def cofactor_gradients(data: StaeckelData, pt):
    """Exact coordinate derivatives of ``Delta`` and of every cofactor.

    Returns ``(delta, cof, ddelta, dcof)`` with ``ddelta[..., a]`` the
    derivative by ``x_a`` and ``dcof[..., a, i, j]`` that of ``Phi[i, j]``.
    Row ``a`` depends on ``x_a`` alone, so the derivative by ``x_a`` replaces
    row ``a`` with its derivative.
    """
    m = data.matrix(pt)
    dm = data.dmatrix(pt)
    cof = cofactor_matrix(m)
    delta = np.einsum("...j,...j->...", m[..., 0, :], cof[..., 0, :])
    ddelta = np.stack([np.einsum("...j,...j->...", dm[..., a, :], cof[..., a, :]) for a in range(3)], axis=-1)
    shape = m.shape[:-2]
    dcof = np.zeros(shape + (3, 3, 3))
    for a in range(3):
        for i in range(3):
            if i == a:
                continue
            r1 = m[..., (i + 1) % 3, :]
            r2 = m[..., (i + 2) % 3, :]
            if (i + 1) % 3 == a:
                r1 = dm[..., a, :]
            else:
                r2 = dm[..., a, :]
            dcof[..., a, i, :] = np.cross(r1, r2)
    return delta, cof, ddelta, dcof


def _check_nonsingular(data: StaeckelData, pt, delta, cof):
    m = np.abs(data.matrix(pt))
    scale3 = np.max(m) ** 3 if m.size else 1.0
    scale2 = np.max(m) ** 2 if m.size else 1.0
    if np.any(np.abs(delta) <= _SINGULAR_RTOL * scale3):
        raise SingularityError("Delta", pt)
    for i in range(3):
        if np.any(np.abs(cof[..., i, 0]) <= _SINGULAR_RTOL * scale2):
            raise SingularityError(COFACTOR_LABELS[i], pt)


def metric_coeffs(data: StaeckelData, pt, check: bool = True) -> np.ndarray:
    """Diagonal metric coefficients ``(g_xx, g_yy, g_zz)``, shape ``(..., 3)``."""
    E, K, P, F, L, Q, G, M, R = _letters(data, pt)
    delta = E * L * R + F * M * P + G * K * Q - E * M * Q - F * K * R - G * L * P
    dens = (L * R - M * Q, M * P - K * R, K * Q - L * P)
    if check:
        cof = np.stack([np.stack([d, np.zeros_like(d), np.zeros_like(d)], axis=-1) for d in dens], axis=-2)
        _check_nonsingular(data, pt, delta, cof)
    g = np.stack([delta / d for d in dens], axis=-1)
    if check and np.any(g <= 0):
        idx = np.argwhere(np.asarray(g) <= 0)[0]
        raise SignatureError(int(idx[-1]), np.asarray(g)[tuple(idx)], pt)
    return g


def metric(data: StaeckelData, pt) -> np.ndarray:
    """The metric at one point as a diagonal 3x3 form."""
    return np.diag(metric_coeffs(data, np.asarray(pt, dtype=float)[:3]))


def integral_coeffs(data: StaeckelData, pt, check: bool = True):
    """Velocity-form coefficients of ``I2`` and ``I3`` written out letter by letter."""
    E, K, P, F, L, Q, G, M, R = _letters(data, pt)
    delta = E * L * R + F * M * P + G * K * Q - E * M * Q - F * K * R - G * L * P
    d1, d2, d3 = L * R - M * Q, M * P - K * R, K * Q - L * P
    if check:
        metric_coeffs(data, pt, check=True)
    i2 = np.stack(
        [delta * (G * Q - F * R) / d1**2, delta * (E * R - G * P) / d2**2, delta * (F * P - E * Q) / d3**2],
        axis=-1,
    )
    i3 = np.stack(
        [delta * (F * M - G * L) / d1**2, delta * (G * K - E * M) / d2**2, delta * (E * L - F * K) / d3**2],
        axis=-1,
    )
    return i2, i3


def integral_coeffs_rho(data: StaeckelData, pt):
    """Same coefficients through ``rho_ik * g_i`` with ``rho_ik = Phi^{ik}/Phi^{i1}``."""
    delta, cof = delta_and_cofactors(data, pt)
    g = delta[..., None] / cof[..., :, 0]
    rho2 = cof[..., :, 1] / cof[..., :, 0]
    rho3 = cof[..., :, 2] / cof[..., :, 0]
    return rho2 * g, rho3 * g


def integrals(data: StaeckelData, pt):
    """``(I2, I3)`` at one point as diagonal 3x3 forms in velocities."""
    i2, i3 = integral_coeffs(data, np.asarray(pt, dtype=float)[:3])
    return np.diag(i2), np.diag(i3)


def momentum_weights(data: StaeckelData, pt) -> np.ndarray:
    """``w[..., k, i] = Phi^{i,k+1} / Delta``; ``I_k = sum_i w[k, i] p_i^2`` and ``H = w[0] . p^2 / 2``."""
    delta, cof = delta_and_cofactors(data, pt)
    return np.swapaxes(cof, -1, -2) / delta[..., None, None]


def momentum_weight_gradients(data: StaeckelData, pt):
    """Weights and their exact coordinate derivatives ``dw[..., a, k, i]``."""
    delta, cof, ddelta, dcof = cofactor_gradients(data, pt)
    w = np.swapaxes(cof, -1, -2) / delta[..., None, None]
    dw = (np.swapaxes(dcof, -1, -2) - w[..., None, :, :] * ddelta[..., :, None, None]) / delta[..., None, None, None]
    return w, dw


def metric_gradients(data: StaeckelData, pt):
    """Metric coefficients ``g[..., a]`` and ``dg[..., a, b] = d g_a / d x_b``."""
    delta, cof, ddelta, dcof = cofactor_gradients(data, pt)
    c1 = cof[..., :, 0]
    g = delta[..., None] / c1
    # dcof[..., b, a, 0] is the x_b-derivative of Phi^{a1}
    dc1 = np.swapaxes(dcof[..., :, :, 0], -1, -2)
    dg = (ddelta[..., None, :] * c1[..., :, None] - delta[..., None, None] * dc1) / c1[..., :, None] ** 2
    return g, dg


def christoffel_diagonal(g, dg) -> np.ndarray:
    """Christoffel symbols ``Gamma[a, b, c]`` of a diagonal metric at one point."""
    gam = np.zeros((3, 3, 3))
    for a in range(3):
        for b in range(3):
            for c in range(3):
                v = 0.0
                if a == c:
                    v += dg[a, b]
                if a == b:
                    v += dg[a, c]
                if b == c:
                    v -= dg[b, a]
                gam[a, b, c] = v / (2.0 * g[a])
    return gam


def christoffel(data: StaeckelData, pt) -> np.ndarray:
    """Levi-Civita symbols ``Gamma^a_{bc}`` from the exact metric derivatives."""
    g, dg = metric_gradients(data, np.asarray(pt, dtype=float)[:3])
    return christoffel_diagonal(g, dg)


class ReducedForm(NamedTuple):
    a: float
    k: float
    b: float
    l: float
    c: float
    m: float
    delta: float
    degenerate: bool


def reduced_form(data: StaeckelData, pt, tol: float = 1e-12) -> ReducedForm:
    """Ratios ``a=E/P, k=K/P, b=F/Q, l=L/Q, c=G/R, m=M/R`` and their ``delta``.

    ``Delta = P Q R delta`` with ``delta = a(l-m) + b(m-k) + c(k-l)``;
    ``degenerate`` flags ``|delta|`` below ``tol`` times the ratio scale.
    """
    E, K, P, F, L, Q, G, M, R = (float(v) for v in _letters(data, np.asarray(pt, dtype=float)[:3]))
    for name, v in (("P", P), ("Q", Q), ("R", R)):
        if v == 0.0:
            raise ZeroDivisionError(f"{name} vanishes at {tuple(np.ravel(pt)[:3])}")
    a, k, b, l, c, m = E / P, K / P, F / Q, L / Q, G / R, M / R
    delta = a * (l - m) + b * (m - k) + c * (k - l)
    scale = max(abs(a), abs(b), abs(c), 1e-300) * max(abs(k), abs(l), abs(m), 1e-300)
    return ReducedForm(a, k, b, l, c, m, delta, abs(delta) <= tol * scale)


def vandermonde(psi1: Poly1, psi2: Poly1, psi3: Poly1, signs: Sequence[float] = (1, 1, 1)) -> StaeckelData:
    """Rows ``s_i * (1, psi_i, psi_i^2)``.

    With all signs +1 the metric is never positive definite (one coefficient
    always has the opposite sign); ``signs=(1, -1, 1)`` gives the Riemannian
    version for coordinates ordered ``psi_1 < psi_2 < psi_3`` of one sign.
    """
    rows = []
    for psi, s in zip((psi1, psi2, psi3), signs):
        psi = psi if isinstance(psi, Poly1) else Poly1(psi)
        rows.append((Poly1((float(s),)), float(s) * psi, float(s) * (psi * psi)))
    return StaeckelData(rows)


# -- certification ---------------------------------------------------------------

@dataclass
class Certificate:
    certified: bool
    grid_n: int
    violation: dict | None
    min_abs_delta: float
    min_abs_cofactor: float
    min_metric: float

    def to_json_obj(self) -> dict:
        return {
            "certified": self.certified,
            "grid_n": self.grid_n,
            "violation": self.violation,
            "min_abs_delta": self.min_abs_delta,
            "min_abs_cofactor": self.min_abs_cofactor,
            "min_metric": self.min_metric,
        }


def certify(data: StaeckelData, box: WorkingBox, grid_n: int = 9) -> Certificate:
    """Check ``Delta != 0``, first-column cofactors ``!= 0`` and positive metric on a grid.

    Violations are returned, not raised; the first violating node in grid
    order (x slowest) is reported with the offending factor.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    nodes = box.grid(grid_n).reshape(-1, 3)
    m = data.matrix(nodes)
    scale = np.max(np.abs(m), axis=(-1, -2))
    delta, cof = delta_and_cofactors(data, nodes)
    first_col = cof[:, :, 0]
    bad_delta = np.abs(delta) <= _SINGULAR_RTOL * scale**3
    bad_cof = np.abs(first_col) <= _SINGULAR_RTOL * scale[:, None] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        g = delta[:, None] / first_col
    bad_sig = ~(g > 0)
    violation = None
    for n in range(nodes.shape[0]):
        pt = [float(v) for v in nodes[n]]
        if bad_delta[n]:
            violation = {"kind": "singular", "factor": "Delta", "point": pt}
        elif bad_cof[n].any():
            i = int(np.argmax(bad_cof[n]))
            violation = {"kind": "singular", "factor": COFACTOR_LABELS[i], "point": pt}
        elif bad_sig[n].any():
            i = int(np.argmax(bad_sig[n]))
            violation = {"kind": "signature", "factor": f"g_{'xyz'[i]}{'xyz'[i]}", "point": pt,
                         "value": float(g[n, i])}
        if violation:
            break
    return Certificate(
        certified=violation is None,
        grid_n=grid_n,
        violation=violation,
        min_abs_delta=float(np.min(np.abs(delta))),
        min_abs_cofactor=float(np.min(np.abs(first_col))),
        min_metric=float(np.nanmin(np.where(np.isfinite(g), g, np.nan))) if np.isfinite(g).any() else float("nan"),
    )


# -- JSON --------------------------------------------------------------------

def staeckel_from_json(obj) -> tuple[StaeckelData, WorkingBox]:
    """Read ``{"rows": 3x3 coefficient lists, "box": 3 pairs}``."""
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    try:
        rows = obj["rows"]
        box = obj["box"]
    except (KeyError, TypeError) as exc:
        raise ValueError("metric config needs 'rows' and 'box'") from exc
    if len(rows) != 3 or any(len(r) != 3 for r in rows):
        raise ValueError("'rows' must be 3 arrays of 3 coefficient arrays")
    for r in rows:
        for c in r:
            if not isinstance(c, list) or not c or not all(isinstance(v, (int, float)) for v in c):
                raise ValueError(f"bad polynomial coefficient array {c!r}")
    return StaeckelData([[Poly1(c) for c in r] for r in rows]), WorkingBox(box)


def staeckel_to_json(data: StaeckelData, box: WorkingBox) -> dict:
    return {"rows": data.to_json_obj(), "box": box.ranges}
