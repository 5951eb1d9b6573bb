"""Flat-space line geometry in Pluecker coordinates.

A line with direction ``(p, q, r)`` through ``(x, y, z)`` has moment
``a = qz - ry``, ``b = rx - pz``, ``c = py - qx``; every line satisfies
``ap + bq + cr = 0``. Along a straight geodesic the direction is the
momentum, so ``a, b, c`` are also phase-space observables, and quadratic
forms in the six coordinates give integrals of the flat geodesic flow.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import MPoly
from .dynamics import Observable, PhasePoly, _as_state, flat_hamiltonian

PLUCKER_LABELS = ("p", "q", "r", "a", "b", "c")


@dataclass(frozen=True)
class PluckerLine:
    """Line coordinates held as exact fractions."""

    p: Fraction
    q: Fraction
    r: Fraction
    a: Fraction
    b: Fraction
    c: Fraction

    def __post_init__(self):
        if self.p == 0 and self.q == 0 and self.r == 0:
            raise ValueError("a line needs a nonzero direction")

    @property
    def direction(self) -> np.ndarray:
        return np.array([float(self.p), float(self.q), float(self.r)])

    @property
    def moment(self) -> np.ndarray:
        return np.array([float(self.a), float(self.b), float(self.c)])

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.direction, self.moment])

    def identity(self) -> Fraction:
        """``ap + bq + cr``, exactly."""
        return self.a * self.p + self.b * self.q + self.c * self.r

    def scaled(self, s) -> "PluckerLine":
        s = Fraction(s)
        return PluckerLine(*(s * v for v in (self.p, self.q, self.r, self.a, self.b, self.c)))

    def same_line(self, other: "PluckerLine") -> bool:
        """Whether the coordinates agree up to a nonzero common factor."""
        u = (self.p, self.q, self.r, self.a, self.b, self.c)
        v = (other.p, other.q, other.r, other.a, other.b, other.c)
        k = next(i for i in range(6) if u[i] != 0)
        if v[k] == 0:
            return False
        s = v[k] / u[k]
        return all(s * ui == vi for ui, vi in zip(u, v))

    def to_json_obj(self) -> dict:
        return {k: float(getattr(self, k)) for k in PLUCKER_LABELS}


def line_through(point, direction) -> PluckerLine:
    """Pluecker coordinates of the line through ``point`` along ``direction``.

    Float inputs are converted to fractions without rounding, so the moment
    and the quadric identity are exact.
    """
    x, y, z = (Fraction(v) for v in point)
    p, q, r = (Fraction(v) for v in direction)
    if p == 0 and q == 0 and r == 0:
        raise ValueError("direction must be nonzero")
    return PluckerLine(p, q, r, q * z - r * y, r * x - p * z, p * y - q * x)


def _coords(L):
    if isinstance(L, PluckerLine):
        return L.array
    return np.asarray(L, dtype=float)


def tangent_complex_terms(A: float, B: float, C: float, L) -> np.ndarray:
    """The six monomials of ``Aa^2 + Bb^2 + Cc^2 - BCp^2 - ACq^2 - ABr^2``."""
    p, q, r, a, b, c = _coords(L)
    return np.array([A * a * a, B * b * b, C * c * c, -B * C * p * p, -A * C * q * q, -A * B * r * r])


def tangent_complex_value(A: float, B: float, C: float, L) -> float:
    """Quadratic complex of lines tangent to ``x^2/A + y^2/B + z^2/C = 1``."""
    if A == 0 or B == 0 or C == 0:
        raise ValueError("quadric semi-axes parameters must be nonzero")
    return float(np.sum(tangent_complex_terms(A, B, C, L)))


def tangent_complex_scale(A: float, B: float, C: float, L) -> float:
    return float(np.sum(np.abs(tangent_complex_terms(A, B, C, L))))


def j2_value(A: float, B: float, C: float, L) -> float:
    """``(B+C)p^2 + (A+C)q^2 + (A+B)r^2 - a^2 - b^2 - c^2``."""
    p, q, r, a, b, c = _coords(L)
    return float((B + C) * p * p + (A + C) * q * q + (A + B) * r * r - a * a - b * b - c * c)


def confocal_identity_residual(A: float, B: float, C: float, t: float, L) -> float:
    """``I2 - t J2 - (p^2 + q^2 + r^2) t^2``.

    This is the tangent-complex value of the confocal quadric with
    parameters ``(A+t, B+t, C+t)``, so it vanishes on lines tangent to it.
    """
    if A + t == 0 or B + t == 0 or C + t == 0:
        raise ValueError(f"confocal member at t={t} is degenerate")
    p, q, r = _coords(L)[:3]
    return tangent_complex_value(A, B, C, L) - t * j2_value(A, B, C, L) - (p * p + q * q + r * r) * t * t


def confocal_scale(A: float, B: float, C: float, t: float, L) -> float:
    return tangent_complex_scale(A + t, B + t, C + t, L)


def quadric_tangent_line(A: float, B: float, C: float, rng: np.random.Generator) -> PluckerLine:
    """Random tangent line to the ellipsoid ``x^2/A + y^2/B + z^2/C = 1`` (``A, B, C > 0``).

    A surface point comes from the scaled spherical parameterization and the
    direction is a random vector projected onto the tangent plane.
    """
    if min(A, B, C) <= 0:
        raise ValueError("tangency construction needs an ellipsoid (A, B, C > 0)")
    theta = math.acos(rng.uniform(-1.0, 1.0))
    phi = rng.uniform(0.0, 2 * math.pi)
    pt = np.array([math.sqrt(A) * math.sin(theta) * math.cos(phi),
                   math.sqrt(B) * math.sin(theta) * math.sin(phi),
                   math.sqrt(C) * math.cos(theta)])
    n = pt / np.array([A, B, C])
    d = rng.normal(size=3)
    d = d - (d @ n) / (n @ n) * n
    return line_through(pt, d)


def classify_line(A: float, B: float, C: float, L, tol: float = 1e-9) -> str:
    """``tangent``, ``secant`` or ``external`` relative to ``x^2/A + y^2/B + z^2/C = 1``.

    For an ellipsoid the tangent-complex value is negative exactly on secants.
    """
    v = tangent_complex_value(A, B, C, L)
    if abs(v) <= tol * max(tangent_complex_scale(A, B, C, L), 1e-300):
        return "tangent"
    return "secant" if v < 0 else "external"


def _classify_by_distance(A, B, C, point, direction) -> str:
    # intersection quadratic along point + s * direction
    w = 1.0 / np.array([A, B, C])
    qa = float(np.sum(w * direction**2))
    qb = float(2 * np.sum(w * point * direction))
    qc = float(np.sum(w * point**2)) - 1.0
    disc = qb * qb - 4 * qa * qc
    return "secant" if disc > 0 else "external"


def line_fixture_corpus(A: float, B: float, C: float, n_each: int, seed: int) -> dict:
    """Lines tagged ``tangent``, ``secant`` or ``external`` for an ellipsoid.

    Secant and external lines are labelled by the intersection discriminant,
    independently of :func:`classify_line`.
    """
    rng = np.random.default_rng(seed)
    out = {"quadric": [A, B, C], "seed": seed, "lines": []}
    for _ in range(n_each):
        out["lines"].append({"tag": "tangent", **quadric_tangent_line(A, B, C, rng).to_json_obj()})
    counts = {"secant": 0, "external": 0}
    scale = math.sqrt(max(A, B, C))
    while min(counts.values()) < n_each:
        point = rng.uniform(-2 * scale, 2 * scale, size=3)
        direction = rng.normal(size=3)
        tag = _classify_by_distance(A, B, C, point, direction)
        if counts[tag] >= n_each:
            continue
        counts[tag] += 1
        out["lines"].append({"tag": tag, **line_through(point, direction).to_json_obj()})
    return out


def dump_line_fixture(corpus: dict) -> str:
    return json.dumps(corpus, indent=1, sort_keys=True) + "\n"


# -- phase-space Pluecker observables ---------------------------------------------

def plucker_polys():
    """``(p, q, r, a, b, c)`` as polynomials in ``(x, y, z, px, py, pz)``."""
    x, y, z, px, py, pz = PhasePoly.variables()
    return px, py, pz, py * z - pz * y, pz * x - px * z, px * y - py * x


def _quad_form(Q, vec):
    Q = np.asarray(Q, dtype=float)
    out = MPoly.const(6, 0.0)
    for i in range(len(vec)):
        for j in range(len(vec)):
            if Q[i, j] != 0.0:
                out = out + Q[i, j] * vec[i] * vec[j]
    return out


def symmetry_case_integrals(case: str, params: dict):
    """Linear integral ``I1`` and quadratic partner ``I2`` of a flat symmetry case.

    ``translation``: ``I1 = r``, ``I2 = Q(p,q,r) + A c^2 + B cr + C cp + D cq``
    with ``params = {"Q": 3x3 symmetric, "A", "B", "C", "D"}``.
    ``rotation``: ``I1 = c``, ``I2 = A1(p^2+q^2) + A2 r^2 + B1(a^2+b^2) + B2 c^2
    + C1(aq - bp) + C2 cr``.
    ``screw``: ``I1 = alpha r + c``, ``I2 = A(p^2+q^2) + B r^2 + C c^2 + D cr``
    with ``alpha != 0``.

    Returns
    -------
    I1, I2 : PhasePoly
    """
    p, q, r, a, b, c = plucker_polys()
    if case == "translation":
        Q = np.asarray(params["Q"], dtype=float)
        if Q.shape != (3, 3) or not np.array_equal(Q, Q.T):
            raise ValueError("Q must be a symmetric 3x3 array")
        i2 = (_quad_form(Q, (p, q, r)) + params["A"] * c * c + params["B"] * c * r
              + params["C"] * c * p + params["D"] * c * q)
        i1 = r
    elif case == "rotation":
        i2 = (params["A1"] * (p * p + q * q) + params["A2"] * r * r + params["B1"] * (a * a + b * b)
              + params["B2"] * c * c + params["C1"] * (a * q - b * p) + params["C2"] * c * r)
        i1 = c
    elif case == "screw":
        alpha = float(params["alpha"])
        if alpha == 0.0:
            raise ValueError("screw case needs alpha != 0")
        i2 = (params["A"] * (p * p + q * q) + params["B"] * r * r + params["C"] * c * c
              + params["D"] * c * r)
        i1 = alpha * r + c
    else:
        raise ValueError(f"unknown symmetry case {case!r}")
    return PhasePoly(i1, name="I1"), PhasePoly(i2, name="I2")


def random_case_params(case: str, rng: np.random.Generator) -> dict:
    if case == "translation":
        Q = rng.normal(size=(3, 3))
        return {"Q": (Q + Q.T) / 2, **{k: rng.normal() for k in "ABCD"}}
    if case == "rotation":
        return {k: rng.normal() for k in ("A1", "A2", "B1", "B2", "C1", "C2")}
    if case == "screw":
        return {"alpha": rng.uniform(0.5, 2.0) * rng.choice([-1, 1]), **{k: rng.normal() for k in "ABCD"}}
    raise ValueError(f"unknown symmetry case {case!r}")


def momentum_hessian(obs: PhasePoly, position) -> np.ndarray:
    """Matrix of the momentum-quadratic part of ``obs`` at a spatial point."""
    x = [float(v) for v in position]
    out = np.empty((3, 3))
    for i in range(3):
        di = obs.poly.diff(3 + i)
        for j in range(3):
            out[i, j] = float(di.diff(3 + j)(*x, 0.0, 0.0, 0.0))
    return out


def translation_triple_forms(params: dict, position):
    """Momentum forms of ``{H, I2, r^2}`` for the translation case at ``position``."""
    _, i2 = symmetry_case_integrals("translation", params)
    r = plucker_polys()[2]
    return [momentum_hessian(flat_hamiltonian(), position), momentum_hessian(i2, position),
            momentum_hessian(PhasePoly(r * r), position)]


# -- exterior algebra of polynomial one-forms ---------------------------------------

def _xyz():
    return [MPoly.var(3, i) for i in range(3)]


def one_form_integrability(coeffs, pt) -> float:
    """Coefficient of ``d(omega) ^ omega`` on ``dy ^ dx ^ dz``.

    ``coeffs`` are the ``dx, dy, dz`` components of ``omega`` as
    three-variable polynomials. On ``dx ^ dy ^ dz`` the coefficient is
    ``omega . curl(omega)``; the basis swap negates it.
    """
    f = list(coeffs)
    curl = [f[2].diff(1) - f[1].diff(2), f[0].diff(2) - f[2].diff(0), f[1].diff(0) - f[0].diff(1)]
    vol = f[0] * curl[0] + f[1] * curl[1] + f[2] * curl[2]
    return 0.0 - float(vol(*[float(v) for v in pt]))


def screw_nonintegrability(alpha: float, pt) -> float:
    """Integrability scalar of the screw distribution ``alpha dz + y dx - x dy``."""
    x, y, _ = _xyz()
    return one_form_integrability([y, -x, MPoly.const(3, float(alpha))], pt)


# -- two commuting translations --------------------------------------------------

class TwoTranslationHamiltonian(Observable):
    """``H`` of ``g11(z) dx^2 + 2 g12(z) dx dy + g22(z) dy^2 + dz^2``.

    ``px`` and ``py`` are conserved because nothing depends on ``x`` or ``y``.
    """

    name = "H"

    def __init__(self, g11, g12, g22):
        self.g = (g11, g12, g22)
        self.dg = tuple(f.derivative() for f in self.g)

    def _inverse(self, z):
        g11, g12, g22 = (float(f(z)) for f in self.g)
        det = g11 * g22 - g12 * g12
        if not det > 0 or not g11 > 0:
            raise ValueError(f"metric block is not positive definite at z={z}")
        return g11, g12, g22, det

    def value(self, pt):
        s = _as_state(pt)
        g11, g12, g22, det = self._inverse(s[2])
        px, py, pz = s[3:]
        return 0.5 * ((g22 * px * px - 2 * g12 * px * py + g11 * py * py) / det + pz * pz)

    def grad(self, pt):
        s = _as_state(pt)
        z = s[2]
        g11, g12, g22, det = self._inverse(z)
        d11, d12, d22 = (float(f(z)) for f in self.dg)
        px, py, pz = s[3:]
        num = g22 * px * px - 2 * g12 * px * py + g11 * py * py
        dnum = d22 * px * px - 2 * d12 * px * py + d11 * py * py
        ddet = d11 * g22 + g11 * d22 - 2 * g12 * d12
        out = np.zeros(6)
        out[2] = 0.5 * (dnum * det - num * ddet) / det**2
        out[3] = (g22 * px - g12 * py) / det
        out[4] = (g11 * py - g12 * px) / det
        out[5] = pz
        return out
