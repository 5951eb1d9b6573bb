"""Geodesic flow on the cotangent bundle.

Phase points are ``(x, y, z, px, py, pz)``. The Hamiltonian is
``H = 1/2 sum_i p_i^2 / g_ii``; a diagonal velocity form ``sum_i c_i dx_i^2``
becomes ``sum_i c_i (p_i / g_ii)^2`` in momenta, which for the Staeckel
integrals gives ``I_k = sum_i Phi^{ik} / Delta p_i^2``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .algebra import MPoly
from .integrator import (STATUS_DONE, STATUS_EVENT, STATUS_MAX_STEPS, DenseSolution, dense_eval,
                         dop853_run)
from .staeckel import (StaeckelData, WorkingBox, christoffel_diagonal, metric_gradients,
                       momentum_weight_gradients, momentum_weights)

PHASE_LABELS = ("x", "y", "z", "px", "py", "pz")


class DomainError(ValueError):
    """A phase point lies outside the certified working box."""


class IntegrationError(RuntimeError):
    """The integrator could not continue; ``last_state`` is the last accepted state."""

    def __init__(self, message, last_time, last_state):
        super().__init__(message)
        self.last_time = float(last_time)
        self.last_state = np.asarray(last_state, dtype=float)


@dataclass(frozen=True)
class PhasePoint:
    x: float
    y: float
    z: float
    px: float
    py: float
    pz: float

    @classmethod
    def from_array(cls, a) -> "PhasePoint":
        v = [float(t) for t in np.ravel(a)]
        if len(v) != 6:
            raise ValueError("a phase point has six components")
        return cls(*v)

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.px, self.py, self.pz])

    @property
    def position(self) -> np.ndarray:
        return self.array[:3]

    @property
    def momentum(self) -> np.ndarray:
        return self.array[3:]


def _as_state(pt) -> np.ndarray:
    if isinstance(pt, PhasePoint):
        return pt.array
    a = np.asarray(pt, dtype=float).ravel()
    if a.size != 6:
        raise ValueError("a phase point has six components")
    return a


# -- observables ------------------------------------------------------------------

class Observable:
    """Function on phase space with exact partial derivatives.

    ``grad`` returns the six partials in the order of :data:`PHASE_LABELS`.
    ``box``, when set, is the domain on which the observable is valid.
    """

    box: WorkingBox | None = None
    name: str = "observable"

    def value(self, pt) -> float:
        raise NotImplementedError

    def grad(self, pt) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, pt) -> float:
        return self.value(_as_state(pt))

    def __mul__(self, other) -> "Observable":
        return ProductObservable(self, _as_observable(other))

    __rmul__ = __mul__

    def __add__(self, other) -> "Observable":
        return SumObservable(self, _as_observable(other))

    __radd__ = __add__

    def __neg__(self):
        return ProductObservable(ConstantObservable(-1.0), self)

    def __sub__(self, other):
        return SumObservable(self, -_as_observable(other))


class ConstantObservable(Observable):
    def __init__(self, c: float):
        self.c = float(c)
        self.name = repr(self.c)

    def value(self, pt):
        return self.c

    def grad(self, pt):
        return np.zeros(6)


def _as_observable(o) -> Observable:
    return o if isinstance(o, Observable) else ConstantObservable(o)


def _merge_box(a: Observable, b: Observable):
    return a.box if a.box is not None else b.box


class ProductObservable(Observable):
    def __init__(self, a: Observable, b: Observable):
        self.a, self.b = a, b
        self.box = _merge_box(a, b)
        self.name = f"({a.name})*({b.name})"

    def value(self, pt):
        s = _as_state(pt)
        return self.a.value(s) * self.b.value(s)

    def grad(self, pt):
        s = _as_state(pt)
        return self.a.value(s) * self.b.grad(s) + self.b.value(s) * self.a.grad(s)


class SumObservable(Observable):
    def __init__(self, a: Observable, b: Observable):
        self.a, self.b = a, b
        self.box = _merge_box(a, b)
        self.name = f"{a.name}+{b.name}"

    def value(self, pt):
        s = _as_state(pt)
        return self.a.value(s) + self.b.value(s)

    def grad(self, pt):
        s = _as_state(pt)
        return self.a.grad(s) + self.b.grad(s)


class CoordinateObservable(Observable):
    """One of the six canonical variables."""

    def __init__(self, index: int):
        if not 0 <= index < 6:
            raise IndexError("phase index must lie in 0..5")
        self.index = index
        self.name = PHASE_LABELS[index]

    def value(self, pt):
        return float(_as_state(pt)[self.index])

    def grad(self, pt):
        g = np.zeros(6)
        g[self.index] = 1.0
        return g


class PhasePoly(Observable):
    """Polynomial in ``(x, y, z, px, py, pz)``; derivatives by exact differentiation."""

    def __init__(self, poly: MPoly, name: str = "poly"):
        if poly.nvars != 6:
            raise ValueError("phase polynomials have six variables")
        self.poly = poly
        self.partials = [poly.diff(i) for i in range(6)]
        self.name = name

    @classmethod
    def variables(cls):
        return [MPoly.var(6, i) for i in range(6)]

    def value(self, pt):
        return float(self.poly(*_as_state(pt)))

    def grad(self, pt):
        s = _as_state(pt)
        return np.array([float(d(*s)) for d in self.partials])


class StaeckelQuadratic(Observable):
    """``H`` (``k=1``) or the integral ``I_k`` (``k=2, 3``) in momenta."""

    def __init__(self, data: StaeckelData, k: int, box: WorkingBox | None = None):
        if k not in (1, 2, 3):
            raise ValueError("k must be 1, 2 or 3")
        self.data = data
        self.k = k
        self.box = box
        self.factor = 0.5 if k == 1 else 1.0
        self.name = "H" if k == 1 else f"I{k}"

    def value(self, pt):
        s = _as_state(pt)
        w = momentum_weights(self.data, s[:3])[self.k - 1]
        return float(self.factor * np.dot(w, s[3:] ** 2))

    def values(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        w = momentum_weights(self.data, s[..., :3])[..., self.k - 1, :]
        return self.factor * np.sum(w * s[..., 3:] ** 2, axis=-1)

    def scale(self, pt) -> float:
        """``sum_i |w_i| p_i^2``: the size the value is compared against."""
        s = _as_state(pt)
        w = momentum_weights(self.data, s[:3])[self.k - 1]
        return float(self.factor * np.dot(np.abs(w), s[3:] ** 2))

    def grad(self, pt):
        s = _as_state(pt)
        w, dw = momentum_weight_gradients(self.data, s[:3])
        p2 = s[3:] ** 2
        out = np.empty(6)
        out[:3] = self.factor * dw[:, self.k - 1, :] @ p2
        out[3:] = self.factor * 2.0 * w[self.k - 1] * s[3:]
        return out


def staeckel_observables(data: StaeckelData, box: WorkingBox | None = None):
    """``(H, I2, I3)``."""
    return tuple(StaeckelQuadratic(data, k, box) for k in (1, 2, 3))


def flat_hamiltonian() -> PhasePoly:
    v = PhasePoly.variables()
    return PhasePoly(0.5 * (v[3] ** 2 + v[4] ** 2 + v[5] ** 2), name="H")


# -- brackets ----------------------------------------------------------------------

def _check_domain(obs, s):
    for o in obs:
        if o.box is not None and not o.box.contains(s[:3], tol=1e-12):
            raise DomainError(f"point {[float(v) for v in s[:3]]} lies outside the working box {o.box.ranges}")


def poisson_bracket(F: Observable, G: Observable, pt) -> float:
    """``{F, G} = sum_i dF/dx_i dG/dp_i - dF/dp_i dG/dx_i`` with exact partials."""
    s = _as_state(pt)
    _check_domain((F, G), s)
    a = F.grad(s)
    b = G.grad(s)
    return float(np.dot(a[:3], b[3:]) - np.dot(a[3:], b[:3]))


def bracket_scale(F: Observable, G: Observable, pt) -> float:
    s = _as_state(pt)
    return float(np.linalg.norm(F.grad(s)) * np.linalg.norm(G.grad(s)))


def fd_gradient(F: Observable, pt, h: float = 1e-5) -> np.ndarray:
    s = _as_state(pt)
    out = np.empty(6)
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        out[i] = (F.value(s + e) - F.value(s - e)) / (2 * h)
    return out


def fd_poisson_bracket(F: Observable, G: Observable, pt, h: float = 1e-5) -> float:
    """Bracket from central differences; independent of the exact partials."""
    s = _as_state(pt)
    a = fd_gradient(F, s, h)
    b = fd_gradient(G, s, h)
    return float(np.dot(a[:3], b[3:]) - np.dot(a[3:], b[:3]))


# -- flows -------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Accepted integrator steps with monitored ``H, I2, I3``.

    ``sol`` evaluates the dense interpolant between samples. ``event`` is
    ``None`` or a dict describing a boundary exit.
    """

    times: np.ndarray
    states: np.ndarray
    values: np.ndarray
    sol: DenseSolution
    stats: dict
    event: dict | None = None
    labels: tuple = ("H", "I2", "I3")
    scales: np.ndarray = field(default_factory=lambda: np.ones(3))

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def drift(self) -> np.ndarray:
        """Max relative change of each monitored value over the samples."""
        if self.n_samples == 0:
            return np.zeros(len(self.labels))
        return np.max(np.abs(self.values - self.values[0]), axis=0) / self.scales

    def phase_point(self, k: int) -> PhasePoint:
        return PhasePoint.from_array(self.states[k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *PHASE_LABELS, *self.labels])
        for t, s, v in zip(self.times, self.states, self.values):
            w.writerow([f"{t:.15g}", *(f"{c:.15g}" for c in s), *(f"{c:.15g}" for c in v)])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        return {
            "stats": self.stats,
            "event": self.event,
            "initial_values": dict(zip(self.labels, (float(v) for v in self.values[0]))),
            "final_values": dict(zip(self.labels, (float(v) for v in self.values[-1]))),
            "max_relative_drift": dict(zip(self.labels, (float(v) for v in self.drift()))),
            "n_samples": self.n_samples,
            "t_final": float(self.times[-1]),
            "final_state": [float(v) for v in self.states[-1]],
        }


def box_planes(box: WorkingBox) -> np.ndarray:
    rows = []
    for axis in range(3):
        rows.append((axis, box.lo[axis], 1.0))
        rows.append((axis, box.hi[axis], -1.0))
    return np.array(rows, dtype=float)


def _face_name(plane) -> str:
    axis, _, side = plane
    return f"{'xyz'[int(axis)]}_{'min' if side > 0 else 'max'}"


def locate_crossing(sol: DenseSolution, seg: int, axis: int, level: float, tol: float = 1e-12) -> float:
    """Bisection on the interpolant of step ``seg`` for ``y[axis] = level``."""
    t0 = float(sol.ts[seg])
    t1 = float(sol.ts[seg + 1])
    h = float(sol.hs[seg])

    def val(t):
        return dense_eval(sol.ts[seg], h, sol.ys[seg], sol.Fs[seg], t)[axis] - level

    f0 = val(t0)
    if f0 == 0.0:
        return t0
    while t1 - t0 > tol:
        tm = 0.5 * (t0 + t1)
        if tm <= t0 or tm >= t1:
            break
        fm = val(tm)
        if (fm > 0) == (f0 > 0) and fm != 0.0:
            t0, f0 = tm, fm
        else:
            t1 = tm
    return t1


def _integrate(data: StaeckelData, y0, t_end, tol, planes, max_steps, backend):
    coef, dcoef = data.kernel_table()
    impl = kernels.available_backends()[backend] if backend else kernels._impl
    return impl.run_staeckel(coef, dcoef, np.asarray(y0, dtype=float), 0.0, float(t_end),
                             float(tol), float(tol), int(max_steps), planes, -1.0)


def hamiltonian_flow(data: StaeckelData, start, t_end: float, tol: float = 1e-10,
                     box: WorkingBox | None = None, planes=None, max_steps: int = 200000,
                     backend: str | None = None) -> Trajectory:
    """Integrate Hamilton's equations of the Staeckel geodesic flow.

    The run stops at ``t_end`` or when the position leaves ``box``; the exit
    time is located by bisection on the dense output and the trajectory is
    cut there, with the exit recorded in ``Trajectory.event``.

    Raises
    ------
    DomainError
        If ``start`` lies outside ``box``.
    IntegrationError
        On step-size underflow or when ``max_steps`` is exhausted.
    """
    y0 = _as_state(start)
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if box is not None and not box.contains(y0[:3]):
        raise DomainError(f"start {[float(v) for v in y0[:3]]} lies outside the working box {box.ranges}")
    pl = box_planes(box) if box is not None else np.zeros((0, 3))
    if planes is not None:
        pl = np.vstack([pl, np.asarray(planes, dtype=float).reshape(-1, 3)])
    ts, ys, Fs, status, n_acc, n_rej, nfev, plane = _integrate(data, y0, t_end, tol, pl, max_steps, backend)
    sol = DenseSolution(ts, ys, Fs)
    event = None
    if status == STATUS_EVENT:
        axis, level, side = pl[plane]
        if len(Fs) == 0:
            t_hit = 0.0
        else:
            t_hit = locate_crossing(sol, len(Fs) - 1, int(axis), float(level))
        sol = sol.truncated(t_hit)
        sol.ys[-1, int(axis)] = level
        ts, ys = sol.ts, sol.ys
        event = {"kind": "boundary", "face": _face_name(pl[plane]), "plane_index": int(plane),
                 "t": float(t_hit), "state": [float(v) for v in ys[-1]]}
    elif status != STATUS_DONE:
        why = "maximum step count reached" if status == STATUS_MAX_STEPS else "step size underflow"
        raise IntegrationError(f"{why} at t={ts[-1]:.6g}", ts[-1], ys[-1])
    obs = staeckel_observables(data, box)
    values = np.stack([o.values(ys) for o in obs], axis=-1)
    scales = np.array([o.scale(y0) for o in obs])
    scales[scales == 0.0] = 1.0
    stats = {"steps": int(n_acc), "rejected": int(n_rej), "nfev": int(nfev), "tol": float(tol),
             "status": "event" if event else "done"}
    traj = Trajectory(ts, ys, values, sol, stats, event, scales=scales)
    stats["max_drift"] = float(np.max(traj.drift()))
    return traj


def generic_flow(hamiltonian: Observable, start, t_end: float, tol: float = 1e-10,
                 monitors=(), max_steps: int = 200000) -> Trajectory:
    """Flow of an arbitrary Hamiltonian observable through the Python integrator."""
    y0 = _as_state(start)

    def fun(t, y):
        g = hamiltonian.grad(y)
        return np.concatenate([g[3:], -g[:3]])

    ts, ys, Fs, status, n_acc, n_rej, nfev, _ = dop853_run(fun, 0.0, y0, float(t_end), tol, tol, max_steps)
    if status not in (STATUS_DONE,):
        raise IntegrationError(f"integration stopped with status {status}", ts[-1], ys[-1])
    obs = (hamiltonian, *monitors)
    values = np.array([[o.value(y) for o in obs] for y in ys])
    scales = np.array([max(abs(o.value(y0)), 1.0) for o in obs])
    stats = {"steps": int(n_acc), "rejected": int(n_rej), "nfev": int(nfev), "tol": float(tol), "status": "done"}
    traj = Trajectory(ts, ys, values, DenseSolution(ts, ys, Fs), stats, None,
                      labels=tuple(o.name for o in obs), scales=scales)
    stats["max_drift"] = float(np.max(traj.drift()))
    return traj


# -- Lagrangian cross-check ----------------------------------------------------------

def _five_point(samples, ds):
    f = samples
    d1 = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * ds)
    d2 = (-f[4:] + 16 * f[3:-1] - 30 * f[2:-2] + 16 * f[1:-3] - f[:-4]) / (12 * ds**2)
    return f[2:-2], d1, d2


def arclength_samples(traj: Trajectory, ds: float = 0.02) -> np.ndarray:
    """Positions at uniform arclength spacing ``ds`` along a trajectory."""
    speed = math.sqrt(2.0 * traj.values[0, 0])
    if speed == 0.0:
        raise ValueError("zero-speed trajectory has no arclength parameter")
    length = speed * (traj.times[-1] - traj.times[0])
    n = int(math.floor(length / ds)) + 1
    s = np.arange(n) * ds
    return traj.sol(traj.times[0] + s / speed)[:, :3] if n else np.zeros((0, 3))


def geodesic_residual(data: StaeckelData | None, traj, ds: float = 0.02) -> float:
    """Max g-norm of ``x'' + Gamma(x', x')`` along an arclength-parameterised curve.

    ``traj`` is a :class:`Trajectory` (resampled here at spacing ``ds``) or an
    ``(N, 3)`` array of positions already spaced ``ds`` apart in arclength.
    ``data=None`` means the Euclidean metric. Derivatives are five-point
    central differences.
    """
    pos = arclength_samples(traj, ds) if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    if pos.ndim != 2 or pos.shape[0] < 5:
        raise ValueError("need at least five arclength samples for the residual")
    x, d1, d2 = _five_point(pos, ds)
    worst = 0.0
    for k in range(x.shape[0]):
        if data is None:
            g = np.ones(3)
            gam = np.zeros((3, 3, 3))
        else:
            g, dg = metric_gradients(data, x[k])
            gam = christoffel_diagonal(g, dg)
        r = d2[k] + np.einsum("abc,b,c->a", gam, d1[k], d1[k])
        worst = max(worst, float(np.sqrt(np.dot(g, r * r))))
    return worst


def pencil_parameters(i2, i3, h2) -> tuple[float, float]:
    if h2 == 0.0:
        raise ValueError("zero momentum: the pencil parameters are undefined")
    return i2 / h2, i3 / h2


def invariant_values(data: StaeckelData, pt) -> tuple[float, float]:
    """``(lambda, mu) = (I2 / 2H, I3 / 2H)`` at a phase point."""
    s = _as_state(pt)
    if not np.any(s[3:]):
        raise ValueError("zero momentum: the pencil parameters are undefined")
    w = momentum_weights(data, s[:3])
    p2 = s[3:] ** 2
    return pencil_parameters(float(w[1] @ p2), float(w[2] @ p2), float(w[0] @ p2))
