"""Billiards bounded by Staeckel coordinate surfaces.

Walls are coordinate levels, so the wall normal is a coordinate direction
and elastic reflection flips one momentum component. ``H``, ``I2`` and
``I3`` are even in every momentum component, which makes the billiard
integrable; between bounces the ball follows the geodesic flow.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import PHASE_LABELS, DomainError, IntegrationError, PhasePoint, _as_state, box_planes
from .integrator import STATUS_DONE, STATUS_EVENT, DenseSolution, dense_eval
from .staeckel import StaeckelData, WorkingBox, momentum_weights, staeckel_from_json
from .webs import pencil_factors

IMPACT_TOL = 1e-12
GRAZING_TOL = 1e-10


class GrazingWarning(UserWarning):
    """An impact was (nearly) tangential; the run stops there."""


@dataclass(frozen=True)
class Wall:
    """Coordinate level ``x_axis = level``; the domain is ``side * (x_axis - level) >= 0``."""

    axis: int
    level: float
    side: int

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError("wall axis must be 0, 1 or 2")
        if self.side not in (1, -1):
            raise ValueError("wall side must be +1 or -1")

    @property
    def name(self) -> str:
        return f"{'xyz'[self.axis]}={self.level:g}"

    def plane(self):
        return (float(self.axis), float(self.level), float(self.side))

    def inside(self, pos, strict: bool = False) -> bool:
        d = self.side * (float(pos[self.axis]) - self.level)
        return d > 0 if strict else d >= 0

    def to_json_obj(self) -> dict:
        return {"axis": "xyz"[self.axis], "level": self.level, "side": self.side}

    @classmethod
    def from_json_obj(cls, obj) -> "Wall":
        axis = obj["axis"]
        axis = "xyz".index(axis) if isinstance(axis, str) else int(axis)
        return cls(axis, float(obj["level"]), int(obj["side"]))


def box_walls(ranges) -> list[Wall]:
    """Six walls enclosing ``[[x0, x1], [y0, y1], [z0, z1]]``."""
    out = []
    for axis, (lo, hi) in enumerate(ranges):
        out.append(Wall(axis, float(lo), 1))
        out.append(Wall(axis, float(hi), -1))
    return out


def reflect(pt, wall: Wall, tol: float = 1e-10) -> PhasePoint:
    """Elastic reflection in ``wall``: the conjugate momentum changes sign."""
    s = _as_state(pt).copy()
    if abs(s[wall.axis] - wall.level) > tol:
        raise ValueError(f"point is {abs(s[wall.axis] - wall.level):.3g} off the wall {wall.name}")
    s[3 + wall.axis] = -s[3 + wall.axis]
    return PhasePoint.from_array(s)


def conserved_values(data: StaeckelData, pt) -> dict:
    s = _as_state(pt)
    w = momentum_weights(data, s[:3])
    p2 = s[3:] ** 2
    h2 = float(w[0] @ p2)
    i2 = float(w[1] @ p2)
    i3 = float(w[2] @ p2)
    return {"H": 0.5 * h2, "I2": i2, "I3": i3, "lambda": i2 / h2, "mu": i3 / h2}


def conserved_scales(data: StaeckelData, pt) -> dict:
    """Magnitudes for relative errors: ``sum_i |w_ki| p_i^2`` and ``max(|lambda|, 1)``."""
    s = _as_state(pt)
    a = np.abs(momentum_weights(data, s[:3])) @ (s[3:] ** 2)
    v = conserved_values(data, s)
    return {"H": 0.5 * float(a[0]), "I2": float(a[1]), "I3": float(a[2]),
            "lambda": max(abs(v["lambda"]), 1.0), "mu": max(abs(v["mu"]), 1.0)}


@dataclass
class BounceRecord:
    time: float
    wall: int
    pre: PhasePoint
    post: PhasePoint
    before: dict
    after: dict

    def to_json_obj(self) -> dict:
        return {"t": self.time, "wall": self.wall, "pre": list(self.pre.array.tolist()),
                "post": list(self.post.array.tolist()), "before": self.before, "after": self.after}


@dataclass
class BilliardResult:
    """Geodesic pieces between impacts, bounce records and the stop reason."""

    pieces: list
    bounces: list
    event: dict | None
    initial: dict
    scales: dict
    stats: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([p.ts for p in self.pieces])

    @property
    def states(self) -> np.ndarray:
        return np.vstack([p.ys for p in self.pieces])

    def conservation_errors(self) -> dict:
        """Max relative change of each conserved value over all bounces (both sides)."""
        keys = ("H", "I2", "I3", "lambda", "mu")
        out = {k: 0.0 for k in keys}
        for b in self.bounces:
            for vals in (b.before, b.after):
                for k in keys:
                    out[k] = max(out[k], abs(vals[k] - self.initial[k]) / self.scales[k])
        return out

    def reflection_jumps(self) -> dict:
        """Max relative change of each conserved value across a single reflection."""
        keys = ("H", "I2", "I3", "lambda", "mu")
        out = {k: 0.0 for k in keys}
        for b in self.bounces:
            for k in keys:
                out[k] = max(out[k], abs(b.after[k] - b.before[k]) / self.scales[k])
        return out

    def to_csv(self, data: StaeckelData) -> str:
        lines = [",".join(("t", *PHASE_LABELS, "H", "I2", "I3"))]
        for t, s in zip(self.times, self.states):
            v = conserved_values(data, s)
            row = [t, *s, v["H"], v["I2"], v["I3"]]
            lines.append(",".join(f"{c:.15g}" for c in row))
        return "\n".join(lines) + "\n"

    def to_json_obj(self) -> dict:
        return {"initial": self.initial, "scales": self.scales, "event": self.event, "stats": self.stats,
                "n_bounces": len(self.bounces),
                "bounces": [b.to_json_obj() for b in self.bounces],
                "conservation_errors": self.conservation_errors()}


def _bisect(fun, t0, t1, f0, tol):
    while t1 - t0 > tol:
        tm = 0.5 * (t0 + t1)
        if tm <= t0 or tm >= t1:
            break
        fm = fun(tm)
        if fm == 0.0:
            return tm
        if (fm > 0) == (f0 > 0):
            t0, f0 = tm, fm
        else:
            t1 = tm
    return t1


def _impact(sol: DenseSolution, plane, tol=IMPACT_TOL):
    """Impact time and state in the last step, to ``tol`` in the crossing coordinate."""
    axis, level, _ = plane
    axis = int(axis)
    k = len(sol.Fs) - 1
    h = float(sol.hs[k])

    def y_at(t):
        return dense_eval(sol.ts[k], h, sol.ys[k], sol.Fs[k], t)

    lo, hi = float(sol.ts[k]), float(sol.ts[k + 1])
    f_lo = y_at(lo)[axis] - level
    while True:
        tm = 0.5 * (lo + hi)
        ym = y_at(tm)
        fm = ym[axis] - level
        if abs(fm) <= tol or tm <= lo or tm >= hi:
            return tm, ym
        if (fm > 0) == (f_lo > 0):
            lo, f_lo = tm, fm
        else:
            hi = tm


def billiard_run(data: StaeckelData, walls, start, n_bounces: int, tol: float = 1e-10,
                 box: WorkingBox | None = None, t_max: float = 1e3, max_steps: int = 200000,
                 backend: str | None = None) -> BilliardResult:
    """Geodesic billiard with elastic reflection in coordinate-level walls.

    Impacts are located by bisection on the dense output of the step that
    crossed a wall, the coordinate is snapped to the wall and the normal
    momentum negated. The run ends after ``n_bounces`` impacts, when the ball
    leaves ``box`` through a face that is not a wall (exit event), at
    ``t_max``, or at a grazing impact (``|p_n| <= 1e-10 |p|``, with a
    :class:`GrazingWarning`).
    """
    walls = [walls] if isinstance(walls, Wall) else list(walls)
    y = _as_state(start).copy()
    if n_bounces < 0:
        raise ValueError("n_bounces must be non-negative")
    if box is not None:
        if not box.contains(y[:3]):
            raise DomainError(f"start {[float(v) for v in y[:3]]} lies outside the working box")
        for w in walls:
            lo, hi = box.lo[w.axis], box.hi[w.axis]
            if not lo < w.level < hi:
                raise ValueError(f"wall {w.name} is not interior to the working box")
    for w in walls:
        if not w.inside(y[:3], strict=True):
            raise DomainError(f"start is not strictly inside the domain of wall {w.name}")
    planes = [w.plane() for w in walls]
    n_walls = len(planes)
    if box is not None:
        planes += [tuple(p) for p in box_planes(box)]
    planes = np.array(planes, dtype=float).reshape(-1, 3)
    coef, dcoef = data.kernel_table()
    impl = kernels.available_backends()[backend] if backend else kernels._impl
    initial = conserved_values(data, y)
    scales = conserved_scales(data, y)
    pieces, bounces = [], []
    event = None
    t = 0.0
    steps = rejected = nfev = 0
    while len(bounces) < n_bounces or n_bounces == 0:
        ts, ys, Fs, status, n_acc, n_rej, nf, plane = impl.run_staeckel(
            coef, dcoef, y, t, t_max, tol, tol, max_steps, planes, -1.0)
        steps += n_acc
        rejected += n_rej
        nfev += nf
        sol = DenseSolution(ts, ys, Fs)
        if status == STATUS_DONE:
            pieces.append(sol)
            event = {"kind": "time_limit", "t": float(ts[-1])}
            break
        if status != STATUS_EVENT:
            pieces.append(sol)
            raise IntegrationError(f"integration failed with status {status}", ts[-1], ys[-1])
        if len(Fs) == 0:
            # at a corner the restart state lies a rounding error beyond a second plane
            axis = int(planes[plane][0])
            if planes[plane][2] * y[3 + axis] >= 0:
                y[axis] = planes[plane][1]
                continue
            t_hit = t
        else:
            # near a corner one step can cross several planes; the earliest wins
            t_hit = np.inf
            for j, (ax, lev, side) in enumerate(planes):
                if side * (ys[-1][int(ax)] - lev) < 0:
                    tj, _ = _impact(sol, planes[j])
                    if tj < t_hit:
                        t_hit, plane = tj, j
        sol = sol.truncated(t_hit)
        axis = int(planes[plane][0])
        y_hit = sol.ys[-1].copy()
        y_hit[axis] = planes[plane][1]
        sol.ys[-1] = y_hit
        if plane >= n_walls:
            pieces.append(sol)
            event = {"kind": "exit", "face": ("x", "y", "z")[axis] + ("_min" if planes[plane][2] > 0 else "_max"),
                     "t": float(t_hit), "state": [float(v) for v in y_hit]}
            break
        pieces.append(sol)
        wall = walls[plane]
        pnorm = float(np.linalg.norm(y_hit[3:]))
        if abs(y_hit[3 + axis]) <= GRAZING_TOL * max(pnorm, 1.0):
            warnings.warn(f"grazing impact on wall {wall.name} at t={t_hit:.6g}", GrazingWarning, stacklevel=2)
            event = {"kind": "grazing", "wall": int(plane), "t": float(t_hit),
                     "state": [float(v) for v in y_hit]}
            break
        if n_bounces == 0:
            event = {"kind": "wall", "wall": int(plane), "t": float(t_hit),
                     "state": [float(v) for v in y_hit]}
            break
        pre = PhasePoint.from_array(y_hit)
        post = reflect(pre, wall)
        bounces.append(BounceRecord(float(t_hit), int(plane), pre, post,
                                    conserved_values(data, pre), conserved_values(data, post)))
        y = post.array
        t = float(t_hit)
        if t >= t_max:
            event = {"kind": "time_limit", "t": t}
            break
    stats = {"steps": steps, "rejected": rejected, "nfev": nfev, "tol": float(tol)}
    return BilliardResult(pieces, bounces, event, initial, scales, stats)


@dataclass
class TurningPoint:
    axis: int
    time: float
    coordinate: float
    residual: float

    def to_json_obj(self) -> dict:
        return {"axis": "xyz"[self.axis], "t": self.time, "coordinate": self.coordinate,
                "residual": self.residual}


def caustic_check(data: StaeckelData, traj, lam: float, mu: float, axes=(0, 1, 2)) -> list[TurningPoint]:
    """Residuals ``|phi_i1 + lam phi_i2 + mu phi_i3|`` at interior turning points.

    A turning point of coordinate ``i`` is a sign change of ``p_i`` inside a
    geodesic piece, located by bisection on the dense output. At a caustic
    the pencil factor of that axis vanishes. ``traj`` is a
    :class:`BilliardResult`, a dynamics ``Trajectory`` or a list of dense
    solutions.
    """
    if hasattr(traj, "pieces"):
        pieces = traj.pieces
    elif hasattr(traj, "sol"):
        pieces = [traj.sol]
    else:
        pieces = list(traj)
    out = []
    for sol in pieces:
        for k in range(len(sol.Fs)):
            y_at = lambda t, k=k: dense_eval(sol.ts[k], sol.hs[k], sol.ys[k], sol.Fs[k], t)
            ya, yb = sol.ys[k], sol.ys[k + 1]
            for axis in axes:
                pa, pb = ya[3 + axis], yb[3 + axis]
                if pa == 0.0 or (pa > 0) == (pb > 0) or pb == 0.0:
                    continue
                tt = _bisect(lambda t: y_at(t)[3 + axis], float(sol.ts[k]), float(sol.ts[k + 1]), pa, 1e-13)
                c = y_at(tt)[axis]
                pos = np.zeros(3)
                pos[axis] = c
                D = pencil_factors(data, pos, lam, mu)[axis]
                out.append(TurningPoint(axis, float(tt), float(c), float(abs(D))))
    return out


def phase_point_from_pencil(data: StaeckelData, position, lam: float, mu: float, signs=(1, 1, 1)) -> PhasePoint:
    """Phase point with ``p_i^2 = D_i`` (so ``2H = 1``) and the given momentum signs."""
    pos = np.asarray(position, dtype=float)
    D = pencil_factors(data, pos, lam, mu)
    if np.any(D < 0):
        raise ValueError(f"pencil factors {D.tolist()} are not all non-negative at {pos.tolist()}")
    p = np.asarray(signs, dtype=float) * np.sqrt(D)
    return PhasePoint.from_array(np.concatenate([pos, p]))


def billiard_config_from_json(obj):
    """Read ``{"metric", "walls", "start" | "pencil", "n_bounces", "tol"}``.

    ``start`` is a six-component phase point; alternatively ``pencil`` gives
    ``{"position", "lambda", "mu", "signs"}``.
    """
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    data, box = staeckel_from_json(obj["metric"])
    walls = [Wall.from_json_obj(w) for w in obj.get("walls", [])]
    if "start" in obj:
        start = PhasePoint.from_array(obj["start"])
    elif "pencil" in obj:
        pc = obj["pencil"]
        start = phase_point_from_pencil(data, pc["position"], float(pc["lambda"]), float(pc["mu"]),
                                        pc.get("signs", (1, 1, 1)))
    else:
        raise ValueError("billiard config needs 'start' or 'pencil'")
    return {"data": data, "box": box, "walls": walls, "start": start,
            "n_bounces": int(obj.get("n_bounces", 0)), "tol": float(obj.get("tol", 1e-10)),
            "t_max": float(obj.get("t_max", 1e3))}
