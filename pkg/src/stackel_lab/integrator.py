"""Adaptive Dormand-Prince 8(5,3) integration with dense output.

The Butcher tableau is taken from scipy; the stepping loop, error control and
interpolant are written out here so that the compiled kernel in
``_ckernels.pyx`` can follow the same algorithm line for line.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
A = np.ascontiguousarray(_dop.A, dtype=float)
B = np.ascontiguousarray(_dop.B, dtype=float)
C = np.ascontiguousarray(_dop.C, dtype=float)
E3 = np.ascontiguousarray(_dop.E3, dtype=float)
E5 = np.ascontiguousarray(_dop.E5, dtype=float)
D = np.ascontiguousarray(_dop.D, dtype=float)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1.0 / 8.0

STATUS_DONE = 0
STATUS_EVENT = 1
STATUS_STEP_UNDERFLOW = -1
STATUS_MAX_STEPS = -2


def _rms(x):
    return float(np.sqrt(np.dot(x, x) / x.size))


def initial_step(fun, t0, y0, f0, t_end, rtol, atol, order=7):
    """Starting step size (Hairer, Norsett and Wanner, II.4)."""
    interval = abs(t_end - t0)
    if interval == 0.0:
        return 0.0
    scale = atol + np.abs(y0) * rtol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, interval)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, interval)


def dense_coefficients(fun, t_old, y_old, y_new, h, K):
    """Interpolant coefficients ``F`` (7 x n) for one accepted step.

    ``K`` holds the 13 stage derivatives of the step; three more stages are
    evaluated here.
    """
    n = y_old.size
    Kx = np.empty((16, n))
    Kx[:13] = K
    for s in range(13, 16):
        dy = (Kx[:s].T @ A[s, :s]) * h
        Kx[s] = fun(t_old + C[s] * h, y_old + dy)
    F = np.empty((7, n))
    dlt = y_new - y_old
    f_old = Kx[0]
    f_new = Kx[12]
    F[0] = dlt
    F[1] = h * f_old - dlt
    F[2] = 2 * dlt - h * (f_new + f_old)
    F[3:] = h * (D @ Kx)
    return F


def dense_eval(t_old, h, y_old, F, t):
    x = (t - t_old) / h
    y = np.zeros_like(y_old)
    for i, f in enumerate(F[::-1]):
        y = y + f
        y = y * x if i % 2 == 0 else y * (1 - x)
    return y + y_old


def dop853_run(fun, t0, y0, t_end, rtol, atol, max_steps=100000, planes=None, first_step=None):
    """Integrate ``y' = fun(t, y)`` forward from ``t0`` to ``t_end``.

    ``planes`` is an ``(m, 3)`` array of ``(axis, level, side)`` rows; the run
    stops after the first accepted step whose end state has
    ``side * (y[axis] - level) < 0`` for some row.

    Returns
    -------
    ts, ys, Fs, status, n_accept, n_reject, nfev, plane
        ``ts`` and ``ys`` include the start; ``Fs[k]`` is the interpolant of
        step ``k``; ``plane`` is the index of the crossed plane or -1.
    """
    y = np.array(y0, dtype=float)
    n = y.size
    planes = np.zeros((0, 3)) if planes is None else np.asarray(planes, dtype=float).reshape(-1, 3)
    ts = [float(t0)]
    ys = [y.copy()]
    Fs = []
    nfev = 0

    def crossed(state):
        for j, (axis, level, side) in enumerate(planes):
            if side * (state[int(axis)] - level) < 0:
                return j
        return -1

    j = crossed(y)
    if j >= 0:
        return np.array(ts), np.array(ys), np.zeros((0, 7, n)), STATUS_EVENT, 0, 0, 0, j

    t = float(t0)
    f = np.asarray(fun(t, y), dtype=float)
    nfev += 1
    if first_step is None:
        h_abs = initial_step(fun, t, y, f, t_end, rtol, atol)
        nfev += 1
    else:
        h_abs = float(first_step)
    K = np.empty((13, n))
    n_accept = n_reject = 0
    status = STATUS_DONE
    plane = -1
    while t < t_end:
        if n_accept >= max_steps:
            status = STATUS_MAX_STEPS
            break
        min_step = 10 * abs(np.nextafter(t, np.inf) - t)
        if h_abs < min_step:
            h_abs = min_step
        rejected = False
        while True:
            if h_abs < min_step:
                status = STATUS_STEP_UNDERFLOW
                break
            t_new = t + h_abs
            if t_new > t_end:
                t_new = t_end
            h = t_new - t
            h_abs = abs(h)
            K[0] = f
            for s in range(1, N_STAGES):
                dy = (K[:s].T @ A[s, :s]) * h
                K[s] = fun(t + C[s] * h, y + dy)
            y_new = y + h * (K[:N_STAGES].T @ B)
            f_new = np.asarray(fun(t_new, y_new), dtype=float)
            K[N_STAGES] = f_new
            nfev += N_STAGES
            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            err5 = (K.T @ E5) / scale
            err3 = (K.T @ E3) / scale
            e5 = float(err5 @ err5)
            e3 = float(err3 @ err3)
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h_abs * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if not np.isfinite(err):
                h_abs *= MIN_FACTOR
                rejected = True
                n_reject += 1
                continue
            if err < 1.0:
                factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err**ERROR_EXPONENT)
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                break
            h_abs *= max(MIN_FACTOR, SAFETY * err**ERROR_EXPONENT)
            rejected = True
            n_reject += 1
        if status == STATUS_STEP_UNDERFLOW:
            break
        Fs.append(dense_coefficients(fun, t, y, y_new, h, K))
        nfev += 3
        n_accept += 1
        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        plane = crossed(y)
        if plane >= 0:
            status = STATUS_EVENT
            break
    Fs_arr = np.array(Fs) if Fs else np.zeros((0, 7, n))
    return np.array(ts), np.array(ys), Fs_arr, status, n_accept, n_reject, nfev, plane


class DenseSolution:
    """Piecewise interpolant over accepted steps; ``sol(t)`` for scalar or array ``t``.

    ``hs[k]`` is the step length the interpolant of step ``k`` was built for;
    it differs from ``ts[k+1] - ts[k]`` only for a step cut by :meth:`truncated`.
    """

    def __init__(self, ts, ys, Fs, hs=None):
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.Fs = np.asarray(Fs, dtype=float)
        self.hs = np.diff(self.ts) if hs is None else np.asarray(hs, dtype=float)

    @property
    def t_min(self) -> float:
        return float(self.ts[0])

    @property
    def t_max(self) -> float:
        return float(self.ts[-1])

    def segment(self, t) -> int:
        k = int(np.searchsorted(self.ts, t, side="right")) - 1
        return min(max(k, 0), len(self.Fs) - 1)

    def _eval1(self, t):
        if len(self.Fs) == 0:
            return self.ys[0].copy()
        k = self.segment(t)
        return dense_eval(self.ts[k], self.hs[k], self.ys[k], self.Fs[k], t)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self._eval1(float(t))
        return np.array([self._eval1(float(v)) for v in np.ravel(t)])

    def truncated(self, t_stop: float) -> "DenseSolution":
        """The same solution ending at ``t_stop``."""
        if len(self.Fs) == 0 or t_stop <= self.ts[0]:
            return DenseSolution(self.ts[:1], self.ys[:1], self.Fs[:0], self.hs[:0])
        k = int(np.searchsorted(self.ts, t_stop, side="left")) - 1
        k = min(max(k, 0), len(self.Fs) - 1)
        y_stop = dense_eval(self.ts[k], self.hs[k], self.ys[k], self.Fs[k], t_stop)
        ts = np.append(self.ts[: k + 1], t_stop)
        ys = np.vstack([self.ys[: k + 1], y_stop])
        return DenseSolution(ts, ys, self.Fs[: k + 1], self.hs[: k + 1])
