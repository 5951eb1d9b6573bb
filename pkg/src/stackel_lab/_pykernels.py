"""Pure-Python kernels; used when the compiled extension is unavailable."""
from __future__ import annotations

import numpy as np

from .integrator import dop853_run


def _horner(c, t):
    acc = 0.0
    for v in c[::-1]:
        acc = acc * t + v
    return acc


def staeckel_rhs(coef, dcoef, y):
    """Hamilton's equations for ``H = 1/2 sum_i (Phi^{i1}/Delta) p_i^2``.

    ``coef[i, j]`` and ``dcoef[i, j]`` are the padded ascending coefficients
    of ``phi_ij`` and its derivative.
    """
    x = (float(y[0]), float(y[1]), float(y[2]))
    p = (float(y[3]), float(y[4]), float(y[5]))
    m = [[_horner(coef[i][j], x[i]) for j in range(3)] for i in range(3)]
    dm = [[_horner(dcoef[i][j], x[i]) for j in range(3)] for i in range(3)]
    cof = []
    for i in range(3):
        a = m[(i + 1) % 3]
        b = m[(i + 2) % 3]
        cof.append((a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]))
    delta = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2]
    c = [cof[i][0] / delta for i in range(3)]
    out = [c[0] * p[0], c[1] * p[1], c[2] * p[2], 0.0, 0.0, 0.0]
    for k in range(3):
        d = dm[k]
        ddelta = d[0] * cof[k][0] + d[1] * cof[k][1] + d[2] * cof[k][2]
        acc = 0.0
        for i in range(3):
            if i == k:
                dphi = 0.0
            elif (i + 1) % 3 == k:
                b = m[(i + 2) % 3]
                dphi = d[1] * b[2] - d[2] * b[1]
            else:
                a = m[(i + 1) % 3]
                dphi = a[1] * d[2] - a[2] * d[1]
            acc += (dphi - c[i] * ddelta) / delta * p[i] * p[i]
        out[3 + k] = -0.5 * acc
    return out


def run_staeckel(coef, dcoef, y0, t0, t_end, rtol, atol, max_steps, planes, first_step=-1.0):
    coef = np.asarray(coef, dtype=float).tolist()
    dcoef = np.asarray(dcoef, dtype=float).tolist()

    def fun(t, y):
        return np.array(staeckel_rhs(coef, dcoef, y))

    return dop853_run(fun, t0, y0, t_end, rtol, atol, max_steps, planes,
                      None if first_step <= 0 else first_step)
