# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Staeckel geodesic kernels.

Same algorithm as ``integrator.dop853_run`` driven by
``_pykernels.staeckel_rhs``, with the vector field inlined.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, pow, nextafter, INFINITY, isfinite

from .integrator import A as _A, B as _B, C as _C, E3 as _E3, E5 as _E5, D as _D

cnp.import_array()

cdef double TA[16][16]
cdef double TB[12]
cdef double TC[16]
cdef double TE3[13]
cdef double TE5[13]
cdef double TD[4][16]

cdef int _i, _j
for _i in range(16):
    TC[_i] = _C[_i]
    for _j in range(16):
        TA[_i][_j] = _A[_i, _j]
for _i in range(12):
    TB[_i] = _B[_i]
for _i in range(13):
    TE3[_i] = _E3[_i]
    TE5[_i] = _E5[_i]
for _i in range(4):
    for _j in range(16):
        TD[_i][_j] = _D[_i, _j]

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0
cdef double ERROR_EXPONENT = -1.0 / 8.0


cdef struct Table:
    double coef[3][3][16]
    double dcoef[3][3][16]
    int deg


cdef inline double horner(double* c, int n, double t) nogil:
    cdef double acc = 0.0
    cdef int k
    for k in range(n - 1, -1, -1):
        acc = acc * t + c[k]
    return acc


cdef void rhs(Table* tb, double* y, double* out) nogil:
    cdef double m[3][3]
    cdef double dm[3][3]
    cdef double cof[3][3]
    cdef double c[3]
    cdef double delta, ddelta, acc, dphi
    cdef double *a
    cdef double *b
    cdef double *d
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            m[i][j] = horner(tb.coef[i][j], tb.deg, y[i])
            dm[i][j] = horner(tb.dcoef[i][j], tb.deg, y[i])
    for i in range(3):
        a = m[(i + 1) % 3]
        b = m[(i + 2) % 3]
        cof[i][0] = a[1] * b[2] - a[2] * b[1]
        cof[i][1] = a[2] * b[0] - a[0] * b[2]
        cof[i][2] = a[0] * b[1] - a[1] * b[0]
    delta = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2]
    for i in range(3):
        c[i] = cof[i][0] / delta
        out[i] = c[i] * y[3 + i]
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
            acc += (dphi - c[i] * ddelta) / delta * y[3 + i] * y[3 + i]
        out[3 + k] = -0.5 * acc


cdef int load_table(Table* tb, coef, dcoef) except -1:
    cdef cnp.ndarray[cnp.float64_t, ndim=3] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] dc = np.ascontiguousarray(dcoef, dtype=np.float64)
    cdef int n = cf.shape[2]
    cdef int i, j, k
    if n > 16 or dc.shape[2] > n:
        raise ValueError("polynomial degree above 15 is not supported by the compiled kernel")
    tb.deg = n
    for i in range(3):
        for j in range(3):
            for k in range(16):
                tb.coef[i][j][k] = cf[i, j, k] if k < n else 0.0
                tb.dcoef[i][j][k] = dc[i, j, k] if k < dc.shape[2] else 0.0
    return 0


def staeckel_rhs(coef, dcoef, y):
    cdef Table tb
    cdef double yy[6]
    cdef double out[6]
    cdef int i
    load_table(&tb, coef, dcoef)
    for i in range(6):
        yy[i] = y[i]
    rhs(&tb, yy, out)
    return [out[i] for i in range(6)]


cdef double rms_scaled(double* v, double* scale) nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(6):
        s += (v[i] / scale[i]) ** 2
    return sqrt(s / 6.0)


def run_staeckel(coef, dcoef, y0, double t0, double t_end, double rtol, double atol,
                 long max_steps, planes, double first_step=-1.0):
    """Compiled counterpart of ``_pykernels.run_staeckel``; same return tuple."""
    cdef Table tb
    load_table(&tb, coef, dcoef)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pl = np.ascontiguousarray(
        np.asarray(planes, dtype=np.float64).reshape(-1, 3))
    cdef int n_planes = pl.shape[0]
    cdef double y[6]
    cdef double y_new[6]
    cdef double f[6]
    cdef double f_new[6]
    cdef double tmp[6]
    cdef double scale[6]
    cdef double K[16][6]
    cdef double f1[6]
    cdef double t, t_new, h, h_abs, min_step, err, e3, e5, s5, s3, factor, d0, d1, d2, h0, h1, interval
    cdef double acc, dlt
    cdef int i, s, r, j, status = 0, plane = -1, rejected
    cdef long n_accept = 0, n_reject = 0, nfev = 0, cap = 256

    for i in range(6):
        y[i] = y0[i]
    ts = np.empty(cap)
    ys = np.empty((cap, 6))
    Fs = np.empty((cap, 7, 6))
    cdef double[:] tsv = ts
    cdef double[:, :] ysv = ys
    cdef double[:, :, :] Fsv = Fs
    tsv[0] = t0
    for i in range(6):
        ysv[0, i] = y[i]

    for j in range(n_planes):
        if pl[j, 2] * (y[<int> pl[j, 0]] - pl[j, 1]) < 0:
            return ts[:1].copy(), ys[:1].copy(), np.zeros((0, 7, 6)), 1, 0, 0, 0, j

    t = t0
    rhs(&tb, y, f)
    nfev += 1
    if first_step <= 0:
        interval = fabs(t_end - t0)
        if interval == 0.0:
            h_abs = 0.0
        else:
            for i in range(6):
                scale[i] = atol + fabs(y[i]) * rtol
            d0 = rms_scaled(y, scale)
            d1 = rms_scaled(f, scale)
            h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
            if h0 > interval:
                h0 = interval
            for i in range(6):
                tmp[i] = y[i] + h0 * f[i]
            rhs(&tb, tmp, f1)
            nfev += 1
            for i in range(6):
                tmp[i] = f1[i] - f[i]
            d2 = rms_scaled(tmp, scale) / h0
            if d1 <= 1e-15 and d2 <= 1e-15:
                h1 = max(1e-6, h0 * 1e-3)
            else:
                h1 = pow(0.01 / max(d1, d2), 1.0 / 8.0)
            h_abs = min(100 * h0, min(h1, interval))
    else:
        h_abs = first_step

    while t < t_end:
        if n_accept >= max_steps:
            status = -2
            break
        min_step = 10 * fabs(nextafter(t, INFINITY) - t)
        if h_abs < min_step:
            h_abs = min_step
        rejected = 0
        while True:
            if h_abs < min_step:
                status = -1
                break
            t_new = t + h_abs
            if t_new > t_end:
                t_new = t_end
            h = t_new - t
            h_abs = fabs(h)
            for i in range(6):
                K[0][i] = f[i]
            for s in range(1, 12):
                for i in range(6):
                    acc = 0.0
                    for r in range(s):
                        acc += K[r][i] * TA[s][r]
                    tmp[i] = y[i] + acc * h
                rhs(&tb, tmp, K[s])
            for i in range(6):
                acc = 0.0
                for r in range(12):
                    acc += K[r][i] * TB[r]
                y_new[i] = y[i] + h * acc
            rhs(&tb, y_new, f_new)
            for i in range(6):
                K[12][i] = f_new[i]
            nfev += 12
            e5 = 0.0
            e3 = 0.0
            for i in range(6):
                scale[i] = atol + max(fabs(y[i]), fabs(y_new[i])) * rtol
                s5 = 0.0
                s3 = 0.0
                for r in range(13):
                    s5 += K[r][i] * TE5[r]
                    s3 += K[r][i] * TE3[r]
                e5 += (s5 / scale[i]) ** 2
                e3 += (s3 / scale[i]) ** 2
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h_abs * e5 / sqrt((e5 + 0.01 * e3) * 6)
            if not isfinite(err):
                h_abs *= MIN_FACTOR
                rejected = 1
                n_reject += 1
                continue
            if err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = min(MAX_FACTOR, SAFETY * pow(err, ERROR_EXPONENT))
                if rejected:
                    factor = min(1.0, factor)
                h_abs *= factor
                break
            h_abs *= max(MIN_FACTOR, SAFETY * pow(err, ERROR_EXPONENT))
            rejected = 1
            n_reject += 1
        if status == -1:
            break
        if n_accept + 2 > cap:
            cap *= 2
            ts = np.resize(ts, cap)
            ys = np.resize(ys, (cap, 6))
            Fs = np.resize(Fs, (cap, 7, 6))
            tsv = ts
            ysv = ys
            Fsv = Fs
        # dense output stages
        for s in range(13, 16):
            for i in range(6):
                acc = 0.0
                for r in range(s):
                    acc += K[r][i] * TA[s][r]
                tmp[i] = y[i] + acc * h
            rhs(&tb, tmp, K[s])
        nfev += 3
        for i in range(6):
            dlt = y_new[i] - y[i]
            Fsv[n_accept, 0, i] = dlt
            Fsv[n_accept, 1, i] = h * K[0][i] - dlt
            Fsv[n_accept, 2, i] = 2 * dlt - h * (K[12][i] + K[0][i])
            for j in range(4):
                acc = 0.0
                for r in range(16):
                    acc += TD[j][r] * K[r][i]
                Fsv[n_accept, 3 + j, i] = h * acc
        n_accept += 1
        t = t_new
        for i in range(6):
            y[i] = y_new[i]
            f[i] = f_new[i]
            ysv[n_accept, i] = y[i]
        tsv[n_accept] = t
        for j in range(n_planes):
            if pl[j, 2] * (y[<int> pl[j, 0]] - pl[j, 1]) < 0:
                plane = j
                break
        if plane >= 0:
            status = 1
            break
    return (ts[: n_accept + 1].copy(), ys[: n_accept + 1].copy(), Fs[:n_accept].copy(),
            status, n_accept, n_reject, nfev, plane)
