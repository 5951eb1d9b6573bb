import numpy as np
import pytest
from scipy.integrate import solve_ivp

from stackel_lab import kernels, shipped
from stackel_lab.integrator import (
    STATUS_DONE,
    STATUS_EVENT,
    STATUS_MAX_STEPS,
    DenseSolution,
    dop853_run,
)


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_matches_scipy_dop853():
    y0 = np.array([1.0, 0.0])
    ts, ys, Fs, status, n_acc, n_rej, nfev, plane = dop853_run(oscillator, 0.0, y0, 10.0, 1e-10, 1e-10)
    ref = solve_ivp(oscillator, (0, 10), y0, method="DOP853", rtol=1e-10, atol=1e-10)
    assert status == STATUS_DONE and plane == -1
    assert len(ts) == len(ref.t)
    np.testing.assert_allclose(ts, ref.t, rtol=1e-12)
    np.testing.assert_allclose(ys[-1], ref.y[:, -1], atol=1e-13)
    np.testing.assert_allclose(ys[-1], [np.cos(10), -np.sin(10)], atol=1e-8)


def test_dense_output_accuracy():
    ts, ys, Fs, *_ = dop853_run(oscillator, 0.0, np.array([1.0, 0.0]), 6.0, 1e-12, 1e-12)
    sol = DenseSolution(ts, ys, Fs)
    t = np.linspace(0, 6, 97)
    np.testing.assert_allclose(sol(t)[:, 0], np.cos(t), atol=1e-10)
    cut = sol.truncated(2.5)
    assert cut.t_max == 2.5
    assert cut(2.5)[0] == pytest.approx(np.cos(2.5), abs=1e-10)


def test_plane_event_and_max_steps():
    planes = np.array([[0, 0.0, 1.0]])
    ts, ys, Fs, status, *_, plane = dop853_run(oscillator, 0.0, np.array([1.0, 0.0]), 10.0, 1e-8, 1e-8,
                                               planes=planes)
    assert status == STATUS_EVENT and plane == 0
    assert ys[-1, 0] < 0 and ts[-1] < np.pi
    out = dop853_run(oscillator, 0.0, np.array([1.0, 0.0]), 10.0, 1e-12, 1e-12, max_steps=3)
    assert out[3] == STATUS_MAX_STEPS


def _wide_start():
    data, box = shipped.metric("vandermonde_wide")
    coef, dcoef = data.kernel_table()
    return data, coef, dcoef, np.array([*box.center, 0.6, -0.5, 0.4])


def test_backend_selection():
    assert kernels.BACKEND in ("python", "cython")
    assert "python" in kernels.available_backends()


def test_rhs_backends_agree():
    _, coef, dcoef, y0 = _wide_start()
    outs = [impl.staeckel_rhs(coef, dcoef, y0) for impl in kernels.available_backends().values()]
    for o in outs[1:]:
        np.testing.assert_allclose(o, outs[0], rtol=1e-14, atol=1e-16)


def test_rhs_matches_hamilton_equations():
    from stackel_lab.dynamics import StaeckelQuadratic

    data, coef, dcoef, y0 = _wide_start()
    g = StaeckelQuadratic(data, 1).grad(y0)
    f = np.asarray(kernels.staeckel_rhs(coef, dcoef, y0))
    np.testing.assert_allclose(f, np.concatenate([g[3:], -g[:3]]), rtol=1e-13, atol=1e-16)


def test_run_backends_agree():
    _, coef, dcoef, y0 = _wide_start()
    runs = {name: impl.run_staeckel(coef, dcoef, y0, 0.0, 5.0, 1e-11, 1e-11, 10**5, np.zeros((0, 3)), -1.0)
            for name, impl in kernels.available_backends().items()}
    ref = runs["python"]
    for name, out in runs.items():
        assert out[3] == STATUS_DONE
        assert out[4] == ref[4], name
        np.testing.assert_allclose(out[1][-1], ref[1][-1], rtol=1e-12, atol=1e-13)


def test_run_matches_generic_python_loop():
    data, coef, dcoef, y0 = _wide_start()

    def fun(t, y):
        return np.asarray(kernels.staeckel_rhs(coef, dcoef, y))

    a = dop853_run(fun, 0.0, y0, 3.0, 1e-10, 1e-10)
    b = kernels.run_staeckel(coef, dcoef, y0, 0.0, 3.0, 1e-10, 1e-10, 10**5, np.zeros((0, 3)), -1.0)
    assert a[4] == b[4]
    np.testing.assert_allclose(a[1][-1], b[1][-1], rtol=1e-12, atol=1e-13)


def test_env_var_forces_python_backend():
    import os
    import subprocess
    import sys

    env = dict(os.environ, STACKEL_LAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import stackel_lab; print(stackel_lab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
