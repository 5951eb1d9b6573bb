import numpy as np
import pytest

from stackel_lab import shipped
from stackel_lab.dynamics import (
    DomainError,
    IntegrationError,
    PhasePoint,
    PhasePoly,
    bracket_scale,
    fd_poisson_bracket,
    flat_hamiltonian,
    geodesic_residual,
    hamiltonian_flow,
    invariant_values,
    poisson_bracket,
    staeckel_observables,
)
from stackel_lab.staeckel import WorkingBox


def _random_point(box, rng):
    return np.concatenate([box.sample(rng, 1, shrink=0.05)[0], rng.normal(size=3)])


@pytest.mark.parametrize("name", ["vandermonde", "random2", "constant"])
def test_integrals_commute(name):
    data, box = shipped.metric(name)
    H, I2, I3 = staeckel_observables(data, box)
    rng = np.random.default_rng(11)
    for _ in range(25):
        pt = _random_point(box, rng)
        for F, G in ((H, I2), (H, I3), (I2, I3)):
            assert abs(poisson_bracket(F, G, pt)) <= 1e-10 * bracket_scale(F, G, pt)


def test_bracket_routes_agree():
    data, box = shipped.metric("random2")
    H, I2, _ = staeckel_observables(data, box)
    x = PhasePoly(PhasePoly.variables()[0], name="x")
    rng = np.random.default_rng(2)
    pt = _random_point(box, rng)
    exact = poisson_bracket(H, x, pt)
    assert exact == pytest.approx(fd_poisson_bracket(H, x, pt), rel=1e-7)
    # {x, H} = dH/dp_x
    assert poisson_bracket(x, H, pt) == pytest.approx(H.grad(pt)[3], rel=1e-14)


def test_canonical_brackets():
    v = PhasePoly.variables()
    pt = np.arange(1.0, 7.0)
    for i in range(3):
        for j in range(3):
            b = poisson_bracket(PhasePoly(v[i]), PhasePoly(v[3 + j]), pt)
            assert b == (1.0 if i == j else 0.0)


def test_bracket_outside_box_raises():
    data, box = shipped.metric("vandermonde")
    H, I2, _ = staeckel_observables(data, box)
    with pytest.raises(DomainError):
        poisson_bracket(H, I2, [0.1, 1.7, 2.7, 1, 1, 1])


def test_phase_point():
    p = PhasePoint.from_array(range(6))
    np.testing.assert_array_equal(p.momentum, [3, 4, 5])
    with pytest.raises(ValueError):
        PhasePoint.from_array([1, 2])


def test_flat_geodesic_is_a_line():
    data, box = shipped.metric("flat")
    traj = hamiltonian_flow(data, [0, 0, 0, 0.3, -0.2, 0.1], 2.0, tol=1e-12)
    np.testing.assert_allclose(traj.states[-1], [0.6, -0.4, 0.2, 0.3, -0.2, 0.1], atol=1e-14)
    assert geodesic_residual(data, traj) < 1e-10
    assert geodesic_residual(None, traj) < 1e-10


def test_conservation_and_tolerance_sweep():
    data, box = shipped.metric("vandermonde_wide")
    start = [*box.center, 0.6, -0.5, 0.4]
    drifts = [hamiltonian_flow(data, start, 10.0, tol=tol, box=box).drift().max() for tol in (1e-10, 1e-12)]
    assert drifts[0] <= 1e-8
    assert drifts[0] / drifts[1] >= 10


def test_boundary_exit_is_recorded():
    data, box = shipped.metric("vandermonde")
    traj = hamiltonian_flow(data, [*box.center, 1.0, 0.0, 0.0], 100.0, box=box)
    ev = traj.event
    assert ev["kind"] == "boundary"
    assert ev["face"] in ("x_min", "x_max")
    x = ev["state"][0]
    assert x in box.lo or x in box.hi
    assert traj.times[-1] == ev["t"]


def test_start_outside_raises():
    data, box = shipped.metric("vandermonde")
    with pytest.raises(DomainError):
        hamiltonian_flow(data, [0.4, 1.75, 2.75, 1, 0, 0], 1.0, box=box)
    with pytest.raises(ValueError):
        hamiltonian_flow(data, [*box.center, 1, 0, 0], -1.0)


def test_step_limit_raises():
    data, box = shipped.metric("vandermonde_wide")
    with pytest.raises(IntegrationError):
        hamiltonian_flow(data, [*box.center, 0.6, -0.5, 0.4], 10.0, max_steps=2)


def test_backends_give_same_trajectory():
    data, box = shipped.metric("random2")
    start = [0.1, -0.1, 0.2, 0.3, 0.5, -0.4]
    a = hamiltonian_flow(data, start, 1.0, backend="python")
    b = hamiltonian_flow(data, start, 1.0)
    assert a.n_samples == b.n_samples
    # step-size control amplifies rounding in the error estimate; agreement is at integration accuracy
    np.testing.assert_allclose(a.states, b.states, atol=1e-9)
    np.testing.assert_allclose(a.states[-1], b.states[-1], atol=1e-12)


def test_geodesic_residual_small_on_curved_metric():
    data, box = shipped.metric("liouville")
    traj = hamiltonian_flow(data, [0.5, -0.3, 0.2, 0.4, 0.7, -0.1], 5.0, tol=1e-12, box=box)
    assert geodesic_residual(data, traj) <= 1e-5
    # a Euclidean straight-line check would not fit this curved geodesic
    assert geodesic_residual(None, traj) > 1e-3


def test_geodesic_residual_needs_samples():
    with pytest.raises(ValueError):
        geodesic_residual(None, np.zeros((3, 3)))


def test_invariant_values():
    data, box = shipped.metric("vandermonde")
    pt = [*box.center, 0.2, 0.3, -0.1]
    H, I2, I3 = staeckel_observables(data)
    lam, mu = invariant_values(data, pt)
    assert lam == pytest.approx(I2(pt) / (2 * H(pt)), rel=1e-14)
    assert mu == pytest.approx(I3(pt) / (2 * H(pt)), rel=1e-14)
    with pytest.raises(ValueError):
        invariant_values(data, [*box.center, 0, 0, 0])


def test_flat_hamiltonian_observable():
    H = flat_hamiltonian()
    assert H([0, 0, 0, 1, 2, 2]) == 4.5
    np.testing.assert_array_equal(H.grad([0, 0, 0, 1, 2, 2]), [0, 0, 0, 1, 2, 2])


def test_trajectory_csv_and_json():
    data, box = shipped.metric("flat")
    traj = hamiltonian_flow(data, [0, 0, 0, 1, 0, 0], 0.5)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,x,y,z,px,py,pz,H,I2,I3"
    assert len(lines) == traj.n_samples + 1
    obj = traj.to_json_obj()
    assert obj["stats"]["status"] == "done" and obj["event"] is None
    assert obj["t_final"] == 0.5


def test_working_box_exit_with_planes():
    data, _ = shipped.metric("flat")
    planes = [[0, 0.25, -1.0]]
    traj = hamiltonian_flow(data, [0, 0, 0, 1, 0, 0], 2.0, planes=planes)
    assert traj.event["t"] == pytest.approx(0.25, abs=1e-12)
    assert traj.states[-1, 0] == 0.25
    assert WorkingBox([[0, 1]] * 3).contains(traj.states[-1])


@pytest.mark.parametrize("name, momentum", [("vandermonde_wide", [0.6, -0.5, 0.4]),
                                            ("liouville", [0.4, 0.7, -0.1])])
def test_time_reversal_returns_to_start(name, momentum):
    data, box = shipped.metric(name)
    tol = 1e-10
    start = np.array([*(box.center + 0.5), *momentum])
    fwd = hamiltonian_flow(data, start, 3.0, tol=tol)
    back = hamiltonian_flow(data, fwd.states[-1] * [1, 1, 1, -1, -1, -1], 3.0, tol=tol)
    np.testing.assert_allclose(back.states[-1, :3], start[:3], atol=10 * tol)
    np.testing.assert_allclose(-back.states[-1, 3:], start[3:], atol=10 * tol)


def test_bracket_antisymmetry_and_leibniz():
    data, box = shipped.metric("random2")
    H, I2, I3 = staeckel_observables(data, box)
    rng = np.random.default_rng(12)
    for _ in range(20):
        pt = _random_point(box, rng)
        assert poisson_bracket(I2, I3, pt) == -poisson_bracket(I3, I2, pt)
        assert poisson_bracket(H, H, pt) == 0.0
        x = PhasePoly(PhasePoly.variables()[0])
        lhs = poisson_bracket(x * I2, H, pt)
        rhs = x(pt) * poisson_bracket(I2, H, pt) + poisson_bracket(x, H, pt) * I2(pt)
        assert abs(lhs - rhs) <= 1e-9 * max(bracket_scale(x * I2, H, pt), 1.0)


def test_flat_bracket_example():
    H = flat_hamiltonian()
    x = PhasePoly(PhasePoly.variables()[0])
    assert poisson_bracket(H, x, [0.3, 0.1, 0.2, 2.0, 0.5, -1.0]) == -2.0


def test_circle_residual_is_its_curvature():
    ds, R = 0.01, 2.0
    s = np.arange(400) * ds
    circle = np.stack([R * np.cos(s / R), R * np.sin(s / R), np.zeros_like(s)], axis=-1)
    assert geodesic_residual(None, circle, ds=ds) == pytest.approx(1 / R, rel=1e-6)


def test_outward_start_on_face_stops_immediately():
    data, box = shipped.metric("vandermonde")
    start = [box.hi[0], 1.75, 2.75, 1.0, 0.0, 0.0]
    traj = hamiltonian_flow(data, start, 1.0, box=box)
    assert traj.event["face"] == "x_max"
    assert traj.event["t"] <= 1e-12
    np.testing.assert_allclose(traj.states[-1], start, atol=1e-12)


def test_pencil_parameters_constant_along_flow():
    data, box = shipped.metric("vandermonde_wide")
    traj = hamiltonian_flow(data, [*box.center, 0.6, -0.5, 0.4], 10.0, tol=1e-12, box=box)
    lm = np.array([invariant_values(data, s) for s in traj.states])
    assert np.max(np.abs(lm - lm[0])) <= 1e-8 * np.max(np.abs(lm[0]))
    scaled = traj.states[0] * [1, 1, 1, 3, 3, 3]
    assert invariant_values(data, scaled) == pytest.approx(tuple(lm[0]), rel=1e-14)
