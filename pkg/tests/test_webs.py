import numpy as np
import pytest

from stackel_lab import shipped
from stackel_lab.staeckel import WorkingBox, integral_coeffs, metric_coeffs
from stackel_lab.webs import (
    SIGN_PAIRS,
    DegeneracyError,
    GridWebSpec,
    RealnessError,
    abelian_relations_a1_a2,
    admissible_pencil,
    analytic_relation_vectors,
    check_realness,
    connection_and_curvature,
    curvature_decay,
    estimate_web_rank,
    pencil_factors,
    random_adapted_3web,
    random_adapted_4web,
    reflect,
    reflection_permutes,
    relation_gram_det,
    staeckel_web_spec,
    subspace_angle,
    tau_field,
    web_directions,
    web_spec_from_json,
)

CFG = shipped.load("web_vandermonde")
LAM, MU = CFG["curve_field"]["lambda"], CFG["curve_field"]["mu"]
PT = np.array(CFG["point"])


@pytest.fixture(scope="module")
def vdm():
    return shipped.metric("vandermonde")


def test_realness_rules():
    check_realness([1.0, 2.0, 0.5])
    check_realness([-1.0, -2.0, -0.5])
    with pytest.raises(RealnessError) as err:
        check_realness([1.0, -2.0, 0.5])
    assert "F+lam*L+mu*Q" in str(err.value)
    with pytest.raises(RealnessError):
        check_realness([1.0, 0.0, 0.5])
    check_realness([1.0, 0.0, 0.5], strict=False)


def test_directions_solve_both_pencils(vdm):
    data, _ = vdm
    ws = web_directions(data, PT, LAM, MU)
    g = metric_coeffs(data, PT)
    i2, i3 = integral_coeffs(data, PT)
    for tau in ws.directions:
        assert np.dot(g, tau**2) == pytest.approx(1.0, rel=1e-14)
        assert abs(np.dot(i2 - LAM * g, tau**2)) <= 1e-10
        assert abs(np.dot(i3 - MU * g, tau**2)) <= 1e-10
    assert ws.residuals["I2"] <= 1e-10 and ws.residuals["I3"] <= 1e-10


def test_directions_square_to_pencil_factors(vdm):
    # g_i tau_i^2 is proportional to D_i / g_i, the separated momentum relation
    data, _ = vdm
    ws = web_directions(data, PT, LAM, MU)
    g = metric_coeffs(data, PT)
    D = pencil_factors(data, PT, LAM, MU)
    ratios = (g * ws.directions[0]) ** 2 / D
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_non_admissible_pencil_rejected(vdm):
    data, _ = vdm
    with pytest.raises(RealnessError):
        web_directions(data, PT, 0.0, 0.0)


def test_mirrors_permute_directions(vdm):
    data, _ = vdm
    ws = web_directions(data, PT, LAM, MU)
    rep = reflection_permutes(ws)
    assert rep.ok and rep.max_mismatch <= 1e-9
    assert rep.transitive()
    for perm in rep.permutations.values():
        assert sorted(perm) == [0, 1, 2, 3]
        assert all(perm[k] != k for k in range(4))
    rep = reflection_permutes(ws, include_identity=True)
    assert rep.permutations["identity"] == (0, 1, 2, 3)


def test_reflect_axes():
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(reflect(v, 1), [1, -2, 3])
    np.testing.assert_array_equal(reflect(v, None), v)


def test_abelian_relations(vdm):
    data, box = vdm
    for signs in SIGN_PAIRS:
        a1, a2 = abelian_relations_a1_a2(data, LAM, MU, signs, box=box, n_check=20)
        pts = box.sample(np.random.default_rng(1), 10, shrink=0.1)
        assert a1.sum_residual(pts) == 0.0
        tangent = tau_field(data, LAM, MU, *signs)
        assert a1.annihilation(pts, tangent) <= 1e-12
        assert a2.annihilation(pts, tangent) <= 1e-12
        assert a1.closedness(pts) <= 1e-6
        assert a2.closedness(pts) <= 1e-6
        assert relation_gram_det(a1, a2, pts) > 1e-3


@pytest.mark.parametrize("signs", SIGN_PAIRS)
def test_staeckel_web_rank_two(vdm, signs):
    data, box = vdm
    spec = staeckel_web_spec(data, box, LAM, MU, signs)
    res = estimate_web_rank(spec)
    assert res.rank == 2 and res.nullspace_dim == 2
    ana = analytic_relation_vectors(data, LAM, MU, signs, res.axes)
    assert subspace_angle(res.basis, ana) <= 1e-6


def test_rank_independent_of_jobs(vdm):
    data, box = vdm
    spec = staeckel_web_spec(data, box, LAM, MU)
    a, b = estimate_web_rank(spec), estimate_web_rank(spec, jobs=3)
    np.testing.assert_array_equal(a.singular_values, b.singular_values)


def test_grid_too_coarse(vdm):
    data, box = vdm
    with pytest.raises(ValueError):
        estimate_web_rank(staeckel_web_spec(data, box, LAM, MU, n=3))


def test_admissible_pencil_is_seeded(vdm):
    data, box = vdm
    a = admissible_pencil(data, box, np.random.default_rng(4))
    b = admissible_pencil(data, box, np.random.default_rng(4))
    assert a == b
    D = pencil_factors(data, box.grid(9).reshape(-1, 3), *a)
    assert np.all(D > 0)


BOX = WorkingBox([[-0.5, 0.5]] * 3)


@pytest.mark.parametrize("family, expected", [(1, 2), (2, 1)])
def test_random_4web_families(family, expected):
    rng = np.random.default_rng(100 + family)
    for _ in range(5):
        spec, _ = random_adapted_4web(rng, BOX, family=family)
        assert estimate_web_rank(spec).rank == expected


def test_random_webs_respect_bounds():
    rng = np.random.default_rng(7)
    for _ in range(20):
        spec, _ = random_adapted_4web(rng, BOX)
        assert estimate_web_rank(spec).rank <= 2
        spec, _ = random_adapted_3web(rng, BOX)
        assert estimate_web_rank(spec).rank <= 1


def test_random_3web_family_one():
    rng = np.random.default_rng(8)
    spec, _ = random_adapted_3web(rng, BOX, family=1)
    assert estimate_web_rank(spec).rank == 1


def test_unknown_family():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        random_adapted_4web(rng, BOX, family=3)
    with pytest.raises(ValueError):
        random_adapted_3web(rng, BOX, family=2)


def _web3(name):
    obj = shipped.load(name)
    spec, _ = web_spec_from_json(obj)
    return spec, np.array(obj["point"]), obj.get("h", [0.02, 0.01, 0.005, 0.0025])


def test_rank_one_relation_matches_closed_form():
    # u(x) xi + v(y) eta = 0 with xi = (2+y)(1+xz), eta = -(1+x^2)(1+xz): u = c(1+x^2), v = c(2+y)
    spec, _, _ = _web3("web3_rank1")
    res = estimate_web_rank(spec)
    assert res.rank == 1
    f = res.functions(0)
    x, y = res.axes[0], res.axes[1]
    ratio_u = f["u"] / (1 + x**2)
    ratio_v = f["v"] / (2 + y)
    np.testing.assert_allclose(ratio_u, ratio_u[0], rtol=1e-8)
    np.testing.assert_allclose(ratio_v, ratio_u[0], rtol=1e-8)


def test_rank_one_curvature_decays():
    spec, pt, hs = _web3("web3_rank1")
    dec = curvature_decay(spec, pt, hs)
    assert all(dec["exists"])
    assert min(dec["orders"]) >= 1.8
    assert dec["norms"][-1] < 1e-4


def test_rank_zero_curvature_stable():
    spec, pt, hs = _web3("web3_rank0")
    dec = curvature_decay(spec, pt, hs)
    assert all(dec["exists"])
    n = dec["norms"]
    assert min(n) >= 1e-3
    assert (max(n) - min(n)) / max(n) <= 0.05
    assert estimate_web_rank(spec).rank == 0


def test_missing_connection_reported():
    spec, pt, _ = _web3("web3_noconnection")
    res = connection_and_curvature(spec, pt)
    assert not res.exists and res.curvature is None
    assert np.isnan(res.curvature_norm)
    assert res.to_json_obj()["curvature_norm"] is None


def test_constant_field_is_flat():
    spec = GridWebSpec(BOX, 8, lambda p: np.broadcast_to([1.0, -1.0, 0.0], p.shape), (0, 1))
    res = connection_and_curvature(spec, [0.1, 0.2, 0.3])
    assert res.exists
    assert res.curvature_norm <= 1e-9
    assert estimate_web_rank(spec).rank == 1


def test_connection_needs_xy_surfaces():
    spec = GridWebSpec(BOX, 8, lambda p: p, (0, 2))
    with pytest.raises(ValueError):
        connection_and_curvature(spec, [0.1, 0.2, 0.3])


def test_degenerate_web_raises():
    spec, _ = web_spec_from_json(shipped.load("web_degenerate"))
    with pytest.raises(DegeneracyError):
        estimate_web_rank(spec)


@pytest.mark.parametrize("bad", [
    {"grid_n": 8},
    {"box": [[0, 1]] * 3, "curve_field": {"type": "staeckel-tau", "lambda": 0, "mu": 0}},
    {"box": [[0, 1]] * 3, "curve_field": {"type": "explicit", "components": ["x"]}},
    {"box": [[0, 1]] * 3, "curve_field": {"type": "spiral"}},
])
def test_web_config_errors(bad):
    with pytest.raises(ValueError):
        web_spec_from_json(bad)
