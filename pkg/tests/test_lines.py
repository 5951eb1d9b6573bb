from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stackel_lab.algebra import MPoly, Poly1, simultaneous_diag_test
from stackel_lab.dynamics import (
    PhasePoly,
    bracket_scale,
    flat_hamiltonian,
    generic_flow,
    poisson_bracket,
)
from stackel_lab.lines import (
    PluckerLine,
    TwoTranslationHamiltonian,
    _classify_by_distance,
    classify_line,
    confocal_identity_residual,
    confocal_scale,
    dump_line_fixture,
    j2_value,
    line_fixture_corpus,
    line_through,
    one_form_integrability,
    plucker_polys,
    quadric_tangent_line,
    random_case_params,
    screw_nonintegrability,
    symmetry_case_integrals,
    tangent_complex_scale,
    tangent_complex_value,
    translation_triple_forms,
)

coord = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(coord, coord, coord)


def test_line_through_example():
    L = line_through((1, 0, 0), (0, 1, 0))
    # a = qz - ry, b = rx - pz, c = py - qx
    assert (L.p, L.q, L.r, L.a, L.b, L.c) == (0, 1, 0, 0, 0, -1)
    assert L.identity() == 0


def test_line_through_origin_has_zero_moment():
    L = line_through((0, 0, 0), (0.3, -2, 5))
    assert (L.a, L.b, L.c) == (0, 0, 0)


def test_zero_direction():
    with pytest.raises(ValueError):
        line_through((1, 2, 3), (0, 0, 0))
    with pytest.raises(ValueError):
        PluckerLine(*(Fraction(v) for v in (0, 0, 0, 1, 0, 0)))


@settings(max_examples=300)
@given(vec3, vec3)
def test_identity_exact(point, direction):
    if not any(direction):
        return
    assert line_through(point, direction).identity() == 0


@settings(max_examples=100)
@given(vec3, vec3, st.floats(-10, 10), st.floats(0.125, 8))
def test_points_on_line_give_same_line(point, direction, s, k):
    if not any(direction):
        return
    a = line_through(point, direction)
    other = tuple(Fraction(x) + Fraction(s) * Fraction(d) for x, d in zip(point, direction))
    b = line_through(other, tuple(Fraction(k) * Fraction(d) for d in direction))
    assert a.same_line(b)
    assert a.same_line(a.scaled(-3))


def test_same_line_distinguishes():
    a = line_through((0, 0, 0), (1, 0, 0))
    assert not a.same_line(line_through((0, 1, 0), (1, 0, 0)))
    assert not a.same_line(line_through((0, 0, 0), (0, 1, 0)))


def test_unit_sphere_tangent():
    L = line_through((1, 0, 0), (0, 1, 0))
    assert tangent_complex_value(1, 1, 1, L) == 0.0
    # distance from the origin is |moment| / |direction| = 1
    assert np.linalg.norm(L.moment) / np.linalg.norm(L.direction) == 1.0


def test_line_through_centre_is_secant():
    L = line_through((0, 0, 0), (1, 2, 3))
    v = tangent_complex_value(2, 3, 5, L)
    assert v == -(15 * 1 + 10 * 4 + 6 * 9)
    assert classify_line(2, 3, 5, L) == "secant"


def test_degenerate_quadric_rejected():
    with pytest.raises(ValueError):
        tangent_complex_value(0, 1, 1, line_through((0, 0, 0), (1, 0, 0)))


def test_value_scales_quadratically():
    L = line_through((0.4, -1.2, 2.0), (1, 1, -0.5))
    v = tangent_complex_value(1, 2, 3, L)
    assert tangent_complex_value(1, 2, 3, L.scaled(3)) == pytest.approx(9 * v, rel=1e-14)
    assert classify_line(1, 2, 3, L.scaled(-2)) == classify_line(1, 2, 3, L)


def test_tangent_lines_annihilate_complex():
    rng = np.random.default_rng(42)
    for _ in range(5):
        A, B, C = rng.uniform(0.5, 3.0, size=3)
        for _ in range(200):
            L = quadric_tangent_line(A, B, C, rng)
            assert abs(tangent_complex_value(A, B, C, L)) <= 1e-9 * tangent_complex_scale(A, B, C, L)
            assert L.identity() == 0


def test_tangent_construction_needs_ellipsoid():
    with pytest.raises(ValueError):
        quadric_tangent_line(1, -1, 1, np.random.default_rng(0))


def test_classification_matches_discriminant():
    rng = np.random.default_rng(9)
    A, B, C = 1.0, 2.0, 0.5
    for _ in range(500):
        point, direction = rng.uniform(-3, 3, size=3), rng.normal(size=3)
        L = line_through(point, direction)
        assert classify_line(A, B, C, L) == _classify_by_distance(A, B, C, point, direction)


def test_confocal_identity_is_a_polynomial_identity():
    rng = np.random.default_rng(1)
    A, B, C = 1.5, 2.5, 4.0
    for _ in range(200):
        L = line_through(rng.normal(size=3), rng.normal(size=3))
        for t in (-0.7, 0.0, 0.4, 2.0):
            assert confocal_identity_residual(A, B, C, t, L) == pytest.approx(
                tangent_complex_value(A + t, B + t, C + t, L), abs=1e-10 * confocal_scale(A, B, C, t, L))


def test_confocal_identity_other_sign_fails():
    # I2 + t J2 + 2H t^2 belongs to the member (A - t, B - t, C - t), not (A + t, ...)
    rng = np.random.default_rng(2)
    A, B, C, t = 1.0, 2.0, 3.0, 0.5
    L = quadric_tangent_line(A + t, B + t, C + t, rng)
    p2 = float(L.direction @ L.direction)
    flipped = tangent_complex_value(A, B, C, L) + t * j2_value(A, B, C, L) + p2 * t * t
    assert abs(flipped) > 1e-3 * confocal_scale(A, B, C, t, L)
    assert abs(confocal_identity_residual(A, B, C, t, L)) <= 1e-9 * confocal_scale(A, B, C, t, L)


def test_confocal_t_zero_and_degenerate():
    L = line_through((0.2, 0.1, 0.3), (1, -1, 2))
    assert confocal_identity_residual(1, 2, 3, 0.0, L) == tangent_complex_value(1, 2, 3, L)
    with pytest.raises(ValueError):
        confocal_identity_residual(1, 2, 3, -1.0, L)


def test_fixture_corpus_tags():
    corpus = line_fixture_corpus(1.0, 2.0, 3.0, 20, seed=5)
    tags = [d["tag"] for d in corpus["lines"]]
    assert {t: tags.count(t) for t in set(tags)} == {"tangent": 20, "secant": 20, "external": 20}
    for d in corpus["lines"]:
        L = [d[k] for k in ("p", "q", "r", "a", "b", "c")]
        assert classify_line(1.0, 2.0, 3.0, L) == d["tag"]
    assert dump_line_fixture(corpus) == dump_line_fixture(line_fixture_corpus(1.0, 2.0, 3.0, 20, seed=5))


@pytest.mark.parametrize("case", ["translation", "rotation", "screw"])
def test_symmetry_cases_commute(case):
    rng = np.random.default_rng(3)
    H = flat_hamiltonian()
    for _ in range(10):
        I1, I2 = symmetry_case_integrals(case, random_case_params(case, rng))
        for _ in range(10):
            pt = rng.normal(size=6)
            for F, G in ((H, I1), (H, I2), (I1, I2)):
                assert abs(poisson_bracket(F, G, pt)) <= 1e-10 * max(bracket_scale(F, G, pt), 1.0)


def test_plucker_moment_brackets():
    # {a, b} = c-type rotation algebra: {a, b} = -c with a = qz - ry etc.
    p, q, r, a, b, c = (PhasePoly(m) for m in plucker_polys())
    pt = np.array([0.3, -0.7, 1.1, 0.5, 0.2, -0.4])
    assert poisson_bracket(a, b, pt) == pytest.approx(-c(pt), abs=1e-15)
    assert poisson_bracket(c, p, pt) == pytest.approx(-q(pt), abs=1e-15)


def test_symmetry_case_errors():
    with pytest.raises(ValueError):
        symmetry_case_integrals("screw", {"alpha": 0.0, "A": 1, "B": 1, "C": 1, "D": 1})
    with pytest.raises(ValueError):
        symmetry_case_integrals("helix", {})
    with pytest.raises(ValueError):
        symmetry_case_integrals("translation", {"Q": [[1, 2, 0], [0, 1, 0], [0, 0, 1]], "A": 0, "B": 0,
                                                "C": 0, "D": 0})


def test_generic_translation_triple_not_simultaneously_diagonal():
    rng = np.random.default_rng(4)
    params = random_case_params("translation", rng)
    forms = translation_triple_forms(params, rng.normal(size=3))
    assert not simultaneous_diag_test(forms, np.eye(3))
    diag = {"Q": np.diag([1.0, 2.0, 3.0]), "A": 0.0, "B": 0.0, "C": 0.0, "D": 0.0}
    assert simultaneous_diag_test(translation_triple_forms(diag, [0.1, 0.2, 0.3]), np.eye(3))


@pytest.mark.parametrize("alpha", [1.0, -3.0, 0.5, 0.0])
def test_screw_scalar(alpha):
    for pt in ([0, 0, 0], [1.5, -2.0, 7.0]):
        assert screw_nonintegrability(alpha, pt) == 2 * alpha


def test_integrable_form_has_zero_scalar():
    x, y, z = (MPoly.var(3, i) for i in range(3))
    # d(xyz) is exact, hence integrable
    assert one_form_integrability([y * z, x * z, x * y], [0.3, 0.4, 0.5]) == 0.0


def test_two_translation_conserves_momenta():
    H = TwoTranslationHamiltonian(Poly1([2.0, 0.5]), Poly1([0.3, 0.0, 0.2]), Poly1([1.5, -0.2, 0.1]))
    px = PhasePoly(PhasePoly.variables()[3], name="px")
    py = PhasePoly(PhasePoly.variables()[4], name="py")
    traj = generic_flow(H, [0.0, 0.0, 0.1, 0.7, -0.4, 0.5], 5.0, tol=1e-11, monitors=(px, py))
    assert traj.labels == ("H", "px", "py")
    assert np.max(traj.drift()[1:]) <= 1e-12
    assert traj.drift()[0] <= 1e-9
    assert np.ptp(traj.states[:, 2]) > 0.1


def test_two_translation_gradient_matches_differences():
    from stackel_lab.dynamics import fd_gradient

    H = TwoTranslationHamiltonian(Poly1([2.0, 0.5]), Poly1([0.3, 0.0, 0.2]), Poly1([1.5, -0.2, 0.1]))
    pt = np.array([0.1, 0.2, 0.3, 0.7, -0.4, 0.5])
    np.testing.assert_allclose(H.grad(pt), fd_gradient(H, pt), rtol=1e-7, atol=1e-10)
    with pytest.raises(ValueError):
        H([0, 0, -10.0, 1, 1, 1])
