"""End-to-end property checks, shared by ``stackel-lab verify`` and the test suite.

Each criterion returns a :class:`CriterionResult` holding named checks with
the measured value, the bound and the comparison. All sampling is driven by
one seed, so a report is a pure function of ``(selector, seed)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import shipped
from .algebra import simultaneous_diag_test
from .billiard import billiard_config_from_json, billiard_run, caustic_check
from .dynamics import (PhasePoint, StaeckelQuadratic, bracket_scale, flat_hamiltonian, geodesic_residual,
                       hamiltonian_flow, poisson_bracket, staeckel_observables)
from .lines import (confocal_identity_residual, line_through, quadric_tangent_line, random_case_params,
                    screw_nonintegrability, symmetry_case_integrals, tangent_complex_value,
                    translation_triple_forms)
from .staeckel import WorkingBox
from .webs import (SIGN_PAIRS, admissible_pencil, analytic_relation_vectors, curvature_decay,
                   estimate_web_rank, random_adapted_3web, random_adapted_4web, reflection_permutes,
                   staeckel_web_spec, subspace_angle, web_directions, web_spec_from_json)

STAECKEL_FIXTURES = ("vandermonde", "random2", "constant")
FLOW_FIXTURES = ("vandermonde_wide", "liouville")
BILLIARD_FIXTURES = ("billiard_vandermonde_a", "billiard_vandermonde_b", "billiard_random2", "billiard_constant")


@dataclass
class Check:
    name: str
    value: float
    limit: float
    op: str  # "<=", ">=" or "=="

    @property
    def passed(self) -> bool:
        v = self.value
        if isinstance(v, float) and math.isnan(v):
            return False
        if self.op == "<=":
            return v <= self.limit
        if self.op == ">=":
            return v >= self.limit
        return v == self.limit

    def to_json_obj(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit, "op": self.op,
                "passed": self.passed}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)

    def add(self, name, value, op, limit):
        self.checks.append(Check(name, float(value) if not isinstance(value, bool) else value, limit, op))

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def summary(self) -> str:
        n_ok = sum(c.passed for c in self.checks)
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.title} ({n_ok}/{len(self.checks)} checks)"

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_json_obj(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "checks": [c.to_json_obj() for c in self.checks]}


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


# -- 1 ---------------------------------------------------------------------------------

def check_involution(seed: int, n_points: int = 100, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(1, "involution of H, I2, I3")
    for fi, name in enumerate(STAECKEL_FIXTURES):
        data, box = shipped.metric(name)
        H, I2, I3 = staeckel_observables(data, box)
        rng = _rng(seed, 1, fi)
        worst = {"H,I2": 0.0, "H,I3": 0.0, "I2,I3": 0.0}
        for _ in range(n_points):
            s = np.concatenate([box.sample(rng, 1)[0], rng.normal(size=3)])
            for key, (F, G) in (("H,I2", (H, I2)), ("H,I3", (H, I3)), ("I2,I3", (I2, I3))):
                worst[key] = max(worst[key], abs(poisson_bracket(F, G, s)) / bracket_scale(F, G, s))
        for key, v in worst.items():
            res.add(f"{name} {{{key}}}/scale", v, "<=", 1e-10)
    return res


# -- 2 ---------------------------------------------------------------------------------

def check_conservation(seed: int, n_starts: int = 5, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(2, "conservation along the adaptive flow")
    for fi, name in enumerate(FLOW_FIXTURES):
        data, box = shipped.metric(name)
        H = StaeckelQuadratic(data, 1)
        rng = _rng(seed, 2, fi)
        for k in range(n_starts):
            x = box.center
            p = rng.normal(size=3)
            p = p / math.sqrt(2.0 * H.value(np.concatenate([x, p])))
            start = PhasePoint(*x, *p)
            drifts, resid, inside = [], [], True
            for tol in (1e-10, 1e-12):
                tr = hamiltonian_flow(data, start, 10.0, tol, box=box)
                inside = inside and tr.event is None
                drifts.append(float(np.max(tr.drift())))
                resid.append(geodesic_residual(data, tr))
            tag = f"{name} start {k}"
            res.add(f"{tag} stays in box over [0, 10]", inside, "==", True)
            res.add(f"{tag} drift tol=1e-10", drifts[0], "<=", 1e-8)
            res.add(f"{tag} drift ratio 1e-10/1e-12", drifts[0] / max(drifts[1], 1e-300), ">=", 10.0)
            res.add(f"{tag} geodesic residual tol=1e-10", resid[0], "<=", 1e-5)
            res.add(f"{tag} geodesic residual tol=1e-12", resid[1], "<=", 1e-5)
    return res


# -- 3 and 4 ---------------------------------------------------------------------------

def _pencils(seed: int, tag: int, fi: int, data, box, count: int):
    rng = _rng(seed, tag, fi)
    return [admissible_pencil(data, box, rng) for _ in range(count)], rng


def check_directions(seed: int, n_pencils: int = 5, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(3, "web directions and coordinate mirrors")
    for fi, name in enumerate(STAECKEL_FIXTURES):
        data, box = shipped.metric(name)
        pencils, rng = _pencils(seed, 3, fi, data, box, n_pencils)
        r_worst = m_worst = 0.0
        all_ok = True
        for lam, mu in pencils:
            pt = box.sample(rng, 1)[0]
            ws = web_directions(data, pt, lam, mu)
            r_worst = max(r_worst, ws.residuals["I2"], ws.residuals["I3"])
            rep = reflection_permutes(ws)
            m_worst = max(m_worst, rep.max_mismatch)
            all_ok = all_ok and rep.ok
        res.add(f"{name} |I-lambda g| on unit directions", r_worst, "<=", 1e-10)
        res.add(f"{name} mirror mismatch (rad)", m_worst, "<=", 1e-9)
        res.add(f"{name} mirrors permute the set", all_ok, "==", True)
    return res


def check_rank(seed: int, n_pencils: int = 5, n_random: int = 100, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(4, "web rank")
    for fi, name in enumerate(STAECKEL_FIXTURES):
        data, box = shipped.metric(name)
        pencils, _ = _pencils(seed, 4, fi, data, box, n_pencils)
        ranks, angles = [], []
        for k, (lam, mu) in enumerate(pencils):
            signs = SIGN_PAIRS[k % len(SIGN_PAIRS)]
            r = estimate_web_rank(staeckel_web_spec(data, box, lam, mu, signs, n=8), tol=1e-8, jobs=jobs)
            ranks.append(r.rank)
            an = analytic_relation_vectors(data, lam, mu, signs, r.axes)
            angles.append(subspace_angle(an, r.basis) if r.rank else math.pi / 2)
        res.add(f"{name} min rank", min(ranks), "==", 2)
        res.add(f"{name} max rank", max(ranks), "==", 2)
        res.add(f"{name} a1, a2 subspace angle", max(angles), "<=", 1e-6)
    box = WorkingBox([[-0.5, 0.5]] * 3)
    rng = _rng(seed, 4, 100)
    r4 = [estimate_web_rank(random_adapted_4web(rng, box, 8)[0], tol=1e-8, jobs=jobs).rank
          for _ in range(n_random)]
    rng = _rng(seed, 4, 101)
    r3 = [estimate_web_rank(random_adapted_3web(rng, box, 8)[0], tol=1e-8, jobs=jobs).rank
          for _ in range(n_random)]
    res.add(f"max rank over {n_random} random adapted 4-webs", max(r4), "<=", 2)
    res.add(f"max rank over {n_random} random adapted 3-webs", max(r3), "<=", 1)
    return res


# -- 5 ---------------------------------------------------------------------------------

def _web3(name: str):
    cfg = shipped.load(name)
    spec, _ = web_spec_from_json(cfg)
    return spec, cfg["point"], cfg["h"]


def check_curvature(seed: int, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(5, "curvature of the connection form")
    spec, pt, hs = _web3("web3_rank1")
    dec = curvature_decay(spec, pt, hs)
    res.add("rank-1 web: connection exists at every h", all(dec["exists"]), "==", True)
    res.add("rank-1 web: min observed order", min(dec["orders"]), ">=", 1.8)
    res.add("rank-1 web: estimator rank", estimate_web_rank(spec, jobs=jobs).rank, "==", 1)
    for name in ("web3_rank0", "web3_noconnection"):
        spec, pt, hs = _web3(name)
        dec = curvature_decay(spec, pt, hs)
        if all(dec["exists"]):
            norms = dec["norms"]
            res.add(f"{name}: min |d gamma|", min(norms), ">=", 1e-3)
            res.add(f"{name}: spread of |d gamma| over h", (max(norms) - min(norms)) / max(norms), "<=", 0.05)
        else:
            res.add(f"{name}: connection form fails to exist", not any(dec["exists"]), "==", True)
        res.add(f"{name}: estimator rank", estimate_web_rank(spec, jobs=jobs).rank, "==", 0)
    return res


# -- 6 ---------------------------------------------------------------------------------

def check_billiard(seed: int, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(6, "billiard integrability")
    axes_seen = {1e-10: set(), 1e-12: set()}
    for name in BILLIARD_FIXTURES:
        cfg = billiard_config_from_json(shipped.load(name))
        pencil = shipped.load(name).get("pencil")
        for tol in (1e-10, 1e-12):
            r = billiard_run(cfg["data"], cfg["walls"], cfg["start"], 50, tol, box=cfg["box"])
            res.add(f"{name} bounces tol={tol:g}", len(r.bounces), "==", 50)
            err = r.conservation_errors()
            res.add(f"{name} max drift of H, I2, I3, lambda, mu tol={tol:g}", max(err.values()), "<=", 1e-8)
            res.add(f"{name} max jump across a reflection tol={tol:g}", max(r.reflection_jumps().values()),
                    "<=", 1e-8)
            if pencil is None:
                continue
            tps = caustic_check(cfg["data"], r, pencil["lambda"], pencil["mu"])
            for axis in range(3):
                vals = [tp.residual for tp in tps if tp.axis == axis]
                if vals:
                    axes_seen[tol].add(axis)
                    limit = 1e-6 if tol == 1e-10 else 1e-8
                    res.add(f"{name} {'xyz'[axis]}-turning residual tol={tol:g} ({len(vals)} points)",
                            max(vals), "<=", limit)
    for tol, seen in axes_seen.items():
        res.add(f"turning points seen on x, y and z tol={tol:g}", len(seen), "==", 3)
    return res


# -- 7 ---------------------------------------------------------------------------------

def check_flat(seed: int, jobs: int = 1) -> CriterionResult:
    res = CriterionResult(7, "flat line-geometry examples")
    rng = _rng(seed, 7, 0)
    bad = 0
    for _ in range(10_000):
        L = line_through(rng.normal(size=3), rng.normal(size=3))
        bad += L.identity() != 0
    res.add("lines violating ap+bq+cr=0 exactly (of 10^4)", bad, "==", 0)

    worst = 0.0
    for _ in range(5):
        A, B, C = rng.uniform(0.3, 3.0, size=3)
        for _ in range(1000):
            L = _unit(quadric_tangent_line(A, B, C, rng))
            worst = max(worst, abs(tangent_complex_value(A, B, C, L)))
    res.add("|I2| on tangent lines of 5 ellipsoids", worst, "<=", 1e-9)

    A, B, C = rng.uniform(0.3, 3.0, size=3)
    for t in (-min(A, B, C) / 2, 0.0, 1.0):
        worst = 0.0
        for _ in range(1000):
            L = _unit(quadric_tangent_line(A + t, B + t, C + t, rng))
            worst = max(worst, abs(confocal_identity_residual(A, B, C, t, L)))
        res.add(f"confocal residual t={t:.6g}", worst, "<=", 1e-9)

    H = flat_hamiltonian()
    for case in ("translation", "rotation", "screw"):
        I1, I2 = symmetry_case_integrals(case, random_case_params(case, rng))
        worst = 0.0
        for _ in range(100):
            s = rng.normal(size=6)
            for F, G in ((H, I1), (H, I2), (I1, I2)):
                worst = max(worst, abs(poisson_bracket(F, G, s)) / bracket_scale(F, G, s))
        res.add(f"{case}: brackets of H, I1, I2 / scale", worst, "<=", 1e-10)

    forms = translation_triple_forms(random_case_params("translation", rng), rng.normal(size=3))
    res.add("translation {H, I2, r^2} simultaneously diagonalizable", simultaneous_diag_test(forms, np.eye(3)),
            "==", False)
    pt = rng.normal(size=3)
    for alpha in (1.0, -3.0, 0.5):
        res.add(f"screw scalar - 2 alpha, alpha={alpha:g}", screw_nonintegrability(alpha, pt) - 2 * alpha, "==", 0.0)
    return res


def _unit(L):
    s = 1.0 / float(np.linalg.norm(L.direction))
    return L.array * np.repeat(s, 6)


CRITERIA = {
    1: check_involution,
    2: check_conservation,
    3: check_directions,
    4: check_rank,
    5: check_curvature,
    6: check_billiard,
    7: check_flat,
}

SELECTORS = {
    "all": (1, 2, 3, 4, 5, 6, 7),
    "staeckel": (1,),
    "dynamics": (2,),
    "webs": (3, 4, 5),
    "billiard": (6,),
    "lines": (7,),
    **{str(k): (k,) for k in CRITERIA},
}


def run(selector: str = "all", seed: int | None = None, jobs: int = 1) -> dict:
    """Run the selected criteria; raises ``KeyError`` for an unknown selector."""
    if selector not in SELECTORS:
        raise KeyError(selector)
    seed = shipped.default_seed() if seed is None else int(seed)
    results = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k in SELECTORS[selector]:
            results.append(CRITERIA[k](seed, jobs=jobs))
    return {"selector": selector, "seed": seed, "passed": all(r.passed for r in results),
            "criteria": [r.to_json_obj() for r in results], "results": results}
