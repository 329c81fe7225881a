"""The eleven acceptance criteria, each at its stated tolerance and time limit.

Every test appends one PASS/FAIL line (with runtime) to the acceptance summary printed at
the end of the pytest run.
"""

import math
import time
from fractions import Fraction

from kmslab import isometry as iso
from kmslab.lattice import check_lift, check_phi, equivariance_sweep, lift_measure, make_phi
from kmslab.odometer import (CANONICAL_HEIGHTS, TowerSystem, cycle_length, is_permutation, kac_check,
                             tower_mass)
from kmslab.oracle import OracleStore
from kmslab.riesz import (RieszSpec, all_signed_decompositions, compare_spectra, koopman_autocorrelation,
                          riesz_coefficient, riesz_coefficient_numeric, signed_decomposition)
from kmslab.scenarios import riesz_key
from kmslab.symbolic import check_conformal, cylinder_count, make_product_conformal, pushforward_kappa

PARAMS = [("ln2", 1), ("-ln2", 1), ("ln2", 2), ("ln3", "1/2")]


class Criterion:
    def __init__(self, log, number, title, limit):
        self.log, self.number, self.title, self.limit = log, number, title, limit

    def __enter__(self):
        self.t0 = time.perf_counter()
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and elapsed < self.limit
        why = "" if exc_type is None else f" [{exc_type.__name__}]"
        self.log.append((self.number, f"{'PASS' if ok else 'FAIL'}  {self.number:>2}. {self.title}: "
                                      f"{elapsed:.1f} s (limit {self.limit} s){why} {self.detail}".rstrip()))
        if exc_type is None:
            assert elapsed < self.limit, f"took {elapsed:.1f} s, limit {self.limit} s"
        return False


def test_conformality_depth_8(acceptance_log):
    with Criterion(acceptance_log, 1, "product measures conformal on all cylinders of depth <= 8", 60) as c:
        for beta, theta in PARAMS:
            rep = check_conformal(make_product_conformal(beta, theta), 8, keep_rows=False)
            assert rep.verdict, (beta, theta)
        c.detail = f"({len(PARAMS)} x {cylinder_count(8)} rows, exact)"


def test_kappa_duality(acceptance_log):
    with Criterion(acceptance_log, 2, "kappa pushforward conformal at (-beta, theta)", 30) as c:
        for beta, theta in PARAMS:
            m = make_product_conformal(beta, theta)
            k = pushforward_kappa(m)
            assert k.beta.value == -m.beta.value and k.theta == m.theta
            assert check_conformal(k, 8, keep_rows=False).verdict, (beta, theta)
        c.detail = "(depth 8, exact)"


def test_equivariance(acceptance_log):
    with Criterion(acceptance_log, 3, "profile equivariance on window [-4, 4], t in [-2, 2]", 30) as c:
        rows = equivariance_sweep((-4, 4), range(-2, 3), ("v1", "v2"))
        bad = [r for r in rows if not r[-1]]
        assert not bad, bad[:3]
        lengths = {len(r[1]) for r in rows}
        assert 9 in lengths and sum(1 for r in rows if len(r[1]) == 9) == 2 ** 9 * 5 * 2
        c.detail = f"({len(rows)} rows)"


def test_lift(acceptance_log):
    with Criterion(acceptance_log, 4, "lifted measure v1/v2 conformal, depth <= 5, |n| <= 5", 60) as c:
        total = 0
        for beta, theta in PARAMS:
            rows = check_lift(lift_measure(make_product_conformal(beta, theta)), depth=5, slices=5)
            assert all(r[3] for r in rows), (beta, theta)
            total += len(rows)
        c.detail = f"({total} rows, exact)"


def test_sl2_reparametrization(acceptance_log):
    with Criterion(acceptance_log, 5, "make_phi constraints for coprime p, q <= 20", 5) as c:
        n = 0
        for p in range(1, 21):
            for q in range(1, 21):
                if math.gcd(p, q) != 1:
                    continue
                checks = check_phi(make_phi(p, q), p, q)
                assert all(checks.values()), (p, q, checks)
                n += 1
        c.detail = f"({n} pairs)"


def test_tower(acceptance_log):
    with Criterion(acceptance_log, 6, "tower permutation, Kac cycle, exact increasing mass", 30) as c:
        masses = []
        for K in range(1, 7):
            T = TowerSystem(CANONICAL_HEIGHTS, K)
            assert is_permutation(T) and kac_check(T), K
            masses.append(tower_mass(T))
        assert all(b > a for a, b in zip(masses, masses[1:]))
        T3 = TowerSystem(CANONICAL_HEIGHTS, 3)
        assert tower_mass(T3, include_overflow=False) == Fraction(9, 4)
        assert tower_mass(T3) >= Fraction(9, 4)
        c.detail = "(masses " + ", ".join(str(m) for m in masses) + ")"


def test_riesz(acceptance_log):
    with Criterion(acceptance_log, 7, "Riesz coefficients vs numeric integration, unique decompositions", 30) as c:
        R = RieszSpec(CANONICAL_HEIGHTS[:3])
        radius = R.frequencies[-1] + R.frequencies[-2]
        worst = 0.0
        for m in range(-radius, radius + 1):
            worst = max(worst, abs(riesz_coefficient_numeric(m, R) - float(riesz_coefficient(m, R))))
        assert worst <= 1e-10
        for m in range(-R.support_radius, R.support_radius + 1):
            found = all_signed_decompositions(m, R)
            assert len(found) <= 1 and signed_decomposition(m, R) == (found[0] if found else None)
        c.detail = f"(max error {worst:.1e})"


def test_spectral_comparison(acceptance_log):
    with Criterion(acceptance_log, 8, "autocorrelation equals committed oracle; deviations within thresholds", 60) as c:
        T = TowerSystem((1, 4, 13), 3)
        key = riesz_key({"heights": [1, 4, 13], "K": 3})
        rec = OracleStore().get(key)
        L = cycle_length(T)
        assert rec["cycle_length"] == L
        stored = [Fraction(x) for x in rec["values"]]
        assert [koopman_autocorrelation(T, lag) for lag in range(L + 1)] == stored
        thresholds = {b: Fraction(t) for b, t in rec["thresholds"].items()}
        rep = compare_spectra(T, list(range(L + 1)), thresholds, oracle_key=key)
        assert rep.verdict
        c.detail = f"(key {key}, thresholds {rec['thresholds']})"


BUILDS = {
    "f=0, N=12": lambda: iso.build_theta1_rep([0, 0, 0, 0], 12, "2ln2"),
    "one descent": lambda: iso.build_theta1_rep([1, 1, 1, 0, 0, 0], 8, "2ln2"),
    "operator2 (seeded Koopman-type U)": lambda: iso.build_operator2_rep(
        iso.koopman_unitary(4, 2024), iso.diagonal_partition([0, 0, 1, 2]), 8),
    "staircase (-1,-1,-3,-4)": lambda: iso.build_staircase_rep([-1, -1, -3, -4], 10),
}


def test_isometry_engine(acceptance_log):
    with Criterion(acceptance_log, 9, "isometries, commuting ranges, eigen-relation, covariance", 60) as c:
        for name, build in BUILDS.items():
            rep = build()
            for r in iso.check_isometry(rep):
                assert (r.residual == 0) if rep.exact else (r.residual <= 1e-12), (name, r)
            for r in iso.check_commutation(rep, 2):
                assert r.passed, (name, r)
                assert r.residual == 0 or not rep.exact, (name, r)
            if rep.model is None:
                continue
            assert all(r.passed and r.residual == 0 for r in iso.check_covariance(rep, 2)), name
            ev = iso.eigenvector_xi(rep)
            assert ev.values.dtype == object  # exact for beta = 2 ln 2
            assert all(r.passed and r.residual == 0 for r in iso.check_eigen_relation(rep, ev.values)), name
        c.detail = f"({len(BUILDS)} builds)"


def test_measure_construction(acceptance_log):
    with Criterion(acceptance_log, 10, "layer measures consistent, conformal, mass = ||xi_a||^2", 30) as c:
        for name in ("f=0, N=12", "one descent"):
            rep = BUILDS[name]()
            ev = iso.eigenvector_xi(rep)
            fam = iso.coherent_from_vector(rep, ev.values, iso.p_grid(2))
            lm = iso.measure_from_eigenvector(rep, fam, strict=True)
            assert all(r.passed and r.residual == 0 for r in lm.checks), name
            for a in fam.grid:
                assert lm.mass(a) == rep.weight * sum(x * x for x in fam.vectors[a])
        c.detail = "(exact rationals)"


def test_non_one_conformality_trend(acceptance_log):
    with Criterion(acceptance_log, 11, "invariant layer mass grows with K and equals base mass", 30) as c:
        Ts = [TowerSystem((1, 4, 13, 40, 121), K) for K in (3, 4, 5)]
        layers = [iso.invariant_layers(iso.build_tower_rep(T, 2, 0), [(0, 0), (1, 0)]) for T in Ts]
        res = iso.one_conformality_probe(layers, (1, 0))
        assert res["trend"] == "growing"
        assert all(b > a for a, b in zip(res["masses"], res["masses"][1:]))
        assert res["masses"] == [tower_mass(T) for T in Ts]
        c.detail = "(masses " + ", ".join(str(m) for m in res["masses"]) + ")"
