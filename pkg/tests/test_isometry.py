import math
from fractions import Fraction

import numpy as np
import pytest

from kmslab import isometry as iso
from kmslab.odometer import TowerSystem, tower_mass
from kmslab.oracle import OracleStore
from kmslab.scenarios import DEFAULTS, purity_key


def all_pass(rows):
    return all(r.passed for r in rows), [r for r in rows if not r.passed]


@pytest.fixture(scope="module")
def flat():
    return iso.build_theta1_rep([0, 0, 0, 0], 12, "2ln2")


@pytest.fixture(scope="module")
def descent():
    return iso.build_theta1_rep([1, 1, 1, 0, 0, 0], 8, "2ln2")


@pytest.fixture(scope="module")
def stair():
    return iso.build_staircase_rep([-1, -1, -3, -4], 10)


def test_flat_model_is_a_pure_fiber_shift():
    rep = iso.build_theta1_rep([0, 0, 0], 6, "2ln2")
    assert np.array_equal(rep.V1.matrix, np.kron(np.eye(3, dtype=np.int64), iso.shift_matrix(6)))
    assert rep.exact
    assert all_pass(iso.check_isometry(rep))[0]


def test_slope_violation():
    with pytest.raises(iso.SlopeViolation):
        iso.build_theta1_rep([0, -2], 4, "2ln2")


@pytest.mark.parametrize("name", ["flat", "descent", "stair"])
def test_structural_identities(name, request):
    rep = request.getfixturevalue(name)
    rows = (iso.check_isometry(rep) + iso.check_commutation(rep, 2) + iso.check_covariance(rep, 2)
            + iso.check_gauge(rep))
    ok, bad = all_pass(rows)
    assert ok, bad
    exact = [r for r in rows if not r.identity.startswith("U_")]
    assert all(r.residual == 0 for r in exact)


@pytest.mark.parametrize("name", ["flat", "descent", "stair"])
def test_eigen_relation_exact(name, request):
    rep = request.getfixturevalue(name)
    ev = iso.eigenvector_xi(rep)
    assert ev.values.dtype == object
    rows = iso.check_eigen_relation(rep, ev.values)
    assert all(r.passed and r.residual == 0 for r in rows)


def test_eigenvector_norm_single_base_point():
    # xi(n) = 2^{-n}: ||xi||^2 = sum_{n<N} 4^{-n} -> 1/(1 - 1/4)
    rep = iso.build_theta1_rep([0], 9, "2ln2")
    ev = iso.eigenvector_xi(rep)
    assert ev.closed_form == Fraction(4, 3)
    assert ev.norm_sq == sum(Fraction(1, 4 ** n) for n in range(9))
    assert ev.defect == Fraction(4, 3) * Fraction(1, 4 ** 9)


def test_gauge_at_zero_is_identity(stair):
    assert np.allclose(iso.gauge_unitary(stair, 0.0), np.eye(stair.dim))


def test_coherent_family_vanishes_at_zero(descent):
    ev = iso.eigenvector_xi(descent)
    fam = iso.coherent_from_vector(descent, ev.values, iso.p_grid(2))
    assert all(x == 0 for x in fam.vectors[(0, 0)])
    assert all_pass(iso.check_coherence(descent, fam))[0]
    assert all_pass(iso.check_conformality_relation(descent, fam))[0]


@pytest.mark.parametrize("name", ["flat", "descent"])
def test_layer_measure(name, request):
    rep = request.getfixturevalue(name)
    ev = iso.eigenvector_xi(rep)
    fam = iso.coherent_from_vector(rep, ev.values, iso.p_grid(2))
    lm = iso.measure_from_eigenvector(rep, fam)
    assert lm.verdict
    for a in fam.grid:
        assert lm.mass(a) == rep.weight * sum(x * x for x in fam.vectors[a])
    # layer of e1 over a flat base is the bottom row, each cell with mu = xi^2 = 1
    if name == "flat":
        assert lm.layer((1, 0)) == [(i, 0) for i in range(4)]
        assert lm.mass((1, 0)) == 4


def test_layer_measure_rejects_incoherent_family(flat):
    ev = iso.eigenvector_xi(flat)
    fam = iso.coherent_from_vector(flat, ev.values, iso.p_grid(1))
    fam.vectors[(1, 1)] = fam.vectors[(1, 1)] * 2
    with pytest.raises(iso.CoherenceViolation):
        iso.measure_from_eigenvector(flat, fam)


# operator-valued second generator


def test_single_block_gives_unitary_times_identity():
    U = iso.haar_unitary(3, 5)
    rep = iso.build_operator2_rep(U, [np.eye(3)], 5)
    assert np.allclose(rep.V2.matrix, np.kron(U, np.eye(5)))
    assert np.allclose(rep.V2.matrix.conj().T @ rep.V2.matrix, np.eye(15))


def test_rotation_two_blocks():
    c, s = math.cos(0.3), math.sin(0.3)
    rep = iso.build_operator2_rep(np.array([[c, -s], [s, c]]), iso.diagonal_partition([0, 1]), 10)
    assert all_pass(iso.check_isometry(rep) + iso.check_commutation(rep, 1))[0]
    # a rotation that does not permute the blocks breaks E_(0,2) E_(1,0) = E_(1,0) E_(0,2)
    assert not all_pass(iso.check_commutation(rep, 2))[0]
    quarter = iso.build_operator2_rep(np.array([[0, -1], [1, 0]]), iso.diagonal_partition([0, 1]), 10)
    assert all_pass(iso.check_commutation(quarter, 2))[0]


def test_koopman_type_unitary_commutes_and_haar_does_not():
    P = iso.diagonal_partition([0, 0, 1, 2])
    good = iso.build_operator2_rep(iso.koopman_unitary(4, 2024), P, 8)
    assert all_pass(iso.check_isometry(good) + iso.check_commutation(good, 2))[0]
    for N in (8, 16):
        bad = iso.build_operator2_rep(iso.haar_unitary(4, 2024), P, N)
        assert all_pass(iso.check_isometry(bad))[0]
        E02, E10 = bad.E((0, 2)), bad.E((1, 0))
        C = (E02 @ E10 - E10 @ E02)[:, bad.interior((1, 2))]
        assert np.abs(C).max() > 0.1  # not a truncation effect: independent of N


def test_koopman_unitary_normalizes_diagonal_projections():
    U = iso.koopman_unitary(5, 3)
    assert np.allclose(U.conj().T @ U, np.eye(5))
    for P in iso.diagonal_partition([0, 1, 1, 2, 0]):
        Q = U @ P @ U.conj().T
        assert np.allclose(Q, np.diag(np.diag(Q)))


def test_partition_invalid():
    with pytest.raises(iso.PartitionInvalid):
        iso.build_operator2_rep(np.eye(2), [np.diag([1.0, 0.0])], 4)
    with pytest.raises(iso.PartitionInvalid):
        iso.build_operator2_rep(np.eye(2), [np.eye(2), np.diag([1.0, 0.0])], 4)


# staircase model


def test_staircase_decrement_classes():
    one = iso.build_staircase_rep([0, -1, -2, -3], 6)
    assert set(iso.decrement_classes(one)) == {1}
    two = iso.build_staircase_rep([0, -2, -4, -6], 6)
    assert set(iso.decrement_classes(two)) == {2}
    S = iso.shift_matrix
    mask = two.interior((0, 1))
    assert np.array_equal(two.V2.matrix[:, mask], np.kron(S(4), S(6, 2)).astype(np.int64)[:, mask])
    mask = one.interior((0, 1))
    assert np.array_equal(one.V2.matrix[:, mask], np.kron(S(4), S(6)).astype(np.int64)[:, mask])


def test_staircase_rejects_increasing_profile():
    with pytest.raises(iso.NotDecreasing):
        iso.build_staircase_rep([0, 1], 4)


def test_minimal_dilation_exhausts_window(stair):
    assert iso.dilation_span_rank(stair) == stair.dim


def test_purity_defect():
    rep = iso.build_staircase_rep(list(range(0, -10, -1)), 10)
    assert iso.purity_defect(rep, 0) == 1
    flat = iso.build_theta1_rep([0, 0], 6, "2ln2")
    assert iso.purity_defect(flat, 6) == 0
    spec = DEFAULTS["isometry-verify"]["purity"]
    ref = OracleStore().get(purity_key(spec))["values"][0]
    assert iso.purity_defect(rep, spec["steps"]) == pytest.approx(ref, abs=1e-12)


def _brute_purity(a, N, steps):
    """Count cells (r, s) whose preimage under +(steps, steps) lies in the grid."""
    cells = [(r, s) for r in range(len(a)) for s in range(N)]
    inside = 0
    for r, s in cells:
        r0 = r - steps
        if r0 < 0:
            continue
        s0 = s + a[r] - steps - a[r0]
        if 0 <= s0 < N:
            inside += 1
    return math.sqrt(inside / len(cells))


def test_purity_against_brute_force():
    a = list(range(0, -10, -1))
    for steps in range(5):
        assert iso.purity_defect(iso.build_staircase_rep(a, 10), steps) == pytest.approx(_brute_purity(a, 10, steps))


# invariant-layer probe


def test_probe_flat_single_point_is_finite():
    layers = [iso.invariant_layers(iso.build_theta1_rep([0], N, 0), [(0, 0), (1, 0)]) for N in (3, 5, 8)]
    res = iso.one_conformality_probe(layers)
    assert res["trend"] == "finite" and res["masses"] == [1, 1, 1]
    assert iso.one_conformality_probe(layers, (0, 0))["masses"] == [0, 0, 0]


def test_probe_tower_grows_with_base_mass():
    Ts = [TowerSystem((1, 4, 13, 40, 121), K) for K in (3, 4, 5)]
    layers = [iso.invariant_layers(iso.build_tower_rep(T, 2, 0), [(0, 0), (1, 0)]) for T in Ts]
    res = iso.one_conformality_probe(layers)
    assert res["trend"] == "growing"
    assert res["masses"] == [tower_mass(T) for T in Ts]


def test_tower_f_has_unit_upward_slope():
    f = iso.tower_f(TowerSystem((1, 4, 13), 3))
    assert all(f[(i + 1) % len(f)] - f[i] >= -1 for i in range(len(f)))


def test_rep_record_is_json_ready(stair):
    import json
    json.dumps(stair.to_record())
