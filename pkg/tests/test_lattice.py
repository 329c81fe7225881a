import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from kmslab.formal import FormalWeight
from kmslab.lattice import (E1, E2, V1, V2, LatticeVector, NotConformal, NotCoprime, NotHereditary,
                            StaircaseProfile, WindowTooSmall, apply_psi, check_equivariance, check_lift,
                            check_phi, cocycle, equivariance_sweep, lift_measure, make_phi,
                            profile_from_word, translate_profile)
from kmslab.symbolic import Cylinder, bernoulli_half, make_orbit_measure, make_product_conformal

INF = math.inf


def test_basis_conversion_round_trip():
    assert V1 == LatticeVector(1, 0) and V2 == LatticeVector(1, 1)
    for a in range(-3, 4):
        for g in range(-3, 4):
            assert LatticeVector.from_v(a, g).to_v() == (a, g)
    assert cocycle(V2, Fraction(1, 2)) == Fraction(3, 2)


def test_profiles_of_constant_words():
    zeros = profile_from_word(Cylinder.word(-4, [0] * 9), 0)
    ones = profile_from_word(Cylinder.word(-4, [1] * 9), 0)
    assert set(zeros.heights) == {0}
    assert all(ones[m] == -m for m in ones.columns())
    assert ones.window == (-4, 5)
    assert profile_from_word(Cylinder.word(-4, [1, 1]), 0).window == (0, 0)
    assert profile_from_word(Cylinder.word(1, [1, 1]), 0).window == (0, 0)


def test_translation_examples():
    zero = StaircaseProfile(-2, (0, 0, 0, 0, 0))
    assert set(translate_profile(zero, V2).heights) == {1}
    moved = translate_profile(zero, V1)
    assert moved.window == (-1, 3) and set(moved.heights) == {0}


def test_equivariance_examples():
    zeros = Cylinder.word(-4, [0] * 9)
    ones = Cylinder.word(-4, [1] * 9)
    assert check_equivariance(zeros, 0, "v2")
    assert check_equivariance(ones, 0, "v1")
    lhs = translate_profile(profile_from_word(ones, 0), V1)
    assert all(lhs[m] == -(m - 1) for m in lhs.columns())
    rhs = profile_from_word(Cylinder.word(-3, [1] * 9), 1)
    assert all(rhs[m] == 1 - m for m in rhs.columns())


def test_equivariance_on_small_window():
    rows = equivariance_sweep((-2, 2), range(-1, 2))
    assert rows and all(r[-1] for r in rows)


words = st.integers(-4, -1).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.integers(0, 1), min_size=-a, max_size=9 + a)))


@given(words, st.integers(-2, 2), st.sampled_from(["v1", "v2"]))
def test_equivariance_property(word, t, g):
    a, syms = word
    assert check_equivariance(Cylinder.word(a, syms), t, g)


@given(words, st.integers(-2, 2), st.sampled_from([V1, V2, E1, E2, LatticeVector(-2, 1)]))
def test_hereditarity_preserved(word, t, s):
    a, syms = word
    A = profile_from_word(Cylinder.word(a, syms), t)
    assert A.is_hereditary()
    B = translate_profile(A, s)
    assert all(x >= y for x, y in zip(B.heights, B.heights[1:]))


def test_profile_errors():
    with pytest.raises(WindowTooSmall):
        profile_from_word(Cylinder.full(), 0)
    with pytest.raises(NotHereditary):
        StaircaseProfile(0, (0, 1))
    with pytest.raises(WindowTooSmall):
        StaircaseProfile(0, (0,))[3]


# SL2 reparametrizations


@pytest.mark.parametrize("p, q, matrix", [
    (1, 1, [[1, 0], [0, 1]]), (1, 2, [[1, 0], [1, 1]]), (2, 3, [[2, 1], [1, 1]])])
def test_make_phi_examples(p, q, matrix):
    assert make_phi(p, q).as_matrix() == matrix


def _all_solutions(p, q):
    return [(x, y, q - x, p - y) for x in range(q + 1) for y in range(p + 1)
            if x * (p - y) - y * (q - x) == 1]


@given(st.integers(1, 20), st.integers(1, 20))
def test_make_phi_constraints(p, q):
    assume(math.gcd(p, q) == 1)
    phi = make_phi(p, q)
    assert all(check_phi(phi, p, q).values())
    # exhaustive search: the nonnegative solution is unique
    assert _all_solutions(p, q) == [(phi.x, phi.y, phi.z, phi.w)]


def test_make_phi_rejects_common_factor():
    with pytest.raises(NotCoprime):
        make_phi(2, 4)


# the coordinate swap


def test_psi_fixes_the_diagonal():
    diag = StaircaseProfile(-3, (3, 2, 1, 0, -1, -2, -3), "standard")
    out = apply_psi(diag)
    assert len(out.heights) >= 6 and out.same_on_common_window(diag)
    tailed = StaircaseProfile(-3, diag.heights, "standard", INF, -INF)
    assert apply_psi(tailed, columns=range(-3, 4)).heights == diag.heights


def test_psi_swaps_half_planes():
    upper = StaircaseProfile(-2, (INF, INF, -INF, -INF, -INF), "standard", INF, -INF)
    out = apply_psi(upper)
    assert set(out.heights) == {-1}


std_profiles = st.tuples(st.integers(-3, 0), st.lists(st.integers(-4, 4), min_size=1, max_size=6),
                         st.integers(0, 3), st.integers(0, 3)).map(
    lambda t: StaircaseProfile(t[0], tuple(sorted(t[1], reverse=True)), "standard",
                               max(t[1]) + t[2], min(t[1]) - t[3]))


@given(std_profiles)
def test_psi_matches_set_swap(A):
    B = apply_psi(A)
    # (n, m) in psi^{-1}(A) iff (m, n) in A, i.e. m <= B[n] iff n <= A[m]
    for n in B.columns():
        for m in range(-12, 13):
            assert (m <= B[n]) == (n <= A[m])


@given(std_profiles)
def test_psi_is_an_involution(A):
    # columns wide enough that the swapped profile's tails are determined
    B = apply_psi(A, columns=range(-9, 10))
    assert B.left_tail is not None and B.right_tail is not None
    C = apply_psi(B, columns=list(A.columns()))
    assert C.heights == A.heights


# lifted measures


def test_lift_slices():
    m = make_product_conformal("ln2", 1)
    lm = lift_measure(m)
    E = Cylinder.word(-2, [0, 1, 1])
    u, v = m.binding()
    assert lm.weight(E, 0) == m.weight(E)
    assert lm.weight(E, 1).evaluate(u, v) == Fraction(1, 4) * m.evaluate(E)  # e^{-2 ln 2}
    assert lm.weight(E, 1) == FormalWeight.monomial(u=1, v=1) * m.weight(E)


@pytest.mark.parametrize("m", [make_product_conformal("ln2", 1), make_product_conformal("ln3", "1/2"),
                               make_orbit_measure("ln2", 1)])
def test_lift_conformal_small(m):
    rows = check_lift(lift_measure(m), depth=3, slices=3)
    assert rows and all(r[3] for r in rows)


def test_lift_rejects_non_conformal_base():
    with pytest.raises(NotConformal):
        lift_measure(bernoulli_half("ln2", 1))


def test_profile_record_round_trip():
    A = StaircaseProfile(-1, (2, 1, 1))
    assert StaircaseProfile.from_record(A.to_record()) == A
