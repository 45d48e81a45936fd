from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdeweak import freealg as fa
from sdeweak.freealg import (
    EXACT,
    FLOAT,
    EMPTY_WORD,
    LieElement,
    TruncatedSeries,
    Word,
    bch,
    bracket,
    exp,
    inner,
    log,
    mul,
    norm2,
    project_jm,
    rescale_psi,
    word_scaled_degree,
    words_up_to,
)


def series(terms, m, mode=EXACT):
    return TruncatedSeries({Word(w): c for w, c in terms.items()}, m, mode)


class TestWord:
    def test_scaled_degree_empty(self):
        assert word_scaled_degree(EMPTY_WORD) == 0

    def test_scaled_degree_no_zeros(self):
        assert word_scaled_degree(Word((1, 2))) == 2

    def test_scaled_degree_counts_zeros_twice(self):
        # 3 letters + 2 zero letters
        assert word_scaled_degree(Word((0, 1, 0))) == 5

    def test_equality_is_letterwise(self):
        assert Word((1, 2)) == Word((1, 2))
        assert Word((1, 2)) != Word((2, 1))

    def test_concatenation(self):
        assert Word((1,)) * Word((2, 0)) == Word((1, 2, 0))

    def test_canonical_order(self):
        ws = words_up_to(2, 2)
        assert ws[0] == EMPTY_WORD
        assert ws[1:3] == [Word((1,)), Word((2,))]
        # degree 2: v0 (length 1) sorts before the length-2 words
        assert ws[3] == Word((0,))


class TestMul:
    def test_distributes(self):
        one = TruncatedSeries.one(2)
        p = one + TruncatedSeries.letter(1, 2)
        q = one + TruncatedSeries.letter(2, 2)
        expected = series({(): 1, (1,): 1, (2,): 1, (1, 2): 1}, 2)
        assert mul(p, q) == expected

    def test_letter_square(self):
        v1 = TruncatedSeries.letter(1, 2)
        assert mul(v1, v1) == series({(1, 1): 1}, 2)

    def test_truncation_drops_heavy_words(self):
        # v0.v0 has scaled degree 4 > 3
        v0 = TruncatedSeries.letter(0, 3)
        assert mul(v0, v0).is_zero()

    def test_mismatched_truncation_rejected(self):
        with pytest.raises(fa.TruncationError):
            mul(TruncatedSeries.one(2), TruncatedSeries.one(3))

    def test_mismatched_mode_rejected(self):
        with pytest.raises(fa.ScalarModeError):
            mul(TruncatedSeries.one(2, EXACT), TruncatedSeries.one(2, FLOAT))

    def test_float_coefficients_rejected_in_exact_mode(self):
        with pytest.raises(fa.ScalarModeError):
            series({(1,): 0.5}, 2, EXACT)


class TestExpLog:
    def test_exp_zero(self):
        assert exp(TruncatedSeries.zero(3)) == TruncatedSeries.one(3)

    def test_exp_single_letter(self):
        got = exp(TruncatedSeries.letter(1, 3))
        expected = series(
            {(): 1, (1,): 1, (1, 1): Fraction(1, 2), (1, 1, 1): Fraction(1, 6)}, 3
        )
        assert got == expected

    def test_exp_rejects_constant_term(self):
        with pytest.raises(ValueError):
            exp(TruncatedSeries.one(3))

    def test_log_one(self):
        assert log(TruncatedSeries.one(3)).is_zero()

    def test_log_rejects_wrong_constant(self):
        with pytest.raises(ValueError):
            log(TruncatedSeries.zero(3))

    def test_log_exp_two_letters(self):
        p = TruncatedSeries.letter(1, 3) + TruncatedSeries.letter(2, 3)
        assert log(exp(p)) == p

    def test_exp_log_roundtrip(self):
        q = TruncatedSeries.one(3) + TruncatedSeries.letter(1, 3)
        assert exp(log(q)) == q


def small_series(m=4, d=2, mode=EXACT, zero_constant=True):
    """Hypothesis strategy: a series with small rational coefficients."""
    words = [w for w in words_up_to(m, d) if w.letters or not zero_constant]
    rationals = st.builds(
        Fraction, st.integers(min_value=-4, max_value=4), st.integers(min_value=1, max_value=3)
    )
    return st.lists(
        st.tuples(st.sampled_from(words), rationals), min_size=0, max_size=5
    ).map(lambda items: TruncatedSeries(
        {w: sum(c for ww, c in items if ww == w) for w, _ in items}, m, mode
    ))


@settings(max_examples=50, deadline=None)
@given(small_series())
def test_log_exp_identity(p):
    assert log(exp(p)) == p


@settings(max_examples=30, deadline=None)
@given(small_series(zero_constant=False), small_series(zero_constant=False),
       small_series(zero_constant=False))
def test_mul_associative_and_distributive(p, q, r):
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r


class TestProjection:
    def test_j0_keeps_constant(self):
        p = TruncatedSeries.one(2) + TruncatedSeries.letter(1, 2)
        assert project_jm(p, 0) == TruncatedSeries.one(2)

    def test_j2_drops_degree_3(self):
        p = series({(0,): 1, (1, 1): 1, (0, 1): 1}, 3)
        assert project_jm(p, 2) == series({(0,): 1, (1, 1): 1}, 3)

    def test_idempotent(self):
        p = series({(0,): 2, (1,): 3, (1, 2): 1}, 3)
        assert project_jm(project_jm(p, 2), 2) == project_jm(p, 2)

    def test_projection_above_truncation_rejected(self):
        with pytest.raises(fa.TruncationError):
            project_jm(TruncatedSeries.one(2), 3)


class TestRescale:
    def test_identity_at_one(self):
        p = series({(0,): 2, (1,): 3, (1, 2): 1}, 3)
        assert rescale_psi(p, 1) == p

    def test_v0_scales_linearly(self):
        # v0 has scaled degree 2, so the factor is s
        p = TruncatedSeries.letter(0, 2)
        assert rescale_psi(p, 4) == p.scale(4)

    def test_v1_scales_by_root(self):
        p = TruncatedSeries.letter(1, 2)
        assert rescale_psi(p, 4) == p.scale(2)
        q = TruncatedSeries.letter(1, 2, FLOAT)
        assert rescale_psi(q, 2.0).coefficient(Word((1,))) == pytest.approx(2 ** 0.5)

    def test_irrational_root_rejected_in_exact_mode(self):
        with pytest.raises(ValueError):
            rescale_psi(TruncatedSeries.letter(1, 2), 2)

    def test_composition_and_projection_commute(self):
        p = series({(0,): 1, (1,): 2, (1, 1): 3, (0, 1): 1}, 3)
        s, t = Fraction(4), Fraction(9, 4)
        assert rescale_psi(rescale_psi(p, s), t) == rescale_psi(p, s * t)
        assert project_jm(rescale_psi(p, s), 2) == rescale_psi(project_jm(p, 2), s)


class TestInner:
    def test_orthonormal_words(self):
        v1 = TruncatedSeries.letter(1, 2)
        v2 = TruncatedSeries.letter(2, 2)
        assert inner(v1, v1) == 1
        assert inner(v1, v2) == 0

    def test_weighted_pairing(self):
        p = series({(): 1, (1,): 2}, 2)
        q = series({(): 3, (1,): 1}, 2)
        assert inner(p, q) == 5

    def test_norm(self):
        p = series({(1,): 3, (2,): 4}, 2)
        assert norm2(p) == pytest.approx(5.0)


class TestBch:
    def test_right_identity(self):
        a = LieElement.letter(1, 3)
        zero = LieElement.zero(3)
        assert bch(a, zero) == a

    def test_degree_two_term(self):
        a = LieElement.letter(1, 2)
        b = LieElement.letter(2, 2)
        expected = a + b + bracket(a, b).scale(Fraction(1, 2))
        assert bch(a, b) == expected

    def test_hand_expansion_through_degree_three(self):
        # a + b + [a,b]/2 + [a,[a,b]]/12 + [b,[b,a]]/12
        m = 3
        a = LieElement.letter(1, m)
        b = LieElement.letter(2, m)
        expected = (
            a + b
            + bracket(a, b).scale(Fraction(1, 2))
            + bracket(a, bracket(a, b)).scale(Fraction(1, 12))
            + bracket(b, bracket(b, a)).scale(Fraction(1, 12))
        )
        assert bch(a, b) == expected

    def test_associativity_witness(self):
        m = 4
        z1 = LieElement.letter(1, m) + LieElement.letter(0, m).scale(Fraction(1, 2))
        z2 = LieElement.letter(2, m)
        z3 = bracket(LieElement.letter(1, m), LieElement.letter(2, m))
        left = bch(bch(z1, z2), z3)
        right = bch(z1, bch(z2, z3))
        assert left == right
        # both equal log of the triple product
        direct = log(exp(z1.series) * exp(z2.series) * exp(z3.series))
        assert left.series == direct


class TestRendering:
    def test_zero(self):
        assert str(TruncatedSeries.zero(2)) == "0"

    def test_terms_in_canonical_order(self):
        p = series({(1, 1): Fraction(1, 2), (): 1, (0,): 1}, 2)
        assert str(p) == "1 + (1) v0 + (1/2) v1.v1"
