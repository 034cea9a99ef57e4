from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasispec import (DecompositionAlphabet, DensitySegment, PieceMeasure, WindowError,
                       WindowMeasure, check_sfdp, concatenate, reflect, total_variation,
                       translate)


def window(*pieces, start=0.0):
    return WindowMeasure.from_pieces(list(pieces), start)


def test_total_variation_of_empty_measure_is_zero():
    m = window(PieceMeasure(2.0))
    assert total_variation(m, 0.3, 1.7) == 0.0


def test_total_variation_counts_absolute_atom_mass():
    m = window(PieceMeasure.delta(1.0, 0.5, -2.0))
    assert total_variation(m, 0.0, 1.0) == 2.0


def test_total_variation_of_density_matches_riemann_sum():
    m = window(PieceMeasure.constant(2.0, 3.0))
    xs = np.arange(0.5, 1.5, 1e-4) + 0.5e-4
    riemann = float(np.sum(np.full_like(xs, 3.0)) * 1e-4)
    assert total_variation(m, 0.5, 1.5) == pytest.approx(3.0, rel=1e-14)
    assert total_variation(m, 0.5, 1.5) == pytest.approx(riemann, rel=1e-9)


def test_sampled_profile_variation_handles_sign_change():
    seg = DensitySegment(0.0, 2.0, samples=(-1.0, 1.0))
    # |x - 1| on [0, 2] integrates to 1
    assert seg.abs_integral(0.0, 2.0) == pytest.approx(1.0, rel=1e-14)


def test_total_variation_outside_window_raises():
    m = window(PieceMeasure.constant(1.0, 1.0))
    with pytest.raises(WindowError):
        total_variation(m, -0.5, 0.5)


def test_total_variation_is_additive(rng):
    pieces = [PieceMeasure(1.0, ((0.25, -1.5), (1.0, 0.5)), (DensitySegment(0.0, 0.6, 2.0),)),
              PieceMeasure(0.5, (), (DensitySegment(0.0, 0.5, samples=(1.0, -3.0, 2.0)),))]
    m = window(*pieces * 4)
    lo, hi = m.window
    for _ in range(20):
        a, c = sorted(rng.uniform(lo, hi, 2))
        b = rng.uniform(a, c)
        # the closed pieces overlap only in the point b; remove any atom there
        at_b = sum(abs(x) for p, x in m.atoms() if p == b)
        whole = total_variation(m, a, c)
        assert total_variation(m, a, b) + total_variation(m, b, c) - at_b == pytest.approx(
            whole, rel=1e-12, abs=1e-12)


def test_concatenate_single_piece_is_identity():
    p = PieceMeasure(1.5, ((0.2, 1.0),), (DensitySegment(0.5, 1.5, 2.0),))
    assert concatenate([p]) == p


def test_concatenate_offsets_atoms():
    a = PieceMeasure.delta(1.0, 0.0, 1.0)
    b = PieceMeasure.delta(1.0, 0.0, 2.0)
    ab = concatenate([a, b])
    assert ab.length == 2.0
    assert ab.atoms == ((0.0, 1.0), (1.0, 2.0))


def test_concatenate_empty_raises():
    with pytest.raises(ValueError):
        concatenate([])


dyadic = st.integers(1, 64).map(lambda k: k / 16)


@st.composite
def pieces(draw):
    length = draw(dyadic)
    n_atoms = draw(st.integers(0, 3))
    pos = sorted({draw(st.integers(0, 16)) * length / 16 for _ in range(n_atoms)})
    atoms = tuple((p, draw(st.integers(-8, 8)) / 4) for p in pos)
    dens = ()
    if draw(st.booleans()):
        dens = (DensitySegment(0.0, length, draw(st.integers(-8, 8)) / 2),)
    return PieceMeasure(length, atoms, dens)


@settings(max_examples=60, deadline=None)
@given(pieces(), pieces(), pieces())
def test_concatenation_is_associative_bit_exact(a, b, c):
    left = concatenate([concatenate([a, b]), c])
    right = concatenate([a, concatenate([b, c])])
    assert left.length == right.length == a.length + b.length + c.length
    assert left.atoms == right.atoms
    assert [(s.lo, s.hi, s.value) for s in left.densities] == \
           [(s.lo, s.hi, s.value) for s in right.densities]


def test_translate_by_zero_is_identity():
    m = window(PieceMeasure.delta(2.0, 1.0, 1.0))
    assert translate(m, 0).atoms() == m.atoms()
    assert translate(m, 0).window == m.window


def test_translate_moves_atom_to_origin():
    m = window(PieceMeasure.delta(4.0, 3.0, 1.0))
    t = translate(m, 3)
    assert t.atoms() == [(0.0, 1.0)]
    assert t.window == (-3.0, 1.0)


def test_translate_round_trip_is_bit_exact():
    m = window(PieceMeasure(1.0, ((0.1, 1.0),), (DensitySegment(0.3, 0.9, 2.0),)), start=-0.7)
    back = translate(translate(m, 1.5), -1.5)
    assert back.atoms() == m.atoms()
    assert back.density_segments() == m.density_segments()


@settings(max_examples=50, deadline=None)
@given(st.fractions(-10, 10, max_denominator=1000), st.fractions(-10, 10, max_denominator=1000))
def test_translation_is_a_group_action_on_rational_shifts(s, t):
    m = window(PieceMeasure.delta(1.0, 0.3, 1.0), PieceMeasure.constant(2.0, 1.0), start=-20)
    assert translate(translate(m, s), t).atoms() == translate(m, s + t).atoms()
    assert translate(translate(m, s), t).window == translate(m, s + t).window


def test_translation_preserves_variation_of_shifted_intervals(rng):
    m = window(PieceMeasure(1.0, ((0.3, -1.0),), (DensitySegment(0.0, 0.5, 2.0),)),
               PieceMeasure.constant(1.0, 0.7), start=-1.0)
    t = Fraction(3, 7)
    mt = translate(m, t)
    lo, hi = mt.window
    for _ in range(10):
        a, b = sorted(rng.uniform(lo, hi, 2))
        assert total_variation(mt, a, b) == pytest.approx(
            total_variation(m, a + float(t), b + float(t)), rel=1e-12, abs=1e-14)


def test_reflect_symmetric_measure_is_itself():
    m = window(PieceMeasure.delta(2.0, 1.0, 1.0), start=-1.0)
    r = reflect(m)
    assert r.atoms() == m.atoms() == [(0.0, 1.0)]
    assert r.window == m.window == (-1.0, 1.0)


def test_reflect_moves_atom_to_negative_side():
    m = window(PieceMeasure.delta(3.0, 2.0, 1.0))
    assert reflect(m).atoms() == [(-2.0, 1.0)]
    assert reflect(m).window == (-3.0, 0.0)


def test_reflect_twice_is_identity(rng):
    ps = [PieceMeasure(1.0, ((0.2, rng.normal()),), (DensitySegment(0.4, 1.0, rng.normal()),))
          for _ in range(5)]
    m = window(*ps, start=-2.3)
    rr = reflect(reflect(m))
    assert rr.atoms() == m.atoms()
    assert rr.density_segments() == m.density_segments()
    r = reflect(m)
    assert total_variation(r, -1.5, 0.5) == pytest.approx(total_variation(m, -0.5, 1.5), rel=1e-12)


def test_unif_norm_is_within_bound():
    m = window(PieceMeasure.delta(0.5, 0.25, 3.0), PieceMeasure.constant(1.5, 1.0))
    # (0.25-, 1.25] holds the atom and 0.75 of density
    assert m.unif_norm() == pytest.approx(3.75)
    assert m.unif_norm() <= m.unif_norm_bound


def test_sfdp_delta_and_density_is_satisfied():
    alpha = DecompositionAlphabet({"a": PieceMeasure.delta(1.0, 0.5, 1.0),
                                   "b": PieceMeasure.constant(1.0, 2.0)})
    assert check_sfdp(alpha).satisfied


def test_sfdp_two_lebesgue_multiples_is_violated():
    alpha = DecompositionAlphabet({"a": PieceMeasure.constant(1.0, 2.0),
                                   "b": PieceMeasure.constant(2.0, 3.0)})
    v = check_sfdp(alpha)
    assert not v.satisfied and v.witness == ("a", "b")


def test_sfdp_singleton_alphabet_is_satisfied():
    assert check_sfdp(DecompositionAlphabet({"a": PieceMeasure.constant(1.0, 2.0)}))


def test_lebesgue_flags_must_match_content():
    with pytest.raises(ValueError):
        DecompositionAlphabet({"a": PieceMeasure.delta(1.0, 0.5, 1.0)}, {"a": True})


@pytest.mark.parametrize("bad", [
    dict(length=-1.0),
    dict(length=1.0, atoms=((1.5, 1.0),)),
    dict(length=1.0, atoms=((0.5, 1.0), (0.2, 1.0))),
    dict(length=1.0, densities=(DensitySegment(0.0, 0.6, 1.0), DensitySegment(0.5, 1.0, 1.0))),
])
def test_invalid_pieces_are_rejected(bad):
    with pytest.raises(ValueError):
        PieceMeasure(**bad)
