from fractions import Fraction

import pytest

from quasispec import (PieceMeasure, SubshiftWord, SuspensionModel, WindowError,
                       boundary_times, build_omega, concatenate, hull_grid, hull_sample,
                       substitution_prefix, Substitution, two_sided)
from quasispec.suspension import check_aperiodicity, restriction_matches


def test_boundary_times_unit_lengths():
    m = SuspensionModel.from_pieces({"a": PieceMeasure(1.0)})
    assert boundary_times(m, "aaaaa") == [0, 1, 2, 3, 4, 5]


def test_boundary_times_fibonacci_lengths():
    m = SuspensionModel.from_pieces({"a": PieceMeasure(1.0), "b": PieceMeasure(2.0)})
    assert boundary_times(m, "abaab") == [0, 1, 3, 4, 5, 7]


def test_boundary_times_single_symbol():
    m = SuspensionModel.from_pieces({"a": PieceMeasure(0.7)})
    assert boundary_times(m, "a") == [0, 0.7]


def test_boundary_times_unknown_symbol():
    m = SuspensionModel.from_pieces({"a": PieceMeasure(1.0)})
    with pytest.raises(ValueError):
        boundary_times(m, "ab")


def test_build_single_atom():
    m = SuspensionModel.from_pieces({"a": PieceMeasure.delta(1.0, 0.5, 1.0)})
    assert build_omega(m, "a").atoms() == [(0.5, 1.0)]


def test_build_two_densities():
    m = SuspensionModel.from_pieces({"a": PieceMeasure.constant(1.0, 4.0),
                                     "b": PieceMeasure.constant(1.0, 0.0)})
    segs = build_omega(m, "ab").density_segments()
    assert [(s.lo, s.hi, s.value) for s in segs] == [(0.0, 1.0, 4.0), (1.0, 2.0, 0.0)]


def mixed_model():
    return SuspensionModel.from_pieces({
        "a": PieceMeasure(1.0, ((0.25, 1.5),), ()),
        "b": PieceMeasure(0.75, (), (PieceMeasure.constant(0.75, 2.0).densities[0],)),
    })


def test_restriction_is_translate_of_the_piece():
    model = mixed_model()
    w = two_sided(substitution_prefix(Substitution.fibonacci(), "a", 200), left=20)
    omega = build_omega(model, w)
    times = boundary_times(model, w)
    for n in range(0, 30):
        assert restriction_matches(omega, times[n], model.piece(w.right[n]))


def test_build_agrees_with_concatenate():
    model = mixed_model()
    word = "abaababa"
    omega = build_omega(model, word)
    cat = concatenate([model.piece(c) for c in word])
    assert omega.atoms() == list(cat.atoms)


def test_left_half_is_laid_at_negative_times():
    model = mixed_model()
    omega = build_omega(model, SubshiftWord("ba" + "ab", 2))
    # x(-1) = a occupies [-1, 0], x(-2) = b occupies [-1.75, -1]
    assert omega.window == (-1.75, 1.75)
    assert omega.atoms()[0] == pytest.approx((-0.75, 1.5))


def test_locality_of_construction():
    model = mixed_model()
    short = build_omega(model, str(substitution_prefix(Substitution.fibonacci(), "a", 50)))
    long = build_omega(model, str(substitution_prefix(Substitution.fibonacci(), "a", 500)))
    end = short.window[1]
    assert short.atoms() == [a for a in long.atoms() if a[0] <= end]


def test_unif_norm_bound_holds():
    model = mixed_model()
    omega = build_omega(model, str(substitution_prefix(Substitution.fibonacci(), "a", 500)))
    assert omega.unif_norm() <= model.unif_bound()


def test_atomless_flag_propagates():
    model = SuspensionModel.from_pieces({"a": PieceMeasure.constant(1.0, 0.0),
                                         "b": PieceMeasure.constant(1.0, 4.0)})
    assert model.atomless
    assert not build_omega(model, "abaab").has_atoms
    assert not mixed_model().atomless


def test_piece_length_mismatch_rejected():
    from quasispec.measures import DecompositionAlphabet
    with pytest.raises(ValueError):
        SuspensionModel(DecompositionAlphabet({"a": PieceMeasure(1.0)}), {"a": 2.0})


def test_hull_sample_at_zero_is_the_suspension():
    model = mixed_model()
    w = SubshiftWord("abaab")
    assert hull_sample(model, w, 0).measure.atoms() == build_omega(model, w).atoms()


def test_hull_sample_at_first_boundary_starts_with_next_piece():
    model = mixed_model()
    w = SubshiftWord("abaab")
    s1 = boundary_times(model, w)[1]
    h = hull_sample(model, w, s1)
    assert restriction_matches(h.measure, 0.0, model.piece("b"))


def test_hull_sample_composes_with_translate():
    model = mixed_model()
    w = SubshiftWord("abaababa")
    t1, t2 = Fraction(1, 3), Fraction(5, 7)
    a = hull_sample(model, w, t1).measure.translate(t2)
    b = hull_sample(model, w, t1 + t2).measure
    assert a.atoms() == b.atoms() and a.window == b.window


def test_hull_sample_coverage_error():
    with pytest.raises(WindowError):
        hull_sample(mixed_model(), SubshiftWord("abaab"), 0.5, need=(0.0, 10.0))


def test_hull_grid_size_and_labels():
    model = mixed_model()
    w = two_sided(substitution_prefix(Substitution.fibonacci(), "a", 100), left=10)
    samples = hull_grid(model, w, t_steps=8, word_shifts=range(3), need=(0.0, 20.0))
    assert len(samples) == 24
    assert len({s.label for s in samples}) == 24


def test_aperiodicity_needs_distinct_pieces():
    same = SuspensionModel.from_pieces({"a": PieceMeasure.constant(1.0, 1.0),
                                        "b": PieceMeasure.constant(1.0, 1.0)})
    w = substitution_prefix(Substitution.fibonacci(), "a", 5000)
    assert check_aperiodicity(same, w)["symbolic_aperiodic"]
    assert not check_aperiodicity(same, w)["aperiodic"]
    assert check_aperiodicity(mixed_model(), w)["aperiodic"]
