import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from quasispec import (DensitySegment, NumericError, PieceMeasure, SolutionState,
                       SubshiftWord, SuspensionModel, WindowMeasure, build_omega,
                       discrete_cocycle, step_atom, step_interval, transfer_matrix)
from quasispec import propagator
from quasispec.propagator import Propagator, derivative_bound_constants

from conftest import comb_model, fibonacci_omega, periodic_omega


def ode_oracle(V, z, x0, x1, y0):
    """Independent integration of u'' = (V(x) - z) u."""
    sol = solve_ivp(lambda x, y: [y[1], (V(x) - z) * y[0]], (x0, x1), y0,
                    method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1]


def test_atom_step_jumps_derivative():
    assert step_atom(SolutionState(1.0, 0.0), 2.0) == SolutionState(1.0, 2.0)


def test_zero_mass_atom_is_identity():
    s = SolutionState(0.3, -1.2, 4.0)
    assert step_atom(s, 0.0) == s


def test_atom_step_at_node_does_nothing():
    assert step_atom(SolutionState(0.0, 1.0), 5.0) == SolutionState(0.0, 1.0)


def test_free_zero_energy_step_is_shear():
    t = 3.7
    s = step_interval(SolutionState(2.0, 0.5), 0.0, 0.0, t)
    assert (s.u, s.du) == pytest.approx((2.0 + 0.5 * t, 0.5), abs=1e-14)


def test_cosine_half_period():
    s = step_interval(SolutionState(1.0, 0.0), 1.0, 0.0, math.pi)
    assert (s.u, s.du) == pytest.approx((-1.0, 0.0), abs=1e-14)


def test_barrier_matches_cosh_and_ode_oracle():
    s = step_interval(SolutionState(1.0, 0.0), 0.0, 4.0, 1.0)
    ref = ode_oracle(lambda x: 4.0, 0.0, 0.0, 1.0, [1.0, 0.0])
    assert abs(s.u - math.cosh(2.0)) <= 1e-10 * math.cosh(2.0)
    assert abs(s.u - ref[0]) <= 1e-10 * abs(ref[0])
    assert abs(s.du - ref[1]) <= 1e-10 * abs(ref[1])


@pytest.mark.parametrize("z", [1e-9, -1e-9, 1e-6 + 1e-7j, 2.0 + 0.5j])
def test_constant_step_near_and_off_axis(z):
    V = 1.0
    s = step_interval(SolutionState(1.0, 0.3), z + V, V, 2.0)
    k = np.sqrt(complex(z))
    c = np.cos(2 * k)
    sn = np.sin(2 * k) / k
    assert complex(s.u) == pytest.approx(c + 0.3 * sn, rel=1e-10)


def test_sampled_profile_matches_ode_oracle(monkeypatch):
    # drop the wavelength floor so the requested step counts are used as given
    monkeypatch.setattr(propagator, "PROFILE_STEPS_PER_WAVE", 0.0)
    seg = DensitySegment(0.0, 2.0, samples=(1.0, 3.0, -2.0, 0.5))
    grid = np.linspace(0.0, 2.0, 4)
    V = lambda x: np.interp(x, grid, seg.samples)
    for z in (-1.0, 2.0, 10.0):
        # oracle restarts at the knots where the interpolant has kinks
        ref = np.array([1.0, 0.0])
        for lo, hi in zip(grid[:-1], grid[1:]):
            ref = ode_oracle(V, z, lo, hi, ref)
        errs = []
        for spu in (16, 32, 64):
            s = step_interval(SolutionState(1.0, 0.0), z, seg, 2.0, steps_per_unit=spu)
            errs.append(abs(s.u - ref[0]) / max(1, abs(ref[0])))
        assert errs[0] <= 1e-5
        # fourth order: halving the step divides the error by about 16
        assert errs[0] / errs[1] > 10 and errs[1] / errs[2] > 10


def test_step_interval_rejects_nonfinite():
    with pytest.raises(NumericError):
        step_interval(SolutionState(1.0, 0.0), float("nan"), 0.0, 1.0)


def test_zero_measure_transfer_is_shear():
    m = WindowMeasure.from_pieces([PieceMeasure(5.0)])
    t = transfer_matrix(m, 0.0, 0.0, 3.0)
    assert np.allclose(t.matrix, [[1, 3], [0, 1]], atol=1e-14)
    assert t.log_scale == 0


def test_atom_transfer_is_lower_triangular_in_the_limit():
    m = WindowMeasure.from_pieces([PieceMeasure(1.0), PieceMeasure.delta(1.0, 0.0, 2.5)],
                                  start=-1.0)
    for eps in (1e-3, 1e-6):
        t = transfer_matrix(m, 1.0, -eps, eps).matrix
        assert np.allclose(t, [[1, 0], [2.5, 1]], atol=10 * eps)


def test_endpoint_atoms_belong_to_the_right_end():
    m = WindowMeasure.from_pieces([PieceMeasure(1.0), PieceMeasure.delta(1.0, 0.0, 2.0)])
    # atom sits at x = 1; (0, 1] includes it, (1, 2] does not
    left = transfer_matrix(m, 0.0, 0.0, 1.0).matrix
    right = transfer_matrix(m, 0.0, 1.0, 2.0).matrix
    assert np.allclose(left, [[1, 1], [2, 3]])
    assert np.allclose(right, [[1, 1], [0, 1]])


def test_kronig_penney_trace_at_pi_squared():
    omega = periodic_omega(comb_model(), 10, left=2)
    for z in (math.pi ** 2, complex(math.pi ** 2)):
        t = transfer_matrix(omega, z, 0.0, 1.0)
        assert complex(t.trace()).real == pytest.approx(-2.0, abs=1e-12)


def test_kronig_penney_trace_matches_dispersion(rng):
    omega = periodic_omega(comb_model(), 10, left=2)
    E = rng.uniform(0.1, 40, 50)
    tr = transfer_matrix(omega, E, 0.3, 1.3).trace()
    k = np.sqrt(E)
    assert np.allclose(tr, 2 * np.cos(k) + np.sin(k) / k, rtol=0, atol=1e-12)


def test_real_energies_give_real_matrices():
    omega = periodic_omega(comb_model(), 20, left=2)
    t = transfer_matrix(omega, np.array([1.0, 2.0]), 0.0, 10.0)
    assert not np.iscomplexobj(t.entries)


def test_backward_transfer_is_inverse():
    omega = periodic_omega(comb_model(), 20, left=10)
    fwd = transfer_matrix(omega, 3.0, -2.5, 4.2).matrix
    back = transfer_matrix(omega, 3.0, 4.2, -2.5).matrix
    assert np.allclose(fwd @ back, np.eye(2), atol=1e-10)


def test_window_violation():
    from quasispec import WindowError
    omega = periodic_omega(comb_model(), 5, left=0)
    with pytest.raises(WindowError):
        transfer_matrix(omega, 1.0, 0.0, 6.0)


def test_determinant_after_ten_thousand_factors(fib_model):
    omega, _ = fibonacci_omega(fib_model, 12000)
    E = np.array([-3.0, 0.5, 5.0, 17.4, 2.0 + 0.1j])
    t = Propagator(omega, E).transfer(0.0, 1e4)
    assert np.all(t.det_error() <= 1e-6)
    assert np.all(np.isfinite(t.log_scale)) and t.log_scale.max() > 100


def test_cocycle_identity(fib_model, rng):
    omega, _ = fibonacci_omega(fib_model, 400)
    for _ in range(10):
        s, t = rng.uniform(0, 100, 2)
        E = rng.uniform(-2, 20, 3)
        p = Propagator(omega, E)
        whole = p.transfer(0.0, s + t)
        split = p.transfer(s, s + t) @ p.transfer(0.0, s)
        assert np.all(whole.residual(split) <= 1e-8)


def test_locality_outside_interval_is_bit_exact():
    pieces = [PieceMeasure.delta(1.0, 0.5, 1.0)] * 10
    m1 = WindowMeasure.from_pieces(pieces)
    m2 = WindowMeasure.from_pieces(pieces[:3] + [PieceMeasure.constant(1.0, 7.0)] * 3 + pieces[6:])
    for E in (0.5, 3.0, -1.0):
        a = transfer_matrix(m1, E, 6.0, 9.5)
        b = transfer_matrix(m2, E, 6.0, 9.5)
        assert np.array_equal(a.entries, b.entries) and a.log_scale == b.log_scale


def test_smeared_atom_converges_first_order():
    E = 2.0
    atom = WindowMeasure.from_pieces([PieceMeasure(0.5), PieceMeasure.delta(1.5, 0.0, 1.0)])
    ref = transfer_matrix(atom, E, 0.0, 2.0).matrix
    errs = []
    epss = [1e-2, 1e-3, 1e-4]
    for eps in epss:
        smeared = WindowMeasure.from_pieces([PieceMeasure(0.5), PieceMeasure.constant(eps, 1 / eps),
                                             PieceMeasure(1.5 - eps)])
        errs.append(np.linalg.norm(transfer_matrix(smeared, E, 0.0, 2.0).matrix - ref, 2))
    orders = np.diff(np.log(errs)) / np.diff(np.log(epss))
    assert np.all(orders >= 0.9)


def test_discrete_cocycle_identity_and_one_symbol(fib_model):
    w = SubshiftWord("abaababaabaab")
    I = discrete_cocycle(fib_model, w, 3.0, 0)
    assert np.allclose(I.matrix, np.eye(2))
    one = discrete_cocycle(fib_model, w, 3.0, 1).matrix
    piece = transfer_matrix(build_omega(fib_model, "a"), 3.0, 0.0, 1.0).matrix
    assert np.allclose(one, piece, atol=1e-15)


def test_discrete_cocycle_factorises(fib_model):
    w = SubshiftWord("abaababaabaababaababa")
    E = 2.7
    for m_, n in [(3, 5), (7, 2), (4, 9)]:
        whole = discrete_cocycle(fib_model, w, E, m_ + n)
        first = discrete_cocycle(fib_model, w, E, n)
        second = discrete_cocycle(fib_model, w.shifted(n), E, m_)
        assert whole.residual(second @ first) <= 1e-9


def test_complex_and_real_paths_agree(fib_model):
    omega, _ = fibonacci_omega(fib_model, 2000)
    E = np.array([-1.0, 0.7, 3.3, 12.0])
    real = Propagator(omega, E).transfer(0.0, 1500.0)
    cplx = Propagator(omega, E.astype(complex)).transfer(0.0, 1500.0)
    assert np.allclose(real.log_norm(), cplx.log_norm(), rtol=0, atol=1e-10)


def test_derivative_bound_is_stable_across_intervals(fib_model):
    omega, _ = fibonacci_omega(fib_model, 200)
    c = derivative_bound_constants(omega, 3.0, (1.0, 0.0), 0.0, 60.0)
    assert np.all(np.isfinite(c))
    assert c.max() <= 5 * np.median(c)


def test_csv_row_layout():
    omega = periodic_omega(comb_model(), 4, left=0)
    row = transfer_matrix(omega, 1.0, 0.0, 2.0).csv_row(2.0)
    assert len(row) == 6 and row[0] == 2.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=6),
       st.lists(st.floats(0.05, 3.0), min_size=6, max_size=6),
       st.floats(-30, 60))
def test_determinant_is_one_for_random_potentials(values, lengths, E):
    pieces = [PieceMeasure.constant(l, v) for v, l in zip(values, lengths)]
    m = WindowMeasure.from_pieces(pieces)
    t = transfer_matrix(m, E, 0.0, m.window[1])
    assert t.det_error() <= 1e-9


def test_profile_keeps_unit_determinant_at_high_energy():
    seg = DensitySegment(0.0, 50.0, samples=tuple(np.sin(np.arange(51.0))))
    m = WindowMeasure.from_pieces([PieceMeasure(50.0, (), (seg,))])
    t = transfer_matrix(m, np.array([30.0, 200.0, -3.0, 5.0 + 1j]), 0.0, 50.0)
    assert np.all(t.det_error() <= 1e-12)


def test_flat_profile_is_propagated_exactly():
    flat = WindowMeasure.from_pieces([PieceMeasure(3.0, (), (DensitySegment(0.0, 3.0, samples=(2.0, 2.0)),))])
    const = WindowMeasure.from_pieces([PieceMeasure.constant(3.0, 2.0)])
    for E in (-1.0, 7.0, 40.0):
        a = transfer_matrix(flat, E, 0.0, 3.0).matrix
        b = transfer_matrix(const, E, 0.0, 3.0).matrix
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
