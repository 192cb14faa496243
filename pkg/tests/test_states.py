import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epryoung.errors import InvalidParameterError, PreconditionError
from epryoung.modular import fringe_function
from epryoung.specfun import GridSpec, simpson_weights, sinc
from epryoung.states import (
    Displacement,
    EprSource,
    GratingSpec,
    SetupWarning,
    build_mme_state,
    build_separable_state,
    build_suboptimal_state,
    dispersion_factors,
    envelope_amplitude,
    envelope_grid,
    envelope_points,
    far_field_map,
    far_field_valid,
    intra_slit_density,
    interference_factor,
    max_propagation_time,
    momentum_amplitude,
    momentum_axis,
    position_density,
    screen_coordinate,
    validate_displaced,
    validate_setup,
)


def quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SetupWarning)
        return fn(*args, **kw)


def test_grating_indices_centered():
    for n in range(1, 9):
        idx = GratingSpec(n).slit_indices
        assert idx.sum() == 0
        assert np.all(np.diff(idx) == 1)


@pytest.mark.parametrize("kw", [dict(n_slits=0), dict(n_slits=2, a=1.0), dict(n_slits=2, d=-1.0), dict(n_slits=2.5)])
def test_grating_validation(kw):
    with pytest.raises(InvalidParameterError):
        GratingSpec(**kw)


def test_source_warns_outside_epr_regime():
    with pytest.warns(SetupWarning):
        EprSource(2.0, 1.0)


def test_dispersion_factors():
    src = EprSource(0.3, 5.0)
    assert dispersion_factors(src, 0.0) == (1 + 0j, 1 + 0j)
    _, xi_rel = dispersion_factors(src, 0.09)
    assert xi_rel == pytest.approx(1 + 1j)
    assert abs(xi_rel) == pytest.approx(math.sqrt(2))


def test_cm_dispersion_small_up_to_tmax():
    src = EprSource(0.05, 6.0)
    xi_cm, _ = dispersion_factors(src, max_propagation_time(src))
    assert abs(xi_cm) <= math.sqrt(1 + (0.05 / (2 * 6.0)) ** 4) + 1e-15


def test_max_propagation_time():
    assert max_propagation_time(EprSource(1.0, 2.0)) == 1.0
    assert max_propagation_time(EprSource(2.0, 5.0)) == 4.0
    assert max_propagation_time(EprSource(0.05, 5.0)) < 0.01


def test_neighbor_suppression_at_ratio_five():
    diag = validate_setup(EprSource(0.2, 100.0), GratingSpec(2))
    assert diag.slit_correlation_ratio == pytest.approx(5.0)
    assert diag.neighbor_suppression == pytest.approx(math.exp(-6.25))
    assert diag.neighbor_suppression < 2e-3


def test_margin_decrease_at_unit_ratio():
    diag = validate_setup(EprSource(0.05, 3.0), GratingSpec(3))
    assert diag.illumination_ratio == pytest.approx(1.0)
    assert 0.06 <= diag.margin_decrease <= 0.07
    assert diag.margin_decrease == pytest.approx(1 - math.exp(-1 / 16))
    assert diag.conditions_met


def test_slit_condition_warning():
    diag = validate_setup(EprSource(1.0, 10.0), GratingSpec(2))
    assert not diag.conditions_met
    assert any("slit correlation" in w for w in diag.warnings)


def test_displaced_identity():
    dd = validate_displaced(EprSource(0.05, 6.0), GratingSpec(4), Displacement())
    assert dd.effective_order == 4 and dd.conditions_met
    assert dd.fringe_phase == 0.0


def test_displaced_relative_order():
    dd = validate_displaced(EprSource(0.05, 30.0), GratingSpec(10), Displacement(x_rel0=1.0))
    assert dd.n_rel_T == 1 and dd.effective_order == 9
    assert dd.r2_ok and dd.r3_ok


def test_displaced_blocked_pair():
    dd = validate_displaced(EprSource(0.05, 6.0), GratingSpec(2, a=0.1), Displacement(x_rel0=0.06))
    assert not dd.r3_ok
    assert any("blocked" in w for w in dd.warnings)


def test_displaced_classical_motion():
    src = EprSource(0.05, 6.0, mass=2.0, t_grating=0.001)
    dd = validate_displaced(src, GratingSpec(2), Displacement(x_cm0=0.1, p_cm0=4.0, p_rel0=3.0))
    assert dd.x_cm_T == pytest.approx(0.1 + 4.0 * 0.001 / 4.0)
    assert dd.x_rel_T == pytest.approx(2 * 3.0 * 0.001 / 2.0)


def test_mme_state_coefficients():
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0))
    np.testing.assert_allclose(s.coeffs, np.eye(2) / math.sqrt(2))
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_mme_warns_when_conditions_fail():
    with pytest.warns(SetupWarning):
        build_mme_state(GratingSpec(2), EprSource(0.5, 6.0))


def test_suboptimal_limit_is_mme():
    for n in (2, 3, 5):
        g = GratingSpec(n)
        sub = build_suboptimal_state(g, EprSource(0.01, 100.0 * n))
        mme = build_mme_state(g, EprSource(0.01, 100.0 * n))
        assert np.max(np.abs(sub.coeffs - mme.coeffs)) < 1e-3


def test_suboptimal_weights_direct_formula():
    s = build_suboptimal_state(GratingSpec(2), EprSource(1.0, 3.0))
    # diagonal pairs: (n + n') d = +-1; off-diagonal: (n - n') d = +-1
    ratio = s.coeffs[0, 1] / s.coeffs[0, 0]
    assert ratio == pytest.approx(math.exp(-1 / 4 + 1 / 144), rel=1e-14)
    np.testing.assert_allclose(s.coeffs, s.coeffs.T)
    assert np.sum(s.coeffs**2) == pytest.approx(1.0, abs=1e-12)


def test_suboptimal_refuses_long_flight():
    src = EprSource(0.1, 5.0, t_grating=0.02)
    with pytest.raises(PreconditionError, match="T_max"):
        build_suboptimal_state(GratingSpec(3), src)


def test_separable_state():
    s = build_separable_state(GratingSpec(3))
    assert np.allclose(s.weights, 1 / 9)
    assert not s.correlated


def test_intra_slit_density_normalized():
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0, t_grating=0.00125))
    g = GridSpec(-0.05, 0.05, 401)
    x = g.points()
    w = simpson_weights(g)
    val = w @ intra_slit_density(s, x[:, None], x[None, :]) @ w
    assert val == pytest.approx(1.0, abs=1e-6)


def test_position_density_disjoint_terms():
    s = build_suboptimal_state(GratingSpec(3), EprSource(0.4, 4.0))
    g = GridSpec(-0.05, 0.05, 201)
    x = g.points()
    w = simpson_weights(g)
    idx = s.grating.slit_indices
    total = 0.0
    for i, n in enumerate(idx):
        for j, m in enumerate(idx):
            block = w @ position_density(s, n + x[:, None], m + x[None, :]) @ w
            assert block == pytest.approx(s.weights[i, j], rel=1e-6)
            total += block
    assert total == pytest.approx(1.0, abs=1e-6)
    assert position_density(s, 0.3, 0.0) == 0.0


def _envelope_oracle(state, p1, p2, n=801):
    # direct 2-d Fourier transform of the intra-slit wavefunction by Simpson
    a = state.grating.a
    g = GridSpec(-a / 2, a / 2, n)
    x = g.points()
    w = simpson_weights(g)
    psi = np.exp(-((x[:, None] - x[None, :]) ** 2) / (4 * state.sigma_rel_eff**2 * state.xi_rel))
    norm = w @ np.abs(psi) ** 2 @ w
    e1 = w * np.exp(-1j * p1 * x)
    e2 = w * np.exp(-1j * p2 * x)
    return (e1 @ psi @ e2) / (2 * math.pi * math.sqrt(norm))


@pytest.mark.parametrize("p1,p2", [(0.0, 0.0), (3.0, -1.0), (25.0, 40.0), (-60.0, 10.0)])
def test_envelope_matches_direct_fourier_transform(p1, p2):
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0, t_grating=0.00125))
    ref = _envelope_oracle(s, p1, p2)
    assert envelope_amplitude(s, p1, p2) == pytest.approx(ref, rel=1e-6, abs=1e-9)
    assert envelope_points(s, p1, p2) == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_envelope_quadrature_converged():
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0, t_grating=0.00125))
    p1 = np.array([0.0, 5.0, -30.0, 70.0])
    p2 = np.array([1.0, -12.0, 20.0, 50.0])
    a = envelope_amplitude(s, p1, p2)
    b = envelope_amplitude(s, p1, p2, n_points=4001)
    assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))


def test_envelope_uncorrelated_limit():
    s = build_separable_state(GratingSpec(2, a=0.2))
    p1, p2 = 7.0, -3.0
    expected = 0.2 * sinc(p1 * 0.1) * sinc(p2 * 0.1) / (2 * math.pi)
    assert envelope_amplitude(s, p1, p2) == pytest.approx(expected, rel=1e-14)
    assert envelope_points(s, p1, p2) == pytest.approx(expected, rel=1e-10)


def test_envelope_grid_matches_points():
    s = build_mme_state(GratingSpec(2), EprSource(0.1, 6.0))
    ax = np.linspace(-40, 40, 17)
    grid = envelope_grid(s, ax)
    pts = envelope_points(s, ax[:, None], ax[None, :])
    np.testing.assert_allclose(grid, pts, rtol=1e-12, atol=1e-15)


def test_envelope_parity_and_slow_variation():
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0))
    p = np.array([0.0, 2.0, 13.0, -40.0])
    q = np.array([0.0, 5.0, -2.0, 7.0])
    np.testing.assert_allclose(envelope_amplitude(s, p, q), envelope_amplitude(s, -p, -q), rtol=1e-12)
    e0 = abs(envelope_amplitude(s, 0.0, 0.0))
    e1 = abs(envelope_amplitude(s, math.pi, math.pi))
    assert abs(e1 - e0) / e0 < 0.3


@pytest.mark.parametrize("n", [2, 3, 5])
def test_mme_factorization(n):
    s = quiet(build_mme_state, GratingSpec(n), EprSource(0.05, 3.0 * n, t_grating=0.001))
    rng = np.random.default_rng(n)
    p1, p2 = rng.uniform(-50, 50, (2, 40))
    lhs = np.abs(momentum_amplitude(s, p1, p2)) ** 2
    rhs = np.abs(envelope_amplitude(s, p1, p2)) ** 2 * fringe_function(n, (p1 + p2) / (2 * math.pi))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-14)


def test_phase_sum_at_origin():
    s = build_suboptimal_state(GratingSpec(3), EprSource(0.3, 2.0))
    assert interference_factor(s, 0.0, 0.0) == pytest.approx(s.coeffs.sum())


@given(st.floats(-80, 80), st.floats(-80, 80))
@settings(max_examples=30, deadline=None)
def test_amplitude_exchange_symmetry(p1, p2):
    s = build_suboptimal_state(GratingSpec(3), EprSource(0.2, 4.0))
    a = momentum_amplitude(s, p1, p2, fast=True)
    b = momentum_amplitude(s, p2, p1, fast=True)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-14)


def test_phase_shifts_pattern():
    s = build_mme_state(GratingSpec(2), EprSource(0.05, 6.0))
    p = np.linspace(-3, 3, 7)
    shifted = np.abs(interference_factor(s, p, 0.0 * p, phase=1.0)) ** 2
    expected = fringe_function(2, p / (2 * math.pi) + 1.0 / (2 * math.pi))
    np.testing.assert_allclose(shifted, expected, rtol=1e-12)


def test_momentum_axis_cells():
    axis, step, n = momentum_axis(2 * math.pi, 64, 24)
    assert n == 25 and axis.size == 64 * 25
    assert step == pytest.approx(2 * math.pi / 64)
    assert axis[0] - step / 2 == pytest.approx(-12.5 * 2 * math.pi)
    np.testing.assert_allclose(axis, -axis[::-1], atol=1e-12)


def test_far_field_map():
    assert far_field_map(0.0, 1.0, 10.0) == 0.0
    assert screen_coordinate(far_field_map(3.0, 2.0, 7.0), 2.0, 7.0) == pytest.approx(3.0)
    # a momentum fringe spacing h/d becomes T2 h / (m d) on the screen
    t2, m = 400.0, 2.0
    assert screen_coordinate(2 * math.pi, m, t2) == pytest.approx(t2 * 2 * math.pi / m)
    assert screen_coordinate(2 * math.pi, m, 2 * t2) == pytest.approx(2 * screen_coordinate(2 * math.pi, m, t2))
    with pytest.raises(InvalidParameterError):
        far_field_map(1.0, 1.0, 0.0)


def test_far_field_validity():
    g = GratingSpec(3)
    assert far_field_valid(g, 1.0, 90.0)
    assert not far_field_valid(g, 1.0, 89.0)
