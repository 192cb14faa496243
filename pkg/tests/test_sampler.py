import math

import numpy as np
import pytest
from scipy import stats

from epryoung.analysis import estimate_nrel_moments, estimate_ptot_moments, fringe_histogram
from epryoung.errors import DegenerateEnsembleError, InvalidParameterError
from epryoung.modular import modular_part
from epryoung.observables import analytic_moments_nrel, numeric_variance_ptot
from epryoung.sampler import EventBatch, SamplerConfig, sample_ensemble, sample_far, sample_near
from epryoung.states import Displacement, EprSource, GratingSpec, SetupWarning, SourceEnsemble, build_suboptimal_state

from conftest import default_source


def test_near_deterministic_and_job_independent(mme2):
    cfg = SamplerConfig(seed=5, n_events=30_000)
    a = sample_near(mme2, cfg)
    b = sample_near(mme2, cfg, jobs=3)
    assert np.array_equal(a.u1, b.u1) and np.array_equal(a.u2, b.u2)
    c = sample_near(mme2, SamplerConfig(seed=6, n_events=30_000))
    assert not np.array_equal(a.u1, c.u1)


def test_far_deterministic_and_job_independent(mme2):
    cfg = SamplerConfig(seed=5, n_events=20_000)
    a = sample_far(mme2, cfg)
    b = sample_far(mme2, cfg, jobs=3)
    assert np.array_equal(a.u1, b.u1) and np.array_equal(a.u2, b.u2)


def test_near_events_inside_slits(near2):
    g = GratingSpec(2)
    for u in (near2.u1, near2.u2):
        nearest = np.round(u / g.d - 0.5) + 0.5
        assert np.all(np.abs(u - nearest * g.d) <= 0.5 * g.a + 1e-12)
        assert np.all(np.abs(nearest) <= 0.5 * (g.n_slits - 1) + 1e-12)


def test_near_mme_has_no_relative_spread(near2):
    m = estimate_nrel_moments(near2, x_offset=0.5, n_boot=0)
    assert m.variance == 0.0


def test_near_suboptimal_matches_analytic():
    s = build_suboptimal_state(GratingSpec(3), EprSource(0.3, 1.0))
    ev = sample_near(s, SamplerConfig(seed=3, n_events=50_000))
    m = estimate_nrel_moments(ev, n_boot=100)
    assert abs(m.variance - analytic_moments_nrel(s).variance) < 3 * m.stderr_variance


def test_far_variance_matches_grid(far2, mme2):
    m = estimate_ptot_moments(far2, n_boot=100)
    assert abs(m.variance - numeric_variance_ptot(mme2)) < 4 * m.stderr_variance


def test_full_admixture_flat_in_modular_sum(mme2, two_pi):
    ev = sample_far(mme2, SamplerConfig(seed=8, n_events=100_000, admixture_w=1.0))
    folded = modular_part(ev.u1 + ev.u2, two_pi)
    counts, _ = np.histogram(folded, bins=20, range=(-math.pi, math.pi))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_single_marginal_has_no_fringe(far2):
    h = fringe_histogram(far2, axis="single1")
    assert h.grating_amplitude < 4 * h.grating_amplitude_se
    assert fringe_histogram(far2, axis="sum").grating_amplitude > 0.3


def test_phase_shift_moves_fringes(mme2):
    ev = sample_far(mme2, SamplerConfig(seed=9, n_events=50_000, phase_shift=math.pi))
    m0 = estimate_ptot_moments(ev, n_boot=0)
    m1 = estimate_ptot_moments(ev, phi=math.pi, n_boot=0)
    assert m1.variance < m0.variance


def test_screen_coordinates(mme2):
    cfg = SamplerConfig(seed=4, n_events=5_000, far_t2=1000.0)
    ev = sample_far(mme2, cfg)
    ref = sample_far(mme2, SamplerConfig(seed=4, n_events=5_000))
    p1, p2 = ev.momenta()
    assert ev.screen
    np.testing.assert_allclose(p1, ref.u1, rtol=1e-12)
    np.testing.assert_allclose(p2, ref.u2, rtol=1e-12)


def test_degenerate_ensemble_is_sample_far(mme2):
    cfg = SamplerConfig(seed=21, n_events=10_000)
    a = sample_ensemble(default_source(2), GratingSpec(2), SourceEnsemble(), cfg)
    b = sample_far(mme2, cfg)
    assert np.array_equal(a.u1, b.u1) and np.array_equal(a.u2, b.u2)


def test_relative_displacement_kills_two_slit_fringes():
    g = GratingSpec(2)
    cfg = SamplerConfig(seed=22, n_events=40_000)
    with pytest.warns(SetupWarning):
        ev = sample_ensemble(default_source(2), g, SourceEnsemble(), cfg, center=Displacement(x_rel0=g.d))
    h = fringe_histogram(ev, axis="sum")
    assert h.grating_amplitude < 4 * h.grating_amplitude_se


def test_ensemble_momentum_spread_damps_fringes():
    g = GratingSpec(2)
    cfg = SamplerConfig(seed=23, n_events=40_000)
    sharp = fringe_histogram(sample_ensemble(default_source(2), g, SourceEnsemble(), cfg)).grating_amplitude
    ens = sample_ensemble(default_source(2), g, SourceEnsemble(s0_p_cm=2 * math.pi), cfg)
    assert fringe_histogram(ens).grating_amplitude < sharp
    assert 0.0 <= ens.diagnostics["rejection_fraction"] <= 0.9


def test_blocked_ensemble_raises():
    g = GratingSpec(2)
    with pytest.raises(DegenerateEnsembleError):
        sample_ensemble(
            default_source(2), g, SourceEnsemble(s0_x_cm=0.1), SamplerConfig(n_events=2_000), center=Displacement(x_rel0=0.5)
        )


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        SamplerConfig(n_events=0)
    with pytest.raises(InvalidParameterError):
        SamplerConfig(admixture_w=1.5)
    with pytest.raises(InvalidParameterError):
        SamplerConfig(far_t2=-1.0)


def test_event_batch_helpers():
    b = EventBatch("near", [0.1, 0.2, 0.3], [0.0, 0.0, 1.0])
    assert len(b) == 3 and not b.screen
    assert [r.u1 for r in b.records()] == [0.1, 0.2, 0.3]
    assert len(b.subset(slice(0, 2))) == 2
    with pytest.raises(InvalidParameterError):
        b.momenta()
    with pytest.raises(InvalidParameterError):
        EventBatch("side", [0.0], [0.0])
    with pytest.raises(InvalidParameterError):
        EventBatch("far", [np.nan], [0.0])
