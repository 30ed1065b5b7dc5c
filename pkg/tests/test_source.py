import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from oracles import PHI_PLUS, match_probability_closed
from qdswap.source import (HBAR, FieldOutOfRangeError, QDSource, UntunablePairError, calibrate_noise_floor,
                           cascade_state, find_resonance_field, fss_phase, instantaneous_pair_dm,
                           pair_dm_quadrature, pair_match_exact, pair_match_probability, spread_to_sigma,
                           time_averaged_pair_dm, tuned_energies, tuning_range)
from qdswap.states import concurrence, fully_entangled_fraction

# S T_X / hbar = 1 with g2 = 0: |rho_HH,VV| = 1/(2 sqrt 2), so FEF = (1 + 1/sqrt 2)/2.
# Checked against a 1e6-point quadrature of the tau integral below.
FEF_UNIT_PRECESSION = 0.8535533905932737


def test_zero_fss_gives_phi_plus():
    s = QDSource()
    for tau in (0.0, 3.0, 100.0):
        assert np.allclose(cascade_state(s, tau), PHI_PLUS)


def test_full_precession_period():
    tau = 40.0
    s = QDSource(fss=2 * np.pi * HBAR / tau)
    assert np.allclose(cascade_state(s, tau), PHI_PLUS, atol=1e-14)


def test_phase_value_and_integration():
    s = QDSource(fss=1.0)
    phase = float(fss_phase(s, 25.0))
    assert phase == pytest.approx(0.0379818, abs=1e-6)
    numeric, _ = integrate.quad(lambda t: s.fss / HBAR, 0, 25.0)
    assert phase == pytest.approx(numeric, rel=1e-12)


def test_negative_tau_rejected():
    with pytest.raises(ValueError):
        cascade_state(QDSource(), -1.0)


def test_time_average_ideal():
    rho = time_averaged_pair_dm(QDSource())
    assert np.allclose(rho, np.outer(PHI_PLUS, PHI_PLUS.conj()), atol=1e-15)
    assert fully_entangled_fraction(rho) == pytest.approx(1.0, abs=1e-14)


def test_unit_precession_fef_locked():
    s = QDSource(fss=HBAR / 25.0, x_lifetime=25.0)
    closed = time_averaged_pair_dm(s)
    quad = pair_dm_quadrature(s, n_points=1_000_000)
    assert np.max(np.abs(closed - quad)) < 1e-8
    assert fully_entangled_fraction(closed) == pytest.approx(FEF_UNIT_PRECESSION, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(5.0, 200.0), st.floats(0.0, 0.2), st.floats(0.0, 0.3))
def test_time_average_physical_and_bounded(fss, lifetime, g2, floor):
    s = QDSource(fss=fss, x_lifetime=lifetime, g2_zero=g2, noise_floor=floor)
    rho = time_averaged_pair_dm(s)
    f = fully_entangled_fraction(rho)
    assert 0.25 - 1e-12 <= f <= 1.0
    # more FSS never helps
    assert f <= fully_entangled_fraction(time_averaged_pair_dm(s.replace(fss=0.0))) + 1e-12


def test_instantaneous_state_is_pure():
    rho = instantaneous_pair_dm(QDSource(fss=3.0), 17.0)
    assert np.trace(rho @ rho).real == pytest.approx(1.0)
    assert concurrence(rho) == pytest.approx(1.0, abs=1e-10)


def test_bundled_sources_fef(cal_cfg):
    assert fully_entangled_fraction(time_averaged_pair_dm(cal_cfg.source1)) == pytest.approx(0.90, abs=0.03)
    assert fully_entangled_fraction(time_averaged_pair_dm(cal_cfg.source2)) == pytest.approx(0.91, abs=0.03)


@pytest.mark.parametrize("target", [0.7, 0.85, 0.9])
def test_noise_floor_calibration_round_trip(target):
    s = QDSource(fss=1.0, g2_zero=0.02)
    floor = calibrate_noise_floor(s, target)
    assert fully_entangled_fraction(time_averaged_pair_dm(s.replace(noise_floor=floor))) == pytest.approx(target,
                                                                                                          abs=1e-12)


def test_noise_floor_out_of_reach():
    with pytest.raises(ValueError):
        calibrate_noise_floor(QDSource(fss=5.0, g2_zero=0.05), 0.99)


def test_tuning_at_zero_field(cal_cfg):
    s = cal_cfg.source2
    assert tuned_energies(s, 0.0) == (s.x_energy, s.xx_energy)


def test_tuning_range_500(cal_cfg):
    assert tuning_range(cal_cfg.source2, "X") == pytest.approx(500.0, abs=0.5)


def test_resonance_fields(cal_cfg):
    s1, s2 = cal_cfg.source1, cal_cfg.source2
    assert s2.x_energy - s1.x_energy == pytest.approx(120.0)
    assert s2.xx_energy - s1.xx_energy == pytest.approx(160.0)
    assert find_resonance_field(s1, s2, "X") == pytest.approx(-9.3, abs=0.05)
    assert find_resonance_field(s1, s2, "XX") == pytest.approx(-11.3, abs=0.05)


def test_identical_sources_resonate_at_zero():
    s = QDSource(slope_x=10.0, slope_xx=10.0)
    assert find_resonance_field(s, s, "X") == 0.0


def test_untunable_pair():
    s1 = QDSource(slope_x=10.0)
    s2 = s1.replace(x_energy=1000.0)
    with pytest.raises(UntunablePairError):
        find_resonance_field(s1, s2, "X")
    with pytest.raises(UntunablePairError):
        find_resonance_field(s1, QDSource(x_energy=5.0), "X")


def test_field_out_of_range():
    with pytest.raises(FieldOutOfRangeError):
        tuned_energies(QDSource(), 25.0)


def test_source_validation():
    with pytest.raises(ValueError):
        QDSource(x_lifetime=0)
    with pytest.raises(ValueError):
        QDSource(g2_zero=1.2)
    with pytest.raises(ValueError):
        QDSource(field_range=(5.0, -5.0))


def test_match_limits():
    assert pair_match_probability(3000.0, 0.0, 100_000) == 0.0
    assert pair_match_probability(3000.0, math.inf, 100_000) == 1.0


def test_match_calibrated_value():
    p = pair_match_probability(3000.0, 500.0, 1_000_000, seed=5)
    assert p == pytest.approx(0.07, abs=0.02)
    assert p == pytest.approx(match_probability_closed(3000.0, 500.0), abs=4 * math.sqrt(p * (1 - p) / 1e6))
    assert pair_match_exact(3000.0, 500.0) == pytest.approx(match_probability_closed(3000.0, 500.0), rel=1e-12)


def test_match_threads_do_not_change_result():
    a = pair_match_probability(3000.0, 500.0, 600_000, seed=9, threads=1)
    b = pair_match_probability(3000.0, 500.0, 600_000, seed=9, threads=3)
    assert a == b


def test_spread_kinds():
    assert spread_to_sigma(1.0, "std") == 1.0
    assert spread_to_sigma(2.354820045, "fwhm") == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(ValueError):
        spread_to_sigma(1.0, "iqr")


def test_mad_sigma_sample_oracle():
    x = np.random.default_rng(0).normal(0.0, spread_to_sigma(3000.0), 1_000_000)
    assert np.mean(np.abs(x - x.mean())) == pytest.approx(3000.0, rel=0.01)
