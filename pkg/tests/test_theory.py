import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.config import SWEEP_SIZES, SWEEP_THETAS, SWEEP_TOPOLOGIES, region_b_radius
from src.errors import ParameterError
from src.matops import gram_residual
from src.network import build_topology, metropolis_weights, with_correction
from src.surrogate import SurrogateParams
from src.theory import (RegionSampler, approximation_gap, assemble_beta_floor, check_coercivity,
                        check_consensus_summability, check_feasibility_rate, check_rate,
                        check_transition_spectrum, estimate_constants, format_check, sample_pairs_B,
                        sample_region_R)


def test_beta_floor_assembly():
    assert assemble_beta_floor(0.0, 0.0, 0.0) == pytest.approx(12.0 * math.sqrt(2.0))
    assert assemble_beta_floor(2.0, 0.0, 0.0) == pytest.approx(224.0)
    assert assemble_beta_floor(0.0, 10.0, 0.0) == pytest.approx(43.2)


def test_region_samples_stay_inside_and_reach_the_boundary():
    sampler = RegionSampler.region_r(6, 2, seed=1)
    samples = sample_region_R(sampler, 40)
    violations = [np.linalg.norm(gram_residual(X)) for X in samples]
    assert max(violations) <= 1.0 / 6.0
    assert max(violations) >= 0.9 / 6.0
    assert min(violations) < 0.9 / 6.0


def test_region_samples_extend_with_count():
    sampler = RegionSampler.region_r(5, 3, seed=2)
    short = sample_region_R(sampler, 5)
    longer = sample_region_R(sampler, 12)
    for a, b in zip(short, longer):
        assert_allclose(a, b, rtol=0, atol=0)


def test_zero_spread_samples_lie_on_the_manifold():
    samples = sample_region_R(RegionSampler.region_r(6, 2, seed=0, spread=0.0), 10)
    assert max(np.linalg.norm(gram_residual(X)) for X in samples) < 1e-14


def test_pairs_stay_inside_the_ball():
    sampler = RegionSampler.region_b(6, 2, seed=0)
    pairs = sample_pairs_B(sampler, 30)
    radius = region_b_radius(2)
    assert all(np.linalg.norm(X) <= radius and np.linalg.norm(Y) <= radius for X, Y in pairs)
    assert all(np.linalg.norm(X - Y) > 0.0 for X, Y in pairs)


def test_sampler_validation():
    with pytest.raises(ParameterError):
        RegionSampler(2, 3, 0.1)
    with pytest.raises(ParameterError):
        RegionSampler(3, 2, 0.0)
    with pytest.raises(ParameterError):
        RegionSampler(3, 2, 0.1, spread=2.0)


def test_constants_are_valid_and_monotone_in_pairs(calibrated_problem, er_mixing):
    sampler = RegionSampler.region_r(6, 2, seed=0)
    few = estimate_constants(calibrated_problem, sampler, 100, samples=50, beta=1.0, mp=er_mixing)
    many = estimate_constants(calibrated_problem, sampler, 150, samples=50, beta=1.0, mp=er_mixing)
    assert few.is_valid() and many.is_valid()
    for name in ("L_f_hat", "L_g_hat", "L_b_hat", "L_H_hat", "L_h_hat"):
        assert getattr(many, name) >= getattr(few, name)
    assert many.C0_hat == few.C0_hat and many.M_g_hat == few.M_g_hat
    assert few.L_b_hat <= 3.0 * region_b_radius(2) ** 2 + 1.0
    assert few.beta_floor == pytest.approx(assemble_beta_floor(few.L_f_hat, few.C0_hat, few.M_g_hat))
    assert few.rho_P < 1.0 and few.sigma2 == pytest.approx(er_mixing.sigma2)


def test_constants_need_enough_pairs(calibrated_problem):
    with pytest.raises(ParameterError):
        estimate_constants(calibrated_problem, RegionSampler.region_r(6, 2), 50, samples=10)


def test_coercivity_holds_at_beta_floor(calibrated_problem):
    sampler = RegionSampler.region_r(6, 2, seed=0)
    constants = estimate_constants(calibrated_problem, sampler, 100, samples=200)
    report = check_coercivity(calibrated_problem, SurrogateParams(constants.beta_floor),
                              sample_region_R(sampler, 200))
    assert report.violations == 0
    assert report.samples == 200


def test_coercivity_is_tight_on_the_manifold(calibrated_problem):
    samples = sample_region_R(RegionSampler.region_r(6, 2, seed=0, spread=0.0), 20)
    report = check_coercivity(calibrated_problem, SurrogateParams(1.0), samples)
    assert report.violations == 0
    assert abs(report.worst_margin) < 1e-10


def test_transition_spectrum_report(er_mixing):
    report = check_transition_spectrum(er_mixing, seed=3)
    assert report.passed
    assert report.rho_P < 1.0
    assert report.witness_ratio == pytest.approx(math.sqrt(2.0), abs=1e-10)
    assert report.decay_ok


def test_transition_contracts_on_every_sweep_network():
    worst = 0.0
    count = 0
    for kind, p in SWEEP_TOPOLOGIES:
        for n in SWEEP_SIZES:
            W = metropolis_weights(build_topology(kind, n, p=p, seed=0))
            for theta in SWEEP_THETAS:
                worst = max(worst, check_transition_spectrum(with_correction(W, theta)).rho_P)
                count += 1
    assert count == 54
    assert worst < 1.0


def test_rate_fit_on_analytic_sequences():
    k = np.arange(5001)
    fast = check_rate(1.0 / (k + 1.0), 500, 5000)
    assert fast.passed and fast.slope == pytest.approx(-1.0, abs=0.05)
    flat = check_rate(np.ones(5001), 500, 5000)
    assert not flat.passed and flat.slope == pytest.approx(0.0, abs=1e-9)
    zero = check_feasibility_rate(np.zeros(5001), 500, 5000)
    assert zero.passed and zero.vacuous
    broken = check_rate(np.full(5001, np.nan), 500, 5000)
    assert not broken.passed


def test_rate_fit_window_validation():
    with pytest.raises(ParameterError):
        check_rate(np.ones(100), 5, 100)
    with pytest.raises(ParameterError):
        check_rate(np.ones(100), 50, 200)
    with pytest.raises(ParameterError):
        check_rate(np.ones(1000), 100, 1000)


def test_consensus_summability():
    geometric = check_consensus_summability(0.9 ** np.arange(500))
    assert geometric.passed and geometric.max_consensus == pytest.approx(1.0)
    flat = check_consensus_summability(np.ones(500))
    assert not flat.passed and flat.tail_fraction == pytest.approx(0.1)
    assert not check_consensus_summability([]).passed


def test_approximation_gap_vanishes_on_the_manifold(calibrated_problem):
    on = sample_region_R(RegionSampler.region_r(6, 2, seed=0, spread=0.0), 10)
    off = sample_region_R(RegionSampler.region_r(6, 2, seed=0), 10)
    assert approximation_gap(calibrated_problem, on) < 1e-12
    assert approximation_gap(calibrated_problem, off) > 0.0


def test_format_check_line():
    line = format_check("rate", True, slope=-0.912345678, k_min=500)
    assert line == "CHECK rate PASS slope=-0.912346 k_min=500"
    assert format_check("coercivity", False).startswith("CHECK coercivity FAIL")
