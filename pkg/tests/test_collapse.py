import itertools
import time

import numpy as np
import pytest
from pydantic import ValidationError

from analysis.collapse import (
    build_etf,
    check_etf,
    check_nc,
    decay_slope,
    etf_flatness,
    bias_residual,
    margin,
    nc_limit_probs,
    prop1_bound,
)
from models.configs import EtfConfig, EtfGridConfig
from runners.etf_check import run_etf_check
from utils.numkit import softmax_rows

GRID = list(itertools.product([2, 3, 10], [0.5, 1.0, 2.0], [1.0, 2.0, 4.0, 8.0]))


def _etf(k, M, lam, **kwargs):
    return build_etf(EtfConfig(k=k, d=k + 1, M=M, lambda_nc=lam, **kwargs))


def test_margin_and_limit_probabilities():
    assert margin(2, 1.0) == pytest.approx(2.0)
    assert margin(10, 2.0) == pytest.approx(40.0 / 9.0)
    p_true, p_other = nc_limit_probs(2.0, 3, 1.0)
    assert p_true + 2 * p_other == pytest.approx(1.0)
    assert p_other / p_true == pytest.approx(np.exp(-2.0 * 1.5))


@pytest.mark.parametrize("k, M, lam", GRID)
def test_etf_satisfies_all_collapse_conditions(k, M, lam):
    assert check_etf(_etf(k, M, lam, seed=k), tol=1e-9).all()


@pytest.mark.parametrize("k, M, lam", GRID)
def test_etf_biases_share_one_constant(k, M, lam):
    assert bias_residual(_etf(k, M, lam, bias_base=0.3, seed=1)) <= 1e-10


@pytest.mark.parametrize("k, M, lam", GRID)
def test_etf_flatness_within_bound(k, M, lam):
    assert etf_flatness(_etf(k, M, lam, seed=2)) <= prop1_bound(lam, k, M)


def test_etf_softmax_matches_limit_probabilities():
    etf = _etf(4, 1.0, 3.0, bias_base=-0.7, seed=5)
    probs = softmax_rows(etf.logits)
    p_true, p_other = nc_limit_probs(3.0, 4, 1.0)
    np.testing.assert_allclose(np.diag(probs), p_true, rtol=1e-12)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(probs[off], p_other, rtol=1e-9)


def test_centering_leaves_logits_unchanged():
    etf = _etf(3, 2.0, 1.5, seed=8)
    np.testing.assert_allclose(etf.centered().logits, etf.logits, atol=1e-12)
    np.testing.assert_allclose(etf.centered().mu_g, 0.0)


def test_zero_global_mean_scale_gives_centered_construction():
    etf = _etf(3, 1.0, 2.0, global_mean_scale=0.0)
    np.testing.assert_array_equal(etf.mu_g, np.zeros(4))
    assert etf_flatness(etf, center=False) == pytest.approx(etf_flatness(etf))


def test_feature_noise_breaks_nc1():
    etf = _etf(3, 1.0, 2.0, seed=3)
    noise = np.random.default_rng(0).normal(size=etf.phi.shape)
    noise *= 1e-6 / np.linalg.norm(noise, axis=1, keepdims=True)
    checks = check_etf(etf, tol=1e-9, phi=etf.phi + noise)
    assert not checks.nc1
    assert checks.nc2 and checks.nc3


def test_flipped_classifier_breaks_nc3_and_nc4():
    etf = _etf(3, 1.0, 2.0, seed=3)
    checks = check_nc(etf.means, etf.mu_g, -etf.w, etf.b, etf.phi, etf.labels, tol=1e-9)
    assert checks.nc1 and checks.nc2
    assert not checks.nc3
    assert not checks.nc4


def test_etf_config_requires_room_for_the_simplex():
    with pytest.raises(ValidationError):
        EtfConfig(k=5, d=4, M=1.0, lambda_nc=1.0)


@pytest.mark.parametrize("k, M", [(2, 0.5), (3, 1.0), (10, 2.0)])
def test_flatness_decays_exponentially_at_large_margin(k, M):
    delta = margin(k, M)
    lambdas = [m / delta for m in (20.0, 30.0, 40.0, 50.0)]
    log_kappa, slope = decay_slope(k, M, lambdas, seed=1)
    assert np.all(np.diff(log_kappa) < 0)
    assert slope == pytest.approx(-delta, rel=0.2)


def test_full_grid_check_passes_quickly():
    start = time.perf_counter()
    result = run_etf_check(EtfGridConfig())
    assert time.perf_counter() - start < 5.0
    assert result.passed, result.failures()
    assert len(result.cells) == 36
    assert len(result.decay) == 9


def test_bound_and_limit_probability_values_for_two_classes():
    # k=2, M=1: delta = 2
    assert prop1_bound(1.0, 2, 1.0) == pytest.approx(8 * np.exp(-2) / (1 + np.exp(-2)) ** 2, rel=1e-12)
    assert prop1_bound(1.0, 2, 1.0) == pytest.approx(0.8399, abs=1e-4)
    p_true, _ = nc_limit_probs(1.0, 2, 1.0)
    assert p_true == pytest.approx(0.8808, abs=1e-4)


def test_bound_decays_like_lambda_squared_times_exponential():
    ratio = prop1_bound(8.0, 2, 1.0) / prop1_bound(4.0, 2, 1.0)
    assert ratio == pytest.approx(4 * np.exp(-8.0), rel=0.05)
