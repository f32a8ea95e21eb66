"""Unit tests for the Monte-Carlo oracle."""
import math

import numpy as np
import pytest

from modelmix.dist_kernel import KernelFamily, MixtureKernel
from modelmix.errors import ContractError
from modelmix.harness.oracle import (
    MIN_SAMPLES,
    compare_with_quadrature,
    endpoint_kernels,
    mc_pointwise_loss,
    mc_validate_moments,
    sample_kernel,
)


def test_sampler_matches_kernel_moments():
    kernel = MixtureKernel(family=KernelFamily.LAPLACE, scale=0.5, shift=1.0, halfwidth=2.0)
    draws = sample_kernel(kernel, 400_000, np.random.default_rng(0))
    assert draws.mean() == pytest.approx(1.0, abs=0.01)
    # Laplace variance 2 b^2 plus uniform variance W^2 / 3
    assert draws.var() == pytest.approx(2 * 0.25 + 4.0 / 3.0, rel=0.01)


def test_direct_sampling_agrees_with_closed_form():
    p0, p1 = endpoint_kernels(sigma=2.0, sensitivity=1.0, p=1, halfwidth=0.0)
    estimates = mc_validate_moments(p0, p1, [1, 2, 3], n_samples=1_000_000, seed=3)
    for est in estimates:
        assert est.estimate == pytest.approx(math.exp(est.k * (est.k - 1) / 8.0), rel=0.02)
    checks = compare_with_quadrature(p0, p1, estimates, z_max=4.0)
    assert all(check.passed for check in checks)


@pytest.mark.parametrize("family", [KernelFamily.GAUSSIAN, KernelFamily.LAPLACE])
def test_importance_sampling_agrees_with_quadrature(family):
    """The tilted proposal keeps higher orders within a few standard errors."""
    p0, p1 = endpoint_kernels(sigma=1.0, sensitivity=1.0, p=1, halfwidth=0.5, family=family)
    estimates = mc_validate_moments(p0, p1, [2, 3, 4], n_samples=1_000_000, seed=5, importance=True)
    checks = compare_with_quadrature(p0, p1, estimates, z_max=4.0)
    assert all(check.passed for check in checks), [c.z_score for c in checks]
    assert all(check.std_error < 0.01 * check.quadrature for check in checks)


def test_chunks_do_not_change_the_estimate_much():
    p0, p1 = endpoint_kernels(sigma=2.0, sensitivity=1.0, p=4, halfwidth=0.25)
    whole = mc_validate_moments(p0, p1, [2], n_samples=MIN_SAMPLES, seed=1)[0]
    pieces = mc_validate_moments(p0, p1, [2], n_samples=MIN_SAMPLES, seed=1, chunk=30_000)[0]
    assert pieces.n_samples == whole.n_samples == MIN_SAMPLES
    assert pieces.estimate == pytest.approx(whole.estimate, abs=5 * whole.std_error)


def test_identical_kernels_give_unit_moments():
    p0 = MixtureKernel(scale=1.0, halfwidth=1.0)
    estimates = mc_validate_moments(p0, p0, [2, 3], n_samples=MIN_SAMPLES)
    assert all(est.estimate == pytest.approx(1.0) for est in estimates)
    loss = mc_pointwise_loss(p0, p0, n_samples=MIN_SAMPLES)
    assert loss.mean == 0.0 and loss.variance == 0.0


def test_sample_count_floor():
    p0, p1 = endpoint_kernels(1.0, 1.0, 1, 0.0)
    with pytest.raises(ContractError):
        mc_validate_moments(p0, p1, [2], n_samples=MIN_SAMPLES - 1)
    with pytest.raises(ContractError):
        mc_pointwise_loss(p0, p1, n_samples=1000)


def test_gaussian_pointwise_loss_moments():
    """Without mixing the pointwise loss is N(d^2/2s^2, d^2/s^2)."""
    p0, p1 = endpoint_kernels(sigma=2.0, sensitivity=1.5, p=1, halfwidth=0.0)
    loss = mc_pointwise_loss(p0, p1, n_samples=1_000_000, seed=2)
    assert loss.mean == pytest.approx(1.5 ** 2 / (2 * 4.0), rel=0.02)
    assert loss.variance == pytest.approx(1.5 ** 2 / 4.0, rel=0.02)
    assert set(loss.quantiles) == {"0.5", "0.9", "0.99", "0.999"}
    assert loss.quantiles["0.999"] > loss.quantiles["0.5"]


def test_doubling_the_window_halves_the_loss_moments():
    narrow = mc_pointwise_loss(*endpoint_kernels(1.0, 1.0, 1, 20.0), n_samples=1_000_000, seed=4)
    wide = mc_pointwise_loss(*endpoint_kernels(1.0, 1.0, 1, 40.0), n_samples=1_000_000, seed=4)
    assert 0.35 <= wide.mean / narrow.mean <= 0.65
    assert 0.4 <= wide.variance / narrow.variance <= 0.6
