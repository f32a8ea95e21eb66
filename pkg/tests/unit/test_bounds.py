"""Unit tests for the convergence bound calculators."""
import math

import pytest

from modelmix.bounds import (
    ConvexBoundParams,
    NonConvexBoundParams,
    loglog_slope,
    recommend_clip_threshold,
    thm31_bound,
    thm32_bound,
    thm32_metric,
    thm32_metric_and_bound,
)
from modelmix.errors import ContractError


def test_clip_threshold_floors_negative_log_term():
    """For the three-sample counterexample only 4 kappa log 10 survives."""
    assert recommend_clip_threshold(30.0, 3, 1, 1.0, 1e-5) == pytest.approx(4 * 30 * math.log(10))


def test_clip_threshold_grows_with_dataset_size():
    kappa, n, eps = 30.0, 1_000_000, 1.0
    expected = -kappa * math.log(kappa) * math.log(math.sqrt(math.log(1e5)) / (n * eps))
    assert recommend_clip_threshold(kappa, n, 1, eps, 1e-5) == pytest.approx(expected)
    assert expected > 4 * kappa * math.log(10)


def test_clip_threshold_validation():
    with pytest.raises(ContractError):
        recommend_clip_threshold(0.0, 3, 1, 1.0, 1e-5)
    with pytest.raises(ContractError):
        recommend_clip_threshold(1.0, 3, 1, 1.0, 2.0)


def test_convex_bound_drift_term():
    params = ConvexBoundParams(W0=2.0, d=1, gamma=1.0, T=4, q=1.0, n=1, lipschitz=0.0, beta=0.0)
    assert thm31_bound(params) == pytest.approx(3 * 4.0 / (2 * 2))


def test_convex_bound_grows_with_tau():
    common = dict(W0=1.0, eta=0.01, n=100, q=0.5, T=100, d=10, sigma=0.1, lipschitz=2.0, beta=1.0)
    without = thm31_bound(ConvexBoundParams.from_run(taus=[], **common))
    with_mixing = thm31_bound(ConvexBoundParams.from_run(taus=[0.1] * 100, **common))
    assert with_mixing > without
    params = ConvexBoundParams.from_run(taus=[], **common)
    assert params.gamma == pytest.approx(0.01 * 100 * 0.5 * 10)
    assert params.noise_second_moment == pytest.approx(10 * 0.01)


def test_convex_bound_needs_constants():
    params = ConvexBoundParams(W0=1.0, d=1, gamma=1.0, T=1, q=1.0, n=1, beta=1.0)
    with pytest.raises(ContractError):
        thm31_bound(params)


def test_nonconvex_metric():
    assert thm32_metric([1.0, 100.0], 20.0) == pytest.approx(50.225)
    with pytest.raises(ContractError):
        thm32_metric([], 1.0)


def test_nonconvex_bound():
    params = NonConvexBoundParams(c=1.0, beta=1.0, d=10, n=1000, q=0.1, eps=1.0, delta=1e-5, loss_range=1.0)
    metric, bound = thm32_metric_and_bound([0.5, 0.2], params)
    assert metric == pytest.approx((min(0.45 * 0.25, 0.025) + min(0.45 * 0.04, 0.01)) / 2)
    assert bound > 0

    mixed = params.model_copy(update={"taus": (0.1,) * 10, "initial_gap": 1.0})
    assert thm32_bound(mixed) > bound

    with pytest.raises(ContractError):
        thm32_bound(params.model_copy(update={"beta": None}))


def test_loglog_slope():
    Ts = [10, 100, 1000]
    assert loglog_slope(Ts, [1 / math.sqrt(t) for t in Ts]) == pytest.approx(-0.5)
    with pytest.raises(ContractError):
        loglog_slope([10], [1.0])
    with pytest.raises(ContractError):
        loglog_slope([10, 100], [1.0, 0.0])
