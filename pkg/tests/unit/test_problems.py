"""Unit tests for ERM problems, the clipping counterexample and tail estimation."""
import math

import numpy as np
import pytest

from modelmix.errors import ContractError, DegenerateGradientError
from modelmix.problems import (
    Logistic,
    TanhMLP,
    check_gradients,
    estimate_kappa,
    expected_clipped_gradient,
    fit_exponential_tail,
    load_snapshot,
    make_least_squares,
    save_snapshot,
)


def test_least_squares_optimum_is_stationary(small_least_squares):
    problem = small_least_squares
    assert np.linalg.norm(problem.full_grad(problem.optimum)) < 1e-10
    assert problem.optimal_loss() <= problem.loss(problem.initial_point())
    assert problem.beta > 0


def test_factories_pass_gradient_check(small_logistic, small_mlp, quadratic):
    """Analytic per-sample gradients agree with finite differences."""
    for problem in (small_logistic, small_mlp, quadratic):
        check_gradients(problem, n_points=3, seed=1)
    assert small_mlp.d == 4 * 6 + 6 + 6 + 1


def test_quadratic_gradient(quadratic):
    w = np.zeros(3)
    np.testing.assert_allclose(quadratic.full_grad(w), -quadratic.center)
    assert quadratic.optimal_loss() == 0.0


def test_wrong_shapes_rejected(small_least_squares):
    with pytest.raises(ContractError):
        small_least_squares.loss(np.zeros(7))
    with pytest.raises(ContractError):
        Logistic(np.ones((3, 2)), np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ContractError):
        TanhMLP(np.ones((3, 2)), np.zeros(3), widths=(3, 1))


class TestCounterexample:
    """Three samples -20, -10, 90 where clipping stalls away from the optimum."""

    def test_optimum_is_twenty(self, counterexample):
        assert counterexample.optimum[0] == pytest.approx(20.0)
        assert counterexample.full_grad(np.array([0.0]))[0] == pytest.approx(-20.0)

    def test_clipped_gradient_is_one_third_at_both_points(self, counterexample):
        for w in (0.0, 20.0):
            value = expected_clipped_gradient(counterexample, np.array([w]), 1.0)[0]
            assert value == pytest.approx(1.0 / 3.0)

    def test_large_threshold_has_no_bias(self, counterexample):
        assert expected_clipped_gradient(counterexample, np.array([20.0]), 100.0)[0] == pytest.approx(0.0, abs=1e-12)

    def test_tail_statistics_at_optimum(self, counterexample):
        stats = estimate_kappa(counterexample, np.array([20.0]))
        assert stats.n_draws == 3
        assert stats.kappa_hat == pytest.approx(30.0)
        assert stats.sampling_noise_std == pytest.approx(math.sqrt((40 ** 2 + 30 ** 2 + 70 ** 2) / 3))

    def test_threshold_must_be_positive(self, counterexample):
        with pytest.raises(ContractError):
            expected_clipped_gradient(counterexample, np.array([0.0]), 0.0)


def test_exponential_tail_fit_recovers_scale():
    rng = np.random.default_rng(7)
    sample = rng.exponential(2.0, size=200_000)
    assert fit_exponential_tail(sample, tail_fraction=0.5) == pytest.approx(2.0, rel=0.03)


def test_degenerate_tail():
    with pytest.raises(DegenerateGradientError):
        fit_exponential_tail([3.0, 3.0, 3.0])
    with pytest.raises(DegenerateGradientError):
        fit_exponential_tail([1.0])
    with pytest.raises(ContractError):
        fit_exponential_tail([1.0, 2.0], tail_fraction=0.0)


def test_estimate_kappa_subsamples_large_problems():
    problem = make_least_squares(n=3000, d=3, seed=5)
    stats = estimate_kappa(problem, problem.initial_point(), n_draws=1000, seed=2)
    assert stats.n_draws == 1000
    assert stats.kappa_hat > 0
    with pytest.raises(ContractError):
        estimate_kappa(problem, problem.initial_point(), n_draws=10)


def test_snapshot_round_trip(tmp_path, small_least_squares, small_mlp):
    for problem in (small_least_squares, small_mlp):
        path = save_snapshot(problem, tmp_path / f"{problem.name}.bin")
        restored = load_snapshot(path)
        assert type(restored) is type(problem)
        assert (restored.n, restored.d, restored.seed) == (problem.n, problem.d, problem.seed)
        w = problem.initial_point() + 0.1
        assert restored.loss(w) == problem.loss(w)


def test_snapshot_rejects_corrupt_files(tmp_path, small_least_squares):
    path = save_snapshot(small_least_squares, tmp_path / "ls.bin")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ContractError):
        load_snapshot(path)
    (tmp_path / "short.bin").write_bytes(b"\x00\x01")
    with pytest.raises(ContractError):
        load_snapshot(tmp_path / "short.bin")
