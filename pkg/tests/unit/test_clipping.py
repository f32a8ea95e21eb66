"""Unit tests for per-sample clipping."""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from modelmix.clipping import ClipConfig, clip_l2, clip_l2_linf, clip_rows, clipped_sum
from modelmix.errors import ContractError


def test_clip_l2_rescales_long_vectors():
    g = np.array([3.0, 4.0])
    out = clip_l2(g, 1.0)
    np.testing.assert_allclose(out, [0.6, 0.8])
    assert np.linalg.norm(out) == pytest.approx(1.0)


def test_clip_l2_leaves_short_and_zero_vectors():
    """In-bound vectors come back bit-identical."""
    g = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(clip_l2(g, 1.0), g)
    assert np.array_equal(clip_l2(np.zeros(3), 1.0), np.zeros(3))


def test_infinite_threshold_disables_clipping():
    g = np.array([1e6, -1e6])
    assert np.array_equal(clip_l2(g, math.inf), g)
    assert np.array_equal(clip_rows(g[None, :], ClipConfig(c=math.inf))[0], g)


def test_linf_cap_after_l2(rng):
    cfg = ClipConfig(c=2.0, p=4)
    for _ in range(50):
        g = rng.standard_normal(6) * rng.uniform(0.1, 10.0)
        out = clip_l2_linf(g, cfg)
        assert np.linalg.norm(out) <= 2.0 * (1 + 1e-12)
        assert np.max(np.abs(out)) <= cfg.coordinate_cap * (1 + 1e-12)
        # Saturation keeps signs
        assert np.all(np.sign(out[out != 0]) == np.sign(g[out != 0]))


def test_clipping_is_idempotent(rng):
    cfg = ClipConfig(c=1.5, p=3)
    grads = rng.standard_normal((20, 4)) * 5
    once = clip_rows(grads, cfg)
    np.testing.assert_array_equal(clip_rows(once, cfg), once)


def test_clip_rows_matches_per_row_clip(rng):
    cfg = ClipConfig(c=1.0, p=2)
    grads = rng.standard_normal((30, 5)) * 3
    rows = np.stack([clip_l2_linf(g, cfg) for g in grads])
    np.testing.assert_allclose(clip_rows(grads, cfg), rows, rtol=1e-13, atol=0)


def test_clipped_sum_bounds_each_contribution(rng):
    cfg = ClipConfig(c=0.5)
    grads = rng.standard_normal((10, 3)) * 4
    total = clipped_sum(grads, cfg)
    assert np.linalg.norm(total) <= 10 * 0.5 + 1e-12
    np.testing.assert_allclose(total, clip_rows(grads, cfg).sum(axis=0))


def test_empty_batch():
    cfg = ClipConfig(c=1.0)
    assert clip_rows(np.empty((0, 3)), cfg).shape == (0, 3)
    np.testing.assert_array_equal(clipped_sum(np.empty((0, 3)), cfg), np.zeros(3))


def test_clip_rows_needs_a_matrix():
    with pytest.raises(ContractError):
        clip_rows(np.ones(3), ClipConfig(c=1.0))


def test_clip_config_validation():
    with pytest.raises(ValidationError):
        ClipConfig(c=0.0)
    with pytest.raises(ValidationError):
        ClipConfig(c=math.nan)
    with pytest.raises(ValidationError):
        ClipConfig(c=1.0, p=0)
    assert ClipConfig(c=4.0, p=16).coordinate_cap == 1.0


def test_clip_properties_on_many_vectors():
    rng = np.random.default_rng(2024)
    cfg = ClipConfig(c=1.3, p=5)
    dims = rng.integers(1, 40, size=10_000)
    for d in dims:
        g = rng.standard_normal(d) * 10 ** rng.uniform(-3, 3)
        norm = np.linalg.norm(g)

        l2 = clip_l2(g, cfg.c)
        assert np.linalg.norm(l2) <= cfg.c * (1 + 1e-12)
        if norm <= cfg.c:
            assert np.array_equal(l2, g)
        else:
            # Same direction, rescaled onto the sphere
            np.testing.assert_allclose(l2 * norm / cfg.c, g, rtol=1e-12)

        both = clip_l2_linf(g, cfg)
        assert np.linalg.norm(both) <= cfg.c * (1 + 1e-12)
        assert np.max(np.abs(both)) <= cfg.coordinate_cap * (1 + 1e-12)
        assert np.all(np.abs(both) <= np.abs(l2))
