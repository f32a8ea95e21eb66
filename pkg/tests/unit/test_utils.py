"""Unit tests for checkpoint codecs, hashing and thread context propagation."""
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from opentelemetry import context

from modelmix.clipping import ClipConfig
from modelmix.errors import ContractError
from modelmix.utils import (
    canonical_json,
    content_hash,
    deserialize_vector,
    load_checkpoint,
    run_in_thread,
    save_checkpoint,
    serialize_vector,
)


def test_checkpoint_layout():
    """8-byte little-endian dimension followed by float64 coordinates."""
    blob = serialize_vector([1.0, -2.5, math.inf])
    assert len(blob) == 8 + 3 * 8
    assert int.from_bytes(blob[:8], "little") == 3
    np.testing.assert_array_equal(deserialize_vector(blob), [1.0, -2.5, math.inf])


def test_checkpoint_file(tmp_path):
    path = save_checkpoint(tmp_path / "w.bin", np.arange(5.0))
    np.testing.assert_array_equal(load_checkpoint(path), np.arange(5.0))


def test_truncated_checkpoints_rejected():
    blob = serialize_vector(np.ones(4))
    with pytest.raises(ContractError):
        deserialize_vector(blob[:-1])
    with pytest.raises(ContractError):
        deserialize_vector(blob[:4])


def test_content_hash_ignores_key_order():
    assert content_hash({"a": 1, "b": [1, 2]}) == content_hash({"b": [1, 2], "a": 1})
    assert content_hash({"a": 1}) != content_hash({"a": 2})
    assert len(content_hash({})) == 40


def test_canonical_json_dumps_models():
    assert canonical_json(ClipConfig(c=2.0, p=4)) == '{"c":2.0,"p":4}'


def test_run_in_thread_carries_context():
    key = context.create_key("cell")
    token = context.attach(context.set_value(key, "fig4"))
    try:
        task = run_in_thread(lambda suffix: f"{context.get_value(key)}-{suffix}", "a")
    finally:
        context.detach(token)

    with ThreadPoolExecutor(max_workers=1) as pool:
        assert pool.submit(task).result() == "fig4-a"
