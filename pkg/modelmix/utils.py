"""
Utility Functions for ModelMix
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Union

import numpy as np
from opentelemetry import context
from pydantic import BaseModel

from .errors import ContractError

_DIM_HEADER = "<u8"


def run_in_thread(func, *args):
    """
    Context propagation wrapper for running functions in threads.
    Keeps grid cells executed in a pool attached to the experiment's trace.
    """
    current_context = context.get_current()

    def wrapper():
        token = context.attach(current_context)
        try:
            return func(*args)
        finally:
            context.detach(token)

    return wrapper


def serialize_vector(vector) -> bytes:
    """
    Checkpoint encoding: 8-byte little-endian dimension, then float64 coordinates.
    """
    values = np.ascontiguousarray(np.asarray(vector, dtype=float).ravel(), dtype="<f8")
    return np.array([values.size], dtype=_DIM_HEADER).tobytes() + values.tobytes()


def deserialize_vector(binary: bytes) -> np.ndarray:
    if len(binary) < 8:
        raise ContractError("checkpoint is shorter than its dimension header")
    dim = int(np.frombuffer(binary[:8], dtype=_DIM_HEADER)[0])
    if len(binary) != 8 + 8 * dim:
        raise ContractError(f"checkpoint declares {dim} coordinates but holds {(len(binary) - 8) // 8}")
    return np.frombuffer(binary[8:], dtype="<f8").astype(float)


def save_checkpoint(path: Union[str, Path], vector) -> Path:
    path = Path(path)
    path.write_bytes(serialize_vector(vector))
    return path


def load_checkpoint(path: Union[str, Path]) -> np.ndarray:
    return deserialize_vector(Path(path).read_bytes())


def canonical_json(payload: Any) -> str:
    """Sorted keys, compact separators; pydantic models are dumped in JSON mode first."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)


def content_hash(payload: Any) -> str:
    """Git blob style sha1 of the canonical JSON encoding."""
    data = canonical_json(payload).encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
