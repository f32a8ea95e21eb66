"""
Per-sample gradient clipping: l2 rescaling followed by optional l-infinity truncation.
"""
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ContractError

# Rounding slack on the l2 test: rescaled vectors sit within a few ulp of c.
_L2_SLACK = 1e-12


class ClipConfig(BaseModel):
    """
    l2 threshold `c` and l-infinity truncation parameter `p`.

    The per-coordinate cap is c / sqrt(p); p = 1 leaves the l2 clip as the
    only active constraint. c may be +inf to disable clipping.
    """
    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    c: float = Field(gt=0.0)
    p: int = Field(default=1, ge=1)

    @field_validator("c")
    @classmethod
    def _not_nan(cls, c: float) -> float:
        if math.isnan(c):
            raise ValueError("clip threshold must not be NaN")
        return c

    @property
    def coordinate_cap(self) -> float:
        return self.c / math.sqrt(self.p)


def clip_l2(g: np.ndarray, c: float) -> np.ndarray:
    """g * min(1, c / ||g||); zero stays zero and in-bound vectors come back unchanged."""
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= c * (1.0 + _L2_SLACK) or norm == 0.0:
        return g.copy()
    return g * (c / norm)


def clip_l2_linf(g: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    """l2-clip to c, then saturate every coordinate to [-c/sqrt(p), c/sqrt(p)]."""
    out = clip_l2(g, cfg.c)
    cap = cfg.coordinate_cap
    if cfg.p == 1 or not np.any(np.abs(out) > cap):
        return out
    return np.clip(out, -cap, cap)


def clip_rows(grads: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    """
    Row-wise clip_l2_linf over a (batch, d) matrix of per-sample gradients.

    Rows already inside both norm balls are returned bit-identical.
    """
    grads = np.asarray(grads, dtype=float)
    if grads.ndim != 2:
        raise ContractError("clip_rows expects a (batch, d) matrix")
    if grads.shape[0] == 0:
        return grads.copy()

    norms = np.linalg.norm(grads, axis=1)
    out = grads.copy()
    over = norms > cfg.c * (1.0 + _L2_SLACK)
    if np.any(over):
        out[over] = grads[over] * (cfg.c / norms[over])[:, None]

    if cfg.p > 1:
        cap = cfg.coordinate_cap
        mask = np.abs(out) > cap
        if np.any(mask):
            out[mask] = np.sign(out[mask]) * cap
    return out


def clipped_sum(grads: np.ndarray, cfg: ClipConfig) -> np.ndarray:
    """
    Sum of clipped per-sample gradients with a fixed pairwise reduction order.

    np.add.reduce over axis 0 is deterministic for a given shape.
    """
    clipped = clip_rows(grads, cfg)
    if clipped.shape[0] == 0:
        return np.zeros(grads.shape[1] if grads.ndim == 2 else 0)
    return np.add.reduce(clipped, axis=0)
