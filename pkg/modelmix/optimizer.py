"""
ModelMix Optimizer

The randomised mixing iteration, the clipped DP-SGD baseline it reduces to,
plain SGD and the two-model alternating variant.

Randomness comes from one master seed. Iteration k draws from three
independent sub-streams (subsampling, mixing weights, noise) keyed by
(k, stream), so switching mixing off leaves the subsample and noise draws
of every iteration untouched.
"""
import bisect
import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .accountant import AccountantConfig
from .clipping import ClipConfig, clipped_sum
from .core.decorators import annotate
from .dist_kernel import KernelFamily
from .errors import ContractError
from .problems import Problem

SUBSAMPLE_STREAM = 0
MIX_STREAM = 1
NOISE_STREAM = 2


class Aggregation(str, Enum):
    SUM = "sum"
    MEAN = "mean"


class ReleaseMode(str, Enum):
    """Which iterates a run publishes."""
    FINAL = "final"
    TRAJECTORY = "trajectory"


class TauSchedule(BaseModel):
    """
    Mixing thresholds tau_k in parameter units.

    Constant, piecewise-constant by fraction of the run, or an explicit
    per-iteration list.

    Usage:
        TauSchedule.constant(0.05 * eta)
        TauSchedule.piecewise([0.05 * eta, 0.025 * eta], [0.5])
    """
    model_config = ConfigDict(frozen=True)

    values: Tuple[float, ...] = (0.0,)
    breakpoints: Tuple[float, ...] = ()
    explicit: bool = False

    @model_validator(mode="after")
    def _check(self) -> "TauSchedule":
        if not self.values:
            raise ValueError("tau schedule needs at least one value")
        if any(not v >= 0.0 for v in self.values):
            raise ValueError("tau values must be nonnegative")
        if self.explicit:
            if self.breakpoints:
                raise ValueError("explicit schedules take no breakpoints")
            return self
        if len(self.breakpoints) != len(self.values) - 1:
            raise ValueError("piecewise schedules need one breakpoint fewer than values")
        points = (0.0,) + tuple(self.breakpoints) + (1.0,)
        if any(b <= a for a, b in zip(points, points[1:])):
            raise ValueError("breakpoints must increase strictly inside (0, 1)")
        return self

    @classmethod
    def constant(cls, tau: float) -> "TauSchedule":
        return cls(values=(float(tau),))

    @classmethod
    def piecewise(cls, values: Sequence[float], breakpoints: Sequence[float]) -> "TauSchedule":
        return cls(values=tuple(float(v) for v in values), breakpoints=tuple(float(b) for b in breakpoints))

    @classmethod
    def per_iteration(cls, values: Sequence[float]) -> "TauSchedule":
        return cls(values=tuple(float(v) for v in values), explicit=True)

    def tau_at(self, k: int, T: int) -> float:
        """tau_k for the 1-based iteration k of a T-iteration run."""
        if self.explicit:
            if not 1 <= k <= len(self.values):
                raise ContractError(f"explicit tau schedule has no entry for iteration {k}")
            return self.values[k - 1]
        if len(self.values) == 1:
            return self.values[0]
        fraction = (k - 1) / max(T, 1)
        return self.values[bisect.bisect_right(self.breakpoints, fraction)]

    def min_over(self, T: int) -> float:
        """Smallest threshold used in the first T iterations."""
        if self.explicit:
            return min(self.values[:max(T, 1)])
        return min(self.values)


class MixConfig(BaseModel):
    """
    Everything one training run needs besides the problem.

    `mixing=False` runs the clipped DP-SGD baseline; `alpha_fixed` pins every
    mixing weight (1.0 together with tau = 0 reproduces the baseline exactly).
    """
    model_config = ConfigDict(ser_json_inf_nan="constants")

    eta: float = Field(gt=0.0)
    clip: ClipConfig = Field(default_factory=lambda: ClipConfig(c=float("inf")))
    tau_schedule: TauSchedule = Field(default_factory=TauSchedule)
    q: float = Field(default=1.0, ge=0.0, le=1.0)
    sigma: float = Field(default=0.0, ge=0.0)
    T: int = Field(default=100, ge=0)
    seed: int = Field(default=0, ge=0)
    aggregation: Aggregation = Aggregation.SUM
    mixing: bool = True
    alpha_fixed: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    release: ReleaseMode = ReleaseMode.FINAL
    log_every: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _schedule_covers_run(self) -> "MixConfig":
        if self.tau_schedule.explicit and len(self.tau_schedule.values) < self.T:
            raise ValueError(f"explicit tau schedule has {len(self.tau_schedule.values)} entries for T={self.T}")
        return self

    @property
    def tau(self) -> float:
        """Constant threshold, or the smallest one in the schedule."""
        return self.tau_schedule.min_over(self.T)


@dataclass
class TrainerState:
    """
    Two consecutive iterates and the iteration counter.

    `w_curr` is w_{k-1} and `w_prev` is w_{k-2}; the random state is fully
    determined by (seed, k). `batch_size` and `min_coord_gap` describe the
    step that produced this state.
    """
    w_curr: np.ndarray
    w_prev: np.ndarray
    k: int = 0
    seed: int = 0
    batch_size: int = 0
    min_coord_gap: float = float("nan")

    def __post_init__(self):
        self.w_curr = np.asarray(self.w_curr, dtype=float)
        self.w_prev = np.asarray(self.w_prev, dtype=float)
        if self.w_curr.shape != self.w_prev.shape or self.w_curr.ndim != 1:
            raise ContractError(
                f"iterate shapes differ: {self.w_curr.shape} vs {self.w_prev.shape}"
            )

    @classmethod
    def start(cls, w0: np.ndarray, seed: int = 0, w_minus1: Optional[np.ndarray] = None) -> "TrainerState":
        w0 = np.array(w0, dtype=float)
        return cls(w_curr=w0, w_prev=w0.copy() if w_minus1 is None else np.array(w_minus1, dtype=float), seed=seed)

    @property
    def d(self) -> int:
        return self.w_curr.size


def stream(seed: int, k: int, stream_id: int) -> np.random.Generator:
    """Independent generator for (iteration k, stream)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(k, stream_id)))


def poisson_sample(n: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """Indices included independently with probability q (possibly none)."""
    if not 0.0 <= q <= 1.0:
        raise ContractError(f"sampling rate must lie in [0, 1], got {q}")
    if q == 0.0:
        return np.empty(0, dtype=int)
    if q == 1.0:
        return np.arange(n)
    return np.flatnonzero(rng.random(n) < q)


def _check_dims(state: TrainerState, problem: Problem) -> None:
    if state.d != problem.d:
        raise ContractError(f"state dimension {state.d} does not match problem dimension {problem.d}")


def _gradient(problem: Problem, w: np.ndarray, idx: np.ndarray, cfg: MixConfig) -> np.ndarray:
    """Aggregated clipped gradient G over the minibatch."""
    if idx.size == 0:
        return np.zeros(problem.d)
    G = clipped_sum(problem.per_sample_grads(w, idx), cfg.clip)
    if cfg.aggregation is Aggregation.MEAN:
        G = G / (problem.n * cfg.q)
    return G


def _noise(seed: int, k: int, d: int, sigma: float) -> np.ndarray:
    return sigma * stream(seed, k, NOISE_STREAM).standard_normal(d)


def enforce_separation(w_curr: np.ndarray, w_prev: np.ndarray, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Push coordinates closer than tau apart by tau/2 each, along sign(w_curr - w_prev).

    sign(0) counts as +1. Afterwards every |w_curr(j) - w_prev(j)| >= tau.
    """
    w_curr, w_prev = w_curr.copy(), w_prev.copy()
    if tau <= 0.0:
        return w_curr, w_prev
    gap = w_curr - w_prev
    close = np.abs(gap) < tau
    if np.any(close):
        direction = np.where(gap[close] >= 0.0, 1.0, -1.0)
        w_curr[close] += direction * (tau / 2.0)
        w_prev[close] -= direction * (tau / 2.0)
    return w_curr, w_prev


def mix(w_curr: np.ndarray, w_prev: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """
    alpha * w_curr + (1 - alpha) * w_prev, coordinate-wise.

    Written as w_curr - (1 - alpha)(w_curr - w_prev) and clamped to the
    segment, so alpha = 1 and identical states return w_curr exactly.
    """
    mixed = w_curr - (1.0 - alpha) * (w_curr - w_prev)
    return np.clip(mixed, np.minimum(w_curr, w_prev), np.maximum(w_curr, w_prev))


def mixing_weights(seed: int, k: int, d: int, alpha_fixed: Optional[float]) -> np.ndarray:
    """U[0, 1] weights for iteration k; the stream is drawn even when pinned."""
    alpha = stream(seed, k, MIX_STREAM).random(d)
    if alpha_fixed is not None:
        return np.full(d, float(alpha_fixed))
    return alpha


def modelmix_step(state: TrainerState, problem: Problem, cfg: MixConfig) -> TrainerState:
    """
    One ModelMix iteration.

    G is aggregated at w_{k-1}; the pair is then separated by tau_k, mixed
    with fresh uniform weights, and moved by -eta (G + noise). The new state
    holds (w_k, separated w_{k-1}).
    """
    _check_dims(state, problem)
    k = state.k + 1
    idx = poisson_sample(problem.n, cfg.q, stream(state.seed, k, SUBSAMPLE_STREAM))
    G = _gradient(problem, state.w_curr, idx, cfg)

    tau = cfg.tau_schedule.tau_at(k, cfg.T)
    w_curr, w_prev = enforce_separation(state.w_curr, state.w_prev, tau)
    alpha = mixing_weights(state.seed, k, state.d, cfg.alpha_fixed)
    mixed = mix(w_curr, w_prev, alpha)

    w_next = mixed - cfg.eta * (G + _noise(state.seed, k, state.d, cfg.sigma))
    gap = float(np.min(np.abs(w_curr - w_prev))) if state.d else float("nan")
    return replace(state, w_curr=w_next, w_prev=w_curr, k=k, batch_size=int(idx.size), min_coord_gap=gap)


def dpsgd_step(state: TrainerState, problem: Problem, cfg: MixConfig) -> TrainerState:
    """w_{k+1} = w_k - eta (G + noise) with per-sample clipping."""
    _check_dims(state, problem)
    k = state.k + 1
    idx = poisson_sample(problem.n, cfg.q, stream(state.seed, k, SUBSAMPLE_STREAM))
    G = _gradient(problem, state.w_curr, idx, cfg)
    w_next = state.w_curr - cfg.eta * (G + _noise(state.seed, k, state.d, cfg.sigma))
    gap = float(np.min(np.abs(state.w_curr - state.w_prev))) if state.d else float("nan")
    return replace(state, w_curr=w_next, w_prev=state.w_curr.copy(), k=k, batch_size=int(idx.size), min_coord_gap=gap)


def sgd_step(
    state: TrainerState,
    problem: Problem,
    eta: float,
    q: float = 1.0,
    rng: Optional[np.random.Generator] = None,
    aggregation: Aggregation = Aggregation.SUM,
) -> TrainerState:
    """Unclipped, noiseless minibatch step w - eta * sum_i grad f_i(w)."""
    _check_dims(state, problem)
    k = state.k + 1
    rng = rng if rng is not None else stream(state.seed, k, SUBSAMPLE_STREAM)
    idx = poisson_sample(problem.n, q, rng)
    if idx.size == 0:
        G = np.zeros(problem.d)
    else:
        G = problem.per_sample_grads(state.w_curr, idx).sum(axis=0)
    if idx.size and aggregation is Aggregation.MEAN:
        G = G / (problem.n * q)
    w_next = state.w_curr - eta * G
    return replace(state, w_curr=w_next, w_prev=state.w_curr.copy(), k=k, batch_size=int(idx.size))


def strawman_alternating_step(
    state_a: TrainerState,
    state_b: TrainerState,
    problem: Problem,
    cfg: MixConfig,
) -> Tuple[TrainerState, TrainerState]:
    """
    Two models that mix with each other instead of with their own past.

    Sub-step 2k-1: A' = alpha * A + (1 - alpha) * B - eta (grad(A) + noise).
    Sub-step 2k:   B' = alpha * A' + (1 - alpha) * B - eta (grad(B) + noise).
    Gradients are taken at the model's own pre-step iterate; the weights
    always multiply model A.
    """
    _check_dims(state_a, problem)
    _check_dims(state_b, problem)
    k = state_a.k + 1

    def sub_step(own: TrainerState, first: np.ndarray, second: np.ndarray, key: int) -> TrainerState:
        idx = poisson_sample(problem.n, cfg.q, stream(own.seed, key, SUBSAMPLE_STREAM))
        G = _gradient(problem, own.w_curr, idx, cfg)
        alpha = mixing_weights(own.seed, key, own.d, cfg.alpha_fixed)
        mixed = mix(first, second, alpha)
        w_next = mixed - cfg.eta * (G + _noise(own.seed, key, own.d, cfg.sigma))
        return replace(own, w_curr=w_next, w_prev=own.w_curr.copy(), k=k, batch_size=int(idx.size))

    new_a = sub_step(state_a, state_a.w_curr, state_b.w_curr, 2 * k - 1)
    new_b = sub_step(state_b, new_a.w_curr, state_b.w_curr, 2 * k)
    return new_a, new_b


# ----------------------------------------------------------------------------
# Runs
# ----------------------------------------------------------------------------

class Method(str, Enum):
    MODELMIX = "modelmix"
    DPSGD = "dpsgd"
    SGD = "sgd"
    STRAWMAN = "strawman"


@dataclass
class TrainingResult:
    """
    Output of a run.

    `iterates` holds every w_k when the release mode is "trajectory" and only
    the final one otherwise. `average` is sum_k (w_{k-1} + w_{k-2}) / 2T over the pairs each
    iteration started from.
    """
    method: Method
    final: np.ndarray
    average: np.ndarray
    iterates: List[np.ndarray]
    trajectory_hash: str
    records: List[dict] = field(default_factory=list)
    final_loss: float = float("nan")


class Trainer:
    """
    Runs T iterations of one method and records the trajectory.

    Usage:
        trainer = Trainer(problem, cfg, method=Method.MODELMIX, recorder=recorder)
        result = trainer.run()
    """

    def __init__(
        self,
        problem: Problem,
        cfg: MixConfig,
        method: Method = Method.MODELMIX,
        w0: Optional[np.ndarray] = None,
        recorder=None,
    ):
        if method is Method.MODELMIX and not cfg.mixing:
            method = Method.DPSGD
        self.problem = problem
        self.cfg = cfg
        self.method = Method(method)
        self.w0 = problem.initial_point() if w0 is None else problem.check_point(w0)
        self.recorder = recorder

    def _advance(self, state: TrainerState, partner: Optional[TrainerState]):
        if self.method is Method.MODELMIX:
            return modelmix_step(state, self.problem, self.cfg), None
        if self.method is Method.DPSGD:
            return dpsgd_step(state, self.problem, self.cfg), None
        if self.method is Method.SGD:
            return sgd_step(state, self.problem, self.cfg.eta, self.cfg.q, aggregation=self.cfg.aggregation), None
        return strawman_alternating_step(state, partner, self.problem, self.cfg)

    def run(self) -> TrainingResult:
        cfg = self.cfg
        state = TrainerState.start(self.w0, seed=cfg.seed)
        partner = TrainerState.start(self.w0, seed=cfg.seed + 1) if self.method is Method.STRAWMAN else None

        digest = hashlib.sha1()
        total = np.zeros(self.problem.d)
        iterates: List[np.ndarray] = []
        records: List[dict] = []

        for _ in range(cfg.T):
            total += 0.5 * (state.w_curr + state.w_prev)
            state, partner = self._advance(state, partner)
            digest.update(np.ascontiguousarray(state.w_curr, dtype="<f8").tobytes())
            if cfg.release is ReleaseMode.TRAJECTORY:
                iterates.append(state.w_curr.copy())
            if state.k % cfg.log_every == 0 or state.k == cfg.T:
                record = {
                    "k": state.k,
                    "loss": self.problem.loss(state.w_curr),
                    "grad_norm": float(np.linalg.norm(self.problem.full_grad(state.w_curr))),
                    "min_coord_gap": state.min_coord_gap,
                    "batch_size": state.batch_size,
                }
                records.append(record)
                if self.recorder is not None:
                    self.recorder.record(record)

        if cfg.release is ReleaseMode.FINAL or not iterates:
            iterates = [state.w_curr.copy()]
        final_loss = self.problem.loss(state.w_curr)
        annotate(method=self.method.value, iterations=cfg.T, final_loss=final_loss)
        return TrainingResult(
            method=self.method,
            final=state.w_curr.copy(),
            average=total / cfg.T if cfg.T else state.w_curr.copy(),
            iterates=iterates,
            trajectory_hash=digest.hexdigest(),
            records=records,
            final_loss=final_loss,
        )


def accountant_config_from_mix(
    mix_cfg: MixConfig,
    n: int,
    delta: float = 1e-5,
    family: KernelFamily = KernelFamily.GAUSSIAN,
) -> AccountantConfig:
    """
    The mechanism a run actually executed, in accountant units.

    Sensitivity is c for sum aggregation and c / (n q) for mean aggregation.
    Pinned mixing weights or disabled mixing contribute no uniform component.
    """
    c = mix_cfg.clip.c
    if not np.isfinite(c):
        raise ContractError("runs without a finite clip threshold have unbounded sensitivity")
    if mix_cfg.sigma <= 0.0:
        raise ContractError("runs without noise cannot be accounted")
    if mix_cfg.aggregation is Aggregation.MEAN:
        if mix_cfg.q == 0.0:
            raise ContractError("mean aggregation needs a positive sampling rate")
        c = c / (n * mix_cfg.q)
    randomised = mix_cfg.mixing and mix_cfg.alpha_fixed is None
    return AccountantConfig(
        q=mix_cfg.q,
        sigma=mix_cfg.sigma,
        sensitivity=c,
        p=mix_cfg.clip.p,
        tau=mix_cfg.tau if randomised else 0.0,
        eta=mix_cfg.eta,
        T=mix_cfg.T,
        delta=delta,
        family=family,
        n=n,
    )
