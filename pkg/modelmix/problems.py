"""
ERM Problems

Desk-scale empirical risk minimisation instances with vectorised per-sample
gradient oracles and smoothness metadata:

    LeastSquares   F(w) = (1/2n) sum (<w, x_i> - y_i)^2
    Logistic       F(w) = (1/n) sum log(1 + exp(-y_i <w, x_i>)), labels in {-1, +1}
    TanhMLP        squared loss of a tanh network (non-convex)
    Quadratic      F(w) = ||w - center||^2 / 2 with a single sample

plus the three-sample clipping pathology, the clipping-bias oracle, tail
constant estimation and binary dataset snapshots.
"""
import json
import math
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special

from .clipping import ClipConfig, clip_rows
from .errors import ContractError, DegenerateGradientError

# Per-sample gradient rows are materialised in chunks of this many samples.
GRAD_CHUNK = 4096

FD_STEP = 1e-6
FD_RTOL = 1e-5
_SNAPSHOT_HEADER = "<u8"


class Problem(ABC):
    """
    An ERM instance exposing per-sample gradients.

    Subclasses implement `per_sample_losses` and `per_sample_grads` over an
    index array; everything else derives from those two.

    Attributes:
        name: Registry name of the problem family
        n: Number of samples
        d: Parameter dimension
        beta: Smoothness constant of F, when known
        lipschitz: Lipschitz constant of the per-sample losses, when known
        optimum: Closed-form minimiser, when known
        seed: Seed the synthetic data came from, when any
    """

    name: str = "problem"

    def __init__(
        self,
        n: int,
        d: int,
        beta: Optional[float] = None,
        lipschitz: Optional[float] = None,
        optimum: Optional[np.ndarray] = None,
        seed: Optional[int] = None,
    ):
        if n < 1 or d < 1:
            raise ContractError(f"problem shapes must be positive, got n={n}, d={d}")
        self.n = int(n)
        self.d = int(d)
        self.beta = beta
        self.lipschitz = lipschitz
        self.optimum = None if optimum is None else np.asarray(optimum, dtype=float)
        self.seed = seed

    # -- oracles -------------------------------------------------------------

    @abstractmethod
    def per_sample_losses(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Losses f(w, x_i, y_i) for each i in idx."""

    @abstractmethod
    def per_sample_grads(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """(len(idx), d) matrix of per-sample gradients."""

    def per_sample_grad(self, w: np.ndarray, i: int) -> np.ndarray:
        return self.per_sample_grads(w, np.array([i]))[0]

    def full_grad(self, w: np.ndarray) -> np.ndarray:
        """(1/n) sum_i per_sample_grad(w, i)."""
        w = self.check_point(w)
        total = np.zeros(self.d)
        for start in range(0, self.n, GRAD_CHUNK):
            idx = np.arange(start, min(start + GRAD_CHUNK, self.n))
            total += self.per_sample_grads(w, idx).sum(axis=0)
        return total / self.n

    def loss(self, w: np.ndarray) -> float:
        w = self.check_point(w)
        total = 0.0
        for start in range(0, self.n, GRAD_CHUNK):
            idx = np.arange(start, min(start + GRAD_CHUNK, self.n))
            total += float(self.per_sample_losses(w, idx).sum())
        return total / self.n

    def optimal_loss(self) -> Optional[float]:
        return None if self.optimum is None else self.loss(self.optimum)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.d)

    def check_point(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.d,):
            raise ContractError(f"{self.name}: expected a point of shape ({self.d},), got {w.shape}")
        return w

    # -- snapshots -----------------------------------------------------------

    def data(self) -> Tuple[np.ndarray, np.ndarray]:
        """(features, labels) backing the problem."""
        raise ContractError(f"{self.name} has no dataset to snapshot")

    def snapshot_extra(self) -> Dict[str, Any]:
        return {}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, d={self.d})"


class _DataProblem(Problem):
    """Problem backed by a feature matrix X (n, m) and label vector y (n,)."""

    def __init__(self, X: np.ndarray, y: np.ndarray, d: int, **kwargs):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ContractError(f"features {X.shape} and labels {y.shape} do not line up")
        super().__init__(n=X.shape[0], d=d, **kwargs)
        self.X = X
        self.y = y

    def data(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.X, self.y


class LeastSquares(_DataProblem):
    name = "least-squares"

    def __init__(self, X: np.ndarray, y: np.ndarray, seed: Optional[int] = None):
        X = np.asarray(X, dtype=float)
        second_moment = X.T @ X / X.shape[0]
        beta = float(np.linalg.eigvalsh(second_moment)[-1])
        optimum, *_ = np.linalg.lstsq(X, np.asarray(y, dtype=float), rcond=None)
        super().__init__(X, y, d=X.shape[1], beta=beta, optimum=optimum, seed=seed)

    def _residuals(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return self.X[idx] @ w - self.y[idx]

    def per_sample_losses(self, w, idx):
        return 0.5 * self._residuals(w, idx) ** 2

    def per_sample_grads(self, w, idx):
        w = self.check_point(w)
        return self._residuals(w, idx)[:, None] * self.X[idx]


class Logistic(_DataProblem):
    name = "logistic"

    def __init__(self, X: np.ndarray, y: np.ndarray, seed: Optional[int] = None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ContractError("logistic labels must be -1 or +1")
        beta = 0.25 * float(np.linalg.eigvalsh(X.T @ X / X.shape[0])[-1])
        super().__init__(X, y, d=X.shape[1], beta=beta, seed=seed)

    def _margins(self, w, idx):
        return self.y[idx] * (self.X[idx] @ w)

    def per_sample_losses(self, w, idx):
        return np.logaddexp(0.0, -self._margins(w, idx))

    def per_sample_grads(self, w, idx):
        w = self.check_point(w)
        weight = -self.y[idx] * special.expit(-self._margins(w, idx))
        return weight[:, None] * self.X[idx]


class TanhMLP(_DataProblem):
    """
    Fully connected tanh network with a scalar linear output and squared loss.

    Parameters are packed layer by layer as (weights row-major, bias).
    """
    name = "mlp"

    def __init__(self, X: np.ndarray, y: np.ndarray, widths: Sequence[int], seed: Optional[int] = None):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or widths[-1] != 1 or any(w < 1 for w in widths):
            raise ContractError(f"mlp widths must run from input dim to a scalar output, got {widths}")
        X = np.asarray(X, dtype=float)
        if X.shape[1] != widths[0]:
            raise ContractError(f"features have {X.shape[1]} columns, widths start at {widths[0]}")
        self.widths = widths
        self.shapes = [(w_out, w_in) for w_in, w_out in zip(widths, widths[1:])]
        d = sum(o * i + o for o, i in self.shapes)
        super().__init__(X, y, d=d, seed=seed)

    def unpack(self, w: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        layers, offset = [], 0
        for out_dim, in_dim in self.shapes:
            W = w[offset:offset + out_dim * in_dim].reshape(out_dim, in_dim)
            offset += out_dim * in_dim
            b = w[offset:offset + out_dim]
            offset += out_dim
            layers.append((W, b))
        return layers

    def _forward(self, w, idx):
        activations = [self.X[idx]]
        layers = self.unpack(w)
        for depth, (W, b) in enumerate(layers):
            z = activations[-1] @ W.T + b
            activations.append(z if depth == len(layers) - 1 else np.tanh(z))
        return layers, activations

    def per_sample_losses(self, w, idx):
        w = self.check_point(w)
        _, activations = self._forward(w, idx)
        return 0.5 * (activations[-1][:, 0] - self.y[idx]) ** 2

    def per_sample_grads(self, w, idx):
        w = self.check_point(w)
        layers, activations = self._forward(w, idx)
        delta = activations[-1] - self.y[idx][:, None]
        blocks: List[np.ndarray] = []
        for depth in range(len(layers) - 1, -1, -1):
            W, _ = layers[depth]
            a_in = activations[depth]
            grad_W = delta[:, :, None] * a_in[:, None, :]
            blocks.append(delta)
            blocks.append(grad_W.reshape(len(idx), -1))
            if depth > 0:
                delta = (delta @ W) * (1.0 - a_in ** 2)
        return np.concatenate(blocks[::-1], axis=1)

    def initial_point(self) -> np.ndarray:
        rng = np.random.default_rng(0 if self.seed is None else self.seed + 1)
        parts = []
        for out_dim, in_dim in self.shapes:
            parts.append(rng.normal(0.0, 1.0 / math.sqrt(in_dim), size=out_dim * in_dim))
            parts.append(np.zeros(out_dim))
        return np.concatenate(parts)

    def snapshot_extra(self) -> Dict[str, Any]:
        return {"widths": list(self.widths)}


class Quadratic(Problem):
    """Single-sample F(w) = ||w - center||^2 / 2; beta = 1, optimum = center."""
    name = "quadratic"

    def __init__(self, center: np.ndarray):
        center = np.asarray(center, dtype=float)
        super().__init__(n=1, d=center.size, beta=1.0, optimum=center)
        self.center = center

    def per_sample_losses(self, w, idx):
        w = self.check_point(w)
        return np.full(len(idx), 0.5 * float(np.sum((w - self.center) ** 2)))

    def per_sample_grads(self, w, idx):
        w = self.check_point(w)
        return np.tile(w - self.center, (len(idx), 1))


# ----------------------------------------------------------------------------
# Factories
# ----------------------------------------------------------------------------

def make_least_squares(n: int, d: int, seed: int = 0, noise: float = 0.1) -> LeastSquares:
    """Gaussian features, labels from a planted linear model plus noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    planted = rng.standard_normal(d)
    y = X @ planted + noise * rng.standard_normal(n)
    problem = LeastSquares(X, y, seed=seed)
    check_gradients(problem, seed=seed)
    return problem


def make_logistic(n: int, d: int, seed: int = 0, noise: float = 0.5) -> Logistic:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    planted = rng.standard_normal(d)
    y = np.where(X @ planted + noise * rng.standard_normal(n) >= 0.0, 1.0, -1.0)
    problem = Logistic(X, y, seed=seed)
    check_gradients(problem, seed=seed)
    return problem


def make_mlp(widths: Sequence[int], n: int, seed: int = 0, noise: float = 0.1) -> TanhMLP:
    """Regression targets from a random planted network of the same shape."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, int(widths[0])))
    planted = TanhMLP(X, np.zeros(n), widths)
    w_true = rng.standard_normal(planted.d)
    _, activations = planted._forward(w_true, np.arange(n))
    y = activations[-1][:, 0] + noise * rng.standard_normal(n)
    problem = TanhMLP(X, y, widths, seed=seed)
    check_gradients(problem, seed=seed)
    return problem


def make_quadratic(d: int, center: Optional[Sequence[float]] = None) -> Quadratic:
    return Quadratic(np.zeros(d) if center is None else np.asarray(center, dtype=float))


def example_31() -> LeastSquares:
    """
    Three one-dimensional samples -20, -10, 90 with f(w, x) = (w - x)^2 / 2.

    The minimiser is 20 while the clipped gradient at c = 1 averages 1/3
    everywhere between the samples.
    """
    return LeastSquares(np.ones((3, 1)), np.array([-20.0, -10.0, 90.0]))


def check_gradients(problem: Problem, n_points: int = 10, seed: int = 0) -> None:
    """
    Compare per-sample gradients with central differences at random points.

    Raises:
        ContractError: If any point disagrees beyond FD_RTOL
    """
    rng = np.random.default_rng(seed)
    base = problem.initial_point()
    for _ in range(n_points):
        w = base + rng.standard_normal(problem.d)
        i = np.array([int(rng.integers(problem.n))])
        grad = problem.per_sample_grads(w, i)[0]
        fd = np.empty(problem.d)
        for j in range(problem.d):
            step = np.zeros(problem.d)
            step[j] = FD_STEP
            up = problem.per_sample_losses(w + step, i)[0]
            down = problem.per_sample_losses(w - step, i)[0]
            fd[j] = (up - down) / (2.0 * FD_STEP)
        scale = max(float(np.linalg.norm(grad)), 1.0)
        if float(np.linalg.norm(fd - grad)) > FD_RTOL * scale:
            raise ContractError(f"{problem.name}: per-sample gradient disagrees with finite differences")


# ----------------------------------------------------------------------------
# Clipping bias and sampling noise
# ----------------------------------------------------------------------------

def expected_clipped_gradient(problem: Problem, w: np.ndarray, c: float) -> np.ndarray:
    """Exact mean over all n samples of clip_l2(per_sample_grad(w, i), c)."""
    if not c > 0:
        raise ContractError(f"clip threshold must be positive, got {c}")
    w = problem.check_point(w)
    cfg = ClipConfig(c=c)
    total = np.zeros(problem.d)
    for start in range(0, problem.n, GRAD_CHUNK):
        idx = np.arange(start, min(start + GRAD_CHUNK, problem.n))
        total += clip_rows(problem.per_sample_grads(w, idx), cfg).sum(axis=0)
    return total / problem.n


class GradStats(BaseModel):
    """Sampling-noise statistics of per-sample gradients at one point."""
    model_config = ConfigDict(frozen=True)

    kappa_hat: float = Field(gt=0.0)
    sampling_noise_std: float = Field(ge=0.0)
    n_draws: int
    tail_fraction: float


def fit_exponential_tail(deviations: Sequence[float], tail_fraction: float = 0.5) -> float:
    """
    Maximum-likelihood exponential scale of the upper tail.

    Keeps the top `tail_fraction` of the sample and averages the excesses over
    its smallest kept value; by memorylessness these excesses are Exp(kappa).

    Raises:
        DegenerateGradientError: If the tail carries no spread
    """
    if not 0.0 < tail_fraction <= 1.0:
        raise ContractError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    values = np.sort(np.asarray(deviations, dtype=float))[::-1]
    if values.size < 2:
        raise DegenerateGradientError("need at least two deviations to fit a tail")
    m = max(2, int(math.ceil(tail_fraction * values.size)))
    top = values[:m]
    kappa = float(np.mean(top[:-1] - top[-1]))
    if not kappa > 0.0:
        raise DegenerateGradientError("per-sample gradient deviations are all equal; no tail to fit")
    return kappa


def estimate_kappa(
    problem: Problem,
    w: np.ndarray,
    n_draws: int = 1000,
    seed: int = 0,
    tail_fraction: float = 0.5,
) -> GradStats:
    """
    Estimate the sub-exponential tail constant of ||grad f_i(w) - grad F(w)||.

    Uses every sample when n <= n_draws, otherwise a seeded subset of
    n_draws distinct samples. sampling_noise_std is the root mean square of
    the deviations.
    """
    if n_draws < 1000:
        raise ContractError(f"n_draws must be at least 1000, got {n_draws}")
    w = problem.check_point(w)
    if problem.n <= n_draws:
        idx = np.arange(problem.n)
    else:
        idx = np.sort(np.random.default_rng(seed).choice(problem.n, size=n_draws, replace=False))
    deviations = np.linalg.norm(problem.per_sample_grads(w, idx) - problem.full_grad(w), axis=1)
    kappa = fit_exponential_tail(deviations, tail_fraction)
    return GradStats(
        kappa_hat=kappa,
        sampling_noise_std=float(np.sqrt(np.mean(deviations ** 2))),
        n_draws=int(idx.size),
        tail_fraction=tail_fraction,
    )


# ----------------------------------------------------------------------------
# Snapshots
# ----------------------------------------------------------------------------

def save_snapshot(problem: Problem, path: Union[str, Path]) -> Path:
    """
    Write a replayable dataset snapshot.

    Layout: 8-byte little-endian header length, UTF-8 JSON header
    {n, d, family, seed, shapes, extra}, then float64 features and labels.
    """
    X, y = problem.data()
    header = {
        "n": problem.n,
        "d": problem.d,
        "family": problem.name,
        "seed": problem.seed,
        "shapes": {"features": list(X.shape), "labels": list(y.shape)},
        "extra": problem.snapshot_extra(),
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(np.array([len(encoded)], dtype=_SNAPSHOT_HEADER).tobytes())
        fh.write(encoded)
        fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(y, dtype="<f8").tobytes())
    return path


def load_snapshot(path: Union[str, Path]) -> Problem:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ContractError(f"{path}: truncated snapshot")
    header_len = int(np.frombuffer(raw[:8], dtype=_SNAPSHOT_HEADER)[0])
    header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    body = np.frombuffer(raw[8 + header_len:], dtype="<f8")

    x_shape = tuple(header["shapes"]["features"])
    x_size = int(np.prod(x_shape))
    if body.size != x_size + header["n"]:
        raise ContractError(f"{path}: payload size does not match header")
    X = body[:x_size].reshape(x_shape).copy()
    y = body[x_size:].copy()

    family, seed = header["family"], header.get("seed")
    if family == LeastSquares.name:
        return LeastSquares(X, y, seed=seed)
    if family == Logistic.name:
        return Logistic(X, y, seed=seed)
    if family == TanhMLP.name:
        return TanhMLP(X, y, header["extra"]["widths"], seed=seed)
    raise ContractError(f"{path}: unknown problem family {family!r}")
