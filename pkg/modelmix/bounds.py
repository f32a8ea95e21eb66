"""
Convergence bound evaluators

Explicit right-hand sides of the ModelMix utility guarantees and the
clipping-threshold rule for sub-exponential sampling noise. These are
calculators: every constant is caller supplied, nothing is estimated here.
"""
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .errors import ContractError


def recommend_clip_threshold(
    kappa: float,
    n: int,
    d: int,
    eps: float,
    delta: float,
    psi: float = 1.0,
) -> float:
    """
    Smallest clip threshold the non-convex guarantee allows.

    max(4 kappa log 10, -psi kappa log(kappa) log(sqrt(d log(1/delta)) / (n eps))),
    with the second term floored at zero where its sign flips.
    """
    if min(kappa, n, d, eps, psi) <= 0 or not 0.0 < delta < 1.0:
        raise ContractError("kappa, n, d, eps, psi must be positive and delta in (0, 1)")
    first = 4.0 * kappa * math.log(10.0)
    second = -psi * kappa * math.log(kappa) * math.log(math.sqrt(d * math.log(1.0 / delta)) / (n * eps))
    return max(first, max(0.0, second))


class ConvexBoundParams(BaseModel):
    """
    Inputs of the convex (Lipschitz, smooth) utility bound.

    gamma is eta * n * q * sqrt(T); noise moments are per-iteration
    E||Delta||^2 and E||Delta|| (sqrt(d) sigma and d sigma^2 for Gaussian noise).
    """
    W0: float = Field(ge=0.0)
    taus: Tuple[float, ...] = ()
    d: int = Field(ge=1)
    gamma: float = Field(gt=0.0)
    T: int = Field(ge=1)
    q: float = Field(gt=0.0, le=1.0)
    n: int = Field(ge=1)
    lipschitz: Optional[float] = Field(default=None, ge=0.0)
    beta: Optional[float] = Field(default=None, ge=0.0)
    noise_second_moment: float = Field(default=0.0, ge=0.0)
    noise_first_moment: Optional[float] = Field(default=None, ge=0.0)

    @classmethod
    def from_run(
        cls,
        *,
        W0: float,
        eta: float,
        n: int,
        q: float,
        T: int,
        d: int,
        sigma: float,
        taus: Sequence[float],
        lipschitz: Optional[float],
        beta: Optional[float],
    ) -> "ConvexBoundParams":
        return cls(
            W0=W0,
            taus=tuple(float(t) for t in taus),
            d=d,
            gamma=eta * n * q * math.sqrt(T),
            T=T,
            q=q,
            n=n,
            lipschitz=lipschitz,
            beta=beta,
            noise_second_moment=d * sigma * sigma,
            noise_first_moment=math.sqrt(d) * sigma,
        )


def thm31_bound(params: ConvexBoundParams) -> float:
    """
    Explicit bound on E[F(w_bar) - F(w*)] for the convex case.

        (3 W0^2 + sum_k d tau_k^2 / 12) / (2 gamma sqrt T)
        + gamma (L^2/q^2 + E||D||^2 / (n^2 q^2)) / sqrt T
        + beta (12 W0^2 / 8T + 2 gamma W0 (L + E||D|| / n) / (q T^1.5)
                + 11 gamma^2 (L^2 + E||D||^2 / n^2) / (8 T q^2))

    Raises:
        ContractError: If the Lipschitz or smoothness constant is missing
    """
    if params.lipschitz is None or params.beta is None:
        raise ContractError("the convex bound needs both the Lipschitz and the smoothness constant")
    L, beta = params.lipschitz, params.beta
    W0, gamma, T, q, n, d = params.W0, params.gamma, params.T, params.q, params.n, params.d
    second = params.noise_second_moment
    first = params.noise_first_moment if params.noise_first_moment is not None else math.sqrt(second)
    tau_sum = float(np.sum(np.square(params.taus))) if params.taus else 0.0
    root_t = math.sqrt(T)

    drift = (3.0 * W0 ** 2 + d * tau_sum / 12.0) / (2.0 * gamma * root_t)
    variance = gamma * (L ** 2 / q ** 2 + second / (n ** 2 * q ** 2)) / root_t
    smooth = beta * (
        12.0 * W0 ** 2 / (8.0 * T)
        + 2.0 * gamma * W0 * (L + first / n) / (q * T ** 1.5)
        + 11.0 * gamma ** 2 * (L ** 2 + second / n ** 2) / (8.0 * T * q ** 2)
    )
    return drift + variance + smooth


class NonConvexBoundParams(BaseModel):
    """Inputs of the non-convex clipped-gradient bound; `v` is the noise-mechanism constant."""
    c: float = Field(gt=0.0)
    beta: Optional[float] = Field(default=None, gt=0.0)
    d: int = Field(ge=1)
    n: int = Field(ge=1)
    q: float = Field(gt=0.0, le=1.0)
    eps: float = Field(gt=0.0)
    delta: float = Field(gt=0.0, lt=1.0)
    loss_range: float = Field(gt=0.0)
    initial_gap: float = Field(default=0.0, ge=0.0)
    taus: Tuple[float, ...] = ()
    v: float = Field(default=1.0, ge=0.0)


def thm32_metric(grad_norms: Sequence[float], c: float) -> float:
    """Mean over the trajectory of min(9/20 ||grad F||^2, c/20 ||grad F||)."""
    norms = np.asarray(grad_norms, dtype=float)
    if norms.size == 0:
        raise ContractError("the trajectory metric needs at least one gradient norm")
    return float(np.mean(np.minimum(0.45 * norms ** 2, c / 20.0 * norms)))


def thm32_bound(params: NonConvexBoundParams) -> float:
    if params.beta is None:
        raise ContractError("the non-convex bound needs the smoothness constant")
    c, beta, d, n, q = params.c, params.beta, params.d, params.n, params.q
    n_eps = n * params.eps
    log_inv = math.log(1.0 / params.delta)
    R = params.loss_range
    W = params.initial_gap
    tau_sum = float(np.sum(np.square(params.taus))) if params.taus else 0.0

    first = (params.v / 2.0 + 2.5) * c * math.sqrt(R * (101.0 / 12.0) * beta * d * log_inv) / n_eps
    second = 28.0 * c * beta * d * log_inv * W / (12.0 * q * n_eps ** 2)
    third = (
        c * d * log_inv * math.sqrt(101.0 / 12.0) * beta ** 1.5 / (q * n_eps * math.sqrt(R))
        * (d * tau_sum / 12.0 + 21.0 * W ** 2 / 24.0)
    )
    return first + second + third


def thm32_metric_and_bound(grad_norms: Sequence[float], params: NonConvexBoundParams) -> Tuple[float, float]:
    """(left side from logged full-batch gradient norms, right side of the guarantee)."""
    return thm32_metric(grad_norms, params.c), thm32_bound(params)


def loglog_slope(Ts: Sequence[float], gaps: Sequence[float]) -> float:
    """Least-squares slope of log(gap) against log(T)."""
    Ts = np.asarray(Ts, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if Ts.size < 2 or np.any(gaps <= 0.0) or np.any(Ts <= 0.0):
        raise ContractError("slope fit needs at least two positive (T, gap) pairs")
    slope, _ = np.polyfit(np.log(Ts), np.log(gaps), 1)
    return float(slope)
