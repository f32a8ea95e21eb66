"""
Monte-Carlo oracle

Independent check of the accountant: samples the mixture kernels by direct
simulation (base noise plus a uniform draw) instead of integrating their
densities, and estimates likelihood-ratio moments and pointwise privacy
losses from those samples.
"""
import math
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..accountant import log_moments
from ..core.decorators import record_event, trace_function
from ..dist_kernel import KernelFamily, MixtureKernel, log_likelihood_ratio, log_pdf
from ..errors import ContractError

MIN_SAMPLES = 100_000
QUADRATURE_FLOOR = 1e-9
CHUNK = 1_000_000
POINTWISE_QUANTILES = (0.5, 0.9, 0.99, 0.999)


class MomentEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    estimate: float
    std_error: float
    n_samples: int


class OracleCheck(BaseModel):
    """Monte-Carlo moment against the accountant's quadrature value."""
    model_config = ConfigDict(frozen=True)

    k: int
    estimate: float
    std_error: float
    quadrature: float
    z_score: float
    passed: bool


class PointwiseLoss(BaseModel):
    """Moments and upper quantiles of eps(o) = log P0(o) - log P1(o) for o ~ P0."""
    model_config = ConfigDict(frozen=True)

    mean: float
    variance: float
    quantiles: Dict[str, float]
    n_samples: int


def sample_kernel(kernel: MixtureKernel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from the kernel as base noise + U[-W, W] + shift."""
    if kernel.family is KernelFamily.GAUSSIAN:
        base = rng.normal(0.0, kernel.scale, size)
    else:
        base = rng.laplace(0.0, kernel.scale, size)
    if kernel.halfwidth > 0.0:
        base = base + rng.uniform(-kernel.halfwidth, kernel.halfwidth, size)
    return base + kernel.shift


def _check_samples(n_samples: int) -> None:
    if n_samples < MIN_SAMPLES:
        raise ContractError(f"n_samples must be at least {MIN_SAMPLES}, got {n_samples}")


def _chunks(n_samples: int, chunk: int):
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        yield size
        done += size


@trace_function(name="oracle.mc_validate_moments")
def mc_validate_moments(
    p0: MixtureKernel,
    p1: MixtureKernel,
    k_list: Sequence[int],
    n_samples: int = 10_000_000,
    seed: int = 0,
    chunk: int = CHUNK,
    importance: bool = False,
) -> List[MomentEstimate]:
    """
    Estimate A_k = E_{z~P0}[(P1(z)/P0(z))^k] for each k by simulation.

    Plain runs draw z ~ P0. With `importance` each order draws from the
    even mixture of P0 and P0 translated by k times the shift (the peak of
    the tilted integrand P0^(1-k) P1^k) and reweights, which keeps the
    weights bounded at high orders and small noise. Chunk statistics are
    merged with the pairwise mean/M2 update, so memory stays bounded.
    """
    _check_samples(n_samples)
    rng = np.random.default_rng(seed)
    shift = p1.shift - p0.shift

    estimates = []
    for k in k_list:
        tilted = p0.with_shift(p0.shift + k * shift)
        count, mean, m2 = 0, 0.0, 0.0
        for size in _chunks(n_samples, chunk):
            if importance:
                pick = rng.random(size) < 0.5
                z = np.where(pick, sample_kernel(p0, size, rng), sample_kernel(tilted, size, rng))
            else:
                z = sample_kernel(p0, size, rng)
            l0 = np.asarray(log_pdf(p0, z))
            log_f = l0 + k * (np.asarray(log_pdf(p1, z)) - l0)
            if importance:
                log_f = log_f - (np.logaddexp(l0, np.asarray(log_pdf(tilted, z))) - math.log(2.0))
            else:
                log_f = log_f - l0
            values = np.exp(log_f)
            c_mean = float(values.mean())
            c_m2 = float(((values - c_mean) ** 2).sum())
            total = count + size
            delta = c_mean - mean
            mean += delta * size / total
            m2 += c_m2 + delta ** 2 * count * size / total
            count = total
        estimates.append(MomentEstimate(
            k=int(k), estimate=mean, std_error=math.sqrt(m2 / (count - 1) / count), n_samples=count,
        ))
    return estimates


def compare_with_quadrature(
    p0: MixtureKernel,
    p1: MixtureKernel,
    estimates: Sequence[MomentEstimate],
    z_max: float = 3.0,
) -> List[OracleCheck]:
    """Flag every moment whose Monte-Carlo estimate sits more than z_max standard errors off."""
    ks = [e.k for e in estimates]
    quadrature = np.exp(log_moments(p0, p1, ks, analytic=False))
    checks = []
    for est, quad in zip(estimates, quadrature):
        # Floor at the quadrature tolerance for near-constant weights
        z = (est.estimate - quad) / math.hypot(est.std_error, QUADRATURE_FLOOR * quad)
        checks.append(OracleCheck(
            k=est.k,
            estimate=est.estimate,
            std_error=est.std_error,
            quadrature=float(quad),
            z_score=float(z),
            passed=abs(z) <= z_max,
        ))
        if abs(z) > z_max:
            record_event("oracle.disagreement", k=est.k, z_score=float(z))
    return checks


@trace_function(name="oracle.mc_pointwise_loss")
def mc_pointwise_loss(
    p0: MixtureKernel,
    p1: MixtureKernel,
    n_samples: int = 1_000_000,
    seed: int = 0,
    chunk: int = CHUNK,
) -> PointwiseLoss:
    """Empirical mean, variance and upper quantiles of the pointwise loss under P0."""
    _check_samples(n_samples)
    rng = np.random.default_rng(seed)
    losses = np.concatenate([
        np.asarray(log_likelihood_ratio(p0, p1, sample_kernel(p0, size, rng)))
        for size in _chunks(n_samples, chunk)
    ])
    quantiles = np.quantile(losses, POINTWISE_QUANTILES)
    return PointwiseLoss(
        mean=float(losses.mean()),
        variance=float(losses.var()),
        quantiles={f"{q:g}": float(v) for q, v in zip(POINTWISE_QUANTILES, quantiles)},
        n_samples=int(losses.size),
    )


def endpoint_kernels(sigma: float, sensitivity: float, p: int, halfwidth: float,
                     family: KernelFamily = KernelFamily.GAUSSIAN) -> Tuple[MixtureKernel, MixtureKernel]:
    """(P0, P1) for one accounting cell."""
    p0 = MixtureKernel(family=family, scale=sigma, shift=0.0, halfwidth=halfwidth)
    return p0, p0.with_shift(sensitivity / math.sqrt(p))
