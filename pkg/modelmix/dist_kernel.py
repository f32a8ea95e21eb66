"""
Mixture Noise Kernels

One-dimensional laws of base noise (Gaussian or Laplace) convolved with a
centred uniform perturbation U[-W, W]. These are the densities the privacy
accountant integrates against, so every routine works in the log domain and
stays finite far out in the tails.
"""
import math
from enum import Enum
from typing import Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import special, stats

from .errors import ContractError

ArrayLike = Union[float, np.ndarray]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_LN2 = math.log(2.0)


class KernelFamily(str, Enum):
    """Base noise family"""
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class MixtureKernel(BaseModel):
    """
    Base noise convolved with U[-halfwidth, halfwidth], centred at `shift`.

    `scale` is the Gaussian standard deviation or the Laplace scale 1/lambda,
    all quantities in gradient units. halfwidth = tau / (2 * eta).
    """
    model_config = ConfigDict(frozen=True)

    family: KernelFamily = KernelFamily.GAUSSIAN
    scale: float = Field(gt=0)
    shift: float = 0.0
    halfwidth: float = Field(default=0.0, ge=0)

    @field_validator("scale", "shift", "halfwidth")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("kernel parameters must be finite")
        return value

    def with_shift(self, shift: float) -> "MixtureKernel":
        """Same law translated to a new centre."""
        return self.model_copy(update={"shift": float(shift)})


# ----------------------------------------------------------------------------
# Stable log-domain primitives
# ----------------------------------------------------------------------------

def _log1mexp(x: np.ndarray) -> np.ndarray:
    """log(1 - exp(x)) for x <= 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > -_LN2, np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def _log_normal_sf(x: np.ndarray) -> np.ndarray:
    """
    log P(Z > x) for a standard normal Z.

    Right of zero the scaled complementary error function keeps the value
    exact far into the tail; left of zero the survival is close to one.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x) / _SQRT2
    with np.errstate(divide="ignore", invalid="ignore"):
        right = np.log(0.5 * special.erfcx(ax)) - ax * ax
        left = np.log1p(-0.5 * special.erfc(ax))
    return np.where(x >= 0, right, left)


def _log_normal_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log P(a < Z < b) for a < b, without cancellation in either tail."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        la, lb = _log_normal_sf(a), _log_normal_sf(b)
        right = la + _log1mexp(lb - la)

        lnb, lna = _log_normal_sf(-b), _log_normal_sf(-a)
        left = lnb + _log1mexp(lna - lnb)

        outer = 0.5 * special.erfc(np.abs(a) / _SQRT2) + 0.5 * special.erfc(np.abs(b) / _SQRT2)
        middle = np.log1p(-outer)
    return np.where(a >= 0, right, np.where(b <= 0, left, middle))


def _log_cosh(t: np.ndarray) -> np.ndarray:
    at = np.abs(t)
    return at + np.log1p(np.exp(-2.0 * at)) - _LN2


def _log_sinh(t: float) -> float:
    """log sinh(t) for t > 0."""
    return t + float(_log1mexp(np.asarray(-2.0 * t))) - _LN2


def _check_finite(o: np.ndarray) -> None:
    if not np.all(np.isfinite(o)):
        raise ContractError("kernel evaluated at a non-finite point")


def _pack(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values) if scalar else values


# ----------------------------------------------------------------------------
# Densities
# ----------------------------------------------------------------------------

def log_pdf(kernel: MixtureKernel, o: ArrayLike) -> ArrayLike:
    """
    Log-density of the mixture kernel at `o` (scalar or array).

    Finite out to hundreds of scales from the centre, so log-ratios of two
    kernels stay meaningful wherever a moment integral can reach.
    """
    scalar = np.ndim(o) == 0
    o = np.asarray(o, dtype=float)
    _check_finite(o)

    y = o - kernel.shift
    s, w = kernel.scale, kernel.halfwidth

    if kernel.family is KernelFamily.GAUSSIAN:
        if w == 0.0:
            out = -0.5 * (y / s) ** 2 - math.log(s) - _LOG_SQRT_2PI
        else:
            out = _log_normal_mass((y - w) / s, (y + w) / s) - math.log(2.0 * w)
        return _pack(out, scalar)

    ay = np.abs(y)
    if w == 0.0:
        out = -ay / s - math.log(2.0 * s)
        return _pack(out, scalar)

    log_norm = math.log(2.0 * w)
    tails = -ay / s + _log_sinh(w / s) - log_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = _log1mexp(-w / s + _log_cosh(np.minimum(ay, w) / s)) - log_norm
    out = np.where(ay >= w, tails, inner)
    return _pack(out, scalar)


def pdf(kernel: MixtureKernel, o: ArrayLike) -> ArrayLike:
    """
    Density of the mixture kernel at `o`.

    Gaussian: [N((y+W)/s) - N((y-W)/s)] / (2W); Laplace: the three-branch
    closed form (exponential tails, 1 - e^{-W/b} cosh(y/b) inside).
    halfwidth == 0 gives the pure base density.
    """
    scalar = np.ndim(o) == 0
    values = np.exp(np.asarray(log_pdf(kernel, o)))
    return _pack(values, scalar)


def log_likelihood_ratio(numerator: MixtureKernel, denominator: MixtureKernel, o: ArrayLike) -> ArrayLike:
    """log numerator(o) - log denominator(o)."""
    scalar = np.ndim(o) == 0
    values = np.asarray(log_pdf(numerator, o)) - np.asarray(log_pdf(denominator, o))
    return _pack(values, scalar)


# ----------------------------------------------------------------------------
# Truncation
# ----------------------------------------------------------------------------

def base_tail_width(kernel: MixtureKernel, mass_tol: float) -> float:
    """Distance t such that the base noise puts at most `mass_tol` outside [-t, t]."""
    if not 0.0 < mass_tol < 1.0:
        raise ContractError(f"mass_tol must lie in (0, 1), got {mass_tol}")
    if kernel.family is KernelFamily.GAUSSIAN:
        return kernel.scale * float(stats.norm.isf(mass_tol / 2.0))
    return kernel.scale * math.log(1.0 / mass_tol)


def support_window(kernel: MixtureKernel, mass_tol: float) -> Tuple[float, float]:
    """
    Window symmetric about `shift` holding all but `mass_tol` of the mass.

    The uniform component moves the base tails by exactly `halfwidth`.
    """
    reach = kernel.halfwidth + base_tail_width(kernel, mass_tol)
    return kernel.shift - reach, kernel.shift + reach
