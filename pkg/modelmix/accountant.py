"""
ModelMix Privacy Accountant

Integer-order Renyi DP of the Poisson-subsampled ModelMix mechanism:

    D_alpha = log( sum_k C(alpha, k) (1-q)^(alpha-k) q^k A_k^p ) / (alpha - 1)

where A_k = E_{z~P0}[(P1(z)/P0(z))^k] for the mixture kernels
P0 = noise * U[-W, W] and P1 the same law shifted by sensitivity/sqrt(p).
Per-step losses compose over T iterations and convert to (epsilon, delta).
"""
import functools
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import special

from .core.decorators import annotate, record_event, trace_function
from .dist_kernel import KernelFamily, MixtureKernel, base_tail_width, log_pdf
from .errors import CalibrationError, ContractError, NumericalFailureError

DEFAULT_ORDERS: Tuple[int, ...] = tuple(range(2, 65)) + (96, 128, 192, 256)

# Quadrature settings for the moment integrals
QUAD_EPSREL = 1e-12
QUAD_FAIL_REL = 1e-10
QUAD_NODES = 20
QUAD_MAX_REFINE = 3
_PANELS_PER_SCALE = 8
QUAD_MAX_PANELS = 200_000
_PANEL_BLOCK = 50_000
_WINDOW_MASS = 1e-300

# Relative drop tolerated between consecutive orders of a per-step curve
MONOTONE_REL = 1e-9


class AccountantConfig(BaseModel):
    """
    Full description of one ModelMix mechanism for accounting.

    Units follow sum aggregation: `sensitivity` is the clipped norm of the
    differing element's gradient (c, or c/B when the optimizer averages) and
    `sigma` the noise scale on the aggregated gradient.
    """
    model_config = ConfigDict(frozen=True)

    q: float = Field(ge=0.0, le=1.0)
    sigma: float = Field(gt=0.0)
    sensitivity: float = Field(gt=0.0)
    p: int = Field(default=1, ge=1)
    tau: float = Field(default=0.0, ge=0.0)
    eta: float = Field(default=1.0, gt=0.0)
    T: int = Field(default=1, ge=0)
    delta: float = Field(default=1e-5, gt=0.0, lt=1.0)
    family: KernelFamily = KernelFamily.GAUSSIAN
    orders: Tuple[int, ...] = DEFAULT_ORDERS
    n: Optional[int] = Field(default=None, ge=1)

    @field_validator("orders")
    @classmethod
    def _orders_increasing(cls, orders: Tuple[int, ...]) -> Tuple[int, ...]:
        if not orders:
            raise ValueError("orders must not be empty")
        if any(a < 2 for a in orders):
            raise ValueError("Renyi orders must be integers >= 2")
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ValueError("orders must be strictly increasing")
        return tuple(int(a) for a in orders)

    @property
    def halfwidth(self) -> float:
        """Uniform halfwidth W = tau / (2 eta) in gradient units."""
        return self.tau / (2.0 * self.eta)

    @property
    def coordinate_shift(self) -> float:
        """Per-coordinate worst-case shift sensitivity / sqrt(p)."""
        return self.sensitivity / math.sqrt(self.p)

    def kernels(self) -> Tuple[MixtureKernel, MixtureKernel]:
        """(P0, P1): unshifted and worst-case shifted mixture kernels."""
        p0 = MixtureKernel(family=self.family, scale=self.sigma, shift=0.0, halfwidth=self.halfwidth)
        return p0, p0.with_shift(self.coordinate_shift)

    def with_sigma(self, sigma: float) -> "AccountantConfig":
        return self.model_copy(update={"sigma": float(sigma)})


class RdpEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: int = Field(ge=2)
    eps: float = Field(ge=0.0)

    @field_validator("eps")
    @classmethod
    def _finite(cls, eps: float) -> float:
        if not math.isfinite(eps):
            raise ValueError("per-step Renyi loss must be finite")
        return eps


class RdpCurve(BaseModel):
    """Per-step Renyi losses (nats) on an increasing grid of integer orders."""
    entries: List[RdpEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _increasing(self) -> "RdpCurve":
        alphas = [e.alpha for e in self.entries]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise ValueError("curve orders must be strictly increasing")
        return self

    @property
    def orders(self) -> np.ndarray:
        return np.array([e.alpha for e in self.entries], dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.eps for e in self.entries], dtype=float)

    @classmethod
    def from_arrays(cls, orders: Sequence[int], values: Sequence[float]) -> "RdpCurve":
        return cls(entries=[RdpEntry(alpha=int(a), eps=float(v)) for a, v in zip(orders, values)])


class PrivacySpend(BaseModel):
    """(epsilon, delta) after composition and the order that achieved it."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    epsilon: float = Field(ge=0.0, alias="eps")
    delta: float = Field(gt=0.0, lt=1.0)
    argmin_alpha: int = Field(alias="alpha")


class AccountingRecord(BaseModel):
    """JSON record exchanged by the CLI: {config, curve: [{alpha, eps}], spend: {eps, delta, alpha}}."""
    model_config = ConfigDict(populate_by_name=True)

    config: AccountantConfig
    curve: List[RdpEntry]
    spend: PrivacySpend

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True)

    @classmethod
    def from_json(cls, payload: str) -> "AccountingRecord":
        return cls.model_validate_json(payload)


class DeltaGrowth(BaseModel):
    """Total delta of T-fold advanced composition: T * delta + delta_tilde."""
    model_config = ConfigDict(frozen=True)

    T: int
    delta_tilde: float

    def total(self, per_step_delta: float) -> float:
        return self.T * per_step_delta + self.delta_tilde


class AsymptoticEstimate(BaseModel):
    """Order-of-magnitude epsilon from the asymptotic amplification rates (trends only)."""
    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    linear_term: float
    sqrt_term: float
    eps_estimate: float
    delta_estimate: float


# ----------------------------------------------------------------------------
# Moments of the likelihood ratio
# ----------------------------------------------------------------------------

def _check_pair(p0: MixtureKernel, p1: MixtureKernel) -> None:
    if p0.family is not p1.family or p0.scale != p1.scale or p0.halfwidth != p1.halfwidth:
        raise ContractError("moment kernels must share family, scale and halfwidth")


def _window(p0: MixtureKernel, p1: MixtureKernel, kmax: int) -> Tuple[float, float]:
    """Integration window covering P0, P1 and the drift of the k-th moment peak."""
    tail = base_tail_width(p0, _WINDOW_MASS)
    w = p0.halfwidth
    return p0.shift - w - tail, p1.shift + w + tail + kmax * (p1.shift - p0.shift)


def _panel_edges(p0: MixtureKernel, p1: MixtureKernel, lo: float, hi: float, width: float) -> np.ndarray:
    """Uniform panels no wider than `width`, split at the kinks of both kernels."""
    count = max(1, math.ceil((hi - lo) / width))
    w = p0.halfwidth
    kinks = [x for x in (p0.shift - w, p0.shift + w, p1.shift - w, p1.shift + w) if lo < x < hi]
    return np.unique(np.concatenate([np.linspace(lo, hi, count + 1), kinks]))


@functools.lru_cache(maxsize=4)
def _legendre_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = special.roots_legendre(nodes)
    return x, np.log(w)


def _composite_log_integrals(
    p0: MixtureKernel, p1: MixtureKernel, ks: np.ndarray, edges: np.ndarray
) -> np.ndarray:
    """log of the integral of P0^(1-k) P1^k over the panels, for every k at once."""
    x, log_w = _legendre_rule(QUAD_NODES)
    partial = []
    for start in range(0, edges.size - 1, _PANEL_BLOCK):
        block = edges[start:start + _PANEL_BLOCK + 1]
        half = 0.5 * np.diff(block)
        mid = 0.5 * (block[:-1] + block[1:])
        z = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        log_weights = (np.log(half)[:, None] + log_w[None, :]).ravel()
        l0 = np.asarray(log_pdf(p0, z))
        ratio = np.asarray(log_pdf(p1, z)) - l0
        base = l0 + log_weights
        partial.append([special.logsumexp(base + k * ratio) for k in ks])
    return special.logsumexp(np.asarray(partial), axis=0)


@functools.lru_cache(maxsize=512)
def _quadrature_log_moments(p0: MixtureKernel, p1: MixtureKernel, ks: Tuple[int, ...]) -> Tuple[float, ...]:
    """
    log A_k for k >= 2 by composite Gauss-Legendre quadrature in the log domain.

    Every order shares the same nodes, so one pass evaluates each density
    once per node. Panels halve until two successive passes agree to
    QUAD_EPSREL for all orders.
    """
    ks_arr = np.asarray(ks, dtype=float)
    lo, hi = _window(p0, p1, int(max(ks)))
    width = p0.scale / _PANELS_PER_SCALE
    if (hi - lo) / width > QUAD_MAX_PANELS:
        raise NumericalFailureError(
            f"moment window of length {hi - lo:.3g} is too long for noise scale {p0.scale:.3g}", float("inf")
        )
    coarse = _composite_log_integrals(p0, p1, ks_arr, _panel_edges(p0, p1, lo, hi, width))
    achieved = math.inf
    for _ in range(QUAD_MAX_REFINE):
        width /= 2.0
        if (hi - lo) / width > QUAD_MAX_PANELS:
            break
        fine = _composite_log_integrals(p0, p1, ks_arr, _panel_edges(p0, p1, lo, hi, width))
        achieved = float(np.max(np.abs(np.expm1(fine - coarse))))
        coarse = fine
        if achieved <= QUAD_EPSREL:
            break
    if not np.all(np.isfinite(coarse)):
        raise NumericalFailureError("moment quadrature produced a non-finite integral", float("inf"))
    if not achieved <= QUAD_FAIL_REL:
        raise NumericalFailureError(
            f"moment quadrature did not converge (relative error {achieved:.3e})", achieved
        )
    return tuple(float(v) for v in coarse)


def log_moments(
    p0: MixtureKernel,
    p1: MixtureKernel,
    ks: Sequence[int],
    analytic: bool = True,
) -> np.ndarray:
    """
    log A_k for every k in `ks`.

    A_0 = A_1 = 1 by construction. With `analytic` the Gaussian kernel
    without a uniform component uses exp(k(k-1) c^2 / (2 sigma^2)).
    """
    _check_pair(p0, p1)
    ks_arr = np.asarray(ks, dtype=int)
    if np.any(ks_arr < 0):
        raise ContractError("moment orders must be nonnegative")
    out = np.zeros(ks_arr.shape, dtype=float)
    delta = abs(p1.shift - p0.shift)
    if delta == 0.0:
        return out

    mask = ks_arr >= 2
    if not np.any(mask):
        return out
    higher = ks_arr[mask].astype(float)

    if analytic and p0.family is KernelFamily.GAUSSIAN and p0.halfwidth == 0.0:
        out[mask] = higher * (higher - 1.0) * delta * delta / (2.0 * p0.scale * p0.scale)
        return out

    # Translation and reflection invariance: integrate the canonical pair.
    c0 = p0.with_shift(0.0)
    c1 = p0.with_shift(delta)
    unique = tuple(sorted(set(int(k) for k in higher)))
    table = dict(zip(unique, _quadrature_log_moments(c0, c1, unique)))
    out[mask] = [table[int(k)] for k in higher]
    return out


def moment_A_k(p0: MixtureKernel, p1: MixtureKernel, k: int) -> float:
    """
    E_{z~P0}[(P1(z)/P0(z))^k] by composite quadrature.

    The inner expectation only; callers apply the p-th power.
    """
    if k < 0:
        raise ContractError(f"moment order must be >= 0, got {k}")
    return float(np.exp(log_moments(p0, p1, [k], analytic=False)[0]))


# ----------------------------------------------------------------------------
# Renyi losses
# ----------------------------------------------------------------------------

def _log_binomial(n: int, k: np.ndarray) -> np.ndarray:
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _mixture_divergence(q: float, alpha: int, log_a: np.ndarray) -> float:
    """
    log(sum_k C(alpha,k)(1-q)^(alpha-k) q^k exp(log_a[k])) / (alpha - 1).

    `log_a` holds the (already p-powered) log moments for k = 0..alpha.
    """
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return max(float(log_a[alpha]) / (alpha - 1), 0.0)
    k = np.arange(alpha + 1, dtype=float)
    terms = _log_binomial(alpha, k) + (alpha - k) * math.log1p(-q) + k * math.log(q) + log_a[: alpha + 1]
    return max(float(special.logsumexp(terms)) / (alpha - 1), 0.0)


def _log_moment_table(config: AccountantConfig, kmax: int) -> np.ndarray:
    p0, p1 = config.kernels()
    return config.p * log_moments(p0, p1, np.arange(kmax + 1))


def rdp_step(config: AccountantConfig, alpha: int) -> float:
    """
    Per-step Renyi divergence D_alpha((1-q)P0 + qP1 || P0) with A_k^p.

    q = 0 gives 0; tau = 0 and p = 1 is the subsampled Gaussian mechanism.
    """
    if int(alpha) != alpha or alpha < 2:
        raise ContractError(f"Renyi order must be an integer >= 2, got {alpha}")
    alpha = int(alpha)
    if config.q == 0.0:
        return 0.0
    return _mixture_divergence(config.q, alpha, _log_moment_table(config, alpha))


def _check_monotone(orders: Sequence[int], values: np.ndarray) -> None:
    """Renyi losses are nondecreasing in the order; a larger drop means a bad moment."""
    if values.size < 2:
        return
    drops = values[:-1] - values[1:]
    worst = int(np.argmax(drops))
    allowed = MONOTONE_REL * max(float(values.max()), 1e-300)
    if drops[worst] > allowed:
        record_event(
            "accountant.non_monotone",
            alpha=int(orders[worst + 1]),
            previous=float(values[worst]),
            value=float(values[worst + 1]),
        )
        raise NumericalFailureError(
            f"per-step loss drops from {values[worst]:.6g} at order {orders[worst]} "
            f"to {values[worst + 1]:.6g} at order {orders[worst + 1]}",
            float(drops[worst] / max(float(values[worst]), 1e-300)),
        )


@trace_function(name="accountant.rdp_curve")
def rdp_curve(config: AccountantConfig, orders: Optional[Sequence[int]] = None) -> RdpCurve:
    """Per-step Renyi losses over the configured (or given) order grid."""
    orders = tuple(config.orders if orders is None else orders)
    annotate(q=config.q, sigma=config.sigma, tau=config.tau, p=config.p, orders=len(orders))
    if config.q == 0.0:
        return RdpCurve.from_arrays(orders, [0.0] * len(orders))
    table = _log_moment_table(config, max(orders))
    values = np.array([_mixture_divergence(config.q, int(a), table) for a in orders])
    _check_monotone(orders, values)
    return RdpCurve.from_arrays(orders, values)


# ----------------------------------------------------------------------------
# Composition
# ----------------------------------------------------------------------------

def compose_to_dp(curve: RdpCurve, T: int, delta: float) -> PrivacySpend:
    """
    epsilon = min_alpha T * eps_alpha + log(1/delta) / (alpha - 1).

    T = 0 reports the conversion term at the largest stored order.
    """
    if not curve.entries:
        raise ContractError("cannot compose an empty RDP curve")
    if not 0.0 < delta < 1.0:
        raise ContractError(f"delta must lie in (0, 1), got {delta}")
    if T < 0:
        raise ContractError(f"T must be nonnegative, got {T}")

    orders, values = curve.orders, curve.values
    log_inv_delta = math.log(1.0 / delta)
    if T == 0:
        alpha = int(orders[-1])
        return PrivacySpend(epsilon=log_inv_delta / (alpha - 1), delta=delta, argmin_alpha=alpha)

    totals = T * values + log_inv_delta / (orders - 1)
    best = int(np.argmin(totals))
    return PrivacySpend(epsilon=float(totals[best]), delta=delta, argmin_alpha=int(orders[best]))


def epsilon_for(config: AccountantConfig) -> float:
    return compose_to_dp(rdp_curve(config), config.T, config.delta).epsilon


def account(config: AccountantConfig) -> AccountingRecord:
    """Curve plus (epsilon, delta) spend for a configuration."""
    curve = rdp_curve(config)
    spend = compose_to_dp(curve, config.T, config.delta)
    annotate(epsilon=spend.epsilon, alpha_star=spend.argmin_alpha)
    return AccountingRecord(config=config, curve=curve.entries, spend=spend)


def epsilon_trajectory(config: AccountantConfig, checkpoints: Sequence[int]) -> List[Tuple[int, PrivacySpend]]:
    """
    Spend after each iteration count in `checkpoints`.

    The per-step curve does not depend on the iteration, so every
    checkpoint is exact.
    """
    curve = rdp_curve(config)
    return [(int(t), compose_to_dp(curve, int(t), config.delta)) for t in checkpoints]


def advanced_composition(eps: float, T: int, delta_tilde: float) -> Tuple[float, DeltaGrowth]:
    """
    T-fold advanced composition of an (eps, delta) mechanism.

    eps_total = sqrt(2 T log(1/delta_tilde)) * eps + T * eps * (e^eps - 1);
    the returned DeltaGrowth turns the per-step delta into T * delta + delta_tilde.
    """
    if eps <= 0.0 or T < 1 or not 0.0 < delta_tilde < 1.0:
        raise ContractError("advanced composition needs eps > 0, T >= 1, delta_tilde in (0, 1)")
    total = math.sqrt(2.0 * T * math.log(1.0 / delta_tilde)) * eps + T * eps * math.expm1(eps)
    return total, DeltaGrowth(T=T, delta_tilde=delta_tilde)


def bernstein_epsilon(mean: float, variance: float, T: int, delta: float, bound: float) -> float:
    """
    High-probability sum of T pointwise privacy losses.

    T * mean + sqrt(2 T variance log(1/delta)) + (2/3) bound log(1/delta),
    with `bound` an almost-sure bound on a centred single-step loss.
    """
    if variance < 0.0 or T < 0 or not 0.0 < delta < 1.0:
        raise ContractError("bernstein composition needs variance >= 0, T >= 0, delta in (0, 1)")
    log_inv = math.log(1.0 / delta)
    return T * mean + math.sqrt(2.0 * T * variance * log_inv) + (2.0 / 3.0) * bound * log_inv


# ----------------------------------------------------------------------------
# Calibration
# ----------------------------------------------------------------------------

@trace_function(name="accountant.calibrate_sigma")
def calibrate_sigma(
    target_eps: float,
    config_sans_sigma: AccountantConfig,
    rel_tol: float = 1e-3,
    bracket: Tuple[float, float] = (1e-4, 1e4),
    max_iter: int = 200,
) -> float:
    """
    Noise scale whose composed epsilon is within `rel_tol` of `target_eps`.

    Bisection in log(sigma) over [1e-4 s, 1e4 s]; the sigma already on the
    config is ignored. A lower end too small to integrate moves up by
    decades until the accountant can evaluate it.
    """
    if target_eps <= 0.0:
        raise ContractError(f"target epsilon must be positive, got {target_eps}")

    s = config_sans_sigma.sensitivity
    lo, hi = bracket[0] * s, bracket[1] * s
    while True:
        try:
            eps_lo = epsilon_for(config_sans_sigma.with_sigma(lo))
            break
        except NumericalFailureError:
            # Too little noise to integrate; loss there is huge anyway
            if lo * 10.0 >= hi:
                raise
            lo *= 10.0
            record_event("calibration.bracket_raised", sigma=lo)
    eps_hi = epsilon_for(config_sans_sigma.with_sigma(hi))
    if not eps_hi <= target_eps <= eps_lo:
        raise CalibrationError(
            f"target epsilon {target_eps} outside [{eps_hi:.6g}, {eps_lo:.6g}] reachable in the sigma bracket",
            (eps_lo, eps_hi),
        )

    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        eps_mid = epsilon_for(config_sans_sigma.with_sigma(mid))
        if not eps_hi <= eps_mid <= eps_lo:
            raise NumericalFailureError(
                f"epsilon not monotone in sigma near {mid:.6g} ({eps_mid:.6g} outside [{eps_hi:.6g}, {eps_lo:.6g}])"
            )
        if abs(eps_mid - target_eps) <= rel_tol * target_eps:
            annotate(sigma=mid, epsilon=eps_mid, target_epsilon=target_eps)
            return mid
        if eps_mid > target_eps:
            lo, eps_lo = mid, eps_mid
        else:
            hi, eps_hi = mid, eps_mid

    record_event("calibration.no_convergence", lo=lo, hi=hi)
    raise CalibrationError(f"calibration did not converge in {max_iter} bisection steps", (eps_lo, eps_hi))


# ----------------------------------------------------------------------------
# Asymptotic rates and the one-hot reduction
# ----------------------------------------------------------------------------

def asymptotic_epsilon(config: AccountantConfig, family: Optional[KernelFamily] = None) -> AsymptoticEstimate:
    """
    Order-of-magnitude epsilon from the asymptotic amplification rates.

    Hidden constants are set to 1 and polylog factors dropped, so only the
    trend in tau, T and sigma is meaningful. Gaussian:
        eta T (c + sigma) / (tau n) + sqrt(eta T log(1/delta) / tau * (c^4/(n^4 sigma^3) + c^2/(n^2 sigma) + sigma))
    Laplace, with eps0 = c / sigma the single-step loss without mixing:
        eta T eps0 (e^eps0 - 1) / tau + eps0 sqrt(eta T log(1/delta) / tau)
    """
    family = KernelFamily(family or config.family)
    c, sigma, eta, T, tau = config.sensitivity, config.sigma, config.eta, config.T, config.tau
    log_inv = math.log(1.0 / config.delta)

    if tau == 0.0:
        return AsymptoticEstimate(
            family=family, linear_term=math.inf, sqrt_term=math.inf,
            eps_estimate=math.inf, delta_estimate=math.inf,
        )

    if family is KernelFamily.GAUSSIAN:
        if config.n is None:
            raise ContractError("the Gaussian asymptotic rate needs the dataset size n")
        n = float(config.n)
        linear = eta * T * (c + sigma) / (tau * n)
        spread = c ** 4 / (n ** 4 * sigma ** 3) + c ** 2 / (n ** 2 * sigma) + sigma
        sqrt_term = math.sqrt(eta * T * log_inv / tau * spread)
        delta_est = T * (c / n + sigma) / tau + config.delta
    else:
        eps0 = c / sigma
        linear = eta * T * eps0 * math.expm1(eps0) / tau
        sqrt_term = eps0 * math.sqrt(eta * T * log_inv / tau)
        delta_est = config.delta

    return AsymptoticEstimate(
        family=family,
        linear_term=linear,
        sqrt_term=sqrt_term,
        eps_estimate=linear + sqrt_term,
        delta_estimate=delta_est,
    )


def worst_case_split_check(config: AccountantConfig, split: Sequence[float]) -> RdpCurve:
    """
    Per-step divergence when the differing gradient spreads over up to four
    coordinates.

    `split` holds nonnegative weights summing to s^2. Gaussian coordinates
    shift by sqrt(weight) (l2 budget), Laplace coordinates by weight / s
    (l1 budget), both scaled by 1/sqrt(p) like the accountant's kernels.
    Coordinates are independent, so log-moments add, and the p-th power is
    applied as in `rdp_curve`: the one-hot split reproduces that curve.
    """
    weights = np.asarray(split, dtype=float)
    s = config.sensitivity
    if weights.ndim != 1 or not 1 <= weights.size <= 4:
        raise ContractError("split must list between 1 and 4 coordinate weights")
    if np.any(weights < 0.0):
        raise ContractError("split weights must be nonnegative")
    if not math.isclose(float(weights.sum()), s * s, rel_tol=1e-9):
        raise ContractError(f"split weights must sum to s^2 = {s * s}")

    if config.family is KernelFamily.GAUSSIAN:
        shifts = np.sqrt(weights)
    else:
        shifts = weights / s
    shifts = shifts / math.sqrt(config.p)

    kmax = max(config.orders)
    ks = np.arange(kmax + 1)
    p0 = MixtureKernel(family=config.family, scale=config.sigma, shift=0.0, halfwidth=config.halfwidth)
    per_shift: Dict[float, np.ndarray] = {}
    total = np.zeros(kmax + 1)
    for shift in shifts:
        key = float(shift)
        if key not in per_shift:
            per_shift[key] = log_moments(p0, p0.with_shift(key), ks)
        total = total + per_shift[key]
    total = config.p * total

    values = [_mixture_divergence(config.q, int(a), total) for a in config.orders]
    return RdpCurve.from_arrays(config.orders, values)
