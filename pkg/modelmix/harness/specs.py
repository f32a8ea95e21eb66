"""
Experiment specifications.

An ExperimentSpec names a kind and carries that kind's payload; the payload
is validated against the kind's schema when the spec is built, before any
computation starts.
"""
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..accountant import AccountantConfig
from ..dist_kernel import KernelFamily
from ..errors import ContractError
from ..optimizer import Method, MixConfig


class ExperimentKind(str, Enum):
    FIG4 = "fig4"
    CONVERGENCE = "convergence"
    CALIBRATE = "calibrate"
    ORACLE = "oracle"
    EXAMPLE31 = "example31"
    TRAIN = "train"


class Fig4Payload(BaseModel):
    """
    Privacy-amplification grid in mean-aggregation units (sensitivity c / (n q)).

    The baseline (tau = 0, p = 1) is calibrated to `target_eps` at T, then
    every (tau multiple of eta, p) cell is accounted with the same sigma.
    """
    model_config = ConfigDict(frozen=True)

    n: int = Field(default=50_000, ge=1)
    c: float = Field(default=20.0, gt=0.0)
    q: float = Field(default=0.02, gt=0.0, le=1.0)
    T: int = Field(default=5000, ge=1)
    delta: float = Field(default=1e-5, gt=0.0, lt=1.0)
    eta: float = Field(default=1.0, gt=0.0)
    target_eps: float = Field(default=200.0, gt=0.0)
    tau_multipliers: Tuple[float, ...] = (0.075, 0.15, 0.3)
    ps: Tuple[int, ...] = (1, 25, 100)
    extra_qs: Tuple[float, ...] = (0.04,)
    checkpoints: int = Field(default=50, ge=1)
    family: KernelFamily = KernelFamily.GAUSSIAN
    check_oracle: bool = True
    oracle_k: Tuple[int, ...] = (2, 3, 4)
    oracle_samples: int = Field(default=10_000_000, ge=100_000)
    oracle_z_max: float = Field(default=3.0, gt=0.0)
    oracle_importance: bool = True
    band: float = Field(default=0.15, gt=0.0)
    workers: int = Field(default=4, ge=1)


class ConvergencePayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    problem: str = "least-squares"
    n: int = Field(default=1000, ge=1)
    d: int = Field(default=20, ge=1)
    Ts: Tuple[int, ...] = (100, 1000, 10_000)
    gamma: float = Field(default=1.0, gt=0.0)
    q: float = Field(default=1.0, gt=0.0, le=1.0)
    tau_over_eta: float = Field(default=0.05, ge=0.0)
    sigma: float = Field(default=0.0, ge=0.0)
    methods: Tuple[Method, ...] = (Method.SGD, Method.DPSGD, Method.MODELMIX, Method.STRAWMAN)
    equal_noise_sigma: float = Field(default=1.0, ge=0.0)
    equal_noise_clip: float = Field(default=10.0, gt=0.0)
    log_points: int = Field(default=100, ge=1)


class CalibratePayload(BaseModel):
    """`config.sigma` is ignored; calibration searches it."""
    model_config = ConfigDict(frozen=True)

    target_eps: float = Field(gt=0.0)
    config: AccountantConfig
    rel_tol: float = Field(default=1e-3, gt=0.0)


class OraclePayload(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: KernelFamily = KernelFamily.GAUSSIAN
    sigma: float = Field(default=1.0, gt=0.0)
    sensitivity: float = Field(default=1.0, gt=0.0)
    p: int = Field(default=1, ge=1)
    halfwidth: float = Field(default=0.0, ge=0.0)
    k_list: Tuple[int, ...] = (1, 2, 3, 4)
    n_samples: int = Field(default=1_000_000, ge=100_000)
    pointwise: bool = True
    importance: bool = False
    T: int = Field(default=1000, ge=1)
    delta: float = Field(default=1e-5, gt=0.0, lt=1.0)


class Example31Payload(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: float = Field(default=0.1, gt=0.0)
    steps: int = Field(default=100, ge=1)
    converge_steps: int = Field(default=300, ge=1)
    clips: Tuple[float, ...] = (1.0, 200.0)
    w0: float = 0.0


class TrainPayload(BaseModel):
    problem: str = "least-squares"
    n: Optional[int] = Field(default=None, ge=1)
    d: Optional[int] = Field(default=None, ge=1)
    method: Method = Method.MODELMIX
    mix: MixConfig
    delta: float = Field(default=1e-5, gt=0.0, lt=1.0)
    family: KernelFamily = KernelFamily.GAUSSIAN


PAYLOADS: Dict[ExperimentKind, Type[BaseModel]] = {
    ExperimentKind.FIG4: Fig4Payload,
    ExperimentKind.CONVERGENCE: ConvergencePayload,
    ExperimentKind.CALIBRATE: CalibratePayload,
    ExperimentKind.ORACLE: OraclePayload,
    ExperimentKind.EXAMPLE31: Example31Payload,
    ExperimentKind.TRAIN: TrainPayload,
}

Payload = Union[
    Fig4Payload, ConvergencePayload, CalibratePayload, OraclePayload, Example31Payload, TrainPayload
]


class ExperimentSpec(BaseModel):
    """
    Kind, validated payload, optional output path and seed.

    Usage:
        spec = ExperimentSpec.build("fig4", {"T": 1000}, seed=0)
    """
    kind: ExperimentKind
    payload: Payload
    output: Optional[str] = None
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _payload_for_kind(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "kind" not in data:
            return data
        schema = PAYLOADS[ExperimentKind(data["kind"])]
        payload = data.get("payload") or {}
        if not isinstance(payload, schema):
            if isinstance(payload, BaseModel):
                payload = payload.model_dump()
            payload = schema.model_validate(payload)
        return {**data, "payload": payload}

    @classmethod
    def build(cls, kind: Union[str, ExperimentKind], payload: Optional[Dict[str, Any]] = None, **kwargs) -> "ExperimentSpec":
        """Validate a spec, reporting schema violations as ContractError."""
        try:
            return cls(kind=kind, payload=payload or {}, **kwargs)
        except ValidationError as exc:
            raise ContractError(f"invalid {kind} experiment spec: {exc}") from exc

    def replay_key(self) -> Dict[str, Any]:
        """Everything that determines the results (the output path does not)."""
        return self.model_dump(mode="json", exclude={"output"})


__all__ = [
    "CalibratePayload",
    "ConvergencePayload",
    "Example31Payload",
    "ExperimentKind",
    "ExperimentSpec",
    "Fig4Payload",
    "OraclePayload",
    "PAYLOADS",
    "TrainPayload",
]
