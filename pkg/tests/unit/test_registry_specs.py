"""Unit tests for the problem registry and experiment specifications."""
import pytest

from modelmix.errors import ContractError
from modelmix.harness.specs import ExperimentKind, ExperimentSpec, Fig4Payload, TrainPayload
from modelmix.problems import LeastSquares, TanhMLP
from modelmix.registry import ProblemRegistry, registry


def test_registry_resolves_aliases():
    assert registry.resolve("LS") == "least-squares"
    assert registry.resolve("example-31") == "example31"
    assert "mlp" in registry.names()
    with pytest.raises(ContractError):
        registry.resolve("resnet")


def test_registry_applies_defaults_and_overrides():
    problem = registry.create("least-squares", seed=2, n=50, d=None)
    assert isinstance(problem, LeastSquares)
    assert (problem.n, problem.d) == (50, 20)
    assert isinstance(registry.create("mlp", n=40, widths=(3, 4, 1)), TanhMLP)
    assert registry.create("example31").optimum[0] == pytest.approx(20.0)


def test_custom_problem_registration():
    local = ProblemRegistry()
    local.register_custom_problem("tiny", lambda seed, d: registry.create("quadratic", d=d), {"d": 2})
    assert local.create("tiny").d == 2


def test_spec_validates_payload_for_kind():
    spec = ExperimentSpec.build("fig4", {"T": 1000}, seed=3)
    assert spec.kind is ExperimentKind.FIG4
    assert isinstance(spec.payload, Fig4Payload)
    assert spec.payload.T == 1000 and spec.payload.n == 50_000

    train = ExperimentSpec.build("train", {"mix": {"eta": 0.1}})
    assert isinstance(train.payload, TrainPayload)


def test_spec_schema_violations_are_contract_errors():
    with pytest.raises(ContractError):
        ExperimentSpec.build("fig4", {"q": 2.0})
    with pytest.raises(ContractError):
        ExperimentSpec.build("oracle", {"n_samples": 10})
    with pytest.raises(ContractError):
        ExperimentSpec.build("train", {})


def test_replay_key_ignores_output():
    first = ExperimentSpec.build("example31", {}, output="a")
    second = ExperimentSpec.build("example31", {}, output="b")
    assert first.replay_key() == second.replay_key()
    assert "output" not in first.replay_key()
