"""
Result artifacts: JSON envelopes, amplification-grid CSV tables and replay.
"""
import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from pydantic import BaseModel, Field

from ..accountant import AccountingRecord
from ..errors import ContractError
from ..utils import canonical_json, content_hash
from .experiments import Fig4Report, run_experiment
from .specs import ExperimentSpec

FIG4_COLUMNS = ("tau_over_eta", "p", "T", "epsilon", "delta", "alpha_star")
CURVE_COLUMNS = ("alpha", "eps")


class ResultEnvelope(BaseModel):
    """
    One experiment's spec and results.

    `content_hash` covers the spec (output path excluded), `results_hash`
    the results; `created_at` is in neither.
    """
    spec: ExperimentSpec
    content_hash: str
    results: Dict[str, Any]
    results_hash: str
    seed: int
    created_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @classmethod
    def wrap(cls, spec: ExperimentSpec, report: BaseModel) -> "ResultEnvelope":
        results = report.model_dump(mode="json")
        return cls(
            spec=spec,
            content_hash=content_hash(spec.replay_key()),
            results=results,
            results_hash=content_hash(results),
            seed=spec.seed,
        )


def write_json(envelope: ResultEnvelope, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(envelope.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Union[str, Path]) -> ResultEnvelope:
    path = Path(path)
    if not path.exists():
        raise ContractError(f"result file not found: {path}")
    try:
        return ResultEnvelope.model_validate(json.loads(path.read_text()))
    except (ValueError, TypeError) as exc:
        raise ContractError(f"{path} is not a result envelope: {exc}") from exc


def fig4_csv_paths(base: Union[str, Path], report: Fig4Report) -> List[Path]:
    """Main panel at `base`; every extra sampling-rate panel gets a `_q<rate>` suffix."""
    base = Path(base).with_suffix(".csv")
    paths = [base]
    for panel in report.panels[1:]:
        paths.append(base.with_name(f"{base.stem}_q{panel.q:g}{base.suffix}"))
    return paths


def write_fig4_csv(spec: ExperimentSpec, report: Fig4Report, base: Union[str, Path]) -> List[Path]:
    """One CSV per panel, each headed by a `# spec:` comment line."""
    paths = fig4_csv_paths(base, report)
    header = f"# spec: {canonical_json(spec.replay_key())}\n"
    for panel, path in zip(report.panels, paths):
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(header)
            writer = csv.writer(fh)
            writer.writerow(FIG4_COLUMNS)
            for row in panel.rows:
                writer.writerow([f"{row.tau_over_eta:g}", row.p, row.T, repr(row.epsilon), f"{row.delta:g}", row.alpha_star])
    return paths


def curve_csv(record: AccountingRecord) -> str:
    """Per-step curve as `alpha,eps` rows under a `# spend:` comment line."""
    buffer = io.StringIO()
    buffer.write(f"# spend: {canonical_json(record.spend.model_dump(by_alias=True))}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for entry in record.curve:
        writer.writerow([entry.alpha, repr(entry.eps)])
    return buffer.getvalue()


def read_fig4_csv(path: Union[str, Path]) -> Tuple[Dict[str, Any], List[Dict[str, float]]]:
    """(spec key from the header comment, typed rows)."""
    with Path(path).open(newline="") as fh:
        first = fh.readline()
        if not first.startswith("# spec: "):
            raise ContractError(f"{path} has no spec header")
        rows = [
            {
                "tau_over_eta": float(r["tau_over_eta"]),
                "p": int(r["p"]),
                "T": int(r["T"]),
                "epsilon": float(r["epsilon"]),
                "delta": float(r["delta"]),
                "alpha_star": int(r["alpha_star"]),
            }
            for r in csv.DictReader(fh)
        ]
    return json.loads(first[len("# spec: "):]), rows


def save_results(spec: ExperimentSpec, report: BaseModel) -> ResultEnvelope:
    """Wrap a report and write it (plus the grid CSV tables) to `spec.output` when set."""
    envelope = ResultEnvelope.wrap(spec, report)
    if spec.output:
        out = Path(spec.output)
        write_json(envelope, out.with_suffix(".json"))
        if isinstance(report, Fig4Report):
            write_fig4_csv(spec, report, out)
    return envelope


def replay(path: Union[str, Path]) -> Tuple[ResultEnvelope, bool]:
    """
    Re-run the spec stored in a result file.

    Returns the fresh envelope and whether its results hash matches the stored one.
    """
    stored = read_json(path)
    if content_hash(stored.spec.replay_key()) != stored.content_hash:
        raise ContractError(f"{path}: spec does not match its content hash")
    report = run_experiment(stored.spec)
    fresh = ResultEnvelope.wrap(stored.spec, report)
    return fresh, fresh.results_hash == stored.results_hash
