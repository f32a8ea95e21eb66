"""
ModelMix CLI
Command-line interface for private accounting, training and the reproduction harness.
"""
import functools
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import typer
from pydantic import ValidationError
from rich.console import Console

from modelmix.accountant import AccountantConfig, account
from modelmix.clipping import ClipConfig
from modelmix.core.session import Session, resolve_db_path
from modelmix.dist_kernel import KernelFamily
from modelmix.errors import EXIT_CONTRACT, ContractError, ModelMixError, exit_code_for
from modelmix.exporter import list_runs
from modelmix.harness import ExperimentSpec, replay, run_experiment, save_results
from modelmix.harness.results import curve_csv, fig4_csv_paths
from modelmix.optimizer import Aggregation, Method, MixConfig, ReleaseMode, TauSchedule
from modelmix.ui.terminal import TerminalUI

app = typer.Typer(
    name="modelmix",
    help="Differentially private training with iterate mixing: accounting, training and reproduction",
    add_completion=False,
)
console = Console()


class Output(str, Enum):
    TABLE = "table"
    JSON = "json"
    CSV = "csv"


class Switch(str, Enum):
    ON = "on"
    OFF = "off"


def _ui(output: Output) -> TerminalUI:
    """Machine-readable output keeps stdout clean; tables go to stderr then."""
    return TerminalUI(console if output is Output.TABLE else Console(stderr=True))


def _build(model, **fields):
    try:
        return model(**fields)
    except ValidationError as exc:
        raise ContractError(f"invalid {model.__name__}: {exc}") from exc


def _handled(func):
    """Map library errors to exit codes: 1 for contract violations, 2 for numerical failures."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ModelMixError as exc:
            TerminalUI(Console(stderr=True)).print_error(str(exc))
            raise typer.Exit(exit_code_for(exc))
    return wrapper


def _session(ctx: typer.Context) -> Session:
    session = Session.get_instance()
    db = resolve_db_path(ctx.obj["db"])
    if session is None or not session.active or session.db_path != db:
        session = Session(mode="terminal" if ctx.obj["live"] else "headless", db_path=db)
        session.start()
        Session.set_instance(session)
    return session


def _run_spec(ctx: typer.Context, kind: str, payload: Dict[str, Any], seed: int, out: Optional[Path], output: Output):
    spec = ExperimentSpec.build(kind, payload, seed=seed, output=None if out is None else str(out))
    _ui(output).print_config(spec.payload, seed=spec.seed, title=f"{kind} config")
    _session(ctx)
    report = run_experiment(spec)
    envelope = save_results(spec, report)
    if output is Output.JSON:
        typer.echo(json.dumps(envelope.model_dump(mode="json"), indent=2, sort_keys=True))
    return spec, report


def _accountant_fields(q, sigma, sensitivity, p, tau, eta, T, delta, family) -> Dict[str, Any]:
    return dict(q=q, sigma=sigma, sensitivity=sensitivity, p=p, tau=tau, eta=eta, T=T, delta=delta, family=family)


@app.command("account")
@_handled
def account_cmd(
    q: float = typer.Option(..., "--q", help="Poisson sampling rate in [0, 1]"),
    sigma: float = typer.Option(..., "--sigma", help="Noise scale (std for gaussian, scale for laplace)"),
    sensitivity: float = typer.Option(1.0, "--sensitivity", help="Clipped norm of the differing gradient"),
    p: int = typer.Option(1, "--p", help="l-infinity truncation parameter"),
    tau: float = typer.Option(0.0, "--tau", help="Mixing threshold"),
    eta: float = typer.Option(1.0, "--eta", help="Step size"),
    T: int = typer.Option(1, "--T", help="Number of iterations"),
    delta: float = typer.Option(1e-5, "--delta", help="Target delta"),
    family: KernelFamily = typer.Option(KernelFamily.GAUSSIAN, "--family", help="Base noise family"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table, json or csv"),
    out: Optional[Path] = typer.Option(
        None, "--out", help="Write the accounting record to this path; csv output also writes PATH.csv"
    ),
):
    """
    Account a mechanism: per-step Renyi curve and composed (epsilon, delta).
    """
    config = _build(AccountantConfig, **_accountant_fields(q, sigma, sensitivity, p, tau, eta, T, delta, family))
    ui = _ui(output)
    ui.print_config(config, title="account config")
    record = account(config)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.suffix != ".csv":
            out.write_text(record.to_json() + "\n")
    if output is Output.JSON:
        typer.echo(record.to_json())
    elif output is Output.CSV:
        table = curve_csv(record)
        if out is not None:
            out.with_suffix(".csv").write_text(table)
        typer.echo(table, nl=False)
    else:
        ui.print_spend(record.spend)


@app.command()
@_handled
def calibrate(
    ctx: typer.Context,
    target_eps: float = typer.Option(..., "--target-eps", help="Epsilon to reach at T"),
    q: float = typer.Option(..., "--q", help="Poisson sampling rate in (0, 1]"),
    sensitivity: float = typer.Option(1.0, "--sensitivity", help="Clipped norm of the differing gradient"),
    p: int = typer.Option(1, "--p", help="l-infinity truncation parameter"),
    tau: float = typer.Option(0.0, "--tau", help="Mixing threshold"),
    eta: float = typer.Option(1.0, "--eta", help="Step size"),
    T: int = typer.Option(1, "--T", help="Number of iterations"),
    delta: float = typer.Option(1e-5, "--delta", help="Target delta"),
    family: KernelFamily = typer.Option(KernelFamily.GAUSSIAN, "--family", help="Base noise family"),
    rel_tol: float = typer.Option(1e-3, "--rel-tol", help="Relative tolerance on epsilon"),
    seed: int = typer.Option(0, "--seed", help="Seed recorded with the run"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table or json"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result file stem"),
):
    """
    Find the noise scale that spends exactly the target epsilon.
    """
    config = _accountant_fields(q, 1.0, sensitivity, p, tau, eta, T, delta, family)
    payload = {"target_eps": target_eps, "config": config, "rel_tol": rel_tol}
    _, report = _run_spec(ctx, "calibrate", payload, seed, out, output)
    if output is Output.TABLE:
        _ui(output).print_calibration(report)


@app.command()
@_handled
def train(
    ctx: typer.Context,
    problem: str = typer.Option("least-squares", "--problem", help="Registered problem name"),
    n: Optional[int] = typer.Option(None, "--n", help="Dataset size override"),
    d: Optional[int] = typer.Option(None, "--d", help="Dimension override"),
    method: Optional[Method] = typer.Option(None, "--method", help="modelmix, dpsgd, sgd or strawman"),
    mix: Switch = typer.Option(Switch.ON, "--mix", help="ModelMix mixing on or off"),
    eta: float = typer.Option(0.01, "--eta", help="Step size"),
    clip: float = typer.Option(math.inf, "--clip", help="l2 clip threshold c (inf disables clipping)"),
    p: int = typer.Option(1, "--p", help="l-infinity truncation parameter"),
    tau: float = typer.Option(0.0, "--tau", help="Constant mixing threshold"),
    q: float = typer.Option(1.0, "--q", help="Poisson sampling rate"),
    sigma: float = typer.Option(0.0, "--sigma", help="Noise std per coordinate"),
    T: int = typer.Option(100, "--T", help="Number of iterations"),
    aggregation: Aggregation = typer.Option(Aggregation.SUM, "--aggregation", help="sum or mean"),
    alpha_fixed: Optional[float] = typer.Option(None, "--alpha-fixed", help="Pin every mixing weight"),
    release: ReleaseMode = typer.Option(ReleaseMode.FINAL, "--release", help="final or trajectory"),
    log_every: int = typer.Option(1, "--log-every", help="Trajectory logging period"),
    delta: float = typer.Option(1e-5, "--delta", help="Target delta for accounting"),
    family: KernelFamily = typer.Option(KernelFamily.GAUSSIAN, "--family", help="Base noise family"),
    seed: int = typer.Option(0, "--seed", help="Master seed"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table or json"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result file stem"),
):
    """
    Train one method on a registered problem and print its trajectory hash.
    """
    mix_cfg = _build(
        MixConfig,
        eta=eta,
        clip=_build(ClipConfig, c=clip, p=p),
        tau_schedule=TauSchedule.constant(tau),
        q=q,
        sigma=sigma,
        T=T,
        seed=seed,
        aggregation=aggregation,
        mixing=mix is Switch.ON,
        alpha_fixed=alpha_fixed,
        release=release,
        log_every=log_every,
    )
    if method is None:
        method = Method.MODELMIX if mix is Switch.ON else Method.DPSGD
    payload = {
        "problem": problem, "n": n, "d": d, "method": method, "mix": mix_cfg,
        "delta": delta, "family": family,
    }
    _, report = _run_spec(ctx, "train", payload, seed, out, output)
    if output is Output.TABLE:
        _ui(output).print_training(report)


@app.command("reproduce-fig4")
@_handled
def reproduce_fig4(
    ctx: typer.Context,
    T: int = typer.Option(5000, "--T", help="Iterations"),
    q: float = typer.Option(0.02, "--q", help="Sampling rate of the main panel"),
    extra_q: List[float] = typer.Option([0.04], "--extra-q", help="Additional panels, each calibrated on its own"),
    checkpoints: int = typer.Option(50, "--checkpoints", help="Points per curve"),
    oracle: bool = typer.Option(True, "--oracle/--no-oracle", help="Run the Monte-Carlo gate"),
    oracle_samples: int = typer.Option(10_000_000, "--oracle-samples", help="Samples per oracle cell"),
    workers: int = typer.Option(4, "--workers", help="Threads for grid cells"),
    seed: int = typer.Option(0, "--seed", help="Oracle seed"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table, json or csv"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result file stem"),
):
    """
    Reproduce the privacy-amplification grid and gate it on the oracle.
    """
    if output is Output.CSV and out is None:
        out = Path("fig4")
    payload = {
        "T": T, "q": q, "extra_qs": tuple(extra_q), "checkpoints": checkpoints,
        "check_oracle": oracle, "oracle_samples": oracle_samples, "workers": workers,
    }
    spec, report = _run_spec(ctx, "fig4", payload, seed, out, output)
    if output is Output.CSV:
        for path in fig4_csv_paths(out, report):
            typer.echo(str(path))
    elif output is Output.TABLE:
        _ui(output).print_fig4(report)
    if report.status == "FAIL":
        raise typer.Exit(EXIT_CONTRACT)


@app.command()
@_handled
def example31(
    ctx: typer.Context,
    eta: float = typer.Option(0.1, "--eta", help="Step size"),
    steps: int = typer.Option(100, "--steps", help="Iterations at the small threshold"),
    seed: int = typer.Option(0, "--seed", help="Seed for the kappa estimate"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table or json"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result file stem"),
):
    """
    Clipped gradient descent on the three-sample counterexample.
    """
    _, report = _run_spec(ctx, "example31", {"eta": eta, "steps": steps}, seed, out, output)
    if output is Output.TABLE:
        _ui(output).print_example31(report)


@app.command()
@_handled
def oracle(
    ctx: typer.Context,
    family: KernelFamily = typer.Option(KernelFamily.GAUSSIAN, "--family", help="Base noise family"),
    sigma: float = typer.Option(1.0, "--sigma", help="Noise scale"),
    sensitivity: float = typer.Option(1.0, "--sensitivity", help="Clipped norm of the differing gradient"),
    p: int = typer.Option(1, "--p", help="l-infinity truncation parameter"),
    halfwidth: float = typer.Option(0.0, "--halfwidth", help="Uniform halfwidth W = tau / (2 eta)"),
    k: List[int] = typer.Option([1, 2, 3, 4], "--k", help="Moment orders"),
    samples: int = typer.Option(1_000_000, "--samples", help="Monte-Carlo samples"),
    importance: bool = typer.Option(False, "--importance/--direct", help="Reweighted draws around the tilted peak"),
    seed: int = typer.Option(0, "--seed", help="Sampler seed"),
    output: Output = typer.Option(Output.TABLE, "--output", "-o", help="table or json"),
    out: Optional[Path] = typer.Option(None, "--out", help="Result file stem"),
):
    """
    Check the accountant's likelihood-ratio moments by simulation.
    """
    payload = {
        "family": family, "sigma": sigma, "sensitivity": sensitivity, "p": p,
        "halfwidth": halfwidth, "k_list": tuple(k), "n_samples": samples, "importance": importance,
    }
    _, report = _run_spec(ctx, "oracle", payload, seed, out, output)
    if output is Output.TABLE:
        _ui(output).print_oracle(report)
    if not report.passed:
        raise typer.Exit(EXIT_CONTRACT)


@app.command("replay")
@_handled
def replay_cmd(
    ctx: typer.Context,
    path: Path = typer.Argument(..., help="Result JSON written by a previous run"),
):
    """
    Re-run a result file from its embedded spec and seed.
    """
    _session(ctx)
    envelope, identical = replay(path)
    TerminalUI(console).print_config(envelope.spec.payload, seed=envelope.seed, title="replayed config")
    if identical:
        console.print(f"[green]identical[/green] results hash {envelope.results_hash}")
    else:
        console.print(f"[red]results differ[/red]: now {envelope.results_hash}")
        raise typer.Exit(EXIT_CONTRACT)


@app.command()
def runs(
    ctx: typer.Context,
    kind: Optional[str] = typer.Option(None, "--kind", help="Only this experiment kind"),
    limit: int = typer.Option(20, "--limit", help="Number of runs"),
):
    """
    List recent experiment runs from the ledger.
    """
    db = resolve_db_path(ctx.obj["db"])
    if not Path(db).exists():
        console.print(f"[yellow]No run ledger at {db}[/yellow]")
        return
    TerminalUI(console).print_runs(list_runs(db, kind=kind, limit=limit))


@app.callback()
def root(
    ctx: typer.Context,
    db: Optional[str] = typer.Option(None, "--db", "-d", help="Run ledger path (default $MODELMIX_DB_PATH or modelmix_runs.db)"),
    live: bool = typer.Option(False, "--live", help="Stream finished experiment spans to the terminal"),
):
    """
    ModelMix - differentially private training with iterate mixing
    """
    ctx.obj = {"db": db, "live": live}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point returning the exit code: usage errors map to 1 rather than click's 2."""
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="modelmix", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_CONTRACT
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONTRACT
    except click.Abort:
        return EXIT_CONTRACT
    finally:
        session = Session.get_instance()
        if session is not None:
            session.stop()
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
