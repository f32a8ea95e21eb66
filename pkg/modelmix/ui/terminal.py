"""
Terminal UI for ModelMix - Rich output

Live view of finished experiment spans plus the tables the CLI prints for
accounting, calibration, training and the reproduction grids.
"""
import math
import threading
from typing import Any, Dict, Iterable, List, Optional

from pydantic import BaseModel
from rich.box import DOUBLE, ROUNDED
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text


class TerminalUI:
    """
    Rich terminal interface for ModelMix.

    Usage:
        ui = TerminalUI()
        ui.print_config(cfg, seed=0)
        ui.print_spend(record.spend)
    """

    COLORS = {
        'primary': '#00d9ff',
        'success': '#00ff87',
        'warning': '#ffaf00',
        'error': '#ff5f87',
        'info': '#af87ff',
        'accent': '#ffff00',
        'dim': '#6c7086',
        'highlight': '#f5c2e7',
    }

    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()
        self.completed_spans: List[Dict[str, Any]] = []
        self._running = False
        self._lock = threading.Lock()

    def start(self):
        """Print the session header."""
        if self._running:
            return
        self._running = True

        header = Text()
        header.append("ModelMix", style=f"bold {self.COLORS['primary']}")
        header.append("  private training toolkit", style=self.COLORS['info'])
        self.console.print()
        self.console.print(Panel(header, border_style="bold cyan", box=DOUBLE, expand=False))
        self.console.print()

    def stop(self):
        """Print the session summary."""
        if not self._running:
            return
        self._running = False
        self.console.print()
        self._print_session_summary()

    def _print_session_summary(self):
        experiments = [s for s in self.completed_spans if 'mm.experiment_kind' in s['attributes']]
        table = Table(
            title=f"[bold {self.COLORS['primary']}]Session Summary[/]",
            box=DOUBLE,
            border_style=self.COLORS['info'],
            header_style=f"bold {self.COLORS['warning']}",
        )
        table.add_column("Metric", style=f"bold {self.COLORS['primary']}", no_wrap=True)
        table.add_column("Value", style=f"bold {self.COLORS['success']}", justify="right")
        table.add_row("Spans", str(len(self.completed_spans)))
        table.add_row("Experiments", str(len(experiments)))
        failed = sum(1 for s in self.completed_spans if s['status'] == 'ERROR')
        if failed:
            table.add_row("Failed", f"[{self.COLORS['error']}]{failed}[/]")
        self.console.print(table)

    def on_span_end(self, span):
        """Exporter callback: experiment spans get a panel, the rest are only counted."""
        attrs = dict(span.attributes) if getattr(span, 'attributes', None) else {}
        status = getattr(getattr(span, 'status', None), 'status_code', None)
        with self._lock:
            self.completed_spans.append({
                'name': span.name,
                'attributes': attrs,
                'status': getattr(status, 'name', 'UNSET'),
            })
        if 'mm.experiment_kind' in attrs:
            self._print_experiment_span(span, attrs)

    def _print_experiment_span(self, span, attrs: Dict[str, Any]):
        table = Table(box=ROUNDED, border_style=self.COLORS['primary'], show_header=False, padding=(0, 2))
        table.add_column("", style=f"bold {self.COLORS['info']}", justify="right")
        table.add_column("", style="bold white")
        table.add_row("kind", f"[{self.COLORS['warning']}]{attrs['mm.experiment_kind']}[/]")
        table.add_row("seed", str(attrs.get('mm.seed', '')))
        table.add_row("config", str(attrs.get('mm.config_hash', ''))[:12])
        for key in ('mm.epsilon', 'mm.final_loss', 'mm.status'):
            if key in attrs:
                table.add_row(key[3:], self._fmt(attrs[key]))
        duration = self._calculate_duration(span)
        if duration is not None:
            table.add_row("duration", f"[{self.COLORS['dim']}]{duration:.0f}ms[/]")
        cpu = attrs.get('system.cpu_percent')
        if cpu is not None:
            table.add_row("cpu", f"{self._create_gradient_bar(cpu)} {cpu:.0f}%")
        self.console.print(table)

    # ------------------------------------------------------------------
    # Report rendering
    # ------------------------------------------------------------------

    def print_config(self, config: BaseModel, seed: Optional[int] = None, title: str = "Resolved config"):
        """Every run prints its resolved config and seed before computing."""
        table = Table(title=f"[bold {self.COLORS['primary']}]{title}[/]", box=ROUNDED, show_header=False)
        table.add_column("key", style=self.COLORS['info'])
        table.add_column("value")
        for key, value in config.model_dump(mode="json").items():
            table.add_row(key, self._fmt(value))
        if seed is not None:
            table.add_row("seed", str(seed))
        self.console.print(table)

    def print_spend(self, spend, title: str = "Privacy spend"):
        self.console.print(Panel.fit(
            f"[bold {self.COLORS['success']}]epsilon = {spend.epsilon:.6g}[/]\n"
            f"delta = {spend.delta:g}\n"
            f"[{self.COLORS['dim']}]optimal order alpha* = {spend.argmin_alpha}[/]",
            title=title,
            border_style=self.COLORS['primary'],
        ))

    def print_calibration(self, report):
        colour = self.COLORS['success'] if abs(report.residual) <= 1e-3 else self.COLORS['warning']
        self.console.print(Panel.fit(
            f"sigma = [bold]{report.sigma:.6g}[/]\n"
            f"epsilon = {report.spend.epsilon:.6g} (target {report.target_eps:g})\n"
            f"[{colour}]relative residual {report.residual:+.2e}[/]",
            title="Calibration",
            border_style=self.COLORS['primary'],
        ))

    def print_fig4(self, report):
        table = Table(title="Amplification endpoints", box=ROUNDED, header_style=f"bold {self.COLORS['warning']}")
        for column in ("tau/eta", "p", "epsilon", "expected", "rel. error", ""):
            table.add_column(column, justify="right")
        for e in report.endpoints:
            mark = "" if e.within_band is None else ("[green]ok[/]" if e.within_band else "[red]out of band[/]")
            table.add_row(
                f"{e.tau_over_eta:g}", str(e.p), f"{e.epsilon:.2f}",
                "" if e.expected is None else f"{e.expected:g}",
                "" if e.rel_error is None else f"{e.rel_error:.1%}",
                mark,
            )
        self.console.print(table)
        for panel in report.panels:
            self.console.print(
                f"[{self.COLORS['dim']}]q = {panel.q:g}: sigma = {panel.sigma:.6g}, "
                f"baseline epsilon = {panel.calibrated_epsilon:.2f}[/]"
            )
        self.console.print(f"ordering: {'ok' if report.ordering_ok else 'VIOLATED'}")
        colour = {'PASS': self.COLORS['success'], 'FAIL': self.COLORS['error']}.get(report.status, self.COLORS['warning'])
        self.console.print(f"[bold {colour}]{report.status}[/]")

    def print_training(self, report):
        table = Table(title="Training run", box=ROUNDED, show_header=False)
        table.add_column("", style=self.COLORS['info'])
        table.add_column("")
        table.add_row("problem", report.problem)
        table.add_row("method", report.method.value)
        table.add_row("final loss", f"{report.final_loss:.6g}")
        table.add_row("trajectory", report.trajectory_hash)
        if report.accounting is not None:
            table.add_row("epsilon", f"{report.accounting.spend.epsilon:.6g}")
        self.console.print(table)

    def print_example31(self, report):
        self.console.print(
            f"optimum w* = {report.optimum:.4f}, true gradient at start = {report.true_gradient_at_start:.4f}"
        )
        table = Table(box=ROUNDED, header_style=f"bold {self.COLORS['warning']}")
        for column in ("c", "clipped grad at start", "clipped grad at w*", "steps", "final w", ""):
            table.add_column(column, justify="right")
        for run in report.runs:
            table.add_row(
                f"{run.c:g}", f"{run.clipped_gradient_at_start:+.4f}", f"{run.clipped_gradient_at_optimum:+.4f}",
                str(run.steps), f"{run.final_w:.4f}",
                f"[{self.COLORS['error']}]moved away[/]" if run.moved_away else "",
            )
        self.console.print(table)
        self.console.print(
            f"kappa = {report.kappa_hat:.4g}, sampling std = {report.sampling_noise_std:.4g}, "
            f"recommended c = {report.recommended_clip:.4g}"
        )

    def print_oracle(self, report):
        table = Table(title="Monte-Carlo oracle", box=ROUNDED, header_style=f"bold {self.COLORS['warning']}")
        for column in ("k", "estimate", "std. error", "quadrature", "z", ""):
            table.add_column(column, justify="right")
        for c in report.checks:
            table.add_row(
                str(c.k), f"{c.estimate:.6g}", f"{c.std_error:.2g}", f"{c.quadrature:.6g}", f"{c.z_score:+.2f}",
                "[green]ok[/]" if c.passed else "[red]disagrees[/]",
            )
        self.console.print(table)
        if report.bernstein_epsilon is not None:
            self.console.print(f"pointwise-loss epsilon estimate: {report.bernstein_epsilon:.6g}")

    def print_runs(self, runs: Iterable[Dict[str, Any]]):
        table = Table(title="Recent runs", box=ROUNDED, header_style=f"bold {self.COLORS['warning']}")
        for column in ("kind", "config", "seed", "epsilon", "final loss", "status"):
            table.add_column(column)
        for run in runs:
            table.add_row(
                run.get("experiment_kind") or "",
                (run.get("config_hash") or "")[:12],
                "" if run.get("seed") is None else str(run["seed"]),
                self._fmt(run.get("epsilon")),
                self._fmt(run.get("final_loss")),
                run.get("status_code") or "",
            )
        self.console.print(table)

    def print_error(self, message: str):
        self.console.print(f"[bold {self.COLORS['error']}]error:[/] {message}")

    # ------------------------------------------------------------------

    @staticmethod
    def _fmt(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, float):
            return "inf" if math.isinf(value) else f"{value:.6g}"
        return str(value)

    def _create_gradient_bar(self, percentage: float, width: int = 15) -> str:
        filled = int((percentage / 100) * width)
        if percentage < 50:
            colour = self.COLORS['success']
        elif percentage < 75:
            colour = self.COLORS['warning']
        else:
            colour = self.COLORS['error']
        return f"[{colour}]" + "█" * filled + f"[/][{self.COLORS['dim']}]" + "░" * (width - filled) + "[/]"

    def _calculate_duration(self, span) -> Optional[float]:
        """Span duration in milliseconds."""
        start, end = getattr(span, 'start_time', None), getattr(span, 'end_time', None)
        if start is None or end is None:
            return None
        return (end - start) / 1_000_000
