from typing import Any, Dict, Sequence
import math

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from models import SolveReport


def _fmt(value: Any, spec: str = ".4f") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return format(value, spec)


class BaseUI:
    def __init__(self, console: Console = None):
        self.console = console or Console()

    def display_welcome(self):
        """Abstract method for welcome screen."""
        raise NotImplementedError

    def display_error(self, message: str):
        panel = Panel(
            f"[bold red]Error: {message}[/]",
            title="[bold red]Error[/]",
            border_style="red"
        )
        self.console.print(panel)

    def display_success(self, message: str, path: str = ""):
        body = f"[bold green]{message}[/]"
        if path:
            body += f"\n[bright_white]Output: [cyan]{path}[/]"
        self.console.print(Panel(body, title="[bold green]Done[/]", border_style="green"))

    def display_solve_report(self, report: SolveReport):
        """Objectives, iteration counts and the timing breakdown of one solve."""
        table = Table(show_header=True, header_style="bold yellow", border_style="bright_blue",
                      title=f"[bold]{report.mode.value} solve[/]")
        table.add_column("Metric", style="cyan", justify="right")
        table.add_column("Value", style="bright_white")

        rows = [
            ("Status", report.status),
            ("LP objective", _fmt(report.lp_objective)),
            ("IP objective", _fmt(report.ip_objective)),
            ("IP optimal", "yes" if report.ip_optimal else f"no (gap {report.ip_gap:.2%})"),
            ("Iterations", str(report.iterations)),
            ("Columns generated", str(report.columns_generated)),
            ("Duties selected", str(len(report.selected))),
            ("Switched to full graph", "-" if report.switched_at is None else f"iteration {report.switched_at}"),
            ("Total time", f"{report.t_total:.3f}s"),
            ("  prediction", f"{report.t_predict:.3f}s"),
            ("  pricing", f"{report.t_price:.3f}s"),
            ("  LP", f"{report.t_lp:.3f}s"),
            ("  IP", f"{report.t_ip:.3f}s"),
        ]
        for metric, value in rows:
            table.add_row(metric, value)
        self.console.print(table)

    def display_bench_summary(self, summary: Sequence[Dict[str, Any]]):
        table = Table(show_header=True, header_style="bold yellow", border_style="bright_blue",
                      title="[bold]Benchmark summary[/]")
        for column in ("Mode", "Instances", "LP obj", "IP obj", "Gap %", "Ratio %", "Pricing share", "Failures"):
            table.add_column(column, justify="right")
        for row in summary:
            table.add_row(
                str(row["mode"]),
                str(row["instances"]),
                _fmt(row["mean_lp_obj"], ".3f"),
                _fmt(row["mean_ip_obj"], ".3f"),
                _fmt(row["mean_gap_pct"], ".2f"),
                _fmt(row["mean_ratio_pct"], ".2f"),
                _fmt(row["price_share"], ".1%"),
                str(row["failures"]),
            )
        self.console.print(table)

    def display_epoch(self, row: Dict[str, float]):
        self.console.print(
            f"[cyan]epoch {int(row['epoch']):>3}[/]  "
            f"train [bright_white]{_fmt(row['train_loss'])}[/]  "
            f"val [bright_white]{_fmt(row['val_loss'])}[/]  "
            f"auc [green]{_fmt(row['val_auc'], '.3f')}[/]  "
            f"recall [green]{_fmt(row['val_recall'], '.3f')}[/]"
        )

    def display_instances(self, rows: Sequence[Dict[str, Any]]):
        """One line per generated instance with its size."""
        table = Table(show_header=True, header_style="bold yellow", border_style="bright_blue",
                      title="[bold]Generated instances[/]")
        for column in ("File", "Seed", "Nodes", "Edges", "Connections"):
            table.add_column(column, justify="right")
        for row in rows:
            table.add_row(str(row["file"]), str(row["seed"]), str(row["nodes"]),
                          str(row["edges"]), str(row["connections"]))
        self.console.print(table)
