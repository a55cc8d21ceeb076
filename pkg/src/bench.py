"""Benchmark runs over instance sets and their CSV reports."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd

from driver import ColumnGenerationDriver, write_trajectory_csv
from gnn.model import PredictionModel
from graph import parse_instance
from models import ReductionConfig, SolveMode, SolverConfig

REPORT_COLUMNS = ["instance", "mode", "lp_obj", "ip_obj", "iters", "cols",
                  "t_total_s", "t_price_s", "t_lp_s", "t_ip_s"]
SUMMARY_NOTE = "ratio_pct is the mean of per-instance ratios against baseline"

logger = logging.getLogger(__name__)


@dataclass
class BenchReport:
    """Per-instance rows plus aggregates computed purely from them."""
    rows: pd.DataFrame

    @classmethod
    def from_rows(cls, rows: Sequence[Dict]) -> "BenchReport":
        return cls(pd.DataFrame(list(rows), columns=REPORT_COLUMNS))

    @classmethod
    def from_csv(cls, path: Path) -> "BenchReport":
        df = pd.read_csv(path, dtype={"instance": str, "mode": str})
        if list(df.columns) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {','.join(df.columns)}")
        return cls(df)

    def to_csv(self, path: Path) -> None:
        self.rows.to_csv(path, index=False)

    def per_instance(self) -> pd.DataFrame:
        """Rows joined with their baseline row: gap_pct and ratio_pct per instance and mode."""
        df = self.rows.copy()
        base = df[df["mode"] == SolveMode.BASELINE.value][["instance", "ip_obj", "t_total_s"]]
        base = base.rename(columns={"ip_obj": "ip_base", "t_total_s": "t_base"})
        df = df.merge(base, on="instance", how="left")
        df["gap_pct"] = 100.0 * (df["ip_obj"] - df["ip_base"]) / df["ip_base"]
        df["ratio_pct"] = 100.0 * df["t_total_s"] / df["t_base"]
        return df.drop(columns=["ip_base", "t_base"])

    def summary(self) -> pd.DataFrame:
        df = self.per_instance()
        records = []
        for mode in [m.value for m in SolveMode]:
            part = df[df["mode"] == mode]
            if part.empty:
                continue
            ok = part.dropna(subset=["ip_obj"])
            price_share = ok["t_price_s"].sum() / ok["t_total_s"].sum() if ok["t_total_s"].sum() > 0 else math.nan
            records.append({
                "mode": mode,
                "instances": len(ok),
                "mean_lp_obj": ok["lp_obj"].mean(),
                "mean_ip_obj": ok["ip_obj"].mean(),
                "mean_gap_pct": ok["gap_pct"].mean(),
                "mean_ratio_pct": ok["ratio_pct"].mean(),
                "price_share": price_share,
                "failures": len(part) - len(ok),
                "note": SUMMARY_NOTE,
            })
        return pd.DataFrame(records)

    def write(self, path: Path) -> Path:
        """Report CSV at `path` and the summary next to it; returns the summary path."""
        path = Path(path)
        self.to_csv(path)
        summary_path = path.with_name(f"{path.stem}_summary.csv")
        self.summary().to_csv(summary_path, index=False)
        return summary_path


def _failed_row(instance: str, mode: str) -> Dict:
    row = {column: np.nan for column in REPORT_COLUMNS}
    row.update(instance=instance, mode=mode)
    return row


def _bench_job(job: Tuple) -> List[Dict]:
    path, modes, model, solver, reduction, trajectory_dir = job
    instance = Path(path).stem
    try:
        g = parse_instance(Path(path).read_bytes())
    except Exception as e:
        logger.error(f"Could not load {path}: {e}")
        return [_failed_row(instance, mode) for mode in modes]

    driver = ColumnGenerationDriver(solver, model, reduction)
    rows = []
    for mode in modes:
        try:
            report = driver.solve(g, SolveMode(mode))
        except Exception as e:
            logger.error(f"{instance} ({mode}) failed: {type(e).__name__}: {e}")
            rows.append(_failed_row(instance, mode))
            continue
        if trajectory_dir is not None:
            write_trajectory_csv(Path(trajectory_dir) / f"{instance}_{mode}.csv", report)
        rows.append({
            "instance": instance,
            "mode": mode,
            "lp_obj": report.lp_objective,
            "ip_obj": report.ip_objective,
            "iters": report.iterations,
            "cols": report.columns_generated,
            "t_total_s": report.t_total,
            "t_price_s": report.t_price,
            "t_lp_s": report.t_lp,
            "t_ip_s": report.t_ip,
        })
        logger.info(f"{instance} {mode}: IP {report.ip_objective:.2f} in {report.t_total:.2f}s")
    return rows


def run_bench(instances: Sequence[str], modes: Sequence[str],
              model: Optional[PredictionModel] = None,
              solver: Optional[SolverConfig] = None,
              reduction: Optional[ReductionConfig] = None,
              workers: int = 1,
              trajectory_dir: Optional[Path] = None) -> BenchReport:
    """Solve every instance in every mode; failed runs become NaN rows."""
    modes = [SolveMode(m).value for m in modes]
    if trajectory_dir is not None:
        Path(trajectory_dir).mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), modes, model, solver, reduction, trajectory_dir) for p in instances]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_bench_job, jobs))
    else:
        batches = [_bench_job(job) for job in jobs]
    return BenchReport.from_rows([row for batch in batches for row in batch])
