from pathlib import Path
from typing import List, Optional, Tuple
import logging
import time

import numpy as np
import pandas as pd

from graph import TimeSpaceGraph
from master import (
    IpSolution, PoolInfeasible, RmpState, add_columns, init_pool, ip_finish, lp_solve,
)
from gnn.model import PredictionModel
from models import ReductionConfig, SolveMode, SolveReport, SolverConfig
from pricer import price
from reduce import reduce_graph
from ui.base_ui import BaseUI

STATUS_OK = "ok"
STATUS_ARTIFICIALS = "ip_with_artificials"
STATUS_ITERATION_LIMIT = "iteration_limit"


class ColumnGenerationDriver:
    """Runs column generation on one instance in baseline, optimal or fast mode.

    Baseline prices on the full graph only. Optimal prices on the reduced
    graph until it stops improving and then on the full graph. Fast stops
    after the reduced graph. All modes finish with the IP over the pool.
    """

    def __init__(self, config: Optional[SolverConfig] = None,
                 model: Optional[PredictionModel] = None,
                 reduction: Optional[ReductionConfig] = None,
                 ui: Optional[BaseUI] = None):
        self.config = config or SolverConfig()
        self.model = model
        self.reduction = reduction or ReductionConfig()
        self.ui = ui
        self.logger = logging.getLogger(__name__)
        self.config.validate()
        self.reduction.validate()

    def _phases(self, g: TimeSpaceGraph, mode: SolveMode, report: SolveReport) -> List[Tuple[str, TimeSpaceGraph]]:
        if mode is SolveMode.BASELINE:
            return [("full", g)]
        if self.model is None:
            raise ValueError(f"{mode.value} mode needs a trained model")
        started = time.perf_counter()
        scores = self.model.score(g)
        reduced, stats = reduce_graph(g, scores, self.reduction)
        report.t_predict = time.perf_counter() - started
        self.logger.info(
            f"Reduced graph keeps {stats.connections_kept}/{stats.connections_full} connection edges "
            f"at threshold {stats.threshold} ({report.t_predict:.3f}s)"
        )
        if mode is SolveMode.OPTIMAL:
            return [("reduced", reduced), ("full", g)]
        return [("reduced", reduced)]

    def _run_phase(self, state: RmpState, graph: TimeSpaceGraph, report: SolveReport,
                   started: float) -> bool:
        """Iterate LP and pricing on `graph` until no improving duty is left.

        Returns False when the iteration cap stopped the phase.
        """
        while report.iterations < self.config.max_iterations:
            t0 = time.perf_counter()
            objective, _, duals = lp_solve(state)
            t1 = time.perf_counter()
            report.t_lp += t1 - t0
            report.trajectory.append((t1 - started, objective))

            columns = price(graph, duals, self.config.max_cols, tol=self.config.rc_tolerance)
            report.t_price += time.perf_counter() - t1
            report.iterations += 1
            self.logger.debug(f"iteration {report.iterations}: objective {objective:.6f}, "
                              f"{len(columns)} new columns")
            if not columns:
                report.lp_objective = objective
                return True
            before = len(state.columns)
            add_columns(state, columns, self.config.rc_tolerance)
            report.columns_generated += len(state.columns) - before
        self.logger.warning(f"Iteration cap {self.config.max_iterations} reached")
        report.lp_objective, _, _ = lp_solve(state)
        return False

    def _finish_ip(self, state: RmpState, report: SolveReport) -> IpSolution:
        t0 = time.perf_counter()
        try:
            solution = ip_finish(state, self.config.ip_time_limit)
        except PoolInfeasible as e:
            self.logger.warning(f"{e}; solving the IP with artificial columns")
            solution = ip_finish(state, self.config.ip_time_limit, allow_artificials=True)
        report.t_ip = time.perf_counter() - t0
        if solution.uses_artificials:
            report.status = STATUS_ARTIFICIALS
            self.logger.warning("Integer cover still uses artificial columns")
        return solution

    def run(self, g: TimeSpaceGraph, mode: SolveMode) -> Tuple[SolveReport, IpSolution]:
        """Solve `g` and return the report together with the integer solution."""
        mode = SolveMode(mode)
        report = SolveReport(mode=mode, status=STATUS_OK, lp_objective=0.0, ip_objective=0.0,
                             iterations=0, columns_generated=0)
        started = time.perf_counter()
        phases = self._phases(g, mode, report)
        state = init_pool(g)

        for k, (name, graph) in enumerate(phases):
            if k > 0:
                report.switched_at = report.iterations
                self.logger.info(f"Switching to the {name} graph after {report.iterations} iterations")
            if not self._run_phase(state, graph, report, started):
                report.status = STATUS_ITERATION_LIMIT
                break

        solution = self._finish_ip(state, report)
        report.ip_objective = solution.objective
        report.ip_gap = solution.gap
        report.ip_optimal = solution.optimal
        report.selected = [
            {
                "edge_path": list(col.edge_path),
                "trips": [g.trip_nodes[r] for r in col.rows],
                "cost": col.cost,
                "artificial": col.artificial,
            }
            for col in solution.columns
        ]
        report.t_total = time.perf_counter() - started
        self.logger.info(
            f"{mode.value}: LP {report.lp_objective:.4f}, IP {report.ip_objective:.4f}, "
            f"{report.iterations} iterations, {report.columns_generated} columns, {report.t_total:.2f}s"
        )
        if self.ui:
            self.ui.display_solve_report(report)
        return report, solution

    def solve(self, g: TimeSpaceGraph, mode: SolveMode) -> SolveReport:
        return self.run(g, mode)[0]


def solve(g: TimeSpaceGraph, mode: SolveMode, model: Optional[PredictionModel] = None,
          cfg: Optional[SolverConfig] = None, reduction: Optional[ReductionConfig] = None) -> SolveReport:
    return ColumnGenerationDriver(cfg, model, reduction).solve(g, mode)


def extract_valid_edges(g: TimeSpaceGraph, ip_solution: IpSolution) -> np.ndarray:
    """0/1 label per connection edge of `g`: 1 if a selected duty uses it."""
    used = {k for col in ip_solution.columns if not col.artificial for k in col.edge_path}
    return np.array([1 if k in used else 0 for k in g.connection_edge_ids], dtype=np.int64)


def write_trajectory_csv(path: Path, report: SolveReport) -> None:
    pd.DataFrame(report.trajectory, columns=["elapsed_s", "objective"]).to_csv(path, index=False)
