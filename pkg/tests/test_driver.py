import numpy as np
import pandas as pd
import pytest

from driver import (
    STATUS_OK, ColumnGenerationDriver, extract_valid_edges, solve, write_trajectory_csv,
)
from gnn.features import NormStats, featurize
from gnn.model import Hyper, PredictionModel, init_params
from master import Column, coverage_matrix, solve_covering_lp
from models import ReductionConfig, SolveMode, SolverConfig


def random_model(g, seed=0):
    hyper = Hyper.for_stations(g.n_stations, h_conv=4, h_mlp=4, l_conv=2, l_mlp=2)
    return PredictionModel(init_params(hyper, seed=seed), NormStats.fit([featurize(g)]))


@pytest.fixture(scope="module")
def baseline(small_graph):
    return ColumnGenerationDriver().run(small_graph, SolveMode.BASELINE)


def test_baseline_lp_matches_full_enumeration(toy_graph, enumerate_duties):
    report = solve(toy_graph, SolveMode.BASELINE)
    columns = []
    for path, _ in enumerate_duties(toy_graph):
        rows = sorted(toy_graph.row_of[toy_graph.edges[k].head] for k in path
                      if toy_graph.edges[k].head in toy_graph.row_of)
        columns.append(Column(tuple(path), tuple(rows), sum(toy_graph.edges[k].fixed_cost for k in path)))
    best = solve_covering_lp(coverage_matrix(columns, toy_graph.n_trips), np.array([c.cost for c in columns]))
    assert report.lp_objective == pytest.approx(best.objective, abs=1e-6)
    assert report.status == STATUS_OK


def test_baseline_report(small_graph, baseline):
    report, solution = baseline
    assert report.status == STATUS_OK
    assert report.ip_objective >= report.lp_objective - 1e-9
    assert report.columns_generated > 0
    assert report.switched_at is None
    covered = {t for duty in report.selected for t in duty["trips"]}
    assert covered == set(small_graph.trip_nodes)
    assert not solution.uses_artificials


def test_trajectory_never_increases(baseline):
    report, _ = baseline
    objectives = [obj for _, obj in report.trajectory]
    assert len(objectives) == report.iterations
    assert all(b <= a + 1e-7 for a, b in zip(objectives, objectives[1:]))
    assert objectives[-1] == pytest.approx(report.lp_objective)


@pytest.mark.parametrize("seed", [0, 1])
def test_optimal_mode_reaches_the_baseline_lp(small_graph, baseline, seed):
    driver = ColumnGenerationDriver(model=random_model(small_graph, seed),
                                    reduction=ReductionConfig(threshold=0.5))
    report = driver.solve(small_graph, SolveMode.OPTIMAL)
    assert report.lp_objective == pytest.approx(baseline[0].lp_objective, abs=1e-6)
    assert report.switched_at is not None
    assert report.t_predict > 0.0


def test_fast_mode_is_never_better_than_baseline(small_graph, baseline):
    driver = ColumnGenerationDriver(model=random_model(small_graph),
                                    reduction=ReductionConfig(threshold=0.5))
    report = driver.solve(small_graph, SolveMode.FAST)
    assert report.lp_objective >= baseline[0].lp_objective - 1e-6
    assert report.ip_objective >= report.lp_objective - 1e-9


def test_reduced_modes_need_a_model(toy_graph):
    with pytest.raises(ValueError, match="model"):
        ColumnGenerationDriver().solve(toy_graph, SolveMode.FAST)


def test_iteration_cap_is_reported(toy_graph):
    report = ColumnGenerationDriver(SolverConfig(max_iterations=1)).solve(toy_graph, SolveMode.BASELINE)
    assert report.iterations == 1
    assert report.status != STATUS_OK


def test_extract_valid_edges(small_graph, baseline):
    _, solution = baseline
    labels = extract_valid_edges(small_graph, solution)
    assert labels.shape == (len(small_graph.connection_edge_ids),)
    used = {k for col in solution.columns for k in col.edge_path}
    for k, y in zip(small_graph.connection_edge_ids, labels):
        assert y == (1 if k in used else 0)
    assert set(labels.tolist()) <= {0, 1}


def test_trajectory_csv(tmp_path, baseline):
    report, _ = baseline
    path = tmp_path / "trajectory.csv"
    write_trajectory_csv(path, report)
    df = pd.read_csv(path)
    assert list(df.columns) == ["elapsed_s", "objective"]
    assert len(df) == len(report.trajectory)
    assert df["elapsed_s"].is_monotonic_increasing


def test_report_serializes(baseline):
    data = baseline[0].to_dict()
    assert data["mode"] == "baseline"
    assert data["trajectory"][0] == list(baseline[0].trajectory[0])


def test_fast_lp_does_not_rise_as_the_threshold_falls(small_graph):
    model = random_model(small_graph, seed=2)
    objectives = []
    for threshold in (0.5, 0.15, 0.05):
        driver = ColumnGenerationDriver(model=model,
                                        reduction=ReductionConfig(threshold, connectivity_guard=False))
        objectives.append(driver.solve(small_graph, SolveMode.FAST).lp_objective)
    assert objectives[1] <= objectives[0] + 1e-6
    assert objectives[2] <= objectives[1] + 1e-6
