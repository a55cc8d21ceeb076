from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from typing import List, Dict, Optional, Tuple, Any
import math

# Duty rules shared by the generator, the pricer and the features
MAX_DUTY_MINUTES = 480
MIN_TRANSIT_MINUTES = 15
DAY_MINUTES = 1440


@dataclass(frozen=True)
class GenConfig:
    """Configuration for the random instance generator"""
    seed: int = 1
    n_stations: int = 5
    n_trains: Tuple[int, int] = (50, 80)
    day_window: Tuple[int, int] = (300, 1380)
    travel_time_range: Tuple[int, int] = (20, 40)
    target_nodes: Tuple[int, int] = (80, 140)
    target_edges: Tuple[int, int] = (700, 2000)
    first_train_departure: int = 300
    stop_probability: float = 0.5
    dwell_minutes: int = 2
    max_attempts: int = 100

    def validate(self) -> bool:
        if self.n_stations < 2:
            raise ValueError("n_stations must be at least 2")
        lo, hi = self.day_window
        if not (0 <= lo < hi < DAY_MINUTES):
            raise ValueError(f"day_window must lie within [0, {DAY_MINUTES}) and be nonempty")
        for name in ("n_trains", "travel_time_range", "target_nodes", "target_edges"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a nonempty nonnegative range, got ({lo}, {hi})")
        if self.travel_time_range[0] < 1:
            raise ValueError("travel_time_range must be positive")
        if not 0.0 <= self.stop_probability <= 1.0:
            raise ValueError("stop_probability must lie in [0, 1]")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        return True

    def scaled(self, factor: float) -> "GenConfig":
        """Config whose instances carry about `factor` times the edges.

        Connection edges grow with the square of the trip count, so trains and
        the node target are scaled by sqrt(factor) and the edge target by factor.
        """
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        root = math.sqrt(factor)
        return replace(
            self,
            n_trains=(round(self.n_trains[0] * root), round(self.n_trains[1] * root)),
            target_nodes=(round(self.target_nodes[0] * root), round(self.target_nodes[1] * root)),
            target_edges=(round(self.target_edges[0] * factor), round(self.target_edges[1] * factor)),
        )


@dataclass(frozen=True)
class SolverConfig:
    """Column generation and IP settings"""
    max_cols: int = 10
    max_iterations: int = 10_000
    ip_time_limit: float = 10.0
    rc_tolerance: float = 1e-6

    def validate(self) -> bool:
        if self.max_cols < 1:
            raise ValueError("max_cols must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.ip_time_limit <= 0:
            raise ValueError("ip_time_limit must be positive")
        if self.rc_tolerance <= 0:
            raise ValueError("rc_tolerance must be positive")
        return True


@dataclass(frozen=True)
class ReductionConfig:
    """Settings for building the reduced graph"""
    threshold: float = 0.15
    connectivity_guard: bool = True

    def validate(self) -> bool:
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie strictly between 0 and 1, got {self.threshold}")
        return True


@dataclass(frozen=True)
class TrainConfig:
    """Training loop settings"""
    epochs: int = 30
    batch_graphs: int = 10
    lr: float = 3e-4
    w_neg: float = 0.15
    h_conv: int = 64
    h_mlp: int = 64
    l_conv: int = 4
    l_mlp: int = 4
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 10
    shuffle_labels: bool = False

    def validate(self) -> bool:
        if self.batch_graphs < 1:
            raise ValueError("batch_graphs must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if min(self.h_conv, self.h_mlp, self.l_conv, self.l_mlp) < 1:
            raise ValueError("hidden sizes and layer counts must be at least 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")
        if self.w_neg < 0:
            raise ValueError("w_neg must be nonnegative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        return True


class SolveMode(str, Enum):
    BASELINE = "baseline"
    OPTIMAL = "optimal"
    FAST = "fast"


@dataclass
class SolveReport:
    """Result of one column generation run"""
    mode: SolveMode
    status: str  # 'ok', 'ip_with_artificials'
    lp_objective: float
    ip_objective: float
    iterations: int
    columns_generated: int
    t_total: float = 0.0
    t_price: float = 0.0
    t_lp: float = 0.0
    t_ip: float = 0.0
    t_predict: float = 0.0
    trajectory: List[Tuple[float, float]] = field(default_factory=list)
    switched_at: Optional[int] = None
    ip_gap: float = 0.0
    ip_optimal: bool = True
    selected: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["mode"] = self.mode.value
        data["trajectory"] = [list(point) for point in self.trajectory]
        return data


@dataclass
class LabeledInstance:
    """An instance file together with its valid-edge labels"""
    instance_path: str
    label_path: str
    edge_ids: List[int]
    labels: List[int]
    lp_objective: float = 0.0
    ip_objective: float = 0.0

    def validate(self) -> bool:
        if len(self.edge_ids) != len(self.labels):
            raise ValueError(
                f"{self.label_path}: {len(self.labels)} labels for {len(self.edge_ids)} connection edges"
            )
        return True
