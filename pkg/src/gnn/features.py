"""Raw node/edge features, min-max normalization and model-ready arrays."""
from dataclasses import dataclass
from typing import Dict, List, Sequence
import logging

import numpy as np

from graph import EdgeKind, NodeKind, NO_STATION, TimeSpaceGraph, DEADHEAD_COST
from models import DAY_MINUTES, MAX_DUTY_MINUTES

logger = logging.getLogger(__name__)

NODE_KINDS = (NodeKind.SOURCE, NodeKind.SINK, NodeKind.SERVICE, NodeKind.DEADHEAD)
EDGE_KINDS = (EdgeKind.SIGN_IN, EdgeKind.SIGN_OFF, EdgeKind.DEADHEAD, EdgeKind.CONNECTION)


@dataclass
class Features:
    x_init: np.ndarray  # (|V|, 4 + 2S + 3)
    e_init: np.ndarray  # (|E|, 7)


def node_feature_dim(n_stations: int) -> int:
    return len(NODE_KINDS) + 2 * n_stations + 3


EDGE_FEATURE_DIM = len(EDGE_KINDS) + 3


def featurize(g: TimeSpaceGraph) -> Features:
    """Node: kind one-hot, departure/arrival station one-hots, t_dep, t_arr, duration.
    Edge: kind one-hot, time_use, transit gap, fixed cost.
    """
    S = g.n_stations
    x = np.zeros((len(g.nodes), node_feature_dim(S)))
    for node in g.nodes:
        row = x[node.id]
        row[NODE_KINDS.index(node.kind)] = 1.0
        if node.station_dep != NO_STATION:
            row[4 + node.station_dep] = 1.0
        if node.station_arr != NO_STATION:
            row[4 + S + node.station_arr] = 1.0
        row[4 + 2 * S] = node.t_dep / DAY_MINUTES
        row[4 + 2 * S + 1] = node.t_arr / DAY_MINUTES
        row[4 + 2 * S + 2] = node.duration / MAX_DUTY_MINUTES

    e = np.zeros((len(g.edges), EDGE_FEATURE_DIM))
    for edge in g.edges:
        row = e[edge.id]
        row[EDGE_KINDS.index(edge.kind)] = 1.0
        row[4] = edge.time_use / MAX_DUTY_MINUTES
        if edge.kind is EdgeKind.CONNECTION:
            row[5] = (g.nodes[edge.head].t_dep - g.nodes[edge.tail].t_arr) / MAX_DUTY_MINUTES
        row[6] = edge.fixed_cost / DEADHEAD_COST
    return Features(x, e)


@dataclass
class NormStats:
    """Per-dimension (min, max) fitted on training graphs."""
    x_min: np.ndarray
    x_max: np.ndarray
    e_min: np.ndarray
    e_max: np.ndarray

    @classmethod
    def fit(cls, features: Sequence[Features]) -> "NormStats":
        if not features:
            raise ValueError("cannot fit normalization on zero graphs")
        dims = {f.x_init.shape[1] for f in features}
        if len(dims) != 1:
            raise ValueError(f"graphs disagree on node feature width: {sorted(dims)}")
        x = np.vstack([f.x_init for f in features])
        e = np.vstack([f.e_init for f in features])
        return cls(x.min(axis=0), x.max(axis=0), e.min(axis=0), e.max(axis=0))

    @staticmethod
    def _scale(a: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (a - lo) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def normalize(self, f: Features) -> Features:
        return Features(self._scale(f.x_init, self.x_min, self.x_max),
                        self._scale(f.e_init, self.e_min, self.e_max))

    def to_dict(self) -> Dict[str, List[float]]:
        return {k: getattr(self, k).tolist() for k in ("x_min", "x_max", "e_min", "e_max")}

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> "NormStats":
        return cls(*(np.asarray(data[k], dtype=float) for k in ("x_min", "x_max", "e_min", "e_max")))


@dataclass
class GraphInputs:
    """Normalized features plus the index arrays message passing needs.

    Every edge appears twice in the half-edge arrays, once centred on its
    tail and once on its head, so aggregation treats the graph as undirected.
    """
    xn: np.ndarray
    en: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    centers: np.ndarray
    half_edges: np.ndarray
    neighbors: np.ndarray
    connections: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.xn.shape[0]

    @property
    def n_edges(self) -> int:
        return self.en.shape[0]


def prepare_inputs(g: TimeSpaceGraph, norm_stats: NormStats) -> GraphInputs:
    f = norm_stats.normalize(featurize(g))
    tails = np.array([e.tail for e in g.edges], dtype=np.int64)
    heads = np.array([e.head for e in g.edges], dtype=np.int64)
    edge_idx = np.arange(len(g.edges), dtype=np.int64)
    return GraphInputs(
        xn=f.x_init,
        en=f.e_init,
        tails=tails,
        heads=heads,
        centers=np.concatenate([tails, heads]),
        half_edges=np.concatenate([edge_idx, edge_idx]),
        neighbors=np.concatenate([heads, tails]),
        connections=np.array(g.connection_edge_ids, dtype=np.int64),
    )
