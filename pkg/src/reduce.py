"""Score connection edges with a trained model and keep the promising ones."""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from gnn.model import EdgeScores, PredictionModel
from graph import Edge, EdgeKind, NodeKind, TERMINAL_KINDS, TimeSpaceGraph, build_adjacency
from models import ReductionConfig

logger = logging.getLogger(__name__)


@dataclass
class ReducedGraphStats:
    connections_full: int
    connections_kept: int
    restored_by_guard: int
    threshold: float

    @property
    def kept_fraction(self) -> float:
        return self.connections_kept / self.connections_full if self.connections_full else 1.0


def predict_valid_edges(model: PredictionModel, g: TimeSpaceGraph) -> EdgeScores:
    return model.score(g)


def _score_lookup(g: TimeSpaceGraph, scores: EdgeScores) -> Dict[int, float]:
    lookup = scores.as_dict()
    missing = [k for k in g.connection_edge_ids if k not in lookup]
    if missing:
        raise ValueError(f"{len(missing)} connection edges have no score, e.g. {missing[:5]}")
    return lookup


def _guard(g: TimeSpaceGraph, kept: set, score: Dict[int, float], forward: bool) -> List[int]:
    """Give every stranded trip back its best connection to the connected part.

    Forward: trips unreachable from a source regain their best incoming
    connection from a reachable trip. Backward: the same for trips that can
    no longer reach a sink or the deadhead node.
    """
    order = g.topo_order if forward else tuple(reversed(g.topo_order))
    inward = g.in_edges if forward else g.out_edges
    anchors = (NodeKind.SOURCE,) if forward else TERMINAL_KINDS
    connected = [False] * len(g.nodes)
    restored: List[int] = []

    def far_end(e: Edge) -> int:
        return e.tail if forward else e.head

    for v in order:
        node = g.nodes[v]
        if node.kind in anchors:
            connected[v] = True
            continue
        edges = [g.edges[k] for k in inward[v]]
        if any(e.id in kept and connected[far_end(e)] for e in edges):
            connected[v] = True
            continue
        if node.kind is not NodeKind.SERVICE:
            continue
        options = [e for e in edges if e.kind is EdgeKind.CONNECTION and connected[far_end(e)]]
        if options:
            best = max(options, key=lambda e: (score[e.id], -e.id))
            kept.add(best.id)
            restored.append(best.id)
            connected[v] = True
    return restored


def reduce_graph(g: TimeSpaceGraph, scores: EdgeScores,
                 cfg: ReductionConfig) -> Tuple[TimeSpaceGraph, ReducedGraphStats]:
    """Reduced graph plus statistics on what was kept."""
    cfg.validate()
    score = _score_lookup(g, scores)
    kept = {e.id for e in g.edges
            if e.kind is not EdgeKind.CONNECTION or score[e.id] > cfg.threshold}
    restored: List[int] = []
    if cfg.connectivity_guard:
        restored = _guard(g, kept, score, forward=True) + _guard(g, kept, score, forward=False)

    keep_ids = sorted(kept)
    edges = []
    for new_id, old_id in enumerate(keep_ids):
        e = g.edges[old_id]
        edges.append(Edge(new_id, e.kind, e.tail, e.head, e.time_use, e.fixed_cost))
    parents = [g.full_edge_id(k) for k in keep_ids]
    reduced = build_adjacency(g.nodes, edges, g.crew_bases, g.n_stations, parents)

    stats = ReducedGraphStats(
        connections_full=len(g.connection_edge_ids),
        connections_kept=len(reduced.connection_edge_ids),
        restored_by_guard=len(restored),
        threshold=cfg.threshold,
    )
    if restored:
        logger.info(f"Connectivity guard restored {len(restored)} connection edges")
    logger.debug(f"Reduced graph keeps {stats.connections_kept}/{stats.connections_full} connections")
    return reduced, stats


def build_reduced_graph(g: TimeSpaceGraph, scores: EdgeScores, cfg: ReductionConfig) -> TimeSpaceGraph:
    return reduce_graph(g, scores, cfg)[0]


def recall_at(p: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    """Share of positive edges scored above `threshold`; 1.0 when there are none."""
    labels = np.asarray(labels)
    positives = labels == 1
    if not positives.any():
        return 1.0
    return float((np.asarray(p)[positives] > threshold).mean())


def write_scores_csv(path: Path, g: TimeSpaceGraph, scores: EdgeScores,
                     labels: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Dump per-edge scores sorted by descending score."""
    df = pd.DataFrame({
        "edge_id": scores.edge_ids,
        "tail": [g.edges[k].tail for k in scores.edge_ids],
        "head": [g.edges[k].head for k in scores.edge_ids],
        "score": scores.p,
        "label": pd.array(list(labels) if labels is not None else [None] * len(scores.p), dtype="Int64"),
    })
    df = df.sort_values(["score", "edge_id"], ascending=[False, True], kind="mergesort")
    df.to_csv(path, index=False)
    return df
