"""Pricing sub-problem: resource-constrained shortest paths by label setting.

Nodes are processed once in topological order; each node keeps a Pareto
frontier of (reduced cost, minutes used) labels.
"""
from bisect import bisect_right
from dataclasses import dataclass
from typing import List, Optional
import logging

import numpy as np

from graph import NodeKind, TERMINAL_KINDS, TimeSpaceGraph
from master import Column, RC_TOLERANCE
from models import MAX_DUTY_MINUTES

logger = logging.getLogger(__name__)


@dataclass
class Label:
    __slots__ = ("node", "rcost", "time_used", "pred", "edge")
    node: int
    rcost: float
    time_used: int
    pred: Optional["Label"]
    edge: Optional[int]

    def edge_path(self) -> List[int]:
        path = []
        label = self
        while label.edge is not None:
            path.append(label.edge)
            label = label.pred
        return path[::-1]


def dominance(a: Label, b: Label) -> bool:
    """True iff `a` is at least as good as `b` in both resources and better in one."""
    if a.rcost > b.rcost or a.time_used > b.time_used:
        return False
    return a.rcost < b.rcost or a.time_used < b.time_used


class ParetoFrontier:
    """Nondominated labels of one node, sorted by ascending reduced cost.

    On a Pareto frontier time strictly decreases as reduced cost grows, so
    both the dominance test and the eviction of dominated labels only look
    at neighbours of the insertion point.
    """

    def __init__(self):
        self.labels: List[Label] = []
        self._keys: List[float] = []

    def __len__(self) -> int:
        return len(self.labels)

    def insert(self, label: Label) -> bool:
        """Add `label` unless an existing label dominates or equals it."""
        pos = bisect_right(self._keys, label.rcost)
        if pos > 0 and self.labels[pos - 1].time_used <= label.time_used:
            return False
        # an equal-cost predecessor with more time is now dominated
        if pos > 0 and self._keys[pos - 1] == label.rcost:
            pos -= 1
            del self.labels[pos], self._keys[pos]
        end = pos
        while end < len(self.labels) and self.labels[end].time_used >= label.time_used:
            end += 1
        self.labels[pos:end] = [label]
        self._keys[pos:end] = [label.rcost]
        return True


def edge_weights(g: TimeSpaceGraph, duals: np.ndarray) -> np.ndarray:
    """Fixed cost minus the dual of the trip an edge enters."""
    weights = np.array([e.fixed_cost for e in g.edges], dtype=float)
    row_of = g.row_of
    for e in g.edges:
        if g.nodes[e.head].kind is NodeKind.SERVICE:
            weights[e.id] -= duals[row_of[e.head]]
    return weights


def price(g: TimeSpaceGraph, duals: np.ndarray, max_cols: int = 10,
          max_minutes: int = MAX_DUTY_MINUTES, tol: float = RC_TOLERANCE) -> List[Column]:
    """Up to `max_cols` duties with reduced cost below -tol, most negative first.

    Edge ids on the returned columns refer to the full graph, so a reduced
    graph prices into the same pool. An empty list means no improving duty
    exists on `g`.
    """
    if len(duals) != g.n_trips:
        raise ValueError(f"expected {g.n_trips} duals, got {len(duals)}")
    weights = edge_weights(g, duals)
    frontiers = [ParetoFrontier() for _ in g.nodes]
    finished: List[Label] = []

    for s in g.source_nodes:
        frontiers[s].insert(Label(s, 0.0, 0, None, None))

    for v in g.topo_order:
        if g.nodes[v].kind in TERMINAL_KINDS:
            continue
        for label in frontiers[v].labels:
            for e_id in g.out_edges[v]:
                edge = g.edges[e_id]
                used = label.time_used + edge.time_use
                if used > max_minutes:
                    continue
                extended = Label(edge.head, label.rcost + weights[e_id], used, label, e_id)
                # minutes no longer matter once a duty has ended
                if g.nodes[edge.head].kind in TERMINAL_KINDS:
                    if extended.rcost < -tol:
                        finished.append(extended)
                else:
                    frontiers[edge.head].insert(extended)

    finished.sort(key=lambda l: (l.rcost, l.time_used, l.node))
    columns: List[Column] = []
    seen = set()
    for label in finished:
        if len(columns) >= max_cols:
            break
        path = label.edge_path()
        full_path = tuple(g.full_edge_id(k) for k in path)
        if full_path in seen:
            continue
        seen.add(full_path)
        rows = tuple(sorted(g.row_of[g.edges[k].head] for k in path
                            if g.nodes[g.edges[k].head].kind is NodeKind.SERVICE))
        cost = float(sum(g.edges[k].fixed_cost for k in path))
        columns.append(Column(edge_path=full_path, rows=rows, cost=cost))

    logger.debug(f"pricing found {len(finished)} improving duties, returning {len(columns)}")
    return columns
