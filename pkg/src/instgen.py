"""Seeded generator of crew scheduling instances on a single railway line."""
from dataclasses import dataclass
from typing import Dict, List, Sequence
import logging

import numpy as np

from graph import (
    EDGE_COSTS, Edge, EdgeKind, Node, NodeKind, TimeSpaceGraph,
    build_adjacency, validate_graph,
)
from models import GenConfig, MAX_DUTY_MINUTES, MIN_TRANSIT_MINUTES

logger = logging.getLogger(__name__)


class GenerationExhausted(Exception):
    """Raised when no attempt produced an instance inside the node-count target."""


@dataclass(frozen=True)
class Trip:
    station_dep: int
    station_arr: int
    t_dep: int
    t_arr: int


def _run_train(stops: Sequence[int], departure: int, offsets: np.ndarray, dwell: int) -> List[Trip]:
    """Split one train run into trips between consecutive stops."""
    trips = []
    t = departure
    for a, b in zip(stops, stops[1:]):
        arrival = t + int(abs(offsets[b] - offsets[a]))
        trips.append(Trip(int(a), int(b), int(t), int(arrival)))
        t = arrival + dwell
    return trips


def _timetable(cfg: GenConfig, rng: np.random.Generator) -> List[Trip]:
    n_st = cfg.n_stations
    travel = rng.integers(cfg.travel_time_range[0], cfg.travel_time_range[1] + 1, size=n_st - 1)
    offsets = np.concatenate([[0], np.cumsum(travel)])
    t_min, t_max = cfg.day_window

    # One fixed early train out of each terminal keeps every base staffed
    trips = _run_train(list(range(n_st)), cfg.first_train_departure, offsets, cfg.dwell_minutes)
    trips += _run_train(list(range(n_st - 1, -1, -1)), cfg.first_train_departure, offsets, cfg.dwell_minutes)

    n_trains = int(rng.integers(cfg.n_trains[0], cfg.n_trains[1] + 1))
    for _ in range(n_trains):
        origin, dest = (int(s) for s in rng.choice(n_st, size=2, replace=False))
        step = 1 if dest > origin else -1
        stops = [origin]
        for s in range(origin + step, dest, step):
            if rng.random() < cfg.stop_probability:
                stops.append(s)
        stops.append(dest)
        run_time = int(abs(offsets[dest] - offsets[origin])) + cfg.dwell_minutes * (len(stops) - 2)
        latest = t_max - run_time
        if latest < t_min:
            continue
        departure = int(rng.integers(t_min, latest + 1))
        trips.extend(_run_train(stops, departure, offsets, cfg.dwell_minutes))
    return trips


def _coverable(trips: Sequence[Trip], bases: Sequence[int]) -> List[bool]:
    """Whether each trip lies on some duty within the working-time cap.

    A duty through trip v is cheapest in time when it starts as late as
    possible, so only the latest reachable sign-in time matters.
    """
    latest_start = [-np.inf] * len(trips)
    order = sorted(range(len(trips)), key=lambda i: trips[i].t_dep)
    for pos, v in enumerate(order):
        tv = trips[v]
        best = float(tv.t_dep) if tv.station_dep in bases else -np.inf
        for u in order[:pos]:
            tu = trips[u]
            if tu.station_arr == tv.station_dep and tv.t_dep - tu.t_arr >= MIN_TRANSIT_MINUTES:
                best = max(best, latest_start[u])
        latest_start[v] = best
    return [trips[i].t_arr - latest_start[i] <= MAX_DUTY_MINUTES for i in range(len(trips))]


def build_instance(trips: Sequence[Trip], n_stations: int) -> TimeSpaceGraph:
    """Time-space network over `trips` with crew bases at both ends of the line."""
    bases = (0, n_stations - 1)
    trips = sorted(trips, key=lambda t: (t.t_dep, t.t_arr, t.station_dep, t.station_arr))

    nodes: List[Node] = []
    source_of: Dict[int, int] = {}
    for b in bases:
        source_of[b] = len(nodes)
        nodes.append(Node(len(nodes), NodeKind.SOURCE, b, b))
    first_trip = len(nodes)
    for t in trips:
        nodes.append(Node(len(nodes), NodeKind.SERVICE, t.station_dep, t.station_arr, t.t_dep, t.t_arr))
    sink_of: Dict[int, int] = {}
    for b in bases:
        sink_of[b] = len(nodes)
        nodes.append(Node(len(nodes), NodeKind.SINK, b, b))
    deadhead = len(nodes)
    nodes.append(Node(deadhead, NodeKind.DEADHEAD))

    services = nodes[first_trip:first_trip + len(trips)]
    edges: List[Edge] = []

    def add(kind: EdgeKind, tail: int, head: int, time_use: int) -> None:
        edges.append(Edge(len(edges), kind, tail, head, int(time_use), EDGE_COSTS[kind]))

    for b in bases:
        for v in services:
            if v.station_dep == b:
                add(EdgeKind.SIGN_IN, source_of[b], v.id, v.duration)
    for u in services:
        for v in services:
            if v.station_dep == u.station_arr and v.t_dep - u.t_arr >= MIN_TRANSIT_MINUTES:
                add(EdgeKind.CONNECTION, u.id, v.id, v.t_arr - u.t_arr)
        if u.station_arr in sink_of:
            add(EdgeKind.SIGN_OFF, u.id, sink_of[u.station_arr], 0)
        else:
            add(EdgeKind.DEADHEAD, u.id, deadhead, 0)

    return build_adjacency(nodes, edges, bases, n_stations)


def generate(cfg: GenConfig) -> TimeSpaceGraph:
    """Generate a valid instance; deterministic for a fixed seed.

    Raises:
        GenerationExhausted: no attempt hit both the node and the edge target
    """
    cfg.validate()
    bases = (0, cfg.n_stations - 1)
    lo, hi = cfg.target_nodes
    edges_lo, edges_hi = cfg.target_edges
    sizes = []
    for attempt in range(cfg.max_attempts):
        rng = np.random.default_rng([cfg.seed, attempt])
        trips = _timetable(cfg, rng)
        keep = _coverable(trips, bases)
        trips = [t for t, ok in zip(trips, keep) if ok]
        n_nodes = len(trips) + 2 * len(bases) + 1
        sizes.append(n_nodes)
        if not lo <= n_nodes <= hi:
            continue
        g = build_instance(trips, cfg.n_stations)
        if not edges_lo <= len(g.edges) <= edges_hi:
            logger.debug(f"seed {cfg.seed}: attempt {attempt} gave {len(g.edges)} edges, outside the target")
            continue
        violations = validate_graph(g)
        if violations:
            # the generator builds edges by the same rules the validator checks
            raise RuntimeError(f"generated an invalid instance: {violations[:3]}")
        logger.debug(f"seed {cfg.seed}: attempt {attempt} gave {n_nodes} nodes, {len(g.edges)} edges")
        return g
    raise GenerationExhausted(
        f"seed {cfg.seed}: {cfg.max_attempts} attempts missed the node range [{lo}, {hi}] "
        f"or the edge range [{edges_lo}, {edges_hi}] (node counts {min(sizes)}..{max(sizes)})"
    )



def edge_census(g: TimeSpaceGraph) -> Dict[EdgeKind, int]:
    counts = {kind: 0 for kind in EdgeKind}
    for e in g.edges:
        counts[e.kind] += 1
    return counts
