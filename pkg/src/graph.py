"""Time-space network of trips and feasible connections.

Nodes and edges carry dense integer ids so that feature matrices and LP
columns can index arrays directly. A graph is immutable once built.
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple
import heapq
import json
import logging

from models import MAX_DUTY_MINUTES, MIN_TRANSIT_MINUTES

FORMAT_TAG = "rcsp-v1"
NO_STATION = -1
SIGN_OFF_COST = 1.0
DEADHEAD_COST = 1.5

logger = logging.getLogger(__name__)


class GraphError(Exception):
    """Base class for graph construction and parsing failures."""


class CycleDetected(GraphError):
    """Raised when the edge set contains a directed cycle."""


class ParseError(GraphError):
    """Raised on a malformed instance document."""


class NodeKind(str, Enum):
    SOURCE = "Source"
    SINK = "Sink"
    SERVICE = "Service"
    DEADHEAD = "Deadhead"


class EdgeKind(str, Enum):
    SIGN_IN = "SignIn"
    SIGN_OFF = "SignOff"
    DEADHEAD = "DeadheadEdge"
    CONNECTION = "Connection"


# (tail kind, head kind) each edge kind must join
EDGE_ENDPOINTS = {
    EdgeKind.SIGN_IN: (NodeKind.SOURCE, NodeKind.SERVICE),
    EdgeKind.SIGN_OFF: (NodeKind.SERVICE, NodeKind.SINK),
    EdgeKind.DEADHEAD: (NodeKind.SERVICE, NodeKind.DEADHEAD),
    EdgeKind.CONNECTION: (NodeKind.SERVICE, NodeKind.SERVICE),
}

EDGE_COSTS = {
    EdgeKind.SIGN_IN: 0.0,
    EdgeKind.SIGN_OFF: SIGN_OFF_COST,
    EdgeKind.DEADHEAD: DEADHEAD_COST,
    EdgeKind.CONNECTION: 0.0,
}

TERMINAL_KINDS = (NodeKind.SINK, NodeKind.DEADHEAD)


@dataclass(frozen=True)
class Node:
    """A trip (Service) or a duty boundary node.

    Non-Service nodes carry t_dep = t_arr = 0; the Deadhead node carries
    station NO_STATION on both ends.
    """
    id: int
    kind: NodeKind
    station_dep: int = NO_STATION
    station_arr: int = NO_STATION
    t_dep: int = 0
    t_arr: int = 0

    @property
    def duration(self) -> int:
        return self.t_arr - self.t_dep


@dataclass(frozen=True)
class Edge:
    id: int
    kind: EdgeKind
    tail: int
    head: int
    time_use: int
    fixed_cost: float


@dataclass(frozen=True)
class TimeSpaceGraph:
    """Directed acyclic time-space network.

    `parent_edge_ids` is set on reduced graphs and maps each edge id back to
    the id of the same edge in the full graph.
    """
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    crew_bases: FrozenSet[int]
    n_stations: int
    out_edges: Tuple[Tuple[int, ...], ...]
    in_edges: Tuple[Tuple[int, ...], ...]
    topo_order: Tuple[int, ...]
    parent_edge_ids: Optional[Tuple[int, ...]] = None

    @cached_property
    def trip_nodes(self) -> Tuple[int, ...]:
        """Service node ids in ascending order; position = row index."""
        return tuple(n.id for n in self.nodes if n.kind is NodeKind.SERVICE)

    @cached_property
    def row_of(self) -> Dict[int, int]:
        return {node_id: row for row, node_id in enumerate(self.trip_nodes)}

    @property
    def n_trips(self) -> int:
        return len(self.trip_nodes)

    @cached_property
    def connection_edge_ids(self) -> Tuple[int, ...]:
        return tuple(e.id for e in self.edges if e.kind is EdgeKind.CONNECTION)

    @cached_property
    def source_nodes(self) -> Tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.kind is NodeKind.SOURCE)

    def full_edge_id(self, edge_id: int) -> int:
        if self.parent_edge_ids is None:
            return edge_id
        return self.parent_edge_ids[edge_id]


def build_adjacency(nodes: Sequence[Node], edges: Sequence[Edge],
                    crew_bases: Iterable[int] = (), n_stations: int = 0,
                    parent_edge_ids: Optional[Sequence[int]] = None) -> TimeSpaceGraph:
    """Compute adjacency lists and a topological order.

    Raises:
        GraphError: ids are not dense or an edge references a missing node
        CycleDetected: the edges contain a directed cycle
    """
    n = len(nodes)
    for i, node in enumerate(nodes):
        if node.id != i:
            raise GraphError(f"node at position {i} has id {node.id}; ids must be dense")
    out_edges: List[List[int]] = [[] for _ in range(n)]
    in_edges: List[List[int]] = [[] for _ in range(n)]
    for k, edge in enumerate(edges):
        if edge.id != k:
            raise GraphError(f"edge at position {k} has id {edge.id}; ids must be dense")
        if not (0 <= edge.tail < n and 0 <= edge.head < n):
            raise GraphError(f"edge {edge.id} references a missing node ({edge.tail} -> {edge.head})")
        out_edges[edge.tail].append(edge.id)
        in_edges[edge.head].append(edge.id)

    # Kahn's algorithm, smallest ready id first
    indegree = [len(lst) for lst in in_edges]
    ready = [i for i in range(n) if indegree[i] == 0]
    heapq.heapify(ready)
    order: List[int] = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for edge_id in out_edges[v]:
            head = edges[edge_id].head
            indegree[head] -= 1
            if indegree[head] == 0:
                heapq.heappush(ready, head)
    if len(order) != n:
        stuck = sorted(i for i in range(n) if indegree[i] > 0)
        raise CycleDetected(f"directed cycle through nodes {stuck[:10]}")

    if parent_edge_ids is not None and len(parent_edge_ids) != len(edges):
        raise GraphError("parent_edge_ids must map every edge")

    return TimeSpaceGraph(
        nodes=tuple(nodes),
        edges=tuple(edges),
        crew_bases=frozenset(crew_bases),
        n_stations=n_stations,
        out_edges=tuple(tuple(lst) for lst in out_edges),
        in_edges=tuple(tuple(lst) for lst in in_edges),
        topo_order=tuple(order),
        parent_edge_ids=tuple(parent_edge_ids) if parent_edge_ids is not None else None,
    )


def validate_graph(g: TimeSpaceGraph) -> List[str]:
    """Return every invariant violation found in `g`; empty iff valid."""
    violations: List[str] = []
    n_nodes = len(g.nodes)

    def station_ok(s: int) -> bool:
        return 0 <= s < g.n_stations

    for node in g.nodes:
        tag = f"node {node.id} ({node.kind.value})"
        if node.kind is NodeKind.SERVICE:
            if node.t_arr <= node.t_dep:
                violations.append(f"{tag}: arrival {node.t_arr} not after departure {node.t_dep}")
            if not (station_ok(node.station_dep) and station_ok(node.station_arr)):
                violations.append(f"{tag}: station out of range")
        elif node.kind in (NodeKind.SOURCE, NodeKind.SINK):
            if node.station_dep != node.station_arr or node.station_dep not in g.crew_bases:
                violations.append(f"{tag}: not pinned to a crew base")
        elif node.station_dep != NO_STATION or node.station_arr != NO_STATION:
            violations.append(f"{tag}: deadhead node must use station sentinel {NO_STATION}")

    for edge in g.edges:
        tag = f"edge {edge.id} ({edge.kind.value})"
        if not (0 <= edge.tail < n_nodes and 0 <= edge.head < n_nodes):
            violations.append(f"{tag}: endpoint out of range")
            continue
        tail, head = g.nodes[edge.tail], g.nodes[edge.head]
        want_tail, want_head = EDGE_ENDPOINTS[edge.kind]
        if tail.kind is not want_tail or head.kind is not want_head:
            violations.append(
                f"{tag}: joins {tail.kind.value} -> {head.kind.value}, "
                f"expected {want_tail.value} -> {want_head.value}"
            )
            continue
        if abs(edge.fixed_cost - EDGE_COSTS[edge.kind]) > 1e-12:
            violations.append(f"{tag}: fixed cost {edge.fixed_cost} should be {EDGE_COSTS[edge.kind]}")
        if edge.time_use < 0:
            violations.append(f"{tag}: negative time use {edge.time_use}")
        if edge.kind is EdgeKind.CONNECTION:
            gap = head.t_dep - tail.t_arr
            if gap < MIN_TRANSIT_MINUTES:
                violations.append(f"{tag}: transit gap {gap} min below {MIN_TRANSIT_MINUTES}")
            if head.station_dep != tail.station_arr:
                violations.append(
                    f"{tag}: station mismatch ({tail.station_arr} -> {head.station_dep})"
                )
        elif edge.kind is EdgeKind.SIGN_IN and head.station_dep != tail.station_dep:
            violations.append(f"{tag}: trip does not depart from the source's crew base")
        elif edge.kind is EdgeKind.SIGN_OFF and tail.station_arr != head.station_arr:
            violations.append(f"{tag}: trip does not arrive at the sink's crew base")
        elif edge.kind is EdgeKind.DEADHEAD and tail.station_arr in g.crew_bases:
            violations.append(f"{tag}: trip arriving at a crew base must sign off instead")

    # adjacency and order consistency
    if len(g.out_edges) != n_nodes or len(g.in_edges) != n_nodes:
        violations.append("adjacency lists do not cover every node")
    else:
        for edge in g.edges:
            if edge.id not in g.out_edges[edge.tail] or edge.id not in g.in_edges[edge.head]:
                violations.append(f"edge {edge.id}: missing from adjacency lists")
    if sorted(g.topo_order) != list(range(n_nodes)):
        violations.append("topo_order is not a permutation of the nodes")
    else:
        position = {v: i for i, v in enumerate(g.topo_order)}
        for edge in g.edges:
            if 0 <= edge.tail < n_nodes and 0 <= edge.head < n_nodes \
                    and position[edge.tail] >= position[edge.head]:
                violations.append(f"edge {edge.id}: tail does not precede head in topo_order")
    return violations


def duty_violations(g: TimeSpaceGraph, edge_path: Sequence[int],
                    max_minutes: int = MAX_DUTY_MINUTES) -> List[str]:
    """Check that `edge_path` is a legal duty on `g`."""
    problems: List[str] = []
    if not edge_path:
        return ["empty path"]
    edges = [g.edges[k] for k in edge_path]
    if g.nodes[edges[0].tail].kind is not NodeKind.SOURCE:
        problems.append("duty does not start at a source")
    if g.nodes[edges[-1].head].kind not in TERMINAL_KINDS:
        problems.append("duty does not end at a sink or the deadhead node")
    for prev, nxt in zip(edges, edges[1:]):
        if prev.head != nxt.tail:
            problems.append(f"edges {prev.id} and {nxt.id} are not consecutive")
    used = sum(e.time_use for e in edges)
    if used > max_minutes:
        problems.append(f"working time {used} exceeds {max_minutes}")
    return problems


def induced_subgraph(g: TimeSpaceGraph, service_ids: Iterable[int]) -> TimeSpaceGraph:
    """Restrict `g` to the given trips; boundary nodes are always kept."""
    keep_services = set(service_ids)
    kept = [n for n in g.nodes if n.kind is not NodeKind.SERVICE or n.id in keep_services]
    remap = {n.id: i for i, n in enumerate(kept)}
    nodes = [Node(remap[n.id], n.kind, n.station_dep, n.station_arr, n.t_dep, n.t_arr) for n in kept]
    edges: List[Edge] = []
    for e in g.edges:
        if e.tail in remap and e.head in remap:
            edges.append(Edge(len(edges), e.kind, remap[e.tail], remap[e.head], e.time_use, e.fixed_cost))
    return build_adjacency(nodes, edges, g.crew_bases, g.n_stations)


def serialize_instance(g: TimeSpaceGraph) -> bytes:
    """Encode `g` as an rcsp-v1 document, one node or edge per line."""
    def record(obj: Dict) -> str:
        return "  " + json.dumps(obj, separators=(", ", ": "))

    node_lines = [record({
        "id": n.id, "kind": n.kind.value, "station_dep": n.station_dep,
        "station_arr": n.station_arr, "t_dep": n.t_dep, "t_arr": n.t_arr,
    }) for n in g.nodes]
    edge_lines = [record({
        "id": e.id, "kind": e.kind.value, "tail": e.tail, "head": e.head,
        "time_use": e.time_use, "fixed_cost": float(e.fixed_cost),
    }) for e in g.edges]
    header = json.dumps({"format": FORMAT_TAG, "stations": g.n_stations,
                         "crew_bases": sorted(g.crew_bases)})
    text = (
        header[:-1] + ",\n"
        + ' "nodes": [\n' + ",\n".join(node_lines) + "\n ],\n"
        + ' "edges": [\n' + ",\n".join(edge_lines) + "\n ]\n}\n"
    )
    return text.encode("utf-8")


def _field(record: Dict, name: str, kind: type, where: str):
    if name not in record:
        raise ParseError(f"{where}: missing field '{name}'")
    value = record[name]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ParseError(f"{where}.{name}: expected an integer, got {value!r}")
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{where}.{name}: expected a number, got {value!r}")
        return float(value)
    if kind is str and not isinstance(value, str):
        raise ParseError(f"{where}.{name}: expected a string, got {value!r}")
    if kind is list and not isinstance(value, list):
        raise ParseError(f"{where}.{name}: expected a list, got {type(value).__name__}")
    return value


def parse_instance(data: bytes) -> TimeSpaceGraph:
    """Decode an rcsp-v1 document.

    Raises:
        ParseError: with line or field context when the document is malformed
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise ParseError(f"instance is not UTF-8 text: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a single object")
    if doc.get("format") != FORMAT_TAG:
        raise ParseError(f"format: expected '{FORMAT_TAG}', got {doc.get('format')!r}")

    n_stations = _field(doc, "stations", int, "instance")
    crew_bases = _field(doc, "crew_bases", list, "instance")
    for i, base in enumerate(crew_bases):
        if isinstance(base, bool) or not isinstance(base, int) or not 0 <= base < n_stations:
            raise ParseError(f"instance.crew_bases[{i}]: expected a station index in [0, {n_stations}), "
                             f"got {base!r}")
    raw_nodes = _field(doc, "nodes", list, "instance")
    raw_edges = _field(doc, "edges", list, "instance")

    nodes: List[Node] = []
    for i, rec in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        if not isinstance(rec, dict):
            raise ParseError(f"{where}: expected an object")
        kind_name = _field(rec, "kind", str, where)
        try:
            kind = NodeKind(kind_name)
        except ValueError:
            raise ParseError(f"{where}.kind: unknown node kind {kind_name!r}") from None
        nodes.append(Node(
            id=_field(rec, "id", int, where), kind=kind,
            station_dep=_field(rec, "station_dep", int, where),
            station_arr=_field(rec, "station_arr", int, where),
            t_dep=_field(rec, "t_dep", int, where), t_arr=_field(rec, "t_arr", int, where),
        ))

    edges: List[Edge] = []
    for k, rec in enumerate(raw_edges):
        where = f"edges[{k}]"
        if not isinstance(rec, dict):
            raise ParseError(f"{where}: expected an object")
        kind_name = _field(rec, "kind", str, where)
        try:
            kind = EdgeKind(kind_name)
        except ValueError:
            raise ParseError(f"{where}.kind: unknown edge kind {kind_name!r}") from None
        edges.append(Edge(
            id=_field(rec, "id", int, where), kind=kind,
            tail=_field(rec, "tail", int, where), head=_field(rec, "head", int, where),
            time_use=_field(rec, "time_use", int, where),
            fixed_cost=_field(rec, "fixed_cost", float, where),
        ))

    try:
        return build_adjacency(nodes, edges, crew_bases, n_stations)
    except CycleDetected:
        raise
    except GraphError as e:
        raise ParseError(str(e)) from e
