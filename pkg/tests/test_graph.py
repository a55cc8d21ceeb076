import json
from dataclasses import replace

import pytest

from graph import (
    CycleDetected, Edge, EdgeKind, GraphError, Node, NodeKind, ParseError,
    build_adjacency, duty_violations, induced_subgraph, parse_instance,
    serialize_instance, validate_graph,
)


def _with_edge(g, index, **changes):
    edges = list(g.edges)
    edges[index] = replace(edges[index], **changes)
    return build_adjacency(g.nodes, edges, g.crew_bases, g.n_stations)


def test_single_node_without_edges():
    g = build_adjacency([Node(0, NodeKind.SERVICE, 0, 1, 10, 20)], [])
    assert g.out_edges == ((),)
    assert g.in_edges == ((),)
    assert g.topo_order == (0,)


def test_chain_orders_source_first_and_sink_last():
    nodes = [
        Node(0, NodeKind.SINK, 0, 0),
        Node(1, NodeKind.SERVICE, 0, 0, 300, 330),
        Node(2, NodeKind.SOURCE, 0, 0),
    ]
    edges = [
        Edge(0, EdgeKind.SIGN_IN, 2, 1, 30, 0.0),
        Edge(1, EdgeKind.SIGN_OFF, 1, 0, 0, 1.0),
    ]
    g = build_adjacency(nodes, edges, crew_bases=[0], n_stations=1)
    assert g.topo_order == (2, 1, 0)


def test_cycle_is_detected():
    nodes = [Node(i, NodeKind.SERVICE, 0, 0, 10 * i, 10 * i + 5) for i in range(3)]
    edges = [Edge(0, EdgeKind.CONNECTION, 0, 1, 5, 0.0),
             Edge(1, EdgeKind.CONNECTION, 1, 2, 5, 0.0),
             Edge(2, EdgeKind.CONNECTION, 2, 0, 5, 0.0)]
    with pytest.raises(CycleDetected):
        build_adjacency(nodes, edges)


def test_dangling_endpoint_is_rejected():
    with pytest.raises(GraphError):
        build_adjacency([Node(0, NodeKind.SOURCE, 0, 0)], [Edge(0, EdgeKind.SIGN_IN, 0, 5, 0, 0.0)])


def test_generated_instance_is_valid_and_topologically_ordered(small_graph):
    assert validate_graph(small_graph) == []
    position = {v: i for i, v in enumerate(small_graph.topo_order)}
    for e in small_graph.edges:
        assert position[e.tail] < position[e.head]


def test_short_transit_gap_is_reported_once(toy_graph):
    conn = toy_graph.connection_edge_ids[0]
    edge = toy_graph.edges[conn]
    head = toy_graph.nodes[edge.head]
    tail = toy_graph.nodes[edge.tail]
    nodes = list(toy_graph.nodes)
    # head departs 10 minutes after the tail arrives
    nodes[head.id] = replace(head, t_dep=tail.t_arr + 10, t_arr=tail.t_arr + 10 + head.duration)
    broken = build_adjacency(nodes, toy_graph.edges, toy_graph.crew_bases, toy_graph.n_stations)
    violations = [v for v in validate_graph(broken) if v.startswith(f"edge {conn} ")]
    assert len(violations) == 1
    assert "transit gap 10" in violations[0]


def test_wrong_sign_off_cost_is_reported(toy_graph):
    k = next(e.id for e in toy_graph.edges if e.kind is EdgeKind.SIGN_OFF)
    violations = validate_graph(_with_edge(toy_graph, k, fixed_cost=1.5))
    assert len(violations) == 1
    assert f"edge {k}" in violations[0] and "fixed cost" in violations[0]


def test_round_trip_is_identity(small_graph):
    again = parse_instance(serialize_instance(small_graph))
    assert again.nodes == small_graph.nodes
    assert again.edges == small_graph.edges
    assert again.crew_bases == small_graph.crew_bases
    assert again.n_stations == small_graph.n_stations
    assert again.topo_order == small_graph.topo_order


def test_serialized_instance_is_one_json_object(toy_graph):
    doc = json.loads(serialize_instance(toy_graph))
    assert doc["format"] == "rcsp-v1"
    assert set(doc) == {"format", "stations", "crew_bases", "nodes", "edges"}
    assert set(doc["edges"][0]) == {"id", "kind", "tail", "head", "time_use", "fixed_cost"}


def test_truncated_file_raises_parse_error(toy_graph):
    data = serialize_instance(toy_graph)
    with pytest.raises(ParseError, match="line"):
        parse_instance(data[: len(data) // 2])


def test_parse_error_names_the_field(toy_graph):
    doc = json.loads(serialize_instance(toy_graph))
    del doc["edges"][3]["head"]
    with pytest.raises(ParseError, match=r"edges\[3\]"):
        parse_instance(json.dumps(doc).encode())


def test_wrong_format_tag_is_rejected(toy_graph):
    doc = json.loads(serialize_instance(toy_graph))
    doc["format"] = "rcsp-v0"
    with pytest.raises(ParseError, match="format"):
        parse_instance(json.dumps(doc).encode())


@pytest.mark.parametrize("bases", [[[0]], ["a", "b"], [0.5], [True], [3], [-1]])
def test_bad_crew_base_is_rejected(toy_graph, bases):
    doc = json.loads(serialize_instance(toy_graph))
    doc["crew_bases"] = bases
    with pytest.raises(ParseError, match=r"instance\.crew_bases\[0\]"):
        parse_instance(json.dumps(doc).encode())


def test_duty_violations_accept_a_legal_duty(toy_graph):
    # source at base 0 -> first trip -> deadhead
    sign_in = next(e for e in toy_graph.edges if e.kind is EdgeKind.SIGN_IN)
    finish = next(k for k in toy_graph.out_edges[sign_in.head]
                  if toy_graph.edges[k].kind in (EdgeKind.SIGN_OFF, EdgeKind.DEADHEAD))
    assert duty_violations(toy_graph, [sign_in.id, finish]) == []
    assert duty_violations(toy_graph, [sign_in.id]) != []


def test_induced_subgraph_keeps_boundary_nodes(small_graph):
    trips = small_graph.trip_nodes[:5]
    sub = induced_subgraph(small_graph, trips)
    assert sub.n_trips == 5
    assert len(sub.nodes) == 5 + (len(small_graph.nodes) - small_graph.n_trips)
    assert validate_graph(sub) == []
