from typing import List, Tuple

import pytest

from graph import NodeKind, TERMINAL_KINDS, TimeSpaceGraph
from instgen import Trip, build_instance, generate
from models import GenConfig

SMALL_CONFIG = GenConfig(seed=3, n_trains=(6, 10), target_nodes=(10, 60), target_edges=(0, 2000))


def _toy_trips() -> List[Trip]:
    # 3-station line, bases at 0 and 2
    return [
        Trip(0, 1, 300, 330),
        Trip(1, 2, 350, 380),
        Trip(2, 1, 400, 430),
        Trip(1, 0, 450, 480),
        Trip(0, 1, 500, 530),
        Trip(1, 0, 560, 590),
    ]


@pytest.fixture
def toy_trips() -> List[Trip]:
    return _toy_trips()


@pytest.fixture
def toy_graph() -> TimeSpaceGraph:
    return build_instance(_toy_trips(), 3)


@pytest.fixture(scope="session")
def small_config() -> GenConfig:
    return SMALL_CONFIG


@pytest.fixture(scope="session")
def small_graph() -> TimeSpaceGraph:
    return generate(SMALL_CONFIG)


def all_duties(g: TimeSpaceGraph, max_minutes: int = 480) -> List[Tuple[Tuple[int, ...], int]]:
    """Every source-to-terminal edge path within the time cap, by exhaustive search."""
    found = []

    def walk(node: int, path: List[int], used: int) -> None:
        if g.nodes[node].kind in TERMINAL_KINDS:
            found.append((tuple(path), used))
            return
        for k in g.out_edges[node]:
            e = g.edges[k]
            if used + e.time_use <= max_minutes:
                walk(e.head, path + [k], used + e.time_use)

    for s in g.nodes:
        if s.kind is NodeKind.SOURCE:
            walk(s.id, [], 0)
    return found


@pytest.fixture
def enumerate_duties():
    return all_duties
