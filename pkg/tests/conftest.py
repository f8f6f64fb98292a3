"""Shared fixtures: reference graphs, random-tree generators, brute-force oracles."""

from __future__ import annotations

import math
import random

import pytest

from gral.graph import EnvironmentGraph, Gateway, GraphPosition, Junction, Link, build_graph
from gral.packages import GatewayObservation, NodeContact, Package

CHAIN_RADIUS = math.sqrt(10.0)


@pytest.fixture
def chain_graph() -> EnvironmentGraph:
    """Three gated junctions in a chain: a --50-- b --50-- c (root)."""
    return build_graph(
        [
            Junction("a", Gateway("gw-a", "a", CHAIN_RADIUS)),
            Junction("b", Gateway("gw-b", "b", CHAIN_RADIUS)),
            Junction("c", Gateway("gw-c", "c", CHAIN_RADIUS)),
        ],
        [Link("a", "b", 50.0), Link("b", "c", 50.0)],
        "c",
    )


@pytest.fixture
def y_graph() -> EnvironmentGraph:
    """Two branches meeting at c, then one link to the root f."""
    return build_graph(
        [Junction("a"), Junction("b"), Junction("c"), Junction("f")],
        [Link("a", "c", 3.0), Link("b", "c", 4.0), Link("c", "f", 5.0)],
        "f",
    )


def random_tree(rng: random.Random, n: int) -> EnvironmentGraph:
    """Random weighted tree with n junctions; each new vertex hangs off an earlier one."""
    junctions = [Junction(f"v{i}") for i in range(n)]
    links = [
        Link(f"v{i}", f"v{rng.randrange(i)}", rng.uniform(1.0, 10.0)) for i in range(1, n)
    ]
    return build_graph(junctions, links, "v0")


def random_position(rng: random.Random, graph: EnvironmentGraph) -> GraphPosition:
    link = rng.choice(graph.links)
    return GraphPosition(link.u, link.v, rng.uniform(0.0, link.length), link.length)


def enumerate_simple_paths(graph: EnvironmentGraph, u: str, v: str) -> list[list[str]]:
    """All simple junction paths from u to v by exhaustive DFS (oracle)."""
    paths = []

    def dfs(cur: str, seen: list[str]) -> None:
        if cur == v:
            paths.append(list(seen))
            return
        for nxt, _length in graph.adjacency[cur]:
            if nxt not in seen:
                seen.append(nxt)
                dfs(nxt, seen)
                seen.pop()

    dfs(u, [u])
    return paths


def oracle_confluence(graph: EnvironmentGraph, v_a: str, v_b: str, v_f: str) -> str:
    """Brute force: intersect both vertex paths, pick the vertex farthest from v_f."""
    paths_a = enumerate_simple_paths(graph, v_a, v_f)
    paths_b = enumerate_simple_paths(graph, v_b, v_f)
    assert len(paths_a) == 1 and len(paths_b) == 1
    shared = [v for v in paths_a[0] if v in set(paths_b[0])]
    return max(shared, key=lambda v: len(enumerate_simple_paths(graph, v, v_f)[0]))


# -- crafted line-pipe streams -------------------------------------------------


def line_position(x: float) -> GraphPosition:
    """Point x in [0, 100] on the chain graph a --50-- b --50-- c."""
    if x <= 50.0:
        return GraphPosition("a", "b", x, 50.0)
    return GraphPosition("b", "c", x - 50.0, 50.0)


def line_observations(x: float, radius: float = CHAIN_RADIUS) -> tuple[GatewayObservation, ...]:
    obs = []
    for gw, gx in (("gw-a", 0.0), ("gw-b", 50.0), ("gw-c", 100.0)):
        d = abs(x - gx)
        if d <= radius:
            obs.append(GatewayObservation(gw, radius - d))
    return tuple(obs)


def craft_streams(
    graph: EnvironmentGraph,
    trajectories: dict[str, list[GraphPosition]],
    contact_radius: float,
) -> tuple[dict[str, list[Package]], dict[tuple[str, int], GraphPosition]]:
    """Package streams plus ground truth for hand-crafted node trajectories.

    `trajectories` maps node id to its position at tick 0, 1, ... (the series
    ends when the node leaves the system). Observations follow the linear
    falloff model against the graph's gateways; contacts are mutual whenever
    two nodes are simultaneously present within the contact radius.
    """
    streams: dict[str, list[Package]] = {node: [] for node in trajectories}
    truth: dict[tuple[str, int], GraphPosition] = {}
    for node, series in trajectories.items():
        for tick, pos in enumerate(series):
            obs = []
            for gw_id in sorted(graph.gateways):
                gateway = graph.gateways[gw_id]
                d = graph.geodesic_distance(pos, graph.position_at(gateway.junction))
                if d <= gateway.radius:
                    obs.append(GatewayObservation(gw_id, gateway.radius - d))
            contacts = []
            for peer, other in trajectories.items():
                if peer == node or tick >= len(other):
                    continue
                d = graph.geodesic_distance(pos, other[tick])
                if d <= contact_radius:
                    contacts.append(NodeContact(peer, contact_radius - d))
            seq = tick + 1
            streams[node].append(
                Package(node, seq, float(tick), tuple(obs), tuple(contacts))
            )
            truth[(node, seq)] = pos
    return streams, truth


def chain_trajectory(positions: list[float]) -> list[GraphPosition]:
    return [line_position(x) for x in positions]
