"""Reference topologies used by tests, scenarios and demos."""
from __future__ import annotations

import json
import random
from importlib import resources

from .topo import Topology

__all__ = [
    "motivating_example",
    "motivating_target",
    "path_selection",
    "fattree",
    "chinanet",
    "random_connected",
    "FATTREE_TARGET_NODE",
    "CHINANET_TARGET_NODE",
]

FATTREE_TARGET_NODE = 6
CHINANET_TARGET_NODE = 8

# leaves standing in for the four Topology Zoo PoPs that carry no coordinates
# and are therefore missing from the geo-located data file
_CHINANET_EXTRA = {10: 39, 11: 28, 20: 18, 21: 27}


def motivating_example() -> Topology:
    """Five switches A..E with hosts H1 (A), H2 (E), H3 (C)."""
    links = [
        (("A", 1), ("D", 1)),
        (("A", 2), ("C", 1)),
        (("C", 2), ("B", 1)),
        (("D", 2), ("E", 2)),
        (("B", 2), ("E", 1)),
    ]
    hosts = [("H1", ("A", 3)), ("H2", ("E", 3)), ("H3", ("C", 3))]
    return Topology.from_links(links, hosts)


def motivating_target() -> Topology:
    """Deceptive view: C moved between A and D, A wired straight to B."""
    real = motivating_example()
    return real.with_links([
        (("A", 2), ("B", 1)),
        (("A", 1), ("C", 2)),
        (("C", 1), ("D", 1)),
        (("D", 2), ("E", 2)),
        (("B", 2), ("E", 1)),
    ])


def path_selection() -> Topology:
    """Four switches where A1->2B can be relayed with or without a loop."""
    links = [
        (("A", 1), ("C", 1)),
        (("C", 2), ("B", 1)),
        (("C", 3), ("D", 1)),
        (("D", 2), ("B", 2)),
    ]
    return Topology.from_links(links)


def fattree(k: int = 4) -> Topology:
    """k-ary fat tree whose leaf switches each carry one host.

    Numbering for k=4: cores 0-3, aggregation 4-11 (two per pod), edge
    12-19, leaves 20-35.  Leaves use port 1 upward and port 2 for the host.
    """
    if k != 4:
        raise ValueError("only the k=4 layout is provided")
    half = k // 2
    pods = k
    n_core = half * half
    agg0 = n_core
    edge0 = agg0 + pods * half
    leaf0 = edge0 + pods * half
    links = []
    for pod in range(pods):
        for a in range(half):
            agg = agg0 + pod * half + a
            for c in range(half):
                core = a * half + c
                links.append(((core, pod + 1), (agg, c + 1)))
            for e in range(half):
                edge = edge0 + pod * half + e
                links.append(((agg, half + e + 1), (edge, a + 1)))
        for e in range(half):
            edge = edge0 + pod * half + e
            for l in range(half):
                leaf = leaf0 + (pod * half + e) * half + l
                links.append(((edge, half + l + 1), (leaf, 1)))
    n_leaves = pods * half * half
    hosts = [(f"h{leaf0 + i}", (leaf0 + i, 2)) for i in range(n_leaves)]
    return Topology.from_links(links, hosts)


def chinanet() -> Topology:
    """Chinanet backbone (Topology Zoo), 42 PoPs and 66 links, one host per PoP."""
    doc = json.loads(resources.files(__package__).joinpath("data/chinanet_zoo.json").read_text())
    edges = [tuple(e) for e in doc["edges"]]
    edges += sorted(_CHINANET_EXTRA.items())
    nodes = [n["id"] for n in doc["nodes"]] + list(_CHINANET_EXTRA)
    return Topology.from_edges(edges, nodes=nodes, host_nodes=nodes)


def random_connected(n: int, extra_edges: int, seed: int, hosts: bool = False,
                     shuffle_ports: bool = True) -> Topology:
    """Random connected simple graph: a random spanning tree plus extra edges."""
    rng = random.Random(seed)
    nodes = list(range(n))
    edges = set()
    order = nodes[:]
    rng.shuffle(order)
    for i in range(1, n):
        u, v = order[i], order[rng.randrange(i)]
        edges.add((min(u, v), max(u, v)))
    max_edges = n * (n - 1) // 2
    target = min(max_edges, len(edges) + extra_edges)
    while len(edges) < target:
        u, v = rng.sample(nodes, 2)
        edges.add((min(u, v), max(u, v)))
    edge_list = sorted(edges)
    if shuffle_ports:
        rng.shuffle(edge_list)
    return Topology.from_edges(edge_list, nodes=nodes, host_nodes=nodes if hosts else ())

