"""Port-labeled switch topologies, the port adjacency matrix, and rewiring moves.

A topology is a simple graph over switches where every link joins two
concrete (node, port) endpoints.  Values are immutable once built; the
rewiring helpers return new instances.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Hashable, Iterable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "Endpoint",
    "Link",
    "Host",
    "Topology",
    "TopologyError",
    "RewireError",
    "node_key",
    "make_link",
    "pa_matrix",
    "from_pa_matrix",
    "eo_similarity",
    "two_switch",
    "two_switch_pairings",
    "node_reallocation",
    "reallocation_steps",
    "is_connected",
    "shortest_path",
    "bfs_distances",
    "degree_sequence",
    "to_dot",
]

NodeId = Hashable
Endpoint = tuple  # (NodeId, port)
Link = tuple  # (Endpoint, Endpoint), endpoints in canonical order


class TopologyError(ValueError):
    pass


class RewireError(TopologyError):
    """A rewiring move was refused; ``reason`` says why."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def node_key(n) -> tuple:
    # ints sort numerically and before strings; everything else by str()
    if isinstance(n, bool) or not isinstance(n, int):
        return (1, 0, str(n))
    return (0, n, "")


def ep_key(ep: Endpoint) -> tuple:
    return (node_key(ep[0]), ep[1])


def make_link(p: Endpoint, q: Endpoint) -> Link:
    p, q = tuple(p), tuple(q)
    if p == q:
        raise TopologyError(f"link joins endpoint {p} to itself")
    return (p, q) if ep_key(p) <= ep_key(q) else (q, p)


def link_str(link: Link) -> str:
    """'A2-1B' for letter-named switches, '13:3-2:14' when ids could run into port numbers."""
    (a, x), (b, y) = link
    if isinstance(a, str) and isinstance(b, str) and a.isalpha() and b.isalpha():
        return f"{a}{x}-{y}{b}"
    return f"{a}:{x}-{y}:{b}"


def _auto_mac(index: int, port: int) -> str:
    return "02:00:{:02x}:{:02x}:{:02x}:{:02x}".format(
        (index >> 8) & 0xFF, index & 0xFF, (port >> 8) & 0xFF, port & 0xFF)


def _auto_host_mac(index: int) -> str:
    return "0a:00:00:00:{:02x}:{:02x}".format((index >> 8) & 0xFF, index & 0xFF)


@dataclass(frozen=True)
class Host:
    id: str
    attach: Endpoint
    mac: str


class Topology:
    """Immutable port-labeled switch graph with attached hosts."""

    __slots__ = ("_ports", "_links", "_hosts", "_peer", "_adj", "_nodes", "_host_at")

    def __init__(self, ports: Mapping, links: Iterable = (), hosts: Iterable[Host] = ()):
        self._ports = {n: dict(sorted(pm.items())) for n, pm in ports.items()}
        self._nodes = tuple(sorted(self._ports, key=node_key))
        self._links = frozenset(make_link(*lk) for lk in links)
        self._hosts = {h.id: h for h in hosts}
        self._peer = {}
        self._adj = {n: {} for n in self._nodes}
        self._host_at = {}
        self._validate()

    def _validate(self):
        macs = set()
        for n, pm in self._ports.items():
            for p, mac in pm.items():
                if not isinstance(p, int) or p < 1:
                    raise TopologyError(f"port {p!r} on {n!r} must be a positive integer")
                if mac in macs:
                    raise TopologyError(f"duplicate MAC {mac}")
                macs.add(mac)
        for lk in sorted(self._links, key=lambda l: (ep_key(l[0]), ep_key(l[1]))):
            p, q = lk
            for ep in lk:
                if ep[0] not in self._ports or ep[1] not in self._ports[ep[0]]:
                    raise TopologyError(f"link {link_str(lk)} uses unknown endpoint {ep}")
                if ep in self._peer:
                    raise TopologyError(f"endpoint {ep} used by two links")
            if p[0] == q[0]:
                raise TopologyError(f"self-link {link_str(lk)}")
            if q[0] in self._adj[p[0]]:
                raise TopologyError(f"parallel link between {p[0]} and {q[0]}")
            self._peer[p] = q
            self._peer[q] = p
            self._adj[p[0]][q[0]] = (p[1], q[1])
            self._adj[q[0]][p[0]] = (q[1], p[1])
        for h in self._hosts.values():
            ep = tuple(h.attach)
            if ep[0] not in self._ports or ep[1] not in self._ports[ep[0]]:
                raise TopologyError(f"host {h.id} attached to unknown endpoint {ep}")
            if ep in self._peer or ep in self._host_at:
                raise TopologyError(f"host {h.id} attachment {ep} already in use")
            if h.mac in macs:
                raise TopologyError(f"duplicate MAC {h.mac}")
            macs.add(h.mac)
            self._host_at[ep] = h
        for n in self._adj:
            self._adj[n] = dict(sorted(self._adj[n].items(), key=lambda kv: node_key(kv[0])))

    # -- accessors -------------------------------------------------------
    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def links(self) -> frozenset:
        return self._links

    @property
    def hosts(self) -> dict:
        return dict(self._hosts)

    def sorted_links(self) -> list:
        return sorted(self._links, key=lambda l: (ep_key(l[0]), ep_key(l[1])))

    def ports(self, node) -> dict:
        return dict(self._ports[node])

    def port_table(self) -> dict:
        return {n: dict(pm) for n, pm in self._ports.items()}

    def mac(self, node, port) -> str:
        return self._ports[node][port]

    def peer(self, ep: Endpoint) -> Optional[Endpoint]:
        return self._peer.get(tuple(ep))

    def host_at(self, ep: Endpoint) -> Optional[Host]:
        return self._host_at.get(tuple(ep))

    def host(self, host_id) -> Host:
        return self._hosts[host_id]

    def neighbors(self, node) -> list:
        return list(self._adj[node])

    def port_to(self, u, v) -> Optional[int]:
        """Port on ``u`` facing ``v``, or None when not adjacent."""
        pair = self._adj[u].get(v)
        return pair[0] if pair else None

    def degree(self, node) -> int:
        return len(self._adj[node])

    def has_link(self, p: Endpoint, q: Endpoint) -> bool:
        return self._peer.get(tuple(p)) == tuple(q)

    def endpoints(self) -> frozenset:
        return frozenset(self._peer)

    def with_links(self, links: Iterable) -> "Topology":
        return Topology(self._ports, links, self._hosts.values())

    def with_hosts(self, hosts: Iterable[Host]) -> "Topology":
        return Topology(self._ports, self._links, hosts)

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (self._ports == other._ports and self._links == other._links
                and self._hosts == other._hosts)

    def __hash__(self):
        return hash((self._nodes, self._links))

    def __repr__(self):
        return f"Topology(nodes={len(self._nodes)}, links={len(self._links)}, hosts={len(self._hosts)})"

    # -- construction helpers ---------------------------------------------
    @classmethod
    def from_edges(cls, edges: Iterable[Sequence], nodes: Iterable = (),
                   host_nodes: Iterable = (), host_prefix: str = "h") -> "Topology":
        """Build a topology from node pairs, numbering ports from 1 in edge order.

        ``host_nodes`` get one host each on the next free port.
        """
        edges = [tuple(e) for e in edges]
        all_nodes = set(nodes)
        for u, v in edges:
            all_nodes.update((u, v))
        order = sorted(all_nodes, key=node_key)
        index = {n: i for i, n in enumerate(order)}
        used = {n: 0 for n in order}
        links = []
        for u, v in edges:
            used[u] += 1
            used[v] += 1
            links.append(((u, used[u]), (v, used[v])))
        hosts = []
        for k, n in enumerate(sorted(set(host_nodes), key=node_key)):
            used[n] += 1
            hosts.append(Host(f"{host_prefix}{n}", (n, used[n]), _auto_host_mac(k + 1)))
        ports = {n: {p: _auto_mac(index[n] + 1, p) for p in range(1, used[n] + 1)} for n in order}
        return cls(ports, links, hosts)

    @classmethod
    def from_links(cls, links: Iterable, hosts: Iterable[tuple] = (), nodes: Iterable = ()) -> "Topology":
        """Build from explicit ((node, port), (node, port)) pairs; ports and MACs are derived.

        ``hosts`` holds (host_id, (node, port)) pairs.
        """
        links = [(tuple(p), tuple(q)) for p, q in links]
        hosts = [(hid, tuple(ep)) for hid, ep in hosts]
        ports: dict = {n: set() for n in nodes}
        for lk in links:
            for n, p in lk:
                ports.setdefault(n, set()).add(p)
        for _, (n, p) in hosts:
            ports.setdefault(n, set()).add(p)
        order = sorted(ports, key=node_key)
        port_map = {n: {p: _auto_mac(i + 1, p) for p in sorted(ports[n])} for i, n in enumerate(order)}
        host_objs = [Host(hid, ep, _auto_host_mac(k + 1)) for k, (hid, ep) in enumerate(hosts)]
        return cls(port_map, links, host_objs)

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n, "ports": [{"port": p, "mac": m} for p, m in self._ports[n].items()]}
                      for n in self._nodes],
            "links": [[list(p), list(q)] for p, q in self.sorted_links()],
            "hosts": [{"id": h.id, "attach": list(h.attach), "mac": h.mac}
                      for h in sorted(self._hosts.values(), key=lambda h: h.id)],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Topology":
        try:
            ports = {nd["id"]: {int(p["port"]): p["mac"] for p in nd.get("ports", [])}
                     for nd in doc["nodes"]}
            links = [((p[0], int(p[1])), (q[0], int(q[1]))) for p, q in doc.get("links", [])]
            hosts = []
            for k, h in enumerate(doc.get("hosts", [])):
                ep = (h["attach"][0], int(h["attach"][1]))
                hosts.append(Host(h["id"], ep, h.get("mac") or _auto_host_mac(k + 1)))
        except (KeyError, TypeError, IndexError) as exc:
            raise TopologyError(f"malformed topology document: {exc!r}") from exc
        # host ports may be omitted from the port list
        for h in hosts:
            n, p = h.attach
            if n in ports and p not in ports[n]:
                ports[n][p] = "0e:" + h.mac[3:]
        return cls(ports, links, hosts)

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))


# -- PA matrix --------------------------------------------------------------

def _check_ordering(t: Topology, ordering: Sequence):
    if len(ordering) != len(t.nodes) or set(ordering) != set(t.nodes):
        raise TopologyError("ordering is not a permutation of the topology's nodes")


def pa_matrix(t: Topology, ordering: Optional[Sequence] = None) -> np.ndarray:
    """A[i][j] is the port on node i that faces node j, 0 when not adjacent."""
    ordering = list(t.nodes) if ordering is None else list(ordering)
    _check_ordering(t, ordering)
    idx = {n: i for i, n in enumerate(ordering)}
    a = np.zeros((len(ordering), len(ordering)), dtype=np.int64)
    for (u, pu), (v, pv) in t.links:
        a[idx[u], idx[v]] = pu
        a[idx[v], idx[u]] = pv
    return a


def from_pa_matrix(matrix, ordering: Sequence, ports: Mapping, hosts: Iterable[Host] = ()) -> Topology:
    """Rebuild a topology from a PA matrix plus the per-node port/MAC table."""
    a = np.asarray(matrix)
    n = len(ordering)
    if a.shape != (n, n):
        raise TopologyError(f"matrix shape {a.shape} does not match {n} nodes")
    if np.any(np.diag(a) != 0):
        raise TopologyError("PA matrix has a nonzero diagonal")
    if not np.array_equal(a != 0, (a != 0).T):
        raise TopologyError("PA matrix nonzero pattern is not symmetric")
    links = []
    for i, j in zip(*np.nonzero(np.triu(a))):
        links.append(((ordering[i], int(a[i, j])), (ordering[j], int(a[j, i]))))
    return Topology(ports, links, hosts)


# -- similarity and degree ----------------------------------------------------

def eo_similarity(g: Topology, g2: Topology) -> Fraction:
    """Edge overlap |E & E'| / |E|, edges compared with their ports."""
    if set(g.nodes) != set(g2.nodes):
        raise TopologyError("similarity needs identical node sets")
    if not g.links:
        return Fraction(1)
    return Fraction(len(g.links & g2.links), len(g.links))


def degree_sequence(t: Topology) -> tuple:
    return tuple(sorted((t.degree(n) for n in t.nodes), reverse=True))


# -- rewiring ---------------------------------------------------------------

def two_switch_pairings(e1: Link, e2: Link) -> list:
    """Both ways of re-pairing the endpoints of two links."""
    (p, q), (r, s) = make_link(*e1), make_link(*e2)
    return [(make_link(p, r), make_link(q, s)), (make_link(p, s), make_link(q, r))]


def _rewired(t: Topology, removed: Sequence[Link], added: Sequence[Link]) -> Topology:
    links = set(t.links)
    links.difference_update(removed)
    for lk in added:
        if lk[0][0] == lk[1][0]:
            raise RewireError(f"rewiring creates self-link {link_str(lk)}")
        if lk in links:
            raise RewireError(f"rewiring duplicates existing link {link_str(lk)}")
        links.add(lk)
    try:
        return t.with_links(links)
    except RewireError:
        raise
    except TopologyError as exc:
        raise RewireError(str(exc)) from exc


def two_switch(t: Topology, e1: Link, e2: Link, rewiring: Sequence[Link]) -> Topology:
    """Delete ``e1`` and ``e2`` and connect their four endpoints as ``rewiring``."""
    e1, e2 = make_link(*e1), make_link(*e2)
    if e1 == e2:
        raise RewireError("the two links must differ")
    for e in (e1, e2):
        if e not in t.links:
            raise RewireError(f"link {link_str(e)} is not in the topology")
    try:
        new = [make_link(*lk) for lk in rewiring]
    except TopologyError as exc:
        raise RewireError(str(exc)) from exc
    if len(new) != 2:
        raise RewireError("rewiring must consist of two links")
    freed = sorted([*e1, *e2], key=ep_key)
    used = sorted([*new[0], *new[1]], key=ep_key)
    if freed != used:
        raise RewireError("rewiring must reuse exactly the four freed endpoints")
    if set(new) == {e1, e2}:
        raise RewireError("rewiring reproduces the original links")
    return _rewired(t, (e1, e2), new)


def node_reallocation(t: Topology, c, target: Link) -> Topology:
    """Splice degree-2 node ``c`` into ``target``; its old neighbors get linked.

    With ``target`` = ((u, pu), (v, pv)) as given, c's lower-numbered linked
    port is wired to u and the higher one to v.
    """
    if c not in t._adj:
        raise RewireError(f"unknown node {c!r}")
    if t.degree(c) != 2:
        raise RewireError(f"node {c!r} has degree {t.degree(c)}; only degree-2 nodes can be reallocated")
    (u, pu), (v, pv) = target
    if make_link((u, pu), (v, pv)) not in t.links:
        raise RewireError(f"target link {link_str(make_link((u, pu), (v, pv)))} is not in the topology")
    if c in (u, v):
        raise RewireError("target link touches the reallocated node")
    c_ports = sorted(p for p in t.ports(c) if (c, p) in t._peer)
    old = [make_link((c, p), t.peer((c, p))) for p in c_ports]
    a_ep, b_ep = t.peer((c, c_ports[0])), t.peer((c, c_ports[1]))
    added = [make_link(a_ep, b_ep), make_link((u, pu), (c, c_ports[0])),
             make_link((c, c_ports[1]), (v, pv))]
    return _rewired(t, old + [make_link((u, pu), (v, pv))], added)


def reallocation_steps(t: Topology, c, target: Link, max_steps: int = 3) -> list:
    """Express a node reallocation as the shortest sequence of 2-switches.

    Returns [(e1, e2, rewiring), ...] whose composition equals
    ``node_reallocation(t, c, target)``; every step is a valid 2-switch on
    its intermediate topology.  Two steps suffice unless an intermediate
    state would hold a duplicate link, in which case a third is needed.
    When the freed endpoints' nodes are already pairwise linked no sequence
    over those endpoints exists and RewireError is raised.
    """
    final = node_reallocation(t, c, target)
    involved = {ep for lk in (t.links ^ final.links) for ep in lk}
    frontier = [(t, [])]
    seen = {t.links}
    for _ in range(max_steps):
        nxt = []
        for cur, steps in frontier:
            movable = [lk for lk in cur.sorted_links() if lk[0] in involved or lk[1] in involved]
            for i, e1 in enumerate(movable):
                for e2 in movable[i + 1:]:
                    for rw in two_switch_pairings(e1, e2):
                        try:
                            out = two_switch(cur, e1, e2, rw)
                        except RewireError:
                            continue
                        if out.links in seen:
                            continue
                        seen.add(out.links)
                        path = steps + [(e1, e2, tuple(rw))]
                        if out.links == final.links:
                            return path
                        nxt.append((out, path))
        frontier = nxt
    raise RewireError(f"no decomposition within {max_steps} 2-switches")


# -- traversal --------------------------------------------------------------

def is_connected(t: Topology) -> bool:
    if len(t.nodes) <= 1:
        return True
    start = t.nodes[0]
    seen = {start}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        for m in t._adj[n]:
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return len(seen) == len(t.nodes)


def bfs_distances(t: Topology, src) -> dict:
    dist = {src: 0}
    queue = deque([src])
    adj = t._adj
    while queue:
        n = queue.popleft()
        d = dist[n] + 1
        for m in adj[n]:
            if m not in dist:
                dist[m] = d
                queue.append(m)
    return dist


def walk_path(t: Topology, src, dst, dist_to_dst: Mapping) -> Optional[list]:
    """Greedy walk along decreasing distance, smallest node id first."""
    if src not in dist_to_dst:
        return None
    path = [src]
    n = src
    adj = t._adj
    while n != dst:
        want = dist_to_dst[n] - 1
        for m in adj[n]:  # adjacency is kept in node_key order
            if dist_to_dst.get(m) == want:
                n = m
                break
        path.append(n)
    return path


def shortest_path(t: Topology, src, dst) -> Optional[list]:
    """Minimum-hop node path; ties go to the smallest next node id. None if unreachable."""
    for n in (src, dst):
        if n not in t._adj:
            raise TopologyError(f"unknown node {n!r}")
    return walk_path(t, src, dst, bfs_distances(t, dst))


# -- DOT --------------------------------------------------------------------

def to_dot(t: Topology, name: str = "topology", highlight_links: Iterable = (),
           highlight_nodes: Iterable = (), real: Optional[Topology] = None) -> str:
    """Graphviz rendering.  Links absent from ``real`` are drawn red, highlighted nodes green."""
    hl_links = {make_link(*l) for l in highlight_links}
    if real is not None:
        hl_links |= set(t.links - real.links)
    hl_nodes = set(highlight_nodes)
    out = [f'graph "{name}" {{', "  node [shape=box];"]
    for n in t.nodes:
        attr = ' style=filled fillcolor="palegreen"' if n in hl_nodes else ""
        out.append(f'  "{n}" [label="{n}"{attr}];')
    for h in sorted(t.hosts.values(), key=lambda h: h.id):
        out.append(f'  "{h.id}" [shape=ellipse];')
        out.append(f'  "{h.id}" -- "{h.attach[0]}" [headlabel="{h.attach[1]}"];')
    for lk in t.sorted_links():
        (u, pu), (v, pv) = lk
        attr = ' color="red" penwidth=2' if lk in hl_links else ""
        out.append(f'  "{u}" -- "{v}" [taillabel="{pu}" headlabel="{pv}"{attr}];')
    out.append("}")
    return "\n".join(out) + "\n"
