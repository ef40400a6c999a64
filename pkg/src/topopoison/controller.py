"""Benign controller: link discovery, view construction and routing."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .dataplane import (LLDP_DST, LLDP_TYPE, MAX_PRIORITY, Data, Discovery, Flood, FlowEntry,
                        FlowMatch, Network, Output, Packet, PacketIn, ToController)
from .topo import Topology, TopologyError, ep_key, make_link, node_key, shortest_path

__all__ = [
    "ROUTE_PRIORITY",
    "FlowRequest",
    "LinkStore",
    "Controller",
    "rebuild_view",
    "route_entries",
    "ViewConflict",
]

ROUTE_PRIORITY = 10


class ViewConflict(TopologyError):
    """Confirmed links claim the same port twice, so no consistent view exists."""


@dataclass(frozen=True)
class FlowRequest:
    flow_id: str
    src_host: str
    dst_host: str

    def to_dict(self):
        return {"flow_id": self.flow_id, "src": self.src_host, "dst": self.dst_host}


@dataclass
class LinkStore:
    """Directed links confirmed by discovery, each stamped with its round."""
    round: int = 0
    links: dict = field(default_factory=dict)  # (src_ep, dst_ep) -> round

    def directed(self) -> list:
        return sorted(self.links, key=lambda l: (ep_key(l[0]), ep_key(l[1])))

    def to_dict(self) -> dict:
        return {"round": self.round,
                "links": [[list(s), list(d), self.links[(s, d)]] for s, d in self.directed()]}

    def __eq__(self, other):
        if not isinstance(other, LinkStore):
            return NotImplemented
        return set(self.links) == set(other.links)


def rebuild_view(store: LinkStore, features: dict, hosts: Iterable = ()) -> Topology:
    """Only links seen in both directions make it into the view."""
    links = {make_link(s, d) for s, d in store.links if (d, s) in store.links}
    try:
        return Topology(features, links, hosts)
    except TopologyError as exc:
        raise ViewConflict(str(exc)) from exc


def route_entries(view: Topology, flow: FlowRequest) -> Optional[tuple]:
    """Per-hop entries a proactive controller installs for ``flow`` on ``view``.

    Returns (node path, [(node, FlowEntry), ...]) or None when no path exists.
    """
    src = view.host(flow.src_host)
    dst = view.host(flow.dst_host)
    path = shortest_path(view, src.attach[0], dst.attach[0])
    if path is None:
        return None
    entries = []
    for i, n in enumerate(path):
        in_port = src.attach[1] if i == 0 else view.port_to(n, path[i - 1])
        out = dst.attach[1] if i == len(path) - 1 else view.port_to(n, path[i + 1])
        entries.append((n, FlowEntry(ROUTE_PRIORITY, FlowMatch(ether_dst=dst.mac, in_port=in_port),
                                     (Output(out),), owner="controller")))
    return path, entries


class Controller:
    """One controller instance driving a ``Network``.

    ``fingerprint`` makes every discovery packet carry the same ether_src;
    ``ryu_mode`` pre-installs a top-priority LLDP catch rule on every switch.
    """

    def __init__(self, net: Network, name: str = "c0", reactive: bool = True,
                 fingerprint: Optional[str] = None, ryu_mode: bool = False, trace: bool = False):
        self.net = net
        self.name = name
        self.reactive = reactive
        self.fingerprint = fingerprint
        self.features = net.features()
        self.hosts = list(net.topology.hosts.values())
        self._mac_host = {h.mac: h for h in self.hosts}
        self.store = LinkStore()
        self.view = rebuild_view(self.store, self.features, self.hosts)
        self.rounds = 0
        self.unexpected = 0
        self.floods = 0
        self._flooded: set = set()
        self._collect: Optional[dict] = None
        self.routes: dict = {}
        self.trace_enabled = trace
        self.trace: list = []
        self.install_hooks: list[Callable] = []
        net.attach(self)
        if ryu_mode:
            for n in sorted(net.switches, key=node_key):
                self.install(n, FlowEntry(MAX_PRIORITY, FlowMatch(ether_type=LLDP_TYPE),
                                          (ToController(),), owner="controller"))

    # -- installation ---------------------------------------------------------
    def install(self, node, entry: FlowEntry) -> None:
        self.net.install(node, entry, installed_by=self.name)
        for hook in self.install_hooks:
            hook(node, entry)

    # -- discovery ------------------------------------------------------------
    def lldp(self, node, port) -> Packet:
        src = self.fingerprint or self.features[node][port]
        return Packet(src, LLDP_DST, LLDP_TYPE, Discovery(node, port))

    def run_discovery_round(self) -> LinkStore:
        self.rounds += 1
        self._collect = {}
        try:
            for n in sorted(self.features, key=node_key):
                for p in sorted(self.features[n]):
                    self._log(event="packet_out", round=self.rounds, switch=n, port=p)
                    self.net.packet_out(n, (Output(p),), self.lldp(n, p))
            store = LinkStore(self.rounds, self._collect)
        finally:
            self._collect = None
        self.store = store
        self.view = rebuild_view(store, self.features, self.hosts)
        return store

    def _log(self, **event):
        if self.trace_enabled:
            self.trace.append(event)

    # -- packet-in handling ---------------------------------------------------
    def packet_in(self, msg: PacketIn) -> list:
        pay = msg.packet.payload
        if isinstance(pay, Discovery):
            if self._collect is not None:
                link = ((pay.origin_node, pay.origin_port), (msg.switch, msg.in_port))
                self._collect[link] = self.rounds
                self._log(event="packet_in", round=self.rounds, switch=msg.switch,
                          in_port=msg.in_port, origin=[pay.origin_node, pay.origin_port],
                          via=msg.entry_owner)
            return []
        if isinstance(pay, Data) and self.reactive:
            return self.reactive_forward(msg)
        return []

    def reactive_forward(self, msg: PacketIn) -> list:
        """Decide what to do with a data packet-in; returns packet-out instructions."""
        pkt = msg.packet
        pay = pkt.payload
        dst = self._mac_host.get(pkt.ether_dst)
        src = self._mac_host.get(pkt.ether_src)
        path = None
        if dst is not None and src is not None:
            path = shortest_path(self.view, src.attach[0], dst.attach[0])
        if path is not None and msg.switch in path:
            i = path.index(msg.switch)
            out = dst.attach[1] if i == len(path) - 1 else self.view.port_to(msg.switch, path[i + 1])
            self.install(msg.switch, FlowEntry(
                ROUTE_PRIORITY, FlowMatch(ether_dst=dst.mac, in_port=msg.in_port), (Output(out),)))
            self._log(event="reactive_install", switch=msg.switch, flow=pay.flow_id, port=out)
            return [(msg.switch, msg.in_port, (Output(out),), pkt)]
        key = (pay.flow_id, pay.seq, msg.switch)
        if key in self._flooded:
            return []
        self._flooded.add(key)
        self.floods += 1
        if path is not None:
            # the switch reporting this packet should not be seeing it at all
            self.unexpected += 1
        self._log(event="flood", switch=msg.switch, flow=pay.flow_id, unexpected=path is not None)
        return [(msg.switch, msg.in_port, (Flood(),), pkt)]

    # -- routing --------------------------------------------------------------
    def route_flow(self, flow: FlowRequest, install: bool = True) -> Optional[list]:
        res = route_entries(self.view, flow)
        if res is None:
            self.routes[flow.flow_id] = None
            return None
        path, entries = res
        if install:
            for n, e in entries:
                self.install(n, e)
        self.routes[flow.flow_id] = path
        return path
