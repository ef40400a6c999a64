"""Packets, flow tables and the wiring fabric.

Switches hold a single prioritized flow table.  ``Network`` pushes packets
through the real wiring, applying table lookups at each hop and handing
packet-ins to whatever controller is attached.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Union

from .topo import Endpoint, Topology, node_key

__all__ = [
    "LLDP_TYPE",
    "IPV4_TYPE",
    "LLDP_DST",
    "Discovery",
    "Data",
    "Packet",
    "FlowMatch",
    "Output",
    "OutputInPort",
    "ToController",
    "Flood",
    "PushVlan",
    "PopVlan",
    "FlowEntry",
    "Switch",
    "PortEmission",
    "PacketIn",
    "Arrival",
    "HostDelivery",
    "SimulationFault",
    "Network",
    "transmit",
    "match_packet",
    "apply_actions",
    "install_entry",
    "TABLE_MISS_PRIORITY",
    "MAX_PRIORITY",
]

LLDP_TYPE = 0x88CC
IPV4_TYPE = 0x0800
LLDP_DST = "01:80:c2:00:00:0e"
TABLE_MISS_PRIORITY = 0
MAX_PRIORITY = 65535


class SimulationFault(RuntimeError):
    """Unrecoverable data-plane condition; carries where it happened."""

    def __init__(self, message: str, switch=None, in_port=None):
        loc = f" at switch {switch} port {in_port}" if switch is not None else ""
        super().__init__(message + loc)
        self.switch = switch
        self.in_port = in_port


# -- packets ----------------------------------------------------------------

@dataclass(frozen=True)
class Discovery:
    origin_node: Any
    origin_port: int


@dataclass(frozen=True)
class Data:
    flow_id: str
    seq: int = 0


@dataclass(frozen=True)
class Packet:
    ether_src: str
    ether_dst: str
    ether_type: int
    payload: Union[Discovery, Data]
    vlan_stack: tuple = ()

    @property
    def outer_vlan(self) -> Optional[int]:
        return self.vlan_stack[0] if self.vlan_stack else None

    def push_vlan(self, vid: int) -> "Packet":
        return replace(self, vlan_stack=(vid,) + self.vlan_stack)

    def pop_vlan(self) -> "Packet":
        if not self.vlan_stack:
            raise SimulationFault("pop-vlan on an untagged packet")
        return replace(self, vlan_stack=self.vlan_stack[1:])

    @property
    def is_discovery(self) -> bool:
        return isinstance(self.payload, Discovery)


# -- match and actions ------------------------------------------------------

@dataclass(frozen=True)
class FlowMatch:
    """Exact-match fields; None means wildcard."""
    ether_src: Optional[str] = None
    ether_dst: Optional[str] = None
    ether_type: Optional[int] = None
    in_port: Optional[int] = None
    vlan_id: Optional[int] = None

    def matches(self, p: Packet, in_port: int) -> bool:
        if self.in_port is not None and self.in_port != in_port:
            return False
        if self.ether_src is not None and self.ether_src != p.ether_src:
            return False
        if self.ether_dst is not None and self.ether_dst != p.ether_dst:
            return False
        if self.ether_type is not None and self.ether_type != p.ether_type:
            return False
        if self.vlan_id is not None and self.vlan_id != p.outer_vlan:
            return False
        return True

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "FlowMatch":
        return cls(**d)


@dataclass(frozen=True)
class Output:
    port: int


@dataclass(frozen=True)
class OutputInPort:
    pass


@dataclass(frozen=True)
class ToController:
    pass


@dataclass(frozen=True)
class Flood:
    pass


@dataclass(frozen=True)
class PushVlan:
    vid: int


@dataclass(frozen=True)
class PopVlan:
    pass


_ACTION_NAMES = {
    Output: "output", OutputInPort: "in_port", ToController: "to_controller",
    Flood: "flood", PushVlan: "push_vlan", PopVlan: "pop_vlan",
}
_ACTION_TYPES = {v: k for k, v in _ACTION_NAMES.items()}


def action_to_dict(a) -> dict:
    d = {"type": _ACTION_NAMES[type(a)]}
    if isinstance(a, Output):
        d["port"] = a.port
    elif isinstance(a, PushVlan):
        d["vid"] = a.vid
    return d


def action_from_dict(d: dict):
    cls = _ACTION_TYPES[d["type"]]
    if cls is Output:
        return Output(int(d["port"]))
    if cls is PushVlan:
        return PushVlan(int(d["vid"]))
    return cls()


def action_str(a) -> str:
    if isinstance(a, Output):
        return f"output:{a.port}"
    if isinstance(a, PushVlan):
        return f"push-vlan:{a.vid}"
    return {OutputInPort: "output:in_port", ToController: "to_controller",
            Flood: "flood", PopVlan: "pop-vlan"}[type(a)]


@dataclass
class FlowEntry:
    priority: int
    match: FlowMatch
    actions: tuple
    owner: str = "controller"
    hit_count: int = 0
    installed_by: Optional[str] = None
    seq: int = -1  # install order, assigned by the switch

    def __post_init__(self):
        self.actions = tuple(self.actions)

    @property
    def key(self) -> tuple:
        return (self.priority, self.match)

    def spec(self) -> tuple:
        """Identity of the rule itself, ignoring counters and bookkeeping."""
        return (self.priority, self.match, self.actions)

    def copy(self) -> "FlowEntry":
        return FlowEntry(self.priority, self.match, self.actions, self.owner)

    def to_dict(self, counters: bool = True) -> dict:
        d = {
            "priority": self.priority,
            "match": self.match.to_dict(),
            "actions": [action_to_dict(a) for a in self.actions],
            "owner": self.owner,
        }
        if counters:
            d["hit_count"] = self.hit_count
            if self.installed_by is not None:
                d["installed_by"] = self.installed_by
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FlowEntry":
        return cls(int(d["priority"]), FlowMatch.from_dict(d.get("match", {})),
                   tuple(action_from_dict(a) for a in d["actions"]), d.get("owner", "controller"))

    def __str__(self):
        m = ",".join(f"{k}={v}" for k, v in self.match.to_dict().items()) or "*"
        acts = ",".join(action_str(a) for a in self.actions)
        return f"[p{self.priority}] {m} -> {acts}"


def table_miss_entry() -> FlowEntry:
    return FlowEntry(TABLE_MISS_PRIORITY, FlowMatch(), (ToController(),), owner="controller")


class Switch:
    def __init__(self, node_id, ports: dict, table_miss: bool = True):
        self.id = node_id
        self.ports = dict(ports)
        self.table: list[FlowEntry] = []
        self._seq = itertools.count()
        if table_miss:
            self.install(table_miss_entry())

    def install(self, entry: FlowEntry) -> FlowEntry:
        """Add ``entry``; an existing rule with the same priority and match is replaced."""
        entry.hit_count = 0
        entry.seq = next(self._seq)
        self.table = [e for e in self.table if e.key != entry.key]
        self.table.append(entry)
        self.table.sort(key=lambda e: (-e.priority, e.seq))
        return entry

    def remove(self, pred: Callable[[FlowEntry], bool]) -> list:
        gone = [e for e in self.table if pred(e)]
        self.table = [e for e in self.table if not pred(e)]
        return gone

    def lookup(self, p: Packet, in_port: int) -> Optional[FlowEntry]:
        for e in self.table:  # kept sorted by (priority desc, install order)
            if e.match.matches(p, in_port):
                e.hit_count += 1
                return e
        return None

    def dump(self) -> list:
        return [e.to_dict() for e in self.table]


def install_entry(s: Switch, e: FlowEntry) -> Switch:
    s.install(e)
    return s


def match_packet(s: Switch, p: Packet, in_port: int) -> Optional[FlowEntry]:
    if in_port not in s.ports:
        raise SimulationFault(f"unknown ingress port {in_port}", s.id, in_port)
    return s.lookup(p, in_port)


# -- emissions --------------------------------------------------------------

@dataclass(frozen=True)
class PortEmission:
    port: int
    packet: Packet


@dataclass(frozen=True)
class PacketIn:
    switch: Any
    in_port: int
    packet: Packet
    entry_owner: str = "controller"


def apply_actions(s: Switch, p: Packet, in_port: Optional[int], actions, owner: str = "controller") -> list:
    out = []
    cur = p
    for a in actions:
        if isinstance(a, PushVlan):
            cur = cur.push_vlan(a.vid)
        elif isinstance(a, PopVlan):
            if not cur.vlan_stack:
                raise SimulationFault("pop-vlan on an untagged packet", s.id, in_port)
            cur = cur.pop_vlan()
        elif isinstance(a, Output):
            # OpenFlow never sends a packet back out its ingress port unless told IN_PORT
            if a.port != in_port and a.port in s.ports:
                out.append(PortEmission(a.port, cur))
        elif isinstance(a, OutputInPort):
            if in_port is not None:
                out.append(PortEmission(in_port, cur))
        elif isinstance(a, Flood):
            out.extend(PortEmission(q, cur) for q in s.ports if q != in_port)
        elif isinstance(a, ToController):
            out.append(PacketIn(s.id, in_port, cur, owner))
        else:
            raise SimulationFault(f"unknown action {a!r}", s.id, in_port)
    return out


# -- fabric -----------------------------------------------------------------

@dataclass(frozen=True)
class Arrival:
    node: Any
    port: int


@dataclass(frozen=True)
class HostDelivery:
    host: str
    packet: Packet


def transmit(fabric: Topology, src: Endpoint, p: Packet):
    """Where a packet leaving ``src`` ends up: an Arrival, a HostDelivery, or None."""
    peer = fabric.peer(src)
    if peer is not None:
        return Arrival(*peer)
    h = fabric.host_at(src)
    # hosts sink discovery traffic and data addressed to someone else
    if h is not None and isinstance(p.payload, Data) and p.ether_dst == h.mac and not p.vlan_stack:
        return HostDelivery(h.id, p)
    return None


@dataclass
class Traversal:
    flow_id: str
    seq: int
    hops: list = field(default_factory=list)  # (switch, in_port, vlan_stack)
    delivered_to: list = field(default_factory=list)

    @property
    def switches(self) -> list:
        return [h[0] for h in self.hops]


class Network:
    """Switches wired per a real topology plus the event loop that moves packets."""

    def __init__(self, topology: Topology, event_budget: int = 200_000):
        self.topology = topology
        self.switches = {n: Switch(n, topology.ports(n)) for n in topology.nodes}
        self.controller = None
        self.deliveries: list[HostDelivery] = []
        self.traversals: dict = {}
        self.events = 0
        self.event_budget = event_budget
        self._loop_cap = 4 * (len(topology.links) + len(topology.nodes)) + 16

    def attach(self, controller) -> None:
        self.controller = controller

    def features(self) -> dict:
        """What a controller learns from the switches' handshake: ports and MACs."""
        return {n: dict(s.ports) for n, s in self.switches.items()}

    def install(self, node, entry: FlowEntry, installed_by: Optional[str] = None) -> FlowEntry:
        if node not in self.switches:
            raise KeyError(f"unknown switch {node!r}")
        entry.installed_by = installed_by
        return self.switches[node].install(entry)

    def dump_tables(self) -> dict:
        return {str(n): self.switches[n].dump() for n in sorted(self.switches, key=node_key)}

    # -- event loop ----------------------------------------------------------
    def packet_out(self, node, actions, packet: Packet, in_port: Optional[int] = None) -> None:
        """Controller-originated emission from ``node``; no table lookup there."""
        sw = self.switches[node]
        queue: deque = deque()
        self._emit(sw, in_port, apply_actions(sw, packet, in_port, actions), queue)
        self._drain(queue)

    def send_from_host(self, host_id: str, packet: Packet) -> None:
        h = self.topology.host(host_id)
        queue: deque = deque([(h.attach[0], h.attach[1], packet)])
        self._drain(queue)

    def send_flow(self, flow_id: str, src_host: str, dst_host: str, seq: int = 0) -> None:
        """Have ``src_host`` emit one data packet addressed to ``dst_host``."""
        src = self.topology.host(src_host)
        dst = self.topology.host(dst_host)
        self.send_from_host(src_host, Packet(src.mac, dst.mac, IPV4_TYPE, Data(flow_id, seq)))

    def _emit(self, sw: Switch, in_port, emissions, queue) -> None:
        for em in emissions:
            if isinstance(em, PacketIn):
                if self.controller is None:
                    continue
                for node, port, acts, pkt in self.controller.packet_in(em):
                    target = self.switches[node]
                    self._emit(target, port, apply_actions(target, pkt, port, acts), queue)
                continue
            res = transmit(self.topology, (sw.id, em.port), em.packet)
            if isinstance(res, Arrival):
                queue.append((res.node, res.port, em.packet))
            elif isinstance(res, HostDelivery):
                self.deliveries.append(res)
                pay = em.packet.payload
                tr = self.traversals.get((pay.flow_id, pay.seq))
                if tr is not None:
                    tr.delivered_to.append(res.host)

    def _drain(self, queue) -> None:
        while queue:
            node, in_port, pkt = queue.popleft()
            self.events += 1
            if self.events > self.event_budget:
                raise SimulationFault("event budget exhausted (forwarding loop?)", node, in_port)
            sw = self.switches[node]
            if isinstance(pkt.payload, Data):
                key = (pkt.payload.flow_id, pkt.payload.seq)
                tr = self.traversals.setdefault(key, Traversal(*key))
                tr.hops.append((node, in_port, pkt.vlan_stack))
                if len(tr.hops) > self._loop_cap:
                    raise SimulationFault(f"flow {key[0]} is looping", node, in_port)
            entry = match_packet(sw, pkt, in_port)
            if entry is None:
                continue
            self._emit(sw, in_port, apply_actions(sw, pkt, in_port, entry.actions, entry.owner), queue)
