"""Poisonous flow entries that make the controller discover links that do not exist.

A deceptive link Ax->yB is realized by catching the discovery packet A emits
on port x at A's real neighbor and relaying it through the real network until
it enters B on port y, where the ordinary table-miss rule reports it.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .controller import ROUTE_PRIORITY
from .dataplane import (LLDP_TYPE, TABLE_MISS_PRIORITY, FlowEntry, FlowMatch, Network, Output,
                        OutputInPort, PopVlan, PushVlan, ToController)
from .topo import Topology, TopologyError, degree_sequence, ep_key, make_link, node_key, shortest_path

__all__ = [
    "Mode",
    "Method",
    "DeceptiveLink",
    "PlanEntry",
    "PoisonPlan",
    "PlanSet",
    "VlanAllocator",
    "PlanError",
    "PlanConflict",
    "POISON_PRIORITY",
    "TUNNEL_PRIORITY",
    "DEFAULT_FINGERPRINT",
    "select_path",
    "relay_switches",
    "compute_poison",
    "poison_reverse",
    "plan_topology_poison",
    "apply_topology_poison",
    "lower_discovery_entries",
    "direct_injector",
    "check_poison_target",
]

POISON_PRIORITY = TABLE_MISS_PRIORITY + 1
# VLAN-matching relays must beat route entries or tagged traffic gets hijacked
TUNNEL_PRIORITY = ROUTE_PRIORITY + 1
DEFAULT_FINGERPRINT = "a6:00:00:00:00:01"
VLAN_MAX = 4094


class Mode(str, Enum):
    VANILLA = "vanilla"
    VLAN_INPORT_SRC = "vlan-inport-src"


class Method(str, Enum):
    NO_LOOP = "no-loop"
    LOOPBACK = "loopback"


class PlanError(ValueError):
    pass


class PlanConflict(PlanError):
    """Two entries on one switch would need the same match."""


_LINK_RE = re.compile(r"^\s*([^:]+):(\d+)\s*->\s*(\d+):([^:]+)\s*$")


def _parse_node(s: str):
    s = s.strip()
    return int(s) if s.lstrip("-").isdigit() else s


@dataclass(frozen=True)
class DeceptiveLink:
    """Ax->yB: the controller should believe A's port x reaches B's port y."""
    a: object
    x: int
    y: int
    b: object

    @classmethod
    def parse(cls, text: str) -> "DeceptiveLink":
        m = _LINK_RE.match(text)
        if not m:
            raise PlanError(f"cannot parse deceptive link {text!r}; expected 'A:2->1:B'")
        return cls(_parse_node(m.group(1)), int(m.group(2)), int(m.group(3)), _parse_node(m.group(4)))

    def reverse(self) -> "DeceptiveLink":
        return DeceptiveLink(self.b, self.y, self.x, self.a)

    def __str__(self):
        if all(isinstance(n, str) and n.isalpha() for n in (self.a, self.b)):
            return f"{self.a}{self.x}->{self.y}{self.b}"
        return f"{self.a}:{self.x}->{self.y}:{self.b}"


@dataclass(frozen=True)
class PlanEntry:
    switch: object
    entry: FlowEntry
    kind: str  # E_hop | E_VStart | E_VBody | E_VEnd

    def to_dict(self) -> dict:
        return {"switch": self.switch, "kind": self.kind, **self.entry.to_dict(counters=False)}


@dataclass
class PoisonPlan:
    link: DeceptiveLink
    path: list
    loopback: bool
    vlan_id: Optional[int]
    entries: list
    mode: Mode
    relay: tuple = ()  # switches a packet crosses between leaving A and finally entering B

    @property
    def sub_src(self):
        return self.path[0]

    def first_entry(self) -> PlanEntry:
        return self.entries[0]

    def to_dict(self) -> dict:
        return {
            "link": str(self.link),
            "mode": self.mode.value,
            "method": (Method.LOOPBACK if self.loopback else Method.NO_LOOP).value,
            "path": list(self.path),
            "vlan_id": self.vlan_id,
            "entries": [e.to_dict() for e in self.entries],
        }


class VlanAllocator:
    """Hands out VLAN ids sequentially from 1."""

    def __init__(self, start: int = 1, stop: int = VLAN_MAX):
        self._next = start
        self._stop = stop

    def allocate(self) -> int:
        if self._next > self._stop:
            raise PlanError("VLAN ids exhausted")
        vid = self._next
        self._next += 1
        return vid

    @property
    def next_id(self) -> int:
        return self._next


def _check_link(t: Topology, link: DeceptiveLink):
    for n, p in ((link.a, link.x), (link.b, link.y)):
        if n not in t.nodes or p not in t.ports(n):
            raise PlanError(f"{link}: endpoint ({n}, {p}) does not exist")
    if link.a == link.b:
        raise PlanError(f"{link}: both ends on one switch")
    if t.has_link((link.a, link.x), (link.b, link.y)):
        raise PlanError(f"{link}: already a real link")
    for n, p in ((link.a, link.x), (link.b, link.y)):
        if t.peer((n, p)) is None:
            raise PlanError(f"{link}: port ({n}, {p}) has no switch neighbor to relay through")


def select_path(t: Topology, link: DeceptiveLink, method: Optional[Method] = None) -> tuple:
    """Relay path and loopback flag for ``link``.

    Direct relay ends at B's real neighbor on port y and steps into B; it is
    preferred unless the shortest path to B itself is strictly shorter, in
    which case the packet enters B elsewhere and is reflected back in on y.
    """
    _check_link(t, link)
    sub_src = t.peer((link.a, link.x))[0]
    sub_dst = t.peer((link.b, link.y))[0]
    to_dst = shortest_path(t, sub_src, sub_dst)
    to_b = shortest_path(t, sub_src, link.b)
    if to_dst is None or to_b is None:
        raise PlanError(f"{link}: no relay path from {sub_src}")
    if method is None:
        method = Method.NO_LOOP if len(to_dst) <= len(to_b) else Method.LOOPBACK
    if Method(method) is Method.NO_LOOP:
        if link.b in to_dst:
            raise PlanConflict(f"{link}: direct relay would cross {link.b} twice")
        return to_dst + [link.b], False
    return to_b, True


def relay_switches(path: list, loopback: bool, sub_dst) -> tuple:
    if loopback:
        return tuple(path) + (sub_dst,)
    return tuple(path[:-1])


def compute_poison(t: Topology, link: DeceptiveLink, vlans: VlanAllocator, mode: Mode = Mode.VANILLA,
                   method: Optional[Method] = None, fingerprint: str = DEFAULT_FINGERPRINT) -> PoisonPlan:
    """Entries that make the controller see ``link`` in one direction."""
    mode = Mode(mode)
    path, loopback = select_path(t, link, method)
    a, x, y, b = link.a, link.x, link.y, link.b
    sub_src, src_in = t.peer((a, x))
    sub_dst = t.peer((b, y))[0]
    fp = mode is Mode.VLAN_INPORT_SRC
    if fp:
        first_match = FlowMatch(ether_src=fingerprint, in_port=src_in)
    else:
        first_match = FlowMatch(ether_src=t.mac(a, x))
    single_hop = len(path) == 2 and not loopback and not fp
    vid = None if single_hop else vlans.allocate()
    vm = FlowMatch(vlan_id=vid)
    out: list[PlanEntry] = []

    def add(node, prio, match, actions, kind):
        out.append(PlanEntry(node, FlowEntry(prio, match, tuple(actions), owner="attacker"), kind))

    last = len(path) - 2
    for i in range(len(path) - 1):
        node, nxt = path[i], path[i + 1]
        port = t.port_to(node, nxt)
        if i == 0 and single_hop:
            add(node, POISON_PRIORITY, first_match, [Output(port)], "E_hop")
        elif i == 0:
            fwd = OutputInPort() if nxt == a else Output(port)
            add(node, POISON_PRIORITY, first_match, [PushVlan(vid), fwd], "E_VStart")
        elif i == last and not loopback and not fp:
            add(node, TUNNEL_PRIORITY, vm, [PopVlan(), Output(port)], "E_VEnd")
        else:
            # with a fingerprinted source the tag survives to B, which strips it and reports
            add(node, TUNNEL_PRIORITY, vm, [Output(port)], "E_VBody")

    if not loopback and fp:
        add(b, TUNNEL_PRIORITY, vm, [PopVlan(), ToController()], "E_VEnd")
    elif loopback:
        if len(path) > 1:
            if fp:
                in_b = t.port_to(b, path[-2])
                add(b, TUNNEL_PRIORITY, FlowMatch(vlan_id=vid, in_port=in_b), [Output(y)], "E_VBody")
            else:
                add(b, TUNNEL_PRIORITY, vm, [Output(y)], "E_VBody")
        else:
            # B is A's own neighbor: catch the packet on the port facing A
            z = t.port_to(b, a)
            src_field = fingerprint if fp else t.mac(a, x)
            add(b, POISON_PRIORITY, FlowMatch(ether_src=src_field, in_port=z),
                [PushVlan(vid), Output(y)], "E_VStart")
        if fp:
            add(sub_dst, TUNNEL_PRIORITY, vm, [OutputInPort()], "E_VBody")
            add(b, TUNNEL_PRIORITY, FlowMatch(vlan_id=vid, in_port=y), [PopVlan(), ToController()], "E_VEnd")
        else:
            add(sub_dst, TUNNEL_PRIORITY, vm, [PopVlan(), OutputInPort()], "E_VEnd")

    seen = set()
    for pe in out:
        k = (pe.switch, pe.entry.key)
        if k in seen:
            raise PlanConflict(f"{link}: switch {pe.switch} would need two entries matching {pe.entry.match}")
        seen.add(k)
    return PoisonPlan(link, list(path), loopback, vid, out, mode, relay_switches(path, loopback, sub_dst))


def poison_reverse(t: Topology, plan: PoisonPlan, vlans: VlanAllocator,
                   fingerprint: str = DEFAULT_FINGERPRINT) -> PoisonPlan:
    """Independent plan for the opposite direction of ``plan.link``."""
    return compute_poison(t, plan.link.reverse(), vlans, plan.mode, fingerprint=fingerprint)


@dataclass
class PlanSet:
    mode: Mode
    plans: list = field(default_factory=list)

    def entries(self) -> list:
        """All plan entries, duplicates collapsed, in plan order."""
        seen = {}
        for plan in self.plans:
            for pe in plan.entries:
                k = (pe.switch, pe.entry.key)
                prev = seen.get(k)
                if prev is None:
                    seen[k] = pe
                elif prev.entry.actions != pe.entry.actions:
                    raise PlanConflict(f"switch {pe.switch}: plans disagree on {pe.entry.match}")
        return list(seen.values())

    def by_switch(self) -> dict:
        out: dict = {}
        for pe in self.entries():
            out.setdefault(pe.switch, []).append(pe.entry)
        return dict(sorted(out.items(), key=lambda kv: node_key(kv[0])))

    def plan_for(self, a, x) -> Optional[PoisonPlan]:
        for p in self.plans:
            if (p.link.a, p.link.x) == (a, x):
                return p
        return None

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "plans": [p.to_dict() for p in self.plans]}


def check_poison_target(t: Topology, target: Topology) -> None:
    if set(t.nodes) != set(target.nodes):
        raise PlanError("target has a different node set")
    if degree_sequence(t) != degree_sequence(target):
        raise PlanError("target degree sequence differs from the real topology")
    if t.endpoints() != target.endpoints():
        # same degree sequence but a port changed role; no entry set can realize that
        raise PlanError("target links use a different set of switch ports")


def plan_topology_poison(t: Topology, target: Topology, mode: Mode = Mode.VANILLA,
                         vlans: Optional[VlanAllocator] = None,
                         fingerprint: str = DEFAULT_FINGERPRINT) -> PlanSet:
    """Both directional plans for every target link missing from ``t``."""
    check_poison_target(t, target)
    vlans = vlans or VlanAllocator()
    ps = PlanSet(Mode(mode))
    for lk in sorted(target.links - t.links, key=lambda l: (ep_key(l[0]), ep_key(l[1]))):
        (a, x), (b, y) = lk
        fwd = compute_poison(t, DeceptiveLink(a, x, y, b), vlans, mode, fingerprint=fingerprint)
        ps.plans.append(fwd)
        ps.plans.append(poison_reverse(t, fwd, vlans, fingerprint))
    ps.entries()  # surfaces cross-plan conflicts before anything is written
    return ps


Injector = Callable[[object, list], None]


def direct_injector(net: Network, name: str = "attacker") -> Injector:
    def write(switch, entries):
        for e in entries:
            net.install(switch, e.copy(), installed_by=name)
    return write


def apply_topology_poison(t: Topology, target: Topology, inject: Injector, mode: Mode = Mode.VANILLA,
                          fingerprint: str = DEFAULT_FINGERPRINT) -> PlanSet:
    """Plan ``target`` against ``t`` and push every entry through ``inject``.

    Nothing is written when planning fails.
    """
    ps = plan_topology_poison(t, target, mode, fingerprint=fingerprint)
    for switch, entries in ps.by_switch().items():
        inject(switch, entries)
    return ps


def lower_discovery_entries(net: Network, priority: int = TABLE_MISS_PRIORITY) -> int:
    """Re-install any LLDP catch rule that outranks poison entries at ``priority``.

    Returns how many switches were changed.
    """
    changed = 0
    for sw in net.switches.values():
        old = [e for e in sw.table
               if e.match == FlowMatch(ether_type=LLDP_TYPE) and e.priority > POISON_PRIORITY]
        for e in old:
            sw.remove(lambda x, e=e: x is e)
            sw.install(FlowEntry(priority, e.match, e.actions, owner=e.owner))
            changed += 1
    return changed
