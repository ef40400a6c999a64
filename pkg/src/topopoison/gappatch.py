"""Gap patching: keep traffic flowing across fabricated links.

A route the controller computes over a fabricated link Ax->yB makes A send
the flow out of port x, into A's real neighbor, which has no entry for it.
One entry there, matching the flow's destination plus the ingress port,
pushes the packet into the relay tunnel already built for discovery.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .attack import Mode, PlanSet
from .controller import ROUTE_PRIORITY, FlowRequest, route_entries
from .dataplane import FlowEntry, FlowMatch, Output, OutputInPort, PushVlan
from .topo import Endpoint, Topology, ep_key

__all__ = [
    "GapMaps",
    "PatchEntry",
    "GapPatchError",
    "build_gap_maps",
    "reactive_patch",
    "proactive_patch",
    "predict_routes",
    "GapPatcher",
    "PATCH_PRIORITY",
]

# One below routes: a flow that re-enters a gap switch on the same port as an
# earlier route hop is indistinguishable there, and the route must win or the
# packet would be sent round the tunnel again.
PATCH_PRIORITY = ROUTE_PRIORITY - 1


class GapPatchError(RuntimeError):
    pass


@dataclass
class GapMaps:
    """Per fabricated endpoint (A, x): VLAN id and (in_port, out_port) at A's real neighbor."""
    re_vid: dict = field(default_factory=dict)
    re_fe: dict = field(default_factory=dict)
    fabricated: set = field(default_factory=set)
    unsupported: dict = field(default_factory=dict)  # endpoint -> reason

    def to_dict(self) -> dict:
        eps = sorted(self.fabricated, key=ep_key)
        return {
            "endpoints": [
                {"endpoint": list(ep), "vlan_id": self.re_vid.get(ep),
                 "in_port": self.re_fe[ep][0] if ep in self.re_fe else None,
                 "out_port": self.re_fe[ep][1] if ep in self.re_fe else None,
                 "unsupported": self.unsupported.get(ep)}
                for ep in eps
            ]
        }


@dataclass(frozen=True)
class PatchEntry:
    switch: object
    entry: FlowEntry
    endpoint: Endpoint

    def to_dict(self) -> dict:
        return {"switch": self.switch, "endpoint": list(self.endpoint),
                **self.entry.to_dict(counters=False)}


def build_gap_maps(plans: PlanSet, t: Topology) -> GapMaps:
    maps = GapMaps()
    for plan in plans.plans:
        ep = (plan.link.a, plan.link.x)
        maps.fabricated.add(ep)
        in_port = t.peer(ep)[1]
        if plan.mode is Mode.VLAN_INPORT_SRC:
            # the tunnel ends at the controller, so only a direct hand-off can carry data
            if not plan.loopback and len(plan.path) == 2:
                maps.re_vid[ep] = None
                maps.re_fe[ep] = (in_port, t.port_to(plan.path[0], plan.path[1]))
            else:
                maps.unsupported[ep] = "fingerprint-mode tunnel terminates at the controller"
            continue
        first = plan.first_entry().entry
        vid = None
        out = None
        for a in first.actions:
            if isinstance(a, PushVlan):
                vid = a.vid
            elif isinstance(a, Output):
                out = a.port
            elif isinstance(a, OutputInPort):
                out = in_port
        maps.re_vid[ep] = vid
        maps.re_fe[ep] = (in_port, out)
    return maps


def _patch_for(maps: GapMaps, ep: Endpoint, observed: FlowEntry, t: Topology) -> Optional[PatchEntry]:
    if ep not in maps.re_fe:
        if ep in maps.unsupported:
            raise GapPatchError(f"cannot patch across {ep}: {maps.unsupported[ep]}")
        raise GapPatchError(f"fabricated endpoint {ep} has no gap-map record")
    if observed.match.ether_dst is None:
        return None
    sub_src = t.peer(ep)[0]
    in_port, out = maps.re_fe[ep]
    fwd = OutputInPort() if out == in_port else Output(out)
    vid = maps.re_vid[ep]
    actions = (PushVlan(vid), fwd) if vid is not None else (fwd,)
    match = FlowMatch(ether_dst=observed.match.ether_dst, in_port=in_port)
    return PatchEntry(sub_src, FlowEntry(PATCH_PRIORITY, match, actions, owner="patcher"), ep)


def reactive_patch(maps: GapMaps, observed: Iterable, t: Topology) -> list:
    """One patch per observed route entry that forwards into a fabricated endpoint.

    ``observed`` holds (switch, FlowEntry) pairs; only controller-owned
    entries are considered.  Duplicates collapse to a single patch.
    """
    out = []
    seen = set()
    for switch, entry in observed:
        if entry.owner != "controller":
            continue
        for a in entry.actions:
            if not isinstance(a, Output):
                continue
            ep = (switch, a.port)
            if ep not in maps.fabricated:
                continue
            pe = _patch_for(maps, ep, entry, t)
            if pe is None:
                continue
            k = (pe.switch, pe.entry.key)
            if k in seen:
                continue
            seen.add(k)
            out.append(pe)
    return out


def predict_routes(view: Topology, flows: Iterable[FlowRequest]) -> list:
    """Route entries a proactive controller will install for ``flows`` on ``view``."""
    entries = []
    for f in flows:
        res = route_entries(view, f)
        if res is not None:
            entries.extend(res[1])
    return entries


def proactive_patch(maps: GapMaps, predicted_routes: Iterable, t: Topology) -> list:
    """Patches computed ahead of time from routes predicted on the deceptive topology."""
    return reactive_patch(maps, predicted_routes, t)


class GapPatcher:
    """Monitor that patches each gap once, however often it is polled."""

    def __init__(self, maps: GapMaps, t: Topology, preinstalled: Iterable = ()):
        self.maps = maps
        self.topology = t
        self.installed: dict = {(pe.switch, pe.entry.key): pe for pe in preinstalled}

    def poll(self, observed: Iterable) -> list:
        fresh = []
        for pe in reactive_patch(self.maps, observed, self.topology):
            k = (pe.switch, pe.entry.key)
            if k not in self.installed:
                self.installed[k] = pe
                fresh.append(pe)
        return fresh

    def entries(self) -> list:
        return list(self.installed.values())
