"""A fixed-leader controller cluster with a replicated flow datastore.

Any member may write intended flow entries into the datastore.  Writes
spread to every member on the next tick and the leader pushes them to the
switches on the writer's behalf.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from .controller import Controller
from .dataplane import FlowEntry, Network
from .topo import node_key

__all__ = ["Role", "Datastore", "Cluster", "ClusterError"]


class Role(str, Enum):
    LEADER = "leader"
    EQUAL = "equal"
    FOLLOWER = "follower"


class ClusterError(RuntimeError):
    pass


def _entry_doc(e: FlowEntry) -> dict:
    return e.to_dict(counters=False)


def _same_rule(a: dict, b: dict) -> bool:
    return a["priority"] == b["priority"] and a["match"] == b["match"]


@dataclass
class Datastore:
    flows: dict = field(default_factory=dict)  # str(switch) -> list of entry documents
    log: list = field(default_factory=list)  # [author, switch, entry count]
    topology: Optional[dict] = None

    def apply(self, author, switch, docs: list, log: bool = True) -> None:
        table = self.flows.setdefault(str(switch), [])
        for d in docs:
            table[:] = [x for x in table if not _same_rule(x, d)]
            table.append(d)
        if log:
            self.log.append([author, str(switch), len(docs)])

    def canonical(self) -> str:
        return json.dumps({"flows": self.flows, "log": self.log, "topology": self.topology},
                          sort_keys=True, separators=(",", ":"))


class Cluster:
    """Members keyed by id; exactly one leader, which owns the switch connections."""

    def __init__(self, net: Network, members: Iterable = (("c1", Role.LEADER),),
                 replication: str = "passive", **controller_kw):
        self.members = {mid: Role(r) for mid, r in members}
        leaders = [m for m, r in self.members.items() if r is Role.LEADER]
        if len(leaders) != 1:
            raise ClusterError(f"cluster needs exactly one leader, got {len(leaders)}")
        if replication not in ("passive", "active"):
            raise ClusterError(f"unknown replication mode {replication!r}")
        self.replication = replication
        self.leader = leaders[0]
        self.net = net
        self.stores = {m: Datastore() for m in self.members}
        self._pending: list = []  # (author, switch, docs, already_on_switch)
        self.controller = Controller(net, name=self.leader, **controller_kw)
        self.controller.install_hooks.append(self._leader_installed)
        self.ticks = 0

    # -- writes ---------------------------------------------------------------
    def _check(self, author, switch):
        if author not in self.members:
            raise ClusterError(f"{author!r} is not a cluster member")
        if switch not in self.net.switches:
            raise ClusterError(f"write rejected: unknown switch {switch!r}")

    def datastore_write(self, author, switch, entries: list) -> int:
        """Queue ``entries`` for ``switch``; returns how many were accepted."""
        self._check(author, switch)
        if not entries:
            return 0
        docs = [_entry_doc(e) for e in entries]
        # visible locally at once; the log entry lands at the tick, in global order
        self.stores[author].apply(author, switch, docs, log=False)
        self._pending.append((author, switch, docs, False))
        return len(docs)

    def direct_install(self, author, switch, entries: list) -> int:
        """Install straight onto the switch, bypassing the datastore."""
        self._check(author, switch)
        if self.members[author] is Role.FOLLOWER:
            raise ClusterError(f"{author!r} is a follower and holds no switch connection")
        for e in entries:
            self.net.install(switch, e.copy(), installed_by=author)
        return len(entries)

    def writer(self, author):
        return lambda switch, entries: self.datastore_write(author, switch, entries)

    def direct_writer(self, author):
        return lambda switch, entries: self.direct_install(author, switch, entries)

    def _leader_installed(self, switch, entry: FlowEntry) -> None:
        doc = _entry_doc(entry)
        self.stores[self.leader].apply(self.leader, switch, [doc], log=False)
        self._pending.append((self.leader, switch, [doc], True))

    # -- ticking --------------------------------------------------------------
    def tick(self, discover: bool = True) -> list:
        """Propagate writes, let the leader enact them, then rediscover."""
        self.ticks += 1
        events = []
        pending, self._pending = self._pending, []
        for author, switch, docs, on_switch in pending:
            # replayed everywhere, author included, so every store ends in the same order
            for store in self.stores.values():
                store.apply(author, switch, docs)
            events.append({"event": "propagate", "author": author, "switch": switch, "entries": len(docs)})
            if not on_switch:
                for d in docs:
                    self.net.install(switch, FlowEntry.from_dict(d), installed_by=self.leader)
                events.append({"event": "install", "by": self.leader, "for": author,
                               "switch": switch, "entries": len(docs)})
        if discover:
            self.controller.run_discovery_round()
            events.append({"event": "discovery", "round": self.controller.rounds,
                           "links": len(self.controller.view.links)})
        topo_doc = self.controller.view.to_dict()
        for store in self.stores.values():
            store.topology = topo_doc
        return events

    def converged(self) -> bool:
        texts = {s.canonical() for s in self.stores.values()}
        return len(texts) == 1

    def observed_routes(self, member=None) -> list:
        """Controller-owned entries visible in ``member``'s datastore, as (switch, FlowEntry)."""
        store = self.stores[member or self.leader]
        lookup = {str(n): n for n in self.net.switches}
        out = []
        for sw in sorted(store.flows, key=lambda s: node_key(lookup[s])):
            for d in store.flows[sw]:
                if d.get("owner") == "controller":
                    out.append((lookup[sw], FlowEntry.from_dict(d)))
        return out
