"""Search for a deceptive topology that steers flows toward or away from a switch.

The environment state is a rewired copy of the real topology with the same
degree sequence.  Each action picks two links (an index into the m-choose-2
pairs) and applies a 2-switch or a node reallocation to them.  A step earns
+1 when the coverage goal and the similarity floor both hold, else -1.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .attack import DeceptiveLink, apply_topology_poison, direct_injector, relay_switches, select_path
from .controller import Controller, FlowRequest
from .dataplane import Network, SimulationFault
from .gappatch import build_gap_maps, predict_routes, proactive_patch
from .topo import (RewireError, Topology, bfs_distances, degree_sequence, eo_similarity, is_connected,
                   node_key, node_reallocation, two_switch, two_switch_pairings, walk_path)

__all__ = [
    "ActionFamily",
    "PlannerGoal",
    "CoverageReport",
    "CoverageModel",
    "generate_flows",
    "flow_coverage",
    "coverage_report",
    "oracle_coverage",
    "oracle_run",
    "OracleRun",
    "OracleError",
    "actions_per_episode",
    "choose_family",
    "RewiringEnv",
    "StepResult",
    "SearchReport",
    "search",
]


class ActionFamily(str, Enum):
    TWO_SWITCH = "two-switch"
    NODE_REALLOC = "node-realloc"


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerGoal:
    kind: str  # "eavesdrop" or "evade"
    target: object
    coverage_threshold: int
    similarity: Fraction

    def __post_init__(self):
        if self.kind not in ("eavesdrop", "evade"):
            raise ValueError(f"goal kind must be eavesdrop or evade, not {self.kind!r}")
        sim = Fraction(str(self.similarity)) if isinstance(self.similarity, float) else Fraction(self.similarity)
        if not 0 <= sim <= 1:
            raise ValueError("similarity threshold must lie in [0, 1]")
        object.__setattr__(self, "similarity", sim)

    def coverage_met(self, coverage: int) -> bool:
        if self.kind == "eavesdrop":
            return coverage >= self.coverage_threshold
        return coverage <= self.coverage_threshold

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target, "coverage_threshold": self.coverage_threshold,
                "similarity": str(self.similarity)}


# -- flows and coverage ------------------------------------------------------

def generate_flows(t: Topology, count: int, seed: int) -> list:
    """``count`` distinct host pairs drawn uniformly with random direction."""
    hosts = sorted(t.hosts.values(), key=lambda h: (node_key(h.attach[0]), h.attach[1], h.id))
    pairs = list(itertools.combinations([h.id for h in hosts], 2))
    if count > len(pairs):
        raise ValueError(f"only {len(pairs)} host pairs available, {count} flows requested")
    rng = random.Random(seed)
    flows = []
    for k, (a, b) in enumerate(rng.sample(pairs, count)):
        if rng.random() < 0.5:
            a, b = b, a
        flows.append(FlowRequest(f"f{k + 1}", a, b))
    return flows


@dataclass
class CoverageReport:
    count: int
    covered: list = field(default_factory=list)
    skipped: list = field(default_factory=list)  # no route on the deceptive topology
    undelivered: list = field(default_factory=list)  # routed but never reaches its host
    routes: dict = field(default_factory=dict)  # flow id -> switches actually visited


class CoverageModel:
    """Flow coverage of one target, evaluated for many deceptive topologies.

    Instead of simulating packets, forwarding is worked out from the entries
    the controller and the patcher would install.  A flow routed over a
    fabricated hop u->v leaves u into u's real neighbor, whose patch carries it
    along the relay switches realizing that hop (for a one-switch relay, the
    real neighbor sitting between u and v).  Route entries outrank patches, so
    a packet that re-enters a patched switch on a port some route for the same
    destination also uses simply follows that route.  Relays depend only on
    the real topology and are cached per directed hop.
    """

    def __init__(self, real: Topology, flows: Iterable[FlowRequest], target):
        self.real = real
        self.target = target
        self.flows = []
        for f in flows:
            src = real.host(f.src_host).attach
            dst = real.host(f.dst_host).attach
            self.flows.append((f.flow_id, src, dst))
        self._relays: dict = {}

    def relay(self, u, pu, pv, v) -> tuple:
        key = (u, pu, pv, v)
        r = self._relays.get(key)
        if r is None:
            link = DeceptiveLink(u, pu, pv, v)
            path, loopback = select_path(self.real, link)
            r = relay_switches(path, loopback, self.real.peer((v, pv))[0])
            self._relays[key] = r
        return r

    def report(self, deceptive: Topology) -> CoverageReport:
        real = self.real
        rep = CoverageReport(0)
        dist_cache: dict = {}
        # per destination switch: route keys (node, in_port) -> out port, patch keys -> fabricated endpoint
        routes: dict = {}
        patches: dict = {}
        routed = []
        for fid, src, dst in self.flows:
            d = dst[0]
            dist = dist_cache.get(d)
            if dist is None:
                dist = dist_cache[d] = bfs_distances(deceptive, d)
            path = walk_path(deceptive, src[0], d, dist)
            if path is None:
                rep.skipped.append(fid)
                continue
            routed.append((fid, src, dst))
            rk = routes.setdefault(dst, {})
            pk = patches.setdefault(dst, {})
            in_port = src[1]
            for i, n in enumerate(path):
                if i + 1 < len(path):
                    out = deceptive.port_to(n, path[i + 1])
                    rk[(n, in_port)] = out
                    if not real.has_link((n, out), (path[i + 1], deceptive.port_to(path[i + 1], n))):
                        pk[real.peer((n, out))] = (n, out)
                    in_port = deceptive.port_to(path[i + 1], n)
                else:
                    rk[(n, in_port)] = dst[1]
        for fid, src, dst in routed:
            visited, delivered = self._walk(deceptive, src, dst, routes[dst], patches[dst])
            rep.routes[fid] = visited
            if not delivered:
                rep.undelivered.append(fid)
            if self.target in visited:
                rep.covered.append(fid)
        rep.count = len(rep.covered)
        return rep

    def _walk(self, deceptive, src, dst, rk, pk) -> tuple:
        n, q = src
        seen = set()
        visited = []
        while True:
            if (n, q) in seen:
                return visited, False  # forwarding loop
            seen.add((n, q))
            visited.append(n)
            out = rk.get((n, q))
            if out is not None:
                if (n, out) == dst:
                    return visited, True
                nxt = self.real.peer((n, out))
                if nxt is None:
                    return visited, False
                n, q = nxt
                continue
            ep = pk.get((n, q))
            if ep is None:
                return visited, False  # table-miss
            u, pu = ep
            v, pv = deceptive.peer(ep)
            visited.extend(self.relay(u, pu, pv, v)[1:])
            n, q = v, pv

    def count(self, deceptive: Topology) -> int:
        return self.report(deceptive).count


def coverage_report(real: Topology, deceptive: Topology, flows, target) -> CoverageReport:
    if set(real.nodes) != set(deceptive.nodes):
        raise ValueError("real and deceptive topologies have different node sets")
    return CoverageModel(real, flows, target).report(deceptive)


def flow_coverage(real: Topology, deceptive: Topology, flows, target) -> int:
    """Number of flows routed on ``deceptive`` that physically cross ``target``."""
    return coverage_report(real, deceptive, flows, target).count


@dataclass
class OracleRun:
    count: int
    covered: list
    undelivered: list
    faults: dict
    net: Network
    controller: Controller


def oracle_run(real: Topology, deceptive: Topology, flows, target) -> OracleRun:
    """Poison, patch, route and send one packet per flow, then read where packets went."""
    flows = list(flows)
    net = Network(real)
    ctl = Controller(net, name="oracle", reactive=False)
    plans = apply_topology_poison(real, deceptive, direct_injector(net))
    ctl.run_discovery_round()
    if ctl.view.links != deceptive.links:
        raise OracleError("discovered view differs from the deceptive topology")
    maps = build_gap_maps(plans, real)
    for pe in proactive_patch(maps, predict_routes(ctl.view, flows), real):
        net.install(pe.switch, pe.entry.copy(), installed_by="patcher")
    routed = [f for f in flows if ctl.route_flow(f) is not None]
    faults = {}
    for f in routed:
        try:
            net.send_flow(f.flow_id, f.src_host, f.dst_host)
        except SimulationFault as exc:
            faults[f.flow_id] = str(exc)
    covered, undelivered = [], []
    for f in routed:
        tr = net.traversals.get((f.flow_id, 0))
        if tr is not None and target in tr.switches:
            covered.append(f.flow_id)
        if tr is None or f.dst_host not in tr.delivered_to:
            undelivered.append(f.flow_id)
    return OracleRun(len(covered), covered, undelivered, faults, net, ctl)


def oracle_coverage(real: Topology, deceptive: Topology, flows, target) -> int:
    """Ground-truth coverage from a full simulation of the poisoned network."""
    return oracle_run(real, deceptive, flows, target).count


# -- environment ------------------------------------------------------------

def actions_per_episode(t: Topology, similarity) -> int:
    """Episode length from the link count: round(m * (1 - s)), at least 1."""
    m = len(t.links)
    return max(1, int(math.floor(m * (1 - float(similarity)) + 0.5)))


def choose_family(t: Topology) -> ActionFamily:
    """2-switch for tree-like graphs or when no node could be reallocated."""
    n = len(t.nodes)
    cycles = len(t.links) - n + 1
    if cycles < n / 4 or not any(t.degree(v) == 2 for v in t.nodes):
        return ActionFamily.TWO_SWITCH
    return ActionFamily.NODE_REALLOC


@dataclass
class StepResult:
    state: Topology
    reward: int
    done: bool
    accepted: bool
    coverage: int
    similarity: Fraction
    reason: str = ""


class RewiringEnv:
    def __init__(self, real: Topology, goal: PlannerGoal, flows, family: ActionFamily,
                 n_actions: Optional[int] = None):
        if goal.target not in real.nodes:
            raise ValueError(f"target {goal.target!r} is not in the topology")
        self.real = real
        self.goal = goal
        self.family = ActionFamily(family)
        self.model = CoverageModel(real, flows, goal.target)
        self.m = len(real.links)
        self.space = self.m * (self.m - 1) // 2
        self.n_actions = n_actions or actions_per_episode(real, goal.similarity)
        self.degrees = degree_sequence(real)
        self._iu, self._ju = np.triu_indices(self.m, 1)
        self.baseline = self.model.count(real)
        self.reset()

    def reset(self) -> Topology:
        self.state = self.real
        self.coverage = self.baseline
        self.similarity = Fraction(1)
        self.taken = 0
        return self.state

    def decode(self, index: int) -> tuple:
        return int(self._iu[index]), int(self._ju[index])

    def _candidates(self, e1, e2):
        s = self.state
        if self.family is ActionFamily.TWO_SWITCH:
            for rw in two_switch_pairings(e1, e2):
                yield lambda rw=rw: two_switch(s, e1, e2, rw)
            return
        for link, target in ((e1, e2), (e2, e1)):
            for c, _ in link:
                if s.degree(c) == 2 and c not in (target[0][0], target[1][0]):
                    yield lambda c=c, target=target: node_reallocation(s, c, target)

    def step(self, index: int) -> StepResult:
        links = self.state.sorted_links()
        i, j = self.decode(index)
        e1, e2 = links[i], links[j]
        nxt = None
        reason = "no valid rewiring for this pair"
        for make in self._candidates(e1, e2):
            try:
                cand = make()
            except RewireError as exc:
                reason = exc.reason
                continue
            if not is_connected(cand):
                reason = "rewiring disconnects the network"
                continue
            nxt = cand
            break
        self.taken += 1
        if nxt is None:
            return StepResult(self.state, -1, False, False, self.coverage, self.similarity, reason)
        if degree_sequence(nxt) != self.degrees:  # cannot happen for valid moves; guard anyway
            return StepResult(self.state, -1, False, False, self.coverage, self.similarity, "degree change")
        self.state = nxt
        rep = self.model.report(nxt)
        self.coverage = rep.count
        self.similarity = eo_similarity(self.real, nxt)
        # a state that strands traffic would expose the attack, so it never pays off
        ok = (self.goal.coverage_met(self.coverage) and self.similarity >= self.goal.similarity
              and not rep.undelivered and not rep.skipped)
        return StepResult(nxt, 1 if ok else -1, ok, True, self.coverage, self.similarity,
                          "" if not rep.undelivered else "strands flows")


# -- search -----------------------------------------------------------------

@dataclass
class SearchReport:
    success: bool
    steps: int
    episodes: int
    family: str
    n_actions: int
    baseline_coverage: int
    goal: PlannerGoal
    accepted: Optional[Topology] = None
    coverage: Optional[int] = None
    similarity: Optional[Fraction] = None
    best_coverage: Optional[int] = None
    best_similarity: Optional[Fraction] = None
    erm: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (step, episode, reward, coverage, similarity)
    violations: int = 0

    def to_dict(self, include_topology: bool = True) -> dict:
        d = {
            "success": self.success,
            "steps": self.steps,
            "episodes": self.episodes,
            "family": self.family,
            "actions_per_episode": self.n_actions,
            "goal": self.goal.to_dict(),
            "baseline_coverage": self.baseline_coverage,
            "coverage": self.coverage,
            "similarity": None if self.similarity is None else str(self.similarity),
            "best_coverage": self.best_coverage,
            "best_similarity": None if self.best_similarity is None else str(self.best_similarity),
            "violations": self.violations,
            "final_erm": self.erm[-1] if self.erm else None,
        }
        if include_topology:
            d["topology"] = self.accepted.to_dict() if self.accepted is not None else None
        return d

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "episode", "reward", "coverage", "similarity"])
        for step, ep, r, cov, sim in self.trace:
            w.writerow([step, ep, r, cov, f"{float(sim):.6f}"])
        return buf.getvalue()


def search(real: Topology, goal: PlannerGoal, flows, budget: int, seed: int,
           family: Optional[ActionFamily] = None, n_actions: Optional[int] = None,
           lr: float = 0.5, erm_window: int = 100, record_trace: bool = True,
           check_invariants: bool = False) -> SearchReport:
    """Episodic search with a softmax policy over action indices.

    After each episode every action index it used is nudged by the episode
    return relative to a running baseline.  Deterministic for a given seed.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    family = ActionFamily(family) if family is not None else choose_family(real)
    env = RewiringEnv(real, goal, flows, family, n_actions)
    rng = np.random.default_rng(seed)
    logits = np.zeros(env.space)
    baseline = None
    report = SearchReport(False, 0, 0, family.value, env.n_actions, env.baseline, goal)
    better = (lambda a, b: a > b) if goal.kind == "eavesdrop" else (lambda a, b: a < b)
    returns: list = []
    real_degrees = degree_sequence(real)
    steps = 0
    while steps < budget and not report.success:
        env.reset()
        report.episodes += 1
        used = []
        ret = 0
        z = logits - logits.max()
        p = np.exp(z)
        p /= p.sum()
        for _ in range(env.n_actions):
            if steps >= budget:
                break
            a = int(rng.choice(env.space, p=p))
            before = env.state
            res = env.step(a)
            steps += 1
            used.append(a)
            ret += res.reward
            if check_invariants:
                if degree_sequence(res.state) != real_degrees or not is_connected(res.state):
                    report.violations += 1
                if not res.accepted and res.state is not before:
                    report.violations += 1
            if record_trace:
                report.trace.append((steps, report.episodes, res.reward, res.coverage, res.similarity))
            if res.accepted:
                if res.similarity >= goal.similarity and (
                        report.best_coverage is None or better(res.coverage, report.best_coverage)):
                    report.best_coverage = res.coverage
                if goal.coverage_met(res.coverage) and (
                        report.best_similarity is None or res.similarity > report.best_similarity):
                    report.best_similarity = res.similarity
            if res.done:
                report.success = True
                report.accepted = res.state
                report.coverage = res.coverage
                report.similarity = res.similarity
                break
        returns.append(ret)
        report.erm.append(float(np.mean(returns[-erm_window:])))
        baseline = ret if baseline is None else 0.95 * baseline + 0.05 * ret
        adv = ret - baseline
        if used and adv != 0:
            np.add.at(logits, used, lr * adv / len(used))
            np.clip(logits, -20, 20, out=logits)
    report.steps = steps
    return report
