"""Scenario files: a topology, a cluster, flows and an ordered list of phases.

A scenario is one JSON document.  Running it yields a verdict with one
record per assertion plus metrics; the same file and seed always produce
the same verdict bytes.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from . import fixtures
from .attack import (DeceptiveLink, Mode, PlanError, PlanSet, VlanAllocator, apply_topology_poison,
                     check_poison_target, compute_poison, lower_discovery_entries, poison_reverse,
                     DEFAULT_FINGERPRINT)
from .cluster import Cluster, ClusterError, Role
from .controller import FlowRequest
from .dataplane import Network, SimulationFault
from .gappatch import GapPatcher, GapPatchError, build_gap_maps, predict_routes, proactive_patch
from .planner import (ActionFamily, PlannerGoal, actions_per_episode, choose_family, flow_coverage,
                      generate_flows, oracle_run, search)
from .topo import Topology, TopologyError, make_link, degree_sequence, eo_similarity, is_connected, to_dot

__all__ = ["ScenarioError", "Scenario", "Verdict", "load_topology", "load_scenario", "run_scenario",
           "bundled_scenario"]

FIXTURES = {
    "motivating": fixtures.motivating_example,
    "motivating_target": fixtures.motivating_target,
    "path_selection": fixtures.path_selection,
    "fattree": fixtures.fattree,
    "chinanet": fixtures.chinanet,
}

PHASES = {"discover", "poison", "patch", "inject-flows", "plan", "assert", "lower-discovery"}


class ScenarioError(ValueError):
    pass


def load_topology(ref, base: Optional[Path] = None) -> Topology:
    """A topology from 'fixture:NAME', a JSON file path, or an inline document."""
    if isinstance(ref, dict):
        return Topology.from_dict(ref)
    if not isinstance(ref, str):
        raise ScenarioError(f"cannot interpret topology reference {ref!r}")
    if ref.startswith("fixture:"):
        name = ref.split(":", 1)[1]
        if name not in FIXTURES:
            raise ScenarioError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}")
        return FIXTURES[name]()
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        return Topology.from_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioError(f"cannot read topology {path}: {exc}") from exc


def bundled_scenario(name: str) -> Path:
    return Path(str(resources.files(__package__).joinpath(f"scenarios/{name}")))


@dataclass
class Scenario:
    name: str
    seed: int
    topology: Topology
    members: list
    replication: str
    fingerprint: bool
    ryu_mode: bool
    routing: str
    flows_spec: dict
    phases: list
    base: Optional[Path] = None


def _validate_phase(i: int, ph: Any) -> dict:
    if isinstance(ph, str):
        ph = {"op": ph}
    if not isinstance(ph, dict) or "op" not in ph:
        raise ScenarioError(f"phase {i}: expected an object with an 'op' field")
    if ph["op"] not in PHASES:
        raise ScenarioError(f"phase {i}: unknown op {ph['op']!r}")
    return ph


def load_scenario(path_or_doc, seed_override: Optional[int] = None) -> Scenario:
    base = None
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        path = Path(path_or_doc)
        base = path.parent
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot parse scenario {path}: {exc}") from exc
    if "seed" not in doc:
        raise ScenarioError("scenario must declare a seed")
    seed = int(doc["seed"]) if seed_override is None else int(seed_override)
    if "topology" not in doc:
        raise ScenarioError("scenario must declare a topology")
    topo = load_topology(doc["topology"], base)
    cl = doc.get("cluster", {})
    members = [(m[0], Role(m[1])) for m in cl.get("members", [["c1", "leader"]])]
    routing = doc.get("routing", "proactive")
    if routing not in ("proactive", "reactive"):
        raise ScenarioError(f"routing must be proactive or reactive, not {routing!r}")
    phases = [_validate_phase(i, ph) for i, ph in enumerate(doc.get("phases", []))]
    return Scenario(doc.get("name", "scenario"), seed, topo, members, cl.get("replication", "passive"),
                    bool(doc.get("fingerprint", False)), bool(doc.get("ryu_mode", False)), routing,
                    doc.get("flows", {}), phases, base)


@dataclass
class Verdict:
    name: str
    seed: int
    assertions: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(a["passed"] for a in self.assertions)

    def to_dict(self) -> dict:
        return {"scenario": self.name, "seed": self.seed, "passed": self.passed,
                "error": self.error, "assertions": self.assertions, "metrics": self.metrics}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=str) + "\n"


class Runner:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self.real = sc.topology
        self.net = Network(self.real)
        fp = DEFAULT_FINGERPRINT if sc.fingerprint else None
        self.mode = Mode.VLAN_INPORT_SRC if sc.fingerprint else Mode.VANILLA
        self.cluster = Cluster(self.net, sc.members, sc.replication, fingerprint=fp, ryu_mode=sc.ryu_mode,
                               reactive=True, trace=True)
        self.ctl = self.cluster.controller
        self.attacker = next((m for m, r in sc.members if r is not Role.LEADER), self.cluster.leader)
        self.flows = self._flows()
        self.target: Optional[Topology] = None
        self.plans: Optional[PlanSet] = None
        self.patcher: Optional[GapPatcher] = None
        self.patch_log: list = []
        self.injections: list = []
        self.plan_reports: list = []
        self.entries_written = 0
        self.views: list = []
        self.converged_every_tick = True

    def _flows(self) -> list:
        spec = self.sc.flows_spec
        if "list" in spec:
            return [FlowRequest(f["flow_id"], f["src"], f["dst"]) for f in spec["list"]]
        count = int(spec.get("count", 0))
        if count == 0:
            return []
        return generate_flows(self.real, count, self.sc.seed)

    # -- phases ---------------------------------------------------------------
    def tick(self):
        self.cluster.tick()
        if not self.cluster.converged():
            self.converged_every_tick = False
        self.views.append(self.ctl.view)
        if self.patcher is not None:
            fresh = self.patcher.poll(self.cluster.observed_routes(self.attacker))
            self._write_patches(fresh, "reactive")

    def _write_patches(self, patches, mode):
        by_sw: dict = {}
        for pe in patches:
            by_sw.setdefault(pe.switch, []).append(pe.entry)
            self.patch_log.append({"mode": mode, **pe.to_dict()})
        for sw, entries in by_sw.items():
            self._inject(sw, entries)

    def _inject(self, switch, entries):
        if self.sc.replication == "active" and self.cluster.members[self.attacker] is not Role.FOLLOWER:
            self.cluster.direct_install(self.attacker, switch, entries)
        else:
            self.cluster.datastore_write(self.attacker, switch, entries)
        self.entries_written += len(entries)

    def op_discover(self, ph):
        for _ in range(int(ph.get("rounds", 1))):
            self.tick()

    def op_lower_discovery(self, ph):
        lower_discovery_entries(self.net)

    def op_poison(self, ph):
        if "link" in ph:
            link = DeceptiveLink.parse(ph["link"])
            vlans = VlanAllocator()
            fwd = compute_poison(self.real, link, vlans, self.mode, fingerprint=DEFAULT_FINGERPRINT)
            plans = PlanSet(self.mode, [fwd, poison_reverse(self.real, fwd, vlans, DEFAULT_FINGERPRINT)])
            for sw, entries in plans.by_switch().items():
                self._inject(sw, entries)
            ends = {(link.a, link.x), (link.b, link.y)}
            kept = [lk for lk in self.real.links if not (set(lk) & ends)]
            self.plans = plans
            self.target = self.real.with_links(kept + [make_link((link.a, link.x), (link.b, link.y))])
            return
        ref = ph.get("target", "@plan")
        if ref == "@plan":
            if not self.plan_reports or self.plan_reports[-1]["topology_obj"] is None:
                raise ScenarioError("poison references the planner result but no plan succeeded")
            target = self.plan_reports[-1]["topology_obj"]
        else:
            target = load_topology(ref, self.sc.base)
        self.target = target
        self.plans = apply_topology_poison(self.real, target, self._inject, self.mode,
                                           fingerprint=DEFAULT_FINGERPRINT)

    def op_patch(self, ph):
        mode = ph.get("mode", "proactive")
        if self.plans is None:
            raise ScenarioError("patch phase needs a preceding poison phase")
        maps = build_gap_maps(self.plans, self.real)
        if mode == "proactive":
            view = self.target if self.target is not None else self.ctl.view
            self._write_patches(proactive_patch(maps, predict_routes(view, self.flows), self.real), "proactive")
        elif mode == "reactive":
            self.patcher = GapPatcher(maps, self.real)
        else:
            raise ScenarioError(f"patch mode must be proactive or reactive, not {mode!r}")

    def op_inject_flows(self, ph):
        before = self.ctl.unexpected
        if self.sc.routing == "proactive":
            for f in self.flows:
                self.ctl.route_flow(f)
        seq = len(self.injections)
        start = len(self.net.deliveries)
        for f in self.flows:
            self.net.send_flow(f.flow_id, f.src_host, f.dst_host, seq)
        got = {(d.packet.payload.flow_id, d.host) for d in self.net.deliveries[start:]
               if d.packet.payload.seq == seq}
        delivered = sorted(f.flow_id for f in self.flows if (f.flow_id, f.dst_host) in got)
        traversed = {f.flow_id: self.net.traversals[(f.flow_id, seq)].switches
                     for f in self.flows if (f.flow_id, seq) in self.net.traversals}
        self.injections.append({"seq": seq, "unexpected": self.ctl.unexpected - before,
                                "delivered": delivered, "traversed": traversed})

    def op_plan(self, ph):
        target = ph["target"]
        kind = ph.get("goal", "eavesdrop")
        base = flow_coverage(self.real, self.real, self.flows, target)
        if "coverage" in ph:
            thr = int(ph["coverage"])
        else:
            delta = int(ph.get("coverage_delta", 4))
            thr = base + delta if kind == "eavesdrop" else base - delta
        goal = PlannerGoal(kind, target, thr, Fraction(str(ph.get("similarity", 0.9))))
        fam = ph.get("actions", "auto")
        family = choose_family(self.real) if fam == "auto" else ActionFamily(fam)
        rep = search(self.real, goal, self.flows, int(ph.get("budget", 200_000)), self.sc.seed,
                     family=family, n_actions=ph.get("actions_per_episode"), record_trace=False)
        d = rep.to_dict(include_topology=False)
        d["topology_obj"] = rep.accepted
        self.plan_reports.append(d)

    def op_assert(self, ph) -> dict:
        pred = ph.get("predicate")
        fn = getattr(self, "pred_" + str(pred).replace("-", "_"), None)
        if fn is None:
            raise ScenarioError(f"unknown predicate {pred!r}")
        ok, detail = fn(ph)
        return {"predicate": pred, "passed": bool(ok), "detail": detail}

    # -- predicates -----------------------------------------------------------
    def pred_view_equals_target(self, ph):
        target = load_topology(ph["target"], self.sc.base) if "target" in ph else self.target
        if target is None:
            return False, "no target topology"
        diff = len(self.ctl.view.links ^ target.links)
        return diff == 0, f"{diff} links differ"

    def pred_view_equals_real(self, ph):
        diff = len(self.ctl.view.links ^ self.real.links)
        return diff == 0, f"{diff} links differ"

    def pred_view_has_link(self, ph):
        link = DeceptiveLink.parse(ph["link"])
        ok = self.ctl.view.has_link((link.a, link.x), (link.b, link.y))
        return ok, str(link)

    def _injection(self, ph):
        if not self.injections:
            raise ScenarioError("assertion needs a preceding inject-flows phase")
        return self.injections[int(ph.get("injection", -1))]

    def pred_flows_delivered(self, ph):
        inj = self._injection(ph)
        want = ph.get("flows") or [f.flow_id for f in self.flows]
        missing = sorted(set(want) - set(inj["delivered"]))
        return not missing, f"missing {missing}" if missing else f"{len(want)} delivered"

    def pred_unexpected_packets(self, ph):
        n = self._injection(ph)["unexpected"]
        ok = n <= ph.get("max", n) and n >= ph.get("min", n)
        return ok, f"{n} unexpected packets"

    def pred_observed(self, ph):
        tr = self._injection(ph)["traversed"].get(ph["flow"], [])
        return ph["switch"] in tr, f"{ph['flow']} crossed {tr}"

    def pred_planner_success(self, ph):
        if not self.plan_reports:
            return False, "no plan phase"
        r = self.plan_reports[-1]
        return r["success"], f"steps={r['steps']} coverage={r['coverage']}"

    def pred_similarity_at_least(self, ph):
        t = self.target or (self.plan_reports[-1]["topology_obj"] if self.plan_reports else None)
        if t is None:
            return False, "no target topology"
        sim = eo_similarity(self.real, t)
        return sim >= Fraction(str(ph["value"])), f"similarity {sim}"

    def pred_plan_verified(self, ph):
        """Accepted plan keeps degrees and connectivity and the simulator agrees on coverage."""
        if not self.plan_reports or self.plan_reports[-1]["topology_obj"] is None:
            return False, "no accepted plan"
        r = self.plan_reports[-1]
        t = r["topology_obj"]
        target = r["goal"]["target"]
        o = oracle_run(self.real, t, self.flows, target)
        ok = (degree_sequence(t) == degree_sequence(self.real) and is_connected(t)
              and o.count == r["coverage"] and not o.undelivered)
        return ok, f"oracle coverage {o.count}, planner {r['coverage']}"

    def pred_datastores_converged(self, ph):
        ok = self.converged_every_tick and self.cluster.ticks > 0
        return ok, f"{self.cluster.ticks} ticks"

    def pred_switch_has_entry(self, ph):
        sw = ph["switch"]
        owner = ph.get("owner")
        installed_by = ph.get("installed_by")
        hits = [e for e in self.net.switches[sw].table
                if (owner is None or e.owner == owner) and (installed_by is None or e.installed_by == installed_by)]
        return bool(hits), f"{len(hits)} matching entries on {sw}"

    # -- driver -----------------------------------------------------------------
    def metrics(self) -> dict:
        m = {
            "discovery_rounds": self.ctl.rounds,
            "unexpected_packets": self.ctl.unexpected,
            "entries_written": self.entries_written,
            "patch_entries": len(self.patch_log),
            "flows": len(self.flows),
            "injections": [{k: v for k, v in inj.items() if k != "traversed"} for inj in self.injections],
            "view_links": len(self.ctl.view.links),
        }
        if self.target is not None:
            m["similarity"] = str(eo_similarity(self.real, self.target))
        if self.plans is not None:
            m["plans"] = len(self.plans.plans)
        if self.plan_reports:
            m["planner"] = [{k: v for k, v in r.items() if k != "topology_obj"} for r in self.plan_reports]
        return m

    def run(self) -> Verdict:
        v = Verdict(self.sc.name, self.sc.seed)
        for i, ph in enumerate(self.sc.phases):
            op = ph["op"]
            try:
                if op == "assert":
                    v.assertions.append(self.op_assert(ph))
                else:
                    getattr(self, "op_" + op.replace("-", "_"))(ph)
            except SimulationFault as exc:
                v.error = f"phase {i} ({op}): simulation fault: {exc}"
                break
            except (ScenarioError, PlanError, ClusterError, GapPatchError, TopologyError, KeyError) as exc:
                v.error = f"phase {i} ({op}): {exc}"
                break
        v.metrics = self.metrics()
        return v


def run_scenario(path_or_doc, out_dir: Optional[Path] = None, seed: Optional[int] = None,
                 runner_out: Optional[list] = None) -> Verdict:
    """Execute a scenario.  ``SEED`` in the environment overrides the scenario seed."""
    if seed is None and os.environ.get("SEED"):
        seed = int(os.environ["SEED"])
    sc = load_scenario(path_or_doc, seed)
    runner = Runner(sc)
    real_dot = to_dot(runner.real, "real")
    verdict = runner.run()
    if runner_out is not None:
        runner_out.append(runner)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(verdict.to_json(), encoding="utf-8")
        (out / "view_before.dot").write_text(
            to_dot(runner.views[0] if runner.views else runner.real, "view_before"), encoding="utf-8")
        gaps = sorted({p["switch"] for p in runner.patch_log}, key=str)
        (out / "view_after.dot").write_text(
            to_dot(runner.ctl.view, "view_after", real=runner.real, highlight_nodes=gaps), encoding="utf-8")
        (out / "real.dot").write_text(real_dot, encoding="utf-8")
        (out / "tables.json").write_text(json.dumps(runner.net.dump_tables(), indent=2) + "\n", encoding="utf-8")
        if runner.patch_log:
            (out / "patches.json").write_text(json.dumps(runner.patch_log, indent=2) + "\n", encoding="utf-8")
        if runner.ctl.trace:
            (out / "discovery_trace.jsonl").write_text(
                "".join(json.dumps(e, default=str) + "\n" for e in runner.ctl.trace), encoding="utf-8")
    return verdict
