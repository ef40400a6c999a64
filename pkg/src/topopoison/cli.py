"""Command-line entry point: ``topopoison <subcommand> ...``.

Every subcommand writes JSON (or DOT / CSV where asked) and exits 0 on
success, 1 when a scenario verdict fails, and 2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .attack import (DeceptiveLink, Method, Mode, PlanError, PlanSet, VlanAllocator, compute_poison,
                     direct_injector, plan_topology_poison, poison_reverse, DEFAULT_FINGERPRINT)
from .controller import Controller
from .dataplane import Network
from .planner import ActionFamily, PlannerGoal, choose_family, flow_coverage, generate_flows, search
from .scenario import ScenarioError, load_scenario, load_topology, run_scenario, Runner
from .topo import TopologyError, eo_similarity, to_dot

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _seed(arg: Optional[int], default: Optional[int] = 0) -> Optional[int]:
    """SEED in the environment beats --seed, which beats ``default``."""
    env = os.environ.get("SEED")
    if env:
        return int(env)
    return default if arg is None else arg


def _emit(text: str, dest: Optional[str]) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


def _node(s: str):
    return int(s) if s.lstrip("-").isdigit() else s


# -- subcommands --------------------------------------------------------------

def cmd_run(args) -> int:
    v = run_scenario(args.scenario, out_dir=args.out, seed=_seed(args.seed, None))
    _emit(v.to_json(), args.report)
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_discover(args) -> int:
    t = load_topology(args.topology)
    net = Network(t)
    ctl = Controller(net, fingerprint=DEFAULT_FINGERPRINT if args.fingerprint else None,
                     ryu_mode=args.ryu, trace=args.trace is not None)
    rounds = []
    for _ in range(args.rounds):
        store = ctl.run_discovery_round()
        rounds.append({"round": store.round, "links": len(ctl.view.links),
                       "matches_real": ctl.view.links == t.links})
    if args.trace:
        Path(args.trace).write_text("".join(json.dumps(e, default=str) + "\n" for e in ctl.trace),
                                    encoding="utf-8")
    _emit(_dumps({"rounds": rounds, "view": ctl.view.to_dict()}), args.out)
    return EXIT_OK


def cmd_poison(args) -> int:
    t = load_topology(args.topology)
    mode = Mode(args.mode)
    if args.link:
        link = DeceptiveLink.parse(args.link)
        vlans = VlanAllocator()
        fwd = compute_poison(t, link, vlans, mode, Method(args.method) if args.method else None)
        plans = PlanSet(mode, [fwd, poison_reverse(t, fwd, vlans)])
        target = None
    else:
        if not args.target:
            raise ScenarioError("poison needs --target or --link")
        target = load_topology(args.target)
        plans = plan_topology_poison(t, target, mode)
    doc = {"plans": plans.to_dict(),
           "tables": {str(sw): [e.to_dict(counters=False) for e in es] for sw, es in plans.by_switch().items()}}
    if args.verify:
        net = Network(t)
        ctl = Controller(net, fingerprint=DEFAULT_FINGERPRINT if mode is Mode.VLAN_INPORT_SRC else None)
        inject = direct_injector(net)
        for sw, es in plans.by_switch().items():
            inject(sw, es)
        ctl.run_discovery_round()
        doc["view"] = ctl.view.to_dict()
        if target is not None:
            doc["view_matches_target"] = ctl.view.links == target.links
    _emit(_dumps(doc), args.out)
    return EXIT_OK if doc.get("view_matches_target", True) else EXIT_FAIL


def cmd_patch(args) -> int:
    sc = load_scenario(args.scenario, _seed(args.seed, None))
    sc.phases = [dict(ph, mode=args.mode) if ph["op"] == "patch" else ph for ph in sc.phases]
    if not any(ph["op"] == "patch" for ph in sc.phases):
        raise ScenarioError("scenario has no patch phase")
    runner = Runner(sc)
    v = runner.run()
    doc = {"mode": args.mode, "passed": v.passed, "error": v.error, "patches": runner.patch_log,
           "injections": v.metrics["injections"]}
    _emit(_dumps(doc), args.out)
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_plan(args) -> int:
    t = load_topology(args.topology)
    seed = _seed(args.seed)
    flows = generate_flows(t, args.flows, args.flow_seed if args.flow_seed is not None else seed)
    target = _node(args.target)
    base = flow_coverage(t, t, flows, target)
    if args.coverage is not None:
        thr = args.coverage
    else:
        thr = base + args.coverage_delta if args.goal == "eavesdrop" else base - args.coverage_delta
    goal = PlannerGoal(args.goal, target, thr, Fraction(args.similarity))
    family = choose_family(t) if args.actions == "auto" else ActionFamily(args.actions)
    if args.workers != 1:
        print("note: search runs single-threaded; --workers is accepted for compatibility", file=sys.stderr)
    rep = search(t, goal, flows, args.budget, seed, family=family, n_actions=args.actions_per_episode,
                 record_trace=args.trace is not None)
    if args.trace:
        Path(args.trace).write_text(rep.trace_csv(), encoding="utf-8")
    if args.out and rep.accepted is not None:
        Path(args.out).write_text(rep.accepted.to_json(), encoding="utf-8")
    doc = rep.to_dict(include_topology=args.out is None)
    doc["seed"] = seed
    doc["flows"] = len(flows)
    _emit(_dumps(doc), args.report)
    return EXIT_OK if rep.success else EXIT_FAIL


def cmd_dump_tables(args) -> int:
    sink: list = []
    v = run_scenario(args.scenario, runner_out=sink)
    runner = sink[0]
    _emit(_dumps({"passed": v.passed, "tables": runner.net.dump_tables()}), args.out)
    return EXIT_OK if v.passed else EXIT_FAIL


def cmd_view(args) -> int:
    if args.scenario:
        sink: list = []
        run_scenario(args.scenario, runner_out=sink)
        runner = sink[0]
        view, real = runner.ctl.view, runner.real
    else:
        real = load_topology(args.topology)
        ctl = Controller(Network(real))
        ctl.run_discovery_round()
        view = ctl.view
    doc = {"view": view.to_dict(), "fabricated": [list(map(list, lk)) for lk in sorted(view.links - real.links,
                                                                                   key=str)],
           "similarity": str(eo_similarity(real, view))}
    if args.dot:
        Path(args.dot).write_text(to_dot(view, "view", real=real), encoding="utf-8")
    _emit(_dumps(doc), args.out)
    return EXIT_OK


def cmd_render_dot(args) -> int:
    t = load_topology(args.topology)
    real = load_topology(args.real) if args.real else None
    nodes = [_node(n) for n in args.highlight] if args.highlight else ()
    _emit(to_dot(t, args.name, highlight_nodes=nodes, real=real), args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topopoison", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario file and print its verdict")
    r.add_argument("scenario")
    r.add_argument("--out", help="directory for report, DOT views, tables and traces")
    r.add_argument("--report", help="write the verdict JSON here instead of stdout")
    r.add_argument("--seed", type=int)
    r.set_defaults(fn=cmd_run)

    d = sub.add_parser("discover", help="run discovery on a topology and print the view")
    d.add_argument("--topology", required=True, help="'fixture:NAME' or a topology JSON file")
    d.add_argument("--rounds", type=int, default=1)
    d.add_argument("--fingerprint", action="store_true", help="one fixed source MAC for all probes")
    d.add_argument("--ryu", action="store_true", help="pre-install a top-priority discovery rule")
    d.add_argument("--trace", help="JSONL file for packet-out/packet-in events")
    d.add_argument("--out")
    d.set_defaults(fn=cmd_discover)

    po = sub.add_parser("poison", help="compute poison entries for a target topology or one link")
    po.add_argument("--topology", required=True)
    g = po.add_mutually_exclusive_group(required=True)
    g.add_argument("--target", help="deceptive topology to realize")
    g.add_argument("--link", help="single deceptive link, e.g. 'A:2->1:B'")
    po.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.VANILLA.value)
    po.add_argument("--method", choices=[m.value for m in Method])
    po.add_argument("--verify", action="store_true", help="install the plan and rediscover")
    po.add_argument("--out")
    po.set_defaults(fn=cmd_poison)

    pa = sub.add_parser("patch", help="run a scenario with every patch phase in the given mode")
    pa.add_argument("scenario")
    pa.add_argument("--mode", choices=["proactive", "reactive"], default="proactive")
    pa.add_argument("--seed", type=int)
    pa.add_argument("--out")
    pa.set_defaults(fn=cmd_patch)

    pl = sub.add_parser("plan", help="search for a deceptive topology meeting a coverage goal")
    pl.add_argument("--topology", required=True)
    pl.add_argument("--goal", choices=["eavesdrop", "evade"], required=True)
    pl.add_argument("--target", required=True, help="switch to attract flows to or keep them from")
    cov = pl.add_mutually_exclusive_group()
    cov.add_argument("--coverage", type=int, help="absolute flow-count threshold")
    cov.add_argument("--coverage-delta", type=int, default=4, help="threshold relative to the baseline")
    pl.add_argument("--similarity", default="0.9")
    pl.add_argument("--actions", choices=["auto"] + [f.value for f in ActionFamily], default="auto")
    pl.add_argument("--actions-per-episode", type=int)
    pl.add_argument("--budget", type=int, default=200_000)
    pl.add_argument("--flows", type=int, default=120)
    pl.add_argument("--flow-seed", type=int, help="defaults to the search seed")
    pl.add_argument("--seed", type=int)
    pl.add_argument("--workers", type=int, default=1)
    pl.add_argument("--out", help="write the accepted topology JSON here")
    pl.add_argument("--trace", help="write the per-step CSV trace here")
    pl.add_argument("--report")
    pl.set_defaults(fn=cmd_plan)

    dt = sub.add_parser("dump-tables", help="run a scenario and dump every flow table")
    dt.add_argument("scenario")
    dt.add_argument("--out")
    dt.set_defaults(fn=cmd_dump_tables)

    v = sub.add_parser("view", help="show the controller's view after a scenario or plain discovery")
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario")
    src.add_argument("--topology")
    v.add_argument("--dot", help="also write the view as DOT")
    v.add_argument("--out")
    v.set_defaults(fn=cmd_view)

    rd = sub.add_parser("render-dot", help="render a topology as DOT")
    rd.add_argument("--topology", required=True)
    rd.add_argument("--real", help="mark links absent from this topology as fabricated")
    rd.add_argument("--highlight", nargs="*")
    rd.add_argument("--name", default="topology")
    rd.add_argument("--out")
    rd.set_defaults(fn=cmd_render_dot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, PlanError, TopologyError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
