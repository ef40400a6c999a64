"""Search a fat tree for a deceptive topology that routes extra flows through one switch.

    python3 demos/fattree_planner.py [seed]
"""
import sys
from fractions import Fraction

from topopoison.fixtures import FATTREE_TARGET_NODE, fattree
from topopoison.planner import ActionFamily, PlannerGoal, flow_coverage, generate_flows, oracle_run, search
from topopoison.topo import link_str


def main(seed=0):
    real = fattree()
    flows = generate_flows(real, 120, 2024)
    base = flow_coverage(real, real, flows, FATTREE_TARGET_NODE)
    goal = PlannerGoal("eavesdrop", FATTREE_TARGET_NODE, base + 4, Fraction(9, 10))
    print(f"{len(real.nodes)} switches, {len(real.links)} links, {len(flows)} flows")
    print(f"switch {FATTREE_TARGET_NODE} carries {base} flows today; goal is {goal.coverage_threshold}")

    rep = search(real, goal, flows, 200_000, seed, family=ActionFamily.TWO_SWITCH, n_actions=5)
    if not rep.success:
        print("no deceptive topology found; best coverage", rep.best_coverage)
        return 1
    print(f"found after {rep.steps} steps ({rep.episodes} episodes)")
    print(f"coverage {rep.coverage}, similarity {rep.similarity} ({float(rep.similarity):.3f})")
    print("links the controller will be shown instead of real ones:")
    for lk in sorted(rep.accepted.links - real.links, key=str):
        print("   ", link_str(lk))
    check = oracle_run(real, rep.accepted, flows, FATTREE_TARGET_NODE)
    print(f"full simulation: {check.count} flows cross switch {FATTREE_TARGET_NODE}, "
          f"{len(check.undelivered)} undelivered")
    return 0


if __name__ == "__main__":
    sys.exit(main(int(sys.argv[1]) if len(sys.argv) > 1 else 0))
