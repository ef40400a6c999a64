"""Walk through the five-switch example: fabricate links, patch the gaps, watch C see the traffic.

    python3 demos/motivating_example.py
"""
from topopoison.attack import apply_topology_poison, direct_injector
from topopoison.controller import Controller, FlowRequest
from topopoison.dataplane import Network
from topopoison.fixtures import motivating_example, motivating_target
from topopoison.gappatch import build_gap_maps, predict_routes, proactive_patch
from topopoison.topo import eo_similarity, link_str


def show_links(title, t):
    print(title)
    for lk in t.sorted_links():
        print("   ", link_str(lk))


def main():
    real = motivating_example()
    target = motivating_target()
    net = Network(real)
    ctl = Controller(net)

    ctl.run_discovery_round()
    show_links("controller view before the attack:", ctl.view)
    f1 = FlowRequest("f1", "H1", "H2")
    f2 = FlowRequest("f2", "H1", "H3")
    print("f1 route before:", ctl.route_flow(f1, install=False))

    plans = apply_topology_poison(real, target, direct_injector(net))
    print(f"\ninstalled {len(plans.entries())} poison entries for {len(plans.plans)} directed links:")
    for plan in plans.plans:
        print(f"    {plan.link}: " + ", ".join(f"{pe.kind}@{pe.switch}" for pe in plan.entries))

    ctl.run_discovery_round()
    show_links("\ncontroller view after one discovery round:", ctl.view)
    print("view equals target:", ctl.view.links == target.links,
          "| similarity to real:", eo_similarity(real, ctl.view))

    patches = proactive_patch(build_gap_maps(plans, real), predict_routes(ctl.view, [f1, f2]), real)
    print("\ngap patches:")
    for pe in patches:
        print(f"    {pe.switch}: {pe.entry}")
        net.install(pe.switch, pe.entry.copy(), installed_by="attacker")

    for f in (f1, f2):
        view_path = ctl.route_flow(f)
        net.send_flow(f.flow_id, f.src_host, f.dst_host)
        tr = net.traversals[(f.flow_id, 0)]
        print(f"\n{f.flow_id}: controller believes {view_path}")
        print(f"    packets actually crossed {tr.switches}, delivered to {tr.delivered_to}")
    print("\nunexpected packet-ins:", ctl.unexpected)


if __name__ == "__main__":
    main()
