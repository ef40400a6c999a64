import pytest

from topopoison.attack import DEFAULT_FINGERPRINT, Mode, apply_topology_poison, direct_injector, plan_topology_poison
from topopoison.controller import Controller, FlowRequest
from topopoison.dataplane import FlowEntry, FlowMatch, Network, Output, PushVlan
from topopoison.gappatch import (PATCH_PRIORITY, GapPatchError, GapPatcher, build_gap_maps, predict_routes,
                                 proactive_patch, reactive_patch)

F1 = FlowRequest("f1", "H1", "H2")
F2 = FlowRequest("f2", "H1", "H3")


def poisoned(real, target, mode=Mode.VANILLA):
    net = Network(real)
    ctl = Controller(net, fingerprint=DEFAULT_FINGERPRINT if mode is Mode.VLAN_INPORT_SRC else None)
    plans = apply_topology_poison(real, target, direct_injector(net), mode)
    ctl.run_discovery_round()
    return net, ctl, plans


def test_patch_shapes(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    patches = proactive_patch(maps, predict_routes(motivating_target, [F1, F2]), motivating)
    by_switch = {pe.switch: pe.entry for pe in patches}
    assert sorted(by_switch) == ["C", "D"]
    h2, h3 = motivating.host("H2").mac, motivating.host("H3").mac
    assert by_switch["C"] == FlowEntry(PATCH_PRIORITY, FlowMatch(ether_dst=h2, in_port=1), (Output(2),),
                                       owner="patcher")
    vid = maps.re_vid[("A", 1)]
    assert vid is not None
    assert by_switch["D"].match == FlowMatch(ether_dst=h3, in_port=1)
    assert by_switch["D"].actions == (PushVlan(vid), Output(2))


def test_one_patch_per_gap(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    routes = predict_routes(motivating_target, [F1, F2, FlowRequest("f3", "H1", "H2")])
    patches = reactive_patch(maps, routes + routes, motivating)
    assert len(patches) == 2


def test_no_gap_no_patch(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    assert reactive_patch(maps, [], motivating) == []
    # a route over the real D-E link touches no fabricated endpoint
    real_hop = ("D", FlowEntry(10, FlowMatch(ether_dst="0a:00:00:00:00:02", in_port=1), (Output(2),)))
    assert reactive_patch(maps, [real_hop], motivating) == []
    # entries the attacker wrote are not routes
    assert reactive_patch(maps, [("A", FlowEntry(1, FlowMatch(), (Output(2),), owner="attacker"))],
                          motivating) == []


def test_unknown_endpoint_is_an_error(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    maps.re_fe.pop(("A", 2))
    with pytest.raises(GapPatchError):
        reactive_patch(maps, predict_routes(motivating_target, [F1]), motivating)


def test_proactive_delivery_no_unexpected(motivating, motivating_target):
    net, ctl, plans = poisoned(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    patches = proactive_patch(maps, predict_routes(ctl.view, [F1, F2]), motivating)
    for pe in patches:
        net.install(pe.switch, pe.entry.copy(), installed_by="attacker")
    for f in (F1, F2):
        ctl.route_flow(f)
        net.send_flow(f.flow_id, f.src_host, f.dst_host)
    assert net.traversals[("f1", 0)].delivered_to == ["H2"]
    assert net.traversals[("f2", 0)].delivered_to == ["H3"]
    assert "C" in net.traversals[("f1", 0)].switches
    assert ctl.unexpected == 0


def test_reactive_then_clean(motivating, motivating_target):
    net, ctl, plans = poisoned(motivating, motivating_target)
    patcher = GapPatcher(build_gap_maps(plans, motivating), motivating)
    observed = []
    ctl.install_hooks.append(lambda sw, e: observed.append((sw, e)))
    for f in (F1, F2):
        ctl.route_flow(f)
        net.send_flow(f.flow_id, f.src_host, f.dst_host, 0)
    first = ctl.unexpected
    assert first > 0
    fresh = patcher.poll(observed)
    assert len(fresh) == 2
    for pe in fresh:
        net.install(pe.switch, pe.entry.copy())
    for f in (F1, F2):
        net.send_flow(f.flow_id, f.src_host, f.dst_host, 1)
    assert ctl.unexpected == first
    assert net.traversals[("f1", 1)].delivered_to == ["H2"]
    assert net.traversals[("f2", 1)].delivered_to == ["H3"]
    assert patcher.poll(observed) == []


def test_proactive_then_reactive_finds_nothing(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target)
    maps = build_gap_maps(plans, motivating)
    routes = predict_routes(motivating_target, [F1, F2])
    ahead = proactive_patch(maps, routes, motivating)
    assert len(ahead) == 2
    patcher = GapPatcher(maps, motivating, preinstalled=ahead)
    assert patcher.poll(routes) == []
    assert len(patcher.entries()) == 2


def test_fingerprint_long_gap_unsupported(motivating, motivating_target):
    plans = plan_topology_poison(motivating, motivating_target, Mode.VLAN_INPORT_SRC)
    maps = build_gap_maps(plans, motivating)
    assert maps.unsupported
    with pytest.raises(GapPatchError):
        proactive_patch(maps, predict_routes(motivating_target, [F1, F2]), motivating)


def test_maps_serialize(motivating, motivating_target):
    maps = build_gap_maps(plan_topology_poison(motivating, motivating_target), motivating)
    doc = maps.to_dict()
    assert len(doc["endpoints"]) == 6
