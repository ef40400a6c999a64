import random

import pytest

from topopoison import fixtures
from topopoison.attack import (DEFAULT_FINGERPRINT, POISON_PRIORITY, DeceptiveLink, Method, Mode, PlanError,
                               VlanAllocator, apply_topology_poison, check_poison_target, compute_poison,
                               direct_injector, lower_discovery_entries, plan_topology_poison, poison_reverse,
                               select_path)
from topopoison.controller import Controller
from topopoison.dataplane import (LLDP_TYPE, FlowMatch, Network, Output, OutputInPort, PopVlan, PushVlan,
                                  ToController)
from topopoison.topo import RewireError, two_switch, two_switch_pairings


def install_and_discover(real, target, mode=Mode.VANILLA, **ctl_kw):
    net = Network(real)
    if mode is Mode.VLAN_INPORT_SRC:
        ctl_kw.setdefault("fingerprint", DEFAULT_FINGERPRINT)
    ctl = Controller(net, trace=True, **ctl_kw)
    plans = apply_topology_poison(real, target, direct_injector(net), mode)
    ctl.run_discovery_round()
    return ctl, plans


def test_parse_link():
    link = DeceptiveLink.parse("A:2->1:B")
    assert link == DeceptiveLink("A", 2, 1, "B")
    assert str(link) == "A2->1B"
    assert DeceptiveLink.parse("3:1 -> 2:7") == DeceptiveLink(3, 1, 2, 7)
    with pytest.raises(PlanError):
        DeceptiveLink.parse("A2->1B")


def test_single_hop_vanilla(motivating):
    vlans = VlanAllocator()
    fwd = compute_poison(motivating, DeceptiveLink("A", 2, 1, "B"), vlans)
    rev = poison_reverse(motivating, fwd, vlans)
    for plan, src, out in ((fwd, ("A", 2), 2), (rev, ("B", 1), 1)):
        assert len(plan.entries) == 1 and plan.vlan_id is None
        pe = plan.entries[0]
        assert pe.switch == "C" and pe.kind == "E_hop"
        assert pe.entry.match == FlowMatch(ether_src=motivating.mac(*src))
        assert pe.entry.actions == (Output(out),)
        assert pe.entry.priority == POISON_PRIORITY
    assert vlans.next_id == 1


def test_invalid_links(motivating):
    with pytest.raises(PlanError):
        compute_poison(motivating, DeceptiveLink("A", 2, 1, "C"), VlanAllocator())  # already real
    with pytest.raises(PlanError):
        compute_poison(motivating, DeceptiveLink("A", 9, 1, "B"), VlanAllocator())
    with pytest.raises(PlanError):
        compute_poison(motivating, DeceptiveLink("A", 3, 1, "B"), VlanAllocator())  # host port
    with pytest.raises(PlanError):
        VlanAllocator(start=5, stop=4).allocate()


def test_path_selection_counts():
    t = fixtures.path_selection()
    link = DeceptiveLink("A", 1, 2, "B")
    no_loop = compute_poison(t, link, VlanAllocator(), method=Method.NO_LOOP)
    loop = compute_poison(t, link, VlanAllocator(), method=Method.LOOPBACK)
    assert [pe.switch for pe in no_loop.entries] == ["C", "D"]
    assert [pe.switch for pe in loop.entries] == ["C", "B", "D"]
    b_entry = loop.entries[1].entry
    assert b_entry.actions == (Output(2),)
    assert loop.entries[2].entry.actions[-1] == OutputInPort()
    auto = compute_poison(t, link, VlanAllocator())
    assert not auto.loopback and len(auto.entries) == 2
    assert select_path(t, link) == (["C", "D", "B"], False)


def test_reverse_of_loopback_is_independent():
    t = fixtures.path_selection()
    vlans = VlanAllocator()
    fwd = compute_poison(t, DeceptiveLink("A", 1, 2, "B"), vlans, method=Method.LOOPBACK)
    rev = poison_reverse(t, fwd, vlans)
    assert fwd.loopback and not rev.loopback
    assert fwd.vlan_id != rev.vlan_id


def test_motivating_vanilla_realization(motivating, motivating_target):
    ctl, plans = install_and_discover(motivating, motivating_target)
    assert ctl.view.links == motivating_target.links
    assert len(plans.plans) == 6
    kinds = {str(p.link): [(pe.switch, pe.kind) for pe in p.entries] for p in plans.plans}
    assert kinds["A2->1B"] == [("C", "E_hop")]
    assert kinds["B1->2A"] == [("C", "E_hop")]
    for p in plans.plans:
        first = p.entries[0].entry.match
        assert first.ether_src is not None and first.ether_type is None
    # every report reaches the controller through its own table-miss
    assert all(e["via"] == "controller" for e in ctl.trace if e["event"] == "packet_in")


def test_motivating_fingerprint_realization(motivating, motivating_target):
    ctl, plans = install_and_discover(motivating, motivating_target, Mode.VLAN_INPORT_SRC)
    assert ctl.view.links == motivating_target.links
    vids = set()
    for p in plans.plans:
        head = p.entries[0].entry
        assert head.match.ether_src == DEFAULT_FINGERPRINT and head.match.in_port is not None
        assert PushVlan(p.vlan_id) in head.actions
        assert p.entries[-1].entry.actions == (PopVlan(), ToController())
        vids.add(p.vlan_id)
    assert len(vids) == len(plans.plans)
    # the stealth property is knowingly lost in this mode
    assert any(e["via"] == "attacker" for e in ctl.trace if e["event"] == "packet_in")


def test_no_entry_matches_discovery_type(motivating, motivating_target):
    for mode in Mode:
        plans = plan_topology_poison(motivating, motivating_target, mode)
        assert all(pe.entry.match.ether_type is None for pe in plans.entries())


def test_identity_target_is_empty(motivating):
    assert plan_topology_poison(motivating, motivating).plans == []


def test_degree_mismatch_rejected_before_write(motivating):
    bad = motivating.with_links([lk for lk in motivating.links if "E" not in (lk[0][0], lk[1][0])])
    net = Network(motivating)
    writes = []
    with pytest.raises(PlanError):
        apply_topology_poison(motivating, bad, lambda sw, es: writes.append(sw))
    assert writes == []
    with pytest.raises(PlanError):
        check_poison_target(motivating, fixtures.path_selection())


def random_two_switch_target(t, rng):
    for _ in range(100):
        e1, e2 = rng.sample(t.sorted_links(), 2)
        try:
            return two_switch(t, e1, e2, rng.choice(two_switch_pairings(e1, e2)))
        except RewireError:
            continue
    return None


@pytest.mark.parametrize("mode", list(Mode))
def test_realization_on_random_targets(mode):
    rng = random.Random(42)
    done = 0
    for i in range(50):
        t = fixtures.random_connected(rng.randint(5, 14), rng.randint(2, 10), seed=300 + i)
        target = random_two_switch_target(t, rng)
        if target is None:
            continue
        ctl, _ = install_and_discover(t, target, mode)
        assert ctl.view.links == target.links, f"instance {i}"
        done += 1
    assert done >= 45


def test_chosen_method_is_never_larger():
    rng = random.Random(8)
    compared = 0
    for i in range(60):
        t = fixtures.random_connected(rng.randint(5, 12), rng.randint(2, 8), seed=900 + i)
        target = random_two_switch_target(t, rng)
        if target is None:
            continue
        for (a, x), (b, y) in target.links - t.links:
            link = DeceptiveLink(a, x, y, b)
            chosen = compute_poison(t, link, VlanAllocator())
            alt = Method.NO_LOOP if chosen.loopback else Method.LOOPBACK
            try:
                other = compute_poison(t, link, VlanAllocator(), method=alt)
            except PlanError:
                continue
            assert len(chosen.entries) <= len(other.entries)
            compared += 1
    assert compared > 50


def test_ryu_rule_blocks_until_lowered(motivating, motivating_target):
    net = Network(motivating)
    ctl = Controller(net, ryu_mode=True)
    apply_topology_poison(motivating, motivating_target, direct_injector(net))
    ctl.run_discovery_round()
    assert ctl.view.links == motivating.links
    assert lower_discovery_entries(net) == len(motivating.nodes)
    ctl.run_discovery_round()
    assert ctl.view.links == motivating_target.links
    lldp_rules = [e for s in net.switches.values() for e in s.table if e.match == FlowMatch(ether_type=LLDP_TYPE)]
    assert all(e.priority == 0 for e in lldp_rules)
