import pytest
from hypothesis import given, strategies as st

from topopoison.dataplane import (IPV4_TYPE, LLDP_DST, LLDP_TYPE, Data, Discovery, FlowEntry, FlowMatch, Flood,
                                  HostDelivery, Arrival, Network, Output, OutputInPort, Packet, PacketIn, PopVlan,
                                  PushVlan, SimulationFault, Switch, ToController, apply_actions, install_entry,
                                  match_packet, transmit)
from topopoison.topo import Topology


def lldp(src="02:00:00:01:00:02", node="A", port=2):
    return Packet(src, LLDP_DST, LLDP_TYPE, Discovery(node, port))


def four_port_switch():
    return Switch("S", {p: f"02:00:00:09:00:0{p}" for p in range(1, 5)})


def test_fresh_switch_has_only_table_miss():
    s = four_port_switch()
    assert len(s.table) == 1
    e = match_packet(s, lldp(), 1)
    assert e.priority == 0 and e.actions == (ToController(),)


def test_ether_type_match():
    s = four_port_switch()
    e = install_entry(s, FlowEntry(5, FlowMatch(ether_type=LLDP_TYPE), (Output(2),))).table[0]
    assert match_packet(s, lldp(), 1) is e


def test_src_match_beats_table_miss(motivating):
    c = Switch("C", motivating.ports("C"))
    mac = motivating.mac("A", 2)
    c.install(FlowEntry(1, FlowMatch(ether_src=mac), (Output(2),), owner="attacker"))
    assert match_packet(c, lldp(mac), 1).owner == "attacker"
    assert match_packet(c, lldp("02:aa:00:00:00:01"), 1).priority == 0


def test_highest_priority_then_earliest_install():
    s = four_port_switch()
    a = s.install(FlowEntry(3, FlowMatch(in_port=1), (Output(2),)))
    b = s.install(FlowEntry(3, FlowMatch(ether_type=LLDP_TYPE), (Output(3),)))
    assert match_packet(s, lldp(), 1) is a
    c = s.install(FlowEntry(4, FlowMatch(), (Output(4),)))
    assert match_packet(s, lldp(), 1) is c
    assert b.hit_count == 0


def test_replacement_resets_counter():
    s = four_port_switch()
    s.install(FlowEntry(3, FlowMatch(in_port=1), (Output(2),)))
    match_packet(s, lldp(), 1)
    s.install(FlowEntry(3, FlowMatch(in_port=1), (Output(3),)))
    same = [e for e in s.table if e.priority == 3]
    assert len(same) == 1 and same[0].actions == (Output(3),) and same[0].hit_count == 0


def test_unknown_in_port_faults():
    with pytest.raises(SimulationFault):
        match_packet(four_port_switch(), lldp(), 9)


def test_vlan_match_is_outermost_only():
    m = FlowMatch(vlan_id=2)
    p = lldp().push_vlan(1).push_vlan(2)
    assert m.matches(p, 1)
    assert not FlowMatch(vlan_id=1).matches(p, 1)
    assert not m.matches(lldp(), 1)


def test_push_output():
    s = Switch("D", {1: "m1", 2: "m2"})
    out = apply_actions(s, lldp(), 1, (PushVlan(1), Output(2)))
    assert len(out) == 1 and out[0].port == 2 and out[0].packet.vlan_stack == (1,)


def test_pop_to_controller_restores_packet():
    s = Switch("C", {1: "m1", 2: "m2"})
    p = lldp()
    out = apply_actions(s, p.push_vlan(1), 1, (PopVlan(), ToController()))
    assert out == [PacketIn("C", 1, p, "controller")]


def test_pop_on_untagged_faults():
    with pytest.raises(SimulationFault):
        apply_actions(four_port_switch(), lldp(), 1, (PopVlan(),))


def test_flood_skips_ingress():
    out = apply_actions(four_port_switch(), lldp(), 3, (Flood(),))
    assert sorted(e.port for e in out) == [1, 2, 4]


def test_output_to_ingress_needs_in_port_action():
    s = four_port_switch()
    assert apply_actions(s, lldp(), 2, (Output(2),)) == []
    out = apply_actions(s, lldp(), 2, (OutputInPort(),))
    assert [e.port for e in out] == [2]


@given(st.lists(st.integers(1, 4094), max_size=2), st.integers(1, 4094))
def test_push_pop_identity(stack, vid):
    p = Packet("a", "b", IPV4_TYPE, Data("f"), tuple(stack))
    assert p.push_vlan(vid).pop_vlan() == p


def test_transmit(motivating):
    assert transmit(motivating, ("A", 2), lldp()) == Arrival("C", 1)
    # host-facing port sinks discovery
    assert transmit(motivating, ("A", 3), lldp()) is None
    h1, h2 = motivating.host("H1"), motivating.host("H2")
    data = Packet(h1.mac, h2.mac, IPV4_TYPE, Data("f1"))
    assert transmit(motivating, ("E", 3), data) == HostDelivery("H2", data)
    # delivered only to the addressee
    assert transmit(motivating, ("C", 3), data) is None
    t = Topology.from_links([(("A", 1), ("B", 1))], nodes=["A", "B"])
    t2 = Topology(dict(t.port_table(), A={1: "m", 5: "n"}), t.links)
    assert transmit(t2, ("A", 5), lldp()) is None


def test_one_packet_in_per_lldp_with_table_miss_only(motivating):
    net = Network(motivating)
    seen = []

    class Probe:
        def packet_in(self, msg):
            seen.append((msg.switch, msg.in_port))
            return []

    net.attach(Probe())
    for n in motivating.nodes:
        for p in motivating.ports(n):
            seen.clear()
            net.packet_out(n, (Output(p),), lldp(motivating.mac(n, p), n, p))
            peer = motivating.peer((n, p))
            assert seen == ([peer] if peer else [])


def test_hit_count_once_per_lookup(motivating):
    net = Network(motivating)
    net.attach(type("Nop", (), {"packet_in": lambda self, m: []})())
    before = sum(e.hit_count for s in net.switches.values() for e in s.table)
    net.packet_out("A", (Output(2),), lldp())
    after = sum(e.hit_count for s in net.switches.values() for e in s.table)
    assert after - before == 1


def test_forwarding_loop_is_a_fault():
    t = Topology.from_edges([(0, 1), (1, 2), (2, 0)], host_nodes=[0, 1])
    net = Network(t)
    net.attach(type("Nop", (), {"packet_in": lambda self, m: []})())
    dst = t.host("h1").mac
    for n in t.nodes:
        nxt = (n + 1) % 3
        net.install(n, FlowEntry(10, FlowMatch(ether_dst=dst), (Output(t.port_to(n, nxt)),)))
    with pytest.raises(SimulationFault):
        net.send_flow("f", "h0", "h1")


def test_dump_is_json_ready(motivating):
    net = Network(motivating)
    dump = net.dump_tables()
    assert list(dump) == ["A", "B", "C", "D", "E"]
    assert dump["A"][0] == {"priority": 0, "match": {}, "actions": [{"type": "to_controller"}],
                            "owner": "controller", "hit_count": 0}
