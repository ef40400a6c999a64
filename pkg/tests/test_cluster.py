import pytest

from topopoison.attack import Mode, apply_topology_poison, direct_injector, plan_topology_poison
from topopoison.cluster import Cluster, ClusterError, Role
from topopoison.controller import FlowRequest
from topopoison.dataplane import FlowEntry, FlowMatch, Network, Output

THREE = (("c1", Role.LEADER), ("c2", Role.FOLLOWER), ("c3", Role.EQUAL))


def make(real, members=THREE, **kw):
    return Cluster(Network(real), members, **kw)


def test_exactly_one_leader(motivating):
    with pytest.raises(ClusterError):
        make(motivating, (("a", Role.EQUAL),))
    with pytest.raises(ClusterError):
        make(motivating, (("a", Role.LEADER), ("b", Role.LEADER)))
    with pytest.raises(ClusterError):
        make(motivating, replication="gossip")


def test_follower_write_poisons_within_one_tick(motivating, motivating_target):
    cl = make(motivating)
    cl.tick()
    assert cl.controller.view.links == motivating.links
    apply_topology_poison(motivating, motivating_target, cl.writer("c2"))
    events = cl.tick()
    assert cl.controller.view.links == motivating_target.links
    installs = [e for e in events if e["event"] == "install"]
    assert installs and all(e["by"] == "c1" and e["for"] == "c2" for e in installs)
    assert all(e.installed_by == "c1" for e in cl.net.switches["C"].table if e.owner == "attacker")
    assert cl.converged()


def test_stores_identical_after_every_tick(motivating, motivating_target):
    cl = make(motivating, reactive=True)
    apply_topology_poison(motivating, motivating_target, cl.writer("c3"))
    cl.datastore_write("c2", "A", [FlowEntry(3, FlowMatch(in_port=1), (Output(2),), owner="x")])
    for i in range(5):
        cl.tick()
        assert cl.converged(), f"tick {i}"
        if i == 1:
            cl.controller.route_flow(FlowRequest("f1", "H1", "H2"))
    texts = {s.canonical() for s in cl.stores.values()}
    assert len(texts) == 1


def test_unknown_switch_rejected(motivating):
    cl = make(motivating)
    with pytest.raises(ClusterError):
        cl.datastore_write("c2", "Z", [FlowEntry(1, FlowMatch(), ())])
    with pytest.raises(ClusterError):
        cl.datastore_write("mallory", "A", [FlowEntry(1, FlowMatch(), ())])


def test_follower_cannot_install_directly(motivating):
    cl = make(motivating)
    with pytest.raises(ClusterError):
        cl.direct_install("c2", "A", [FlowEntry(1, FlowMatch(), ())])


def test_idle_tick_keeps_view(motivating):
    cl = make(motivating)
    cl.tick()
    before = cl.controller.view
    events = cl.tick()
    assert [e["event"] for e in events] == ["discovery"]
    assert cl.controller.view == before


def test_injection_paths_equivalent(motivating, motivating_target):
    via_store = make(motivating)
    apply_topology_poison(motivating, motivating_target, via_store.writer("c2"))
    via_store.tick()
    direct = make(motivating)
    apply_topology_poison(motivating, motivating_target, direct.direct_writer("c3"))
    direct.tick()

    def specs(cl):
        return {n: sorted(str(e) for e in s.table) for n, s in cl.net.switches.items()}

    assert specs(via_store) == specs(direct)
    assert via_store.controller.view == direct.controller.view


def test_observed_routes_visible_to_other_members(motivating):
    cl = make(motivating)
    cl.tick()
    cl.controller.route_flow(FlowRequest("f1", "H1", "H2"))
    assert cl.observed_routes("c2") == []
    cl.tick()
    seen = cl.observed_routes("c2")
    assert [sw for sw, _ in seen] == ["A", "D", "E"]
