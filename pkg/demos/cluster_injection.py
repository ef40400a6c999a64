"""A follower with no switch connections poisons the topology through the shared datastore.

    python3 demos/cluster_injection.py
"""
from topopoison.attack import apply_topology_poison
from topopoison.cluster import Cluster, Role
from topopoison.dataplane import Network
from topopoison.fixtures import motivating_example, motivating_target


def main():
    real = motivating_example()
    cluster = Cluster(Network(real), [("c1", Role.LEADER), ("c2", Role.FOLLOWER), ("c3", Role.EQUAL)])
    cluster.tick()
    print("view matches real topology:", cluster.controller.view.links == real.links)

    apply_topology_poison(real, motivating_target(), cluster.writer("c2"))
    for ev in cluster.tick():
        print("   ", ev)
    print("view matches deceptive topology:", cluster.controller.view.links == motivating_target().links)
    print("all datastores identical:", cluster.converged())
    owners = {e.installed_by for s in cluster.net.switches.values() for e in s.table if e.owner == "attacker"}
    print("poison entries were installed by:", sorted(owners))


if __name__ == "__main__":
    main()
