"""Network model: hosts, switches and capacitated links.

Node ids are integers unique across hosts and switches. A link's index in
``Topology.links`` doubles as the port number on both of its endpoints.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .errors import DisconnectedTopology, DuplicateId, NonPositiveCapacity, SchemaError


@dataclass(frozen=True)
class Host:
    id: int
    name: str
    switch: int


@dataclass(frozen=True)
class Switch:
    id: int
    name: str
    capacity_bps: float


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    capacity_bps: float
    delay_s: float = 0.0

    def other(self, node: int) -> int:
        return self.b if node == self.a else self.a


@dataclass
class Topology:
    hosts: list[Host]
    switches: list[Switch]
    links: list[Link]
    collection_host: int
    adjacency: dict[int, list[tuple[int, int]]] = field(init=False, repr=False)

    def __post_init__(self):
        self.validate()
        self.adjacency = {n: [] for n in self.node_ids()}
        for port, link in enumerate(self.links):
            self.adjacency[link.a].append((link.b, port))
            self.adjacency[link.b].append((link.a, port))
        for nbrs in self.adjacency.values():
            nbrs.sort()
        self._dist_cache: dict[int, dict[int, int]] = {}
        self._switch_set = {s.id for s in self.switches}
        self._check_connected()

    # -- lookups ------------------------------------------------------------

    def node_ids(self) -> list[int]:
        return [h.id for h in self.hosts] + [s.id for s in self.switches]

    @property
    def host_by_id(self) -> dict[int, Host]:
        return {h.id: h for h in self.hosts}

    @property
    def switch_by_id(self) -> dict[int, Switch]:
        return {s.id: s for s in self.switches}

    def is_switch(self, node: int) -> bool:
        return node in self._switch_set

    def host_named(self, name: str) -> Host | None:
        for h in self.hosts:
            if h.name == name:
                return h
        return None

    def host_port(self, host: int) -> int:
        (_, port), = self.adjacency[host]
        return port

    def attached_switch(self, node: int) -> int:
        h = self.host_by_id.get(node)
        return h.switch if h is not None else node

    def switch_ids(self) -> list[int]:
        return sorted(s.id for s in self.switches)

    # -- graph algorithms ---------------------------------------------------

    def distances_from(self, source: int) -> dict[int, int]:
        """Hop counts by breadth-first search; hosts are not transit nodes."""
        if source in self._dist_cache:
            return self._dist_cache[source]
        hosts = {h.id for h in self.hosts}
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            if u in hosts and u != source:
                continue
            for v, _ in self.adjacency[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        self._dist_cache[source] = dist
        return dist

    def hops(self, a: int, b: int) -> int:
        return self.distances_from(b)[a]

    def next_hop(self, node: int, dest: int) -> tuple[int, int]:
        """(neighbor, port) one hop closer to ``dest``; smallest neighbor id wins ties."""
        dist = self.distances_from(dest)
        best = None
        for v, port in self.adjacency[node]:
            if v != dest and not self.is_switch(v):
                continue
            if dist.get(v, -1) == dist[node] - 1:
                if best is None or (v, port) < best:
                    best = (v, port)
        if best is None:
            raise DisconnectedTopology(f"no path from {node} to {dest}")
        return best

    def path(self, src: int, dest: int) -> list[int]:
        nodes = [src]
        while nodes[-1] != dest:
            nodes.append(self.next_hop(nodes[-1], dest)[0])
        return nodes

    def diameter(self) -> int:
        """Longest shortest path over all host/switch pairs."""
        best = 0
        for n in self.node_ids():
            d = self.distances_from(n)
            best = max(best, max(d.values()))
        return best

    def switch_diameter(self) -> int:
        best = 0
        for s in self.switch_ids():
            d = self.distances_from(s)
            best = max([best] + [d[t] for t in self.switch_ids()])
        return best

    # -- validation ---------------------------------------------------------

    def validate(self):
        seen = set()
        for n in [h.id for h in self.hosts] + [s.id for s in self.switches]:
            if n in seen:
                raise DuplicateId(f"duplicate node id {n}")
            seen.add(n)
        switch_ids = {s.id for s in self.switches}
        host_ids = {h.id for h in self.hosts}
        for s in self.switches:
            if not s.capacity_bps > 0:
                raise NonPositiveCapacity(f"switch {s.id} capacity {s.capacity_bps}")
        for h in self.hosts:
            if h.switch not in switch_ids:
                raise SchemaError("hosts.switch", f"host {h.id} attaches to missing switch {h.switch}")
        for ln in self.links:
            for end in (ln.a, ln.b):
                if end not in seen:
                    raise SchemaError("links", f"link endpoint {end} is not a node")
            if ln.a == ln.b:
                raise SchemaError("links", f"self loop on {ln.a}")
            if not ln.capacity_bps > 0:
                raise NonPositiveCapacity(f"link {ln.a}-{ln.b} capacity {ln.capacity_bps}")
            if ln.delay_s < 0:
                raise SchemaError("links.delay_s", f"negative delay on {ln.a}-{ln.b}")
            if ln.a in host_ids and ln.b in host_ids:
                raise SchemaError("links", f"host-to-host link {ln.a}-{ln.b}")
        for h in self.hosts:
            attached = [ln for ln in self.links if h.id in (ln.a, ln.b)]
            if len(attached) != 1 or attached[0].other(h.id) != h.switch:
                raise SchemaError("links", f"host {h.id} must have exactly one link, to switch {h.switch}")
        if self.collection_host not in host_ids:
            raise SchemaError("collection_host", f"{self.collection_host} is not a host")

    def _check_connected(self):
        nodes = self.node_ids()
        if not nodes:
            raise DisconnectedTopology("empty topology")
        start = self.switches[0].id if self.switches else nodes[0]
        reach = self.distances_from(start)
        missing = sorted(set(nodes) - set(reach))
        if missing:
            raise DisconnectedTopology(f"nodes unreachable from {start}: {missing}")

    def to_dict(self) -> dict:
        return {
            "hosts": [{"id": h.id, "name": h.name, "switch": h.switch} for h in self.hosts],
            "switches": [{"id": s.id, "name": s.name, "capacity_bps": s.capacity_bps}
                         for s in self.switches],
            "links": [{"a": ln.a, "b": ln.b, "capacity_bps": ln.capacity_bps, "delay_s": ln.delay_s}
                      for ln in self.links],
            "collection_host": self.collection_host,
        }


def _req(obj, key, types, where):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{where}.{key}", "missing")
    val = obj[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise SchemaError(f"{where}.{key}", "wrong type")
    return val


def topology_from_dict(doc: dict) -> Topology:
    if not isinstance(doc, dict):
        raise SchemaError("document", "expected an object")
    for key in ("hosts", "switches", "links"):
        if not isinstance(doc.get(key), list):
            raise SchemaError(key, "missing or not a list")
    hosts = [Host(_req(h, "id", int, "hosts"), _req(h, "name", str, "hosts"),
                  _req(h, "switch", int, "hosts")) for h in doc["hosts"]]
    switches = [Switch(_req(s, "id", int, "switches"), _req(s, "name", str, "switches"),
                       float(_req(s, "capacity_bps", (int, float), "switches")))
                for s in doc["switches"]]
    links = [Link(_req(ln, "a", int, "links"), _req(ln, "b", int, "links"),
                  float(_req(ln, "capacity_bps", (int, float), "links")),
                  float(ln.get("delay_s", 0.0))) for ln in doc["links"]]
    collector = _req(doc, "collection_host", int, "topology")
    return Topology(hosts, switches, links, collector)


def load_topology(document: str) -> Topology:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaError("document", str(exc)) from None
    return topology_from_dict(doc)


# -- builders -----------------------------------------------------------------

def star_topology(n_hosts: int, capacity_bps: float = 1e9, delay_s: float = 1e-6,
                  switch_capacity_bps: float | None = None) -> Topology:
    """One switch (id 1) with hosts h1..hn plus a dedicated collector host."""
    sw = Switch(1, "s1", switch_capacity_bps or capacity_bps)
    hosts = [Host(100 + i, f"h{i}", 1) for i in range(1, n_hosts + 1)]
    collector = Host(100 + n_hosts + 1, "collector", 1)
    hosts.append(collector)
    links = [Link(h.id, 1, capacity_bps, delay_s) for h in hosts]
    return Topology(hosts, [sw], links, collector.id)


def line_topology(n_switches: int, capacity_bps: float = 1e9, delay_s: float = 1e-6) -> Topology:
    """s1 - s2 - ... - sn with one host per switch; the last host collects."""
    switches = [Switch(i, f"s{i}", capacity_bps) for i in range(1, n_switches + 1)]
    hosts = [Host(100 + i, f"h{i}", i) for i in range(1, n_switches + 1)]
    links = [Link(i, i + 1, capacity_bps, delay_s) for i in range(1, n_switches)]
    links += [Link(h.id, h.switch, capacity_bps, delay_s) for h in hosts]
    return Topology(hosts, switches, links, hosts[-1].id)
