"""Greedy label placement, routing-table synthesis and per-switch configs."""
from __future__ import annotations

from dataclasses import dataclass, field

from .dsl import INT, MAP, STORE, SUM, DataflowDag, build_dag, parse
from .errors import RoutingIdOverflow, UnknownHost
from .topology import Topology

COLLECTOR_ROUTING_ID = 255
MAX_LABELS = 254

SERIALIZER = "SERIALIZER"
PARTITIONER = "PARTITIONER"
SUM_REDUCER = "SUM_REDUCER"
WC_REDUCER = "WC_REDUCER"


@dataclass
class PlacementPlan:
    assignment: dict[int, int]
    burden: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "assignment": {str(k): v for k, v in sorted(self.assignment.items())},
            "burden": {str(k): v for k, v in sorted(self.burden.items())},
        }


def placement_key(dag: DataflowDag, topo: Topology, plan_so_far: dict[int, int],
                  burden: dict[int, int], label: int, switch: int) -> tuple[int, int, int]:
    """(burden, summed input hop distance, switch id); lexicographically minimised."""
    hop_sum = sum(topo.hops(plan_so_far[p], switch) for p in dag.producers(label))
    return (burden[switch], hop_sum, switch)


def place(dag: DataflowDag, topo: Topology) -> PlacementPlan:
    assignment: dict[int, int] = {}
    for n in dag.nodes:
        if n.func_type == STORE:
            host = topo.host_named(n.host)
            if host is None:
                raise UnknownHost(n.params["locator"])
            assignment[n.label_index] = host.id
    burden = {s: 0 for s in topo.switch_ids()}
    for label in dag.topological_order():
        if dag.nodes[label].func_type == STORE:
            continue
        best = min(topo.switch_ids(),
                   key=lambda s: placement_key(dag, topo, assignment, burden, label, s))
        assignment[label] = best
        burden[best] += 1
    return PlacementPlan(assignment, burden)


@dataclass
class RoutingTable:
    switch: int
    entries: dict[int, int] = field(default_factory=dict)

    def lookup(self, routing_id: int) -> int | None:
        # None is the default action: drop
        return self.entries.get(routing_id)

    def install(self, routing_id: int, port: int):
        prev = self.entries.setdefault(routing_id, port)
        assert prev == port, f"conflicting routes for id {routing_id} on switch {self.switch}"

    def to_dict(self) -> dict:
        return {"switch": self.switch,
                "entries": {str(k): v for k, v in sorted(self.entries.items())},
                "default": "drop"}


def _install_path(tables, topo: Topology, start: int, dest: int, routing_id: int):
    node = start
    while node != dest:
        nxt, port = topo.next_hop(node, dest)
        tables[node].install(routing_id, port)
        node = nxt


def route(plan: PlacementPlan, dag: DataflowDag, topo: Topology) -> dict[int, RoutingTable]:
    """Destination-based hop-count shortest paths keyed by consumer label index.

    Every next hop is chosen with ``Topology.next_hop`` against the consumer's
    switch, so entries shared by several producers always agree and walks are
    loop free.
    """
    if len(dag.nodes) > MAX_LABELS:
        raise RoutingIdOverflow(f"{len(dag.nodes)} labels; at most {MAX_LABELS} fit an 8-bit id")
    tables = {s: RoutingTable(s) for s in topo.switch_ids()}
    for (u, v) in sorted(dag.edges):
        start = topo.attached_switch(plan.assignment[u])
        _install_path(tables, topo, start, plan.assignment[v], v)
    for sink in dag.sinks:
        start = topo.attached_switch(plan.assignment[sink])
        _install_path(tables, topo, start, topo.collection_host, COLLECTOR_ROUTING_ID)
    return tables


def host_routes(topo: Topology) -> dict[int, dict[int, int]]:
    """switch -> {host id -> port}; plain host-addressed forwarding."""
    out = {}
    for s in topo.switch_ids():
        out[s] = {h.id: topo.next_hop(s, h.id)[1] for h in topo.hosts}
    return out


@dataclass
class HostedLabel:
    label: int
    name: str
    roles: list[str]
    expected_signals: int
    value_type: str
    targets: list[int]

    def to_dict(self) -> dict:
        return {"label": self.label, "name": self.name, "roles": list(self.roles),
                "expected_signals": self.expected_signals, "value_type": self.value_type,
                "targets": list(self.targets)}


@dataclass
class SwitchConfig:
    switch: int
    labels: dict[int, HostedLabel]
    routes: dict[int, int]

    def has_role(self, label: int, role: str) -> bool:
        h = self.labels.get(label)
        return h is not None and role in h.roles

    def to_dict(self) -> dict:
        return {
            "switch": self.switch,
            "labels": [self.labels[k].to_dict() for k in sorted(self.labels)],
            "routes": {str(k): v for k, v in sorted(self.routes.items())},
        }


def label_roles(dag: DataflowDag, label: int) -> list[str]:
    n = dag.nodes[label]
    roles = []
    if any(dag.nodes[p].func_type == STORE for p in dag.producers(label)):
        roles.append(SERIALIZER)
    if n.func_type == MAP:
        roles.append(PARTITIONER)
    elif n.func_type == SUM:
        if dag.kinds[label] == INT:
            roles.append(SUM_REDUCER)
        elif label in dag.sinks:
            roles.append(WC_REDUCER)
        else:
            # keyed streams are merged on the way and counted once, at the sink
            roles.append(PARTITIONER)
    return roles


def targets_of(dag: DataflowDag, label: int) -> list[int]:
    out = dag.out_edges(label)
    return out if out else [COLLECTOR_ROUTING_ID]


def emit_switch_configs(plan: PlacementPlan, tables: dict[int, RoutingTable],
                        dag: DataflowDag) -> list[SwitchConfig]:
    hosted: dict[int, dict[int, HostedLabel]] = {}
    for label in dag.compute_labels():
        node = dag.nodes[label]
        hosted.setdefault(plan.assignment[label], {})[label] = HostedLabel(
            label, node.label_name, label_roles(dag, label), dag.in_degree(label),
            node.value_type, targets_of(dag, label))
    configs = []
    for s in sorted(tables):
        labels = hosted.get(s, {})
        if labels or tables[s].entries:
            configs.append(SwitchConfig(s, labels, dict(tables[s].entries)))
    return configs


@dataclass
class CompiledJob:
    ast: list
    dag: DataflowDag
    topo: Topology
    plan: PlacementPlan
    tables: dict[int, RoutingTable]
    configs: list[SwitchConfig]

    def config_for(self, switch: int) -> SwitchConfig:
        for c in self.configs:
            if c.switch == switch:
                return c
        return SwitchConfig(switch, {}, {})


def compile_program(program_text: str, topo: Topology) -> CompiledJob:
    ast = parse(program_text)
    dag = build_dag(ast)
    plan = place(dag, topo)
    tables = route(plan, dag, topo)
    configs = emit_switch_configs(plan, tables, dag)
    return CompiledJob(ast, dag, topo, plan, tables, configs)


def walk(tables: dict[int, RoutingTable], topo: Topology, start_switch: int, routing_id: int,
         stop_at: int, limit: int) -> list[int]:
    """Follow table entries from ``start_switch`` until ``stop_at``; raises on loops or drops."""
    node, path = start_switch, [start_switch]
    while node != stop_at:
        if len(path) > limit + 1:
            raise RuntimeError(f"walk for id {routing_id} exceeded {limit} hops: {path}")
        port = tables[node].lookup(routing_id)
        if port is None:
            raise RuntimeError(f"id {routing_id} dropped at switch {node}")
        node = topo.links[port].other(node)
        path.append(node)
    return path
