"""Deterministic discrete-event simulation of a compiled p4mr job.

Scenarios:

1. hosts map and reduce; the network only forwards (host-addressed shuffle),
2. hosts map, switches reduce,
3. hosts send MTU-packed frames rate limited to C/e; switches split them by
   recirculation and reduce.

Time is double precision seconds; ties are broken by a monotonic sequence
number so a (job, datasets, config) triple always replays identically.
"""
from __future__ import annotations

import heapq
import json
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field

from .cost_model import equilibrium_rate
from .dataplane import LOCAL, RECIRCULATE, SwitchState, hash_partition
from .dsl import INT, STORE, SUM, evaluate, sink_value, word_stores, wrap
from .errors import EmptyTrace, InvalidParams, StallDetected, UnsupportedProgram
from .placement import COLLECTOR_ROUTING_ID, CompiledJob, host_routes, targets_of
from .wire import (
    COLLECT,
    MTU_PACKED,
    PER_ITEM,
    RESULT,
    UNIT,
    collection_frame,
    item_word,
    result_frame,
    serialize_dataset,
    unit_frame,
)

# event kinds
HOST_SEND = 0
FRAME_ARRIVAL = 1
PIPELINE_PASS = 2
CPU_DONE = 3
JOB_DONE = 4

SHUFFLE = "shuffle"
REPORT = "report"

PIPELINE_MODES = ("timed", "line_rate")


@dataclass
class SimConfig:
    scenario: int = 2
    mtu: int = 1500
    host_rate_bps: float | None = None  # scenario 3 cap; None means C/e of the host link
    cpu_map_s: float = 1e-6
    cpu_reduce_s: float = 2e-6
    host_setup_s: float = 0.0
    wc_slots: int = 1 << 16
    pipeline: str = "line_rate"
    trace_buckets: int = 50
    record_queues: bool = False
    seed: int = 0

    def validate(self):
        if self.scenario not in (1, 2, 3):
            raise InvalidParams(f"scenario must be 1, 2 or 3, got {self.scenario!r}")
        if self.pipeline not in PIPELINE_MODES:
            raise InvalidParams(f"pipeline must be one of {PIPELINE_MODES}")
        if min(self.cpu_map_s, self.cpu_reduce_s, self.host_setup_s) < 0:
            raise InvalidParams("cpu costs and setup time must be non-negative")
        if self.host_rate_bps is not None and not self.host_rate_bps > 0:
            raise InvalidParams("host rate must be positive")
        if self.wc_slots < 1 or self.trace_buckets < 1:
            raise InvalidParams("wc_slots and trace_buckets must be >= 1")


class Packet:
    """A frame in flight plus simulator-only addressing (scenario 1 host traffic)."""

    __slots__ = ("frame", "dst", "src", "stage")

    def __init__(self, frame, dst=None, src=None, stage=None):
        self.frame = frame
        self.dst = dst
        self.src = src
        self.stage = stage

    @property
    def bits(self) -> int:
        return self.frame.bits


class LinkChannel:
    """One direction of a link: FIFO serialisation then propagation delay."""

    def __init__(self, capacity_bps: float, delay_s: float):
        self.capacity = capacity_bps
        self.delay = delay_s
        self.busy_until = 0.0
        self.bytes = 0
        self.frames = 0
        self.log: list[tuple[float, float, int]] = []

    def transmit(self, bits: int, now: float) -> tuple[float, float]:
        start = max(now, self.busy_until)
        end = start + bits / self.capacity
        self.busy_until = end
        self.bytes += bits // 8
        self.frames += 1
        self.log.append((start, end, bits))
        return start, end + self.delay


def link_transmit(bits: int, capacity_bps: float, delay_s: float, now: float,
                  busy_until: float = 0.0) -> tuple[float, float]:
    """(arrival time, new busy_until) for a frame handed to a FIFO link at ``now``."""
    start = max(now, busy_until)
    end = start + bits / capacity_bps
    return end + delay_s, end


class TokenBucket:
    """Token bucket on simulated time; starts full."""

    def __init__(self, rate_bps: float, depth_bits: float, now: float = 0.0):
        self.rate = rate_bps
        self.depth = depth_bits
        self.tokens = depth_bits
        self.stamp = now

    def _refill(self, now: float):
        if now > self.stamp:
            self.tokens = min(self.depth, self.tokens + (now - self.stamp) * self.rate)
            self.stamp = now

    def ready_time(self, bits: int, now: float) -> float:
        self._refill(now)
        if self.tokens >= bits:
            return now
        return now + (bits - self.tokens) / self.rate

    def consume(self, bits: int, now: float):
        self._refill(now)
        self.tokens -= bits


class PipelineQueue:
    def __init__(self, capacity_bps: float, timed: bool, record: bool):
        self.capacity = capacity_bps
        self.timed = timed
        self.busy_until = 0.0
        self.depth = 0
        self.max_depth = 0
        self.trace: list[tuple[float, int]] | None = [] if record else None

    def enqueue(self, bits: int, now: float) -> float:
        start = max(now, self.busy_until)
        done = start + (bits / self.capacity if self.timed else 0.0)
        self.busy_until = done
        self.depth += 1
        self.max_depth = max(self.max_depth, self.depth)
        if self.trace is not None:
            self.trace.append((now, self.depth))
        return done

    def dequeue(self, now: float):
        self.depth -= 1
        if self.trace is not None:
            self.trace.append((now, self.depth))


class HostAgent:
    def __init__(self, host_id: int, port: int, channel: LinkChannel, bucket: TokenBucket | None):
        self.id = host_id
        self.port = port
        self.channel = channel
        self.bucket = bucket
        self.queue: deque[Packet] = deque()
        self.busy = False
        # scenario 1 reducer state
        self.partials: dict[int, object] = {}
        self.received_items = 0
        self.collects = 0

    @property
    def send_rate(self) -> float:
        return self.bucket.rate if self.bucket else self.channel.capacity


@dataclass
class JobReport:
    scenario: int
    seed: int
    jct: float
    results: dict
    link_bytes: dict
    switch_counters: dict
    host_counters: dict
    throughput: dict
    trace_window: float
    items_injected: int
    collisions: int
    drops: int
    events: int
    config: dict
    tx_log: dict = field(default_factory=dict, repr=False, compare=False)
    queue_traces: dict = field(default_factory=dict, repr=False, compare=False)
    link_capacity: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("tx_log", "queue_traces", "link_capacity"):
            d.pop(key)
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_csv(self) -> str:
        rows = ["metric,key,value", f"jct,,{_fmt(self.jct)}"]
        for name, value in sorted(self.results.items()):
            if isinstance(value, dict):
                for word, count in sorted(value.items()):
                    rows.append(f"result,{name}:{_csv_escape(word)},{count}")
            else:
                rows.append(f"result,{name},{value}")
        for link, b in sorted(self.link_bytes.items()):
            rows.append(f"link_bytes,{link},{b}")
        for sw, counters in sorted(self.switch_counters.items()):
            for k, v in sorted(counters.items()):
                rows.append(f"switch_{k},{sw},{v}")
        for k in ("items_injected", "collisions", "drops", "events"):
            rows.append(f"{k},,{getattr(self, k)}")
        return "\n".join(rows) + "\n"


def _csv_escape(s: str) -> str:
    return '"' + s.replace('"', '""') + '"' if any(c in s for c in ',"\n') else s


def _fmt(x: float) -> str:
    return format(x, ".17g")


def canonical_json(obj) -> str:
    """Sorted keys, floats at 17 significant digits; byte-stable across runs."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite float in report")
        text = _fmt(obj)
        return text if any(c in text for c in ".e") else text + ".0"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(f"{json.dumps(k)}:{canonical_json(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def measure_throughput(report: JobReport, link: str, window: float,
                       start: float = 0.0, end: float | None = None) -> list[float]:
    """Bits transmitted per window divided by the window, frames split pro rata."""
    if not window > 0:
        raise InvalidParams("window must be positive")
    if not any(report.tx_log.values()):
        raise EmptyTrace("report holds no transmissions")
    if end is None:
        end = max(e for log in report.tx_log.values() for _, e, _ in log)
    nb = max(1, math.ceil((end - start) / window - 1e-9))
    bins = [0.0] * nb
    for s, e, bits in report.tx_log.get(link, ()):
        if e <= start or s >= end:
            continue
        dur = e - s
        lo = max(s, start)
        hi = min(e, end)
        b = int((lo - start) // window)
        while lo < hi and b < nb:
            edge = start + (b + 1) * window
            seg = min(hi, edge) - lo
            bins[b] += bits * seg / dur if dur > 0 else bits
            lo = min(hi, edge)
            b += 1
    return [x / window for x in bins]


class Simulator:
    def __init__(self, job: CompiledJob, datasets: dict[int, list[int]], config: SimConfig | None = None):
        self.job = job
        self.cfg = config or SimConfig()
        self.cfg.validate()
        dag = job.dag
        if len(dag.sinks) != 1:
            raise UnsupportedProgram(
                f"simulation needs exactly one sink label, program has {len(dag.sinks)}")
        self.sink = dag.sinks[0]
        self.word_stores = word_stores(dag.nodes)
        self.stores = [n.label_index for n in dag.nodes if n.func_type == STORE]
        missing = [dag.nodes[s].label_name for s in self.stores if s not in datasets]
        if missing:
            raise InvalidParams(f"no dataset for store labels {missing}")
        self.datasets = {s: list(datasets[s]) for s in self.stores}
        topo = job.topo
        self.topo = topo
        self.collector = topo.collection_host
        self.events: list = []
        self.seq = 0
        self.now = 0.0
        self.n_events = 0
        self.done_time: float | None = None
        self.channels = {}
        for port, ln in enumerate(topo.links):
            self.channels[(port, ln.a)] = LinkChannel(ln.capacity_bps, ln.delay_s)
            self.channels[(port, ln.b)] = LinkChannel(ln.capacity_bps, ln.delay_s)
        timed = self.cfg.pipeline == "timed"
        sw_caps = {s.id: s.capacity_bps for s in topo.switches}
        self.switch_caps = sw_caps
        self.queues: dict[tuple[int, object], PipelineQueue] = {}
        self._timed = timed
        self.states = {s: SwitchState(job.config_for(s), self.cfg.wc_slots) for s in topo.switch_ids()}
        self.host_fwd = host_routes(topo) if self.cfg.scenario == 1 else {}
        self.hosts: dict[int, HostAgent] = {}
        for h in topo.hosts:
            port = topo.host_port(h.id)
            ch = self.channels[(port, h.id)]
            bucket = None
            if self.cfg.scenario == 3:
                rate = self.cfg.host_rate_bps or equilibrium_rate(ch.capacity)
                if rate > ch.capacity:
                    raise InvalidParams(f"host {h.name} rate {rate} exceeds its link capacity")
                depth = max(self.cfg.mtu * 8, 27 * 8)
                bucket = TokenBucket(rate, depth)
            self.hosts[h.id] = HostAgent(h.id, port, ch, bucket)
        # collection host state
        self.col_collects = 0
        self.col_expected = 1
        self.col_int = 0
        self.col_keys: Counter = Counter()
        self.col_pending: dict[object, int] = {}
        self.col_partials: dict[int, object] = {}
        self.last_result_time: float | None = None
        self.items_injected = sum(len(v) for v in self.datasets.values())
        self.host_drops = 0

    # -- event plumbing -----------------------------------------------------

    def schedule(self, t: float, kind: int, *payload):
        assert t >= self.now, "event scheduled in the past"
        self.seq += 1
        heapq.heappush(self.events, (t, self.seq, kind, payload))

    def _queue(self, switch: int, key) -> PipelineQueue:
        q = self.queues.get((switch, key))
        if q is None:
            q = PipelineQueue(self.switch_caps[switch], self._timed, self.cfg.record_queues)
            self.queues[(switch, key)] = q
        return q

    def _send_from(self, node: int, port: int, pkt: Packet):
        ch = self.channels[(port, node)]
        _, arrival = ch.transmit(pkt.bits, self.now)
        self.schedule(arrival, FRAME_ARRIVAL, self.topo.links[port].other(node), port, pkt)

    def _host_enqueue(self, host: HostAgent, pkts):
        host.queue.extend(pkts)
        if not host.busy and host.queue:
            host.busy = True
            self.schedule(self._next_send_time(host), HOST_SEND, host.id)

    def _next_send_time(self, host: HostAgent) -> float:
        t = max(self.now, host.channel.busy_until)
        if host.bucket is not None:
            t = max(t, host.bucket.ready_time(host.queue[0].bits, t))
        return t

    def _switch_enqueue(self, switch: int, key, ingress, pkt: Packet):
        done = self._queue(switch, key).enqueue(pkt.bits, self.now)
        self.schedule(done, PIPELINE_PASS, switch, key, ingress, pkt)

    # -- setup ----------------------------------------------------------------

    def _host_items(self) -> dict[int, list[int]]:
        per_host: dict[int, list[int]] = {}
        for s in self.stores:
            per_host.setdefault(self.job.plan.assignment[s], []).append(s)
        return per_host

    def _setup(self):
        sc = self.cfg.scenario
        per_host = self._host_items()
        if sc == 1:
            self.reducers = sorted(per_host)
            self.col_expected = len(self.reducers)
            for r in self.reducers:
                self.hosts[r].partials = {
                    s: (Counter() if s in self.word_stores else 0) for s in self.stores}
        for hid in sorted(per_host):
            labels = per_host[hid]
            n_items = sum(len(self.datasets[s]) for s in labels)
            setup = self.cfg.host_setup_s
            if sc == 3:
                self.schedule(setup, CPU_DONE, hid, "start")
            else:
                self.schedule(setup + n_items * self.cfg.cpu_map_s, CPU_DONE, hid, "map")

    def _network_packets(self, labels, mode) -> list[Packet]:
        data, collects = [], []
        for s in labels:
            for target in targets_of(self.job.dag, s):
                frames = serialize_dataset(self.datasets[s], mode, self.cfg.mtu, target)
                data.extend(Packet(f) for f in frames)
                collects.append(Packet(collection_frame(target, s + 1)))
        return data + collects

    def _shuffle_packets(self, hid: int, labels) -> list[Packet]:
        pkts = []
        n = len(self.reducers)
        for s in labels:
            for item in self.datasets[s]:
                dst = self.reducers[hash_partition(item, n)]
                pkts.append(Packet(unit_frame(s, item), dst=dst, src=hid, stage=SHUFFLE))
        origin = self.reducers.index(hid) + 1
        for r in self.reducers:
            pkts.append(Packet(collection_frame(0, origin), dst=r, src=hid, stage=SHUFFLE))
        return pkts

    # -- handlers -------------------------------------------------------------

    def _on_cpu_done(self, hid: int, what: str):
        host = self.hosts[hid]
        labels = self._host_items()[hid] if what in ("map", "start") else None
        if what == "start":
            self._host_enqueue(host, self._network_packets(labels, MTU_PACKED))
        elif what == "map":
            if self.cfg.scenario == 1:
                self._host_enqueue(host, self._shuffle_packets(hid, labels))
            else:
                self._host_enqueue(host, self._network_packets(labels, PER_ITEM))
        elif what == "reduce":
            pkts = []
            for s in self.stores:
                part = host.partials[s]
                if isinstance(part, Counter):
                    for key in sorted(part):
                        pkts.append(Packet(result_frame(s, key, 0), self.collector, hid, REPORT))
                        pkts.append(Packet(result_frame(s, part[key] & ((1 << 64) - 1), 1),
                                           self.collector, hid, REPORT))
                else:
                    pkts.append(Packet(result_frame(s, part & ((1 << 64) - 1)),
                                       self.collector, hid, REPORT))
            pkts.append(Packet(collection_frame(0, self.reducers.index(hid) + 1),
                               self.collector, hid, REPORT))
            self._host_enqueue(host, pkts)

    def _on_host_send(self, hid: int):
        host = self.hosts[hid]
        pkt = host.queue.popleft()
        if host.bucket is not None:
            host.bucket.consume(pkt.bits, self.now)
        self._send_from(hid, host.port, pkt)
        if host.queue:
            self.schedule(self._next_send_time(host), HOST_SEND, hid)
        else:
            host.busy = False

    def _on_arrival(self, node: int, port: int, pkt: Packet):
        if self.topo.is_switch(node):
            self._switch_enqueue(node, port, port, pkt)
        else:
            self._on_host_receive(node, pkt)

    def _on_pass(self, switch: int, key, ingress, pkt: Packet):
        self._queue(switch, key).dequeue(self.now)
        state = self.states[switch]
        if pkt.dst is not None:
            c = state.counters
            c["passes"] += 1
            c["unit_in"] += pkt.frame.app_id == UNIT
            c["unit_forwarded"] += pkt.frame.app_id == UNIT
            self._send_from(switch, self.host_fwd[switch][pkt.dst], pkt)
            return
        for target, frame in state.on_packet(pkt.frame, ingress):
            if target == RECIRCULATE:
                self._switch_enqueue(switch, key, RECIRCULATE, Packet(frame))
            elif target == LOCAL:
                self._switch_enqueue(switch, LOCAL, LOCAL, Packet(frame))
            else:
                self._send_from(switch, target, Packet(frame))

    def _on_host_receive(self, hid: int, pkt: Packet):
        f = pkt.frame
        if pkt.stage == SHUFFLE and pkt.dst == hid:
            host = self.hosts[hid]
            if f.app_id == UNIT:
                part = host.partials[f.routing_id]
                if isinstance(part, Counter):
                    part[f.items[0]] += 1
                else:
                    host.partials[f.routing_id] = part + f.items[0]
                host.received_items += 1
            elif f.app_id == COLLECT:
                host.collects += 1
                if host.collects == len(self.reducers):
                    self.schedule(self.now + host.received_items * self.cfg.cpu_reduce_s,
                                  CPU_DONE, hid, "reduce")
            return
        if hid != self.collector:
            self.host_drops += 1
            return
        if pkt.stage == REPORT:
            self._collect_s1(pkt)
        elif f.routing_id == COLLECTOR_ROUTING_ID:
            self._collect_network(f)
        else:
            self.host_drops += 1

    def _collect_s1(self, pkt: Packet):
        f = pkt.frame
        if f.app_id == RESULT:
            self.last_result_time = self.now
            s = f.routing_id
            if s in self.word_stores:
                if f.header.collection_id == 0:
                    self.col_pending[pkt.src] = f.items[0]
                else:
                    key = self.col_pending.pop(pkt.src)
                    self.col_partials.setdefault(s, Counter())[key] += f.items[0]
            else:
                self.col_partials[s] = self.col_partials.get(s, 0) + f.items[0]
        elif f.app_id == COLLECT:
            self.col_collects += 1
            if self.col_collects == self.col_expected:
                self.schedule(self.now, JOB_DONE)

    def _collect_network(self, f):
        dag = self.job.dag
        keyed = dag.kinds[self.sink] != INT
        if f.app_id == COLLECT:
            self.col_collects += 1
            if self.col_collects == self.col_expected:
                self.schedule(self.now, JOB_DONE)
            return
        self.last_result_time = self.now
        if f.app_id == RESULT and dag.nodes[self.sink].func_type == SUM:
            if keyed:
                if f.header.collection_id == 0:
                    self.col_pending["sink"] = f.items[0]
                else:
                    self.col_keys[self.col_pending.pop("sink")] += f.items[0]
            else:
                self.col_int = f.items[0]
            return
        # a stream sink: fold the items arriving here
        items = f.items
        if keyed:
            for it in items:
                self.col_keys[it] += 1
        else:
            self.col_int += sum(items)

    # -- main loop ------------------------------------------------------------

    def run(self) -> JobReport:
        self._setup()
        handlers = {
            HOST_SEND: self._on_host_send,
            FRAME_ARRIVAL: self._on_arrival,
            PIPELINE_PASS: self._on_pass,
            CPU_DONE: self._on_cpu_done,
        }
        events = self.events
        while events:
            t, _, kind, payload = heapq.heappop(events)
            self.now = t
            self.n_events += 1
            if kind == JOB_DONE:
                self.done_time = t
                break
            handlers[kind](*payload)
        if self.done_time is None:
            blocked = [l for st in self.states.values() for l in st.blocked_labels()]
            if not blocked and self.cfg.scenario == 1:
                blocked = [self.sink]
            raise StallDetected(blocked, self.now)
        return self._report()

    def _sink_result(self):
        dag = self.job.dag
        node = dag.nodes[self.sink]
        if self.cfg.scenario == 1:
            aggregates = {}
            for s in self.stores:
                default = Counter() if s in self.word_stores else 0
                aggregates[s] = self.col_partials.get(s, default)
            value = sink_value(dag, evaluate(dag, aggregates), self.sink)
        elif dag.kinds[self.sink] != INT:
            value = {k: wrap(c, node.value_type) for k, c in self.col_keys.items()}
        else:
            value = wrap(self.col_int, node.value_type)
        if isinstance(value, dict):
            value = {item_word(k): c for k, c in sorted(value.items())}
        return value

    def _report(self) -> JobReport:
        jct = self.last_result_time if self.last_result_time is not None else self.done_time
        link_bytes, tx_log, caps = {}, {}, {}
        for (port, node), ch in sorted(self.channels.items()):
            name = f"{node}->{self.topo.links[port].other(node)}"
            caps[name] = ch.capacity
            if ch.frames:
                link_bytes[name] = ch.bytes
                tx_log[name] = ch.log
        switch_counters = {}
        collisions = drops = 0
        for sid, st in sorted(self.states.items()):
            c = dict(st.counters)
            c["collisions"] = st.collision_count
            c["max_queue_depth"] = max(
                [q.max_depth for (s, _), q in self.queues.items() if s == sid] or [0])
            switch_counters[str(sid)] = c
            collisions += st.collision_count
            drops += st.counters["drops"]
        horizon = max([jct] + [log[-1][1] for log in tx_log.values()])
        window = horizon / self.cfg.trace_buckets if horizon > 0 else 0.0
        report = JobReport(
            scenario=self.cfg.scenario,
            seed=self.cfg.seed,
            jct=jct,
            results={self.job.dag.nodes[self.sink].label_name: self._sink_result()},
            link_bytes=link_bytes,
            switch_counters=switch_counters,
            host_counters={"drops": self.host_drops},
            throughput={},
            trace_window=window,
            items_injected=self.items_injected,
            collisions=collisions,
            drops=drops + self.host_drops,
            events=self.n_events,
            config=asdict(self.cfg),
            tx_log=tx_log,
            queue_traces={f"{s}:{k}": q.trace for (s, k), q in self.queues.items() if q.trace},
            link_capacity=caps,
        )
        if window > 0:
            report.throughput = {
                name: measure_throughput(report, name, window, 0.0, horizon) for name in tx_log}
        return report


def run(job: CompiledJob, datasets: dict[int, list[int]], config: SimConfig | None = None) -> JobReport:
    return Simulator(job, datasets, config).run()
