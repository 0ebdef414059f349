"""Match-action behaviour of one programmed switch.

``SwitchState.on_packet`` runs a single pipeline pass and returns the
resulting actions as ``(target, frame)`` pairs where target is an egress
port, ``RECIRCULATE`` (feed back into this switch's pipeline), or ``LOCAL``
(a newly generated frame addressed to a label hosted on this same switch).
"""
from __future__ import annotations

from collections import deque

from .dsl import wrap
from .errors import P4mrError
from .placement import (
    PARTITIONER,
    SERIALIZER,
    SUM_REDUCER,
    WC_REDUCER,
    SwitchConfig,
)
from .wire import (
    APP_IDS,
    COLLECT,
    PACKED,
    UNIT,
    Frame,
    collection_frame,
    decode_frame,
    packed_frame,
    result_frame,
    unit_frame,
)

RECIRCULATE = "RECIRCULATE"
LOCAL = "LOCAL"

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


def hash_partition(item: int, num_reducers: int) -> int:
    if num_reducers < 1:
        raise ValueError("num_reducers must be >= 1")
    if num_reducers == 1:
        return 0
    return fnv1a_64(item.to_bytes(8, "big")) % num_reducers


class WordCountTable:
    """Fixed hash-indexed slot array; a colliding key is counted and dropped."""

    def __init__(self, slots: int):
        if slots < 1:
            raise ValueError("need at least one slot")
        self.slots = slots
        self.keys = [0] * slots
        self.counts = [0] * slots
        self.occupied = [False] * slots
        self.collisions = 0

    def add(self, key: int):
        idx = fnv1a_64(key.to_bytes(8, "big")) % self.slots
        if not self.occupied[idx]:
            self.occupied[idx] = True
            self.keys[idx] = key
            self.counts[idx] = 1
        elif self.keys[idx] == key:
            self.counts[idx] = (self.counts[idx] + 1) & _MASK64
        else:
            self.collisions += 1

    def entries(self) -> list[tuple[int, int]]:
        return [(self.keys[i], self.counts[i]) for i in range(self.slots) if self.occupied[i]]

    def total(self) -> int:
        return sum(c for c, o in zip(self.counts, self.occupied) if o)


COUNTER_NAMES = ("passes", "recirculations", "drops", "excess_collections",
                 "unit_in", "unit_consumed", "unit_forwarded", "unit_dropped")


class SwitchState:
    def __init__(self, config: SwitchConfig, wc_slots: int = 1 << 16):
        self.config = config
        labels = config.labels
        self.registers = {l: 0 for l, h in labels.items() if SUM_REDUCER in h.roles}
        self.wc_slots = {l: WordCountTable(wc_slots) for l, h in labels.items()
                         if WC_REDUCER in h.roles}
        self.collect_received = {l: 0 for l in labels}
        self.inflight = {l: 0 for l in labels}
        self.recirc_queue: deque = deque()  # (ingress port, frame)
        self.counters = dict.fromkeys(COUNTER_NAMES, 0)

    @property
    def collision_count(self) -> int:
        return sum(t.collisions for t in self.wc_slots.values())

    # -- pipeline -------------------------------------------------------------

    def on_packet(self, frame, ingress_port=None) -> list:
        c = self.counters
        c["passes"] += 1
        if isinstance(frame, (bytes, bytearray)):
            try:
                frame, _ = decode_frame(bytes(frame))
            except P4mrError:
                c["drops"] += 1
                return []
        out: list = []
        app, rid = frame.header.app_id, frame.header.routing_id
        if app not in APP_IDS:
            c["drops"] += 1
            return out
        if app == UNIT:
            c["unit_in"] += 1
        hosted = self.config.labels.get(rid)
        if app == PACKED and ingress_port == RECIRCULATE and hosted is not None:
            self.inflight[rid] -= 1
        if hosted is None:
            self._forward(frame, out)
        elif app == PACKED:
            if SERIALIZER not in hosted.roles:
                c["drops"] += 1
                return out
            unit, residual = self.serialize_step(frame)
            c["unit_in"] += 1
            self._deliver(unit, out)
            if residual is not None:
                self.inflight[rid] += 1
                c["recirculations"] += 1
                out.append((RECIRCULATE, residual))
        elif app == COLLECT:
            if self.inflight[rid] > 0:
                # items of this label are still being split; let them drain first
                c["recirculations"] += 1
                out.append((RECIRCULATE, frame))
            else:
                out.extend(self.on_collection(frame))
        else:
            self._deliver(frame, out)
        return out

    def serialize_step(self, packed: Frame) -> tuple[Frame, Frame | None]:
        first, rest = packed.items[0], packed.items[1:]
        rid = packed.header.routing_id
        group = [rid]
        unit = unit_frame(group[hash_partition(first, len(group))], first)
        residual = packed_frame(rid, rest) if rest else None
        return unit, residual

    def _deliver(self, frame: Frame, out: list):
        c = self.counters
        rid = frame.header.routing_id
        hosted = self.config.labels[rid]
        is_unit = frame.header.app_id == UNIT
        value = frame.items[0]
        if SUM_REDUCER in hosted.roles:
            self.sum_reduce(rid, value)
        elif WC_REDUCER in hosted.roles:
            self.wordcount_reduce(rid, value)
        elif PARTITIONER in hosted.roles:
            for target in hosted.targets:
                copy = frame.with_routing(target)
                if is_unit:
                    c["unit_in"] += 1
                self._route(copy, out, inline=True)
        else:
            c["drops"] += 1
            if is_unit:
                c["unit_dropped"] += 1
            return
        if is_unit:
            c["unit_consumed"] += 1

    def _route(self, frame: Frame, out: list, inline: bool):
        rid = frame.header.routing_id
        if rid in self.config.labels:
            if inline:
                self._deliver(frame, out)
            else:
                out.append((LOCAL, frame))
        else:
            self._forward(frame, out)

    def _forward(self, frame: Frame, out: list):
        c = self.counters
        port = self.config.routes.get(frame.header.routing_id)
        is_unit = frame.header.app_id == UNIT
        if port is None:
            c["drops"] += 1
            if is_unit:
                c["unit_dropped"] += 1
        else:
            out.append((port, frame))
            if is_unit:
                c["unit_forwarded"] += 1

    # -- stateful operations ------------------------------------------------

    def sum_reduce(self, label: int, value: int):
        vt = self.config.labels[label].value_type
        self.registers[label] = wrap(self.registers[label] + value, vt)

    def wordcount_reduce(self, label: int, key: int):
        self.wc_slots[label].add(key)

    def on_collection(self, frame: Frame) -> list:
        rid = frame.header.routing_id
        hosted = self.config.labels[rid]
        if self.collect_received[rid] >= hosted.expected_signals:
            self.counters["excess_collections"] += 1
            self.counters["drops"] += 1
            return []
        self.collect_received[rid] += 1
        if self.collect_received[rid] < hosted.expected_signals:
            return []
        out: list = []
        if SUM_REDUCER in hosted.roles:
            for t in hosted.targets:
                self._route(result_frame(t, self.registers[rid]), out, inline=False)
        elif WC_REDUCER in hosted.roles:
            for key, count in self.wc_slots[rid].entries():
                for t in hosted.targets:
                    self._route(result_frame(t, key, 0), out, inline=False)
                    self._route(result_frame(t, count, 1), out, inline=False)
        for t in hosted.targets:
            self._route(collection_frame(t, rid + 1), out, inline=False)
        return out

    def blocked_labels(self) -> list[int]:
        return [l for l, h in self.config.labels.items()
                if self.collect_received[l] < h.expected_signals]

    # -- standalone replay --------------------------------------------------

    def process(self, frames) -> list:
        """Run ingress frames to quiescence. Recirculated and LOCAL frames, and
        anything already waiting in ``recirc_queue``, are served before the
        next ingress frame."""
        egress = []
        pending = iter(frames)
        while True:
            if not self.recirc_queue:
                f = next(pending, None)
                if f is None:
                    return egress
                self.recirc_queue.append((None, f))
            port, cur = self.recirc_queue.popleft()
            for target, out in self.on_packet(cur, port):
                if target in (RECIRCULATE, LOCAL):
                    self.recirc_queue.append((target, out))
                else:
                    egress.append((target, out))
