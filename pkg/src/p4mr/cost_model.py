"""Closed-form serialization cost and scenario job completion times.

A switch that splits MTU-sized packets by recirculation while still taking
new packets at rate r saturates when r (1 + 1/N)^N reaches C, i.e. at
r = C/e in the limit; the remaining C (1 - 1/e) is the throughput penalty.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

from .errors import InvalidParams, NonPositiveCapacity, ZeroDenominator

S1, S2, S3 = 1, 2, 3
SCENARIOS = (S1, S2, S3)
HEADER_BYTES = 19


def equilibrium_rate(C: float) -> float:
    if not C > 0:
        raise NonPositiveCapacity(f"capacity must be positive, got {C}")
    return C / math.e


def throughput_penalty(C: float) -> float:
    if not C > 0:
        raise NonPositiveCapacity(f"capacity must be positive, got {C}")
    return C - equilibrium_rate(C)


@dataclass(frozen=True)
class CostParams:
    C: float = 1e9          # link / switch port capacity, bits/s
    n: int = 3              # servers
    K: float = 1e7          # total items
    s: int = 8              # item bytes
    h: int = HEADER_BYTES   # header bytes per frame
    M: int = 1500           # MTU bytes
    c_m: float = 1e-6       # map seconds per item
    c_r: float = 2e-6       # reduce seconds per item
    setup_s: float = 0.0    # fixed per-server job launch time

    def validate(self):
        for name in ("C", "n", "K", "s", "h", "M"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be positive")
        for name in ("c_m", "c_r", "setup_s"):
            if getattr(self, name) < 0:
                raise InvalidParams(f"{name} must be non-negative")
        if not self.M > self.h + self.s:
            raise InvalidParams(f"MTU {self.M} cannot hold a header and one item")

    @property
    def per_server(self) -> float:
        return self.K / self.n

    @property
    def k_max(self) -> int:
        return (self.M - self.h) // self.s


def jct(params: CostParams, scenario: int) -> float:
    """Stage times add: setup, map, transfer, then (scenario 1 only) host reduce."""
    params.validate()
    q = params.per_server
    unit_bits = (params.s + params.h) * 8
    if scenario == S1:
        t = q * params.c_m + q * unit_bits / params.C + q * params.c_r
    elif scenario == S2:
        t = q * params.c_m + q * unit_bits / params.C
    elif scenario == S3:
        frames = math.ceil(q / params.k_max)
        nbytes = frames * params.h + q * params.s
        t = nbytes * 8 / equilibrium_rate(params.C)
    else:
        raise InvalidParams(f"unknown scenario {scenario!r}")
    return params.setup_s + t if params.setup_s else t


def speedup(j1: float, j: float) -> float:
    if j == 0:
        raise ZeroDenominator("job completion time is zero")
    return j1 / j


def sweep(base: CostParams, ns=(3, 6, 12, 24), Ks=None, scenarios=SCENARIOS) -> list[dict]:
    rows = []
    for K in (Ks or (base.K,)):
        for n in ns:
            p = replace(base, n=n, K=K)
            j1 = jct(p, S1)
            for sc in scenarios:
                j = jct(p, sc)
                rows.append({"scenario": sc, "n": n, "K": K, "C": p.C, "jct": j,
                             "speedup_vs_S1": speedup(j1, j)})
    return rows


def rows_to_csv(rows: list[dict], columns=("scenario", "n", "K", "C", "jct", "speedup_vs_S1")) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
