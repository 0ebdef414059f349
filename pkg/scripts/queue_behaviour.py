"""Switch pipeline queue depth when serializing packed frames in timed mode.

Sweeps items per frame (via the MTU) and the host send rate, and reports the
peak ingress queue depth for two dataset sizes. A peak that grows with the
dataset means the switch cannot keep up at that rate.
"""
import argparse
import csv
import sys

from p4mr.cli import chain_program
from p4mr.cost_model import equilibrium_rate
from p4mr.datasets import generate_integers
from p4mr.placement import compile_program
from p4mr.sim import SimConfig, run
from p4mr.topology import star_topology
from p4mr.wire import max_items


def peak_depth(items, mtu, rate):
    job = compile_program(chain_program(1), star_topology(1))
    cfg = SimConfig(scenario=3, mtu=mtu, host_rate_bps=rate, pipeline="timed")
    report = run(job, {0: generate_integers(items, 1)}, cfg)
    return report.switch_counters["1"]["max_queue_depth"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--items", type=int, nargs=2, default=[2000, 8000])
    ap.add_argument("--mtus", type=int, nargs="+", default=[27, 35, 43, 51, 99, 1500])
    args = ap.parse_args()
    C = 1e9
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "rate_bps", f"peak_{args.items[0]}", f"peak_{args.items[1]}", "grows"])
    for mtu in args.mtus:
        for rate in (equilibrium_rate(C), C):
            small, large = (peak_depth(n, mtu, rate) for n in args.items)
            w.writerow([max_items(mtu), f"{rate:.6g}", small, large, large > 2 * small])


if __name__ == "__main__":
    main()
