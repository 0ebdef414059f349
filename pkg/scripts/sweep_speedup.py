"""Simulated and analytic JCT for the three scenarios over server count and data size.

    python3 scripts/sweep_speedup.py --out results/ --jobs 4
"""
import argparse
from pathlib import Path

from p4mr.cli import SWEEP_COLUMNS, sweep_rows
from p4mr.cost_model import rows_to_csv
from p4mr.sim import SimConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--setup", type=float, default=1e-3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--K", type=int, default=120_000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SimConfig(host_setup_s=args.setup)

    rows = []
    for sc in (1, 2, 3):
        rows += sweep_rows("n", [3, 6, 12, 24], 3, args.K, sc, cfg, jobs=args.jobs)
    (out / "sweep_n.csv").write_text(rows_to_csv(rows, SWEEP_COLUMNS))

    rows = []
    for sc in (1, 2, 3):
        rows += sweep_rows("K", [12_000, 24_000, 60_000, 120_000], 3, args.K, sc, cfg, jobs=args.jobs)
    (out / "sweep_K.csv").write_text(rows_to_csv(rows, SWEEP_COLUMNS))

    for name in ("sweep_n.csv", "sweep_K.csv"):
        print(f"== {name}")
        print((out / name).read_text())


if __name__ == "__main__":
    main()
