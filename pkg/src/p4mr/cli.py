"""Command line driver: ``p4mr compile | run | sweep | model``.

Exit codes: 0 success, 1 domain error, 2 I/O or usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import cost_model
from .datasets import generate_integers, load_dataset
from .dsl import STORE, ast_to_json, evaluate, sink_value, word_stores
from .errors import P4mrError
from .placement import compile_program
from .sim import SimConfig, run
from .topology import load_topology, star_topology
from .wire import item_word


@dataclass
class RunManifest:
    program: str
    topology: str
    datasets: dict = field(default_factory=dict)
    scenario: int = 2
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "p4mr-out"

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        base = Path(path).parent
        m = cls(**doc)
        m.program = str(base / m.program)
        m.topology = str(base / m.topology)
        m.datasets = {k: str(base / v) for k, v in m.datasets.items()}
        return m


PARAM_FLAGS = {
    "mtu": "mtu",
    "rate": "host_rate_bps",
    "cpu_map": "cpu_map_s",
    "cpu_reduce": "cpu_reduce_s",
    "wc_slots": "wc_slots",
    "setup": "host_setup_s",
    "pipeline": "pipeline",
}


def sim_config(scenario: int, seed: int, params: dict) -> SimConfig:
    cfg = SimConfig(scenario=scenario, seed=seed)
    for key, value in params.items():
        if value is None:
            continue
        if key not in PARAM_FLAGS:
            raise P4mrError(f"unknown parameter {key!r}")
        setattr(cfg, PARAM_FLAGS[key], value)
    return cfg


def resolve_datasets(job, program_path: str, overrides: dict) -> dict[int, list[int]]:
    """Store label -> items. Explicit paths (keyed by label name or locator) win;
    otherwise the locator path is read relative to the program file."""
    words = word_stores(job.dag.nodes)
    base = Path(program_path).parent
    out = {}
    for n in job.dag.nodes:
        if n.func_type != STORE:
            continue
        path = overrides.get(n.label_name) or overrides.get(n.params["locator"])
        if path is None:
            path = base / n.path
        out[n.label_index] = load_dataset(path, n.label_index in words, n.value_type)
    return out


def write_artifacts(job, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = {
        "ast.json": ast_to_json(job.ast),
        "dag.json": json.dumps(job.dag.to_dict(), indent=2, sort_keys=True),
        "placement.json": json.dumps(job.plan.to_dict(), indent=2, sort_keys=True),
        "routing.json": json.dumps([job.tables[s].to_dict() for s in sorted(job.tables)],
                                   indent=2, sort_keys=True),
        "switch_configs.json": json.dumps([c.to_dict() for c in job.configs],
                                          indent=2, sort_keys=True),
    }
    paths = []
    for name, text in docs.items():
        p = out_dir / name
        p.write_text(text + "\n", encoding="utf-8")
        paths.append(p)
    return paths


def placement_summary(job) -> str:
    names = {h.id: h.name for h in job.topo.hosts}
    names.update({s.id: s.name for s in job.topo.switches})
    lines = []
    for n in job.dag.nodes:
        where = names[job.plan.assignment[n.label_index]]
        lines.append(f"  {n.label_index:3d} {n.label_name:<12} {n.func_type:<5} -> {where}")
    return "\n".join(lines)


def check_results(job, datasets, report) -> tuple[bool, str]:
    """Compare the simulated sink value against a host-side fold of the inputs."""
    dag = job.dag
    words = word_stores(dag.nodes)
    aggregates = {}
    for s, items in datasets.items():
        aggregates[s] = Counter(items) if s in words else sum(items)
    sink = dag.sinks[0]
    expected = sink_value(dag, evaluate(dag, aggregates), sink)
    got = report.results[dag.nodes[sink].label_name]
    if not isinstance(expected, dict):
        return got == expected, f"expected {expected}, got {got}"
    expected = {item_word(k): c for k, c in expected.items()}
    wrong = [w for w, c in got.items() if expected.get(w) != c]
    total_expected = sum(expected.values())
    conserved = sum(got.values()) + report.collisions == total_expected
    ok = not wrong and conserved
    return ok, (f"{len(got)} keys reported, {len(expected)} expected, "
                f"{report.collisions} collided items, mismatched keys {wrong[:5]}")


# -- subcommands --------------------------------------------------------------

def cmd_compile(args) -> int:
    program = Path(args.program).read_text(encoding="utf-8")
    topo = load_topology(Path(args.topology).read_text(encoding="utf-8"))
    job = compile_program(program, topo)
    paths = write_artifacts(job, Path(args.out))
    print(f"compiled {len(job.dag.nodes)} labels onto {len(job.configs)} switch configs")
    print(placement_summary(job))
    for p in paths:
        print(f"wrote {p}")
    return 0


def _manifest_from_args(args) -> RunManifest:
    if args.manifest:
        m = RunManifest.from_file(args.manifest)
    else:
        if not (args.program and args.topology):
            print("run: --program and --topology are required without --manifest", file=sys.stderr)
            raise SystemExit(2)
        m = RunManifest(args.program, args.topology)
    if args.program and args.manifest:
        m.program = args.program
    if args.topology and args.manifest:
        m.topology = args.topology
    for item in args.data or []:
        key, _, path = item.partition("=")
        m.datasets[key] = path
    if args.scenario is not None:
        m.scenario = args.scenario
    if args.seed is not None:
        m.seed = args.seed
    if args.out is not None:
        m.out = args.out
    for key in PARAM_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            m.params[key] = v
    return m


def cmd_run(args) -> int:
    m = _manifest_from_args(args)
    program = Path(m.program).read_text(encoding="utf-8")
    topo = load_topology(Path(m.topology).read_text(encoding="utf-8"))
    job = compile_program(program, topo)
    datasets = resolve_datasets(job, m.program, m.datasets)
    cfg = sim_config(m.scenario, m.seed, m.params)
    started = time.perf_counter()
    report = run(job, datasets, cfg)
    wall = time.perf_counter() - started
    out = Path(m.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.meta.json").write_text(
        json.dumps({"wall_seconds": wall, "events": report.events}, indent=2) + "\n",
        encoding="utf-8")
    print(f"scenario {cfg.scenario}  jct {report.jct:.9f} s  events {report.events}")
    for name, value in sorted(report.results.items()):
        if isinstance(value, dict):
            top = sorted(value.items(), key=lambda kv: (-kv[1], kv[0]))[:10]
            print(f"{name} = {len(value)} words; top: " + ", ".join(f"{w}:{c}" for w, c in top))
            print(f"collisions {report.collisions}")
        else:
            print(f"{name} = {value}")
    ok, detail = check_results(job, datasets, report)
    print(("PASS" if ok else "FAIL") + f" host-side oracle: {detail}")
    return 0 if ok else 1


def chain_program(n: int) -> str:
    """n stores on h1..hn folded by a chain of binary SUMs."""
    lines = [f'A{i} := store<uint_64>("h{i + 1}:part{i}");' for i in range(n)]
    if n == 1:
        lines.append("R := MAP(A0, IDENT);")
        return "\n".join(lines) + "\n"
    prev = "A0"
    for i in range(1, n):
        lines.append(f"S{i} := SUM({prev}, A{i});")
        prev = f"S{i}"
    return "\n".join(lines) + "\n"


def simulate_point(n: int, K: int, scenario: int, cfg: SimConfig, capacity: float, delay: float):
    topo = star_topology(n, capacity, delay)
    job = compile_program(chain_program(n), topo)
    q = K // n
    data = {i: generate_integers(q, cfg.seed * 1000 + i) for i in range(n)}
    return run(job, data, replace(cfg, scenario=scenario)).jct


def _sweep_group(task):
    n, K, scenarios, cfg, capacity, delay = task
    sims = {sc: simulate_point(n, K, sc, cfg, capacity, delay) for sc in sorted(set(scenarios) | {1})}
    params = cost_model.CostParams(C=capacity, n=n, K=K, M=cfg.mtu, c_m=cfg.cpu_map_s,
                                   c_r=cfg.cpu_reduce_s, setup_s=cfg.host_setup_s)
    j1 = cost_model.jct(params, 1)
    rows = []
    for sc in scenarios:
        j = cost_model.jct(params, sc)
        rows.append({"scenario": sc, "n": n, "K": K, "C": capacity, "jct": j,
                     "speedup_vs_S1": cost_model.speedup(j1, j), "jct_sim": sims[sc],
                     "speedup_sim_vs_S1": cost_model.speedup(sims[1], sims[sc])})
    return rows


SWEEP_COLUMNS = ("scenario", "n", "K", "C", "jct", "speedup_vs_S1", "jct_sim", "speedup_sim_vs_S1")


def sweep_rows(vary: str, values, n: int, K: int, scenario: int, cfg: SimConfig,
               capacity: float = 1e9, delay: float = 1e-6, jobs: int = 1) -> list[dict]:
    if vary == "n":
        tasks = [(int(v), K, [scenario], cfg, capacity, delay) for v in values]
    elif vary == "K":
        tasks = [(n, int(v), [scenario], cfg, capacity, delay) for v in values]
    elif vary == "scenario":
        tasks = [(n, K, [int(v) for v in values], cfg, capacity, delay)]
    else:
        raise P4mrError(f"cannot vary {vary!r}; choose n, K or scenario")
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            groups = list(pool.map(_sweep_group, tasks))
    else:
        groups = [_sweep_group(t) for t in tasks]
    rows = [r for g in groups for r in g]
    rows.sort(key=lambda r: (r["scenario"], r["n"], r["K"]))
    return rows


def cmd_sweep(args) -> int:
    defaults = {"n": "3,6,12,24", "K": "12000,24000,120000", "scenario": "1,2,3"}
    values = [float(v) if args.vary == "K" else int(v)
              for v in (args.values or defaults[args.vary]).split(",")]
    params = {k: getattr(args, k) for k in PARAM_FLAGS}
    cfg = sim_config(args.scenario or 2, args.seed or 0, params)
    rows = sweep_rows(args.vary, values, args.n, args.K, args.scenario or 2, cfg,
                      args.capacity, args.delay, args.jobs)
    text = cost_model.rows_to_csv(rows, SWEEP_COLUMNS)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_model(args) -> int:
    C = args.capacity
    r = cost_model.equilibrium_rate(C)
    print(f"capacity            {C:.6g} bit/s")
    print(f"equilibrium rate    {r:.10g} bit/s  (C/e)")
    print(f"throughput penalty  {cost_model.throughput_penalty(C):.10g} bit/s  (C(1-1/e))")
    p = cost_model.CostParams(C=C, n=args.n, K=args.K, M=args.mtu or 1500,
                              c_m=args.cpu_map if args.cpu_map is not None else 1e-6,
                              c_r=args.cpu_reduce if args.cpu_reduce is not None else 2e-6,
                              setup_s=args.setup or 0.0)
    j1 = cost_model.jct(p, 1)
    for sc in cost_model.SCENARIOS:
        j = cost_model.jct(p, sc)
        print(f"scenario {sc}  jct {j:.9g} s  speedup vs S1 {cost_model.speedup(j1, j):.6g}")
    return 0


def _add_params(p):
    p.add_argument("--scenario", type=int, choices=(1, 2, 3))
    p.add_argument("--seed", type=int)
    p.add_argument("--mtu", type=int)
    p.add_argument("--rate", type=float, help="scenario 3 host rate cap, bit/s (default C/e)")
    p.add_argument("--cpu-map", dest="cpu_map", type=float, help="seconds per item")
    p.add_argument("--cpu-reduce", dest="cpu_reduce", type=float, help="seconds per item")
    p.add_argument("--wc-slots", dest="wc_slots", type=int)
    p.add_argument("--setup", type=float, help="per-host job launch time, seconds")
    p.add_argument("--pipeline", choices=("timed", "line_rate"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p4mr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="parse, place and route a program")
    p.add_argument("--program", required=True)
    p.add_argument("--topology", required=True)
    p.add_argument("--out", default="p4mr-out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="compile and simulate a job")
    p.add_argument("--manifest")
    p.add_argument("--program")
    p.add_argument("--topology")
    p.add_argument("--data", action="append", metavar="LABEL=PATH",
                   help="dataset for a store label (or its locator)")
    p.add_argument("--out")
    _add_params(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="simulated and analytic JCT over a parameter range")
    p.add_argument("--vary", choices=("n", "K", "scenario"), required=True)
    p.add_argument("--values", help="comma separated")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--K", type=int, default=120000)
    p.add_argument("--capacity", type=float, default=1e9)
    p.add_argument("--delay", type=float, default=1e-6)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _add_params(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("model", help="print the analytic cost model")
    p.add_argument("--capacity", type=float, default=1e9)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--K", type=float, default=1e7)
    _add_params(p)
    p.set_defaults(func=cmd_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except P4mrError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
