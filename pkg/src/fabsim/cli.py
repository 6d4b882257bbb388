"""Command-line entry point ``fabsim``."""
from __future__ import annotations

import argparse
import csv
import glob
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigurationError, FabsimError

VERBS = ("gen-wall", "plan", "run", "bench-slq", "bench-icp", "report")


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config, overrides):
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    cfg = json.loads(json.dumps(config))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(value)
    return cfg


def parse_seeds(text):
    """``"7"`` or an inclusive range ``"1..10"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(text)]
    except ValueError:
        raise ConfigurationError(f"invalid seed range {text!r}; use N or A..B") from None


def max_workers(requested=None):
    cap = os.environ.get("FABSIM_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigurationError(f"FABSIM_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def _worker_init():
    from threadpoolctl import threadpool_limits

    threadpool_limits(1)


def _run_one(cfg):
    from .sim.scenarios import execute_scenario

    m = execute_scenario(cfg)
    return m.seed, m.status, m.cause


def build_parser():
    p = _Parser(prog="fabsim", description="Mobile in situ fabrication simulator: planning, scenarios and benchmarks.")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)

    g = sub.add_parser("gen-wall", help="generate the parametric brick wall and write its bricks")
    g.add_argument("--config", help="wall parameters JSON, or a scenario config with a 'wall' object")
    g.add_argument("--out", default="out", help="output directory (default: out)")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a wall parameter")

    pl = sub.add_parser("plan", help="plan base stations and primitive programs for a brick-wall config")
    pl.add_argument("--config", required=True, help="brick-wall scenario config JSON")
    pl.add_argument("--out", default="out", help="output directory (default: out)")
    pl.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")

    r = sub.add_parser("run", help="execute a scenario (brickwall, mesh, ee_hold)")
    r.add_argument("--config", required=True, help="scenario config JSON")
    r.add_argument("--out", help="output directory (default: the config's output_dir)")
    grp = r.add_mutually_exclusive_group()
    grp.add_argument("--seed", type=int, help="single seed (default: the config's seed)")
    grp.add_argument("--seeds", help="inclusive seed range A..B run in a worker pool")
    r.add_argument("--threads", type=int, help="worker processes for --seeds (capped by FABSIM_THREADS)")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry, e.g. noise=zero")

    b = sub.add_parser("bench-slq", help="time SLQ iterations against the horizon length")
    b.add_argument("--horizons", default="50,100,200,400", help="comma-separated horizons")
    b.add_argument("--iterations", type=int, default=5, help="SLQ iterations per solve")
    b.add_argument("--repeats", type=int, default=5, help="solves per horizon, best mean kept")
    b.add_argument("--out", default="out", help="output directory (default: out)")

    i = sub.add_parser("bench-icp", help="ICP recovery of random transforms on structured scenes")
    i.add_argument("--trials", type=int, default=100, help="number of random trials")
    i.add_argument("--seed", type=int, default=0, help="base seed")
    i.add_argument("--points", type=int, default=1000, help="points per scene")
    i.add_argument("--sigma", type=float, default=0.0, help="point noise standard deviation, metres")
    i.add_argument("--out", default="out", help="output directory (default: out)")

    rep = sub.add_parser("report", help="collect run summaries below a directory into report.csv")
    rep.add_argument("--input", required=True, help="directory holding *_summary.json files (searched recursively)")
    rep.add_argument("--out", help="output directory (default: the input directory)")
    return p


def _load_json(path):
    if path is None:
        return {}
    from .sim.scenarios import load_config

    return load_config(path)


def cmd_gen_wall(a):
    from .building.wall import ParametricWall, generate_wall

    doc = _load_json(a.config)
    doc = doc.get("wall", doc) if "scenario" in doc else doc
    doc = apply_overrides(doc, a.set)
    wall = ParametricWall.from_dict(doc)
    tasks = generate_wall(wall)
    os.makedirs(a.out, exist_ok=True)
    with open(os.path.join(a.out, "wall.json"), "w") as fh:
        json.dump(wall.to_dict(), fh, indent=2)
    with open(os.path.join(a.out, "bricks.json"), "w") as fh:
        json.dump([t.to_dict() for t in tasks], fh)
    with open(os.path.join(a.out, "bricks.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["brick_id", "course", "leaf", "x", "y", "z", "yaw", "supports"])
        for t in tasks:
            R = t.pose.rotation
            w.writerow([t.brick_id, t.course, t.leaf, *map(repr, map(float, t.pose.translation)),
                        repr(math.atan2(R[1, 0], R[0, 0])), " ".join(map(str, t.supports))])
    print(f"{len(tasks)} bricks in {wall.courses} courses written to {a.out}")
    return 0


def cmd_plan(a):
    from .sim.scenarios import plan_for, resolve_config

    cfg = resolve_config(apply_overrides(_load_json(a.config), a.set))
    if cfg["scenario"] != "brickwall":
        raise ConfigurationError("plan needs a brickwall scenario config")
    _, tasks, plan = plan_for(cfg)
    os.makedirs(a.out, exist_ok=True)
    plan.save(os.path.join(a.out, "plan.json"))
    with open(os.path.join(a.out, "stations.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station", "x", "y", "theta", "bricks"])
        for k, (s, ids) in enumerate(zip(plan.stations, plan.assignments)):
            w.writerow([k, repr(s.x), repr(s.y), repr(s.theta), len(ids)])
    print(f"{len(plan.stations)} stations in {plan.passes} passes for {len(plan.order)} bricks written to {a.out}")
    return 0


def cmd_run(a):
    from .sim.scenarios import resolve_config

    cfg = apply_overrides(_load_json(a.config), a.set)
    base_out = a.out or cfg.get("output_dir", "out")
    seeds = parse_seeds(a.seeds) if a.seeds else [a.seed if a.seed is not None else cfg.get("seed", 0)]
    jobs = []
    for s in seeds:
        c = dict(cfg, seed=s, output_dir=os.path.join(base_out, f"seed_{s}"))
        resolve_config(c)  # validate before starting any work
        jobs.append(c)
    n = min(max_workers(a.threads), len(jobs))
    if n == 1:
        _worker_init()
        results = [_run_one(c) for c in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n, initializer=_worker_init) as ex:
            results = list(ex.map(_run_one, jobs))
    failed = [(s, cause) for s, status, cause in results if status != "ok"]
    for s, status, _ in results:
        print(f"seed {s}: {status} -> {os.path.join(base_out, f'seed_{s}')}")
    if failed:
        s, cause = failed[0]
        print(f"fabsim: run failed for seed {s}: {cause}", file=sys.stderr)
        return 2
    return 0


def cmd_bench_slq(a):
    from .bench import bench_slq, linear_fit_r2

    try:
        horizons = [int(h) for h in a.horizons.split(",") if h.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid horizon list {a.horizons!r}") from None
    if len(horizons) < 2 or min(horizons) < 1:
        raise ConfigurationError("bench-slq needs at least two positive horizons")
    rows = bench_slq(horizons, a.iterations, a.repeats)
    os.makedirs(a.out, exist_ok=True)
    path = os.path.join(a.out, "bench_slq.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "time_per_iteration_s"])
        for r in rows:
            w.writerow([r["horizon"], repr(r["time_per_iteration_s"])])
    slope, icpt, r2 = linear_fit_r2([r["horizon"] for r in rows], [r["time_per_iteration_s"] for r in rows])
    print(f"per-iteration time = {slope * 1e6:.3f} us * N + {icpt * 1e3:.3f} ms, R^2 = {r2:.4f} ({path})")
    return 0


def cmd_bench_icp(a):
    import numpy as np

    from .bench import bench_icp

    rows = bench_icp(a.trials, a.seed, a.points, a.sigma)
    os.makedirs(a.out, exist_ok=True)
    path = os.path.join(a.out, "bench_icp.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "translation_error_m", "rotation_error_deg", "iterations"])
        for r in rows:
            w.writerow([r["trial"], repr(r["translation_error_m"]), repr(r["rotation_error_deg"]), r["iterations"]])
    te = np.array([r["translation_error_m"] for r in rows])
    re = np.array([r["rotation_error_deg"] for r in rows])
    ok = int(np.sum((te <= 1e-3) & (re <= 0.1)))
    print(f"{ok}/{len(rows)} within 1 mm / 0.1 deg; worst {te.max() * 1e3:.3g} mm, {re.max():.3g} deg ({path})")
    return 0


def cmd_report(a):
    if not os.path.isdir(a.input):
        raise ConfigurationError(f"input directory not found: {a.input}")
    files = sorted(glob.glob(os.path.join(a.input, "**", "*_summary.json"), recursive=True))
    if not files:
        raise ConfigurationError(f"no run summaries under {a.input}")
    rows = []
    for f in files:
        with open(f) as fh:
            doc = json.load(fh)
        for name, st in sorted(doc["series"].items()):
            rows.append([doc["scenario"], doc["seed"], doc["status"], name, st["n"], repr(st["max"]), repr(st["p99"]), repr(st["mean"])])
    rows.sort(key=lambda r: (r[0], r[1], r[3]))
    out = a.out or a.input
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "report.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "seed", "status", "series", "n", "max", "p99", "mean"])
        w.writerows(rows)
    for r in rows:
        print(f"{r[0]:>10} seed {r[1]:>4} {r[2]:>7} {r[3]:<22} max {float(r[5]):10.4g}  mean {float(r[7]):10.4g}")
    print(f"{len(files)} runs summarised in {path}")
    return 0


COMMANDS = {
    "gen-wall": cmd_gen_wall,
    "plan": cmd_plan,
    "run": cmd_run,
    "bench-slq": cmd_bench_slq,
    "bench-icp": cmd_bench_icp,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.verb is None:
            parser.print_help(sys.stderr)
            return 1
        return COMMANDS[a.verb](a)
    except ConfigurationError as exc:
        print(f"fabsim: error: {exc}", file=sys.stderr)
        return 1
    except FabsimError as exc:
        print(f"fabsim: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"fabsim: failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
