"""Command-line front end.

Subcommands: ``simulate``, ``sweep``, ``stability``, ``benchmark`` and
``list-experiments``. Exit code 0 on success, 2 for configuration errors,
3 for runtime failures; errors are also printed to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import to_jsonable, write_csv, write_json
from .config import EXPERIMENTS, ConfigError, experiment, load_file, resolve, scenario, sweep_spec
from .coordination import algorithm
from .core import RingGeometry
from .mechanism import (PointCache, benefit_curve, optimize_v_star, run_points, write_benefit_csv,
                        write_optima_json, write_sweep_csv)
from .simulator import SimulationError, order_parameters, run
from .stability import NoFixedPoint, analyse, full_map_roots, max_modulus

OUT_ENV = "DMPC_RING_OUT"
TRAJECTORY_COLUMNS = ("t", "i", "x", "v", "a", "u", "d")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("dmpc_ring")


def _output_root(args, default_name: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV, "runs")) / default_name


def _layers(args, command: str):
    """Configuration layers (experiment manifest, then file) and variant table."""
    layers, variants = [], {"": {}}
    if getattr(args, "experiment", None):
        manifest = experiment(args.experiment)
        if manifest["command"] != command:
            raise ConfigError(f"experiment {args.experiment!r} is run with "
                              f"{manifest['command']!r}, not {command!r}")
        layers.append(manifest.get("config", {}))
        variants = manifest.get("variants", variants)
    if args.config:
        layers.append(load_file(args.config))
    return layers, variants


def _resolve_all(args, command):
    layers, variants = _layers(args, command)
    return {name: resolve(*layers, extra, overrides=args.override or (), seed=args.seed)
            for name, extra in variants.items()}


# ----------------------------------------------------------------------------------------------
# simulate

def trajectory_rows(traj):
    n = traj.v.shape[1]
    idx = np.arange(n)
    for k in range(traj.steps):
        t = k * traj.dt
        for i in idx:
            yield (t, int(i), traj.x[k, i], traj.v[k, i], traj.a[k, i], traj.u[k, i], traj.d[k, i])


def summary(cfg, traj, op):
    deltas = traj.tau_deltas
    return {
        "version": __version__,
        "config": cfg,
        "V": op.V,
        "A": op.A,
        "steps": traj.steps,
        "safety_events": {"count": len(traj.safety_events), "min_gap": float(traj.min_gap.min()),
                          "events": traj.safety_events[:100]},
        "tau": {"rounds": deltas.shape[1],
                "mean_delta_per_round": deltas.mean(axis=0).tolist(),
                "max_delta_per_round": deltas.max(axis=0).tolist()},
    }


def cmd_simulate(args) -> int:
    configs = _resolve_all(args, "simulate")
    root = _output_root(args, args.experiment or "simulate")
    for name, cfg in configs.items():
        sc = scenario(cfg)
        traj = run(sc)
        op = order_parameters(traj, sc.skip)
        out = root / name if name else root
        if cfg["trajectory"]["write"]:
            write_csv(out / "trajectory.csv", TRAJECTORY_COLUMNS, trajectory_rows(traj))
        write_json(out / "summary.json", summary(cfg, traj, op))
        print(json.dumps({"run": name or sc.algorithm.name, "V": op.V, "A": op.A,
                          "safety_events": len(traj.safety_events), "out": str(out)}))
    return EXIT_OK


# ----------------------------------------------------------------------------------------------
# sweep

def cmd_sweep(args) -> int:
    (cfg,) = _resolve_all(args, "sweep").values()
    sw = cfg["sweep"]
    spec = sweep_spec(cfg)
    root = _output_root(args, args.experiment or "sweep")
    cache = PointCache(args.cache) if args.cache else None
    jobs = max(1, args.jobs)
    if sw["mode"] == "benefit":
        rows, sweeps = benefit_curve(spec, jobs, cache)
        for name, (points, optima) in sweeps.items():
            write_sweep_csv(root / f"sweep_{name}.csv", points)
            write_optima_json(root / f"optima_{name}.json", optima)
        write_benefit_csv(root / "benefit.csv", rows)
        for r in rows:
            print(json.dumps(to_jsonable(r)))
    elif sw["mode"] == "optimize":
        for name in sw["algorithms"]:
            points, optima = optimize_v_star(spec, name, jobs, cache, sw["iterations"])
            write_sweep_csv(root / f"sweep_{name}.csv", points)
            write_optima_json(root / f"optima_{name}.json", optima)
            for o in optima:
                print(json.dumps(to_jsonable(o)))
    else:
        rows = []
        for initial in sw["initials"]:
            template = replace(spec.template, initial=initial)
            configs = [replace(template, geometry=RingGeometry(spec.circumference, n),
                               algorithm=algorithm(name, sw["iterations"]),
                               utility=replace(template.utility, v_star=vs))
                       for name in sw["algorithms"] for n in spec.vehicle_counts
                       for vs in spec.v_star_grid]
            for p in run_points(configs, spec.threshold, jobs, cache):
                rows.append((p.algorithm, initial, p.vehicle_count, p.density, p.v_star, p.V, p.A))
        rows.sort()
        write_csv(root / "scan.csv", ("algorithm", "initial", "vehicle_count", "density", "v_star",
                                      "V", "A"), rows)
        for r in rows:
            print(json.dumps(to_jsonable(r)))
    return EXIT_OK


# ----------------------------------------------------------------------------------------------
# stability

ZROOT_COLUMNS = ("k", "re_Bx", "im_Bx", "re_Bv", "im_Bv", "root1", "root2", "abs_root_max",
                 "re_Ba", "im_Ba")


def zroot_rows(spectrum):
    for k in range(spectrum.modes):
        r1, r2 = spectrum.bracket[k]
        yield (k, spectrum.B_x[k].real, spectrum.B_x[k].imag, spectrum.B_v[k].real,
               spectrum.B_v[k].imag, repr(complex(r1)), repr(complex(r2)),
               float(np.abs(spectrum.roots[k]).max()), spectrum.B_a[k].real, spectrum.B_a[k].imag)


def cmd_stability(args) -> int:
    (cfg,) = _resolve_all(args, "stability").values()
    st = cfg["stability"]
    sc = scenario(cfg)
    root = _output_root(args, args.experiment or "stability")
    verdicts, locus = {}, []
    for name in st["algorithms"]:
        spec = algorithm(name, cfg["algorithm"]["iterations"] if name == sc.algorithm.name else None)
        rep = analyse(sc.geometry, spec, sc.utility, sc.vehicle, st["margin"], st["rel_step"])
        write_csv(root / f"zroots_{name}.csv", ZROOT_COLUMNS, zroot_rows(rep.spectrum))
        for k in range(rep.spectrum.modes):
            for b, z in enumerate(rep.spectrum.bracket[k]):
                locus.append((name, k, b, z.real, z.imag))
        entry = {
            "verdict": rep.verdict,
            "max_modulus": max_modulus(rep.spectrum),
            "map_verdict": rep.map_verdict,
            "map_max_modulus": max_modulus(rep.map_spectrum),
            "fixed_point": {"velocity": rep.fixed_point.velocity,
                            "headway": rep.fixed_point.headway,
                            "residual": rep.fixed_point.residual},
            "offsets": rep.jacobian.offsets,
            "beta_x": rep.jacobian.beta_x, "beta_v": rep.jacobian.beta_v,
            "beta_a": rep.jacobian.beta_a,
            "sum_beta_x": float(rep.jacobian.beta_x.sum()),
            "flagged": [list(f) for f in rep.jacobian.flagged],
        }
        if st["map_check"]:
            z = full_map_roots(rep.fixed_point, spec, sc.utility, sc.vehicle)
            entry["full_map_max_modulus"] = float(np.sort(np.abs(z))[-2])
        verdicts[name] = entry
        print(json.dumps({"algorithm": name, "verdict": rep.verdict,
                          "max_modulus": entry["max_modulus"]}))
    write_csv(root / "root_locus.csv", ("algorithm", "k", "branch", "re_z", "im_z"), locus)
    write_json(root / "verdicts.json", {"config": cfg, "algorithms": verdicts})
    return EXIT_OK


# ----------------------------------------------------------------------------------------------
# benchmark

def time_steps(sc, steps: int, warmup: int):
    """Wall time of each full closed-loop step (negotiation and physical update), in ms."""
    stamps = []
    total = steps + warmup + 1
    sc = replace(sc, duration=total * sc.vehicle.dt, transient_skip=0.0)
    run(sc, on_step=lambda *a: stamps.append(time.perf_counter()))
    return np.diff(np.array(stamps))[warmup:warmup + steps] * 1e3


def timing_stats(ms) -> dict:
    p = np.percentile(ms, [50, 90, 99])
    return {"steps": int(len(ms)), "mean_ms": float(ms.mean()), "p50_ms": float(p[0]),
            "p90_ms": float(p[1]), "p99_ms": float(p[2]), "max_ms": float(ms.max())}


def cmd_benchmark(args) -> int:
    (cfg,) = _resolve_all(args, "benchmark").values()
    bm = cfg["benchmark"]
    root = _output_root(args, args.experiment or "benchmark")
    results = []
    for name in bm["algorithms"]:
        for t in bm["iterations"]:
            for n in bm["vehicles"]:
                sc = scenario(cfg, geometry=RingGeometry(cfg["ring"]["circumference"], int(n)),
                              algorithm=algorithm(name, t), initial="uniform")
                stats = timing_stats(time_steps(sc, bm["steps"], bm["warmup"]))
                stats.update(algorithm=name, iterations=t, vehicles=int(n))
                results.append(stats)
                print(json.dumps(stats))
    write_json(root / "timing.json", {"config": cfg, "results": results,
                                      "target_ms": bm["target_ms"],
                                      "soft_limit_ms": bm["soft_limit_ms"]})
    return EXIT_OK


def cmd_list(args) -> int:
    for name, manifest in EXPERIMENTS.items():
        print(f"{name:15s} {manifest['command']:10s} {manifest['description']}")
    return EXIT_OK


# ----------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmpc-ring", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--experiment", help="named experiment manifest (see list-experiments)")
        p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs)")
        p.add_argument("--seed", type=int, help="seed for every random stream")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted config override, e.g. utility.v_star=7.5")
        return p

    common(sub.add_parser("simulate", help="run scenarios; write trajectory CSV and summary JSON"))
    sw = common(sub.add_parser("sweep", help="v* optimisation, benefit curve or density scan"))
    sw.add_argument("--cache", help="directory memoising finished sweep points")
    common(sub.add_parser("stability", help="fixed point, policy derivatives and z-roots"))
    common(sub.add_parser("benchmark", help="per-step wall time"))
    sub.add_parser("list-experiments", help="show the named experiment manifests")
    return parser


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "stability": cmd_stability,
            "benchmark": cmd_benchmark, "list-experiments": cmd_list}


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (SimulationError, NoFixedPoint, FloatingPointError, RuntimeError, OSError,
            ValueError) as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
