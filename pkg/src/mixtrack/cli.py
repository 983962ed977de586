"""Command-line entry point: synth, calibrate, track, eval, compare, bench.

Exit codes: 0 success, 2 usage or validation error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from .benchmarks import (TRACKING_METHODS, optimizer_comparison, summarize, throughput,
                         tracking_comparison, window_from_dataset)
from .calibration import select_model
from .config import RunConfig
from .core import DataError, ProtocolError, Scenario, TrajectoryDataset
from .evaluation import REPORT_KEYS, MatchConfig, evaluate
from .models.params import ModelKind
from .synthesis import DEFAULT_FRAMES, DENSITY, TEMPLATE_KINDS, ScenarioTemplate, corrupt, generate
from .tracking import track

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _finite(doc):
    """Non-finite floats (e.g. MOTP with no matches) become null so the file stays valid JSON."""
    if isinstance(doc, dict):
        return {k: _finite(v) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_finite(v) for v in doc]
    if isinstance(doc, float) and not math.isfinite(doc):
        return None
    return doc


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(_finite(doc), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_rows(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    return cfg.override(seed=args.seed, threads=args.threads)


def _load_inputs(args):
    scenario = Scenario.load(args.scenario)
    obs = TrajectoryDataset.read_csv(args.observations, frame_rate=1.0 / scenario.dt)
    return scenario, obs


def cmd_synth(args) -> int:
    out = _out_dir(args)
    seed = 0 if args.seed is None else args.seed
    tmpl = ScenarioTemplate(args.kind, args.agents, args.density, rng_seed=seed)
    scenario, gt, prov = generate(tmpl, args.model, frames=args.frames)
    obs = corrupt(gt, args.sigma, args.dropout, rng_seed=seed + 1)
    prov.update(observation_sigma=args.sigma, dropout=args.dropout, observation_seed=seed + 1)
    gt.write_csv(out / "ground_truth.csv")
    obs.write_csv(out / "observations.csv")
    scenario.save(out / "scenario.json")
    _write_json(out / "provenance.json", prov)
    print(f"wrote {len(gt)} ground-truth and {len(obs)} observation records to {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    out = _out_dir(args)
    cfg = _run_config(args).override(mode=args.mode, k=args.k)
    scenario, obs = _load_inputs(args)
    end = int(obs.frame.max()) if args.frame is None else args.frame
    window = window_from_dataset(obs, end, cfg.k, cfg.model_constants.v_cap)
    spec = cfg.optimizer
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    result = select_model(window, scenario, spec, cfg.mode, cfg.model_constants, threads=cfg.threads)
    doc = result.to_json()
    doc.pop("wall_time")
    doc["end_frame"] = end
    _write_json(out / "calibration.json", doc)
    print(f"best model {result.best_kind.label}; errors "
          + ", ".join(f"{k.label}={v:.4f}" for k, v in result.per_model_error.items())
          + f"; {result.wall_time:.2f}s")
    return EXIT_OK


def cmd_track(args) -> int:
    out = _out_dir(args)
    cfg = _run_config(args)
    cfg = cfg.override(k=args.k, recalibrate_every=args.recalibrate_every, mode=args.mode,
                       adaptive=None if args.adaptive is None else args.adaptive == "on")
    if args.model == "mixture":
        cfg = replace(cfg, forced_model=None)
    elif args.model is not None:
        cfg = replace(cfg, forced_model=ModelKind.parse(args.model).label)
    scenario, obs = _load_inputs(args)
    res = track(obs, scenario, cfg.tracker())
    res.estimates.write_csv(out / "estimates.csv")
    res.write_diagnostics(out / "diagnostics.csv")
    freq = ", ".join(f"{k}={v:.2f}" for k, v in res.model_frequency().items())
    print(f"steps/sec {res.steps_per_second:.1f}; mean particles {res.mean_particles:.1f}; model frequency {freq}")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    if len(args.gt) != len(args.est):
        raise UsageError("--gt and --est need the same number of files")
    match = MatchConfig(hungarian=args.hungarian)
    rows = []
    for g, e in zip(args.gt, args.est):
        gt = TrajectoryDataset.read_csv(g, source_tag="ground-truth")
        est = TrajectoryDataset.read_csv(e, source_tag="estimate")
        rows.append(evaluate(gt, est, match))
    _write_json(out / "report.json", rows[0] if len(rows) == 1 else rows)
    _write_rows(out / "report.csv", rows, REPORT_KEYS)
    for r in rows:
        print(f"MOTA {r['mota']:.4f} MOTP {r['motp']:.4f} ST {r['success_rate']:.3f} "
              f"IS {r['id_switches']} RMS {r['rms']:.4f}")
    return EXIT_OK


def _pivot(rows, metric):
    table = {}
    for r in rows:
        table.setdefault((r["density"], r["seed"]), {})[r["method"]] = r[metric]
    methods = list(dict.fromkeys(r["method"] for r in rows))
    return [{"density": d, "seed": s, **vals} for (d, s), vals in table.items()], ["density", "seed", *methods]


def cmd_compare(args) -> int:
    from .plotting import plot_metric_vs_density

    out = _out_dir(args)
    cfg = _run_config(args)
    seed0 = cfg.seed
    rows = tracking_comparison(seeds=range(seed0, seed0 + args.seeds), densities=args.densities,
                               methods=args.methods, agents=args.agents, frames=args.frames, model=args.model,
                               template=args.template, sigma=args.sigma, dropout=args.dropout,
                               base=cfg.tracker())
    st, cols = _pivot(rows, "success_rate")
    _write_rows(out / "st.csv", st, cols)
    ids, cols = _pivot(rows, "id_switches")
    _write_rows(out / "is.csv", ids, cols)
    means = []
    for d in args.densities:
        for m in args.methods:
            v = [r["rms"] for r in rows if r["density"] == d and r["method"] == m]
            means.append({"density": d, "method": m, "rms": sum(v) / len(v)})
    _write_rows(out / "rms.csv", means, ("density", "method", "rms"))
    plot_metric_vs_density(means, out / "rms_vs_density.svg")
    header = f"{'density':<8}{'seed':>5}" + "".join(f"{m:>14}" for m in args.methods)
    print("successful tracks (ST) / ID switches (IS)")
    print(header)
    for a, b in zip(st, ids):
        print(f"{a['density']:<8}{a['seed']:>5}"
              + "".join(f"{a[m] * 100:>8.1f}%/{b[m]:>4}" for m in args.methods))
    return EXIT_OK


def cmd_bench(args) -> int:
    out = _out_dir(args)
    cfg = _run_config(args)
    if args.suite == "throughput":
        r = throughput(agents=args.agents, frames=args.frames, seed=cfg.seed, base=cfg.tracker())
        _write_json(out / "throughput.json", r)
        print(f"{r['agents']} agents: {r['steps_per_second']:.1f} steps/sec, "
              f"mean particles {r['mean_particles']:.1f}")
        return EXIT_OK
    from .plotting import plot_ranges

    rows = optimizer_comparison(seeds=range(cfg.seed, cfg.seed + args.seeds), evaluations=args.evaluations,
                                threads=cfg.threads)
    _write_rows(out / "optimizer_runs.csv", rows, ("task", "method", "seed", "error", "evaluations"))
    stats = summarize(rows)
    table = [{"task": t, "method": m, **s} for t, by in stats.items() for m, s in by.items()]
    _write_rows(out / "optimizer_summary.csv", table, ("task", "method", "min", "mean", "max", "median"))
    plot_ranges({t: {m: (s["min"], s["mean"], s["max"]) for m, s in by.items()} for t, by in stats.items()},
                out / "optimizer_ranges.svg")
    print(f"{'task':<14}{'method':<11}{'min':>10}{'mean':>10}{'max':>10}")
    for r in table:
        print(f"{r['task']:<14}{r['method']:<11}{r['min']:>10.3f}{r['mean']:>10.3f}{r['max']:>10.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None, help="random seed (default: config value or 0)")
    shared.add_argument("--config", help="JSON run configuration")
    shared.add_argument("--threads", type=_positive, default=None, help="worker thread cap")
    shared.add_argument("--out-dir", default=".", help="directory for output files")

    p = argparse.ArgumentParser(prog="mixtrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[shared], help="generate a synthetic scenario")
    s.add_argument("--kind", choices=TEMPLATE_KINDS, default="crossing")
    s.add_argument("--model", default="rvo", help="generating model: lin, boids, sf or rvo")
    s.add_argument("--agents", type=_positive, default=8)
    s.add_argument("--density", choices=sorted(DENSITY), default="medium")
    s.add_argument("--frames", type=_positive, default=DEFAULT_FRAMES)
    s.add_argument("--sigma", type=float, default=0.1, help="observation noise std (m)")
    s.add_argument("--dropout", type=float, default=0.0, help="per-record dropout probability")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("calibrate", parents=[shared], help="fit every model to one window")
    c.add_argument("--observations", required=True)
    c.add_argument("--scenario", required=True)
    c.add_argument("--frame", type=int, default=None, help="newest window frame (default: last)")
    c.add_argument("--k", type=_positive, default=None)
    c.add_argument("--mode", choices=("per-agent", "global"), default=None)
    c.set_defaults(func=cmd_calibrate)

    t = sub.add_parser("track", parents=[shared], help="track observations")
    t.add_argument("--observations", required=True)
    t.add_argument("--scenario", required=True)
    t.add_argument("--model", default=None, help="mixture (default) or a forced model")
    t.add_argument("--adaptive", choices=("on", "off"), default=None)
    t.add_argument("--k", type=_positive, default=None)
    t.add_argument("--recalibrate-every", type=_positive, default=None)
    t.add_argument("--mode", choices=("per-agent", "global"), default=None)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", parents=[shared], help="score estimates against ground truth")
    e.add_argument("--gt", nargs="+", required=True)
    e.add_argument("--est", nargs="+", required=True)
    e.add_argument("--hungarian", action="store_true", help="optimal instead of greedy association")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("compare", parents=[shared], help="mixture vs forced single models")
    m.add_argument("--seeds", type=_positive, default=3)
    m.add_argument("--densities", nargs="+", choices=sorted(DENSITY), default=["low", "medium"])
    m.add_argument("--methods", nargs="+", choices=TRACKING_METHODS, default=list(TRACKING_METHODS))
    m.add_argument("--agents", type=_positive, default=50)
    m.add_argument("--frames", type=_positive, default=DEFAULT_FRAMES)
    m.add_argument("--model", default="rvo")
    m.add_argument("--template", choices=TEMPLATE_KINDS, default="random_goals")
    m.add_argument("--sigma", type=float, default=0.1)
    m.add_argument("--dropout", type=float, default=0.0)
    m.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", parents=[shared], help="throughput or optimizer benchmarks")
    b.add_argument("suite", choices=("throughput", "optimizers"))
    b.add_argument("--agents", type=_positive, default=50)
    b.add_argument("--frames", type=_positive, default=100)
    b.add_argument("--seeds", type=_positive, default=10)
    b.add_argument("--evaluations", type=_positive, default=600)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ProtocolError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
