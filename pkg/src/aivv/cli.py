"""Command line entry point: ``aivv gen|train|run|ablate|batch|report``.

Every command writes into one output directory that starts with
``manifest.json``. Settings resolve as flag, then environment variable, then
``--config`` JSON file, then built-in default. API keys are read from the
environment only.
"""

from __future__ import annotations

import argparse
import dataclasses
import enum
import json
import logging
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import report
from .agents import make_backend
from .engine import Engine, EngineConfig, build_engine
from .orchestrator import EventLog, Mode, PipelineConfig, run_dataset, run_stream
from .telemetry import Scenario, dataset_for, load_dataset, make_windows, save_dataset

log = logging.getLogger("aivv")

EXIT_ERROR = 2
EXIT_DEGRADED = 3
ENV_PREFIX = "AIVV_"


class CliError(RuntimeError):
    """Problem the user can fix; printed without a traceback."""


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- settings --------------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise CliError(f"config file not found: {path}")
    cfg = json.loads(path.read_text(encoding="utf-8"))
    if any("key" in k.lower() for k in _flatten(cfg)):
        raise CliError("API keys belong in the environment, not in the config file")
    return cfg


def _flatten(d, prefix=""):
    for k, v in d.items():
        yield prefix + k
        if isinstance(v, dict):
            yield from _flatten(v, prefix + k + ".")


def setting(args, name, cfg: dict, default=None, cast=str):
    """Flag > ``AIVV_<NAME>`` env var > config file > default."""
    flag = getattr(args, name, None)
    if flag is not None:
        return flag
    env = os.environ.get(ENV_PREFIX + name.upper())
    if env is not None:
        return cast(env)
    if name in cfg:
        return cast(cfg[name])
    return default


def engine_config(args, cfg: dict) -> EngineConfig:
    overrides = dict(cfg.get("engine", {}))
    epochs = setting(args, "epochs", cfg, None, int)
    if epochs is not None:
        overrides["epochs"] = epochs
    return EngineConfig(**overrides)


def prepare_out(args, cfg: dict, name: str) -> Path:
    out = Path(setting(args, "out", cfg, f"runs/{name}"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, args, cfg: dict, **resolved) -> Path:
    """Written first so every output directory records how it was produced."""
    manifest = {"command": args.command, "config_file": args.config, "output_dir": str(out),
                "tool_version": _version(), "argv": {k: v for k, v in vars(args).items() if k != "func"},
                "config": cfg, **resolved}
    return write_json(out / "manifest.json", manifest)


def _dataset(path):
    try:
        return load_dataset(path)
    except FileNotFoundError as exc:
        raise CliError(f"{exc}; create one with `aivv gen --scenario hover --seed 1 --out {path}`") from None


# -- commands ----------------------------------------------------------------------

def cmd_gen(args, cfg) -> int:
    scenario = setting(args, "scenario", cfg, "hover")
    seed = setting(args, "seed", cfg, 0, int)
    fault = setting(args, "fault", cfg, "default")
    target = Path(args.out) if args.out else Path(f"runs/gen/{scenario}_{seed}.csv")
    write_manifest(target.parent, args, cfg, scenario=scenario, seeds=[seed], fault=fault)
    ds = dataset_for(scenario, seed, fault)
    save_dataset(ds, target)
    onset = ds.fault.onset if ds.fault else None
    print(f"wrote {target} ({len(ds)} steps, scenario={ds.scenario.value}, fault onset={onset})")
    return 0


def cmd_train(args, cfg) -> int:
    ds = _dataset(args.dataset)
    seed = setting(args, "seed", cfg, ds.seed, int)
    ecfg = engine_config(args, cfg)
    target = Path(args.out) if args.out else Path(args.dataset).with_suffix(".engine.json")
    write_manifest(target.parent, args, cfg, engine=ecfg, seeds=[seed], dataset=str(args.dataset))
    train, test = make_windows(ds)
    engine = build_engine(train, ecfg, seed=seed)
    engine.save(target)
    print(f"trained on {len(train)} pairs ({len(train) - round(len(train) * ecfg.cal_ratio)} fit, "
          f"{round(len(train) * ecfg.cal_ratio)} cal); bound={engine.conformal_bound:.4f}; wrote {target}")
    return 0


def cmd_run(args, cfg) -> int:
    ds = _dataset(args.dataset)
    seed = setting(args, "seed", cfg, ds.seed, int)
    mode = Mode(setting(args, "mode", cfg, "full"))
    agents = setting(args, "agents", cfg, "stub")
    ecfg = engine_config(args, cfg)
    out = prepare_out(args, cfg, f"run_{mode.value}_{seed}")
    pcfg = PipelineConfig(mode, seed)
    write_manifest(out, args, cfg, engine=ecfg, pipeline=pcfg, seeds=[seed], agents=agents,
                   dataset=str(args.dataset), checkpoint=args.checkpoint)
    train, test = make_windows(ds)
    if args.checkpoint:
        try:
            engine = Engine.load(args.checkpoint)
        except FileNotFoundError as exc:
            raise CliError(f"{exc}; build one with `aivv train --dataset {args.dataset} "
                           f"--out {args.checkpoint}`") from None
    else:
        engine = build_engine(train, ecfg, seed=seed)
    events = EventLog()
    metrics, records, _ = run_stream(engine, ds, train, test, pcfg, make_backend(agents), events)
    events.write(out / "events.jsonl")
    write_json(out / "metrics.json", metrics.to_dict())
    write_json(out / "records.json", records)
    report.export_trace_csv(records, out / "trace.csv")
    summary = report.build_vv_summary(events)
    (out / "vv_summary.txt").write_text(summary.render_text() + "\n", encoding="utf-8")
    write_json(out / "vv_summary.json", summary.to_dict())
    print(f"mode={mode.value} accuracy={metrics.accuracy:.3f} TP={metrics.tp} FP={metrics.fp} "
          f"TN={metrics.tn} FN={metrics.fn} seed_success={metrics.seed_success} -> {out}")
    return _degraded_exit(metrics.degraded)


def _table(rows) -> str:
    lines = [f"{'mode':<10} {'seed_success':>12} {'accuracy':>9} {'TP':>4} {'FP':>4} {'TN':>4} {'FN':>4} "
             f"{'adapt':>5} {'promo':>5}"]
    for mode, m in rows:
        lines.append(f"{mode:<10} {str(m.seed_success):>12} {m.accuracy:9.3f} {m.tp:4d} {m.fp:4d} "
                     f"{m.tn:4d} {m.fn:4d} {m.adaptations:5d} {m.promotions:5d}")
    return "\n".join(lines)


def cmd_ablate(args, cfg) -> int:
    ds = _dataset(args.dataset)
    seed = setting(args, "seed", cfg, ds.seed, int)
    agents = setting(args, "agents", cfg, "stub")
    ecfg = engine_config(args, cfg)
    out = prepare_out(args, cfg, f"ablate_{seed}")
    write_manifest(out, args, cfg, engine=ecfg, seeds=[seed], agents=agents, dataset=str(args.dataset))
    result = run_dataset(ds, seed, tuple(Mode), ecfg, lambda: make_backend(agents))
    write_json(out / "ablation.json", {m: r.to_dict() for m, r in result.metrics.items()})
    print(_table(result.metrics.items()))
    return _degraded_exit(sum(r.degraded for r in result.metrics.values()))


def cmd_batch(args, cfg) -> int:
    n = setting(args, "seeds", cfg, 25, int)
    first = setting(args, "first_seed", cfg, 0, int)
    scenario = Scenario(setting(args, "scenario", cfg, "complex"))
    agents = setting(args, "agents", cfg, "stub")
    mode = setting(args, "mode", cfg, "all")
    modes = tuple(Mode) if mode == "all" else (Mode.MATH_ONLY, Mode(mode))
    modes = tuple(dict.fromkeys(modes))
    ecfg = engine_config(args, cfg)
    seeds = list(range(first, first + n))
    out = prepare_out(args, cfg, f"batch_{scenario.value}_{mode}")
    write_manifest(out, args, cfg, engine=ecfg, seeds=seeds, agents=agents, scenario=scenario,
                   modes=[m.value for m in modes])
    per_seed, failures = [], []
    for s in seeds:
        try:
            r = run_dataset(dataset_for(scenario, s), s, modes, ecfg, lambda: make_backend(agents))
        except Exception as exc:  # noqa: BLE001 - one bad seed must not sink the batch
            log.exception("seed %d failed", s)
            failures.append({"seed": s, "error": repr(exc)})
            print(f"seed {s:3d}: FAILED ({exc})")
            continue
        row = {"seed": s, **{m: r.metrics[m].to_dict() for m in r.metrics}}
        per_seed.append(row)
        print(f"seed {s:3d}: " + "  ".join(f"{m}: acc={r.metrics[m].accuracy:.3f} "
                                          f"ok={int(r.metrics[m].seed_success)}" for m in r.metrics))
    summary = summarize_batch(per_seed, [m.value for m in modes])
    write_json(out / "batch.json", {"summary": summary, "seeds": per_seed, "failures": failures})
    print(format_batch(summary, scenario.value))
    degraded = sum(row[m]["degraded"] for row in per_seed for m in summary["modes"])
    if failures:
        print(f"{len(failures)} seed(s) failed: {[f['seed'] for f in failures]}", file=sys.stderr)
        return EXIT_ERROR
    return _degraded_exit(degraded)


def summarize_batch(per_seed: list, modes: list) -> dict:
    """FVR and mean accuracy per mode; the relative accuracy gain of Full over MathOnly."""
    out = {"modes": {}, "seeds": len(per_seed)}
    for m in modes:
        ok = [row[m]["seed_success"] for row in per_seed]
        acc = [row[m]["accuracy"] for row in per_seed]
        out["modes"][m] = {"fvr_pct": 100.0 * float(np.mean(ok)) if ok else float("nan"),
                           "mean_accuracy": float(np.mean(acc)) if acc else float("nan")}
    if "math" in out["modes"] and "full" in out["modes"] and per_seed:
        a0, a1 = out["modes"]["math"]["mean_accuracy"], out["modes"]["full"]["mean_accuracy"]
        out["accuracy_improvement_pct"] = 100.0 * (a1 - a0) / a0
    return out


def format_batch(summary: dict, scenario: str) -> str:
    lines = [f"{scenario}: {summary['seeds']} seeds",
             f"{'mode':<10} {'FVR %':>7} {'mean acc':>9}"]
    for m, s in summary["modes"].items():
        lines.append(f"{m:<10} {s['fvr_pct']:7.1f} {s['mean_accuracy']:9.3f}")
    if "accuracy_improvement_pct" in summary:
        lines.append(f"accuracy improvement (full vs math): {summary['accuracy_improvement_pct']:+.1f}%")
    return "\n".join(lines)


def cmd_report(args, cfg) -> int:
    run_dir = Path(args.run)
    events_path = run_dir / "events.jsonl"
    if not events_path.exists():
        raise CliError(f"no event log at {events_path}; produce one with `aivv run --out {run_dir}`")
    summary = report.build_vv_summary(events_path)
    text = summary.render_text()
    (run_dir / "vv_summary.txt").write_text(text + "\n", encoding="utf-8")
    write_json(run_dir / "vv_summary.json", summary.to_dict())
    print(text)
    if args.verify_gains:
        if summary.last_proposal is None:
            print("no gain proposal in the log; nothing to verify")
        else:
            manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
            ds = _dataset(manifest["dataset"])
            check = report.verify_gain_proposal(ds.config, summary.last_proposal, ds.fault, ds.noise)
            write_json(run_dir / "gain_check.json", check.to_dict())
            print(f"gain check: peak {check.peak_deviation_before:.2f} -> {check.peak_deviation_after:.2f}, "
                  f"settled {check.settled_before} -> {check.settled_after}")
    return 0


def _degraded_exit(degraded: int) -> int:
    if degraded:
        print(f"{degraded} sample(s) took the degraded fail-safe path", file=sys.stderr)
        return EXIT_DEGRADED
    return 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aivv", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON settings file (flags and AIVV_* env vars take precedence)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True, out_help="output directory"):
        if dataset:
            sp.add_argument("--dataset", required=True, help="CSV written by `gen`")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--epochs", type=int, help="training epochs for the engine")

    sp = sub.add_parser("gen", help="simulate a telemetry dataset")
    sp.add_argument("--scenario", choices=[s.value for s in Scenario])
    sp.add_argument("--fault", choices=["spike", "damper", "none", "default"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="CSV path (a .json sidecar is written next to it)")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="train and calibrate an engine checkpoint")
    common(sp, out_help="checkpoint path")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="label one test stream in a chosen mode")
    common(sp)
    sp.add_argument("--checkpoint", help="engine from `train`; trained on the fly when omitted")
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--agents", choices=["stub", "http"])
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ablate", help="all three modes on one dataset")
    common(sp)
    sp.add_argument("--agents", choices=["stub", "http"])
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("batch", help="independent seeds on a regenerated scenario")
    common(sp, dataset=False)
    sp.add_argument("--seeds", type=int, help="number of seeds")
    sp.add_argument("--first-seed", dest="first_seed", type=int)
    sp.add_argument("--scenario", choices=[s.value for s in Scenario])
    sp.add_argument("--mode", choices=[m.value for m in Mode] + ["all"],
                    help="mode to compare against MathOnly, or all three")
    sp.add_argument("--agents", choices=["stub", "http"])
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("report", help="V&V summary and plot CSVs from a run directory")
    sp.add_argument("--run", required=True, help="directory written by `run`")
    sp.add_argument("--verify-gains", dest="verify_gains", action="store_true",
                    help="re-simulate with the last gain proposal")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, load_config(args.config))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
