"""Command line: ``run``, ``synth`` and ``importance``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigFieldError, HarnessConfig
from .data import SYNTH_SCHEMAS, ConfigError, synth_pool_stream
from .report import (
    format_table,
    importance_table,
    load_artifact,
    permutation_importance,
    read_csv,
    stem_for,
    write_comparison,
    write_csv,
)
from .scheduler import RunFailedError, run_comparison

log = logging.getLogger("alschedule")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _load(path, args):
    cfg = HarnessConfig.load(path)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.parallel is not None:
        cfg.parallel = args.parallel
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def _report_config_error(exc):
    print("invalid configuration:", file=sys.stderr)
    for field, msg in getattr(exc, "problems", [("config", str(exc))]):
        print(f"  {field}: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args):
    try:
        cfg = _load(args.config, args)
        factory = cfg.stream_factory()
        streams = {s: factory(s) for s in cfg.seeds}
        first = streams[cfg.seeds[0]]
        T = len(first.pools)
        cfg.validate(pool_sizes=[len(p) for st in streams.values() for p in st.pools],
                     feature_names=first.feature_names)
        cfgs = cfg.experiment_configs(T, first.feature_names)
    except (ConfigFieldError, ConfigError) as exc:
        return _report_config_error(exc)
    out = Path(cfg.out)
    if not out.is_absolute() and args.out is None:
        out = cfg.base_dir / out
    try:
        comparison = run_comparison(factory, cfgs, cfg.seeds, parallel=cfg.parallel)
    except RunFailedError as exc:
        print(f"run failed: {exc.message} (fingerprint {exc.fingerprint})", file=sys.stderr)
        return EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.dumps(), encoding="utf-8")
    write_comparison(out, comparison, streams)
    cols = ["config", "log_auc", "auc", "asd", "wasd", "ftc"]
    cols += [f"mse_{c}" for c in cfgs[0].checkpoints] + ["p_vs_baseline", "significance"]
    print(format_table(comparison.table(), cols))
    print(f"\nwrote {out}")
    return EXIT_OK


def cmd_synth(args):
    try:
        cfg = _load(args.config, args)
    except (ConfigFieldError, ConfigError) as exc:
        return _report_config_error(exc)
    if args.out is None:
        print("synth needs --out", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    seed = cfg.seeds[0]
    stream = synth_pool_stream(cfg.synthetic, seed)
    write_synthetic(stream, out)
    print(f"wrote {len(stream.pools)} pools of {len(stream.pools[0])} samples to {out}")
    return EXIT_OK


def write_synthetic(stream, out):
    """Pools as sensor-style CSVs (raw attributes, one file per round) plus labels."""
    out = Path(out)
    names = list(stream.feature_names)
    gyn_cols = [i for i, n in enumerate(names) if n.startswith("status.gyn=")]
    gyn_vals = [names[i].split("=", 1)[1] for i in gyn_cols]
    attr_cols = [a.name for s in SYNTH_SCHEMAS for a in s.attributes]
    header = ["event_id", "case_id", "timestamp"] + attr_cols
    label_rows = []
    for pool in stream.pools:
        rows = []
        for i, (case, ts) in enumerate(pool.keys()):
            x = pool.X[i]
            gyn = gyn_vals[int(max(range(len(gyn_cols)), key=lambda k: x[gyn_cols[k]]))]
            rows.append([f"e{pool.round:03d}-{i:04d}", case, ts] + list(x[:len(attr_cols) - 1]) + [gyn])
        write_csv(out / f"pool_{pool.round:03d}.csv", header, rows)
        label_rows.extend([c, t, y] for (c, t), y in zip(pool.keys(), stream.oracle(pool.keys())))
    write_csv(out / "labels.csv", ["case_id", "timestamp", "label"], label_rows)
    write_csv(out / "holdout.csv", ["case_id", "timestamp"] + names + ["label"],
              [[c, t] + list(x) + [y] for (c, t), x, y in zip(stream.test.keys, stream.test.X, stream.test.y)])
    for schema in SYNTH_SCHEMAS:
        lines = [f'sensor = "{schema.sensor_name}"']
        for a in schema.attributes:
            lines += ["", "[[attributes]]", f'name = "{a.name}"', f'kind = "{a.kind}"']
            if a.domain is not None:
                dom = ", ".join(f'"{v}"' if isinstance(v, str) else repr(float(v)) for v in a.domain)
                lines.append(f"domain = [{dom}]")
        (out / f"{schema.sensor_name}.toml").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_importance(args):
    run_dir = Path(args.run_dir)
    art_dir = run_dir / "artifacts"
    if args.repeats < 1:
        print("--repeats must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.run:
        path = art_dir / f"{args.run}.json"
    else:
        path = _default_artifact(run_dir)
    if path is None or not path.is_file():
        print(f"no run artifact found ({path or art_dir})", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        model, X, y, names = load_artifact(path)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot load artifact {path}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    seed = 0 if args.seed is None else args.seed
    mean, sd = permutation_importance(model, X, y, repeats=args.repeats, seed=seed)
    rows = importance_table(names, mean, sd)
    out = run_dir / "importance" / f"{path.stem}.csv"
    write_csv(out, ["rank", "feature", "importance", "sd"], rows)
    print(format_table(rows, ["rank", "feature", "importance", "sd"], floats="{:.4f}"))
    print(f"\nwrote {out}")
    return EXIT_OK


def _default_artifact(run_dir):
    """The first seed's run of the first non-baseline config (first config if all are random)."""
    try:
        rows = read_csv(run_dir / "comparison.csv")
        runs = read_csv(run_dir / "runs.csv")
    except OSError:
        return None
    if not rows:
        return None
    pick = next((r for r in rows if r["select"] != "random"), rows[0])["config"]
    run = next((r for r in runs if r["config"] == pick), None)
    if run is None:
        return None
    return run_dir / "artifacts" / f"{stem_for(pick, run['seed'], run['repeat'])}.json"


def build_parser():
    p = argparse.ArgumentParser(prog="alschedule", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--parallel", type=int, help="concurrent (config, seed) runs")
    common.add_argument("--out", help="output directory")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress per-round progress lines")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a comparison and write CSV reports")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("synth", parents=[common], help="write a synthetic stream as CSV files")
    s.add_argument("config")
    s.set_defaults(func=cmd_synth)
    i = sub.add_parser("importance", parents=[common], help="permutation importance of a saved run")
    i.add_argument("run_dir")
    i.add_argument("--repeats", type=int, default=5)
    i.add_argument("--run", help="artifact stem, e.g. di15_qbc_boot__seed0__rep0")
    i.set_defaults(func=cmd_importance)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
