"""CSV and JSON writers for comparisons, plus permutation importance."""
from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .metrics import mse
from .regressors import Regressor
from .scheduler import derive_seed


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            values = [row.get(h, "") for h in header] if isinstance(row, dict) else row
            w.writerow([_cell(v) for v in values])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def stem_for(config, seed, repeat):
    safe = re.sub(r"[^A-Za-z0-9_.-]+", "-", config)
    return f"{safe}__seed{seed}__rep{repeat}"


def run_stem(run):
    return stem_for(run.config, run.seed, run.repeat)


def _ordered_union(rows):
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    return keys


def write_comparison(out, comparison, streams):
    """Write every artifact of a comparison under ``out``; returns the paths written."""
    out = Path(out)
    written = []
    runs = sorted(comparison.runs, key=lambda r: ([c.name for c in comparison.configs].index(r.config),
                                                   r.seed, r.repeat))
    run_rows = []
    for r in runs:
        row = {"config": r.config, "seed": r.seed, "repeat": r.repeat,
               "n_labeled": len(r.labeled), "fallback_rounds": len(r.fallbacks)}
        row.update(r.report.row())
        run_rows.append(row)
    write_csv(out / "runs.csv", _ordered_union(run_rows), run_rows)
    written.append(out / "runs.csv")

    table = comparison.table()
    write_csv(out / "comparison.csv", _ordered_union(table), table)
    written.append(out / "comparison.csv")

    pair_cols = ["a", "b", "t", "p", "m", "significant", "stars", "mean_log_diff"]
    write_csv(out / "pairwise.csv", pair_cols, comparison.pairwise)
    written.append(out / "pairwise.csv")

    for r in runs:
        stem = run_stem(r)
        write_csv(out / "curves" / f"{stem}.csv", ["round", "mse"],
                  [(t, v) for t, v in zip(r.report.rounds, r.report.curve)])
        write_csv(out / "schedules" / f"{stem}.csv", ["round", "case_id", "timestamp", "strategy"],
                  r.schedule)
        written += [out / "curves" / f"{stem}.csv", out / "schedules" / f"{stem}.csv"]
        if r.model is not None:
            written.append(_write_json(out / "artifacts" / f"{stem}.json", {
                "config": r.config, "seed": r.seed, "repeat": r.repeat,
                "fingerprint": r.report.fingerprint,
                "regressor": r.model.kind, "params": r.model.params, "fit_seed": r.model.seed,
                "holdout": f"holdout_seed{r.seed}.json",
                "X": r.labeled.X.tolist(), "y": r.labeled.y.tolist(),
            }))
    for seed, stream in streams.items():
        written.append(_write_json(out / "artifacts" / f"holdout_seed{seed}.json", {
            "feature_names": list(stream.feature_names),
            "X": stream.test.X.tolist(), "y": stream.test.y.tolist(),
        }))
    return written


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_artifact(path):
    """Refit the final model of a saved run; returns (model, holdout X, y, feature names)."""
    path = Path(path)
    art = json.loads(path.read_text(encoding="utf-8"))
    hold = json.loads((path.parent / art["holdout"]).read_text(encoding="utf-8"))
    model = Regressor(art["regressor"], art["params"]).fit(np.array(art["X"]), np.array(art["y"]),
                                                           seed=art["fit_seed"])
    return model, np.array(hold["X"]), np.array(hold["y"]), hold["feature_names"]


def permutation_importance(model, X, y, repeats=5, seed=0):
    """Mean and sd of the holdout MSE increase when each column is shuffled."""
    X = np.asarray(X, dtype=float)
    base = mse(y, model.predict(X))
    mean, sd = np.zeros(X.shape[1]), np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        gains = []
        for r in range(repeats):
            rng = np.random.default_rng(derive_seed(seed, "perm", j, r))
            Xp = X.copy()
            Xp[:, j] = rng.permutation(Xp[:, j])
            gains.append(mse(y, model.predict(Xp)) - base)
        mean[j], sd[j] = np.mean(gains), np.std(gains)
    return mean, sd


def importance_table(feature_names, mean, sd):
    order = np.lexsort((np.arange(len(mean)), -mean))
    return [{"rank": i + 1, "feature": feature_names[j], "importance": float(mean[j]), "sd": float(sd[j])}
            for i, j in enumerate(order)]


def format_table(rows, columns, floats="{:.3f}"):
    """Plain fixed-width text table."""
    def fmt(v):
        if isinstance(v, float):
            return "" if math.isnan(v) else floats.format(v)
        return str(v)
    cells = [[fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)
