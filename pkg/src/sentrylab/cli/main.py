"""``sentrylab`` command-line entry point.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
failures (I/O, divergence). Each run prints one JSON status line; failures
go to stderr as ``{"status": "error", "code": ..., ...}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..analysis.metrics import gradient_correlation_study
from ..analysis.selection import selection_fraction_series
from ..augment import TransformFamily
from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.model import init_classifier
from ..data import Dataset, load_idx, long_tail, make_synthetic_pair, write_manifest
from ..trainer import (ConfigError, adapt_sentry, expand_grid, grid_summary_csv, read_epochs_csv,
                       read_verdict_log, summary_text, train_source)
from .config import COMMANDS, LEAVES, RunConfig, apply_cell, dump_config, load_config

log = logging.getLogger("sentrylab")

SPLITS = ("source_train", "source_test", "target_train", "target_test")
# training options that affect the source model, used to share it across grid cells
SOURCE_KEYS = ("source_epochs", "batch_size", "optimizer", "lr", "momentum", "weight_decay", "source_sampler")


def load_datasets(cfg: RunConfig) -> dict[str, Dataset]:
    d = cfg.data
    rng = np.random.default_rng([cfg.run.seed, 1])
    if d.kind == "synthetic":
        return make_synthetic_pair(rng, d.synthetic_spec())
    if d.kind == "saved":
        return {name: Dataset.load(Path(d.data_dir) / f"{name}.npz") for name in SPLITS}
    out = {}
    for name in SPLITS:
        domain, split = name.split("_")
        out[name] = load_idx(getattr(d, f"{name}_images"), getattr(d, f"{name}_labels"),
                             n_classes=d.n_classes, domain=domain, split=split)
    if d.target_if is not None:
        out["target_train"], _ = long_tail(rng, out["target_train"], d.target_if, d.class_order, d.target_total)
    for ds in out.values():
        ds.audit.clear()
    return out


def make_family(cfg: RunConfig, target: Dataset) -> TransformFamily:
    return TransformFamily(ops=cfg.augment.ops, ranges=cfg.augment.ranges(), image_shape=target.image_shape)


def initial_model(cfg: RunConfig, data: dict[str, Dataset]):
    m = cfg.model
    if m.init_checkpoint:
        model, _ = load_checkpoint(m.init_checkpoint)
        return model
    rng = np.random.default_rng([cfg.run.seed, 2])
    return init_classifier(rng, data["source_train"].dim, m.hidden, data["source_train"].n_classes,
                           m.temperature, m.activation)


def _write_common(cfg: RunConfig, out: Path, summary: str):
    (out / "resolved.cfg").write_text(dump_config(cfg))
    (out / "summary.txt").write_text(summary)


def cmd_build_data(cfg: RunConfig, out: Path) -> dict:
    data = load_datasets(cfg)
    ddir = out / "data"
    ddir.mkdir(parents=True, exist_ok=True)
    hists = {}
    for name, ds in data.items():
        ds.save(ddir / f"{name}.npz")
        h = ds.histogram()
        h.to_csv(out / f"{name}_hist.csv")
        hists[name] = list(h.counts)
    write_manifest(out / "manifest.csv", data)
    _write_common(cfg, out, json.dumps({"histograms": hists}, indent=2, sort_keys=True) + "\n")
    return {"data_dir": str(ddir)}


def cmd_train_source(cfg: RunConfig, out: Path) -> dict:
    data = load_datasets(cfg)
    model = initial_model(cfg, data)
    model, rec = train_source(model, data["source_train"], cfg.train_config(), data["source_test"])
    rec.to_csv(out / "epochs.csv")
    (out / "checkpoints").mkdir(exist_ok=True)
    save_checkpoint(out / "checkpoints" / "source.npz", model)
    _write_common(cfg, out, summary_text(rec, {"command": "train-source"}))
    if cfg.run.svg:
        from ..analysis import plots

        rows = read_epochs_csv(out / "epochs.csv")
        plots.plot_accuracy(out / "accuracy.svg", [r["epoch"] for r in rows], [r["target_acc"] for r in rows])
    return {"source_test_acc": rec.summary.get("source_test_acc")}


def render_run_charts(out: Path, rows: list[dict], logs, n_classes: int):
    from ..analysis import plots

    epochs = [r["epoch"] for r in rows]
    plots.plot_selection(out / "selection.svg", epochs, [r["frac_min"] for r in rows],
                         [r["frac_max"] for r in rows])
    plots.plot_precision(out / "precision.svg", epochs, [r["prec_correct"] for r in rows],
                         [r["prec_incorrect"] for r in rows])
    plots.plot_accuracy(out / "accuracy.svg", epochs, [r["target_acc"] for r in rows])
    if logs and np.all(logs[0]["true_label"] >= 0):
        _, _, per_class = selection_fraction_series(logs, n_classes)
        plots.plot_class_selection(out / "class_selection.svg", np.nan_to_num(per_class[0]),
                                   np.nan_to_num(per_class[-1]))


def cmd_adapt(cfg: RunConfig, out: Path) -> dict:
    data = load_datasets(cfg)
    tcfg = cfg.train_config()
    model = initial_model(cfg, data)
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    extra = {"command": "adapt"}
    if not cfg.model.init_checkpoint:
        model, src_rec = train_source(model, data["source_train"], tcfg, data["source_test"])
        src_rec.to_csv(out / "source_epochs.csv")
        save_checkpoint(ckpt / "source.npz", model)
        extra["source_test_acc"] = src_rec.summary.get("source_test_acc")
    target = data["target_train"]
    model, rec = adapt_sentry(model, data["source_train"], target, tcfg, data["target_test"],
                              make_family(cfg, target), checkpoint_dir=ckpt)
    save_checkpoint(ckpt / "final.npz", model)
    rec.to_csv(out / "epochs.csv")
    rec.logs_to_csv(out / "verdicts.csv")
    extra["target_train_hist"] = list(target.histogram().counts)
    extra["target_label_reads"] = dict(target.audit)
    _write_common(cfg, out, summary_text(rec, extra))
    if cfg.run.svg:
        render_run_charts(out, read_epochs_csv(out / "epochs.csv"), rec.logs, target.n_classes)
    return {"final_target_acc": rec.final_accuracy}


def _source_key(cfg: RunConfig) -> str:
    parts = {"seed": cfg.run.seed, "data": asdict(cfg.data), "model": asdict(cfg.model),
             "train": {k: getattr(cfg.train, k) for k in SOURCE_KEYS}}
    return json.dumps(parts, sort_keys=True, default=str)


def _run_cell(args):
    cfg, out = args
    out.mkdir(parents=True, exist_ok=True)
    return cmd_adapt(cfg, out)


def cmd_grid(cfg: RunConfig, out: Path) -> dict:
    cells = expand_grid(cfg.grid)
    cell_cfgs = [apply_cell(cfg, cell) for cell in cells]
    # train each distinct source model once and point the cells at it
    sources: dict[str, str] = {}
    src_dir = out / "sources"
    for cc in cell_cfgs:
        if cc.model.init_checkpoint:
            continue
        key = _source_key(cc)
        if key not in sources:
            src_dir.mkdir(exist_ok=True)
            data = load_datasets(cc)
            model, _ = train_source(initial_model(cc, data), data["source_train"], cc.train_config(),
                                    data["source_test"])
            path = src_dir / f"source_{len(sources):03d}.npz"
            save_checkpoint(path, model)
            sources[key] = str(path.resolve())
        cc.model = replace(cc.model, init_checkpoint=sources[key])
    jobs = [(cc, out / "cells" / f"cell_{i:03d}") for i, cc in enumerate(cell_cfgs)]
    if cfg.run.parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            list(pool.map(_run_cell, jobs))
    else:
        for job in jobs:
            _run_cell(job)

    results = []
    from ..trainer import EpochRow, RunRecord

    for cell, (_, cdir) in zip(cells, jobs):
        rows = read_epochs_csv(cdir / "epochs.csv")
        rec = RunRecord(rows=[EpochRow(**r) for r in rows],
                        summary=json.loads((cdir / "summary.txt").read_text()))
        results.append((cell, rec))
    grid_summary_csv(results, out / "summary.csv")
    (out / "resolved.cfg").write_text(dump_config(cfg))
    table = [{**{k: v for k, v in cell.items()}, "final_target_acc": rec.final_accuracy,
              "cell_dir": str(cdir.relative_to(out))} for (cell, rec), (_, cdir) in zip(results, jobs)]
    (out / "summary.txt").write_text(json.dumps({"n_cells": len(cells), "cells": table}, indent=2,
                                                sort_keys=True, default=str) + "\n")
    if cfg.run.svg:
        render_grid_chart(out / "grid.svg", cells, [rec.final_accuracy for _, rec in results])
    return {"n_cells": len(cells)}


def render_grid_chart(path, cells: list[dict], accs: list):
    """Accuracy against the first numeric axis, one line per setting of the others."""
    from ..analysis import plots

    keys = list(cells[0])
    numeric = [k for k in keys if all(isinstance(c[k], (int, float)) and not isinstance(c[k], bool)
                                      for c in cells)]
    if not numeric:
        return None
    xkey = numeric[0]
    series: dict[str, dict] = {}
    for cell, acc in zip(cells, accs):
        label = ", ".join(f"{k.split('.', 1)[1]}={cell[k]}" for k in keys if k != xkey) or "accuracy"
        series.setdefault(label, {})[cell[xkey]] = np.nan if acc is None else acc
    xs = sorted({c[xkey] for c in cells})
    ys = {lab: [pts.get(x, np.nan) for x in xs] for lab, pts in series.items()}
    return plots.plot_accuracy_vs_axis(path, xs, ys, xlabel=xkey.split(".", 1)[1])


def cmd_analyze(cfg: RunConfig, out: Path) -> dict:
    from ..analysis import plots

    src = Path(cfg.run.input_dir)
    result = {}
    table, r = gradient_correlation_study(np.linspace(0.55, 0.95, 100))
    np.savetxt(out / "gradient_correlation.csv", table, delimiter=",", header="p,grad_entmax,grad_bce",
               comments="", fmt="%.17g")
    result["gradient_pearson_r"] = r
    if cfg.run.svg:
        plots.plot_gradient_correlation(out / "gradient_correlation.svg", table)
    if (src / "epochs.csv").exists():
        rows = read_epochs_csv(src / "epochs.csv")
        logs = read_verdict_log(src / "verdicts.csv") if (src / "verdicts.csv").exists() else []
        n_classes = len(rows[-1]["pseudo_hist"]) if rows and rows[-1]["pseudo_hist"] else 0
        if logs:
            fmin, fmax, per_class = selection_fraction_series(logs, n_classes)
            cols = ["epoch", "frac_min", "frac_max", *(f"min_class{c}" for c in range(n_classes))]
            data = np.column_stack([np.arange(1, len(fmin) + 1), fmin, fmax, per_class])
            np.savetxt(out / "selection.csv", data, delimiter=",", header=",".join(cols), comments="",
                       fmt="%.17g")
            result["frac_min"] = [float(fmin[0]), float(fmin[-1])]
            result["frac_max"] = [float(fmax[0]), float(fmax[-1])]
        if cfg.run.svg:
            render_run_charts(out, rows, logs, n_classes)
    if (src / "summary.csv").exists() and cfg.run.svg:
        import csv

        with open(src / "summary.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        keys = [k for k in rows[0] if "." in k]
        cells = [{k: _num(row[k]) for k in keys} for row in rows]
        accs = [_num(row["final_target_acc"]) for row in rows]
        render_grid_chart(out / "grid.svg", cells, accs)
    (out / "resolved.cfg").write_text(dump_config(cfg))
    (out / "summary.txt").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result


def _num(text: str):
    for tp in (int, float):
        try:
            return tp(text)
        except ValueError:
            pass
    return None if text == "" else text


HANDLERS = {"build-data": cmd_build_data, "train-source": cmd_train_source, "adapt": cmd_adapt,
            "grid": cmd_grid, "analyze": cmd_analyze}


def execute(cfg: RunConfig) -> dict:
    out = Path(cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[cfg.run.command](cfg, out)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("argv", message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sentrylab", description="Selective entropy domain adaptation runs.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="config file of key = value lines")
    p.add_argument("--axis", action="append", default=[], metavar="KEY=VALUES",
                   help="grid axis, e.g. --axis k=1,3 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    for leaf, path in sorted(LEAVES.items()):
        p.add_argument("--" + leaf.replace("_", "-"), dest=f"opt:{path}", metavar="VALUE",
                       help=argparse.SUPPRESS)
    return p


def parse_args(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    overrides = {k[4:]: v for k, v in vars(ns).items() if k.startswith("opt:") and v is not None}
    if ns.command:
        overrides["run.command"] = ns.command
    axes = {}
    for item in ns.axis:
        if "=" not in item:
            raise ConfigError("axis", f"expected KEY=VALUES, got {item!r}")
        k, v = item.split("=", 1)
        axes[k] = v
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return load_config(ns.config, overrides, axes)


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except ConfigError as err:
        print(json.dumps({"status": "error", "code": 1, "kind": "config", "key": err.key,
                          "message": str(err)}), file=sys.stderr)
        return 1
    except OSError as err:
        print(json.dumps({"status": "error", "code": 1, "kind": "config", "message": str(err)}),
              file=sys.stderr)
        return 1
    try:
        info = execute(cfg)
    except ConfigError as err:
        print(json.dumps({"status": "error", "code": 1, "kind": "config", "key": err.key,
                          "message": str(err)}), file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - every runtime failure maps to exit 2
        print(json.dumps({"status": "error", "code": 2, "kind": type(err).__name__, "message": str(err)}),
              file=sys.stderr)
        return 2
    print(json.dumps({"status": "ok", "command": cfg.run.command, "out_dir": cfg.run.out_dir, **info},
                     default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
