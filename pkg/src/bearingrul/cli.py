"""Command-line entry point: ``bearingrul <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .features import feature_matrix, save_feature_csv
from .harness import (
    ExperimentConfig,
    load_condition,
    run_experiment,
    run_generalization,
    seed_labels,
)
from .ingest import RECORD_PERIOD_S, NoDataError, discover_bearings, load_bearing
from .labels import LABEL_METHODS, HiCurve, fpt_3sigma, label_csv_name, rms_hi, save_label_csv
from .models import save_model
from .reduce import save_pca, save_som
from .reports import RESULTS_NAME, emit_reports, load_results
from .synthetic import synthetic_corpus, write_run

log = logging.getLogger("bearingrul")


def _seeds(text):
    return tuple(int(s) for s in text.split(",") if s.strip())


def _config(args, **overrides) -> ExperimentConfig:
    data = {}
    if args.config:
        data = ExperimentConfig.load(args.config).to_dict()
    elif getattr(args, "data", None) is None:
        raise SystemExit("error: --config is required (it names the dataset and training settings)")
    if getattr(args, "data", None):
        data["dataset_root"] = str(args.data)
        data.pop("synthetic", None)
    if args.seed:
        data["seeds"] = list(_seeds(args.seed))
    if args.out:
        data["output_dir"] = str(args.out)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def cmd_ingest_check(args):
    found = discover_bearings(args.dir)
    if not found:
        print(f"no Bearing<c>_<i> directories under {args.dir}")
        return 1
    status = 0
    for (c, i), path in sorted(found.items()):
        try:
            run = load_bearing(path, c, i)
        except (ValueError, NoDataError) as exc:
            print(f"Bearing{c}_{i}: ERROR {exc}")
            status = 1
            continue
        line = f"{run.name}: {len(run)} records, {run.actual_life} s"
        if len(run) > 5:
            fpt = fpt_3sigma(rms_hi(run))
            if fpt.index is not None:
                line += f", 3-sigma FPT at record {fpt.index} ({fpt.index * RECORD_PERIOD_S} s)"
        print(line)
    return status


def cmd_features(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (c, i), path in sorted(discover_bearings(args.dir).items()):
        run = load_bearing(path, c, i)
        dest = out / f"features_{run.name}.csv"
        save_feature_csv(feature_matrix(run), dest)
        print(dest)
    return 0


def cmd_train_labels(args):
    cfg = _config(args, label_method=args.method)
    runs = load_condition(cfg, 1)
    out = Path(cfg.output_dir or "results")
    for seed in cfg.seeds:
        sl = seed_labels(cfg, runs, seed)
        d = out / "labels" / f"seed_{seed}"
        d.mkdir(parents=True, exist_ok=True)
        for name, values in sl.labels.items():
            save_label_csv(HiCurve(values, cfg.label_method), d / label_csv_name(cfg.label_method, name))
        m = sl.models
        if m is not None:
            if m.network is not None:
                save_model(m.network, d / f"label_model_{cfg.label_method}.npz", seed=seed)
            if m.som is not None:
                save_som(m.som, d / f"som_{cfg.label_method}.npz")
            if m.pca is not None:
                save_pca(m.pca, d / "pca.npz")
            if m.perplexity is not None:
                print(f"seed {seed}: codebook perplexity {m.perplexity:.2f}")
        print(f"seed {seed}: labels written to {d}")
    return 0


def cmd_train_predict(args):
    cfg = _config(args, label_method=args.method)
    folds = None if args.fold == "all" else args.fold.split(",")
    res = run_experiment(cfg, folds=folds)
    for row in res.summary_rows:
        print(",".join(row))
    return 0


def cmd_generalize(args):
    cfg = _config(args)
    res = run_generalization(cfg)
    for row in res.summary_rows:
        print(",".join(row))
    for seed, digest in res.checkpoint_digests.items():
        print(f"seed {seed}: checkpoint sha256 {digest} unchanged")
    return 0


def cmd_report(args):
    src = Path(args.results or Path(args.out or "results") / RESULTS_NAME)
    results, config, extra = load_results(src)
    dest = Path(args.out) if args.out else src.parent
    for p in emit_reports(results, dest, config, extra):
        print(p)
    return 0


def cmd_synth(args):
    runs = synthetic_corpus(args.bearings, args.records, condition=args.condition, seed=args.synth_seed)
    for run in runs:
        print(write_run(run, args.dir))
    return 0


def _global_flags(p, default):
    p.add_argument("--config", default=default, help="experiment config (JSON, ExperimentConfig field names)")
    p.add_argument("--seed", default=default, help="comma-separated seed list, e.g. 15,16,25")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=default if default else False)


def build_parser():
    p = argparse.ArgumentParser(prog="bearingrul", description="Bearing remaining-useful-life pipeline.")
    _global_flags(p, None)
    # the same flags are accepted after the subcommand; SUPPRESS keeps earlier values
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def sub_parser(name, **kw):
        return add(name, parents=[common], **kw)

    sub.add_parser = sub_parser

    s = sub.add_parser("ingest-check", help="load every bearing under a directory and report counts")
    s.add_argument("dir")
    s.set_defaults(fn=cmd_ingest_check)

    s = sub.add_parser("features", help="write 38-column feature CSVs per bearing")
    s.add_argument("dir")
    s.set_defaults(fn=cmd_features)

    s = sub.add_parser("train-labels", help="fit label models and write label curves per seed")
    s.add_argument("--method", choices=LABEL_METHODS, required=True)
    s.add_argument("--data", help="dataset root (overrides the config)")
    s.set_defaults(fn=cmd_train_labels)

    s = sub.add_parser("train-predict", help="leave-one-bearing-out predictor training and evaluation")
    s.add_argument("--method", choices=LABEL_METHODS, required=True)
    s.add_argument("--fold", default="all", help="bearing name or index, comma list, or 'all'")
    s.add_argument("--data", help="dataset root (overrides the config)")
    s.set_defaults(fn=cmd_train_predict)

    s = sub.add_parser("generalize", help="evaluate 1-1..1-6 predictors on bearings 2-1..2-4")
    s.add_argument("--data", help="dataset root (overrides the config)")
    s.set_defaults(fn=cmd_generalize)

    s = sub.add_parser("report", help="regenerate CSV/SVG reports from results.json")
    s.add_argument("--results", help="path to results.json (default: <out>/results.json)")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic run-to-failure corpus in the archive layout")
    s.add_argument("dir")
    s.add_argument("--bearings", type=int, default=7)
    s.add_argument("--records", type=int, default=200)
    s.add_argument("--condition", type=int, default=1)
    s.add_argument("--synth-seed", type=int, default=0)
    s.set_defaults(fn=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    if args.command == "features":
        if not args.out:
            raise SystemExit("error: features needs --out")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
