"""Command-line entry point: generate / fit / evaluate / replicate.

Every run writes a JSON manifest recording the exact argv, the resolved
configuration and its hash, the master seed, and the produced files, so
any output's provenance chain reconstructs the command line. File writes
are atomic (write temp, then rename). Replicate exit status is nonzero
iff any replication verdict fails or a stage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, datagen, metrics, tobit
from .experiments import MODEL_NAMES, TABLES, child_seed, parse_model_name, _fit_model
from .models import net_from_dict
from .training import (
    TrainConfig,
    impute_dataset_thresholds,
    train_mean_ratio,
    write_trace_csv,
)

INTERVAL_LOW, INTERVAL_HIGH = 0.05, 0.95


# ---------------------------------------------------------------------------
# IO helpers

def _atomic_write(path, payload: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _manifest(path, command, args, config, outputs, stats=None):
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.items()}
    _write_json(
        path,
        {
            "tool": "cqrnet",
            "version": __version__,
            "command": command,
            "argv": getattr(args, "_argv", sys.argv[1:]),
            "config": config,
            "config_hash": _config_hash(config),
            "master_seed": args.seed,
            "outputs": outputs,
            "stats": stats or {},
        },
    )


def _dataset_csv_text(ds) -> str:
    buf = io.StringIO()
    p = ds.X.shape[1] - 1
    header = [f"x{i}" for i in range(1, p + 1)] + ["y", "tau", "censored"]
    if ds.y_star is not None:
        header.append("y_star")
    writer = csv.writer(buf)
    writer.writerow(header)
    for i in range(ds.n):
        row = [repr(float(v)) for v in ds.X[i, 1:]]
        row += [repr(float(ds.y[i])), repr(float(ds.tau[i])), str(int(ds.censored[i]))]
        if ds.y_star is not None:
            row.append(repr(float(ds.y_star[i])))
        writer.writerow(row)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args, parser):
    os.makedirs(args.out_dir, exist_ok=True)
    if bool(args.synthetic) == bool(args.censor):
        parser.error("generate needs exactly one of --synthetic NOISE or --censor SCHEME")
    if args.synthetic:
        spec = datagen.SyntheticSpec(args.synthetic, args.n, child_seed(args.seed, "generate", args.synthetic))
        ds = datagen.gen_synthetic(spec, zero_noise=args.zero_noise)
        data_path = os.path.join(args.out_dir, f"synthetic-{args.synthetic}.csv")
        stats = {"n": ds.n, "censored_fraction": float(ds.censored.mean()),
                 "side": ds.side, "noise": args.synthetic, "lags": None}
    else:
        if args.input:
            series = datagen.load_daily_series_csv(args.input)
        else:
            series = datagen.bundled_daily_series(args.n_days, seed=child_seed(args.seed, "generate", "series"))
        if args.censor == "partial":
            cs = datagen.censor_partial(series, args.gamma, args.c1, args.c2,
                                        seed=child_seed(args.seed, "generate", "partial"))
        else:
            trips = datagen.gen_trip_table(
                args.n_days, datagen.BUNDLED_SERIES_VEHICLES, datagen.BUNDLED_SERIES_RATE,
                datagen.BUNDLED_SERIES_AMPLITUDE, seed=child_seed(args.seed, "generate", "trips"),
            )
            cs = datagen.censor_fleet(trips, args.alpha, seed=child_seed(args.seed, "generate", "fleet"))
        ds = datagen.build_lagged_dataset(cs, args.lags)
        data_path = os.path.join(args.out_dir, f"censored-{args.censor}.csv")
        stats = {
            "n": ds.n, "censored_fraction": float(ds.censored.mean()), "side": ds.side,
            "noise": None, "lags": args.lags, "scheme": args.censor,
            "observed_over_latent_mean": float(np.mean(cs.y) / np.mean(cs.y_star)),
        }
    _atomic_write(data_path, _dataset_csv_text(ds))
    config = {k: getattr(args, k) for k in
              ("synthetic", "censor", "n", "n_days", "gamma", "c1", "c2", "alpha", "lags", "zero_noise", "input")}
    manifest_path = os.path.join(args.out_dir, "generate-manifest.json")
    _manifest(manifest_path, "generate", args, config, [data_path], stats)
    print(f"wrote {data_path}")
    print(f"manifest: {manifest_path} (censored fraction {stats['censored_fraction']:.3f})")
    return 0


# ---------------------------------------------------------------------------
# fit

def _load_dataset_with_manifest(data_path):
    manifest_path = os.path.join(os.path.dirname(os.path.abspath(data_path)), "generate-manifest.json")
    side, noise = "left", None
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            stats = json.load(fh).get("stats", {})
        side = stats.get("side", "left")
        noise = stats.get("noise")
    return datagen.load_dataset_csv(data_path, side=side), noise


def _protocol_split(ds, seed):
    """Random 62/15/23 for cross-sectional data; consecutive thirds for
    (right-censored) series datasets."""
    if ds.side == "right":
        return datagen.split(ds, (1 / 3, 1 / 3, 1 / 3), consecutive=True)
    return datagen.split(ds, seed=seed)


def _prepare_for_fit(ds, seed):
    train, val, test = _protocol_split(ds, seed)
    if np.any(np.isnan(ds.tau)):
        ratio = train_mean_ratio(train.y_star, train.y)
        train, val, test = (impute_dataset_thresholds(ratio, part) for part in (train, val, test))
    return train, val, test


def _fit_cell(task):
    """One (model, theta) cell; module-level so worker processes can run it."""
    (model, theta, data_path, split_seed, fit_seed, cfg_kwargs, use_grid, init_scheme, init_seed) = task
    ds, _ = _load_dataset_with_manifest(data_path)
    cfg = TrainConfig(seed=fit_seed, **cfg_kwargs)
    train, val, _ = _prepare_for_fit(ds, split_seed)
    if model == "tobit":
        result = tobit.tobit_fit(train, val, cfg, init_scheme=init_scheme, init_seed=init_seed)
        result.theta = theta
    else:
        result = _fit_model(model, train, val, cfg, theta,
                            init_scheme=init_scheme, init_seed=init_seed, use_lr_grid=use_grid)
    return model, theta, result


def cmd_fit(args, parser):
    os.makedirs(args.out_dir, exist_ok=True)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    unknown = []
    for m in models:
        if m == "tobit":
            continue
        try:
            parse_model_name(m)
        except ValueError:
            unknown.append(m)
    if unknown:
        parser.error(f"unknown models: {unknown} (choose from {sorted(MODEL_NAMES)}, "
                     f"c-stacked-<act>-<units>, or tobit)")
    thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
    _load_dataset_with_manifest(args.data)  # validate early

    cfg_kwargs = {}
    if args.learning_rate is not None:
        cfg_kwargs["learning_rate"] = args.learning_rate
    if args.patience is not None:
        cfg_kwargs["patience"] = args.patience
    if args.max_epochs is not None:
        cfg_kwargs["max_epochs"] = args.max_epochs
    use_grid = args.learning_rate is None and not args.no_lr_grid

    tasks, outputs, skipped = [], [], 0
    split_seed = child_seed(args.seed, "fit", "split")
    for model in models:
        for theta in thetas:
            cell_path = os.path.join(args.out_dir, f"fit-{model}-theta{theta:g}.json")
            if os.path.exists(cell_path) and not args.force:
                skipped += 1
                continue
            tasks.append((model, theta, args.data, split_seed,
                          child_seed(args.seed, "fit", model, theta),
                          cfg_kwargs, use_grid, args.init,
                          child_seed(args.seed, "fit", "init", model, theta)))

    def handle(model, theta, result):
        cell_path = os.path.join(args.out_dir, f"fit-{model}-theta{theta:g}.json")
        _write_json(cell_path, result.to_json_dict())
        outputs.append(cell_path)
        if args.dump_traces:
            trace_path = os.path.join(args.out_dir, f"trace-{model}-theta{theta:g}.csv")
            write_trace_csv(result, trace_path)
            outputs.append(trace_path)

    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for model, theta, result in pool.map(_fit_cell, tasks):
                handle(model, theta, result)
    else:
        for task in tasks:
            handle(*_fit_cell(task))

    config = {"data": args.data, "models": models, "thetas": thetas,
              "learning_rate": args.learning_rate, "patience": args.patience,
              "max_epochs": args.max_epochs, "no_lr_grid": args.no_lr_grid, "init": args.init}
    _manifest(os.path.join(args.out_dir, "fit-manifest.json"), "fit", args, config, outputs,
              {"skipped_existing": skipped, "fitted": len(tasks)})
    print(f"fitted {len(tasks)} cells, skipped {skipped} existing; results in {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate

def _predict_cell(doc, model, test):
    if model == "tobit":
        beta = np.asarray(doc["net"]["params"]["beta"], dtype=float)
        sigma = doc["net"]["config"].get("sigma", 1.0)
        tm = tobit.TobitModel(beta, sigma=sigma, side=test.side)
        return tobit.tobit_quantiles(tm, test.X, float(doc["theta"]))
    return net_from_dict(doc["net"]).forward(test.X)


def cmd_evaluate(args, parser):
    os.makedirs(args.out_dir, exist_ok=True)
    ds, noise = _load_dataset_with_manifest(args.data)
    _, _, test = _prepare_for_fit(ds, child_seed(args.seed, "fit", "split"))

    fits = {}
    for name in sorted(os.listdir(args.fits)):
        if not (name.startswith("fit-") and "-theta" in name and name.endswith(".json")):
            continue
        with open(os.path.join(args.fits, name)) as fh:
            doc = json.load(fh)
        model = name[len("fit-"):].rsplit("-theta", 1)[0]
        fits[(model, float(doc["theta"]))] = doc
    if not fits:
        parser.error(f"no fit-*.json results under {args.fits}")

    subsets = list(metrics.SUBSETS) if args.subset == "both" else [args.subset]
    rows, reports = [], {}
    for model in sorted({m for m, _ in fits}):
        thetas = sorted(t for m, t in fits if m == model)
        for theta in thetas:
            if noise is None:
                continue  # no analytic ground truth for series data
            preds = _predict_cell(fits[(model, theta)], model, test)
            truth = datagen.latent_quantile(noise, theta, test.X, mixture_compat=args.mixture_compat)
            for subset in subsets:
                rp = metrics.subset_report(test, subset, preds=preds, true_quantiles=truth)
                reports[(model, str(theta), subset)] = rp
                rows.append([model, theta, subset, rp.n,
                             "" if rp.r2 is None else repr(rp.r2),
                             repr(rp.mae), repr(rp.rmse), "", ""])
        if {INTERVAL_LOW, INTERVAL_HIGH} <= set(thetas):
            lo = _predict_cell(fits[(model, INTERVAL_LOW)], model, test)
            hi = _predict_cell(fits[(model, INTERVAL_HIGH)], model, test)
            for subset in subsets:
                rp = metrics.subset_report(test, subset, lower=lo, upper=hi)
                reports[(model, "interval", subset)] = rp
                rows.append([model, "0.05-0.95", subset, rp.n, "", "", "",
                             repr(rp.icp), repr(rp.mil)])

    if not rows:
        parser.error("nothing to evaluate: no ground truth for point metrics "
                     "and no (0.05, 0.95) pair for intervals")
    csv_path = os.path.join(args.out_dir, "evaluation.csv")
    _write_csv(csv_path, ["model", "theta", "subset", "n", "r2", "mae", "rmse", "icp", "mil"], rows)
    json_path = os.path.join(args.out_dir, "evaluation.json")
    _write_json(json_path, {f"{m}|{t}|{s}": rp.to_dict() for (m, t, s), rp in reports.items()})
    config = {"data": args.data, "fits": args.fits, "subset": args.subset,
              "mixture_compat": args.mixture_compat}
    _manifest(os.path.join(args.out_dir, "evaluate-manifest.json"), "evaluate", args, config,
              [csv_path, json_path])
    print(f"wrote {csv_path} and {json_path} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# replicate

def cmd_replicate(args, parser):
    os.makedirs(args.out_dir, exist_ok=True)
    kwargs = {"master_seed": args.seed}
    if args.table == "t1":
        if args.n_seeds is not None:
            kwargs["n_seeds"] = args.n_seeds
    elif args.replicates is not None:
        kwargs["replicates"] = args.replicates
    if args.table == "t2" and args.zero_noise:
        kwargs["zero_noise"] = True
    if args.table == "t4-synthetic" and args.jobs > 1:
        kwargs["jobs"] = args.jobs
    run = TABLES[args.table](**kwargs)

    base = os.path.join(args.out_dir, args.table)
    raw_path = base + "-raw.csv"
    _write_csv(raw_path, run.columns, run.raw_rows)
    table_path = base + "-table.txt"
    _atomic_write(table_path, run.render())
    verdict_path = base + "-verdicts.json"
    _write_json(verdict_path, run.verdicts)
    config = {"table": args.table, "replicates": args.replicates,
              "n_seeds": args.n_seeds, "zero_noise": args.zero_noise}
    _manifest(base + "-manifest.json", "replicate", args, config,
              [raw_path, table_path, verdict_path])

    sys.stdout.write(run.render())
    print(f"raw rows: {raw_path}")
    if not run.passed:
        print("replication verdicts FAILED", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cqrnet",
        description="Censored quantile regression experiments: generate, fit, evaluate, replicate.",
    )
    parser.add_argument("--version", action="version", version=f"cqrnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed (stage seeds derive from it)")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
        p.add_argument("--force", action="store_true", help="recompute cells even if outputs exist")
        p.add_argument("--config", help="JSON config file; explicit CLI flags override it")

    g = subparsers["generate"] = sub.add_parser("generate", help="write dataset CSVs plus a manifest")
    common(g)
    g.add_argument("--synthetic", choices=datagen.NOISES, help="synthetic benchmark noise")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--zero-noise", action="store_true", help="debug hook: eps = 0")
    g.add_argument("--censor", choices=["partial", "fleet"], help="censorship scheme over a daily series")
    g.add_argument("--input", help="daily series CSV (date,count); default: bundled synthetic series")
    g.add_argument("--n-days", type=int, default=730)
    g.add_argument("--gamma", type=float, default=0.3)
    g.add_argument("--c1", type=float, default=0.34)
    g.add_argument("--c2", type=float, default=0.66)
    g.add_argument("--alpha", type=float, default=0.2)
    g.add_argument("--lags", type=int, default=7)
    g.set_defaults(func=cmd_generate)

    f = subparsers["fit"] = sub.add_parser("fit", help="fit model cells on a generated dataset")
    common(f)
    f.add_argument("--data", required=True, help="dataset CSV from `generate`")
    f.add_argument("--models", default="tl-linear,c-linear,c-elu")
    f.add_argument("--thetas", default="0.05,0.5,0.95")
    f.add_argument("--learning-rate", type=float, default=None,
                   help="fixed learning rate (validation grid selection when omitted)")
    f.add_argument("--no-lr-grid", action="store_true",
                   help="with no --learning-rate: use the TrainConfig default rate instead of the grid")
    f.add_argument("--patience", type=int, default=None)
    f.add_argument("--max-epochs", type=int, default=None)
    f.add_argument("--init", choices=["ones", "standard_normal"], default="ones")
    f.add_argument("--dump-traces", action="store_true", help="write epoch,train_loss,val_loss CSVs")
    f.set_defaults(func=cmd_fit)

    e = subparsers["evaluate"] = sub.add_parser("evaluate", help="score fit results on the test split")
    common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--fits", required=True, help="directory with fit-*.json results")
    e.add_argument("--subset", choices=["all_test", "non_censored_test", "both"], default="both")
    e.add_argument("--mixture-compat", action="store_true",
                   help="score mixture data against the single-Gaussian closed form")
    e.set_defaults(func=cmd_evaluate)

    r = subparsers["replicate"] = sub.add_parser("replicate", help="self-contained table replication")
    common(r)
    r.add_argument("table", choices=sorted(TABLES))
    r.add_argument("--replicates", type=int, default=None)
    r.add_argument("--n-seeds", type=int, default=None, help="t1 only")
    r.add_argument("--zero-noise", action="store_true", help="t2 only: noiseless debug generator")
    r.set_defaults(func=cmd_replicate)

    return parser, subparsers


def _apply_config_file(args, parser, subparser):
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        file_cfg = json.load(fh)
    defaults = {a.dest: a.default for a in subparser._actions}
    unknown = sorted(set(file_cfg) - set(defaults))
    if unknown:
        parser.error(f"unknown config keys: {unknown}")
    for key, value in file_cfg.items():
        if getattr(args, key) == defaults[key]:
            setattr(args, key, value)
    return args


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    args._argv = list(argv) if argv is not None else sys.argv[1:]
    args = _apply_config_file(args, parser, subparsers[args.command])
    try:
        return args.func(args, parser)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
