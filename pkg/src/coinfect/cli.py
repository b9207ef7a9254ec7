"""Command-line entry point wiring the analysis workflow.

One binary, subcommand style: simulate, summarize, fit, rf, ensemble, odds,
calibrate, predict.  Every run writes its primary output plus a run manifest
(`<output>.manifest.json`) capturing the resolved configuration and master
seed; re-running from the same manifest reproduces the outputs byte for byte
(timestamps excluded).  Exit codes: 0 success, 1 data/computation error,
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import dataset as ds
from . import diagnosis, effects, ensemble, forest, mlogit, simulate

__all__ = ["main", "dispatch", "load_schema"]

#: report kind -> schema file shipped under coinfect/schemas/
SCHEMA_FILES = {
    "summary": "summary.schema.json",
    "fit": "fit.schema.json",
    "wald": "wald.schema.json",
    "importance": "importance.schema.json",
    "selection": "selection.schema.json",
    "ensemble": "ensemble.schema.json",
    "odds": "odds.schema.json",
    "calibration": "calibration.schema.json",
    "manifest": "manifest.schema.json",
}


def load_schema(kind: str) -> dict:
    """Return the published JSON schema for a report kind."""
    from importlib import resources

    try:
        fname = SCHEMA_FILES[kind]
    except KeyError:
        raise ValueError(f"unknown report kind {kind!r}") from None
    path = resources.files("coinfect") / "schemas" / fname
    return json.loads(path.read_text(encoding="utf-8"))


def _write_manifest(args: argparse.Namespace, subcommand: str, inputs: list,
                    outputs: list):
    manifest = {
        "tool": "coinfect",
        "version": __version__,
        "subcommand": subcommand,
        "config": {k: v for k, v in sorted(vars(args).items())
                   if k not in ("func",) and not k.startswith("_")},
        "seed": getattr(args, "seed", None),
        "inputs": inputs,
        "outputs": outputs,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    path = outputs[0] + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
    return path


def _mode(args) -> ds.Mode:
    return ds.Mode.IGMIGG if args.mode == "IgMIgG" else ds.Mode.IGM


def _load_dataset(args) -> ds.Dataset:
    return ds.ingest_csv(args.input, _mode(args))


def _parse_filter(text: str | None) -> diagnosis.AgeDaysFilter | None:
    """Parse 'age>10,sick_days>3' into a filter; None disables it."""
    if not text or text.lower() == "none":
        return None
    age_min, days_min = 10.0, 3.0
    for part in text.split(","):
        name, _, value = part.partition(">")
        name = name.strip()
        if name == "age":
            age_min = float(value)
        elif name == "sick_days":
            days_min = float(value)
        else:
            raise ValueError(f"unknown filter field {name!r}")
    return diagnosis.AgeDaysFilter(age_min, days_min)


def _cmd_simulate(args):
    if args.law:
        law = simulate.load_law_json(args.law)
    else:
        law = simulate.default_covariate_law()
    if args.beta:
        beta = simulate.load_beta_json(args.beta, tuple(law))
    else:
        beta = mlogit.CoefMatrix.zeros(len(law), tuple(law))
    spec = simulate.GeneratorSpec(args.n, beta, law, args.seed,
                                  rainy_season=args.rainy_season)
    data = simulate.generate(spec)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(ds.serialize_csv(data))
    _write_manifest(args, "simulate", [p for p in (args.beta, args.law) if p],
                    [args.output])


def _cmd_summarize(args):
    table = ds.summarize(_load_dataset(args))
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(table.to_json())
    _write_manifest(args, "summarize", [args.input], [args.output])


def _cmd_fit(args):
    data = _load_dataset(args)
    kwargs = dict(tol=args.tol, max_iter=args.max_iter, ridge=args.ridge)
    if args.stepwise:
        selected, result = mlogit.stepwise_aic(data.X, data.y,
                                               data.covariate_names, **kwargs)
    else:
        selected = list(range(len(data.covariate_names)))
        result = mlogit.fit(data.X, data.y, data.covariate_names, **kwargs)
    payload = result.to_dict()
    payload["selected_covariates"] = [data.covariate_names[j] for j in selected]
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    outputs = [args.output]
    if args.test_independence:
        wald = mlogit.wald_independence(result)
        wald_path = os.path.splitext(args.output)[0] + ".wald.json"
        with open(wald_path, "w", encoding="utf-8") as fh:
            json.dump(wald.to_dict(), fh, indent=2)
        outputs.append(wald_path)
    _write_manifest(args, "fit", [args.input], outputs)


def _cmd_rf(args):
    data = _load_dataset(args)
    cfg = forest.ForestConfig(ntree=args.ntree, mtry=args.mtry, seed=args.seed)
    if args.vsurf:
        result = forest.vsurf_select(data.X, data.y, cfg, n_forests=args.n_forests,
                                     names=data.covariate_names)
        payload = result.as_dict()
    else:
        model = forest.grow_forest(data.X, data.y, cfg, names=data.covariate_names)
        err, n_excl = forest.oob_error(model, data.X, data.y)
        report = forest.mda_importance(model, data.X, data.y, seed=args.seed)
        payload = report.as_dict()
        payload["oob_error"] = err
        payload["oob_excluded"] = n_excl
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    _write_manifest(args, "rf", [args.input], [args.output])


def _cmd_ensemble(args):
    data = _load_dataset(args)
    requested = {a.strip() for a in args.analyses.split(",") if a.strip()}
    unknown = requested - {"fit", "wald", "or", "vsurf"}
    if unknown:
        raise ValueError(f"unknown analyses: {sorted(unknown)}")
    spec = ensemble.UndersampleSpec(n_majority=args.n_majority, B=args.b,
                                    seed=args.seed)
    analysis = ensemble.AnalysisConfig(
        fit="fit" in requested,
        wald="wald" in requested,
        odds="or" in requested,
        vsurf="vsurf" in requested,
        forest_config=forest.ForestConfig(ntree=args.ntree, seed=args.seed),
        n_forests=args.n_forests,
    )
    report = ensemble.run_ensemble(data, spec, analysis)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    outputs = [args.output]
    if args.freq_csv and report.selection_counts is not None:
        with open(args.freq_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["covariate", "count", "frequency"])
            for name, c in zip(report.covariate_names, report.selection_counts):
                w.writerow([name, int(c), c / report.B])
        outputs.append(args.freq_csv)
    if args.or_csv and report.or_samples is not None:
        with open(args.or_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "covariate", "median", "q1", "q3",
                        "whisker_low", "whisker_high", "n"])
            for (k, name), vals in report.or_samples.items():
                good = vals[~np.isnan(vals)]
                if not len(good):
                    continue
                s = ensemble._box_stats(good)
                w.writerow([k, name, s["median"], s["q1"], s["q3"],
                            s["whisker_low"], s["whisker_high"], s["n"]])
        outputs.append(args.or_csv)
    _write_manifest(args, "ensemble", [args.input], outputs)


def _cmd_odds(args):
    with open(args.model, "r", encoding="utf-8") as fh:
        result = mlogit.FitResult.from_dict(json.load(fh))
    names = list(result.coef.covariate_names)
    if args.covariate:
        if args.covariate not in names:
            raise ValueError(f"unknown covariate {args.covariate!r}")
        targets = [names.index(args.covariate)]
    else:
        targets = list(range(len(names)))
    if ":" in args.contrast:
        k, l = (int(v) for v in args.contrast.split(":"))
    else:
        k, l = int(args.contrast), None
    rows = []
    for j in targets:
        d = args.d if args.d is not None else effects.CANONICAL_INCREMENTS.get(
            names[j], 1.0)
        spec = effects.IncrementSpec(j, d)
        if l is None:
            est = effects.odds_ratio(result, k, spec, level=args.level)
        else:
            est = effects.odds_ratio_between(result, k, l, spec, level=args.level)
        entry = est.as_dict()
        entry["covariate"] = names[j]
        entry["d"] = d
        rows.append(entry)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump({"odds_ratios": rows}, fh, indent=2)
    _write_manifest(args, "odds", [args.model], [args.output])


def _cmd_calibrate(args):
    data = _load_dataset(args)
    flt = _parse_filter(args.filter)
    grid = diagnosis.default_gamma_grid(args.grid_step)
    result = diagnosis.calibrate_gamma(data, folds=args.folds, c=args.cost,
                                       grid=grid, seed=args.seed, flt=flt)
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(result.as_dict(), fh, indent=2)
    outputs = [args.output]
    if args.curve_csv:
        with open(args.curve_csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma", "wmcr", "fn_rate", "fp_rate"])
            for row in result.curve:
                w.writerow(row)
        outputs.append(args.curve_csv)
    _write_manifest(args, "calibrate", [args.input], outputs)


def _cmd_predict(args):
    with open(args.model, "r", encoding="utf-8") as fh:
        result = mlogit.FitResult.from_dict(json.load(fh))
    data = ds.ingest_csv(args.input, _mode(args))
    flt = _parse_filter(args.filter)
    probs = diagnosis.coinfection_prob(result, data.X)
    labels = diagnosis.classify(probs, args.gamma, data.X, flt)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coinfection_prob", "label", "gamma",
                    "filter_age_min", "filter_days_min"])
        for prob, lab in zip(probs, labels):
            w.writerow([repr(float(prob)), int(lab), args.gamma,
                        "" if flt is None else flt.age_min,
                        "" if flt is None else flt.days_min])
    _write_manifest(args, "predict", [args.model, args.input], [args.output])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coinfect",
        description="Coinfection-diagnosis statistical toolkit")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("COINFECT_THREADS", "0")),
                        help="worker budget (0 = available parallelism)")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_io(p, mode=True):
        p.add_argument("--input", required=True, help="dataset CSV path")
        p.add_argument("--output", required=True, help="primary output path")
        if mode:
            p.add_argument("--mode", choices=("IgM", "IgMIgG"), default="IgM")

    p = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", help="JSON file with the 3 x (p+1) true coefficients")
    p.add_argument("--law", help="JSON file mapping covariate name to marginal law")
    p.add_argument("--rainy-season", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("summarize", help="2x2 arbovirus/malaria contingency summary")
    add_io(p)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("fit", help="multinomial logit maximum-likelihood fit")
    add_io(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--ridge", type=float, default=1e-8)
    p.add_argument("--stepwise", action="store_true",
                   help="backward stepwise AIC selection before the final fit")
    p.add_argument("--test-independence", action="store_true",
                   help="also run the Wald independence test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("rf", help="random forest: importance or VSURF selection")
    add_io(p)
    p.add_argument("--ntree", type=int, default=500)
    p.add_argument("--mtry", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vsurf", action="store_true")
    p.add_argument("--n-forests", type=int, default=25)
    p.set_defaults(func=_cmd_rf)

    p = sub.add_parser("ensemble", help="balanced undersampling ensemble")
    add_io(p)
    p.add_argument("--b", type=int, default=1000)
    p.add_argument("--n-majority", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--analyses", default="fit",
                   help="comma list from: fit,wald,or,vsurf")
    p.add_argument("--ntree", type=int, default=500)
    p.add_argument("--n-forests", type=int, default=25)
    p.add_argument("--freq-csv", help="selection-frequency bar data CSV")
    p.add_argument("--or-csv", help="odds-ratio box-plot data CSV")
    p.set_defaults(func=_cmd_ensemble)

    p = sub.add_parser("odds", help="odds ratios from a fitted-model JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--contrast", required=True,
                   help="k (vs reference) or k:l (between classes)")
    p.add_argument("--covariate", help="single covariate name (default: all)")
    p.add_argument("--d", type=float, help="increment (default: canonical)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_odds)

    p = sub.add_parser("calibrate", help="cross-validated threshold calibration")
    add_io(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cost", type=float, default=2.0)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--filter", default=None,
                   help="e.g. 'age>10,sick_days>3'; omit to disable")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--curve-csv", help="calibration curve CSV for plotting")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("predict", help="score patients with a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("IgM", "IgMIgG"), default="IgM")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--filter", default=None)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_predict)

    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads and args.threads > 0:
        try:
            import numba
            numba.set_num_threads(max(1, args.threads))
        except (ImportError, ValueError):
            pass
    try:
        args.func(args)
    except Exception as exc:  # data/computation errors -> exit 1 with a record
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
