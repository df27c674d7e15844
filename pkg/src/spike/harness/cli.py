"""Command-line entry point: ``spike {spectra,loocv,classify,simulate}``.

Exit codes: 0 success, 2 configuration error, 3 ingestion error, 4 numeric
failure.
"""

import argparse
import logging
import sys

import numpy as np
import pandas as pd

from .. import classifiers as clf
from .._validation import ConfigurationError, IngestionError, InvalidDataError, NumericError
from ..simgen import SCENARIOS, ScenarioSpec
from .experiments import (
    _STATISTICS,
    dumps,
    loocv,
    monte_carlo,
    spectra_report,
    spectra_table,
)
from .io import ingest_csv

log = logging.getLogger("spike")

EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_NUMERIC = 4


def _methods(text, allowed):
    methods = [m.strip() for m in text.split(",") if m.strip()]
    unknown = [m for m in methods if m not in allowed]
    if unknown or not methods:
        raise ConfigurationError(f"unknown methods {unknown}; choose from {sorted(allowed)}")
    return methods


def _k(text):
    if text in ("auto", "fixed-from-full"):
        return text
    parts = text.split(",")
    try:
        ks = [int(v) for v in parts]
    except ValueError:
        raise ConfigurationError(f"--k must be 'auto', 'fixed-from-full', K or K1,K2; got {text!r}") from None
    if len(ks) == 1:
        return (ks[0], ks[0])
    if len(ks) == 2:
        return tuple(ks)
    raise ConfigurationError(f"--k takes one or two integers, got {text!r}")


def _add_input(p, name="--input"):
    p.add_argument(name, required=True, help="CSV file (gzip accepted)")
    p.add_argument("--features-as-rows", action="store_true",
                   help="rows are features and the header lists samples")
    p.add_argument("--label-col", default="label", help="label column (or row) name")


def _add_center(p):
    p.add_argument("--center", dest="center", action="store_true", default=True,
                   help="subtract the pooled training mean (default)")
    p.add_argument("--no-center", dest="center", action="store_false")


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_spectra(args):
    table = ingest_csv(args.input, args.features_as_rows, args.label_col)
    report = spectra_report(table, r_max=args.r_max, center=args.center,
                            shuffle_seed=args.shuffle_seed)
    _write(args.out, dumps(report) + "\n")
    if args.csv:
        spectra_table(report).to_csv(args.csv, index=False, float_format="%.17g")
    for c in report["classes"]:
        log.info("class %d: k_hat=%d", c["class"], c["k_hat"])


def cmd_loocv(args):
    table = ingest_csv(args.input, args.features_as_rows, args.label_col)
    report = loocv(table, methods=_methods(args.methods, set(_STATISTICS)), center=args.center,
                   k=_k(args.k))
    if args.json:
        report.write_json(args.json)
    _write(args.out, report.table().to_csv(index=False, float_format="%.17g"))


def cmd_classify(args):
    train = ingest_csv(args.train, args.features_as_rows, args.label_col)
    test = ingest_csv(args.test, args.features_as_rows, args.label_col, require_labels=False)
    if test.p != train.p:
        raise ConfigurationError(f"train has {train.p} features but test has {test.p}")
    train.require_min_class_size(4)
    methods = _methods(args.methods, set(_STATISTICS))
    k = _k(args.k)
    if k == "fixed-from-full":
        k = ("auto", "auto")
    model = clf.fit(train.class_sample(1), train.class_sample(2), k1=k[0], k2=k[1],
                    center=args.center)
    for note in model.notes:
        log.warning(note)
    out = pd.DataFrame({"sample": np.arange(test.n)})
    if test.labels is not None:
        out["true_label"] = test.labels
    for m in methods:
        s = np.atleast_1d(_STATISTICS[m](model, test.features))
        out[f"{m}_statistic"] = s
        out[f"{m}_label"] = np.where(s < 0, 1, 2)
    _write(args.out, out.to_csv(index=False, float_format="%.17g"))


def cmd_simulate(args):
    spec = ScenarioSpec(args.scenario.upper(), args.p, args.seed, args.reps)
    allowed = set(_STATISTICS) | {"tdbda_oracle"}
    report = monte_carlo(spec, methods=_methods(args.methods, allowed), k_policy=args.k_policy,
                         fixed_training=args.fixed_training)
    text = dumps(report.to_dict()) + "\n"
    _write(args.out, text)


def build_parser():
    parser = argparse.ArgumentParser(prog="spike", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectra", help="contribution ratios and selected number of spikes")
    _add_input(p)
    p.add_argument("--out", default="-", help="JSON report path (default stdout)")
    p.add_argument("--csv", help="also write a plot-ready CSV table")
    p.add_argument("--r-max", type=int, default=10)
    p.add_argument("--center", action="store_true", help="subtract the pooled mean first")
    p.add_argument("--shuffle-seed", type=int, default=None,
                   help="randomize the sample order of the cross-data-matrix split")
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("loocv", help="leave-one-out error rates")
    _add_input(p)
    p.add_argument("--methods", default="tdbda,dbda,dlda,dqda")
    p.add_argument("--k", default="auto", help="auto, fixed-from-full, K or K1,K2")
    _add_center(p)
    p.add_argument("--out", default="-", help="CSV table path (default stdout)")
    p.add_argument("--json", help="also write the full JSON report")
    p.set_defaults(func=cmd_loocv)

    p = sub.add_parser("classify", help="fit on one file and classify another")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--features-as-rows", action="store_true")
    p.add_argument("--label-col", default="label")
    p.add_argument("--methods", default="tdbda")
    p.add_argument("--k", default="auto")
    _add_center(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="Monte Carlo error rates on a simulated scenario")
    p.add_argument("--scenario", required=True, type=str.lower,
                   choices=[s.lower() for s in SCENARIOS])
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--methods", default="dbda,tdbda,tdbda_naive,tdbda_oracle")
    p.add_argument("--k-policy", choices=("fixed", "auto"), default="fixed")
    p.add_argument("--fixed-training", action="store_true",
                   help="reuse one training set and redraw only the test points")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except IngestionError as exc:
        print(f"spike: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except (ConfigurationError, InvalidDataError) as exc:
        print(f"spike: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"spike: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
