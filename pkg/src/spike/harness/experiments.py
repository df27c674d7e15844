"""Experiment orchestration: Monte Carlo error rates, LOOCV and spectral reports.

Every replication of a Monte Carlo study owns its own random stream, so the
report does not depend on how replications are scheduled across workers.
LOOCV is fully deterministic.
"""

import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .. import classifiers as clf
from .._validation import ConfigurationError, SpikeError
from ..simgen import make_scenario, rng_for
from ..spectra import cdm_spectrum, default_gamma, select_k, tau_tilde

__all__ = [
    "SCHEMA_VERSION",
    "MethodResult",
    "ExperimentReport",
    "monte_carlo",
    "loocv",
    "holdout",
    "spectra_report",
    "spectra_table",
    "worker_count",
    "dumps",
]

SCHEMA_VERSION = 1

_STATISTICS = {
    "dbda": clf.dbda_statistic,
    "tdbda": clf.tdbda_statistic,
    "tdbda_naive": clf.tdbda_naive_statistic,
    "dlda": clf.dlda_statistic,
    "dqda": clf.dqda_statistic,
}
_NEEDS_K = {"tdbda", "tdbda_naive"}


def worker_count():
    """Worker threads: ``SPIKE_THREADS`` if set, else the CPU count."""
    env = os.environ.get("SPIKE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"SPIKE_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError(f"SPIKE_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


def _check_methods(methods, allowed):
    methods = list(methods)
    unknown = [m for m in methods if m not in allowed]
    if unknown:
        raise ConfigurationError(f"unknown methods {unknown}; choose from {sorted(allowed)}")
    if not methods:
        raise ConfigurationError("no methods requested")
    return methods


@dataclass
class MethodResult:
    """Error counts for one method. ``trials[i]`` excludes failed fits."""

    errors: list = field(default_factory=lambda: [0, 0])
    trials: list = field(default_factory=lambda: [0, 0])
    failures: int = 0

    def rate(self, i):
        return self.errors[i] / self.trials[i] if self.trials[i] else float("nan")

    @property
    def e1(self):
        return self.rate(0)

    @property
    def e2(self):
        return self.rate(1)

    @property
    def e(self):
        return (self.e1 + self.e2) / 2.0

    def se(self, i=None):
        """``sqrt(e (1 - e) / R)`` for class ``i``, or for the average when ``i`` is None."""
        if i is None:
            e, r = self.e, min(self.trials)
        else:
            e, r = self.rate(i), self.trials[i]
        return math.sqrt(e * (1.0 - e) / r) if r else float("nan")

    def to_dict(self):
        return {
            "e1": self.e1,
            "e2": self.e2,
            "e": self.e,
            "se1": self.se(0),
            "se2": self.se(1),
            "se": self.se(),
            "errors": list(self.errors),
            "trials": list(self.trials),
            "failures": self.failures,
        }


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    results: dict
    asymptotic: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "config": self.config,
            "results": {m: r.to_dict() for m, r in self.results.items()},
            "asymptotic": self.asymptotic,
            "notes": list(self.notes),
        }

    def write_json(self, path):
        Path(path).write_text(dumps(self.to_dict()) + "\n", encoding="utf-8")

    def table(self):
        rows = [{"method": m, **{k: v for k, v in r.to_dict().items()
                                 if k not in ("errors", "trials")}}
                for m, r in self.results.items()]
        return pd.DataFrame(rows)

    def write_csv(self, path):
        self.table().to_csv(path, index=False, float_format="%.17g")


# -- JSON with fixed float formatting ----------------------------------------------------

_TOKEN = re.compile(r'"\x00(\d+)\x00"')


def dumps(obj):
    """JSON text with every float written to 17 significant digits (NaN -> null)."""
    floats = []

    def walk(o):
        if isinstance(o, dict):
            return {str(k): walk(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [walk(v) for v in o]
        if isinstance(o, np.ndarray):
            return [walk(v) for v in o.tolist()]
        if isinstance(o, (bool, np.bool_)):
            return bool(o)
        if isinstance(o, (int, np.integer)):
            return int(o)
        if isinstance(o, (float, np.floating)):
            floats.append(float(o))
            return f"\x00{len(floats) - 1}\x00"
        return o

    text = json.dumps(walk(obj), indent=2, ensure_ascii=False)

    def fmt(m):
        x = floats[int(m.group(1))]
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"

    return _TOKEN.sub(fmt, text.replace("\\u0000", "\x00"))


# -- Monte Carlo -----------------------------------------------------------------------


def _run_replication(truth, sampler, rep, methods, k_policy, training):
    X1, X2, x01, x02 = sampler.replication(rep)
    if training is not None:
        X1, X2 = training
    X0 = np.column_stack([x01, x02])
    out = {}
    model_methods = [m for m in methods if m in _STATISTICS]
    if model_methods:
        if any(m in _NEEDS_K for m in model_methods):
            k = ("auto", "auto") if k_policy == "auto" else truth.k
        else:
            k = (0, 0)
        try:
            model = clf.fit(X1, X2, k1=k[0], k2=k[1])
        except SpikeError:
            model = None
        for m in model_methods:
            out[m] = None if model is None else np.asarray(_STATISTICS[m](model, X0))
    if "tdbda_oracle" in methods:
        out["tdbda_oracle"] = np.asarray(clf.oracle_statistic(truth.H1, truth.H2, X1, X2, X0))
    return out


def monte_carlo(spec, methods=("dbda", "tdbda"), k_policy="fixed", fixed_training=False,
                workers=None):
    """Error rates of ``methods`` on a simulated scenario.

    Each replication draws fresh training samples and one test point per class
    from its own stream. With ``fixed_training`` the training samples of
    replication 0 are reused throughout and only the test points change.
    ``k_policy`` is ``"fixed"`` (true number of spikes) or ``"auto"``.
    """
    methods = _check_methods(methods, set(_STATISTICS) | {"tdbda_oracle"})
    if k_policy not in ("fixed", "auto"):
        raise ConfigurationError(f"k_policy must be 'fixed' or 'auto', got {k_policy!r}")
    if spec.replications < 1:
        raise ConfigurationError("replications must be >= 1")
    truth, sampler = make_scenario(spec)
    training = sampler.replication(0)[:2] if fixed_training else None
    workers = worker_count() if workers is None else int(workers)

    def task(rep):
        return _run_replication(truth, sampler, rep, methods, k_policy, training)

    reps = range(spec.replications)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(task, reps))
    else:
        outcomes = [task(r) for r in reps]

    results = {m: MethodResult() for m in methods}
    for outcome in outcomes:
        for m in methods:
            s = outcome[m]
            if s is None:
                results[m].failures += 1
                continue
            for i, label in ((0, 1), (1, 2)):
                results[m].trials[i] += 1
                if (1 if s[i] < 0 else 2) != label:
                    results[m].errors[i] += 1

    notes = []
    for m, r in results.items():
        if r.failures:
            notes.append(f"{m}: {r.failures} replications skipped after fit failures")
    return ExperimentReport(
        kind="monte_carlo",
        config={
            "scenario": spec.id,
            "p": spec.p,
            "seed": spec.seed,
            "replications": spec.replications,
            "methods": methods,
            "k_policy": k_policy,
            "fixed_training": bool(fixed_training),
            "n1": truth.n1,
            "n2": truth.n2,
        },
        results=results,
        asymptotic={
            "delta": truth.delta,
            "delta_a": truth.delta_a,
            "edot": list(truth.edot),
            "edot_a": list(truth.edot_a),
        },
        notes=notes,
    )


# -- LOOCV and single hold-out ---------------------------------------------------------


def _parse_k(k):
    if isinstance(k, str):
        return (k, k) if k in ("auto", "fixed-from-full") else None
    if isinstance(k, int):
        return (k, k)
    return tuple(k)


def _full_k(table, center, gamma):
    m = clf.fit(table.class_sample(1), table.class_sample(2), center=center, gamma=gamma)
    return m.k


def holdout(table, index, methods=("tdbda",), center=True, k="auto", gamma=None):
    """Train on every sample except ``index`` and score that sample.

    Returns a dict with the fitted ``k``, per-method statistics and labels,
    and the penalized ratios used when ``k`` was selected automatically.
    """
    methods = _check_methods(methods, set(_STATISTICS))
    kk = _parse_k(k)
    if kk is None:
        raise ConfigurationError(f"bad k specification {k!r}")
    if kk[0] == "fixed-from-full":
        kk = _full_k(table, center, gamma)
    mask = np.ones(table.n, dtype=bool)
    mask[index] = False
    X = table.features[:, mask]
    y = table.labels[mask]
    model = clf.fit(X[:, y == 1], X[:, y == 2], k1=kk[0], k2=kk[1], center=center, gamma=gamma)
    x0 = table.features[:, index]
    out = {"index": int(index), "true_label": int(table.labels[index]), "k": list(model.k),
           "statistics": {}, "labels": {}}
    for m in methods:
        s = float(_STATISTICS[m](model, x0))
        out["statistics"][m] = s
        out["labels"][m] = 1 if s < 0 else 2
    g = default_gamma if gamma is None else gamma
    for i, c in ((1, model.class1), (2, model.class2)):
        if c.cdm is not None:
            out[f"tau_tilde{i}"] = tau_tilde(c.cdm, c.n, g).tolist()
    out["notes"] = list(model.notes)
    return out


def loocv(table, methods=("tdbda", "dbda"), center=True, k="auto", gamma=None, workers=None):
    """Leave-one-out error rates.

    Each fold is recentred with its own pooled training mean when ``center``
    is set, and under ``k="auto"`` the number of spikes is re-selected inside
    every fold. ``k="fixed-from-full"`` selects it once on the full data.
    """
    methods = _check_methods(methods, set(_STATISTICS))
    table.require_min_class_size(5)
    kk = _parse_k(k)
    if kk is None:
        raise ConfigurationError(f"bad k specification {k!r}")
    if kk[0] == "fixed-from-full":
        kk = _full_k(table, center, gamma)
    workers = worker_count() if workers is None else int(workers)

    def fold(i):
        return holdout(table, i, methods=methods, center=center, k=kk, gamma=gamma)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            folds = list(pool.map(fold, range(table.n)))
    else:
        folds = [fold(i) for i in range(table.n)]

    results = {m: MethodResult() for m in methods}
    for f in folds:
        ci = f["true_label"] - 1
        for m in methods:
            results[m].trials[ci] += 1
            if f["labels"][m] != f["true_label"]:
                results[m].errors[ci] += 1
    n1, n2 = table.class_sizes()
    return ExperimentReport(
        kind="loocv",
        config={
            "source": table.source_path,
            "p": table.p,
            "n1": n1,
            "n2": n2,
            "methods": methods,
            "center": bool(center),
            "k": k if isinstance(k, str) else list(kk),
        },
        results=results,
        notes=sorted({n for f in folds for n in f["notes"]}),
    )


# -- spectral diagnostics --------------------------------------------------------------


def spectra_report(table, r_max=10, gamma=None, center=False, shuffle_seed=None):
    """Contribution ratios, penalized ratios and the selected k for each class.

    ``shuffle_seed`` randomizes the column order of the cross-data-matrix
    split; by default the file order is used.
    """
    table.require_min_class_size(4)
    g = default_gamma if gamma is None else gamma
    X = table.features
    if center:
        X = X - X.mean(axis=1, keepdims=True)
    classes = []
    for i in (1, 2):
        Xi = X[:, table.labels == i]
        n = Xi.shape[1]
        perm = None
        if shuffle_seed is not None:
            perm = rng_for(shuffle_seed, i).permutation(n)
        cdm = cdm_spectrum(Xi, permutation=perm)
        r = min(r_max, len(cdm.eps_hat), len(cdm.eta_hat))
        classes.append({
            "class": i,
            "n": n,
            "eps_hat": cdm.eps_hat[:r].tolist(),
            "eta_hat": cdm.eta_hat[:r].tolist(),
            "tau_hat": cdm.tau_hat.tolist(),
            "tau_tilde": tau_tilde(cdm, n, g).tolist(),
            "k_hat": select_k(cdm, n, g),
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "spectra",
        "config": {"source": table.source_path, "p": table.p, "r_max": r_max,
                   "center": bool(center), "shuffle_seed": shuffle_seed},
        "classes": classes,
    }


def spectra_table(report):
    """Plot-ready long table: one row per (class, component)."""
    rows = []
    for c in report["classes"]:
        r = max(len(c["eps_hat"]), len(c["tau_hat"]))
        for j in range(r):
            rows.append({
                "class": c["class"],
                "r": j + 1,
                "eps_hat": c["eps_hat"][j] if j < len(c["eps_hat"]) else np.nan,
                "eta_hat": c["eta_hat"][j] if j < len(c["eta_hat"]) else np.nan,
                "tau_hat": c["tau_hat"][j] if j < len(c["tau_hat"]) else np.nan,
                "tau_tilde": c["tau_tilde"][j] if j < len(c["tau_tilde"]) else np.nan,
            })
    return pd.DataFrame(rows)
