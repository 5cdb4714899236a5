"""Command-line interface.

Subcommands: fit, score, influence, kl, auc, benchmark, synth. Every
command exits 0 on success; failures print a single machine-parsable line
``error:<category>: <message>`` to stderr and exit nonzero. JSON artifacts
embed the resolved configuration and a version string; CSV artifacts carry
the same provenance in a leading ``#`` comment line.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys

import numpy as np

from . import __version__
from . import estimators as est
from . import evaluation as ev
from .influence import alpha_measure as _alpha_measure
from .influence import beta_measure as _beta_measure
from .influence import influence as _influence
from .data import Dataset, load_csv, synth_gaussian_mixture, synth_uniform_box
from .estimators import FitConfig
from .exceptions import DataError, RkdeError
from .kernels import KernelSpec
from .loss import LossSpec


def version_string() -> str:
    """Package version plus the git description when available."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _provenance(args: argparse.Namespace) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "func"}
    return {"version": version_string(), "config": config}


def _read_points(path: str, label_column: str | None, nominal_labels: str | None):
    """Numeric feature matrix from a headered CSV, optionally label-filtered."""
    if label_column:
        labels = (nominal_labels or "").split(",") if nominal_labels else []
        if not labels:
            raise DataError("--nominal-labels is required when --label-column is given")
        ds = load_csv(path, label_column, labels)
        return ds.nominal
    rows, bad = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file; a header row is required") from None
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                bad.append(line_no)
    if bad:
        raise DataError(f"{path}: non-numeric rows at lines {bad}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=float)


def _kernel_from_args(args, points) -> KernelSpec:
    sigma = args.sigma if args.sigma is not None else est.median_nn_bandwidth(points)
    nu = getattr(args, "nu", None)
    return KernelSpec(args.kernel, sigma=sigma, dim=points.shape[1],
                      nu=nu if args.kernel == "student" else None)


def _loss_from_args(args) -> LossSpec | None:
    if args.loss in ("quadratic", "absolute"):
        return LossSpec(args.loss)
    if args.loss == "huber":
        if args.a is None:
            raise DataError("--loss huber requires --a")
        return LossSpec("huber", a=args.a)
    if args.loss == "hampel":
        if args.a is None or args.b is None or args.c is None:
            return None  # selected automatically from the median-fit distances
        return LossSpec("hampel", a=args.a, b=args.b, c=args.c)
    raise DataError(f"unknown loss {args.loss!r}")


def _write_json(path: str, doc: dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def cmd_fit(args) -> int:
    points = _read_points(args.data, args.label_column, args.nominal_labels)
    kernel = _kernel_from_args(args, points)
    cfg = FitConfig(rel_tol=args.tol, max_iter=args.max_iter, init=args.init)
    if args.estimator == "kde":
        model = est.fit_kde(points, kernel)
    elif args.estimator == "vkde":
        model = est.fit_vkde(points, kernel)
    else:
        loss = _loss_from_args(args)
        if loss is None:
            model, _ = est.fit_rkde_auto(points, kernel, cfg)
        else:
            model = est.fit_rkde(points, kernel, loss, cfg)
    est.save_model(model, args.out, provenance=_provenance(args))
    meta = model.fit_meta
    if meta is not None:
        print(f"fitted {args.estimator}: n={model.n} iterations={meta.iterations} "
              f"objective={meta.objective:.6e} converged={meta.converged}")
    else:
        print(f"fitted {args.estimator}: n={model.n}")
    return 0


def _parse_grid(spec: str, dim: int):
    segments = spec.split(",")
    if len(segments) != dim:
        raise DataError(f"--grid needs {dim} comma-separated lo:hi:count segments, got {len(segments)}")
    axes = []
    for seg in segments:
        parts = seg.split(":")
        if len(parts) != 3:
            raise DataError(f"bad grid segment {seg!r}; expected lo:hi:count")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        axes.append(np.linspace(lo, hi, count))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cmd_score(args) -> int:
    model = est.load_model(args.model)
    if args.grid:
        points = _parse_grid(args.grid, model.dim)
    elif args.data:
        points = _read_points(args.data, None, None)
    else:
        raise DataError("score requires --data or --grid")
    vals = np.atleast_1d(est.evaluate(model, points))
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        f.write("# provenance: " + json.dumps(_provenance(args)) + "\n")
        writer = csv.writer(f)
        writer.writerow([f"x{i + 1}" for i in range(model.dim)] + ["density"])
        for row, v in zip(points, vals):
            writer.writerow([repr(float(c)) for c in row] + [repr(float(v))])
    print(f"scored {points.shape[0]} points")
    return 0


def cmd_influence(args) -> int:
    model = est.load_model(args.model)
    if args.x_prime:
        xps = [np.asarray([float(v) for v in xp.split(",")]) for xp in args.x_prime]
    elif args.data:
        xps = list(_read_points(args.data, None, None))
    else:
        raise DataError("influence requires --x-prime or --data")
    records = []
    for xp in xps:
        res = _influence(model, xp)
        rec = res.to_dict()
        rec["alpha_measure"] = _alpha_measure(model, xp)
        rec["beta_measure"] = (_beta_measure(model, xp)
                               if model.kernel.family == "gaussian" else None)
        records.append(rec)
    _write_json(args.out, {"provenance": _provenance(args), "results": records})
    print(f"computed influence at {len(records)} point(s)")
    return 0


def cmd_kl(args) -> int:
    model = est.load_model(args.model)
    reference = est.load_model(args.reference)
    n = args.n_samples if args.n_samples else 2 * model.n
    kl = ev.kl_divergence(model, reference, n, args.seed)
    _write_json(args.out, {"provenance": _provenance(args),
                           "kl": kl.value, "stderr": kl.stderr,
                           "effectively_infinite": kl.infinite, "n_samples": kl.n_samples})
    print(f"kl={kl.value:.6e} stderr={kl.stderr:.3e} infinite={kl.infinite}")
    return 0


def cmd_auc(args) -> int:
    model = est.load_model(args.model)
    nominal = _read_points(args.nominal, None, None)
    anomalous = _read_points(args.anomalous, None, None)
    report = ev.roc_auc(model, nominal, anomalous)
    _write_json(args.out, {"provenance": _provenance(args), "auc": report.auc,
                           "roc": [list(pt) for pt in report.roc]})
    print(f"auc={report.auc:.6f}")
    return 0


def _synth_dataset(name: str, seed: int, n_nominal: int, n_contaminating: int) -> Dataset:
    means = np.array([[-2.5, 0.0], [2.5, 0.0]])
    covs = np.array([np.diag([1.0, 0.6]), np.diag([0.8, 1.2])])
    nominal = synth_gaussian_mixture(means, covs, [0.5, 0.5], n_nominal, seed * 7 + 1)
    pool = synth_uniform_box([(-8.0, 8.0), (-8.0, 8.0)], n_contaminating, seed * 7 + 2)
    return Dataset(name=name, nominal=nominal, contaminating=pool)


def cmd_benchmark(args) -> int:
    datasets = []
    for path in args.data or []:
        if not args.label_column or not args.nominal_labels:
            raise DataError("--label-column and --nominal-labels are required with --data")
        datasets.append(load_csv(path, args.label_column, args.nominal_labels.split(",")))
    for k in range(args.synth_datasets):
        datasets.append(_synth_dataset(f"synth{k}", args.seed + 101 * k,
                                       args.synth_nominal, args.synth_pool))
    if not datasets:
        raise DataError("benchmark requires --data files and/or --synth-datasets > 0")
    estimators = args.estimators.split(",")
    epsilons = [float(e) for e in args.epsilons.split(",")]
    cfg = FitConfig(rel_tol=args.tol, max_iter=args.max_iter)
    rows = []
    for ds in datasets:
        rows.extend(ev.run_benchmark(ds, estimators, epsilons, args.permutations,
                                     args.seed, cfg))
    with open(args.out_csv, "w", newline="", encoding="utf-8") as f:
        f.write("# provenance: " + json.dumps(_provenance(args)) + "\n")
        writer = csv.writer(f)
        writer.writerow(["dataset", "estimator", "epsilon", "anomaly_proportion",
                         "permutation", "kl", "kl_infinite_flag", "auc"])
        for r in rows:
            writer.writerow([r.dataset, r.estimator, repr(r.epsilon), repr(r.anomaly_proportion),
                             r.permutation, repr(r.kl), int(r.kl_infinite), repr(r.auc)])

    signed = {}
    if len(estimators) >= 2 and len(datasets) >= 1:
        for i, m1 in enumerate(estimators):
            for m2 in estimators[i + 1:]:
                for eps in epsilons:
                    for measure in ("kl", "auc"):
                        key = f"{m1}_vs_{m2}|eps={eps}|{measure}"
                        res = ev.signed_rank_across_datasets(rows, measure, m1, m2, eps)
                        signed[key] = res.to_dict()
    doc = {"provenance": _provenance(args), "signed_rank": signed,
           "rows": [{"dataset": r.dataset, "estimator": r.estimator, "epsilon": r.epsilon,
                     "anomaly_proportion": r.anomaly_proportion, "permutation": r.permutation,
                     "kl": r.kl, "kl_infinite_flag": r.kl_infinite, "auc": r.auc,
                     "roc": [list(pt) for pt in r.roc]} for r in rows]}
    _write_json(args.out_json, doc)
    print(f"benchmark: {len(rows)} rows over {len(datasets)} dataset(s)")
    return 0


def cmd_synth(args) -> int:
    ds = _synth_dataset("synth", args.seed, args.n_nominal, args.n_contaminating)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        f.write("# provenance: " + json.dumps(_provenance(args)) + "\n")
        writer = csv.writer(f)
        writer.writerow(["x1", "x2", "label"])
        for row in ds.nominal:
            writer.writerow([repr(float(row[0])), repr(float(row[1])), 0])
        for row in ds.contaminating:
            writer.writerow([repr(float(row[0])), repr(float(row[1])), 1])
    print(f"wrote {ds.nominal.shape[0]} nominal + {ds.contaminating.shape[0]} contaminating points")
    return 0


def _add_common_fit_flags(p: argparse.ArgumentParser):
    p.add_argument("--kernel", default="gaussian", choices=["gaussian", "student", "laplacian"])
    p.add_argument("--sigma", type=float, default=None,
                   help="kernel bandwidth (default: median nearest-neighbor distance)")
    p.add_argument("--nu", type=float, default=None, help="Student degrees of freedom")
    p.add_argument("--loss", default="hampel",
                   choices=["quadratic", "absolute", "huber", "hampel"])
    p.add_argument("--a", type=float, default=None, help="loss threshold a")
    p.add_argument("--b", type=float, default=None, help="Hampel threshold b")
    p.add_argument("--c", type=float, default=None, help="Hampel threshold c")
    p.add_argument("--tol", type=float, default=1e-8, help="relative objective tolerance")
    p.add_argument("--max-iter", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustkde",
                                     description="Robust kernel density estimation toolkit")
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a density model from CSV data")
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default=None)
    p.add_argument("--nominal-labels", default=None, help="comma-separated label values")
    p.add_argument("--estimator", default="rkde", choices=["kde", "vkde", "rkde"])
    p.add_argument("--init", default="median", choices=["median", "uniform"])
    _add_common_fit_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="evaluate a fitted model at points or on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--grid", default=None, help="lo:hi:count per dimension, comma-separated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("influence", help="influence coefficients at contaminating points")
    p.add_argument("--model", required=True)
    p.add_argument("--x-prime", action="append", default=None,
                   help="comma-separated coordinates; repeatable")
    p.add_argument("--data", default=None, help="CSV of x' rows")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("kl", help="Monte Carlo KL divergence between two fitted models")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--n-samples", type=int, default=None, help="default: 2n")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("auc", help="anomaly-detection ROC/AUC of a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--nominal", required=True)
    p.add_argument("--anomalous", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_auc)

    p = sub.add_parser("benchmark", help="contamination benchmark with signed-rank summary")
    p.add_argument("--data", action="append", default=None, help="CSV dataset; repeatable")
    p.add_argument("--label-column", default=None)
    p.add_argument("--nominal-labels", default=None)
    p.add_argument("--synth-datasets", type=int, default=0,
                   help="number of synthetic 2-D datasets to add")
    p.add_argument("--synth-nominal", type=int, default=200)
    p.add_argument("--synth-pool", type=int, default=100)
    p.add_argument("--estimators", default="kde,rkde")
    p.add_argument("--epsilons", default="0,0.1,0.2")
    p.add_argument("--permutations", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("synth", help="generate the 2-D contaminated synthetic dataset")
    p.add_argument("--n-nominal", type=int, default=200)
    p.add_argument("--n-contaminating", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RkdeError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
