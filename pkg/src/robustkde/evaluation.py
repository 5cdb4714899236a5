"""Evaluation protocol: KL divergence, anomaly-detection ROC/AUC, the
Wilcoxon signed-rank comparison, and the contamination benchmark loop.

Conventions fixed here:

* KL divergence is estimated as the *mean* of log density ratios over a
  sample drawn from the first model. When the reference density underflows
  to zero at a sample point while the candidate is positive, the log ratio
  is clipped at 700 (so exp stays inside double range) and the result is
  flagged effectively infinite rather than silently truncated.
* Anomalies are the positive class. A point is declared anomalous when the
  fitted density falls at or below the sweep threshold, so low density
  means detection; AUC uses the rank (Mann-Whitney) formulation with ties
  counted half, which equals trapezoidal integration of the emitted ROC.
* The signed-rank test drops zero differences, average-ranks ties, and
  computes the exact two-sided p-value by dynamic programming over the
  achievable rank sums for up to 25 effective pairs; larger samples use
  the normal approximation with tie and continuity corrections.
"""

from __future__ import annotations

import csv as csv_mod
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.stats import rankdata

from . import estimators as est
from .data import Dataset, make_rng, mix_contamination
from .estimators import DensityModel, FitConfig
from .exceptions import DataError, UnsupportedError
from .kernels import KernelSpec

LOG_RATIO_CLIP = 700.0
EXACT_WILCOXON_MAX_N = 25

ESTIMATOR_NAMES = ("kde", "vkde", "rkde")


@dataclass(frozen=True)
class KlEstimate:
    """Monte Carlo KL divergence estimate with its sampling error."""

    value: float
    stderr: float
    infinite: bool
    n_samples: int
    seed: int


@dataclass(frozen=True)
class EvalReport:
    """One evaluation of a fitted model: KL and/or detection performance."""

    kl: float | None
    kl_infinite: bool
    auc: float | None
    roc: tuple
    seed: int


@dataclass(frozen=True)
class SignedRankResult:
    """Wilcoxon signed-rank comparison of paired performance differences."""

    r1: float
    r2: float
    t_stat: float
    p_value: float
    n_effective: int

    def to_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "t_stat": self.t_stat,
                "p_value": self.p_value, "n_effective": self.n_effective}


def sample_from_model(model: DensityModel, count: int, seed: int) -> NDArray[np.float64]:
    """Draw an i.i.d. sample from a fitted Gaussian-kernel model.

    Mixture sampling: pick component i with probability w_i, then add
    N(0, sigma_i^2 I) kernel noise. Student and Laplacian kernels have no
    sampler here.
    """
    if model.kernel.family != "gaussian":
        raise UnsupportedError(f"sampling is implemented for Gaussian kernels only, "
                               f"not {model.kernel.family!r}")
    rng = make_rng(seed)
    n, d = model.train.shape
    idx = rng.choice(n, size=count, p=model.weights / model.weights.sum())
    noise = rng.standard_normal((count, d))
    if model.kind == "vkde":
        sig = model.sigmas[idx]
    else:
        sig = np.full(count, model.kernel.sigma)
    return model.train[idx] + sig[:, None] * noise


def kl_divergence(model_f: DensityModel, model_ref: DensityModel,
                  n_samples: int, seed: int) -> KlEstimate:
    """Estimate KL(model_f || model_ref) by sampling from model_f."""
    if model_f.dim != model_ref.dim:
        raise DataError("models must share the same dimension")
    xs = sample_from_model(model_f, n_samples, seed)
    f_vals = est.evaluate(model_f, xs)
    ref_vals = est.evaluate(model_ref, xs)
    tiny = np.finfo(float).tiny
    dead = ref_vals == 0.0
    log_ratio = np.where(dead & (f_vals > 0), LOG_RATIO_CLIP, 0.0)
    ok = ~dead
    log_ratio[ok] = np.log(np.maximum(f_vals[ok], tiny)) - np.log(ref_vals[ok])
    value = float(log_ratio.mean())
    stderr = float(log_ratio.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("inf")
    return KlEstimate(value=value, stderr=stderr, infinite=bool(np.any(dead & (f_vals > 0))),
                      n_samples=n_samples, seed=seed)


def roc_auc(model: DensityModel, nominal_test, anomalous_test, seed: int = 0) -> EvalReport:
    """ROC and AUC of the density-threshold anomaly detector.

    The nominal region of the detector is {x : density(x) > lambda};
    sweeping lambda over the observed scores traces the ROC from (0, 0)
    to (1, 1) in (false-positive, true-positive) coordinates.
    """
    s_nom = np.atleast_1d(est.evaluate(model, nominal_test))
    s_anom = np.atleast_1d(est.evaluate(model, anomalous_test))
    if s_nom.size == 0 or s_anom.size == 0:
        raise DataError("roc_auc needs at least one nominal and one anomalous point")
    thresholds = np.unique(np.concatenate([s_nom, s_anom]))
    roc = [(0.0, 0.0)]
    for lam in thresholds:
        fpr = float(np.mean(s_nom <= lam))
        tpr = float(np.mean(s_anom <= lam))
        roc.append((fpr, tpr))
    # rank (Mann-Whitney) AUC, anomalies positive, low score = detection
    all_scores = np.concatenate([s_anom, s_nom])
    ranks = rankdata(all_scores)
    n_a, n_n = s_anom.size, s_nom.size
    auc = (ranks[n_a:].sum() - n_n * (n_n + 1) / 2.0) / (n_a * n_n)
    return EvalReport(kl=None, kl_infinite=False, auc=float(auc), roc=tuple(roc), seed=seed)


def _exact_signed_rank_counts(scaled_ranks) -> NDArray:
    """Distribution of the positive rank sum over all 2^n sign patterns.

    ``scaled_ranks`` are the (possibly tied, average) ranks doubled so they
    are integers; returns integer counts indexed by achievable doubled sum.
    """
    total = int(scaled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in scaled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:counts.size - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(h) -> SignedRankResult:
    """Two-sided Wilcoxon signed-rank test on paired differences h.

    Zero differences are dropped; tied magnitudes receive average ranks.
    The statistic is T = min(R1, R2) where R1 and R2 are the rank sums of
    the positive and negative differences.
    """
    diffs = np.asarray(h, dtype=float)
    if diffs.ndim != 1:
        raise DataError("h must be a 1-D vector of paired differences")
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        raise DataError("all differences are zero; the signed-rank test is undefined")
    ranks = rankdata(np.abs(diffs))
    r1 = float(ranks[diffs > 0].sum())
    r2 = float(ranks[diffs < 0].sum())
    t_stat = min(r1, r2)
    n = diffs.size
    if n <= EXACT_WILCOXON_MAX_N:
        scaled = np.rint(2.0 * ranks).astype(int)
        counts = _exact_signed_rank_counts(scaled)
        total = int(scaled.sum())
        t2 = int(round(2.0 * t_stat))
        lower = int(sum(counts[: t2 + 1]))
        upper = int(sum(counts[total - t2:]))
        p = min(1.0, (lower + upper) / 2.0 ** n)
    else:
        mean = float(ranks.sum()) / 2.0
        var = float((ranks ** 2).sum()) / 4.0  # rank powers absorb the tie correction
        z = (t_stat - mean + 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * _norm_cdf(z))
    return SignedRankResult(r1=r1, r2=r2, t_stat=t_stat, p_value=float(p), n_effective=n)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass(frozen=True)
class BenchmarkRow:
    """One (estimator, epsilon, permutation) cell of the benchmark table."""

    dataset: str
    estimator: str
    epsilon: float
    anomaly_proportion: float
    permutation: int
    kl: float
    kl_infinite: bool
    auc: float
    seed: int
    roc: tuple = field(repr=False, default=())


def _fit_by_name(name: str, train, kernel, cfg: FitConfig):
    if name == "kde":
        return est.fit_kde(train, kernel)
    if name == "vkde":
        return est.fit_vkde(train, kernel)
    if name == "rkde":
        model, _ = est.fit_rkde_auto(train, kernel, cfg)
        return model
    raise DataError(f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")


def run_benchmark(dataset: Dataset, estimator_names, epsilons, n_permutations: int,
                  seed: int, cfg: FitConfig | None = None) -> list[BenchmarkRow]:
    """Contamination benchmark over one dataset.

    For each permutation the nominal sample is split into train and test
    halves (the dataset's own partitions are used when present), the train
    half is contaminated at rate epsilon from the contamination pool, each
    estimator is fitted with the automatic recipe, and KL (against a KDE on
    the held-out nominal test half) plus detection AUC are recorded.

    Permutations run in parallel when the RKDE_THREADS environment variable
    allows; each permutation derives its own generator streams from
    (seed, permutation), so the output is independent of thread count.
    """
    cfg = cfg or FitConfig()
    estimator_names = list(estimator_names)
    epsilons = list(epsilons)
    for name in estimator_names:
        if name not in ESTIMATOR_NAMES:
            raise DataError(f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")
    n0 = dataset.nominal.shape[0]
    partitions = list(dataset.partitions[:n_permutations])
    if len(dataset.partitions) and len(dataset.partitions) < n_permutations:
        raise DataError(f"dataset supplies {len(dataset.partitions)} partitions but "
                        f"{n_permutations} were requested")
    if not partitions:
        for perm in range(n_permutations):
            order = make_rng(seed, perm, 0).permutation(n0)
            half = n0 // 2
            partitions.append((order[:half], order[half:]))

    def one_permutation(perm: int) -> list[BenchmarkRow]:
        tr_idx, te_idx = partitions[perm]
        nom_train = dataset.nominal[np.asarray(tr_idx)]
        nom_test = dataset.nominal[np.asarray(te_idx)]
        ref_kernel = _gaussian_for(nom_test)
        reference = est.fit_kde(nom_test, ref_kernel)
        rows = []
        for ei, eps in enumerate(epsilons):
            mix_seed = _stream(seed, perm, 1, ei)
            train, mask, used = mix_contamination(nom_train, dataset.contaminating,
                                                  eps, mix_seed, return_indices=True)
            holdout = np.setdiff1d(np.arange(dataset.contaminating.shape[0]), used)
            anomalous_test = dataset.contaminating[holdout]
            kernel = _gaussian_for(train)
            for si, name in enumerate(estimator_names):
                model = _fit_by_name(name, train, kernel, cfg)
                kl_seed = _stream(seed, perm, 2, ei, si)
                kl = kl_divergence(model, reference, 2 * train.shape[0], kl_seed)
                if anomalous_test.shape[0]:
                    report = roc_auc(model, nom_test, anomalous_test, seed=kl_seed)
                    auc, roc = report.auc, report.roc
                else:
                    auc, roc = float("nan"), ()
                rows.append(BenchmarkRow(
                    dataset=dataset.name, estimator=name, epsilon=float(eps),
                    anomaly_proportion=float(eps / (1.0 + eps)), permutation=perm,
                    kl=kl.value, kl_infinite=kl.infinite, auc=auc, seed=seed, roc=roc))
        return rows

    workers = max(1, int(os.environ.get("RKDE_THREADS", "1")))
    if workers == 1:
        per_perm = [one_permutation(p) for p in range(n_permutations)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_perm = list(pool.map(one_permutation, range(n_permutations)))
    return [row for rows in per_perm for row in rows]


def _gaussian_for(points) -> KernelSpec:
    return KernelSpec("gaussian", sigma=est.median_nn_bandwidth(points), dim=points.shape[1])


def _stream(seed: int, *parts: int) -> int:
    # fold stream indices into one integer so sub-seeds never collide
    out = seed
    for p in parts:
        out = out * 1000003 + p + 1
    return out


def signed_rank_across_datasets(rows: list[BenchmarkRow], measure: str,
                                method_1: str, method_2: str,
                                epsilon: float) -> SignedRankResult:
    """Signed-rank comparison of two estimators across datasets at one epsilon.

    The paired difference per dataset is the mean of ``measure`` over
    permutations for method_2 minus method_1 (KL: smaller is better) or
    method_1 minus method_2 (AUC: larger is better), so positive differences
    always mean method_1 won.
    """
    if measure not in ("kl", "auc"):
        raise DataError(f"measure must be 'kl' or 'auc', got {measure!r}")
    names = sorted({r.dataset for r in rows})
    diffs = []
    for ds in names:
        vals = {}
        for m in (method_1, method_2):
            sel = [getattr(r, measure) for r in rows
                   if r.dataset == ds and r.estimator == m and r.epsilon == epsilon]
            if not sel:
                raise DataError(f"no rows for dataset {ds!r}, estimator {m!r}, eps={epsilon}")
            vals[m] = float(np.mean(sel))
        if measure == "kl":
            diffs.append(vals[method_2] - vals[method_1])
        else:
            diffs.append(vals[method_1] - vals[method_2])
    return wilcoxon_signed_rank(np.asarray(diffs))


def rows_to_csv(rows: list[BenchmarkRow], path):
    """One CSV row per estimator x epsilon x permutation."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv_mod.writer(f)
        writer.writerow(["dataset", "estimator", "epsilon", "anomaly_proportion",
                         "permutation", "kl", "kl_infinite_flag", "auc"])
        for r in rows:
            writer.writerow([r.dataset, r.estimator, repr(r.epsilon),
                             repr(r.anomaly_proportion), r.permutation,
                             repr(r.kl), int(r.kl_infinite), repr(r.auc)])


def rows_to_json(rows: list[BenchmarkRow], path):
    """Full records including ROC curves."""
    doc = [{"dataset": r.dataset, "estimator": r.estimator, "epsilon": r.epsilon,
            "anomaly_proportion": r.anomaly_proportion, "permutation": r.permutation,
            "kl": r.kl, "kl_infinite_flag": r.kl_infinite, "auc": r.auc,
            "seed": r.seed, "roc": [list(pt) for pt in r.roc]} for r in rows]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")
