"""KDE, variable-bandwidth KDE, and robust KDE fitting.

The robust estimator minimizes the average robust loss of RKHS distances
between the feature-mapped training points and a candidate kernel mean.
Fitting alternates weight updates w_i proportional to phi(d_i) with mean
recomputation (kernelized iteratively re-weighted least squares); the
objective is guaranteed nonincreasing across iterations for nonincreasing
phi, which every fit records and asserts in tests.

Automatic parameter selection follows the standard recipe: the kernel
bandwidth is the median nearest-neighbor distance, Hampel thresholds come
from the distance profile of the median (absolute-loss) fit, and the
robust fit is initialized at that median fit.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist

from . import kernels as kernels_mod
from . import loss as loss_mod
from . import rkhs
from .exceptions import DataError, DimensionMismatch, FitError
from .kernels import KernelSpec
from .loss import LossSpec

KINDS = ("kde", "vkde", "rkde")
INITS = ("median", "uniform", "custom")

# The relative-objective rule alone can stop with weight-update gaps around
# 1e-4; convergence additionally requires the fixed-point gap to settle so
# that fitted models satisfy ||w - normalize(phi(d))||_inf <= 1e-6 and
# ||V(f)|| <= 1e-6 * tau with an order of magnitude to spare.
FIXED_POINT_TOL = 1e-7


@dataclass(frozen=True)
class FitConfig:
    """Iteration controls for the robust fit.

    ``dist_floor`` defaults to 1e-12 * tau at fit time; it regularizes the
    absolute loss only. ``init_weights`` is required for init="custom".
    """

    rel_tol: float = 1e-8
    max_iter: int = 200
    init: str = "median"
    init_weights: NDArray | None = None
    dist_floor: float | None = None

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DataError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter < 1:
            raise DataError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.init not in INITS:
            raise DataError(f"init must be one of {INITS}, got {self.init!r}")
        if self.init == "custom" and self.init_weights is None:
            raise DataError("init='custom' requires init_weights")


@dataclass(frozen=True)
class FitMeta:
    """Convergence record of one KIRWLS run."""

    iterations: int
    objective: float
    objective_trace: tuple
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "objective": self.objective,
                "objective_trace": list(self.objective_trace),
                "residual": self.residual, "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> "FitMeta":
        return cls(iterations=int(d["iterations"]), objective=float(d["objective"]),
                   objective_trace=tuple(d["objective_trace"]),
                   residual=float(d["residual"]), converged=bool(d["converged"]))


@dataclass(frozen=True)
class DensityModel:
    """A fitted density estimate: weighted kernel sum over training points."""

    kind: str
    kernel: KernelSpec
    train: NDArray
    weights: NDArray
    sigmas: NDArray | None = None
    loss: LossSpec | None = None
    fit_meta: FitMeta | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"kind must be one of {KINDS}, got {self.kind!r}")

    @property
    def n(self) -> int:
        return self.train.shape[0]

    @property
    def dim(self) -> int:
        return self.train.shape[1]


def _as_train(points) -> NDArray[np.float64]:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.ndim != 2 or p.shape[0] < 1:
        raise DataError(f"training points must form a nonempty n x d matrix, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DataError("training points contain non-finite values")
    return p


def median_nn_bandwidth(points) -> float:
    """Median over points of the distance to their nearest neighbor."""
    p = _as_train(points)
    if p.shape[0] < 2:
        raise DataError("median_nn_bandwidth requires at least two points")
    d = cdist(p, p)
    np.fill_diagonal(d, np.inf)
    bw = float(np.median(d.min(axis=1)))
    if bw <= 0.0:
        raise DataError("median nearest-neighbor distance is zero "
                        "(too many duplicate points); supply a bandwidth explicitly")
    return bw


def fit_kde(points, kernel: KernelSpec) -> DensityModel:
    """Standard KDE: uniform weights 1/n."""
    p = _as_train(points)
    _check_dim(p, kernel)
    n = p.shape[0]
    return DensityModel(kind="kde", kernel=kernel, train=p, weights=np.full(n, 1.0 / n))


def fit_vkde(points, kernel: KernelSpec) -> DensityModel:
    """Variable-bandwidth KDE.

    Each point gets sigma_i = sigma * sqrt(eta / pilot_i) where pilot_i is a
    pilot KDE evaluated at X_i and eta is the mean pilot value, so bandwidths
    inflate where the pilot density is low. Every component keeps its own
    normalizer, so the estimate still integrates to one.
    """
    p = _as_train(points)
    _check_dim(p, kernel)
    pilot = fit_kde(p, kernel)
    vals = evaluate(pilot, p)
    bad = np.flatnonzero(vals <= 0.0)
    if bad.size:
        raise FitError(f"pilot KDE underflows to zero at training point index {bad[0]}; "
                       "increase the bandwidth")
    eta = float(vals.mean())
    sigmas = kernel.sigma * np.sqrt(eta / vals)
    n = p.shape[0]
    return DensityModel(kind="vkde", kernel=kernel, train=p,
                        weights=np.full(n, 1.0 / n), sigmas=sigmas)


def _check_dim(p: NDArray, kernel: KernelSpec):
    if p.shape[1] != kernel.dim:
        raise DimensionMismatch(f"points of dimension {p.shape[1]} do not match kernel dim {kernel.dim}")


def _kirwls(points, kernel, loss, cfg, init_w, base_weights=None, gram=None):
    """Core iteration; returns (weights, FitMeta, gram).

    With ``base_weights`` nu (simplex over anchors), minimizes
    sum_i nu_i rho(||Phi(X_i) - g||); the default is the uniform measure.
    """
    K = kernels_mod.gram(kernel, points) if gram is None else gram
    n = K.shape[0]
    t = kernels_mod.tau(kernel)
    floor = cfg.dist_floor if cfg.dist_floor is not None else 1e-12 * t
    w = np.asarray(init_w, dtype=float)
    if w.shape != (n,):
        raise DimensionMismatch(f"initial weights of shape {w.shape} do not match n={n}")
    trace = []
    converged = False
    updates = 0
    while True:
        g = rkhs.RkhsPoint(points, w, kernel, gram=K)
        d = rkhs.all_dists(g, K)
        rho_d = loss_mod.rho(loss, d)
        j_val = float(rho_d.mean()) if base_weights is None else float(base_weights @ rho_d)
        if not np.isfinite(j_val):
            raise FitError("objective is not finite")
        trace.append(j_val)
        u = loss_mod.phi(loss, d, floor=floor)
        if base_weights is not None:
            u = base_weights * u
        s = float(u.sum())
        if not np.isfinite(s) or s <= 0.0:
            raise FitError("every point received zero weight; with the Hampel loss this "
                           "means all distances exceed c -- increase c")
        w_next = u / s
        if len(trace) >= 2:
            prev = trace[-2]
            objective_settled = prev == 0.0 or abs(j_val - prev) < cfg.rel_tol * prev
            gap = np.abs(w_next - w)
            fixed_point_settled = (gap.max() <= FIXED_POINT_TOL
                                   and s * gap.sum() <= FIXED_POINT_TOL)
            if objective_settled and (fixed_point_settled or prev == 0.0):
                converged = True
                break
        if updates >= cfg.max_iter:
            warnings.warn(f"KIRWLS stopped at max_iter={cfg.max_iter} before reaching "
                          f"rel_tol={cfg.rel_tol}", RuntimeWarning)
            break
        w = w_next
        updates += 1
    residual = rkhs.stationarity_residual(g, loss, K, base_weights=base_weights,
                                          dist_floor=floor)
    meta = FitMeta(iterations=updates, objective=trace[-1], objective_trace=tuple(trace),
                   residual=residual, converged=converged)
    return w, meta, K


def fit_median_rkde(points, kernel: KernelSpec, cfg: FitConfig | None = None,
                    gram=None) -> DensityModel:
    """RKDE under the absolute loss: the RKHS geometric median of the data.

    Started from uniform weights. Its distance profile drives Hampel
    threshold selection, and its weights initialize the robust fit.
    """
    p = _as_train(points)
    _check_dim(p, kernel)
    cfg = cfg or FitConfig()
    n = p.shape[0]
    abs_loss = LossSpec("absolute")
    w, meta, _ = _kirwls(p, kernel, abs_loss, cfg, np.full(n, 1.0 / n), gram=gram)
    return DensityModel(kind="rkde", kernel=kernel, train=p, weights=w,
                        loss=abs_loss, fit_meta=meta)


def fit_rkde(points, kernel: KernelSpec, loss: LossSpec,
             cfg: FitConfig | None = None) -> DensityModel:
    """Robust KDE under the given loss.

    Initialization follows ``cfg.init``: the default starts from the
    absolute-loss median fit, "uniform" from 1/n, "custom" from
    ``cfg.init_weights``.
    """
    p = _as_train(points)
    _check_dim(p, kernel)
    cfg = cfg or FitConfig()
    n = p.shape[0]
    K = kernels_mod.gram(kernel, p)
    if cfg.init == "median":
        init_w = fit_median_rkde(p, kernel, cfg, gram=K).weights
    elif cfg.init == "uniform":
        init_w = np.full(n, 1.0 / n)
    else:
        init_w = np.asarray(cfg.init_weights, dtype=float)
        if init_w.shape != (n,) or np.any(init_w < 0) or not np.isclose(init_w.sum(), 1.0):
            raise DataError("custom init_weights must be a length-n simplex vector")
    w, meta, _ = _kirwls(p, kernel, loss, cfg, init_w, gram=K)
    return DensityModel(kind="rkde", kernel=kernel, train=p, weights=w,
                        loss=loss, fit_meta=meta)


def fit_weighted_rkde(points, kernel: KernelSpec, loss: LossSpec, base_weights,
                      cfg: FitConfig | None = None,
                      init_weights=None) -> DensityModel:
    """Robust fit under a nonuniform base measure over the anchor points.

    Minimizes sum_i nu_i rho(||Phi(X_i) - g||) for simplex weights nu.
    Supports sensitivity analyses that reweight individual observations,
    e.g. finite-difference checks of the influence function.
    """
    p = _as_train(points)
    _check_dim(p, kernel)
    cfg = cfg or FitConfig(init="uniform")
    nu = np.asarray(base_weights, dtype=float)
    n = p.shape[0]
    if nu.shape != (n,) or np.any(nu < 0):
        raise DataError("base_weights must be a nonnegative length-n vector")
    if not np.isclose(nu.sum(), 1.0):
        raise DataError("base_weights must sum to 1")
    init_w = np.full(n, 1.0 / n) if init_weights is None else np.asarray(init_weights, dtype=float)
    w, meta, _ = _kirwls(p, kernel, loss, cfg, init_w, base_weights=nu)
    return DensityModel(kind="rkde", kernel=kernel, train=p, weights=w,
                        loss=loss, fit_meta=meta)


def fit_rkde_auto(points, kernel: KernelSpec, cfg: FitConfig | None = None):
    """Full automatic robust fit: median fit, Hampel thresholds, warm start.

    Computes the absolute-loss median fit, sets the Hampel thresholds to the
    (50, 75, 85) percentiles of its distance profile, then fits the Hampel
    RKDE initialized at the median weights. Returns (model, median_model).
    """
    p = _as_train(points)
    _check_dim(p, kernel)
    cfg = cfg or FitConfig()
    K = kernels_mod.gram(kernel, p)
    med = fit_median_rkde(p, kernel, cfg, gram=K)
    g = rkhs.RkhsPoint(p, med.weights, kernel, gram=K)
    dists = rkhs.all_dists(g, K)
    a, b, c = loss_mod.select_hampel_params(dists)
    hampel = LossSpec("hampel", a=a, b=b, c=c)
    w, meta, _ = _kirwls(p, kernel, hampel, cfg, med.weights, gram=K)
    model = DensityModel(kind="rkde", kernel=kernel, train=p, weights=w,
                         loss=hampel, fit_meta=meta)
    return model, med


def _as_batch(x, dim: int):
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        if dim != 1:
            raise DimensionMismatch(f"scalar point given but model dimension is {dim}")
        return pts.reshape(1, 1), True
    if pts.ndim == 1:
        if dim == 1:
            return pts[:, None], False
        if pts.shape[0] == dim:
            return pts[None, :], True
        raise DimensionMismatch(f"point of length {pts.shape[0]} does not match dimension {dim}")
    if pts.ndim == 2 and pts.shape[1] == dim:
        return pts, False
    raise DimensionMismatch(f"points of shape {pts.shape} do not match dimension {dim}")


def evaluate(model: DensityModel, x):
    """Density value(s) of the fitted model at x.

    Accepts a single point (returns float) or an m x d batch (returns a
    length-m array); 1-D input is a batch of scalars when dim == 1.
    """
    X, single = _as_batch(x, model.dim)
    if not np.all(np.isfinite(X)):
        raise DataError("evaluation points contain non-finite values")
    if model.kind == "vkde":
        sq = cdist(X, model.train, "sqeuclidean")
        comp = kernels_mod.radial_profile(model.kernel, sq, sigma=model.sigmas[None, :])
        vals = comp.mean(axis=1)
    else:
        vals = kernels_mod.cross_gram(model.kernel, X, model.train) @ model.weights
    return float(vals[0]) if single else vals


def objective(points, kernel: KernelSpec, loss: LossSpec, weights) -> float:
    """Robust objective J = (1/n) sum_i rho(||Phi(X_i) - g||) at g = sum w_i Phi(X_i)."""
    p = _as_train(points)
    K = kernels_mod.gram(kernel, p)
    g = rkhs.RkhsPoint(p, weights, kernel, gram=K)
    d = rkhs.all_dists(g, K)
    return float(loss_mod.rho(loss, d).mean())


@dataclass(frozen=True)
class ConvexityReport:
    """Diagnostic for strict convexity of the robust objective."""

    n: int
    n_at_least_3: bool
    kernel_matrix_pd: bool
    loss_strictly_convex: bool
    loss_convex_strictly_increasing: bool
    strictly_convex: bool
    notes: str


def check_strict_convexity(points, kernel: KernelSpec, loss: LossSpec) -> ConvexityReport:
    """Report whether strict convexity of the objective is guaranteed.

    Guaranteed when the loss is strictly convex, or when it is convex and
    strictly increasing with n >= 3 and a positive-definite kernel matrix.
    The Hampel loss is non-convex, so no guarantee is ever reported for it.
    """
    p = _as_train(points)
    n = p.shape[0]
    K = kernels_mod.gram(kernel, p)
    try:
        np.linalg.cholesky(K)
        pd = True
    except np.linalg.LinAlgError:
        pd = False
    strictly = loss.family == "quadratic"
    convex_incr = loss.family in ("quadratic", "absolute", "huber")
    verdict = strictly or (convex_incr and n >= 3 and pd)
    if loss.family == "hampel":
        notes = "hampel loss is non-convex: strict convexity not guaranteed"
    elif verdict:
        notes = "strictly convex objective guaranteed"
    else:
        reasons = []
        if n < 3:
            reasons.append("n < 3")
        if not pd:
            reasons.append("kernel matrix not positive definite")
        notes = "not guaranteed: " + ", ".join(reasons) if reasons else "not guaranteed"
    return ConvexityReport(n=n, n_at_least_3=n >= 3, kernel_matrix_pd=pd,
                           loss_strictly_convex=strictly,
                           loss_convex_strictly_increasing=convex_incr,
                           strictly_convex=verdict, notes=notes)


def model_to_dict(model: DensityModel) -> dict:
    return {
        "kind": model.kind,
        "kernel": model.kernel.to_dict(),
        "loss": model.loss.to_dict() if model.loss is not None else None,
        "points": model.train.tolist(),
        "weights": model.weights.tolist(),
        "sigmas": model.sigmas.tolist() if model.sigmas is not None else None,
        "fit_meta": model.fit_meta.to_dict() if model.fit_meta is not None else None,
    }


def model_from_dict(d: dict) -> DensityModel:
    return DensityModel(
        kind=d["kind"],
        kernel=KernelSpec.from_dict(d["kernel"]),
        loss=LossSpec.from_dict(d["loss"]) if d.get("loss") else None,
        train=np.asarray(d["points"], dtype=float),
        weights=np.asarray(d["weights"], dtype=float),
        sigmas=np.asarray(d["sigmas"], dtype=float) if d.get("sigmas") is not None else None,
        fit_meta=FitMeta.from_dict(d["fit_meta"]) if d.get("fit_meta") else None,
    )


def save_model(model: DensityModel, path, provenance: dict | None = None):
    """Write the model as JSON; floats use shortest round-trip encoding."""
    doc = model_to_dict(model)
    if provenance:
        doc["provenance"] = provenance
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_model(path) -> DensityModel:
    with open(path, encoding="utf-8") as f:
        return model_from_dict(json.load(f))
