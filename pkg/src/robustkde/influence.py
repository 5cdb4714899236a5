"""Empirical influence functions for the fitted density estimators.

The influence of a contaminating point x' on a kernel-sum estimator is
itself a kernel expansion,

    IF(x) = sum_i alpha_i k(x, X_i) + alpha' k(x, x'),

so each result is the coefficient pair (alpha vector, alpha' scalar). For
the plain KDE the coefficients are -1/n and 1. For the robust KDE they
solve a dense linear system built from the fitted weights, the Gram
matrix, and the loss curvature at the fitted distances; the system is
solved by LU with partial pivoting and the estimated condition number is
attached to the result.

Because adding contamination cannot change the total mass of a density
estimate, alpha' + sum_i alpha_i = 0 for every estimator and loss; tests
assert this identity throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import kernels as kernels_mod
from . import loss as loss_mod
from . import rkhs
from .estimators import DensityModel, _as_batch
from .exceptions import DataError, NumericsError, UnsupportedError
from .kernels import KernelSpec

# Training distances below this multiple of tau make the q(r)/r^3 curvature
# weights blow up; the linear system is refused instead.
MIN_DIST_TAU_RATIO = 1e-9


@dataclass(frozen=True)
class InfluenceResult:
    """Coefficients of IF(., x') plus the model it belongs to."""

    alphas: NDArray
    alpha_prime: float
    x_prime: NDArray
    model: DensityModel
    condition: float | None = None

    def to_dict(self) -> dict:
        return {"alphas": self.alphas.tolist(), "alpha_prime": self.alpha_prime,
                "x_prime": self.x_prime.tolist(), "condition": self.condition}


def _as_single_point(x, dim: int) -> NDArray[np.float64]:
    X, _ = _as_batch(x, dim)
    if X.shape[0] != 1:
        raise DataError("x_prime must be a single point")
    if not np.all(np.isfinite(X)):
        raise DataError("x_prime contains non-finite values")
    return X[0]


def kde_influence(model: DensityModel, x_prime) -> InfluenceResult:
    """Influence coefficients of the plain KDE: alpha_i = -1/n, alpha' = 1."""
    if model.kind != "kde":
        raise DataError(f"kde_influence requires a KDE model, got kind={model.kind!r}")
    xp = _as_single_point(x_prime, model.dim)
    n = model.n
    return InfluenceResult(alphas=np.full(n, -1.0 / n), alpha_prime=1.0,
                           x_prime=xp, model=model)


def rkde_influence(model: DensityModel, x_prime) -> InfluenceResult:
    """Influence coefficients of the robust KDE at a contaminating point.

    alpha' = n phi(r') / gamma with gamma = sum_i phi(r_i), and alpha solves

        {gamma I + (I - 1 w')' Q (I - 1 w') K} alpha
            = -n phi(r') w - alpha' (I - 1 w')' Q (I - 1 w') k',

    where r_i are the fitted RKHS distances, r' the distance of Phi(x')
    from the fit, Q = diag(q(r_i) / r_i^3), and k' the kernel column at x'.
    """
    if model.kind != "rkde" or model.loss is None:
        raise DataError(f"rkde_influence requires a fitted RKDE model, got kind={model.kind!r}")
    xp = _as_single_point(x_prime, model.dim)
    if np.any(np.all(model.train == xp, axis=1)):
        raise NumericsError("x_prime coincides with a training point; "
                            "the extended kernel matrix is singular")
    loss = model.loss
    kernel = model.kernel
    n = model.n
    K = kernels_mod.gram(kernel, model.train)
    w = model.weights
    g = rkhs.RkhsPoint(model.train, w, kernel, gram=K)
    r = rkhs.all_dists(g, K)
    t = kernels_mod.tau(kernel)
    if np.any(r < MIN_DIST_TAU_RATIO * t):
        raise NumericsError("a training distance is below 1e-9 * tau; the curvature "
                            "weights q(r)/r^3 are unreliable (near-duplicate points?)")
    r_floored = np.maximum(r, 1e-12 * t)
    r_prime = rkhs.external_dist(g, xp)
    phis = loss_mod.phi(loss, r)
    gamma = float(phis.sum())
    if gamma <= 0.0:
        raise NumericsError("sum of phi(r_i) is zero; influence system undefined")
    phi_prime = float(loss_mod.phi(loss, r_prime))
    alpha_prime = n * phi_prime / gamma

    q_diag = loss_mod.q_fn(loss, r) / r_floored ** 3
    centering = np.eye(n) - np.outer(np.ones(n), w)  # I - 1 w'
    curv = centering.T @ (q_diag[:, None] * centering)  # (I - 1 w')' Q (I - 1 w')
    system = gamma * np.eye(n) + curv @ K
    k_prime = kernels_mod.cross_gram(kernel, model.train, xp)[:, 0]
    rhs = -n * phi_prime * w - alpha_prime * (curv @ k_prime)
    cond = float(np.linalg.cond(system, 1))
    try:
        alphas = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"influence linear system is singular "
                            f"(condition estimate {cond:.3e})") from exc
    return InfluenceResult(alphas=alphas, alpha_prime=alpha_prime, x_prime=xp,
                           model=model, condition=cond)


def influence(model: DensityModel, x_prime) -> InfluenceResult:
    """Dispatch on model kind; variable-bandwidth models are unsupported."""
    if model.kind == "kde":
        return kde_influence(model, x_prime)
    if model.kind == "rkde":
        return rkde_influence(model, x_prime)
    raise UnsupportedError("no influence function is available for variable-bandwidth models")


def evaluate_influence(result: InfluenceResult, x):
    """IF(x) = sum_i alpha_i k(x, X_i) + alpha' k(x, x') at one or many x."""
    model = result.model
    X, single = _as_batch(x, model.dim)
    vals = kernels_mod.cross_gram(model.kernel, X, model.train) @ result.alphas
    vals = vals + result.alpha_prime * kernels_mod.cross_gram(model.kernel, X, result.x_prime)[:, 0]
    return float(vals[0]) if single else vals


def alpha_measure(model: DensityModel, x_prime) -> float:
    """IF evaluated at the contaminating point itself: the local impact of x'."""
    res = influence(model, x_prime)
    return float(np.atleast_1d(evaluate_influence(res, res.x_prime[None, :]))[0])


def beta_measure(model: DensityModel, x_prime) -> float:
    """L2 norm of IF(., x') over R^d; Gaussian kernels only.

    Uses the Gaussian convolution identity
    integral k_sigma(x, u) k_sigma(x, v) dx = k_{sigma sqrt 2}(u, v),
    which turns the squared norm into a quadratic form in the Gram matrix of
    the training points plus x' under bandwidth sigma * sqrt(2).
    """
    if model.kernel.family != "gaussian":
        raise UnsupportedError("beta_measure has a closed form only for Gaussian kernels")
    res = influence(model, x_prime)
    z = np.vstack([model.train, res.x_prime[None, :]])
    conv = KernelSpec("gaussian", sigma=model.kernel.sigma * np.sqrt(2.0), dim=model.kernel.dim)
    m = kernels_mod.gram(conv, z)
    coeff = np.append(res.alphas, res.alpha_prime)
    return float(np.sqrt(max(float(coeff @ m @ coeff), 0.0)))
