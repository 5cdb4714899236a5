"""Finite representations of RKHS elements and their distance calculus.

An element g = sum_i w_i Phi(X_i) is represented by its anchor points and
weight vector. Distances reduce to quadratic forms in the Gram matrix:

    ||Phi(X_j) - g||^2 = K_jj - 2 (K w)_j + w' K w.

Tiny negative values of these forms (floating-point PSD violations) are
clamped to zero before taking square roots.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from . import kernels, loss as loss_mod
from .exceptions import DataError, DimensionMismatch
from .kernels import KernelSpec


class RkhsPoint:
    """Immutable element g = sum_i w_i Phi(X_i) of the RKHS.

    The quadratic form w' K w is cached at construction since it appears in
    every distance evaluation; pass a precomputed ``gram`` to avoid an
    O(n^2) rebuild.
    """

    __slots__ = ("anchors", "weights", "kernel", "quad")

    def __init__(self, anchors, weights, kernel: KernelSpec, gram: NDArray | None = None):
        a = np.asarray(anchors, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.shape[0] != a.shape[0]:
            raise DimensionMismatch(
                f"weights of length {w.shape} do not match {a.shape[0]} anchors")
        if not np.all(np.isfinite(w)):
            raise DataError("weights must be finite")
        k = kernels.gram(kernel, a) if gram is None else np.asarray(gram, dtype=float)
        if k.shape != (a.shape[0], a.shape[0]):
            raise DimensionMismatch(f"gram of shape {k.shape} does not match {a.shape[0]} anchors")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "quad", float(w @ k @ w))

    def __setattr__(self, name, value):
        raise AttributeError("RkhsPoint is immutable")

    @property
    def n(self) -> int:
        return self.anchors.shape[0]


def _clamped_sqrt(sq):
    return np.sqrt(np.maximum(sq, 0.0))


def all_dists(g: RkhsPoint, gram: NDArray) -> NDArray[np.float64]:
    """Vector of ||Phi(X_j) - g|| over all anchors j, via one mat-vec."""
    kw = gram @ g.weights
    sq = np.diagonal(gram) - 2.0 * kw + g.quad
    return _clamped_sqrt(sq)


def point_to_element_dist(g: RkhsPoint, j: int, gram: NDArray) -> float:
    """||Phi(X_j) - g|| for a single anchor index j."""
    if not 0 <= j < g.n:
        raise DimensionMismatch(f"index {j} out of range for {g.n} anchors")
    sq = gram[j, j] - 2.0 * float(gram[j] @ g.weights) + g.quad
    return float(_clamped_sqrt(sq))


def external_dist(g: RkhsPoint, x) -> float:
    """||Phi(x) - g|| for an arbitrary point x (not necessarily an anchor)."""
    row = kernels.cross_gram(g.kernel, x, g.anchors)[0]
    t2 = kernels.tau(g.kernel) ** 2
    sq = t2 - 2.0 * float(row @ g.weights) + g.quad
    return float(_clamped_sqrt(sq))


def stationarity_residual(g: RkhsPoint, loss: loss_mod.LossSpec, gram: NDArray,
                          base_weights: NDArray | None = None,
                          dist_floor: float | None = None) -> float:
    """RKHS norm of the stationarity map V(g).

    V(g) = sum_i nu_i phi(d_i) (Phi(X_i) - g) with nu the base measure
    weights (uniform 1/n by default); zero exactly at a stationary point of
    the M-estimation objective. Expressed in weight coordinates the norm is
    a quadratic form in the Gram matrix.
    """
    n = g.n
    nu = np.full(n, 1.0 / n) if base_weights is None else np.asarray(base_weights, dtype=float)
    d = all_dists(g, gram)
    floor = dist_floor if dist_floor is not None else loss_mod.DEFAULT_DIST_FLOOR
    v = nu * loss_mod.phi(loss, d, floor=floor)
    u = v - v.sum() * g.weights
    return float(_clamped_sqrt(float(u @ gram @ u)))
