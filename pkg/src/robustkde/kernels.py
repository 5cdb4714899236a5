"""Radial positive semi-definite smoothing kernels.

Three families are shipped, all normalized to integrate to one over R^d so
that weighted kernel sums are densities:

* ``gaussian``:   (2*pi)^(-d/2) * sigma^(-d) * exp(-r^2 / (2 sigma^2))
* ``student``:    ((nu*pi)^(-d/2) / sigma^d) * G((nu+d)/2)/G(nu/2)
                  * (1 + r^2/(nu sigma^2))^(-(nu+d)/2), the multivariate
                  t density with scale sigma^2 I (heavy tails; nu = 1 is
                  the Cauchy kernel)
* ``laplacian``:  c_d * sigma^(-d) * exp(-r / sigma), with
                  c_d = Gamma(d/2) / (2 pi^(d/2) Gamma(d))

All evaluations are pure functions of immutable inputs and safe to call
concurrently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import cdist
from scipy.special import gammaln

from .exceptions import DataError, DimensionMismatch

FAMILIES = ("gaussian", "student", "laplacian")


@dataclass(frozen=True)
class KernelSpec:
    """A radial PSD kernel family with bandwidth ``sigma`` on R^``dim``.

    ``nu`` (degrees of freedom) is only meaningful for the Student family
    and defaults to 1, the heavy-tailed canonical choice.
    """

    family: str
    sigma: float
    dim: int
    nu: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DataError(f"sigma must be a positive finite real, got {self.sigma}")
        if not (isinstance(self.dim, (int, np.integer)) and self.dim >= 1):
            raise DataError(f"dim must be a positive integer, got {self.dim}")
        if self.family == "student":
            nu = 1.0 if self.nu is None else float(self.nu)
            if not (np.isfinite(nu) and nu > 0):
                raise DataError(f"nu must be a positive finite real, got {self.nu}")
            object.__setattr__(self, "nu", nu)
        elif self.nu is not None:
            raise DataError(f"nu is only valid for the student family, not {self.family!r}")

    def to_dict(self) -> dict:
        d = {"family": self.family, "sigma": self.sigma, "dim": int(self.dim)}
        if self.family == "student":
            d["nu"] = self.nu
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(family=d["family"], sigma=float(d["sigma"]), dim=int(d["dim"]),
                   nu=float(d["nu"]) if "nu" in d and d["nu"] is not None else None)

    @classmethod
    def from_json(cls, s: str) -> "KernelSpec":
        return cls.from_dict(json.loads(s))


def laplacian_normalizer(dim: int) -> float:
    """c_d such that c_d * integral of exp(-||u||) over R^d equals 1."""
    return math.exp(gammaln(dim / 2.0) - gammaln(float(dim))
                    - (dim / 2.0) * math.log(math.pi) - math.log(2.0))


def radial_profile(spec: KernelSpec, sqdist, sigma=None):
    """Kernel value as a function of squared distance.

    ``sigma`` may override the spec bandwidth with an array broadcastable
    against ``sqdist`` (used by the variable-bandwidth estimator).
    """
    t = np.maximum(np.asarray(sqdist, dtype=float), 0.0)
    s = np.asarray(spec.sigma if sigma is None else sigma, dtype=float)
    d = spec.dim
    if spec.family == "gaussian":
        return (2.0 * np.pi) ** (-d / 2.0) * s ** (-d) * np.exp(-t / (2.0 * s ** 2))
    if spec.family == "student":
        nu = spec.nu
        const = math.exp(gammaln((nu + d) / 2.0) - gammaln(nu / 2.0)) * (nu * np.pi) ** (-d / 2.0)
        return const * s ** (-d) * (1.0 + t / (nu * s ** 2)) ** (-(nu + d) / 2.0)
    # laplacian
    return laplacian_normalizer(d) * s ** (-d) * np.exp(-np.sqrt(t) / s)


def tau(spec: KernelSpec) -> float:
    """RKHS norm of the feature map, sqrt(k(0, 0)); constant for radial kernels."""
    return float(np.sqrt(radial_profile(spec, 0.0)))


def _as_points(x, dim: int, name: str) -> NDArray[np.float64]:
    p = np.asarray(x, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2 or p.shape[1] != dim:
        raise DimensionMismatch(f"{name} must have dimension {dim}, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise DataError(f"{name} contains non-finite coordinates")
    return p


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """k_sigma(x, y) for single points x, y in R^dim."""
    xa = _as_points(x, spec.dim, "x")
    ya = _as_points(y, spec.dim, "y")
    if xa.shape[0] != 1 or ya.shape[0] != 1:
        raise DimensionMismatch("eval_kernel expects single points; use cross_gram for batches")
    sq = float(np.sum((xa[0] - ya[0]) ** 2))
    return float(radial_profile(spec, sq))


def gram(spec: KernelSpec, points) -> NDArray[np.float64]:
    """Symmetric n x n matrix of pairwise kernel evaluations.

    The result has constant diagonal tau^2 and is positive semi-definite up
    to floating-point rounding.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if p.shape[0] < 1:
        raise DataError("gram requires at least one point")
    p = _as_points(p, spec.dim, "points")
    sq = cdist(p, p, "sqeuclidean")
    k = radial_profile(spec, sq)
    return 0.5 * (k + k.T)


def cross_gram(spec: KernelSpec, points_a, points_b) -> NDArray[np.float64]:
    """m x n matrix of kernel evaluations between two point sets."""
    a = _as_points(points_a, spec.dim, "points_a")
    b = _as_points(points_b, spec.dim, "points_b")
    sq = cdist(a, b, "sqeuclidean")
    return radial_profile(spec, sq)
