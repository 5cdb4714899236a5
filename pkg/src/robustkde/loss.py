"""Robust loss families for M-estimation of the kernel mean.

Each family supplies four functions of the nonnegative RKHS distance x:

* ``rho``   -- the loss itself, reconstructed as the exact integral of psi
               with rho(0) = 0,
* ``psi``   -- its derivative,
* ``phi``   -- psi(x) / x, extended by its limit at 0,
* ``q_fn``  -- x * psi'(x) - psi(x), the curvature term used by the
               influence-function linear system.

Piecewise branches follow each family's own interval notation (Huber:
[0, a] then (a, inf); Hampel: [0, a), [a, b), [b, c), [c, inf)); q_fn is
the only function whose value depends on the knot assignment, since psi,
phi, and rho are continuous.

The absolute loss violates the finite-phi(0) assumption, so ``phi`` floors
its argument (Weiszfeld-style regularization); it exists to support the
median-based initialization of the robust fit.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

FAMILIES = ("quadratic", "absolute", "huber", "hampel")

DEFAULT_DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class LossSpec:
    """A robust loss family with thresholds in RKHS-distance units.

    Huber uses ``a`` only; Hampel requires 0 < a <= b < c. Quadratic and
    absolute take no parameters.
    """

    family: str
    a: float | None = None
    b: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "huber":
            if self.a is None or not (np.isfinite(self.a) and self.a > 0):
                raise DataError(f"huber loss requires a > 0, got {self.a}")
        elif self.family == "hampel":
            if self.a is None or self.b is None or self.c is None:
                raise DataError("hampel loss requires parameters a, b, c")
            if not (0 < self.a <= self.b < self.c) or not np.isfinite(self.c):
                raise DataError(f"hampel requires 0 < a <= b < c, got ({self.a}, {self.b}, {self.c})")
        elif self.a is not None or self.b is not None or self.c is not None:
            raise DataError(f"{self.family} loss takes no threshold parameters")

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "huber":
            d["a"] = self.a
        elif self.family == "hampel":
            d.update(a=self.a, b=self.b, c=self.c)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(family=d["family"], a=d.get("a"), b=d.get("b"), c=d.get("c"))

    @classmethod
    def from_json(cls, s: str) -> "LossSpec":
        return cls.from_dict(json.loads(s))


def _check_nonneg(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DataError("loss functions are defined for nonnegative distances only")
    return arr


def psi(spec: LossSpec, x):
    """Derivative of the loss at distance x >= 0."""
    v = _check_nonneg(x)
    if spec.family == "quadratic":
        return v.copy() if v.ndim else float(v)
    if spec.family == "absolute":
        out = np.where(v > 0, 1.0, 0.0)
        return out if v.ndim else float(out)
    if spec.family == "huber":
        out = np.minimum(v, spec.a)
        return out if v.ndim else float(out)
    a, b, c = spec.a, spec.b, spec.c
    out = np.select(
        [v < a, v < b, v < c],
        [v, a, a * (c - v) / (c - b)],
        default=0.0,
    )
    return out if v.ndim else float(out)


def phi(spec: LossSpec, x, floor: float = DEFAULT_DIST_FLOOR):
    """psi(x)/x extended by its limit at zero.

    ``floor`` only matters for the absolute loss, whose phi diverges at 0.
    """
    v = _check_nonneg(x)
    if spec.family == "quadratic":
        out = np.ones_like(v)
        return out if v.ndim else float(out)
    if spec.family == "absolute":
        out = 1.0 / np.maximum(v, floor)
        return out if v.ndim else float(out)
    if spec.family == "huber":
        out = np.where(v <= spec.a, 1.0, spec.a / np.maximum(v, spec.a))
        return out if v.ndim else float(out)
    a, b, c = spec.a, spec.b, spec.c
    safe = np.maximum(v, a)  # divisions only used on branches where v >= a
    out = np.select(
        [v < a, v < b, v < c],
        [1.0, a / safe, a * (c - v) / ((c - b) * safe)],
        default=0.0,
    )
    return out if v.ndim else float(out)


def rho(spec: LossSpec, x):
    """Loss value: exact piecewise integral of psi with rho(0) = 0."""
    v = _check_nonneg(x)
    if spec.family == "quadratic":
        out = 0.5 * v ** 2
        return out if v.ndim else float(out)
    if spec.family == "absolute":
        return v.copy() if v.ndim else float(v)
    if spec.family == "huber":
        a = spec.a
        out = np.where(v <= a, 0.5 * v ** 2, a * v - 0.5 * a ** 2)
        return out if v.ndim else float(out)
    a, b, c = spec.a, spec.b, spec.c
    rho_a = 0.5 * a ** 2
    rho_b = rho_a + a * (b - a)
    rho_c = rho_b + 0.5 * a * (c - b)
    vc = np.minimum(v, c)
    third = rho_b + a * (c * (vc - b) - 0.5 * (vc ** 2 - b ** 2)) / (c - b)
    out = np.select(
        [v < a, v < b, v < c],
        [0.5 * v ** 2, rho_a + a * (v - a), third],
        default=rho_c,
    )
    return out if v.ndim else float(out)


def q_fn(spec: LossSpec, x):
    """x * psi'(x) - psi(x); zero wherever psi is linear through the origin."""
    v = _check_nonneg(x)
    if spec.family == "quadratic":
        out = np.zeros_like(v)
        return out if v.ndim else float(out)
    if spec.family == "absolute":
        out = np.where(v > 0, -1.0, 0.0)
        return out if v.ndim else float(out)
    if spec.family == "huber":
        # closed-right first branch, matching psi's interval notation
        out = np.where(v <= spec.a, 0.0, -spec.a)
        return out if v.ndim else float(out)
    a, b, c = spec.a, spec.b, spec.c
    out = np.select(
        [v < a, v < b, v < c],
        [0.0, -a, -a * c / (c - b)],
        default=0.0,
    )
    return out if v.ndim else float(out)


def select_hampel_params(dists) -> tuple[float, float, float]:
    """Hampel thresholds (a, b, c) = (median, 75th, 85th percentile) of dists.

    Percentiles interpolate linearly between order statistics. A degenerate
    spread (a == b == c) is flagged with a warning but still returned.
    """
    d = np.asarray(dists, dtype=float)
    if d.size == 0:
        raise DataError("select_hampel_params requires at least one distance")
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise DataError("distances must be finite and nonnegative")
    a, b, c = (float(p) for p in np.percentile(d, [50.0, 75.0, 85.0]))
    if a == c:
        warnings.warn("degenerate Hampel parameters: a == b == c; "
                      "all distances are (nearly) identical", RuntimeWarning)
    return a, b, c
