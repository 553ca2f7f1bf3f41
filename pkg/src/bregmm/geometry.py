"""Bregman geometries and relative smoothness constants.

A geometry is a convex generator h on the image space of the inner map;
its Bregman distance D_h(u, v) = h(u) - h(v) - <grad h(v), u - v> replaces
the squared Euclidean distance in all surrogates.  Four kinds are
supported: quadratic, diagonally weighted quadratic, Burg entropy (on the
positive orthant), and linear (whose distance vanishes identically, the
right choice for concave outers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateGeometryError, DomainError
from .problem import SmoothOuter

Array = np.ndarray

#: numeric safeguard for the Burg domain, relative to the box scale
BURG_DOMAIN_EPS = 1e-8


class Geometry:
    """Bregman generator h with gradient, domain and convexity modulus."""

    def __init__(self, kind, weights=None, slope=None, box_upper=None):
        if kind not in ("quadratic", "diag-quadratic", "burg-entropy", "linear"):
            raise ConfigError(f"unknown geometry kind {kind!r}")
        self.kind = kind
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.slope = None if slope is None else np.asarray(slope, dtype=float)
        self.box_upper = box_upper
        if kind == "diag-quadratic":
            if self.weights is None or np.any(self.weights <= 0.0):
                raise DegenerateGeometryError("diagonal weights must be strictly positive")

    # -- constructors -------------------------------------------------

    @classmethod
    def quadratic(cls) -> "Geometry":
        return cls("quadratic")

    @classmethod
    def diag_quadratic(cls, weights) -> "Geometry":
        return cls("diag-quadratic", weights=weights)

    @classmethod
    def burg_entropy(cls, box_upper: float) -> "Geometry":
        """Burg entropy; strong convexity is reported on (0, box_upper]."""
        return cls("burg-entropy", box_upper=float(box_upper))

    @classmethod
    def linear(cls, slope) -> "Geometry":
        return cls("linear", slope=slope)

    # -- basic data ---------------------------------------------------

    @property
    def domain(self) -> str:
        return "positive-orthant" if self.kind == "burg-entropy" else "all-space"

    @property
    def strong_convexity(self) -> float:
        if self.kind == "quadratic":
            return 1.0
        if self.kind == "diag-quadratic":
            return float(np.min(self.weights))
        if self.kind == "burg-entropy":
            # h'' = 1/v^2 >= 1/b^2 on (0, b]; global strong convexity fails
            return 1.0 / (self.box_upper * self.box_upper)
        return 0.0

    def in_interior(self, v: Array) -> bool:
        if self.kind == "burg-entropy":
            return bool(np.all(np.asarray(v) > 0.0))
        return True

    def domain_floor(self, scale: float = 1.0) -> float:
        """Numeric lower bound used when gridding Burg subproblems."""
        if self.kind == "burg-entropy":
            return BURG_DOMAIN_EPS * max(scale, 1.0)
        return -math.inf

    # -- values -------------------------------------------------------

    def h(self, v: Array) -> float:
        v = np.asarray(v, dtype=float)
        if self.kind == "quadratic":
            return 0.5 * float(v @ v)
        if self.kind == "diag-quadratic":
            return 0.5 * float((self.weights * v) @ v)
        if self.kind == "burg-entropy":
            if np.any(v <= 0.0):
                return math.inf
            return -float(np.sum(np.log(v)))
        return float(self.slope @ v)

    def grad_h(self, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        if self.kind == "quadratic":
            return v.copy()
        if self.kind == "diag-quadratic":
            return self.weights * v
        if self.kind == "burg-entropy":
            if np.any(v <= 0.0):
                raise DomainError("grad h requested outside the positive orthant")
            return -1.0 / v
        return np.broadcast_to(self.slope, v.shape).astype(float)

    def bregman_elementwise(self, u: Array, v: Array) -> Array:
        """Per-coordinate Bregman terms; +inf where the domain is violated.

        Broadcasts, so u may be a (n, k) candidate matrix against a column
        anchor v.
        """
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.kind == "quadratic":
            d = u - v
            return 0.5 * d * d
        if self.kind == "diag-quadratic":
            d = u - v
            w = self.weights if u.ndim == 1 else self.weights[:, None]
            return 0.5 * w * d * d
        if self.kind == "burg-entropy":
            with np.errstate(divide="ignore", invalid="ignore"):
                r = u / v
                out = np.where((u > 0.0) & (v > 0.0), r - np.log(np.where(r > 0, r, 1.0)) - 1.0, np.inf)
            return out
        return np.zeros(np.broadcast_shapes(u.shape, v.shape))


def bregman(geom: Geometry, u: Array, v: Array) -> float:
    """D_h(u, v); +inf sentinel when v is outside the interior of dom h."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ConfigError(f"shape mismatch {u.shape} vs {v.shape}")
    if not geom.in_interior(v):
        return math.inf
    vals = geom.bregman_elementwise(u, v)
    return float(np.sum(vals))


def diag_dominant_weights(A: Array) -> Array:
    """Row sums of |A^T A|; makes diag(d) - A^T A diagonally dominant PSD."""
    A = np.asarray(A, dtype=float)
    M = np.abs(A.T @ A)
    d = M.sum(axis=1)
    if np.any(d == 0.0):
        idx = int(np.flatnonzero(d == 0.0)[0])
        raise DegenerateGeometryError(f"zero column in A (weight {idx} vanishes)")
    return d


@dataclass(frozen=True)
class RelativeSmoothness:
    """Constant L with L*h - G convex on the domain interior."""

    L: float
    certificate: str  # "analytic" | "spectral" | "supplied"

    def __post_init__(self):
        if self.L <= 0.0:
            raise ConfigError("relative smoothness constant must be positive")


def supplied_smoothness(L: float) -> RelativeSmoothness:
    return RelativeSmoothness(L=float(L), certificate="supplied")


def _diag_minus_gram_psd(weights: Array, A: Array) -> bool:
    M = np.diag(weights) - A.T @ A
    lam = float(np.linalg.eigvalsh(M)[0])
    return lam >= -1e-10 * max(1.0, float(np.max(weights)))


def smoothness_constant(outer: SmoothOuter, geom: Geometry) -> RelativeSmoothness:
    """L for the supported (outer kind, geometry kind) pairs.

    Least squares against the diagonally dominant quadratic gives L = 1.
    The KL divergence against Burg entropy gives L = ||f||_1.  The smoothed
    truncated quadratic has curvature at most 2 A^T A, so the same diagonal
    weights certify L = 2.  A linear geometry (vanishing distance) admits
    any constant; 1 is returned.
    """
    if geom.kind == "linear":
        return RelativeSmoothness(1.0, "analytic")
    if outer.kind == "least-squares":
        if geom.kind == "diag-quadratic":
            if not _diag_minus_gram_psd(geom.weights, outer.A):
                raise ConfigError("weights do not dominate A^T A; supply L explicitly")
            return RelativeSmoothness(1.0, "analytic")
        if geom.kind == "quadratic":
            s = float(np.linalg.norm(outer.A, 2))
            return RelativeSmoothness(s * s, "spectral")
    if outer.kind == "kl-divergence" and geom.kind == "burg-entropy":
        return RelativeSmoothness(float(np.sum(np.abs(outer.f))), "analytic")
    if outer.kind == "truncated-quadratic":
        if geom.kind == "diag-quadratic":
            if not _diag_minus_gram_psd(geom.weights, outer.A):
                raise ConfigError("weights do not dominate A^T A; supply L explicitly")
            return RelativeSmoothness(2.0, "analytic")
        if geom.kind == "quadratic":
            s = float(np.linalg.norm(outer.A, 2))
            return RelativeSmoothness(2.0 * s * s, "spectral")
    raise ConfigError(
        f"no analytic constant for ({outer.kind}, {geom.kind}); supply L explicitly")


def relative_smoothness_spotcheck(outer: SmoothOuter, geom: Geometry, L: float,
                                  trials: int, seed: int,
                                  lo: Array, hi: Array) -> float:
    """Worst sampled ratio D_G(z, w) / D_h(z, w) over pairs in [lo, hi].

    A correct constant keeps the ratio at or below L (up to roundoff); a
    vanishing distance (linear h) passes vacuously whenever D_G <= 0.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    worst = -math.inf
    for _ in range(trials):
        z = rng.uniform(lo, hi)
        w = rng.uniform(lo, hi)
        gz = outer.value(z)
        gw = outer.value(w)
        if math.isinf(gz) or math.isinf(gw):
            continue
        dg = gz - gw - float(outer.gradient(w) @ (z - w))
        dh = bregman(geom, z, w)
        if dh <= 0.0 or math.isinf(dh):
            # vanishing or undefined distance: only a nonpositive D_G passes
            if dg > 1e-12 * (1.0 + abs(gz)) and dh == 0.0:
                worst = math.inf
            continue
        worst = max(worst, dg / dh)
    return worst
