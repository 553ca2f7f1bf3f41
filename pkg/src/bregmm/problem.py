"""Data model for composite energies E(u) = G(rho(u)) + R(u).

The inner map rho is separable (coordinate-wise, possibly with several
output channels per coordinate), the outer function G is smooth on the
interior of its domain, and R is either a separable sum of scalar
penalties or a total-variation term on an image grid.  Infeasibility is
signalled by the +inf sentinel, never by exceptions, so that traces of
energy values remain total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError, NumericalError, StructuralError

Array = np.ndarray


# ---------------------------------------------------------------------------
# scalar functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarFn:
    """A scalar function with vectorized evaluation.

    ``fn`` maps an ndarray to an ndarray of the same shape.  ``deriv`` is
    optional and must agree with central finite differences where present.
    ``prox`` (optional) evaluates argmin_x  fn(x) + (x - v)^2 / (2 t) and is
    only consulted by inner solvers for nonsmooth penalties.
    """

    fn: Callable[[Array], Array]
    deriv: Optional[Callable[[Array], Array]] = None
    prox: Optional[Callable[[Array, float], Array]] = None
    lipschitz_hint: Optional[float] = None
    name: str = ""

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def d(self, x):
        if self.deriv is None:
            raise ConfigError(f"scalar function {self.name!r} has no derivative")
        return self.deriv(np.asarray(x, dtype=float))


def identity_fn() -> ScalarFn:
    return ScalarFn(fn=lambda x: x, deriv=lambda x: np.ones_like(x), name="identity")


def exp_fn() -> ScalarFn:
    return ScalarFn(fn=np.exp, deriv=np.exp, name="exp")


def square_fn() -> ScalarFn:
    return ScalarFn(fn=lambda x: x * x, deriv=lambda x: 2.0 * x,
                    prox=lambda v, t: v / (1.0 + 2.0 * t), name="square")


def sin_fn() -> ScalarFn:
    return ScalarFn(fn=np.sin, deriv=np.cos, name="sin")


def abs_fn() -> ScalarFn:
    def soft(v, t):
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)

    return ScalarFn(fn=np.abs, prox=soft, name="abs")


def check_scalar_derivative(f: ScalarFn, lo: float, hi: float,
                            trials: int = 32, seed: int = 0,
                            h_fd: float = 1e-6) -> float:
    """Max relative error between f.deriv and central differences."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo + 2 * h_fd, hi - 2 * h_fd, size=trials)
    fd = (f(x + h_fd) - f(x - h_fd)) / (2.0 * h_fd)
    an = f.d(x)
    return float(np.max(np.abs(an - fd) / (1.0 + np.abs(an))))


# ---------------------------------------------------------------------------
# inner maps
# ---------------------------------------------------------------------------

class SeparableMap:
    """Coordinate-wise map u -> (f_1(u_1), ..., f_n(u_n))."""

    def __init__(self, fns: Sequence[ScalarFn]):
        self.fns = list(fns)
        # all coordinates sharing one function enables batched evaluation
        self._shared = self.fns[0] if all(f is self.fns[0] for f in self.fns) else None

    @classmethod
    def uniform(cls, fn: ScalarFn, n: int) -> "SeparableMap":
        return cls([fn] * n)

    @property
    def n_inputs(self) -> int:
        return len(self.fns)

    @property
    def n_outputs(self) -> int:
        return len(self.fns)

    def apply(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if u.shape != (len(self.fns),):
            raise StructuralError(f"expected vector of length {len(self.fns)}, got {u.shape}")
        if self._shared is not None:
            return self._shared(u)
        return np.array([f(u[i]) for i, f in enumerate(self.fns)], dtype=float)

    def apply_rows(self, U: Array) -> Array:
        """Evaluate on a (n, k) matrix of per-coordinate candidates."""
        U = np.asarray(U, dtype=float)
        if self._shared is not None:
            return self._shared(U)
        return np.stack([f(U[i]) for i, f in enumerate(self.fns)])

    def deriv(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if self._shared is not None:
            return self._shared.d(u)
        return np.array([f.d(u[i]) for i, f in enumerate(self.fns)], dtype=float)


class ChannelSeparableMap:
    """Per-coordinate map with several output channels.

    Maps u in R^n to the stacked vector (c-major) of channel_c(u_q); every
    output depends on exactly one input coordinate, so majorizers built on a
    separable geometry still decouple coordinate-wise.
    """

    def __init__(self, channels: Sequence[ScalarFn], n: int):
        self.channels = list(channels)
        self.n = int(n)

    @property
    def n_inputs(self) -> int:
        return self.n

    @property
    def n_outputs(self) -> int:
        return len(self.channels) * self.n

    def apply(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise StructuralError(f"expected vector of length {self.n}, got {u.shape}")
        return np.concatenate([c(u) for c in self.channels])

    def apply_rows(self, U: Array) -> Array:
        """(n, k) candidates -> (C, n, k) channel values."""
        return np.stack([c(np.asarray(U, dtype=float)) for c in self.channels])

    def deriv(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        return np.concatenate([c.d(u) for c in self.channels])


class SumCompositionMap:
    """Row-summed map: row i of the image is sum_j rho_ij(u_j).

    Either a full (m, n) grid of scalar functions, or the rank-1 form
    rho_ij(u_j) = a_ij * rho_j(u_j) given by a matrix A and per-column
    functions.
    """

    def __init__(self, row_maps=None, A=None, col_fns=None):
        if (row_maps is None) == (A is None):
            raise StructuralError("give either row_maps or (A, col_fns)")
        self.row_maps = row_maps
        self.A = None if A is None else np.asarray(A, dtype=float)
        self.col_fns = list(col_fns) if col_fns is not None else None
        if self.A is not None and len(self.col_fns) != self.A.shape[1]:
            raise StructuralError("col_fns length must match A columns")

    @property
    def n_inputs(self) -> int:
        if self.A is not None:
            return self.A.shape[1]
        return len(self.row_maps[0])

    @property
    def n_outputs(self) -> int:
        if self.A is not None:
            return self.A.shape[0]
        return len(self.row_maps)

    def apply(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_inputs,):
            raise StructuralError(f"expected vector of length {self.n_inputs}, got {u.shape}")
        if self.A is not None:
            vals = np.array([f(u[j]) for j, f in enumerate(self.col_fns)], dtype=float)
            return self.A @ vals
        return np.array([sum(float(f(u[j])) for j, f in enumerate(row))
                         for row in self.row_maps], dtype=float)


def apply_inner(inner, u: Array) -> Array:
    """Image of u under the inner map (coordinate-wise or row-summed)."""
    return inner.apply(u)


# ---------------------------------------------------------------------------
# smooth outer functions
# ---------------------------------------------------------------------------

def _smoothed_trunc_params(lam: float, delta: float):
    # cap parabola matches value and slope of t^2 at |t| = s and tops out
    # at lam with zero slope at |t| = s + delta:  s^2 + s*delta = lam
    s = 0.5 * (-delta + math.sqrt(delta * delta + 4.0 * lam))
    return s


class SmoothOuter:
    """Outer function G with an analytic gradient.

    Kinds: ``least-squares`` G(v) = 0.5 ||Av - f||^2, ``kl-divergence``
    G(v) = sum_i (Av)_i - f_i log (Av)_i + const (nonnegative, zero at
    Av = f), ``truncated-quadratic`` G(v) = sum_i q((Av - f)_i) for a C^1
    bounded cap q, and ``custom``.  ``value`` returns the +inf sentinel
    outside the domain.
    """

    def __init__(self, kind, value, gradient, domain="all", A=None, f=None,
                 lam=None, delta=None):
        self.kind = kind
        self._value = value
        self._gradient = gradient
        self.domain = domain  # "all" | "positive"
        self.A = A
        self.f = f
        self.lam = lam
        self.delta = delta

    # -- constructors -------------------------------------------------

    @classmethod
    def least_squares(cls, A, f) -> "SmoothOuter":
        A = np.asarray(A, dtype=float)
        f = np.asarray(f, dtype=float)
        if A.shape[0] != f.shape[0]:
            raise StructuralError("A rows must match f length")

        def value(v):
            r = A @ v - f
            return 0.5 * float(r @ r)

        def gradient(v):
            return A.T @ (A @ v - f)

        return cls("least-squares", value, gradient, "all", A=A, f=f)

    @classmethod
    def kl_divergence(cls, A, f) -> "SmoothOuter":
        A = np.asarray(A, dtype=float)
        f = np.asarray(f, dtype=float)
        if np.any(f <= 0):
            raise StructuralError("kl-divergence needs strictly positive data f")
        const = float(np.sum(f * np.log(f) - f))

        def value(v):
            w = A @ v
            if np.any(w <= 0.0):
                return math.inf
            return float(np.sum(w - f * np.log(w))) + const

        def gradient(v):
            w = A @ v
            if np.any(w <= 0.0):
                raise DomainError("kl gradient requested with nonpositive Av")
            return A.T @ (1.0 - f / w)

        return cls("kl-divergence", value, gradient, "positive", A=A, f=f)

    @classmethod
    def truncated_quadratic(cls, A, f, lam=1.0, delta=None) -> "SmoothOuter":
        A = np.asarray(A, dtype=float)
        f = np.asarray(f, dtype=float)
        if delta is None:
            delta = math.sqrt(lam / 2.0)  # makes the cap curvature match q'' = 2
        s = _smoothed_trunc_params(lam, delta)

        def q(t):
            t = np.abs(t)
            out = np.where(t <= s, t * t, lam - (s / delta) * np.square(np.maximum(s + delta - t, 0.0)))
            return out

        def qprime(t):
            a = np.abs(t)
            inner = 2.0 * t
            cap = np.sign(t) * 2.0 * (s / delta) * np.maximum(s + delta - a, 0.0)
            return np.where(a <= s, inner, cap)

        def value(v):
            return float(np.sum(q(A @ v - f)))

        def gradient(v):
            return A.T @ qprime(A @ v - f)

        out = cls("truncated-quadratic", value, gradient, "all", A=A, f=f,
                  lam=lam, delta=delta)
        out._q = q
        out._qprime = qprime
        out._s = s
        return out

    @classmethod
    def custom(cls, value, gradient, domain="all") -> "SmoothOuter":
        return cls("custom", value, gradient, domain)

    # -- evaluation ---------------------------------------------------

    def value(self, v: Array) -> float:
        v = np.asarray(v, dtype=float)
        if self.domain == "positive" and np.any(v <= 0.0):
            return math.inf
        val = self._value(v)
        if isinstance(val, float) and math.isnan(val):
            raise NumericalError("outer value is NaN")
        return float(val)

    def gradient(self, v: Array) -> Array:
        v = np.asarray(v, dtype=float)
        if self.domain == "positive" and np.any(v <= 0.0):
            raise DomainError("gradient requested outside the positive orthant")
        g = np.asarray(self._gradient(v), dtype=float)
        if np.any(np.isnan(g)):
            idx = int(np.flatnonzero(np.isnan(g))[0])
            raise NumericalError("outer gradient is NaN", index=idx)
        return g


def check_gradient(outer: SmoothOuter, v: Array, h_fd: float = 1e-5) -> float:
    """Max relative deviation of the analytic gradient from central differences."""
    v = np.asarray(v, dtype=float)
    if h_fd <= 0:
        raise ConfigError("h_fd must be positive")
    if outer.domain == "positive" and np.any(v <= h_fd):
        raise DomainError("v too close to the domain boundary for differencing")
    g = outer.gradient(v)
    worst = 0.0
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h_fd
        fd = (outer.value(v + e) - outer.value(v - e)) / (2.0 * h_fd)
        worst = max(worst, abs(g[i] - fd) / (1.0 + abs(g[i])))
    return worst


# ---------------------------------------------------------------------------
# regularizers
# ---------------------------------------------------------------------------

class Regularizer:
    """Separable sum of scalar penalties, or (weighted) total variation."""

    def __init__(self, variant, fns=None, alpha=0.0, dims=None,
                 coupling="aniso", gamma=None):
        if variant not in ("none", "separable", "tv"):
            raise StructuralError(f"unknown regularizer variant {variant!r}")
        self.variant = variant
        self.fns = fns
        self.alpha = float(alpha)
        self.dims = dims
        self.coupling = coupling
        self.gamma = gamma  # optional concave per-edge penalty (fn, deriv)
        if variant == "separable":
            self._shared = fns[0] if all(f is fns[0] for f in fns) else None

    @classmethod
    def none(cls) -> "Regularizer":
        return cls("none")

    @classmethod
    def separable(cls, fns: Sequence[ScalarFn]) -> "Regularizer":
        return cls("separable", fns=list(fns))

    @classmethod
    def separable_uniform(cls, fn: ScalarFn, n: int) -> "Regularizer":
        return cls("separable", fns=[fn] * n)

    @classmethod
    def tv(cls, alpha: float, dims, coupling="aniso", gamma=None) -> "Regularizer":
        if coupling not in ("aniso", "iso"):
            raise StructuralError(f"unknown coupling {coupling!r}")
        return cls("tv", alpha=alpha, dims=tuple(dims), coupling=coupling,
                   gamma=gamma)

    def grad_images(self, u: Array):
        """Forward differences with Neumann boundary, as (dx, dy) images."""
        H, W = self.dims
        img = np.asarray(u, dtype=float).reshape(H, W)
        dx = np.zeros_like(img)
        dy = np.zeros_like(img)
        dx[:, :-1] = img[:, 1:] - img[:, :-1]
        dy[:-1, :] = img[1:, :] - img[:-1, :]
        return dx, dy

    def _edge_value(self, t: Array) -> Array:
        if self.gamma is None:
            return np.abs(t)
        return self.gamma[0](np.abs(t))

    def edge_weights(self, u_anchor: Array):
        """Per-edge linearization weights of the edge penalty at the anchor.

        Convex |.| edges return the constant weight 1; a concave penalty is
        linearized at the anchor's edge magnitudes (re-weighting).
        """
        dx, dy = self.grad_images(u_anchor)
        if self.gamma is None:
            return np.ones_like(dx), np.ones_like(dy)
        gp = self.gamma[1]
        return gp(np.abs(dx)), gp(np.abs(dy))

    def value(self, u: Array) -> float:
        u = np.asarray(u, dtype=float)
        if self.variant == "none":
            return 0.0
        if self.variant == "separable":
            if self._shared is not None:
                vals = self._shared(u)
            else:
                vals = np.array([f(u[i]) for i, f in enumerate(self.fns)], dtype=float)
            if np.any(np.isnan(vals)):
                idx = int(np.flatnonzero(np.isnan(vals))[0])
                raise NumericalError("regularizer value is NaN", index=idx)
            return float(np.sum(vals))
        dx, dy = self.grad_images(u)
        if self.coupling == "iso":
            return self.alpha * float(np.sum(np.hypot(dx, dy)))
        return self.alpha * float(np.sum(self._edge_value(dx)) + np.sum(self._edge_value(dy)))

    def value_rows(self, U: Array) -> Array:
        """Per-coordinate penalty values on a (n, k) candidate matrix."""
        if self.variant == "none":
            return 0.0
        if self.variant != "separable":
            raise StructuralError("row evaluation needs a separable regularizer")
        if self._shared is not None:
            return self._shared(U)
        return np.stack([f(U[i]) for i, f in enumerate(self.fns)])

    def deriv(self, u: Array) -> Array:
        if self.variant == "none":
            return np.zeros_like(np.asarray(u, dtype=float))
        if self.variant != "separable":
            raise ConfigError("total variation is not differentiable")
        if self._shared is not None:
            return self._shared.d(u)
        return np.array([f.d(u[i]) for i, f in enumerate(self.fns)], dtype=float)


# ---------------------------------------------------------------------------
# the composite problem
# ---------------------------------------------------------------------------

@dataclass
class CompositeProblem:
    """The triple (G, rho, R) with a box [lo, hi] per coordinate."""

    outer: SmoothOuter
    inner: object
    reg: Regularizer
    lo: Array
    hi: Array

    def __post_init__(self):
        n = self.inner.n_inputs
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (n,)).copy()
        if np.any(self.lo >= self.hi):
            raise StructuralError("box must satisfy lo < hi")

    @property
    def n(self) -> int:
        return self.inner.n_inputs

    @property
    def m(self) -> int:
        return self.inner.n_outputs

    def in_box(self, u: Array) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo) and np.all(u <= self.hi))

    def clip(self, u: Array) -> Array:
        return np.clip(np.asarray(u, dtype=float), self.lo, self.hi)

    def energy(self, u: Array) -> float:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise StructuralError(f"expected vector of length {self.n}, got {u.shape}")
        v = self.inner.apply(u)
        if np.any(np.isnan(v)):
            idx = int(np.flatnonzero(np.isnan(v))[0])
            raise NumericalError("inner map produced NaN", index=idx)
        g = self.outer.value(v)
        if math.isinf(g):
            return math.inf
        return g + self.reg.value(u)


def energy(problem: CompositeProblem, u: Array) -> float:
    """E(u) = G(rho(u)) + R(u); +inf sentinel when rho(u) leaves the domain."""
    return problem.energy(u)
