"""Majorize-minimize solver with Bregman proximity on the inner image.

Each outer iteration minimizes the surrogate

    (1/tau) D_h(rho(u), rho(u^k)) + <grad G(rho(u^k)), rho(u) - rho(u^k)>
        + G(rho(u^k)) + R(u)

globally; for separable rho and R this decouples into coordinate-wise
problems handled by the grid engine, for TV regularizers the surrogate is
routed to the lifting module.  Baselines (gradient descent, forward-
backward splitting with proximity in u, outer linearization, prox-linear,
Adam) share the same trace and termination machinery.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from . import scalar
from .errors import ConfigError, DomainError, StepError, StructuralError
from .geometry import Geometry, RelativeSmoothness, bregman, smoothness_constant
from .problem import (ChannelSeparableMap, CompositeProblem, Regularizer,
                      SeparableMap)

Array = np.ndarray

#: relative slack for floating-point checks of exact-arithmetic identities
GUARD_SLACK = 1e-9

MM_METHODS = ("proposed", "proposed-inertia", "fbs", "outer-linear", "prox-linear")
ALL_METHODS = MM_METHODS + ("gd", "adam")


# ---------------------------------------------------------------------------
# configuration, records
# ---------------------------------------------------------------------------

@dataclass
class InnerConfig:
    """Budget of the proximal-gradient loop inside prox-linear steps."""

    max_iter: int = 300
    tol: float = 1e-8


@dataclass
class SolverConfig:
    method: str = "proposed"
    tau: float = 0.1
    beta: float = 0.0
    max_iter: int = 100
    tol_dz: float = 0.0
    guard: bool = True
    seed: int = 0
    grid_n: int = scalar.DEFAULT_GRID_N
    refine_steps: int = scalar.DEFAULT_REFINE_STEPS
    labels: int = 64
    pd: object = None  # lifting.PDConfig for TV-routed subproblems
    inner: InnerConfig = field(default_factory=InnerConfig)
    sublabel: bool = True

    def __post_init__(self):
        if self.method not in ALL_METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.tau <= 0.0:
            raise ConfigError("tau must be positive")
        if not (0.0 <= self.beta < 0.5):
            raise ConfigError("beta must lie in [0, 0.5)")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


@dataclass
class IterationRecord:
    k: int
    E: float
    dz: float
    step_accepted: bool
    wall_time: float


@dataclass
class SolverRun:
    config: SolverConfig
    u_final: Array
    trace: List[IterationRecord]
    termination: str  # "tol" | "max-iter" | "guard-violation" | "fixed-point"
    tau: float = 0.0
    L: float = 0.0
    warnings: List[str] = field(default_factory=list)

    @property
    def E_final(self) -> float:
        return self.trace[-1].E

    def energies(self) -> Array:
        return np.array([r.E for r in self.trace])

    def dzs(self) -> Array:
        return np.array([r.dz for r in self.trace])


def write_trace_csv(run: SolverRun, path) -> None:
    """Trace rows `k,E,dz,accepted,wall_ms` with 17 significant digits."""
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "E", "dz", "accepted", "wall_ms"])
        for r in run.trace:
            w.writerow([r.k, f"{r.E:.17g}", f"{r.dz:.17g}",
                        int(r.step_accepted), f"{1000.0 * r.wall_time:.17g}"])


# ---------------------------------------------------------------------------
# surrogate evaluation
# ---------------------------------------------------------------------------

def _rho_rows(problem: CompositeProblem, U: Array) -> Array:
    inner = problem.inner
    if isinstance(inner, SeparableMap):
        return inner.apply_rows(U)
    raise ConfigError("separable steps need a coordinate-wise inner map")


def majorizer_value(problem: CompositeProblem, geom: Geometry, tau: float,
                    u_k: Array, u: Array) -> float:
    """Exact surrogate value anchored at u_k, evaluated at u.

    Coincides with the energy at the anchor; +inf when rho(u) leaves the
    geometry domain.
    """
    z_k = problem.inner.apply(np.asarray(u_k, dtype=float))
    if not geom.in_interior(z_k):
        raise DomainError("anchor image must lie strictly inside dom h")
    z = problem.inner.apply(np.asarray(u, dtype=float))
    d = bregman(geom, z, z_k)
    if math.isinf(d):
        return math.inf
    g = problem.outer.gradient(z_k)
    return (d / tau + problem.outer.value(z_k) + float(g @ (z - z_k))
            + problem.reg.value(u))


def _separable_step(problem: CompositeProblem, mode: str, geom: Geometry,
                    tau: float, u_k: Array, lin_override: Optional[Array],
                    grid_n: int, refine_steps: int) -> Tuple[Array, float]:
    """Solve the decoupled surrogate globally, one grid per coordinate.

    Returns (u_next, surrogate value at u_next).  The anchor u_k is always
    a candidate, so the returned surrogate value never exceeds E(u_k).
    Modes: "proposed" measures proximity through rho in the image geometry,
    "fbs" in u with linear term grad F, "outer-linear" in u with the linear
    term through rho.
    """
    u_k = np.asarray(u_k, dtype=float)
    inner = problem.inner
    if not isinstance(inner, SeparableMap):
        raise ConfigError("separable steps need a coordinate-wise inner map")
    if problem.reg.variant == "tv":
        raise ConfigError("TV-regularized surrogates are handled by lifting")

    z_k = inner.apply(u_k)
    if mode == "proposed":
        if not geom.in_interior(z_k):
            raise DomainError("rho(u_k) must lie strictly inside dom h")
        g = problem.outer.gradient(z_k) if lin_override is None else lin_override
        scale = float(np.max(np.abs(problem.hi)))
        floor = geom.domain_floor(scale)
        anchor_col = z_k[:, None]

        def obj(U):
            P = inner.apply_rows(U)
            vals = geom.bregman_elementwise(P, anchor_col) / tau \
                + g[:, None] * P + problem.reg.value_rows(U)
            if floor > -math.inf:
                vals = np.where(P > floor, vals, np.inf)
            return vals

        const = problem.outer.value(z_k) - float(g @ z_k)
    elif mode == "fbs":
        gF = inner.deriv(u_k) * problem.outer.gradient(z_k)
        anchor_col = u_k[:, None]

        def obj(U):
            return geom.bregman_elementwise(U, anchor_col) / tau \
                + gF[:, None] * U + problem.reg.value_rows(U)

        const = problem.outer.value(z_k) - float(gF @ u_k)
    elif mode == "outer-linear":
        g = problem.outer.gradient(z_k)
        quad = Geometry.quadratic()
        anchor_col = u_k[:, None]

        def obj(U):
            P = inner.apply_rows(U)
            return quad.bregman_elementwise(U, anchor_col) / tau \
                + g[:, None] * P + problem.reg.value_rows(U)

        const = problem.outer.value(z_k) - float(g @ z_k)
    else:  # pragma: no cover
        raise ConfigError(f"unknown separable mode {mode!r}")

    try:
        x, fx = scalar.minimize_1d_batch(obj, problem.lo, problem.hi,
                                         grid_n=grid_n, refine_steps=refine_steps,
                                         anchors=u_k)
    except Exception as exc:  # noqa: BLE001 - annotate with coordinate context
        raise StepError(f"coordinate subproblem failed: {exc}",
                        index=getattr(exc, "index", None)) from exc
    return x, float(np.sum(fx)) + const


def mm_step(problem: CompositeProblem, geom: Geometry, tau: float, u_k: Array,
            grid_n: int = scalar.DEFAULT_GRID_N,
            refine_steps: int = scalar.DEFAULT_REFINE_STEPS) -> Array:
    """One globally solved surrogate minimization (separable route)."""
    u, _ = _separable_step(problem, "proposed", geom, tau, u_k, None,
                           grid_n, refine_steps)
    return u


def inertial_mm_step(problem: CompositeProblem, geom: Geometry, tau: float,
                     beta: float, u_k: Array, u_km1: Array,
                     grid_n: int = scalar.DEFAULT_GRID_N,
                     refine_steps: int = scalar.DEFAULT_REFINE_STEPS) -> Array:
    """Surrogate step with the inertial correction.

    The correction (beta/tau)(D_h(rho(u), z^k) - D_h(rho(u), z^{k-1}))
    collapses to a linear term in rho(u), so the subproblems stay as cheap
    as without inertia.
    """
    u_k = np.asarray(u_k, dtype=float)
    u_km1 = np.asarray(u_km1, dtype=float)
    z_k = problem.inner.apply(u_k)
    g = problem.outer.gradient(z_k)
    if beta != 0.0 and not np.array_equal(u_k, u_km1):
        z_km1 = problem.inner.apply(u_km1)
        g = g + (beta / tau) * (geom.grad_h(z_km1) - geom.grad_h(z_k))
    u, _ = _separable_step(problem, "proposed", geom, tau, u_k, g,
                           grid_n, refine_steps)
    return u


def fbs_step(problem: CompositeProblem, geom_on_u: Geometry, tau: float,
             u_k: Array, grid_n: int = scalar.DEFAULT_GRID_N,
             refine_steps: int = scalar.DEFAULT_REFINE_STEPS) -> Array:
    """Forward-backward step: proximity D_h(u, u^k), gradient of F = G o rho."""
    u, _ = _separable_step(problem, "fbs", geom_on_u, tau, u_k, None,
                           grid_n, refine_steps)
    return u


def outer_linear_step(problem: CompositeProblem, tau: float, u_k: Array,
                      grid_n: int = scalar.DEFAULT_GRID_N,
                      refine_steps: int = scalar.DEFAULT_REFINE_STEPS) -> Array:
    """Linearize G through rho but keep the proximity in u, not rho(u)."""
    u, _ = _separable_step(problem, "outer-linear", Geometry.quadratic(), tau,
                           u_k, None, grid_n, refine_steps)
    return u


# ---------------------------------------------------------------------------
# first-order baselines
# ---------------------------------------------------------------------------

def _jt_vec(problem: CompositeProblem, u: Array, g: Array) -> Array:
    """J_rho(u)^T g for the supported inner maps (diagonal structure)."""
    inner = problem.inner
    if isinstance(inner, SeparableMap):
        return inner.deriv(u) * g
    if isinstance(inner, ChannelSeparableMap):
        n = inner.n
        out = np.zeros(n)
        for c, fn in enumerate(inner.channels):
            out += fn.d(u) * g[c * n:(c + 1) * n]
        return out
    raise ConfigError("gradient steps need a coordinate-wise inner map")


def energy_gradient(problem: CompositeProblem, u: Array) -> Array:
    """Chain-rule gradient of E; requires a differentiable regularizer."""
    u = np.asarray(u, dtype=float)
    z = problem.inner.apply(u)
    g = problem.outer.gradient(z)
    return _jt_vec(problem, u, g) + problem.reg.deriv(u)


def gd_step(problem: CompositeProblem, tau: float, u_k: Array) -> Array:
    """Projected gradient step on the full energy."""
    u_k = np.asarray(u_k, dtype=float)
    return problem.clip(u_k - tau * energy_gradient(problem, u_k))


def prox_linear_step(problem: CompositeProblem, tau: float, u_k: Array,
                     inner: InnerConfig) -> Tuple[Array, bool]:
    """Minimize G(rho(u^k) + J_rho (u - u^k)) + R(u) + ||u - u^k||^2 / (2 tau).

    Solved by a monotone (backtracked) proximal-gradient loop; nonsmooth
    separable penalties use their exact 1D proximal maps.  Returns the best
    iterate and a flag set when the tolerance was not reached in budget.
    """
    u_k = np.asarray(u_k, dtype=float)
    pinner = problem.inner
    if not isinstance(pinner, SeparableMap):
        raise ConfigError("prox-linear needs a coordinate-wise inner map")
    z_k = pinner.apply(u_k)
    j = pinner.deriv(u_k)
    reg = problem.reg
    if reg.variant == "tv":
        raise ConfigError("prox-linear supports separable regularizers only")

    # a nonsmooth separable penalty is split off through its proximal map;
    # a smooth one rides in the gradient
    prox_fns = None
    smooth_reg = reg.variant == "separable"
    if smooth_reg and all(f.prox is not None for f in reg.fns):
        prox_fns = reg.fns
        smooth_reg = False

    def v_lin(u):
        return z_k + j * (u - u_k)

    def smooth_val(u):
        val = problem.outer.value(v_lin(u)) + float(np.sum((u - u_k) ** 2)) / (2.0 * tau)
        if smooth_reg:
            val += reg.value(u)
        return val

    def smooth_grad(u):
        g = j * problem.outer.gradient(v_lin(u)) + (u - u_k) / tau
        if smooth_reg:
            g = g + reg.deriv(u)
        return g

    def nonsmooth(u):
        return reg.value(u) if prox_fns is not None else 0.0

    def apply_prox(u, s):
        if prox_fns is not None:
            shared = prox_fns[0] if all(f is prox_fns[0] for f in prox_fns) else None
            if shared is not None:
                u = shared.prox(u, s)
            else:
                u = np.array([float(f.prox(np.asarray([u[i]]), s)[0])
                              for i, f in enumerate(prox_fns)])
        return problem.clip(u)

    u = u_k.copy()
    phi = smooth_val(u) + nonsmooth(u)
    step = tau
    warn = True
    for _ in range(inner.max_iter):
        g = smooth_grad(u)
        accepted = False
        cand, phic = u, phi
        for _ in range(40):
            cand = apply_prox(u - step * g, step)
            phic = smooth_val(cand) + nonsmooth(cand)
            if math.isfinite(phic) and phic <= phi + 1e-15 * (1.0 + abs(phi)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        move = float(np.max(np.abs(cand - u)))
        u, phi = cand, phic
        step *= 1.3
        if move <= inner.tol * (1.0 + float(np.max(np.abs(u)))):
            warn = False
            break
    return u, warn


@dataclass
class AdamHyper:
    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: Array
    v: Array
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(u: Array, state: AdamState, grad: Array, hyper: AdamHyper,
              lo: Array, hi: Array) -> Tuple[Array, AdamState]:
    """Bias-corrected first/second-moment update, then box clip."""
    t = state.t + 1
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad * grad
    mhat = m / (1.0 - hyper.beta1 ** t)
    vhat = v / (1.0 - hyper.beta2 ** t)
    u_next = u - hyper.alpha * mhat / (np.sqrt(vhat) + hyper.eps)
    return np.clip(u_next, lo, hi), AdamState(m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# the outer loop
# ---------------------------------------------------------------------------

def run(problem: CompositeProblem, geom: Geometry, config: SolverConfig,
        u0: Array, smoothness: Optional[RelativeSmoothness] = None,
        adam_hyper: Optional[AdamHyper] = None) -> SolverRun:
    """Iterate the configured method from u0 and record a full trace.

    For the surrogate methods the step size must satisfy tau < 1/L
    strictly; L is taken from ``smoothness`` or derived from the
    (outer, geometry) pair.  The guard terminates the run whenever an
    accepted step would break the anchored-descent contract.
    """
    u = problem.clip(np.asarray(u0, dtype=float)).copy()
    if not problem.in_box(u0):
        raise DomainError("u0 must lie in the box")

    L = math.nan
    if config.method in ("proposed", "proposed-inertia"):
        if smoothness is None:
            smoothness = smoothness_constant(problem.outer, geom)
        L = smoothness.L
        if not config.tau < 1.0 / L:
            raise ConfigError(f"tau={config.tau} must be < 1/L = {1.0 / L}")
        z0 = problem.inner.apply(u)
        if not geom.in_interior(z0):
            raise DomainError("rho(u0) must lie strictly inside dom h")

    lifted = problem.reg.variant == "tv"
    if lifted and config.method != "proposed":
        raise ConfigError("TV-regularized problems are solved by the lifted route")
    if lifted:
        from . import lifting  # local import; lifting builds on this module
        pd_cfg = config.pd if config.pd is not None else lifting.PDConfig()
        warm = None

    E = problem.energy(u)
    trace = [IterationRecord(k=0, E=E, dz=0.0, step_accepted=True, wall_time=0.0)]
    warnings: List[str] = []
    termination = "max-iter"
    state = AdamState.zeros(problem.n)
    hyper = adam_hyper if adam_hyper is not None else AdamHyper()
    u_prev = u.copy()
    below_tol = 0

    for k in range(1, config.max_iter + 1):
        t0 = time.perf_counter()
        slack = GUARD_SLACK * (1.0 + abs(E))
        surrogate = math.nan
        accepted = True

        if config.method == "proposed" and lifted:
            u_next, surrogate, warm = lifting.mm_step_lifted(
                problem, geom, config.tau, u, config.labels, pd_cfg,
                warm=warm, sublabel=config.sublabel)
        elif config.method == "proposed":
            u_next, surrogate = _separable_step(
                problem, "proposed", geom, config.tau, u, None,
                config.grid_n, config.refine_steps)
        elif config.method == "proposed-inertia":
            u_next = inertial_mm_step(problem, geom, config.tau, config.beta,
                                      u, u_prev, config.grid_n, config.refine_steps)
        elif config.method == "fbs":
            u_next, surrogate = _separable_step(
                problem, "fbs", geom, config.tau, u, None,
                config.grid_n, config.refine_steps)
        elif config.method == "outer-linear":
            u_next, surrogate = _separable_step(
                problem, "outer-linear", Geometry.quadratic(), config.tau, u,
                None, config.grid_n, config.refine_steps)
        elif config.method == "prox-linear":
            u_next, warn = prox_linear_step(problem, config.tau, u, config.inner)
            if warn:
                warnings.append(f"k={k}: prox-linear inner loop hit its budget")
        elif config.method == "gd":
            u_next = gd_step(problem, config.tau, u)
        else:  # adam
            grad = energy_gradient(problem, u)
            u_next, state = adam_step(u, state, grad, hyper, problem.lo, problem.hi)

        E_next = problem.energy(u_next)

        if config.method == "proposed-inertia" and config.guard and E_next > E + slack and not lifted:
            # Lyapunov safeguard: retry the step without inertia
            u_next, surrogate = _separable_step(
                problem, "proposed", geom, config.tau, u, None,
                config.grid_n, config.refine_steps)
            E_next = problem.energy(u_next)

        violated = False
        if config.guard and config.method in MM_METHODS:
            if not math.isnan(surrogate) and surrogate > E + slack:
                violated = True
            if E_next > E + slack:
                violated = True

        wall = time.perf_counter() - t0
        if violated:
            trace.append(IterationRecord(k=k, E=E, dz=0.0, step_accepted=False,
                                         wall_time=wall))
            termination = "guard-violation"
            break

        dz = _proximity(problem, geom, config.method, u_next, u)
        u_prev = u
        u, E = u_next, E_next
        trace.append(IterationRecord(k=k, E=E, dz=dz, step_accepted=True,
                                     wall_time=wall))

        if dz == 0.0:
            termination = "fixed-point"
            break
        if config.tol_dz > 0.0 and dz < config.tol_dz:
            below_tol += 1
            if below_tol >= 3:
                termination = "tol"
                break
        else:
            below_tol = 0

    return SolverRun(config=config, u_final=u, trace=trace,
                     termination=termination, tau=config.tau, L=L,
                     warnings=warnings)


def _proximity(problem: CompositeProblem, geom: Geometry, method: str,
               u_next: Array, u_k: Array) -> float:
    """The per-step proximity D_h(z^{k+1}, z^k) in the method's geometry."""
    if method in ("proposed", "proposed-inertia"):
        z_next = problem.inner.apply(u_next)
        z_k = problem.inner.apply(u_k)
        return bregman(geom, z_next, z_k)
    if method == "fbs":
        return bregman(geom, u_next, u_k)
    d = u_next - u_k
    return 0.5 * float(d @ d)


# ---------------------------------------------------------------------------
# trace validation (descent and rate contracts)
# ---------------------------------------------------------------------------

def check_descent_inequality(run: SolverRun) -> float:
    """Worst violation of E(u^{k+1}) - E(u^k) <= -(1 - tau L)/tau * dz.

    Returns the largest positive violation beyond the relative slack over
    accepted steps (0.0 when the trace satisfies the inequality).
    """
    alpha = (1.0 - run.tau * run.L) / run.tau
    worst = 0.0
    for prev, cur in zip(run.trace, run.trace[1:]):
        if not cur.step_accepted:
            continue
        slack = GUARD_SLACK * (1.0 + abs(prev.E))
        lhs = cur.E - prev.E
        rhs = -alpha * cur.dz
        worst = max(worst, lhs - rhs - slack)
    return worst


def check_rate_bound(run: SolverRun) -> bool:
    """min_{k<=N} dz_k <= (E(u^1) - min E) / (alpha N) for every N, exactly."""
    alpha = (1.0 - run.tau * run.L) / run.tau
    E = run.energies()
    dz = run.dzs()
    if len(E) < 2:
        return True
    e_min = float(np.min(E))
    run_min = math.inf
    for N in range(1, len(E)):
        run_min = min(run_min, dz[N])
        if run_min > (E[0] - e_min) / (alpha * N):
            return False
    return True


def check_sum_bound(run: SolverRun) -> bool:
    """sum_k dz_k <= (E(u^1) - E(u^N)) / alpha, within relative slack."""
    alpha = (1.0 - run.tau * run.L) / run.tau
    E = run.energies()
    dz = run.dzs()
    total = float(np.sum(dz[1:]))
    bound = (E[0] - E[-1]) / alpha
    return total <= bound + GUARD_SLACK * len(E) * (1.0 + abs(E[0])) / alpha


def sampled_grad_lipschitz(problem: CompositeProblem, trials: int = 400,
                           seed: int = 0, margin: float = 1.2,
                           sampler: Optional[Callable[[np.random.Generator], Array]] = None) -> float:
    """Sampled Lipschitz estimate of grad E over the box (for baseline steps)."""
    rng = np.random.default_rng(seed)
    draw = sampler if sampler is not None else (
        lambda r: r.uniform(problem.lo, problem.hi))
    worst = 0.0
    for _ in range(trials):
        x = draw(rng)
        y = draw(rng)
        d = float(np.linalg.norm(x - y))
        if d < 1e-12:
            continue
        try:
            gx = energy_gradient(problem, x)
            gy = energy_gradient(problem, y)
        except DomainError:
            continue
        worst = max(worst, float(np.linalg.norm(gx - gy)) / d)
    if worst == 0.0:
        return 1.0
    return margin * worst
