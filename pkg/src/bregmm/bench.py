"""Synthetic benchmark factory with known global optima.

Instances minimize F_f(A rho(u)) + sum_i r(u_i - u*_i) over a box, where
u* is drawn first and f = A rho(u*), which forces u* to be a global
minimizer with value n * r(0).  Difficulty is varied through four
nonlinearity families (exp, oscillating, random coercive splines) and
four outer families (dense least squares, KL divergence with Burg
geometry, rectangular spectra, smooth-truncated quadratic).  Results are
scored by the normalized gap (E_final - E*) / (median sampled energy - E*)
over medians of random restarts.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from . import solver
from .errors import (ConfigError, DegenerateScaleError, GenerationError,
                     IntegrityError)
from .geometry import Geometry, RelativeSmoothness, diag_dominant_weights, smoothness_constant
from .problem import (CompositeProblem, Regularizer, ScalarFn, SeparableMap,
                      SmoothOuter, exp_fn, square_fn)

Array = np.ndarray

INNER_FAMILIES = (1, 2, 3, 4)
OUTER_FAMILIES = ("a", "b", "c", "d")

#: default benchmark scale (desk profile shrinks these)
DEFAULT_N = 150
DEFAULT_RESTARTS = 25
DEFAULT_INTERVAL = (-3.0, 3.0)
POISSON_EPS = 1e-2
MEDIAN_SAMPLES = 100_000
TRUNC_LAMBDA = 1.0


# ---------------------------------------------------------------------------
# seed derivation (splitmix-style, documented for reproducibility)
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


def mix_seed(*parts: int) -> int:
    """Derive an independent 64-bit stream id from (master, indices...).

    Splitmix-style finalizer folded over the parts; documented so runs can
    be reproduced cell-by-cell outside the suite driver.
    """
    x = 0x9E3779B97F4A7C15
    for p in parts:
        x ^= (int(p) + 0x9E3779B97F4A7C15 + (x << 6) + (x >> 2)) & _MASK
        z = x
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        x = z ^ (z >> 31)
    return x & _MASK


# ---------------------------------------------------------------------------
# nonlinearity families
# ---------------------------------------------------------------------------

def rastrigin_fn() -> ScalarFn:
    return ScalarFn(fn=lambda x: x * x - 10.0 * np.cos(2.0 * np.pi * x),
                    deriv=lambda x: 2.0 * x + 20.0 * np.pi * np.sin(2.0 * np.pi * x),
                    name="rastrigin")


def bounded_square_fn() -> ScalarFn:
    return ScalarFn(fn=lambda x: x * x / (1.0 + x * x),
                    deriv=lambda x: 2.0 * x / (1.0 + x * x) ** 2,
                    name="bounded-square")


def neg_sinc_fn() -> ScalarFn:
    def val(x):
        return -np.sinc(x)

    def der(x):
        x = np.asarray(x, dtype=float)
        small = np.abs(x) < 1e-6
        safe = np.where(small, 1.0, x)
        d = (np.cos(np.pi * safe) - np.sinc(safe)) / safe
        return -np.where(small, -(np.pi ** 2) * x / 3.0, d)

    return ScalarFn(fn=val, deriv=der, name="neg-sinc")


def coercive_spline_fn(lo: float, hi: float, seed: int, nodes: int = 12) -> ScalarFn:
    """Natural cubic through random ordinates, extended coercively.

    Outside [lo, hi] the cubic is replaced by an upward parabola matching
    value and slope at the boundary, so the function grows at infinity.
    """
    rng = np.random.default_rng(seed)
    xs = np.linspace(lo, hi, nodes)
    ys = rng.uniform(lo, hi, size=nodes)
    cs = CubicSpline(xs, ys, bc_type="natural")
    dcs = cs.derivative()
    f_lo, f_hi = float(cs(lo)), float(cs(hi))
    d_lo, d_hi = float(dcs(lo)), float(dcs(hi))
    curv = 1.0

    def val(x):
        x = np.asarray(x, dtype=float)
        out = cs(x)
        left = x < lo
        right = x > hi
        if np.any(left):
            t = x[left] - lo
            out = np.where(left, f_lo + d_lo * (x - lo) + curv * (x - lo) ** 2, out)
        if np.any(right):
            out = np.where(right, f_hi + d_hi * (x - hi) + curv * (x - hi) ** 2, out)
        return out

    def der(x):
        x = np.asarray(x, dtype=float)
        out = dcs(x)
        left = x < lo
        right = x > hi
        out = np.where(left, d_lo + 2.0 * curv * (x - lo), out)
        out = np.where(right, d_hi + 2.0 * curv * (x - hi), out)
        return out

    fn = ScalarFn(fn=val, deriv=der, name=f"spline-{seed}")
    return fn, (xs, ys)


def make_nonlinearity(family: int, seed: int, lo: float = DEFAULT_INTERVAL[0],
                      hi: float = DEFAULT_INTERVAL[1]):
    """(rho, r) for the four difficulty families; splines are seed-deterministic."""
    if family == 1:
        return exp_fn(), square_fn()
    if family == 2:
        return rastrigin_fn(), bounded_square_fn()
    if family == 3:
        rho, _ = coercive_spline_fn(lo, hi, mix_seed(seed, 3))
        return rho, neg_sinc_fn()
    if family == 4:
        rho, _ = coercive_spline_fn(lo, hi, mix_seed(seed, 4))
        return rho, rastrigin_fn()
    raise ConfigError(f"inner family must be 1..4, got {family}")


def r_at_zero(family: int) -> float:
    return {1: 0.0, 2: 0.0, 3: -1.0, 4: -10.0}[family]


# ---------------------------------------------------------------------------
# outer families
# ---------------------------------------------------------------------------

def _orthogonal(rng: np.random.Generator, n: int) -> Array:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_outer(family: str, n: int, seed: int):
    """Matrix A and geometry builder for the four outer families.

    (a) dense square, normally distributed relative to the identity
    diagonal; (b) like (a) but with nonnegative entries, paired with Burg
    entropy for the KL divergence; (c)/(d) rectangular m = n // 3 with a
    prescribed singular spectrum in [1/log n, 1].
    """
    rng = np.random.default_rng(mix_seed(seed, ord(family)))
    if family == "a":
        A = np.eye(n) + rng.standard_normal((n, n)) / math.sqrt(n)
        return A, "least-squares"
    if family == "b":
        A = np.eye(n) + np.abs(rng.standard_normal((n, n))) / math.sqrt(n)
        return A, "kl-divergence"
    if family in ("c", "d"):
        m = n // 3
        sv = rng.uniform(1.0 / math.log(n), 1.0, size=m)
        U = _orthogonal(rng, m)
        V = _orthogonal(rng, n)
        A = U @ (sv[:, None] * V[:m, :])
        return A, "least-squares" if family == "c" else "truncated-quadratic"
    raise ConfigError(f"outer family must be one of a..d, got {family!r}")


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

@dataclass
class CaseSpec:
    inner_family: int
    outer_family: str
    n: int = DEFAULT_N
    lo: float = DEFAULT_INTERVAL[0]
    hi: float = DEFAULT_INTERVAL[1]
    seed: int = 0

    def __post_init__(self):
        if self.inner_family not in INNER_FAMILIES:
            raise ConfigError(f"inner family must be 1..4, got {self.inner_family}")
        if self.outer_family not in OUTER_FAMILIES:
            raise ConfigError(f"outer family must be a..d, got {self.outer_family!r}")
        if self.outer_family == "b" and self.lo <= 0.0:
            # positive geometry: the interval keeps its lower bound off zero
            self.lo = POISSON_EPS

    @property
    def label(self) -> str:
        return f"{self.inner_family}{self.outer_family}"


@dataclass
class CaseInstance:
    spec: CaseSpec
    problem: CompositeProblem
    geom: Geometry
    smoothness: RelativeSmoothness
    A: Array
    f: Array
    u_star: Array
    rho: ScalarFn
    r: ScalarFn
    E_star: float

    @property
    def label(self) -> str:
        return self.spec.label


def _feasible_coordinate_draw(rng: np.random.Generator, rho: ScalarFn,
                              lo: float, hi: float, n: int,
                              positive: bool, tries: int = 200) -> Array:
    """Uniform box draw; for positive geometries coordinates are redrawn
    until rho stays strictly positive (the feasible slice of the box)."""
    u = rng.uniform(lo, hi, size=n)
    if not positive:
        return u
    vals = np.asarray(rho(u))
    for _ in range(tries):
        bad = vals <= 1e-8
        if not np.any(bad):
            return u
        u[bad] = rng.uniform(lo, hi, size=int(np.sum(bad)))
        vals = np.asarray(rho(u))
    raise GenerationError("could not draw a feasible point (rho > 0) in the box")


def make_case(spec: CaseSpec) -> CaseInstance:
    """Generate one instance with a certified global optimum."""
    rho, r = make_nonlinearity(spec.inner_family, spec.seed, spec.lo, spec.hi)
    A, outer_kind = make_outer(spec.outer_family, spec.n, spec.seed)
    rng = np.random.default_rng(mix_seed(spec.seed, spec.inner_family,
                                         ord(spec.outer_family), 0xA11CE))
    positive = spec.outer_family == "b"

    u_star = None
    f = None
    for _ in range(100):
        cand = _feasible_coordinate_draw(rng, rho, spec.lo, spec.hi, spec.n, positive)
        fc = A @ np.asarray(rho(cand))
        if not positive or np.all(fc > 1e-8):
            u_star, f = cand, fc
            break
    if u_star is None:
        raise GenerationError("family b: no strictly positive data f in 100 draws")

    if outer_kind == "least-squares":
        outer = SmoothOuter.least_squares(A, f)
        geom = Geometry.diag_quadratic(diag_dominant_weights(A))
    elif outer_kind == "kl-divergence":
        outer = SmoothOuter.kl_divergence(A, f)
        geom = Geometry.burg_entropy(box_upper=float(np.max(np.abs(rho(
            np.linspace(spec.lo, spec.hi, 512))))) + 1.0)
    else:
        outer = SmoothOuter.truncated_quadratic(A, f, lam=TRUNC_LAMBDA)
        geom = Geometry.diag_quadratic(diag_dominant_weights(A))
    smooth = smoothness_constant(outer, geom)

    shift = float(np.asarray(r(np.zeros(1)))[0])
    star = u_star

    def r_shifted(x, _r=r, _star=star):
        return _r(np.asarray(x) - _star[:, None] if np.ndim(x) == 2 else np.asarray(x) - _star)

    reg_fn = ScalarFn(fn=r_shifted,
                      deriv=(None if r.deriv is None else
                             (lambda x, _r=r, _star=star:
                              _r.deriv(np.asarray(x) - _star))),
                      name=f"{r.name}-centered")
    reg = Regularizer.separable_uniform(reg_fn, spec.n)
    inner = SeparableMap.uniform(rho, spec.n)
    problem = CompositeProblem(outer=outer, inner=inner, reg=reg,
                               lo=spec.lo, hi=spec.hi)
    E_star = spec.n * shift
    got = problem.energy(u_star)
    if abs(got - E_star) > 1e-8 * (1.0 + abs(E_star)):
        raise IntegrityError(f"construction broke: E(u*)={got} vs E*={E_star}")
    return CaseInstance(spec=spec, problem=problem, geom=geom, smoothness=smooth,
                        A=A, f=f, u_star=u_star, rho=rho, r=r, E_star=E_star)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def energy_batch(instance: CaseInstance, U: Array) -> Array:
    """Vectorized energies of (S, n) samples for the benchmark model."""
    prob = instance.problem
    V = instance.rho(U)
    W = V @ instance.A.T
    outer = prob.outer
    if outer.kind == "least-squares":
        G = 0.5 * np.sum((W - instance.f) ** 2, axis=1)
    elif outer.kind == "kl-divergence":
        f = instance.f
        const = float(np.sum(f * np.log(f) - f))
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(np.all(W > 0.0, axis=1),
                         np.sum(W - f * np.log(np.where(W > 0, W, 1.0)), axis=1) + const,
                         np.inf)
    elif outer.kind == "truncated-quadratic":
        G = np.sum(outer._q(W - instance.f), axis=1)
    else:
        G = np.array([outer.value(w) for w in W])
    R = np.sum(instance.r(U - instance.u_star[None, :]), axis=1)
    return G + R


def sampled_median_energy(instance: CaseInstance, samples: int = MEDIAN_SAMPLES,
                          seed: int = 0) -> float:
    """Landscape scale: median sampled energy minus the global optimum."""
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    rng = np.random.default_rng(mix_seed(seed, 0x5CA1E))
    spec = instance.spec
    positive = spec.outer_family == "b"
    if positive:
        U = np.stack([_feasible_coordinate_draw(rng, instance.rho, spec.lo,
                                                spec.hi, spec.n, True)
                      for _ in range(min(samples, 2000))])
    else:
        U = rng.uniform(spec.lo, spec.hi, size=(samples, spec.n))
    med = float(np.median(energy_batch(instance, U)))
    return med - instance.E_star


def normalized_gap(E_final: float, E_star: float, scale: float) -> float:
    """(E_final - E*) / scale; guards the optimum and a degenerate scale."""
    if scale <= 0.0:
        raise DegenerateScaleError(f"normalization scale {scale} is not positive")
    gap = (E_final - E_star) / scale
    if gap < -1e-6:
        raise IntegrityError(
            f"E_final={E_final} beats the certified optimum E*={E_star}")
    return gap


# ---------------------------------------------------------------------------
# the restart protocol
# ---------------------------------------------------------------------------

@dataclass
class BudgetConfig:
    max_iter_mm: int = 150
    max_iter_grad: int = 2000
    grid_n: int = 2048
    refine_steps: int = 8
    tol_dz: float = 1e-12
    median_samples: int = MEDIAN_SAMPLES
    lipschitz_trials: int = 200


@dataclass
class CellResult:
    case: str
    method: str
    restart: int
    gap: float
    E_final: float
    iters: int
    wall_ms: float
    run: Optional[solver.SolverRun] = None


@dataclass
class SuiteResult:
    rows: List[CellResult]
    medians: Dict[Tuple[str, str], float]
    scales: Dict[str, float]

    def median(self, case: str, method: str) -> float:
        return self.medians[(case, method)]


def _box_draw(instance: CaseInstance, rng: np.random.Generator) -> Array:
    spec = instance.spec
    return _feasible_coordinate_draw(rng, instance.rho, spec.lo, spec.hi,
                                     spec.n, spec.outer_family == "b")


_TAU_PILOT_FACTORS = (1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0, 4.0, 16.0, 64.0,
                      256.0, 1024.0)


def method_tau(instance: CaseInstance, method: str,
               budget: BudgetConfig, seed: int) -> float:
    """Per-(case, method) step size.

    The surrogate method takes the analytic 0.99 / L.  Baselines have no
    analytic constant on these landscapes, so a sampled gradient-Lipschitz
    estimate anchors a small deterministic pilot over step multiples and
    the best short-run energy wins (the guard discards unstable factors).
    """
    if method in ("proposed", "proposed-inertia"):
        return 0.99 / instance.smoothness.L
    if method == "adam":
        return 1.0  # Adam's step lives in its own hyperparameters
    spec = instance.spec
    sampler = None
    if spec.outer_family == "b":
        sampler = lambda r: _box_draw(instance, r)  # noqa: E731
    L_hat = solver.sampled_grad_lipschitz(instance.problem,
                                          trials=budget.lipschitz_trials,
                                          seed=mix_seed(seed, 0x11940),
                                          sampler=sampler)
    base = 0.99 / L_hat
    pilot_iters = budget.max_iter_grad if method == "gd" else budget.max_iter_mm

    def score(tau):
        """(guard-violated, total best energy): clean step sizes rank first."""
        E_acc = 0.0
        violated = False
        for pr in range(2):
            rng = np.random.default_rng(mix_seed(seed, 0x7A0, pr))
            u0 = _box_draw(instance, rng)
            cfg = solver.SolverConfig(method=method, tau=tau,
                                      max_iter=pilot_iters, guard=True,
                                      grid_n=max(256, budget.grid_n // 4),
                                      tol_dz=budget.tol_dz)
            try:
                out = solver.run(instance.problem, instance.geom, cfg, u0,
                                 smoothness=instance.smoothness)
            except (ArithmeticError, ValueError):
                return (True, math.inf)
            violated = violated or out.termination == "guard-violation"
            E_acc += float(np.min(out.energies()))
        return (violated, E_acc)

    best_tau, best_score = base, (True, math.inf)
    for factor in _TAU_PILOT_FACTORS:
        s = score(base * factor)
        if s < best_score:
            best_tau, best_score = base * factor, s
    for factor in (0.5, 2.0):  # refine around the coarse winner
        s = score(best_tau * factor)
        if s < best_score:
            best_tau, best_score = best_tau * factor, s
    return best_tau


def make_config(method: str, tau: float, budget: BudgetConfig,
                seed: int) -> solver.SolverConfig:
    max_iter = budget.max_iter_grad if method in ("gd", "adam") else budget.max_iter_mm
    beta = 0.4 if method == "proposed-inertia" else 0.0
    return solver.SolverConfig(method=method, tau=tau, beta=beta,
                               max_iter=max_iter, tol_dz=budget.tol_dz,
                               guard=True, seed=seed, grid_n=budget.grid_n,
                               refine_steps=budget.refine_steps)


def run_cell(instance: CaseInstance, method: str, restart: int,
             master_seed: int, budget: BudgetConfig, scale: float,
             tau: Optional[float] = None, hyper=None,
             keep_run: bool = False) -> CellResult:
    spec = instance.spec
    # the same restart index gives every method the same starting vector
    rng = np.random.default_rng(mix_seed(master_seed, spec.inner_family,
                                         ord(spec.outer_family), restart))
    u0 = _box_draw(instance, rng)
    if tau is None:
        tau = method_tau(instance, method, budget, mix_seed(master_seed, 0xC0))
    cfg = make_config(method, tau, budget, mix_seed(master_seed, restart))
    if method == "adam" and hyper is None:
        hyper = solver.AdamHyper(alpha=_adam_alpha(instance, budget, master_seed))
    run = solver.run(instance.problem, instance.geom, cfg, u0,
                     smoothness=instance.smoothness, adam_hyper=hyper)
    E_best = float(np.min(run.energies()))
    gap = normalized_gap(E_best, instance.E_star, scale)
    wall = float(sum(r.wall_time for r in run.trace) * 1000.0)
    return CellResult(case=spec.label, method=method, restart=restart, gap=gap,
                      E_final=E_best, iters=run.trace[-1].k, wall_ms=wall,
                      run=run if keep_run else None)


_METHODS_ORDER = ("proposed", "proposed-inertia", "gd", "fbs", "prox-linear",
                  "outer-linear", "adam")

_ADAM_ALPHA_GRID = (0.005, 0.02, 0.1)


def _adam_alpha(instance: CaseInstance, budget: BudgetConfig, seed: int) -> float:
    """Small deterministic pilot over a step-size grid (cheapest median)."""
    best, best_E = _ADAM_ALPHA_GRID[0], math.inf
    for alpha in _ADAM_ALPHA_GRID:
        rng = np.random.default_rng(mix_seed(seed, 0xADA0, int(alpha * 1e4)))
        u0 = _box_draw(instance, rng)
        cfg = solver.SolverConfig(method="adam", tau=1.0,
                                  max_iter=min(200, budget.max_iter_grad),
                                  guard=False, tol_dz=0.0)
        run = solver.run(instance.problem, instance.geom, cfg, u0,
                         adam_hyper=solver.AdamHyper(alpha=alpha))
        E = float(np.min(run.energies()))
        if E < best_E:
            best, best_E = alpha, E
    return best


def run_suite(specs: Sequence[CaseSpec], methods: Sequence[str], restarts: int,
              seed: int, budget: Optional[BudgetConfig] = None,
              threads: int = 1, keep_runs: bool = False) -> SuiteResult:
    """Median-of-restarts protocol over a case/method grid.

    Restart initializations are uniform in the box with per-(case, method,
    restart) seed streams, so results are identical for any thread count.
    """
    if restarts % 2 != 1:
        raise ConfigError("restarts must be odd so the median is a single run")
    for m in methods:
        if m not in _METHODS_ORDER:
            raise ConfigError(f"unknown method {m!r}")
    budget = budget or BudgetConfig()

    instances = {s.label: make_case(s) for s in specs}
    scales = {lab: sampled_median_energy(inst, budget.median_samples,
                                         seed=mix_seed(seed, 0xE, i))
              for i, (lab, inst) in enumerate(sorted(instances.items()))}
    for lab, sc in scales.items():
        if sc <= 0.0:
            raise DegenerateScaleError(f"case {lab}: degenerate landscape scale {sc}")

    # tune each (case, method) step size once, before fanning out restarts
    taus = {(s.label, m): method_tau(instances[s.label], m, budget,
                                     mix_seed(seed, 0xC0))
            for s in specs for m in methods}
    hypers = {(s.label, m): (solver.AdamHyper(
        alpha=_adam_alpha(instances[s.label], budget, seed)) if m == "adam" else None)
        for s in specs for m in methods}

    jobs = [(instances[s.label], m, r) for s in specs for m in methods
            for r in range(restarts)]

    def work(job):
        inst, m, r = job
        return run_cell(inst, m, r, seed, budget, scales[inst.label],
                        tau=taus[(inst.label, m)], hyper=hypers[(inst.label, m)],
                        keep_run=keep_runs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]

    medians = {}
    for s in specs:
        for m in methods:
            gaps = sorted(r.gap for r in rows if r.case == s.label and r.method == m)
            medians[(s.label, m)] = gaps[len(gaps) // 2]
    return SuiteResult(rows=rows, medians=medians, scales=scales)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def write_results_csv(result: SuiteResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "method", "restart", "gap", "E_final", "iters", "wall_ms"])
        for r in result.rows:
            w.writerow([r.case, r.method, r.restart, f"{r.gap:.17g}",
                        f"{r.E_final:.17g}", r.iters, f"{r.wall_ms:.17g}"])


def write_summary_csv(result: SuiteResult, path) -> None:
    """Deterministic summary (no wall times): case, method, median gap."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "method", "median_gap", "scale"])
        for (case, method) in sorted(result.medians):
            w.writerow([case, method, f"{result.medians[(case, method)]:.17g}",
                        f"{result.scales[case]:.17g}"])


def write_heatmap_svg(result: SuiteResult, methods: Sequence[str], path) -> None:
    """Minimal grid heatmap of median gaps (rows: inner family, cols: outer)."""
    cases = sorted({r.case for r in result.rows})
    inner = sorted({c[0] for c in cases})
    outer = sorted({c[1] for c in cases})
    cell = 60
    pad = 40
    width = pad + len(outer) * cell * len(methods) + pad
    height = pad + len(inner) * cell + pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">']
    for mi, method in enumerate(methods):
        for yi, fam in enumerate(inner):
            for xi, out in enumerate(outer):
                case = f"{fam}{out}"
                if (case, method) not in result.medians:
                    continue
                g = min(max(result.medians[(case, method)], 0.0), 1.0)
                shade = int(255 * (1.0 - g))
                x = pad + (mi * len(outer) + xi) * cell
                y = pad + yi * cell
                parts.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="rgb({255 - shade},{shade},80)" stroke="black"/>')
                parts.append(
                    f'<text x="{x + 4}" y="{y + cell // 2}" font-size="11">'
                    f'{case}:{result.medians[(case, method)]:.3f}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
