"""Command line entry point: benchmark suite, depth demo, self test.

Configs are flat INI files (one section per subcommand); every run is
reproducible from (config, master seed) alone, independent of thread
count.  Exit codes: 0 success, 1 schema problem, 2 integrity violation.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import bench, lifting, solver, tof
from .errors import ConfigError, DegenerateScaleError, IntegrityError
from .geometry import Geometry, bregman, smoothness_constant

PROFILES = {
    "desk": {"n": 30, "restarts": 5, "max_iter_mm": 80, "max_iter_grad": 800,
             "median_samples": 20000, "tof_size": 32, "tof_iters": 12},
    "paper": {"n": 150, "restarts": 25, "max_iter_mm": 150, "max_iter_grad": 2000,
              "median_samples": 100000, "tof_size": 48, "tof_iters": 30},
}


def _read_config(path, section):
    cp = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        cp.read(path)
    if path and not cp.has_section(section) and cp.sections():
        raise ConfigError(f"config is missing the [{section}] section")
    return cp[section] if cp.has_section(section) else {}


def _parse_cases(text):
    specs = []
    for tok in text.replace(",", " ").split():
        tok = tok.strip()
        if len(tok) != 2 or tok[0] not in "1234" or tok[1] not in "abcd":
            raise ConfigError(f"field 'cases': bad case label {tok!r}")
        specs.append((int(tok[0]), tok[1]))
    if not specs:
        raise ConfigError("field 'cases' is empty")
    return specs


def cmd_bench(args) -> int:
    try:
        sec = _read_config(args.config, "bench")
        profile = PROFILES[args.profile]
        cases = _parse_cases(sec.get("cases", "1a"))
        methods = sec.get("methods", "proposed").replace(",", " ").split()
        for m in methods:
            if m not in bench._METHODS_ORDER:
                raise ConfigError(f"field 'methods': unknown method {m!r}")
        restarts = int(sec.get("restarts", profile["restarts"]))
        n = int(sec.get("n", profile["n"]))
        lo = float(sec.get("lo", bench.DEFAULT_INTERVAL[0]))
        hi = float(sec.get("hi", bench.DEFAULT_INTERVAL[1]))
        budget = bench.BudgetConfig(
            max_iter_mm=int(sec.get("max_iter", profile["max_iter_mm"])),
            max_iter_grad=int(sec.get("max_iter_grad", profile["max_iter_grad"])),
            grid_n=int(sec.get("grid_n", 2048)),
            median_samples=int(sec.get("median_samples", profile["median_samples"])),
        )
        heatmap = sec.get("heatmap", "false").lower() in ("1", "true", "yes")
        specs = [bench.CaseSpec(f, o, n=n, lo=lo, hi=hi, seed=args.seed)
                 for f, o in cases]
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.out_dir, exist_ok=True)
    try:
        result = bench.run_suite(specs, methods, restarts, args.seed,
                                 budget=budget, threads=args.threads,
                                 keep_runs=True)
    except (IntegrityError, DegenerateScaleError) as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 2

    bench.write_results_csv(result, os.path.join(args.out_dir, "results.csv"))
    bench.write_summary_csv(result, os.path.join(args.out_dir, "summary.csv"))
    traces = os.path.join(args.out_dir, "traces")
    os.makedirs(traces, exist_ok=True)
    for row in result.rows:
        if row.run is not None:
            name = f"trace_{row.case}_{row.method}_{row.restart}.csv"
            solver.write_trace_csv(row.run, os.path.join(traces, name))
    if heatmap:
        bench.write_heatmap_svg(result, methods,
                                os.path.join(args.out_dir, "heatmap.svg"))
    for (case, method) in sorted(result.medians):
        print(f"{case} {method}: median gap {result.medians[(case, method)]:.6g}")
    return 0


def cmd_tof(args) -> int:
    try:
        sec = _read_config(args.config, "tof")
        profile = PROFILES[args.profile]
        size = int(sec.get("size", profile["tof_size"]))
        freqs = [float(t) for t in sec.get("freqs", "90e6 120e6").replace(",", " ").split()]
        sigma_frac = float(sec.get("sigma_frac", 0.05))
        downsample = int(sec.get("downsample", 2))
        labels = int(sec.get("labels", tof.DEFAULT_LABELS))
        alpha = float(sec.get("alpha", 0.02))
        max_iter = int(sec.get("max_iter", profile["tof_iters"]))
        kind = sec.get("autocorr", "trapezoid")
        plateau = float(sec.get("plateau", 0.5))
        if size % downsample:
            raise ConfigError("field 'downsample': must divide the image size")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    os.makedirs(args.out_dir, exist_ok=True)
    lo, hi = tof.DEFAULT_DEPTH_RANGE
    truth = tof.make_box_scene(size, size)
    g = tof.Autocorr(kind=kind, p=plateau)
    scene = tof.ToFScene(depth=truth, amplitudes=np.ones(len(freqs)),
                         background=np.full(len(freqs), 0.3),
                         freqs=np.array(freqs), autocorr=g)
    clean = tof.forward(scene, downsample=downsample, sigma=0.0, seed=args.seed)
    sigma = sigma_frac * float(np.max(np.abs(clean.y)))
    meas = tof.forward(scene, downsample=downsample, sigma=sigma, seed=args.seed)

    tof.write_pgm16(os.path.join(args.out_dir, "truth.pgm"), truth, lo, hi)
    for i in range(len(freqs)):
        for j in range(meas.y.shape[1]):
            tof.write_pgm16(os.path.join(args.out_dir, f"meas_f{i}_j{j}.pgm"),
                            meas.y[i, j], float(np.min(meas.y)), float(np.max(meas.y)))

    truth_low = tof.block_average(truth, downsample)
    rows = []
    best_cf = np.inf
    for i in range(len(freqs)):
        cf, _ = tof.closed_form_depth(meas, i)
        tof.write_pgm16(os.path.join(args.out_dir, f"closed_form_f{i}.pgm"), cf, lo, hi)
        err = tof.rmse(cf, truth_low)
        best_cf = min(best_cf, err)
        rows.append((f"closed_form_rmse_f{i}", err))

    cfg = tof.ToFReconConfig(alpha=alpha, labels=labels, max_iter=max_iter)
    result = tof.reconstruct(meas, (size, size), cfg)
    tof.write_pgm16(os.path.join(args.out_dir, "reconstruction.pgm"),
                    result.depth, lo, hi)
    rec_rmse = tof.rmse(result.depth, truth)
    match = np.ones(truth.shape, dtype=bool)
    for f in freqs:
        match &= tof.period_index(result.depth, f) == tof.period_index(truth, f)
    rows.append(("reconstruction_rmse", rec_rmse))
    rows.append(("best_closed_form_rmse", best_cf))
    rows.append(("unwrap_rate", float(np.mean(match))))

    with open(os.path.join(args.out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for k, v in rows:
            w.writerow([k, f"{v:.17g}"])
    solver.write_trace_csv(result.run, os.path.join(args.out_dir, "energy_trace.csv"))
    for k, v in rows:
        print(f"{k}: {v:.6g}")
    return 0


def cmd_selftest(args) -> int:
    """Desk-scale invariant suites; nonzero exit on any failure."""
    failures = []
    rng = np.random.default_rng(args.seed)

    def report(name, ok, detail=""):
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
        if not ok:
            failures.append(name)

    # Bregman distance basics
    geoms = [Geometry.quadratic(), Geometry.diag_quadratic(rng.uniform(0.5, 2.0, 8)),
             Geometry.burg_entropy(box_upper=3.0)]
    ok = True
    for geom in geoms:
        for _ in range(200):
            u = rng.uniform(0.1, 3.0, 8)
            v = rng.uniform(0.1, 3.0, 8)
            d = bregman(geom, u, v)
            m = geom.strong_convexity
            if d < 0 or bregman(geom, u, u) != 0.0:
                ok = False
            if d + 1e-12 < 0.5 * m * float(np.sum((u - v) ** 2)):
                ok = False
    report("bregman-distance", ok)

    # majorization + descent + rate on a small oscillatory case
    spec = bench.CaseSpec(2, "a", n=12, seed=args.seed)
    inst = bench.make_case(spec)
    tau = args.tau_factor * 0.99 / inst.smoothness.L
    ok = True
    for _ in range(200):
        anchor = rng.uniform(spec.lo, spec.hi, spec.n)
        probe = rng.uniform(spec.lo, spec.hi, spec.n)
        maj = solver.majorizer_value(inst.problem, inst.geom,
                                     0.99 / inst.smoothness.L, anchor, probe)
        e = inst.problem.energy(probe)
        if maj < e - 1e-9 * (1.0 + abs(e)):
            ok = False
        anchor_gap = abs(solver.majorizer_value(inst.problem, inst.geom,
                                                0.99 / inst.smoothness.L,
                                                anchor, anchor)
                         - inst.problem.energy(anchor))
        if anchor_gap > 1e-12 * (1.0 + abs(e)):
            ok = False
    report("majorization", ok)

    cfg = solver.SolverConfig(method="proposed", tau=min(tau, 0.999 / inst.smoothness.L)
                              if args.tau_factor <= 1.0 else tau,
                              max_iter=40, guard=args.tau_factor <= 1.0)
    smooth = (inst.smoothness if args.tau_factor <= 1.0
              else bench.RelativeSmoothness((1.0 - 1e-6) / tau, "supplied"))
    run = solver.run(inst.problem, inst.geom, cfg,
                     rng.uniform(spec.lo, spec.hi, spec.n), smoothness=smooth)
    run.L = inst.smoothness.L  # validate against the true constant
    worst = solver.check_descent_inequality(run)
    report("descent-inequality", worst <= 0.0, f"worst violation {worst:.3g}")
    report("descent-rate", solver.check_rate_bound(run))
    report("summed-rate", solver.check_sum_bound(run))

    # lifting against exhaustive enumeration on 2x2 grids
    ok = True
    for t in range(5):
        g = _random_grid(np.random.default_rng(args.seed + t))
        sol = lifting.solve_lifted(g, lifting.PDConfig(max_iter=4000, tol_gap=1e-12))
        best = _enumerate_best(g)
        if sol.primal_energy > best + 1e-6 * (1.0 + abs(best)):
            ok = False
    report("lifting-oracle", ok)

    return 1 if failures else 0


def _random_grid(rng):
    labels = np.linspace(-1.0, 1.0, 6)
    unary = rng.uniform(0.0, 1.0, size=(4, 6))
    alpha = rng.uniform(0.1, 0.5)
    return lifting.LabelGrid(dims=(2, 2), labels=labels, unary=unary,
                             alpha_x=np.full((2, 2), alpha),
                             alpha_y=np.full((2, 2), alpha))


def _enumerate_best(grid):
    import itertools

    ell = grid.labels.shape[0]
    best = np.inf
    for assign in itertools.product(range(ell), repeat=grid.n_pixels):
        best = min(best, lifting.discrete_energy(grid, np.array(assign)))
    return best


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bregmm",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bench")
    sub.add_parser("tof")
    st = sub.add_parser("selftest")
    st.add_argument("--tau-factor", type=float, default=1.0,
                    help="debug: scale the step size (2.0 breaks descent)")
    args = parser.parse_args(argv)

    if args.command == "bench":
        return cmd_bench(args)
    if args.command == "tof":
        return cmd_tof(args)
    return cmd_selftest(args)


if __name__ == "__main__":
    sys.exit(main())
