"""Time-of-flight depth reconstruction from correlation differences.

A correlation sensor measures a_i g(4 pi f_i u / c + 2 pi j / n) + b_i per
frequency f_i and phase step j; opposite-step differences cancel the
background exactly.  Depth recovery from downsampled, noisy differences is
posed as a composite energy (sum of per-channel quadratic misfits through
a per-pixel periodic map, plus TV) and solved by the lifted surrogate
route; the classical per-pixel arctangent inversion serves as baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import lifting, solver
from .errors import ConfigError, StructuralError
from .geometry import Geometry, supplied_smoothness
from .problem import ChannelSeparableMap, CompositeProblem, Regularizer, ScalarFn

Array = np.ndarray

C_LIGHT = 299_792_458.0  # the carrier "wavelength" constant in the phase model

DEFAULT_FREQS = (90e6, 120e6)
DEFAULT_DEPTH_RANGE = (0.5, 6.0)
DEFAULT_LABELS = 128


# ---------------------------------------------------------------------------
# autocorrelation models
# ---------------------------------------------------------------------------

def _wrap_pi(phi: Array) -> Array:
    """Wrap to [-pi, pi)."""
    return (phi + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class Autocorr:
    """2 pi periodic, even correlation waveform.

    ``cosine`` is the idealized sinusoidal model.  ``trapezoid`` correlates
    a square illumination with a trapezoidal reference whose ramps cover
    the fraction p of each half period: the result is C^1 and piecewise
    quadratic, and p = 0 degenerates to the triangular correlation of two
    square waves.
    """

    kind: str = "cosine"
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in ("cosine", "trapezoid"):
            raise ConfigError(f"unknown autocorrelation kind {self.kind!r}")
        if self.kind == "trapezoid" and not (0.0 <= self.p <= 1.0):
            raise ConfigError("trapezoid fraction must lie in [0, 1]")

    def __call__(self, phi):
        return autocorr_eval(self, phi)

    def deriv(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind == "cosine":
            return -np.sin(phi)
        w = self.p * np.pi / 2.0
        x = _wrap_pi(phi)
        a = np.abs(x)
        peak = 1.0 - w / (2.0 * np.pi) if w > 0.0 else 1.0
        if w == 0.0:
            d = np.where(a > 0, -2.0 / np.pi, 0.0)
        else:
            near0 = a <= w / 2.0
            nearpi = a >= np.pi - w / 2.0
            d = np.where(near0, -(4.0 / np.pi) * a / w,
                         np.where(nearpi, (4.0 / np.pi) * (a - np.pi) / w
                                  + 0.0 * a, -2.0 / np.pi))
        return np.sign(x) * d / peak


def autocorr_eval(g: Autocorr, phi) -> Array:
    """Evaluate the correlation waveform; periodic and even by construction."""
    phi = np.asarray(phi, dtype=float)
    if g.kind == "cosine":
        return np.cos(phi)
    w = g.p * np.pi / 2.0
    a = np.abs(_wrap_pi(phi))
    if w == 0.0:
        return 1.0 - 2.0 * a / np.pi
    near0 = a <= w / 2.0
    nearpi = a >= np.pi - w / 2.0
    val = np.where(near0, 1.0 - (2.0 / np.pi) * (a * a + w * w / 4.0) / w,
                   np.where(nearpi, -1.0 + (2.0 / np.pi) * ((a - np.pi) ** 2 + w * w / 4.0) / w,
                            1.0 - 2.0 * a / np.pi))
    peak = 1.0 - w / (2.0 * np.pi)
    return val / peak


# ---------------------------------------------------------------------------
# scenes and measurements
# ---------------------------------------------------------------------------

@dataclass
class ToFScene:
    depth: Array                       # (H, W) meters
    amplitudes: Array                  # (F,)
    background: Array                  # (F,)
    freqs: Array                       # (F,) Hz
    n_steps: int = 4
    autocorr: Autocorr = field(default_factory=Autocorr)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        self.amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        self.background = np.atleast_1d(np.asarray(self.background, dtype=float))
        self.freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        if np.any(self.amplitudes <= 0):
            raise StructuralError("amplitudes must be positive")
        if self.n_steps % 2 != 0:
            raise StructuralError("n_steps must be even")


def make_box_scene(H: int = 48, W: int = 48) -> Array:
    """Piecewise-constant depth: a 1.2 m plane with two raised boxes."""
    depth = np.full((H, W), 1.2)
    r0, r1 = int(0.2 * H), int(0.65 * H)
    depth[r0:r1, r0:r1] = 4.3
    r2, r3 = int(0.7 * H), int(0.9 * H)
    c2, c3 = int(0.6 * W), int(0.8 * W)
    depth[r2:r3, c2:c3] = 2.6
    return depth


@dataclass
class ToFMeasurements:
    y: Array                 # (F, n_steps//2, h, w) difference images
    freqs: Array
    amplitudes: Array
    n_steps: int
    downsample: int
    sigma: float
    autocorr: Autocorr

    @property
    def low_res_shape(self) -> Tuple[int, int]:
        return self.y.shape[2], self.y.shape[3]


def block_average(img: Array, s: int) -> Array:
    H, W = img.shape[-2], img.shape[-1]
    if H % s or W % s:
        raise StructuralError(f"downsample factor {s} must divide {H}x{W}")
    shape = img.shape[:-2] + (H // s, s, W // s, s)
    return img.reshape(shape).mean(axis=(-3, -1))


def block_upsample(img: Array, s: int) -> Array:
    return np.repeat(np.repeat(img, s, axis=-2), s, axis=-1)


def phase_of_depth(u, freq: float, j: int, n_steps: int) -> Array:
    return 4.0 * np.pi * freq * np.asarray(u, dtype=float) / C_LIGHT \
        + 2.0 * np.pi * j / n_steps


def channel_response(u, freq: float, amplitude: float, j: int, n_steps: int,
                     g: Autocorr) -> Array:
    """Background-free difference a * (g(phi_j) - g(phi_{j + n/2}))."""
    phi = phase_of_depth(u, freq, j, n_steps)
    return amplitude * (g(phi) - g(phi + np.pi))


def forward(scene: ToFScene, downsample: int = 1, sigma: float = 0.0,
            seed: int = 0) -> ToFMeasurements:
    """Simulate difference measurements: block-averaged, Gaussian-noised.

    The background levels never enter the differences, so measurements are
    bit-identical for any background with the same noise stream.
    """
    H, W = scene.depth.shape
    n_half = scene.n_steps // 2
    rng = np.random.default_rng(seed)
    F = scene.freqs.shape[0]
    y = np.empty((F, n_half, H // downsample, W // downsample))
    for i in range(F):
        for j in range(n_half):
            clean = channel_response(scene.depth, scene.freqs[i],
                                     scene.amplitudes[i], j, scene.n_steps,
                                     scene.autocorr)
            low = block_average(clean, downsample)
            y[i, j] = low + (rng.normal(0.0, sigma, size=low.shape)
                             if sigma > 0.0 else 0.0)
    return ToFMeasurements(y=y, freqs=scene.freqs, amplitudes=scene.amplitudes,
                           n_steps=scene.n_steps, downsample=downsample,
                           sigma=sigma, autocorr=scene.autocorr)


def unambiguous_range(freq: float) -> float:
    return C_LIGHT / (2.0 * freq)


def closed_form_depth(meas: ToFMeasurements, i: int) -> Tuple[Array, Array]:
    """Per-pixel arctangent inversion of four-step sinusoidal data.

    Returns (depth, valid); pixels with both differences near zero are
    flagged invalid.  Depths land in [0, c / (2 f_i)) and wrap beyond it.
    """
    if meas.n_steps != 4:
        raise ConfigError("the closed form assumes four phase steps")
    y0 = meas.y[i, 0]
    y1 = meas.y[i, 1]
    amp = np.hypot(y0, y1)
    valid = amp > 1e-12 * (1.0 + float(np.max(amp)))
    phase = np.arctan2(-y1, y0)  # y0 = 2a cos(phi), y1 = -2a sin(phi)
    phase = np.mod(phase, 2.0 * np.pi)
    depth = phase * C_LIGHT / (4.0 * np.pi * meas.freqs[i])
    return depth, valid


def period_index(u: Array, freq: float) -> Array:
    return np.floor(np.asarray(u, dtype=float) / unambiguous_range(freq)).astype(int)


def rmse(a: Array, b: Array) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


# ---------------------------------------------------------------------------
# the reconstruction energy
# ---------------------------------------------------------------------------

@dataclass
class ToFReconConfig:
    alpha: float = 0.02
    labels: int = DEFAULT_LABELS
    depth_range: Tuple[float, float] = DEFAULT_DEPTH_RANGE
    max_iter: int = 30
    init_depth: float = 1.0
    tol_dz: float = 1e-9
    pd_max_iter: int = 1200
    pd_warm_iter: int = 500
    sublabel: bool = True


def assemble_problem(meas: ToFMeasurements, full_shape: Tuple[int, int],
                     alpha: float,
                     depth_range: Tuple[float, float] = DEFAULT_DEPTH_RANGE):
    """CompositeProblem for sum_c ||y_c - K rho_c(u)||^2 + alpha TV(u)."""
    H, W = full_shape
    n = H * W
    s = meas.downsample
    F, n_half = meas.y.shape[0], meas.y.shape[1]
    channels = []
    ys = []
    for i in range(F):
        for j in range(n_half):
            def ch(u, _i=i, _j=j):
                return channel_response(u, meas.freqs[_i], meas.amplitudes[_i],
                                        _j, meas.n_steps, meas.autocorr)

            def chd(u, _i=i, _j=j):
                phi = phase_of_depth(u, meas.freqs[_i], _j, meas.n_steps)
                scale = 4.0 * np.pi * meas.freqs[_i] / C_LIGHT
                return meas.amplitudes[_i] * scale * (
                    meas.autocorr.deriv(phi) - meas.autocorr.deriv(phi + np.pi))

            channels.append(ScalarFn(fn=ch, deriv=chd, name=f"tof-{i}-{j}"))
            ys.append(meas.y[i, j])
    C = len(channels)
    y_stack = np.stack(ys)  # (C, h, w)

    def value(v):
        V = v.reshape(C, H, W)
        r = block_average(V, s) - y_stack
        return float(np.sum(r * r))

    def gradient(v):
        V = v.reshape(C, H, W)
        r = block_average(V, s) - y_stack
        return (2.0 / (s * s)) * block_upsample(r, s).reshape(-1)

    from .problem import SmoothOuter

    outer = SmoothOuter.custom(value, gradient, domain="all")
    inner = ChannelSeparableMap(channels, n)
    reg = Regularizer.tv(alpha, dims=(H, W), coupling="aniso")
    problem = CompositeProblem(outer=outer, inner=inner, reg=reg,
                               lo=depth_range[0], hi=depth_range[1])
    geom = Geometry.diag_quadratic(np.full(C * n, 2.0 / (s * s)))
    return problem, geom


def tof_energy(u: Array, meas: ToFMeasurements, alpha: float,
               depth_range: Tuple[float, float] = DEFAULT_DEPTH_RANGE) -> float:
    """Exact energy of a full-resolution depth image."""
    u = np.asarray(u, dtype=float)
    problem, _ = assemble_problem(meas, u.shape, alpha, depth_range)
    return problem.energy(u.reshape(-1))


@dataclass
class ToFResult:
    depth: Array
    run: solver.SolverRun
    problem: CompositeProblem


def reconstruct(meas: ToFMeasurements, full_shape: Tuple[int, int],
                cfg: Optional[ToFReconConfig] = None,
                u0: Optional[Array] = None) -> ToFResult:
    """Surrogate iterations with lifted subproblems over the depth labels.

    Starts from a constant depth, keeps the energy trace non-increasing
    under the guard, and warm-starts the primal-dual fields across outer
    iterations.
    """
    cfg = cfg or ToFReconConfig()
    problem, geom = assemble_problem(meas, full_shape, cfg.alpha, cfg.depth_range)
    if u0 is None:
        u0 = np.full(full_shape[0] * full_shape[1], cfg.init_depth)
    else:
        u0 = np.asarray(u0, dtype=float).reshape(-1)
    scfg = solver.SolverConfig(
        method="proposed", tau=0.99, max_iter=cfg.max_iter, tol_dz=cfg.tol_dz,
        guard=True, labels=cfg.labels, sublabel=cfg.sublabel,
        pd=lifting.PDConfig(max_iter=cfg.pd_max_iter, check_every=50,
                            tol_gap=1e-7))
    run = solver.run(problem, geom, scfg, u0,
                     smoothness=supplied_smoothness(1.0))
    return ToFResult(depth=run.u_final.reshape(full_shape), run=run,
                     problem=problem)


# ---------------------------------------------------------------------------
# 16-bit PGM import/export
# ---------------------------------------------------------------------------

def write_pgm16(path, img: Array, lo: float, hi: float) -> None:
    """P5 16-bit big-endian with an affine [lo, hi] -> [0, 65535] scaling."""
    img = np.asarray(img, dtype=float)
    scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    data = np.round(scaled * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        fh.write(data.tobytes())


def read_pgm16(path, lo: float, hi: float) -> Array:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise StructuralError(f"not a P5 file: {magic!r}")
        line = fh.readline()
        while line.startswith(b"#"):
            line = fh.readline()
        w, h = (int(t) for t in line.split())
        maxval = int(fh.readline())
        if maxval != 65535:
            raise StructuralError("expected a 16-bit PGM")
        data = np.frombuffer(fh.read(w * h * 2), dtype=">u2").reshape(h, w)
    return lo + (hi - lo) * data.astype(float) / 65535.0
