"""Green's function of the dissipative network equation.

The K x K matrix G(t) solves

    G''(t) + V_R G(t) + 2 int_0^t gamma(t - s) G'(s) ds = 0,
    G(0) = 0,  G'(0) = 1,

with V_R = V - 2 gamma(0).  The time-domain solver is an explicit
second-order predictor-corrector with a trapezoidal memory sum; the second
derivative stored on the grid is always obtained from the equation itself.
In the frequency domain G_hat(i w) = (-w^2 + V_R + 2 i w gamma_hat(i w))^{-1}
is evaluated by a cached linear solve.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from . import model, spectral
from .errors import (
    GridMismatch,
    InconclusiveWindow,
    NonConvergence,
    SingularAtFrequency,
    StepTooCoarseWarning,
)

_BLOWUP_FACTOR = 1e8


def renormalized_potential(spec: model.NetworkSpec) -> np.ndarray:
    """V_R = V - 2 gamma(0)."""
    g0 = spectral.gamma0(model.all_densities(spec), spec.dim)
    return spec.coupling - 2.0 * g0


def suggested_step(spec: model.NetworkSpec, safety: float = 0.05) -> float:
    """Step resolving both the fastest network frequency and the largest cutoff."""
    vr = renormalized_potential(spec)
    w_max = np.sqrt(np.max(np.abs(np.linalg.eigvalsh(vr))))
    cut = max((d.cutoff for d in model.all_densities(spec)
               if isinstance(d, spectral.PowerLawDensity)), default=0.0)
    cut = max(cut, max((d.omega[-1] for d in model.all_densities(spec)
                        if isinstance(d, spectral.TabulatedDensity)), default=0.0))
    scale = max(w_max, cut, 1e-6)
    return safety / scale


@dataclass(frozen=True, eq=False)
class GreensFunction:
    """Sampled solution G, G', G'' on a uniform grid plus solver metadata."""

    spec: model.NetworkSpec
    t: np.ndarray
    G: np.ndarray
    Gdot: np.ndarray
    Gddot: np.ndarray
    vr: np.ndarray
    gamma_samples: np.ndarray
    h: float
    kernels: spectral.KernelSet = field(repr=False)

    @property
    def dim(self) -> int:
        return self.vr.shape[0]

    def index_of(self, t: float) -> int:
        idx = int(round(t / self.h))
        if idx < 0 or idx >= self.t.size or abs(self.t[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridMismatch(f"t={t} not on the solved grid (h={self.h}, "
                               f"t_max={self.t[-1]})")
        return idx


def solve_G_time(spec: model.NetworkSpec, t_max: float, h: float | None = None,
                 *, kernels: spectral.KernelSet | None = None) -> GreensFunction:
    """Integrate the network response over [0, t_max] with step h."""
    if h is None:
        h = suggested_step(spec)
    vr = renormalized_potential(spec)
    dim = spec.dim
    advisory = suggested_step(spec, safety=0.1)
    if h > advisory * (1 + 1e-12):
        warnings.warn(
            f"step {h:.3g} exceeds 0.1/max(frequency, cutoff) = {advisory:.3g}",
            StepTooCoarseWarning, stacklevel=2)

    n = int(np.ceil(t_max / h - 1e-12))
    t = np.arange(n + 1) * h
    if kernels is None:
        kernels = spectral.KernelSet(dim, model.thermal_baths(spec))
    gam = kernels.gamma(t)
    memoryless = bool(np.max(np.abs(gam)) == 0.0)

    eye = np.eye(dim)
    G = np.zeros((n + 1, dim, dim))
    Gd = np.zeros((n + 1, dim, dim))
    Gdd = np.zeros((n + 1, dim, dim))
    Gd[0] = eye
    # G''(0) = -V_R G(0) - 2 * (empty convolution) = 0
    g0_half = 0.5 * h * gam[0]
    # reversed, transposed-flat kernel layout turns each memory sum into one GEMM
    gamr_t = gam[::-1].transpose(1, 0, 2).reshape(dim, (n + 1) * dim)
    gd_flat = Gd.reshape((n + 1) * dim, dim)
    blowup = _BLOWUP_FACTOR * max(1.0, np.linalg.norm(eye))

    for i in range(n):
        gi, gdi, gddi = G[i], Gd[i], Gdd[i]
        # predictor (Taylor) for the i+1 values
        gd_pred = gdi + h * gddi
        g_pred = gi + h * gdi + 0.5 * h * h * gddi
        if memoryless:
            known = np.zeros((dim, dim))
        else:
            # sum_j gamma(t_{i+1} - t_j) Gd_j, j = 0..i
            known = gamr_t[:, (n - 1 - i) * dim:n * dim] @ gd_flat[:(i + 1) * dim]
            known -= 0.5 * gam[i + 1] @ Gd[0]
            known *= h
        conv_pred = known + g0_half @ gd_pred
        gdd_pred = -vr @ g_pred - 2.0 * conv_pred
        # trapezoidal corrector
        Gd[i + 1] = gdi + 0.5 * h * (gddi + gdd_pred)
        G[i + 1] = gi + 0.5 * h * (gdi + Gd[i + 1])
        conv = known + g0_half @ Gd[i + 1]
        Gdd[i + 1] = -vr @ G[i + 1] - 2.0 * conv
        if i % 128 == 0 and np.max(np.abs(G[i + 1])) > blowup:
            raise NonConvergence(
                f"response norm exceeded {blowup:.1e} at t={t[i + 1]:.4g}; "
                "renormalized potential likely indefinite")

    if np.max(np.abs(G[-1])) > blowup:
        raise NonConvergence("response norm blew up by the end of the grid")

    for arr in (t, G, Gd, Gdd, gam):
        arr.flags.writeable = False
    return GreensFunction(spec=spec, t=t, G=G, Gdot=Gd, Gddot=Gdd, vr=vr,
                          gamma_samples=gam, h=h, kernels=kernels)


def third_derivative(gf: GreensFunction) -> np.ndarray:
    """G'''(t) from differentiating the equation of motion (no finite differences).

    G''' = -V_R G' - 2 gamma(0) G' - 2 int_0^t gamma'(t-s) G'(s) ds.
    """
    gdot_kernel = gf.kernels.gamma_dot(gf.t)
    conv = convolve_trapezoid(gdot_kernel, gf.Gdot, gf.h)
    gam0 = gf.gamma_samples[0]
    return -np.einsum("ij,tjk->tik", gf.vr + 2.0 * gam0, gf.Gdot) - 2.0 * conv


def convolve_trapezoid(kernel: np.ndarray, series: np.ndarray, h: float) -> np.ndarray:
    """C_i = h * trapezoid_j kernel(t_i - t_j) series(t_j), on the whole grid."""
    n, dim = series.shape[0], series.shape[1]
    out = np.zeros_like(series)
    ker_t = kernel[::-1].transpose(1, 0, 2).reshape(dim, n * dim)
    ser_flat = series.reshape(n * dim, -1)
    for i in range(1, n):
        # kernel(t_i - t_j) for j = 0..i is reversed-kernel rows n-1-i .. n-1
        acc = ker_t[:, (n - 1 - i) * dim:n * dim] @ ser_flat[:(i + 1) * dim]
        acc -= 0.5 * (kernel[i] @ series[0] + kernel[0] @ series[i])
        out[i] = h * acc
    return out


def equation_residual(gf: GreensFunction, samples: int = 40) -> float:
    """Max-norm residual of the equation of motion, measured independently.

    The second derivative is recomputed from the G samples with a fourth-order
    stencil and the memory integral with composite Simpson quadrature, so the
    residual tracks the solution error rather than echoing the solver's own
    discretization.
    """
    n = gf.t.size - 1
    idx = np.unique(np.linspace(4, n - 2, samples).astype(int))
    h = gf.h
    worst = 0.0
    for i in idx:
        d2 = (-gf.G[i - 2] + 16 * gf.G[i - 1] - 30 * gf.G[i]
              + 16 * gf.G[i + 1] - gf.G[i + 2]) / (12 * h * h)
        integrand = np.einsum("tij,tjk->tik", gf.gamma_samples[:i + 1][::-1],
                              gf.Gdot[:i + 1])
        conv = simpson(integrand, dx=h, axis=0)
        res = d2 + gf.vr @ gf.G[i] + 2.0 * conv
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


# ---------------------------------------------------------------------------
# frequency domain


class FrequencyEvaluator:
    """Cached evaluator of G_hat(i w) and the system matrix it inverts."""

    def __init__(self, spec: model.NetworkSpec, *,
                 abs_tol: float = 1e-11, rel_tol: float = 1e-9,
                 kernels: spectral.KernelSet | None = None):
        self.spec = spec
        self.dim = spec.dim
        self.kernels = kernels or spectral.KernelSet(
            spec.dim, model.thermal_baths(spec), abs_tol=abs_tol, rel_tol=rel_tol)
        self.vr = renormalized_potential(spec)
        self._cache: dict[float, np.ndarray] = {}

    def resonances(self) -> np.ndarray:
        """Bare resonance candidates sqrt(eig V_R); quadrature breakpoints."""
        eigs = np.linalg.eigvalsh(self.vr)
        return np.sqrt(np.clip(eigs, 0.0, None))

    def system_matrix(self, w: float) -> np.ndarray:
        w = float(w)
        ghat = self.kernels.gamma_hat(1j * abs(w))
        if w < 0:
            ghat = np.conj(ghat)
        return (-w * w) * np.eye(self.dim) + self.vr + 2j * w * ghat

    def G(self, w: float) -> np.ndarray:
        """G_hat(i w); results cached per frequency, conjugated for w < 0."""
        w = float(w)
        if w < 0:
            return np.conj(self.G(-w))
        cached = self._cache.get(w)
        if cached is not None:
            return cached
        a = self.system_matrix(w)
        try:
            g = np.linalg.solve(a, np.eye(self.dim))
        except np.linalg.LinAlgError as exc:
            raise SingularAtFrequency(w, str(exc)) from None
        residual = np.max(np.abs(a @ g - np.eye(self.dim)))
        if residual > 1e-10 * max(1.0, np.max(np.abs(g))):
            raise SingularAtFrequency(
                w, f"solve residual {residual:.2e} at omega={w:.6g}")
        g.flags.writeable = False
        self._cache[w] = g
        return g


def eval_G_freq(spec: model.NetworkSpec, w: float) -> np.ndarray:
    """One-shot frequency-domain evaluation (see FrequencyEvaluator for reuse)."""
    return FrequencyEvaluator(spec).G(w)


# ---------------------------------------------------------------------------
# decay detection


@dataclass
class DecayReport:
    decays: bool
    rate: float
    tail_ratio: float
    window: tuple[float, float]


def decay_check(gf: GreensFunction, *, tail_fraction: float = 0.25,
                rate_threshold: float = 1e-6,
                tail_ratio_threshold: float = 1e-4) -> DecayReport:
    """Empirical decay test on the norm envelope of G(t).

    The decay verdict requires the final-window norm to fall under
    ``tail_ratio_threshold`` times the global peak.  The rate is a
    least-squares exponential fit over the dominant-pole part of the envelope
    (between 50% and 0.1% of the peak); for sharp-cutoff baths the far tail
    crosses over to a slow algebraic branch-cut decay which would otherwise
    corrupt the fit.  Raises InconclusiveWindow when the envelope is still
    falling but has not yet reached the threshold.
    """
    norms = np.linalg.norm(gf.G, axis=(1, 2))
    peak = float(norms.max())
    if peak == 0.0:
        return DecayReport(False, 0.0, 0.0, (0.0, float(gf.t[-1])))
    start = int((1.0 - tail_fraction) * (norms.size - 1))
    tail_ratio = float(norms[start:].max() / peak)

    # envelope: local maxima of the norm over the full grid
    interior = (norms[1:-1] >= norms[:-2]) & (norms[1:-1] >= norms[2:])
    peaks = np.where(interior)[0] + 1
    if peaks.size >= 3:
        xs, ys = gf.t[peaks], norms[peaks]
    else:
        mask = norms > 1e-300
        xs, ys = gf.t[mask], norms[mask]
    window = (ys < 0.5 * peak) & (ys > 1e-3 * peak)
    if np.count_nonzero(window) >= 2:
        xs, ys = xs[window], ys[window]
    if xs.size < 2:
        rate = np.inf  # envelope numerically zero: decayed long ago
    else:
        slope = np.polyfit(xs, np.log(ys), 1)[0]
        rate = float(-slope)

    decays = tail_ratio < tail_ratio_threshold and rate > rate_threshold
    if not decays and rate > rate_threshold and tail_ratio < 0.5:
        raise InconclusiveWindow(
            f"envelope still decaying (rate {rate:.3g}) but tail/peak ratio "
            f"{tail_ratio:.3g} has not reached {tail_ratio_threshold:.1g}; "
            "extend t_max")
    return DecayReport(decays=decays, rate=rate, tail_ratio=tail_ratio,
                       window=(float(gf.t[start]), float(gf.t[-1])))
