"""Brute-force validator: replace reservoirs by finite banks of oscillators.

Each bath is sampled on a uniform frequency comb; the full quadratic system
(network + all bath modes, unit masses) is diagonalized once and evolved
exactly in normal modes.  Tracing out the bath block gives an independent
check of the influence-functional dynamics, valid up to half the recurrence
time 2 pi / d_omega of the comb.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from . import model, spectral
from .errors import NonConvergence, RecurrenceWindowExceeded, WindowTooNoisy

_EXP_CUTOFF_SPAN = 12.0  # frequency horizon in cutoff units for smooth cutoffs


@dataclass(frozen=True, eq=False)
class DiscretizedBath:
    """Explicit-oscillator sampling of one spectral density.

    couplings[:, k] is the vector coupling mode k (frequency frequencies[k])
    to the network coordinates; all masses are 1.
    """

    frequencies: np.ndarray    # (M_modes,)
    couplings: np.ndarray      # (K, M_modes)
    spacing: float
    temperature: float

    def __post_init__(self):
        self.frequencies.flags.writeable = False
        self.couplings.flags.writeable = False

    @property
    def recurrence_time(self) -> float:
        return 2.0 * np.pi / self.spacing

    def gamma_disc(self, taus) -> np.ndarray:
        """Damping kernel of the discrete bath: sum_k c c^T cos(w_k tau)/(2 w_k^2)."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        weights = self.couplings / (np.sqrt(2.0) * self.frequencies)  # (K, M)
        cosines = np.cos(np.outer(taus, self.frequencies))            # (n, M)
        return np.einsum("im,tm,jm->tij", weights, cosines, weights)

    def gamma0_disc(self) -> np.ndarray:
        return self.gamma_disc([0.0])[0]


def discretize(density: spectral.SpectralDensity, modes: int,
               dim: int | None = None, temperature: float = 0.0) -> DiscretizedBath:
    """Sample a density on a uniform midpoint comb of `modes` frequencies.

    Mode weights are 2 w I(w) d_w; matrix-valued densities get one oscillator
    per non-negligible eigenvector of I(w).
    """
    if modes < 2:
        raise ValueError("need at least 2 modes")
    dim = spectral._density_dim([density], dim)
    if isinstance(density, spectral.PowerLawDensity):
        w_max = density.cutoff if density.cutoff_shape == spectral.SHARP \
            else density.cutoff * _EXP_CUTOFF_SPAN
    else:
        w_max = density.sharp_upper
    dw = w_max / modes
    grid = (np.arange(modes) + 0.5) * dw

    if isinstance(density, spectral.PowerLawDensity):
        vals = density.profile(grid)
        c = np.sqrt(2.0 * grid * vals * dw)
        couplings = np.zeros((dim, modes))
        couplings[density.site] = c
        freqs = grid
    else:
        freq_list: list[float] = []
        cols: list[np.ndarray] = []
        for w in grid:
            mat = spectral.density_matrix(density, w, dim)
            vals, vecs = np.linalg.eigh(mat)
            top = vals.max() if vals.size else 0.0
            for lam, vec in zip(vals, vecs.T):
                if lam > max(1e-14, 1e-12 * top):
                    freq_list.append(w)
                    cols.append(np.sqrt(2.0 * w * lam * dw) * vec)
        freqs = np.array(freq_list)
        couplings = np.array(cols).T if cols else np.zeros((dim, 0))

    return DiscretizedBath(frequencies=freqs, couplings=couplings,
                           spacing=dw, temperature=float(temperature))


@dataclass(frozen=True, eq=False)
class FullSystem:
    """Network plus explicit bath modes as one closed quadratic system."""

    spec: model.NetworkSpec
    baths: tuple[DiscretizedBath, ...]
    potential: np.ndarray          # (n_tot, n_tot)
    bath_slices: tuple[slice, ...]

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def total(self) -> int:
        return self.potential.shape[0]

    @property
    def recurrence_time(self) -> float:
        return min(b.recurrence_time for b in self.baths) if self.baths else np.inf

    def generator(self) -> np.ndarray:
        """Hamiltonian flow matrix on (q, p): [[0, 1], [-V, 0]]."""
        n = self.total
        a = np.zeros((2 * n, 2 * n))
        a[:n, n:] = np.eye(n)
        a[n:, :n] = -self.potential
        return a


def build_full_system(spec: model.NetworkSpec, modes: int = 500) -> FullSystem:
    """Discretize every reservoir of the network with `modes` oscillators each."""
    baths = [discretize(d, modes, spec.dim, temperature=t)
             for d, t in model.thermal_baths(spec)]
    return assemble_full_system(spec, baths)


def assemble_full_system(spec: model.NetworkSpec,
                         baths: Sequence[DiscretizedBath]) -> FullSystem:
    k = spec.dim
    counts = [b.frequencies.size for b in baths]
    n_tot = k + sum(counts)
    big = np.zeros((n_tot, n_tot))
    big[:k, :k] = spec.coupling
    pos = k
    slices = []
    for b, m in zip(baths, counts):
        sl = slice(pos, pos + m)
        big[sl, sl] = np.diag(b.frequencies ** 2)
        big[:k, sl] = b.couplings
        big[sl, :k] = b.couplings.T
        slices.append(sl)
        pos += m
    return FullSystem(spec=spec, baths=tuple(baths), potential=big,
                      bath_slices=tuple(slices))


# ---------------------------------------------------------------------------
# exact evolution


@dataclass(frozen=True, eq=False)
class OracleEvolution:
    times: np.ndarray
    mean: np.ndarray          # (n_t, 2K) reduced first moments
    cov: np.ndarray           # (n_t, 2K, 2K) reduced covariance
    bath_energy: np.ndarray   # (n_t, n_baths) <H_alpha>(t)


class _NormalModes:
    """Eigen-decomposition of the full potential plus initial covariance blocks."""

    def __init__(self, full: FullSystem, state):
        vals, vecs = np.linalg.eigh(full.potential)
        if vals.min() <= 0:
            raise NonConvergence(
                f"full discretized potential indefinite (min eigenvalue "
                f"{vals.min():.3g}); no stationary evolution")
        self.theta = np.sqrt(vals)
        self.q = vecs
        n = full.total
        k = full.dim

        cqq = np.zeros((n, n))
        cpp = np.zeros((n, n))
        cqp = np.zeros((n, n))
        cqq[:k, :k] = state.cov[:k, :k]
        cqp[:k, :k] = state.cov[:k, k:]
        cpp[:k, :k] = state.cov[k:, k:]
        for b, sl in zip(full.baths, full.bath_slices):
            occ = spectral.coth_half(b.frequencies, b.temperature)
            cqq[sl, sl] = np.diag(occ / (2.0 * b.frequencies))
            cpp[sl, sl] = np.diag(occ * b.frequencies / 2.0)

        qt = self.q.T
        self.cqq = qt @ cqq @ self.q
        self.cqp = qt @ cqp @ self.q
        self.cpp = qt @ cpp @ self.q
        mean_q = np.zeros(n)
        mean_p = np.zeros(n)
        mean_q[:k] = state.mean[:k]
        mean_p[:k] = state.mean[k:]
        self.mq = qt @ mean_q
        self.mp = qt @ mean_p

    def blocks_at(self, t: float):
        c = np.cos(self.theta * t)
        s = np.sin(self.theta * t) / self.theta
        d = -self.theta * np.sin(self.theta * t)
        # q(t) = c q0 + s p0 ; p(t) = d q0 + c p0, mode by mode
        cqq = (np.outer(c, c) * self.cqq + np.outer(c, s) * self.cqp
               + np.outer(s, c) * self.cqp.T + np.outer(s, s) * self.cpp)
        cqp = (np.outer(c, d) * self.cqq + np.outer(c, c) * self.cqp
               + np.outer(s, d) * self.cqp.T + np.outer(s, c) * self.cpp)
        cpp = (np.outer(d, d) * self.cqq + np.outer(d, c) * self.cqp
               + np.outer(c, d) * self.cqp.T + np.outer(c, c) * self.cpp)
        mq = c * self.mq + s * self.mp
        mp = d * self.mq + c * self.mp
        return cqq, cqp, cpp, mq, mp


def evolve_exact(full: FullSystem, state, times, *,
                 enforce_window: bool = True) -> OracleEvolution:
    """Exact reduced Gaussian evolution of the network under explicit baths.

    `state` is the initial network GaussianState; baths start thermal and
    uncorrelated.  Evolution is exact in the normal modes of the full
    potential, so arbitrary sample times cost the same.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    half_rec = 0.5 * full.recurrence_time
    if enforce_window and times.max() > half_rec:
        raise RecurrenceWindowExceeded(
            f"t_max {times.max():.4g} beyond half the recurrence time "
            f"{half_rec:.4g}; increase the mode count")

    nm = _NormalModes(full, state)
    k = full.dim
    qs = nm.q[:k]  # rows of the eigenvector matrix for network coordinates

    n_t = times.size
    cov = np.zeros((n_t, 2 * k, 2 * k))
    mean = np.zeros((n_t, 2 * k))
    energy = np.zeros((n_t, len(full.baths)))

    w_p = []
    w_q = []
    for b, sl in zip(full.baths, full.bath_slices):
        sel = np.zeros(full.total)
        sel[sl] = 1.0
        wq = np.zeros(full.total)
        wq[sl] = b.frequencies ** 2
        qsel = nm.q.T * sel           # rows scaled: Q^T diag(sel) Q products
        w_p.append(qsel @ nm.q)
        w_q.append((nm.q.T * wq) @ nm.q)

    for it, t in enumerate(times):
        cqq, cqp, cpp, mq, mp = nm.blocks_at(float(t))
        cov[it, :k, :k] = qs @ cqq @ qs.T
        cov[it, :k, k:] = qs @ cqp @ qs.T
        cov[it, k:, :k] = cov[it, :k, k:].T
        cov[it, k:, k:] = qs @ cpp @ qs.T
        mean[it, :k] = qs @ mq
        mean[it, k:] = qs @ mp
        for ib in range(len(full.baths)):
            energy[it, ib] = 0.5 * (np.sum(w_p[ib] * cpp) + np.sum(w_q[ib] * cqq)
                                    + (w_p[ib] @ mp) @ mp + (w_q[ib] @ mq) @ mq)

    return OracleEvolution(times=times, mean=mean, cov=cov, bath_energy=energy)


def evolve_expm(full: FullSystem, state, times) -> OracleEvolution:
    """Same evolution via scaling-and-squaring matrix exponentials.

    O((2 n_tot)^3) per step; intended for small cross-validation systems and
    the symplectic-preservation checks.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size < 2 or not np.allclose(np.diff(times), times[1] - times[0]):
        raise ValueError("expm path needs a uniform time grid")
    nm_state = _full_initial(full, state)
    cov_full, mean_full = nm_state
    step = expm(full.generator() * (times[1] - times[0]))
    k = full.dim
    n = full.total
    idx = np.concatenate([np.arange(k), n + np.arange(k)])
    cov = np.zeros((times.size, 2 * k, 2 * k))
    mean = np.zeros((times.size, 2 * k))
    energy = np.zeros((times.size, len(full.baths)))
    c = cov_full.copy()
    m = mean_full.copy()
    for it, _ in enumerate(times):
        if it:
            c = step @ c @ step.T
            m = step @ m
        cov[it] = c[np.ix_(idx, idx)]
        mean[it] = m[idx]
        for ib, (b, sl) in enumerate(zip(full.baths, full.bath_slices)):
            pp = np.diag(c)[n + np.arange(sl.start, sl.stop)]
            qq = np.diag(c)[sl.start:sl.stop]
            mp2 = m[n + np.arange(sl.start, sl.stop)] ** 2
            mq2 = m[sl.start:sl.stop] ** 2
            energy[it, ib] = 0.5 * np.sum(pp + mp2
                                          + b.frequencies ** 2 * (qq + mq2))
    return OracleEvolution(times=times, mean=mean, cov=cov, bath_energy=energy)


def _full_initial(full: FullSystem, state):
    n = full.total
    k = full.dim
    cov = np.zeros((2 * n, 2 * n))
    cov[:k, :k] = state.cov[:k, :k]
    cov[:k, n:n + k] = state.cov[:k, k:]
    cov[n:n + k, :k] = state.cov[k:, :k]
    cov[n:n + k, n:n + k] = state.cov[k:, k:]
    for b, sl in zip(full.baths, full.bath_slices):
        occ = spectral.coth_half(b.frequencies, b.temperature)
        cov[sl, sl] = np.diag(occ / (2.0 * b.frequencies))
        psl = slice(n + sl.start, n + sl.stop)
        cov[psl, psl] = np.diag(occ * b.frequencies / 2.0)
    mean = np.zeros(2 * n)
    mean[:k] = state.mean[:k]
    mean[n:n + k] = state.mean[k:]
    return cov, mean


# ---------------------------------------------------------------------------
# heat currents from bath-energy drains


@dataclass
class OracleHeatReport:
    slopes: np.ndarray        # d<H_alpha>/dt per bath over the window
    currents: np.ndarray      # -slopes: energy entering the network per bath
    uncertainty: np.ndarray   # slope uncertainty from the detrended residual
    fit_residual: float
    window: tuple[float, float]


def oracle_heat_current(full: FullSystem, state, window: tuple[float, float],
                        samples: int = 60, *,
                        residual_tol: float = 0.2) -> OracleHeatReport:
    """Heat currents from linear fits of the explicit bath energies.

    Detrended fluctuations set a per-bath slope uncertainty.  The fit raises
    WindowTooNoisy only when a resolvable drift exists but the fluctuations
    exceed `residual_tol` of it; a flat window (all currents consistent with
    zero) is a clean null, not a noisy fit.
    """
    t0, t1 = window
    times = np.linspace(t0, t1, samples)
    evo = evolve_exact(full, state, times)
    n_b = evo.bath_energy.shape[1]
    slopes = np.zeros(n_b)
    resid = np.zeros(n_b)
    for ib in range(n_b):
        coef = np.polyfit(times, evo.bath_energy[:, ib], 1)
        slopes[ib] = coef[0]
        resid[ib] = float(np.max(np.abs(evo.bath_energy[:, ib] - np.polyval(coef, times))))
    swings = np.abs(slopes) * (t1 - t0)
    top = int(np.argmax(swings))
    ratio = resid[top] / swings[top] if swings[top] > 0 else np.inf
    if swings[top] > resid[top] and ratio > residual_tol:
        raise WindowTooNoisy(
            f"bath-energy fluctuations are {ratio:.2g} of the fitted drift; "
            "enlarge the window or the mode count")
    return OracleHeatReport(slopes=slopes, currents=-slopes,
                            uncertainty=resid / (t1 - t0),
                            fit_residual=float(ratio if np.isfinite(ratio) else 0.0),
                            window=(float(t0), float(t1)))
