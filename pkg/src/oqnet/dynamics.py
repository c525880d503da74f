"""Exact Gaussian-state evolution and time-local master-equation coefficients.

Phase-space ordering is (X, P).  The moment map of the evolution is

    mean(t) = Phi(t) mean(0),      cov(t) = Phi(t) cov(0) Phi(t)^T + Sigma(t),

with Phi(t) = [[G'(t), G(t)], [G''(t), G'(t)]] and Sigma(t) assembled from the
double-time noise integrals

    s_nm(t) = int_0^t int_0^t G^(n)(t1) nu(t1 - t2) G^(m)(t2)^T dt1 dt2.

The time-local generator acting on moments is d(mean)/dt = A(t) mean and
d(cov)/dt = A cov + cov A^T + N with

    A(t) = [[0, 1], [-V_R(t), -2 Gamma(t)]],
    N(t) = [[0, -F(t)^T], [-F(t), 2 D(t)]],

where (V_R(t), Gamma(t)) solve [V_R, 2 Gamma] [[G, G'], [G', G'']] =
-[G'', G'''] and N(t) = dSigma/dt - A Sigma - Sigma A^T.  This fixes D and F as

    D = Sym(V_R s01 + 2 Gamma s11) + s11'/2,
    F = s11 - V_R s00 - 2 Gamma s10 - s10'.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import greens, model, spectral
from ._quad import quad_vec_checked
from .errors import GridMismatch, NotStationary

# constants of the generator that vanish identically for zero-mean thermal
# baths: no mass renormalization, forces, anomalous relaxation or momentum
# diffusion.
GENERATOR_CONSTANTS = {
    "mass_renormalization": "identity",
    "force_x": 0.0,
    "force_p": 0.0,
    "anomalous_relaxation": 0.0,
    "momentum_diffusion": 0.0,
}


def symplectic_form(k: int) -> np.ndarray:
    """Omega for (X, P) ordering: [x_a, p_b] = i delta_ab."""
    omega = np.zeros((2 * k, 2 * k))
    omega[:k, k:] = np.eye(k)
    omega[k:, :k] = -np.eye(k)
    return omega


@dataclass(frozen=True)
class GaussianState:
    """First moments and symmetric covariance in (X, P) ordering."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size) or mean.size % 2:
            raise ValueError("mean must have size 2K and cov shape (2K, 2K)")
        sym_err = np.max(np.abs(cov - cov.T))
        if sym_err > 1e-10 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("covariance must be symmetric")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size // 2

    def uncertainty_margin(self) -> float:
        """Min eigenvalue of cov + i Omega / 2; >= -1e-10 for a physical state."""
        omega = symplectic_form(self.dim)
        h = self.cov + 0.5j * omega
        return float(np.linalg.eigvalsh(h).min())


def vacuum_state(potential: np.ndarray) -> GaussianState:
    """Ground state of a stable quadratic potential (unit masses)."""
    vals, vecs = np.linalg.eigh(np.asarray(potential, dtype=float))
    if vals.min() <= 0:
        raise ValueError("potential must be positive definite")
    freq = np.sqrt(vals)
    k = vals.size
    cov = np.zeros((2 * k, 2 * k))
    cov[:k, :k] = (vecs / freq) @ vecs.T / 2.0
    cov[k:, k:] = (vecs * freq) @ vecs.T / 2.0
    return GaussianState(mean=np.zeros(2 * k), cov=cov)


def thermal_state(potential: np.ndarray, temperature: float) -> GaussianState:
    """Thermal state of a stable quadratic potential at temperature T."""
    vals, vecs = np.linalg.eigh(np.asarray(potential, dtype=float))
    if vals.min() <= 0:
        raise ValueError("potential must be positive definite")
    freq = np.sqrt(vals)
    occ = spectral.coth_half(freq, temperature)
    k = vals.size
    cov = np.zeros((2 * k, 2 * k))
    cov[:k, :k] = (vecs * (occ / freq)) @ vecs.T / 2.0
    cov[k:, k:] = (vecs * (occ * freq)) @ vecs.T / 2.0
    return GaussianState(mean=np.zeros(2 * k), cov=cov)


# ---------------------------------------------------------------------------
# propagator matrices on the solved grid


@dataclass(frozen=True)
class PropagatorMatrices:
    t: float
    phi: np.ndarray    # 2K x 2K
    sigma: np.ndarray  # 2K x 2K


class PropagatorSeries:
    """Phi(t) and Sigma(t) for every grid point of a solved Green's function.

    The noise blocks are accumulated with an incremental double-trapezoid sum,
    one time slab per step, so the total cost is O(T^2) rather than O(T^3).
    Immutable after construction.
    """

    def __init__(self, gf: greens.GreensFunction, s00, s01, s11, nu_samples):
        self.gf = gf
        self.t = gf.t
        self.s00 = s00
        self.s01 = s01
        self.s11 = s11
        self.nu_samples = nu_samples
        for arr in (s00, s01, s11, nu_samples):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.gf.dim

    def phi(self, i: int) -> np.ndarray:
        gf = self.gf
        return np.block([[gf.Gdot[i], gf.G[i]], [gf.Gddot[i], gf.Gdot[i]]])

    def sigma(self, i: int) -> np.ndarray:
        return np.block([[self.s00[i], self.s01[i]],
                         [self.s01[i].T, self.s11[i]]])

    def matrices(self, t: float) -> PropagatorMatrices:
        i = self.gf.index_of(t)
        return PropagatorMatrices(t=float(self.t[i]), phi=self.phi(i),
                                  sigma=self.sigma(i))


def propagator_series(gf: greens.GreensFunction,
                      baths: Sequence[spectral.Bath] | None = None) -> PropagatorSeries:
    """Build the (Phi, Sigma) series for a solved network response."""
    if baths is None:
        baths = model.thermal_baths(gf.spec)
    n = gf.t.size
    dim = gf.dim
    h = gf.h
    nu = spectral.noise_kernel(baths, gf.t, dim) if baths else np.zeros((n, dim, dim))

    s00 = np.zeros((n, dim, dim))
    s01 = np.zeros((n, dim, dim))
    s11 = np.zeros((n, dim, dim))
    if np.max(np.abs(nu)) == 0.0:
        return PropagatorSeries(gf, s00, s01, s11, nu)

    # stack G^T and Gdot^T side by side so both U columns update in one GEMM
    gt = np.concatenate([gf.G.transpose(0, 2, 1), gf.Gdot.transpose(0, 2, 1)],
                        axis=2)  # (n, K, 2K)
    gt_flat = gt.reshape(n * dim, 2 * dim)
    nur = nu[::-1].copy()  # nur[n-1-k] = nu[k]: convolution slices stay contiguous
    nur_flat = nur.reshape(n * dim, dim)
    nur_t = nur.transpose(1, 0, 2).reshape(dim, n * dim)
    g_t = gf.G.transpose(1, 0, 2).reshape(dim, n * dim)
    gd_t = gf.Gdot.transpose(1, 0, 2).reshape(dim, n * dim)

    # U_j(i) = trapezoid_k nu(t_j - t_k) [G^T | Gdot^T](t_k), maintained in place
    u = np.zeros((n, dim, 2 * dim))
    u_flat = u.reshape(n * dim, 2 * dim)

    for i in range(1, n):
        # inner-weight bookkeeping: node i-1 weight 1/2 -> 1, node i enters at 1/2
        iK = i * dim
        u_flat[:iK] += 0.5 * (nur_flat[(n - 1 - i) * dim:(n - 1) * dim] @ gt[i])
        u_flat[:iK] += 0.5 * (nur_flat[(n - i) * dim:] @ gt[i - 1])
        fresh = nur_t[:, (n - 1 - i) * dim:] @ gt_flat[:iK + dim]
        fresh -= 0.5 * (nu[i] @ gt[0] + nu[0] @ gt[i])
        u[i] = fresh

        # outer trapezoid over j with left factors G and Gdot
        acc_g = g_t[:, :iK + dim] @ u_flat[:iK + dim]
        acc_g -= 0.5 * (gf.G[0] @ u[0] + gf.G[i] @ u[i])
        acc_gd = gd_t[:, :iK + dim] @ u_flat[:iK + dim]
        acc_gd -= 0.5 * (gf.Gdot[0] @ u[0] + gf.Gdot[i] @ u[i])
        s00[i] = h * h * acc_g[:, :dim]
        s01[i] = h * h * acc_g[:, dim:]
        s11[i] = h * h * acc_gd[:, dim:]

    return PropagatorSeries(gf, s00, s01, s11, nu)


def propagator_matrices(gf: greens.GreensFunction, t: float,
                        baths: Sequence[spectral.Bath] | None = None) -> PropagatorMatrices:
    """(Phi, Sigma) at one grid time.  Build a PropagatorSeries once for many t."""
    return propagator_series(gf, baths).matrices(t)


def evolve_state(state: GaussianState, pm: PropagatorMatrices) -> GaussianState:
    """Apply the exact moment map; trace normalization is preserved identically."""
    mean = pm.phi @ state.mean
    cov = pm.phi @ state.cov @ pm.phi.T + pm.sigma
    cov = 0.5 * (cov + cov.T)
    return GaussianState(mean=mean, cov=cov)


# ---------------------------------------------------------------------------
# master-equation coefficients


@dataclass(frozen=True, eq=False)
class MasterEqCoefficients:
    """Time series of the exact generator coefficients on the solver grid.

    Grid points where the defining linear system is numerically singular are
    masked (an intrinsic feature of exact time-local generators at isolated
    times, not a solver defect).
    """

    t: np.ndarray
    vr_t: np.ndarray      # (n, K, K)
    gamma_t: np.ndarray   # (n, K, K)
    d_t: np.ndarray       # (n, K, K)
    f_t: np.ndarray       # (n, K, K)
    masked: np.ndarray    # (n,) bool
    constants: dict = field(default_factory=lambda: dict(GENERATOR_CONSTANTS))

    @property
    def masked_times(self) -> np.ndarray:
        return self.t[self.masked]

    def generator(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Drift A(t_i) and noise N(t_i) for the moment equations."""
        k = self.vr_t.shape[1]
        a = np.zeros((2 * k, 2 * k))
        a[:k, k:] = np.eye(k)
        a[k:, :k] = -self.vr_t[i]
        a[k:, k:] = -2.0 * self.gamma_t[i]
        nmat = np.zeros((2 * k, 2 * k))
        nmat[:k, k:] = -self.f_t[i].T
        nmat[k:, :k] = -self.f_t[i]
        nmat[k:, k:] = 2.0 * self.d_t[i]
        return a, nmat


def _centered_derivative(series: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(series)
    out[1:-1] = (series[2:] - series[:-2]) / (2.0 * h)
    out[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * h)
    out[-1] = (3.0 * series[-1] - 4.0 * series[-2] + series[-3]) / (2.0 * h)
    return out


def master_coefficients(gf: greens.GreensFunction, series: PropagatorSeries,
                        *, cond_limit: float = 1e12) -> MasterEqCoefficients:
    """Extract V_R(t), Gamma(t), D(t), F(t) from the solved response."""
    n = gf.t.size
    dim = gf.dim
    g3 = greens.third_derivative(gf)
    vr_t = np.zeros((n, dim, dim))
    gamma_t = np.zeros((n, dim, dim))
    masked = np.zeros(n, dtype=bool)

    for i in range(n):
        m = np.block([[gf.G[i], gf.Gdot[i]], [gf.Gdot[i], gf.Gddot[i]]])
        rhs = -np.hstack([gf.Gddot[i], g3[i]])  # K x 2K
        if np.linalg.cond(m) > cond_limit:
            masked[i] = True
            vr_t[i] = np.nan
            gamma_t[i] = np.nan
            continue
        x = np.linalg.solve(m.T, rhs.T).T
        vr_t[i] = x[:, :dim]
        gamma_t[i] = 0.5 * x[:, dim:]

    sdot11 = _centered_derivative(series.s11, gf.h)
    s10 = series.s01.transpose(0, 2, 1)
    sdot10 = _centered_derivative(s10, gf.h)

    d_t = np.full((n, dim, dim), np.nan)
    f_t = np.full((n, dim, dim), np.nan)
    ok = ~masked
    vg = vr_t[ok] @ series.s01[ok] + 2.0 * gamma_t[ok] @ series.s11[ok]
    d_t[ok] = 0.5 * (vg + vg.transpose(0, 2, 1)) + 0.5 * sdot11[ok]
    f_t[ok] = (series.s11[ok] - vr_t[ok] @ series.s00[ok]
               - 2.0 * gamma_t[ok] @ s10[ok] - sdot10[ok])

    for arr in (vr_t, gamma_t, d_t, f_t, masked):
        arr.flags.writeable = False
    return MasterEqCoefficients(t=gf.t, vr_t=vr_t, gamma_t=gamma_t,
                                d_t=d_t, f_t=f_t, masked=masked)


def paper_form_vr_gamma(gf: greens.GreensFunction, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form coefficient expressions via Schur complements.

    Equivalent to the block solve wherever G' and (G' - G'' G'^{-1} G) are
    invertible; exposed for cross-checking.
    """
    g, gd, gdd = gf.G[i], gf.Gdot[i], gf.Gddot[i]
    g3 = greens.third_derivative(gf)[i]
    gd_inv = np.linalg.inv(gd)
    schur = gd - gdd @ gd_inv @ g
    gamma2 = (g3 @ gd_inv @ g - gdd) @ np.linalg.inv(schur)
    vr = -(g3 + gamma2 @ gdd) @ gd_inv
    return vr, 0.5 * gamma2


def propagate_first_moments(coeffs: MasterEqCoefficients, mean0: np.ndarray) -> np.ndarray:
    """Integrate d(mean)/dt = A(t) mean with the trapezoidal rule."""
    _require_unmasked(coeffs)
    n = coeffs.t.size
    h = float(coeffs.t[1] - coeffs.t[0])
    out = np.zeros((n, mean0.size))
    out[0] = mean0
    a_prev, _ = coeffs.generator(0)
    for i in range(n - 1):
        a_next, _ = coeffs.generator(i + 1)
        pred = out[i] + h * (a_prev @ out[i])
        out[i + 1] = out[i] + 0.5 * h * (a_prev @ out[i] + a_next @ pred)
        a_prev = a_next
    return out


def propagate_second_moments(coeffs: MasterEqCoefficients, cov0: np.ndarray) -> np.ndarray:
    """Integrate d(cov)/dt = A cov + cov A^T + N with the trapezoidal rule."""
    _require_unmasked(coeffs)
    n = coeffs.t.size
    h = float(coeffs.t[1] - coeffs.t[0])
    out = np.zeros((n, *cov0.shape))
    out[0] = cov0

    def rhs(i, c):
        a, nmat = coeffs.generator(i)
        return a @ c + c @ a.T + nmat

    for i in range(n - 1):
        k1 = rhs(i, out[i])
        pred = out[i] + h * k1
        out[i + 1] = out[i] + 0.5 * h * (k1 + rhs(i + 1, pred))
    return out


def _require_unmasked(coeffs: MasterEqCoefficients) -> None:
    if coeffs.masked.any():
        bad = coeffs.masked_times
        raise GridMismatch(
            f"cannot propagate across {bad.size} masked coefficient times "
            f"(first at t={bad[0]:.6g})")


# ---------------------------------------------------------------------------
# energy flow and the stationary covariance


@dataclass
class EnergyFlowReport:
    t: float
    master_form: float       # tr(D - 2 Gamma s11)
    stationary_form: float   # tr(V_R s01)
    difference: float


def energy_flow(pm: PropagatorMatrices, vr_inf: np.ndarray,
                gamma_t: np.ndarray, d_t: np.ndarray) -> EnergyFlowReport:
    """Renormalized-energy flow d<H_R>/dt computed two ways.

    The two traces agree only at stationarity; the difference is reported.
    """
    k = vr_inf.shape[0]
    s01 = pm.sigma[:k, k:]
    s11 = pm.sigma[k:, k:]
    master = float(np.trace(d_t - 2.0 * gamma_t @ s11))
    stationary = float(np.trace(vr_inf @ s01))
    return EnergyFlowReport(t=pm.t, master_form=master, stationary_form=stationary,
                            difference=master - stationary)


def stationary_energy_flow(series: PropagatorSeries, coeffs: MasterEqCoefficients,
                           *, window: float = 0.05,
                           stationarity_tol: float = 1e-3) -> EnergyFlowReport:
    """Energy-flow decomposition at the end of the grid, with a plateau guard."""
    n = series.t.size
    j = max(1, int((1.0 - window) * (n - 1)))
    scale = max(np.max(np.abs(series.s11[-1])), np.max(np.abs(series.s00[-1])), 1e-300)
    drift = max(np.max(np.abs(series.s11[-1] - series.s11[j])),
                np.max(np.abs(series.s00[-1] - series.s00[j]))) / scale
    if drift > stationarity_tol:
        raise NotStationary(
            f"noise covariance still drifting by {drift:.3g} over the last "
            f"{window:.0%} of the grid")
    i = n - 1
    if coeffs.masked[i]:
        i = int(np.where(~coeffs.masked)[0][-1])
    pm = PropagatorMatrices(t=float(series.t[i]), phi=series.phi(i),
                            sigma=series.sigma(i))
    vr_inf = greens.renormalized_potential(series.gf.spec)
    return energy_flow(pm, vr_inf, coeffs.gamma_t[i], coeffs.d_t[i])


@dataclass
class SigmaBlocks:
    s00: np.ndarray
    s01: np.ndarray
    s10: np.ndarray
    s11: np.ndarray

    def full(self) -> np.ndarray:
        return np.block([[self.s00, self.s01], [self.s10, self.s11]])


def stationary_sigma(freq_ev: greens.FrequencyEvaluator,
                     baths: Sequence[spectral.Bath] | None = None, *,
                     rel_tol: float = 1e-9) -> SigmaBlocks:
    """Frequency-domain limit of the noise covariance for a decaying response.

    s_nm(inf) = Re int_0^inf dw w^(n+m) i^(m-n) G(-iw) nu_hat(w) G(iw), which
    in terms of the Hermitian H(w) = G(iw) nu_hat(w) G(iw)^dagger reads
    s00 = int Re H, s01 = int w Im H, s11 = int w^2 Re H.
    """
    spec = freq_ev.spec
    if baths is None:
        baths = model.thermal_baths(spec)
    baths = list(baths)
    dim = freq_ev.dim
    if not baths:
        z = np.zeros((dim, dim))
        return SigmaBlocks(z, z, z.copy(), z.copy())
    upper = max(d.quad_upper for d, _ in baths)
    points = [w for w in freq_ev.resonances() if 0 < w < upper]

    def integrand(w):
        g = freq_ev.G(w)
        h = g @ spectral.noise_spectrum(baths, w, dim) @ g.conj().T
        return np.stack([h.real, w * h.imag, w * w * h.real])

    blocks = quad_vec_checked(integrand, 0.0, upper, points=points, rel_tol=rel_tol)
    return SigmaBlocks(s00=blocks[0], s01=blocks[1], s10=blocks[1].T,
                       s11=blocks[2])
