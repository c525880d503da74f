"""Spectral densities and the kernels derived from them.

A bath is described by a matrix-valued spectral density I(w) (real,
symmetric, positive semidefinite for w >= 0, zero for w <= 0).  Everything the
open network dynamics needs is derived from it here:

* damping kernel      gamma(tau) = int_0^inf dw [I(w)/w] cos(w tau)
* its time derivative gamma_dot(tau) = -int_0^inf dw I(w) sin(w tau)
* Laplace transform   gamma_hat(s) = int_0^inf dw [I(w)/w] s/(s^2 + w^2)
* noise spectrum      nu_hat(w) = sum_a I_a(w) coth(w / 2 T_a)
* noise kernel        nu(tau) = int_0^inf dw nu_hat(w) cos(w tau)

with hbar = k_B = 1 and unit masses throughout.  On the imaginary axis the
Laplace transform is the principal value plus half residue, which gives the
fluctuation-dissipation identity Re(2 w gamma_hat(i w)) = pi I(w);
``fdt_check`` verifies it with an independent off-axis extrapolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn

from . import _quad
from .errors import DivergentKernel, QuadratureFailure

SHARP = "sharp"
EXPONENTIAL = "exponential"

Bath = tuple["SpectralDensity", float]  # (density, temperature)


# ---------------------------------------------------------------------------
# occupation factors


def coth_half(w, temperature):
    """coth(w / 2T) evaluated overflow-safely; the T = 0 limit is 1."""
    w = np.asarray(w, dtype=float)
    if temperature == 0.0:
        return np.ones_like(w)
    with np.errstate(over="ignore"):
        return 1.0 + 2.0 / np.expm1(w / temperature)


def bose_occupation(w, temperature):
    """Mean excitation number 1 / (exp(w/T) - 1); zero at T = 0."""
    w = np.asarray(w, dtype=float)
    if temperature == 0.0:
        return np.zeros_like(w)
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(w / temperature)


# ---------------------------------------------------------------------------
# density models


@dataclass(frozen=True)
class PowerLawDensity:
    """Single-site density I_jj(w) = coupling * w**exponent * cutoff_factor(w)."""

    site: int
    coupling: float
    exponent: float
    cutoff: float
    cutoff_shape: str = SHARP

    def __post_init__(self):
        if self.coupling <= 0:
            raise ValueError("coupling must be positive")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.cutoff_shape not in (SHARP, EXPONENTIAL):
            raise ValueError(f"unknown cutoff_shape {self.cutoff_shape!r}")
        if self.site < 0:
            raise ValueError("site index must be non-negative")

    # scalar profile of the single nonzero entry
    def profile(self, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0
        if self.cutoff_shape == SHARP:
            pos = pos & (w < self.cutoff)
            out[pos] = self.coupling * w[pos] ** self.exponent
        else:
            out[pos] = self.coupling * w[pos] ** self.exponent * np.exp(-w[pos] / self.cutoff)
        return out

    def profile_over_w(self, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0
        if self.cutoff_shape == SHARP:
            pos = pos & (w < self.cutoff)
            out[pos] = self.coupling * w[pos] ** (self.exponent - 1.0)
        else:
            out[pos] = self.coupling * w[pos] ** (self.exponent - 1.0) * np.exp(-w[pos] / self.cutoff)
        return out

    @property
    def support_sites(self) -> tuple[int, ...]:
        return (self.site,)

    @property
    def sharp_upper(self) -> float:
        """Exact upper support edge, inf for the exponential cutoff."""
        return self.cutoff if self.cutoff_shape == SHARP else math.inf

    @property
    def quad_upper(self) -> float:
        """Finite horizon beyond which integrals of the density are negligible."""
        if self.cutoff_shape == SHARP:
            return self.cutoff
        return self.cutoff * (40.0 + 5.0 * max(self.exponent, 0.0))

    def gamma0_entry(self) -> float:
        """Closed form of int_0^inf I(w)/w dw for the single entry."""
        if self.exponent <= 0:
            raise DivergentKernel(
                f"damping kernel diverges at w -> 0 for exponent {self.exponent}"
            )
        if self.cutoff_shape == SHARP:
            return self.coupling * self.cutoff ** self.exponent / self.exponent
        return self.coupling * gamma_fn(self.exponent) * self.cutoff ** self.exponent

    def entries(self) -> list[tuple[int, int]]:
        return [(self.site, self.site)]

    def entry_profile(self, i: int, j: int) -> Callable[[np.ndarray], np.ndarray]:
        if (i, j) != (self.site, self.site):
            raise KeyError((i, j))
        return self.profile


@dataclass(frozen=True, eq=False)
class TabulatedDensity:
    """Matrix-valued density sampled on a frequency grid, linearly interpolated.

    Outside [omega[0], omega[-1]] the density is zero; the grid should start
    at or near w = 0 with I -> 0 there for the damping kernel to exist.
    """

    omega: np.ndarray
    values: np.ndarray  # shape (n, K, K)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omega.ndim != 1 or np.any(np.diff(omega) <= 0) or omega[0] < 0:
            raise ValueError("omega grid must be strictly increasing and non-negative")
        if values.shape[0] != omega.size or values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise ValueError("values must have shape (len(omega), K, K)")
        sym_err = np.max(np.abs(values - values.transpose(0, 2, 1)))
        if sym_err > 1e-12 * max(1.0, np.max(np.abs(values))):
            raise ValueError("tabulated density matrices must be symmetric")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)
        omega.flags.writeable = False
        values.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def support_sites(self) -> tuple[int, ...]:
        mask = np.any(np.abs(self.values) > 0, axis=0)
        return tuple(sorted({i for i in range(self.dim) if mask[i].any() or mask[:, i].any()}))

    @property
    def sharp_upper(self) -> float:
        return float(self.omega[-1])

    @property
    def quad_upper(self) -> float:
        return float(self.omega[-1])

    def entries(self) -> list[tuple[int, int]]:
        mask = np.any(np.abs(self.values) > 0, axis=0)
        return [(i, j) for i in range(self.dim) for j in range(i, self.dim) if mask[i, j]]

    def entry_profile(self, i: int, j: int) -> Callable[[np.ndarray], np.ndarray]:
        tab = self.values[:, i, j]
        grid = self.omega

        def profile(w):
            w = np.asarray(w, dtype=float)
            return np.interp(w, grid, tab, left=0.0, right=0.0)

        return profile

    def profile(self, w):  # trace-level scalar used only for diagnostics
        w = np.asarray(w, dtype=float)
        return np.interp(w, self.omega, np.trace(self.values, axis1=1, axis2=2),
                         left=0.0, right=0.0)


SpectralDensity = PowerLawDensity | TabulatedDensity


def densities_equal(a: SpectralDensity, b: SpectralDensity) -> bool:
    """Model-and-parameter equality, used for the multi-bath region constraint."""
    if type(a) is not type(b):
        return False
    if isinstance(a, PowerLawDensity):
        return a == b
    return np.array_equal(a.omega, b.omega) and np.array_equal(a.values, b.values)


def density_matrix(density: SpectralDensity, w, dim: int) -> np.ndarray:
    """K x K matrix I(w) for scalar w."""
    out = np.zeros((dim, dim))
    for i, j in density.entries():
        val = float(density.entry_profile(i, j)(np.atleast_1d(w))[0])
        out[i, j] = val
        out[j, i] = val
    return out


def _density_dim(densities: Sequence[SpectralDensity], dim: int | None) -> int:
    if dim is not None:
        return dim
    top = 0
    for d in densities:
        if isinstance(d, TabulatedDensity):
            top = max(top, d.dim)
        else:
            top = max(top, max(d.support_sites, default=0) + 1)
    return top


# ---------------------------------------------------------------------------
# kernels on a time grid


def _transform_into(out, density, taus, g_builder, kind, origin_power=0.0):
    """Accumulate the transform of every nonzero entry of `density` into `out`."""
    upper = density.quad_upper
    extra = density.omega if isinstance(density, TabulatedDensity) else ()
    for i, j in density.entries():
        g = g_builder(density.entry_profile(i, j))
        vals = _quad.oscillatory_transform(g, taus, 0.0, upper, kind=kind,
                                           extra_breakpoints=extra,
                                           origin_power=origin_power)
        out[:, i, j] += vals
        if i != j:
            out[:, j, i] += vals


def gamma_kernel(densities: Sequence[SpectralDensity], taus, dim: int | None = None) -> np.ndarray:
    """Sampled damping kernel gamma(tau) = int dw I(w)/w cos(w tau), shape (n, K, K)."""
    densities = list(densities)
    dim = _density_dim(densities, dim)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.zeros((taus.size, dim, dim))
    for d in densities:
        gamma0_guard(d)
        if isinstance(d, PowerLawDensity):
            _transform_into(out, d, taus, lambda prof, d=d: d.profile_over_w, "cos",
                            origin_power=d.exponent - 1.0)
        else:
            def builder(prof):
                return lambda w: np.where(w > 0, prof(w) / np.where(w > 0, w, 1.0), 0.0)
            _transform_into(out, d, taus, builder, "cos")
    return out


def gamma_dot_kernel(densities: Sequence[SpectralDensity], taus, dim: int | None = None) -> np.ndarray:
    """d gamma / d tau = -int dw I(w) sin(w tau)."""
    densities = list(densities)
    dim = _density_dim(densities, dim)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.zeros((taus.size, dim, dim))
    for d in densities:
        power = d.exponent if isinstance(d, PowerLawDensity) else 0.0
        _transform_into(out, d, taus, lambda prof: prof, "sin", origin_power=power)
    return -out


def noise_kernel(baths: Sequence[Bath], taus, dim: int | None = None) -> np.ndarray:
    """Sampled noise kernel nu(tau) for a thermal bath assignment."""
    baths = list(baths)
    dim = _density_dim([d for d, _ in baths], dim)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    out = np.zeros((taus.size, dim, dim))
    for density, temperature in baths:
        def builder(prof, T=temperature):
            return lambda w: prof(w) * coth_half(w, T)
        if isinstance(density, PowerLawDensity):
            power = density.exponent - (1.0 if temperature > 0 else 0.0)
        else:
            power = 0.0
        _transform_into(out, density, taus, builder, "cos", origin_power=power)
    return out


def noise_spectrum(baths: Sequence[Bath], w, dim: int | None = None) -> np.ndarray:
    """nu_hat(w) = sum_a I_a(w) coth(w / 2 T_a) for scalar w."""
    baths = list(baths)
    dim = _density_dim([d for d, _ in baths], dim)
    out = np.zeros((dim, dim))
    for density, temperature in baths:
        out += density_matrix(density, w, dim) * float(coth_half(np.atleast_1d(w), temperature)[0])
    return out


def gamma0(densities: Sequence[SpectralDensity], dim: int | None = None) -> np.ndarray:
    """gamma(0) = int_0^inf I(w)/w dw as a K x K matrix."""
    densities = list(densities)
    dim = _density_dim(densities, dim)
    out = np.zeros((dim, dim))
    for d in densities:
        if isinstance(d, PowerLawDensity):
            out[d.site, d.site] += d.gamma0_entry()
        else:
            lo = d.omega[0]
            for i, j in d.entries():
                prof = d.entry_profile(i, j)
                if lo == 0.0 and abs(d.values[0, i, j]) > 0:
                    raise DivergentKernel("tabulated density nonzero at w = 0")
                val = _quad.quad_checked(
                    lambda w: prof(np.atleast_1d(w))[0] / w,
                    max(lo, 1e-300), d.omega[-1], points=d.omega,
                )
                out[i, j] += val
                if i != j:
                    out[j, i] += val
    return out


def gamma0_guard(density: SpectralDensity) -> None:
    """Raise DivergentKernel early when int I/w dw cannot exist."""
    if isinstance(density, PowerLawDensity) and density.exponent <= 0:
        raise DivergentKernel(
            f"damping kernel diverges at w -> 0 for exponent {density.exponent}"
        )


# ---------------------------------------------------------------------------
# Laplace transform of the damping kernel


def _entry_gamma_hat(profile_over_w, s: complex, upper: float, sharp_upper: float,
                     extra_points=(), abs_tol=_quad.ABS_TOL, rel_tol=_quad.REL_TOL) -> complex:
    """gamma_hat for one scalar entry with profile f = I/w."""
    if s == 0:
        return 0.0 + 0.0j
    if s.real < 0:
        raise ValueError("gamma_hat defined for Re(s) >= 0")

    def f(w):
        return float(profile_over_w(np.atleast_1d(w))[0])

    if s.real > 0:
        pivot = abs(s.imag)
        pts = [p for p in (pivot, *extra_points) if p > 0]

        def integrand(w):
            return f(w) * s / (s * s + w * w)

        return _quad.quad_complex(integrand, 0.0, upper, abs_tol=abs_tol, rel_tol=rel_tol,
                                  points=pts)

    # purely imaginary s = i w0: principal value plus half residue
    w0 = abs(s.imag)
    sign = 1.0 if s.imag > 0 else -1.0
    inside = w0 < sharp_upper
    if inside:
        re = 0.5 * math.pi * f(w0)
        pv_upper = sharp_upper if math.isfinite(sharp_upper) else math.inf
        pv = _quad.principal_value_even_pole(f, w0, pv_upper,
                                             abs_tol=abs_tol, rel_tol=rel_tol,
                                             extra_points=extra_points)
    else:
        re = 0.0

        def regular(w):
            return f(w) / (w * w - w0 * w0)

        pv = _quad.quad_checked(regular, 0.0, upper, abs_tol=abs_tol, rel_tol=rel_tol,
                                points=extra_points)
    return complex(re, sign * w0 * pv)


def gamma_laplace(densities: Sequence[SpectralDensity], s: complex,
                  dim: int | None = None, *,
                  abs_tol: float = _quad.ABS_TOL, rel_tol: float = _quad.REL_TOL) -> np.ndarray:
    """Laplace transform gamma_hat(s) = int dw [I(w)/w] s/(s^2+w^2) as a K x K matrix."""
    densities = list(densities)
    dim = _density_dim(densities, dim)
    s = complex(s)
    out = np.zeros((dim, dim), dtype=complex)
    for d in densities:
        gamma0_guard(d)
        extra = d.omega if isinstance(d, TabulatedDensity) else ()
        for i, j in d.entries():
            prof = d.entry_profile(i, j)
            if isinstance(d, PowerLawDensity):
                over_w = d.profile_over_w
            else:
                def over_w(w, prof=prof):
                    w = np.asarray(w, dtype=float)
                    return np.where(w > 0, prof(w) / np.where(w > 0, w, 1.0), 0.0)
            val = _entry_gamma_hat(over_w, s, d.quad_upper, d.sharp_upper,
                                   extra_points=extra, abs_tol=abs_tol, rel_tol=rel_tol)
            out[i, j] += val
            if i != j:
                out[j, i] += val
    return out


# ---------------------------------------------------------------------------
# fluctuation-dissipation self-test


@dataclass
class FdtReport:
    omegas: np.ndarray
    residual: float            # independent off-axis extrapolation vs pi I(w)
    residual_on_axis: float    # production imaginary-axis path vs pi I(w)
    lhs: np.ndarray
    rhs: np.ndarray


def _off_axis_re(profile_over_w, w0: float, eps: float, upper: float,
                 abs_tol: float) -> float:
    s = complex(eps, w0)

    def integrand(w):
        val = float(profile_over_w(np.atleast_1d(w))[0])
        return (val * s / (s * s + w * w)).real

    pts = [w0 - 30 * eps, w0 - 3 * eps, w0, w0 + 3 * eps, w0 + 30 * eps]
    return _quad.quad_checked(integrand, 0.0, upper, abs_tol=abs_tol, rel_tol=1e-11,
                              points=pts, limit=400)


def fdt_check(densities, omegas, dim: int | None = None, *,
              eps_scale: float = 3e-3) -> FdtReport:
    """Residual of the identity Re(2 w gamma_hat(i w)) = pi I(w) on a grid.

    The left side is evaluated twice: through the production imaginary-axis
    path, and independently by plain off-axis quadrature at Re(s) = eps with
    cubic extrapolation eps -> 0.  The reported residual uses the independent
    route; the on-axis residual only checks wiring.
    """
    if not isinstance(densities, (list, tuple)):
        densities = [densities]
    dim = _density_dim(densities, dim)
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))

    lhs = np.zeros_like(omegas)
    rhs = np.zeros_like(omegas)
    lhs_on_axis = np.zeros_like(omegas)
    for d in densities:
        gamma0_guard(d)
        scale_w = d.cutoff if isinstance(d, PowerLawDensity) else d.omega[-1]
        for i, j in d.entries():
            prof = d.entry_profile(i, j)
            if isinstance(d, PowerLawDensity):
                over_w = d.profile_over_w
            else:
                def over_w(w, prof=prof):
                    w = np.asarray(w, dtype=float)
                    return np.where(w > 0, prof(w) / np.where(w > 0, w, 1.0), 0.0)
            for k, w0 in enumerate(omegas):
                rhs[k] += math.pi * float(prof(np.atleast_1d(w0))[0])
                val = _entry_gamma_hat(over_w, complex(0.0, w0), d.quad_upper,
                                       d.sharp_upper)
                lhs_on_axis[k] += 2.0 * w0 * val.real
                eps0 = eps_scale * max(w0, 0.1 * scale_w)
                eps_ladder = eps0 * np.array([1.0, 0.5, 0.25, 0.125])
                vals = [
                    _off_axis_re(over_w, float(w0), float(e), d.quad_upper, abs_tol=1e-13)
                    for e in eps_ladder
                ]
                coeffs = np.polynomial.polynomial.polyfit(eps_ladder, vals, 3)
                lhs[k] += 2.0 * w0 * coeffs[0]

    return FdtReport(
        omegas=omegas,
        residual=float(np.max(np.abs(lhs - rhs))),
        residual_on_axis=float(np.max(np.abs(lhs_on_axis - rhs))),
        lhs=lhs,
        rhs=rhs,
    )


# ---------------------------------------------------------------------------
# bundled kernel evaluation with caching


class KernelSet:
    """All kernels for one bath assignment, with a cache for gamma_hat.

    Immutable after construction; safe to share across threads for reads.
    """

    def __init__(self, dim: int, baths: Sequence[Bath], *,
                 abs_tol: float = _quad.ABS_TOL, rel_tol: float = _quad.REL_TOL):
        self.dim = dim
        self.baths = tuple((d, float(t)) for d, t in baths)
        self.densities = tuple(d for d, _ in self.baths)
        self.abs_tol = abs_tol
        self.rel_tol = rel_tol
        self._ghat_cache: dict[complex, np.ndarray] = {}

    def gamma0(self) -> np.ndarray:
        return gamma0(self.densities, self.dim)

    def gamma(self, taus) -> np.ndarray:
        return gamma_kernel(self.densities, taus, self.dim)

    def gamma_dot(self, taus) -> np.ndarray:
        return gamma_dot_kernel(self.densities, taus, self.dim)

    def nu(self, taus) -> np.ndarray:
        return noise_kernel(self.baths, taus, self.dim)

    def nu_hat(self, w) -> np.ndarray:
        return noise_spectrum(self.baths, w, self.dim)

    def gamma_hat(self, s: complex) -> np.ndarray:
        s = complex(s)
        cached = self._ghat_cache.get(s)
        if cached is None:
            cached = gamma_laplace(self.densities, s, self.dim,
                                   abs_tol=self.abs_tol, rel_tol=self.rel_tol)
            cached.flags.writeable = False
            self._ghat_cache[s] = cached
        return cached
