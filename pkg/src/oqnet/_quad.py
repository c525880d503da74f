"""Quadrature helpers shared by the kernel and transport modules.

Two kinds of machinery live here:

* ``oscillatory_transform`` evaluates cosine/sine transforms of a smooth
  density on a whole grid of times at once, using composite Gauss-Legendre
  panels whose width tracks the fastest oscillation.  Panels refine
  geometrically toward the lower endpoint so integrable power-law behaviour
  (``omega**(p-1)`` with p > 0) and narrow thermal ramps are resolved.
* thin wrappers around QUADPACK (``scipy.integrate.quad``) for scalar
  adaptive integrals: complex integrands and principal values by
  singularity subtraction.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import quad, quad_vec

from .errors import QuadratureFailure

# Default tolerances for adaptive quadrature.
ABS_TOL = 1e-10
REL_TOL = 1e-8

# Gauss-Legendre rule order per panel and oscillation periods per panel.
_GL_NODES = 20
_PERIODS_PER_PANEL = 1.5
_MAX_UNIFORM_PANELS = 20000
_GEO_PANELS_PER_DECADE = 2
_MAX_GEO_DECADES = 400


def panel_edges(
    lower: float,
    upper: float,
    tau_max: float,
    extra: Iterable[float] = (),
    origin_power: float = 0.0,
) -> np.ndarray:
    """Panel boundaries on [lower, upper] for integrands oscillating up to tau_max.

    `origin_power` is the algebraic behaviour g ~ (w - lower)**q at the lower
    endpoint (q > -1); the geometric refinement is taken deep enough that the
    mass of the innermost stub, ~ eps**(1+q), is negligible.
    """
    span = upper - lower
    if span <= 0:
        raise ValueError("empty integration interval")
    if tau_max > 0:
        width = _PERIODS_PER_PANEL * 2.0 * np.pi / tau_max
        n_uniform = int(np.ceil(span / width))
    else:
        n_uniform = 1
    n_uniform = min(max(n_uniform, 8), _MAX_UNIFORM_PANELS)
    edges = set(np.linspace(lower, upper, n_uniform + 1).tolist())

    # geometric refinement toward the lower endpoint across the first cell
    q = max(origin_power, -0.96)
    decades = int(np.ceil(16.0 / (1.0 + q)))
    decades = min(max(decades, 12), _MAX_GEO_DECADES)
    first = span / n_uniform
    n_geo = decades * _GEO_PANELS_PER_DECADE
    geo = lower + first * np.geomspace(10.0 ** (-decades), 1.0, n_geo)
    edges.update(geo[:-1].tolist())

    for x in extra:
        if lower < x < upper:
            edges.add(float(x))
    return np.array(sorted(edges))


def _gl_rule(edges: np.ndarray, n_nodes: int = _GL_NODES):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    a = edges[:-1]
    b = edges[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def oscillatory_transform(
    g: Callable[[np.ndarray], np.ndarray],
    taus: np.ndarray,
    lower: float,
    upper: float,
    kind: str = "cos",
    extra_breakpoints: Iterable[float] = (),
    origin_power: float = 0.0,
    chunk: int = 4096,
) -> np.ndarray:
    """Evaluate ``int_lower^upper g(w) trig(w*tau) dw`` for every tau in `taus`.

    `g` must accept a vector of frequencies and return the integrand values;
    it may be singular like ``w**q`` (q > -1, pass as origin_power) at the
    lower endpoint.  Uniform tau grids use the exact three-term trig
    recurrence along the grid instead of evaluating cos/sin at every
    (node, tau) pair.
    """
    taus = np.asarray(taus, dtype=float)
    tau_max = float(np.max(np.abs(taus))) if taus.size else 0.0
    edges = panel_edges(lower, upper, tau_max, extra_breakpoints, origin_power)
    nodes, weights = _gl_rule(edges)
    wg = weights * np.asarray(g(nodes), dtype=float)

    out = np.empty(taus.shape, dtype=float)
    flat = taus.ravel()
    res = out.ravel()
    if flat.size >= 16:
        step = (flat[-1] - flat[0]) / (flat.size - 1)
        dev = float(np.max(np.abs(flat - (flat[0] + step * np.arange(flat.size)))))
        # recurrence evaluates at exactly uniform points: phase error w*dev
        if dev * max(abs(upper), abs(lower)) < 1e-9 and step != 0.0:
            _uniform_transform(res, flat, nodes, wg, kind)
            return out

    trig = np.cos if kind == "cos" else np.sin
    for start in range(0, flat.size, chunk):
        block = flat[start:start + chunk]
        res[start:start + chunk] = trig(np.outer(block, nodes)) @ wg
    return out


def _uniform_transform(res, taus, nodes, wg, kind):
    """cos/sin(w tau_k) along a uniform tau grid by the Chebyshev recurrence."""
    delta = (taus[-1] - taus[0]) / (taus.size - 1)
    twoc = 2.0 * np.cos(nodes * delta)
    if kind == "cos":
        prev = np.cos(nodes * taus[0])
        curr = np.cos(nodes * (taus[0] + delta))
    else:
        prev = np.sin(nodes * taus[0])
        curr = np.sin(nodes * (taus[0] + delta))
    res[0] = prev @ wg
    if res.size == 1:
        return
    res[1] = curr @ wg
    tmp = np.empty_like(prev)
    for k in range(2, res.size):
        np.multiply(twoc, curr, out=tmp)
        tmp -= prev
        prev, curr, tmp = curr, tmp, prev
        res[k] = curr @ wg


def quad_checked(f, a, b, *, abs_tol=ABS_TOL, rel_tol=REL_TOL, points=None, limit=200):
    """scipy.integrate.quad with error control turned into an exception.

    QUADPACK's convergence advisories are suppressed; the returned error
    estimate is gated against the tolerances instead.
    """
    import warnings as _warnings
    from scipy.integrate import IntegrationWarning

    kwargs = {"epsabs": abs_tol, "epsrel": rel_tol, "limit": limit}
    if points is not None and np.isfinite(b) and np.isfinite(a):
        pts = [p for p in points if a < p < b]
        if pts:
            kwargs["points"] = sorted(pts)
            kwargs["limit"] = max(limit, 10 * (len(pts) + 1))
    try:
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore", IntegrationWarning)
            val, err = quad(f, a, b, **kwargs)
    except Exception as exc:  # pragma: no cover - QUADPACK hard failures are rare
        raise QuadratureFailure(f"quadrature failed on [{a:.3g}, {b:.3g}]: {exc}") from exc
    scale = max(abs(val), 1.0)
    if err > 100 * max(abs_tol, rel_tol * scale):
        raise QuadratureFailure(
            f"quadrature error estimate {err:.3g} exceeds tolerance on [{a:.3g}, {b:.3g}]"
        )
    return val


def quad_complex(f, a, b, **kw) -> complex:
    """Adaptive quadrature of a complex-valued integrand."""
    re = quad_checked(lambda w: f(w).real, a, b, **kw)
    im = quad_checked(lambda w: f(w).imag, a, b, **kw)
    return complex(re, im)


def quad_vec_checked(f, a, b, *, abs_tol=ABS_TOL, rel_tol=REL_TOL, points=None,
                     limit=400) -> np.ndarray:
    """Adaptive vector quadrature (shared subdivision) with an error guard."""
    pts = None
    if points is not None:
        pts = sorted(p for p in points if a < p < b)
        if not pts:
            pts = None
    try:
        val, err = quad_vec(f, a, b, epsabs=abs_tol, epsrel=rel_tol,
                            limit=max(limit, 20 * (len(pts) + 1) if pts else limit),
                            points=pts, norm="max", quadrature="gk21")
    except Exception as exc:  # pragma: no cover
        raise QuadratureFailure(f"vector quadrature failed on [{a:.3g}, {b:.3g}]: {exc}") from exc
    scale = max(float(np.max(np.abs(val))), 1.0)
    if err > 100 * max(abs_tol, rel_tol * scale):
        raise QuadratureFailure(
            f"vector quadrature error {err:.3g} exceeds tolerance on [{a:.3g}, {b:.3g}]")
    return val


def principal_value_even_pole(
    f: Callable[[float], float],
    pole: float,
    upper: float,
    *,
    abs_tol: float = ABS_TOL,
    rel_tol: float = REL_TOL,
    extra_points: Sequence[float] = (),
) -> float:
    """Principal value of ``int_0^upper f(w) / (w**2 - pole**2) dw``.

    Uses singularity subtraction: the regular part
    ``(f(w) - f(pole)) / (w**2 - pole**2)`` is integrated numerically and the
    subtracted pole term is added back in closed form.  `upper` may be inf.
    """
    w0 = float(pole)
    if w0 <= 0:
        raise ValueError("pole must be positive")
    f0 = f(w0)
    # derivative for the removable singularity at the pole
    dw = 1e-7 * max(w0, 1.0)
    slope = (f(w0 + dw) - f(w0 - dw)) / (2.0 * dw)

    def regular(w: float) -> float:
        d = w - w0
        if abs(d) < 1e-9 * max(w0, 1.0):
            return slope / (w + w0)
        return (f(w) - f0) / (d * (w + w0))

    if np.isinf(upper):
        b = max(4.0 * w0, 1.0)
        val = quad_checked(regular, 0.0, b, abs_tol=abs_tol, rel_tol=rel_tol,
                           points=[w0, *extra_points])
        val += quad_checked(regular, b, np.inf, abs_tol=abs_tol, rel_tol=rel_tol)
        closed = 0.0  # antiderivative log|(w-w0)/(w+w0)|/(2 w0) vanishes at both ends
    else:
        if not 0.0 < w0 < upper:
            raise ValueError("pole must lie inside (0, upper)")
        val = quad_checked(regular, 0.0, upper, abs_tol=abs_tol, rel_tol=rel_tol,
                           points=[w0, *extra_points])
        closed = np.log((upper - w0) / (upper + w0)) / (2.0 * w0)
    return val + f0 * closed
