"""Declarative data model for oscillator networks coupled to thermal reservoirs.

A network is K coordinates with unit masses and a symmetric coupling matrix V
(units of frequency squared).  Reservoir-coupled coordinates are partitioned
into non-overlapping regions; each region carries one or more thermal
reservoirs.  hbar = k_B = 1 throughout, so temperatures and frequencies share
units.  All types are immutable after construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import spectral
from .errors import DivergentKernel, StructuralError, UnknownRegion, StabilityAdvisory

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class Reservoir:
    """A thermal bath: temperature (k_B = 1, may be zero) and a spectral density."""

    temperature: float
    density: spectral.SpectralDensity

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("reservoir temperature must be non-negative")


@dataclass(frozen=True)
class Region:
    """A set of coordinates sharing one heat-accounting boundary."""

    id: str
    sites: tuple[int, ...]
    reservoirs: tuple[Reservoir, ...]

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "reservoirs", tuple(self.reservoirs))
        if not self.sites:
            raise ValueError(f"region {self.id!r} has no sites")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError(f"region {self.id!r} repeats a site index")
        if not self.reservoirs:
            raise ValueError(f"region {self.id!r} has no reservoirs")

    @property
    def temperatures(self) -> tuple[float, ...]:
        return tuple(r.temperature for r in self.reservoirs)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Oscillator network: bare potential matrix and reservoir-coupled regions.

    Site indices are 0-based.  Sites not listed in any region are interior
    coordinates without reservoirs.
    """

    coupling: np.ndarray
    regions: tuple[Region, ...]

    def __post_init__(self):
        v = np.array(self.coupling, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coupling must be a square matrix")
        v.flags.writeable = False
        object.__setattr__(self, "coupling", v)
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def dim(self) -> int:
        return self.coupling.shape[0]

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.regions)

    def region(self, region_id: str) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise UnknownRegion(f"no region with id {region_id!r}")


@dataclass(frozen=True)
class Projector:
    """Diagonal 0/1 matrix selecting a region's coordinates."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


@dataclass
class ValidationCheck:
    name: str
    passed: bool
    detail: str = ""
    advisory: bool = False


@dataclass
class ValidationReport:
    checks: list[ValidationCheck] = field(default_factory=list)
    advisories: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if not c.advisory)

    def add(self, name: str, passed: bool, detail: str = "", advisory: bool = False) -> None:
        self.checks.append(ValidationCheck(name, passed, detail, advisory))


def thermal_baths(spec: NetworkSpec) -> tuple[spectral.Bath, ...]:
    """All (density, temperature) pairs of the network, flattened over regions."""
    return tuple(
        (res.density, res.temperature)
        for region in spec.regions
        for res in region.reservoirs
    )


def all_densities(spec: NetworkSpec) -> tuple[spectral.SpectralDensity, ...]:
    return tuple(d for d, _ in thermal_baths(spec))


def region_densities(spec: NetworkSpec, region_id: str) -> tuple[spectral.SpectralDensity, ...]:
    """Densities of every reservoir attached to one region (identical for N > 1)."""
    return tuple(res.density for res in spec.region(region_id).reservoirs)


def coupled_sites(spec: NetworkSpec) -> tuple[int, ...]:
    """Sites that appear in the support of any reservoir density."""
    sites: set[int] = set()
    for density, _ in thermal_baths(spec):
        sites.update(density.support_sites)
    return tuple(sorted(sites))


def projector(spec: NetworkSpec, region_id: str) -> Projector:
    """Diagonal projector onto the sites of one region."""
    region = spec.region(region_id)
    diag = np.zeros(spec.dim)
    for s in region.sites:
        if not 0 <= s < spec.dim:
            raise StructuralError(f"region {region_id!r} site {s} outside 0..{spec.dim - 1}")
    diag[list(region.sites)] = 1.0
    return Projector(np.diag(diag))


def validate(spec: NetworkSpec, *, raise_on_error: bool = True) -> ValidationReport:
    """Check structural invariants and physical well-posedness.

    Structural violations (asymmetric V, overlapping regions, density support
    leaking outside its region) raise StructuralError unless
    ``raise_on_error=False``.  An indefinite renormalized potential is an
    advisory, not an error.
    """
    report = ValidationReport()
    v = spec.coupling
    scale = max(1.0, float(np.max(np.abs(v))))
    sym_err = float(np.max(np.abs(v - v.T))) / scale
    report.add("coupling_symmetric", sym_err <= SYMMETRY_RTOL,
               f"relative asymmetry {sym_err:.3g}")

    seen: dict[int, str] = {}
    disjoint = True
    for region in spec.regions:
        for s in region.sites:
            if not 0 <= s < spec.dim:
                disjoint = False
                report.add("sites_in_range", False,
                           f"region {region.id!r} site {s} outside 0..{spec.dim - 1}")
            elif s in seen:
                disjoint = False
                report.add("regions_disjoint", False,
                           f"site {s} in regions {seen[s]!r} and {region.id!r}")
            else:
                seen[s] = region.id
    if disjoint:
        report.add("regions_disjoint", True)

    ids = [r.id for r in spec.regions]
    report.add("region_ids_unique", len(set(ids)) == len(ids))

    support_ok = True
    for region in spec.regions:
        sites = set(region.sites)
        for res in region.reservoirs:
            leak = set(res.density.support_sites) - sites
            if leak:
                support_ok = False
                report.add("density_support_in_region", False,
                           f"region {region.id!r} density touches sites {sorted(leak)}")
    if support_ok:
        report.add("density_support_in_region", True)

    for region in spec.regions:
        if len(region.reservoirs) > 1:
            first = region.reservoirs[0].density
            same = all(spectral.densities_equal(first, r.density)
                       for r in region.reservoirs[1:])
            report.add(f"region_{region.id}_identical_densities", same,
                       "" if same else "multi-reservoir region with differing densities")

    if raise_on_error and not report.ok:
        bad = "; ".join(f"{c.name}: {c.detail}" for c in report.checks if not c.passed)
        raise StructuralError(bad)

    # renormalized-potential positivity (advisory)
    try:
        g0 = spectral.gamma0(all_densities(spec), spec.dim)
        vr = v - 2.0 * g0
        eigs = np.linalg.eigvalsh(0.5 * (vr + vr.T))
        positive = bool(eigs.min() > 0)
        report.add("renormalized_potential_positive", positive,
                   f"min eigenvalue {eigs.min():.6g}", advisory=True)
        if not positive:
            msg = (f"renormalized potential indefinite: min eigenvalue "
                   f"{eigs.min():.6g}; response will not decay")
            report.advisories.append(msg)
            warnings.warn(msg, StabilityAdvisory, stacklevel=2)
    except DivergentKernel as exc:
        report.advisories.append(f"renormalization shift divergent: {exc}")
        report.add("renormalized_potential_positive", False,
                   "divergent damping kernel", advisory=True)

    return report
