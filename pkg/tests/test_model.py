"""Network data model: structure validation and projectors."""

from __future__ import annotations

import numpy as np
import pytest

from oqnet import model, spectral
from oqnet.errors import StructuralError, UnknownRegion, StabilityAdvisory


def bath(site=0, coupling=0.1, cutoff=4.0, temperature=1.0, p=1.0):
    density = spectral.PowerLawDensity(site=site, coupling=coupling, exponent=p,
                                       cutoff=cutoff)
    return model.Reservoir(temperature=temperature, density=density)


def one_site_spec(omega0_sq=1.0, **bath_kw):
    return model.NetworkSpec(
        coupling=[[omega0_sq]],
        regions=(model.Region(id="a", sites=(0,), reservoirs=(bath(**bath_kw),)),),
    )


def chain_spec(k=3, spring=0.3, omega0_sq=2.0, region_sites=((0,), (2,)), **bath_kw):
    v = omega0_sq * np.eye(k)
    for i in range(k - 1):
        v[i, i + 1] = v[i + 1, i] = -spring
    regions = tuple(
        model.Region(id=f"r{n}", sites=s, reservoirs=(bath(site=s[0], **bath_kw),))
        for n, s in enumerate(region_sites)
    )
    return model.NetworkSpec(coupling=v, regions=regions)


class TestValidate:
    def test_minimal_system_passes(self):
        report = model.validate(one_site_spec())
        assert report.ok
        assert not report.advisories

    def test_overlapping_regions_raise(self):
        res = bath()
        spec = model.NetworkSpec(
            coupling=np.eye(2),
            regions=(
                model.Region(id="a", sites=(0,), reservoirs=(res,)),
                model.Region(id="b", sites=(0, 1), reservoirs=(bath(site=1),)),
            ),
        )
        with pytest.raises(StructuralError, match="site 0"):
            model.validate(spec)

    def test_asymmetric_coupling_raises(self):
        spec = model.NetworkSpec(
            coupling=[[1.0, 0.2], [0.1, 1.0]],
            regions=(model.Region(id="a", sites=(0,), reservoirs=(bath(),)),),
        )
        with pytest.raises(StructuralError, match="coupling_symmetric"):
            model.validate(spec)

    def test_indefinite_renormalized_potential_is_advisory(self):
        # strong coupling: V_R = 1 - 2 * 0.5 * 4 < 0 but structure is fine
        spec = one_site_spec(omega0_sq=1.0, coupling=0.5, cutoff=4.0)
        with pytest.warns(StabilityAdvisory):
            report = model.validate(spec)
        assert report.ok
        assert report.advisories
        eig_check = [c for c in report.checks if c.name == "renormalized_potential_positive"]
        assert eig_check and not eig_check[0].passed

    def test_advisory_matches_direct_eigendecomposition(self):
        spec = chain_spec(k=3, coupling=0.4, cutoff=5.0)
        g0 = spectral.gamma0(model.all_densities(spec), spec.dim)
        direct = np.linalg.eigvalsh(spec.coupling - 2 * g0).min()
        if direct <= 0:
            with pytest.warns(StabilityAdvisory):
                report = model.validate(spec)
            assert report.advisories
        else:
            report = model.validate(spec)
            assert not report.advisories

    def test_density_support_must_stay_in_region(self):
        spec = model.NetworkSpec(
            coupling=np.eye(2),
            regions=(model.Region(id="a", sites=(0,), reservoirs=(bath(site=1),)),),
        )
        with pytest.raises(StructuralError, match="density_support_in_region"):
            model.validate(spec)

    def test_multi_bath_region_requires_identical_densities(self):
        r1 = bath(coupling=0.1)
        r2 = bath(coupling=0.2)
        spec = model.NetworkSpec(
            coupling=np.eye(1),
            regions=(model.Region(id="a", sites=(0,), reservoirs=(r1, r2)),),
        )
        with pytest.raises(StructuralError, match="identical_densities"):
            model.validate(spec)

    def test_multi_bath_same_density_different_temps_ok(self):
        r1 = bath(temperature=1.0, coupling=0.05, cutoff=2.0)
        r2 = bath(temperature=2.0, coupling=0.05, cutoff=2.0)
        spec = model.NetworkSpec(
            coupling=np.eye(1),
            regions=(model.Region(id="a", sites=(0,), reservoirs=(r1, r2)),),
        )
        assert model.validate(spec).ok

    def test_validate_is_pure(self):
        spec = one_site_spec()
        first = model.validate(spec)
        second = model.validate(spec)
        assert [c.passed for c in first.checks] == [c.passed for c in second.checks]


class TestProjector:
    def test_single_site(self):
        spec = chain_spec(k=3, region_sites=((1,),))
        p = model.projector(spec, "r0").matrix
        assert np.array_equal(p, np.diag([0.0, 1.0, 0.0]))

    def test_full_region_identity(self):
        spec = model.NetworkSpec(
            coupling=np.eye(2),
            regions=(model.Region(id="a", sites=(0, 1),
                                  reservoirs=(bath(site=0),)),),
        )
        p = model.projector(spec, "a").matrix
        assert np.array_equal(p, np.eye(2))

    def test_scattered_sites(self):
        spec = model.NetworkSpec(
            coupling=np.eye(4),
            regions=(model.Region(id="a", sites=(0, 2), reservoirs=(bath(site=0),)),),
        )
        p = model.projector(spec, "a").matrix
        assert np.array_equal(p, np.diag([1.0, 0.0, 1.0, 0.0]))

    def test_idempotent(self):
        spec = chain_spec()
        p = model.projector(spec, "r0").matrix
        assert np.array_equal(p @ p, p)

    def test_unknown_region(self):
        with pytest.raises(UnknownRegion):
            model.projector(one_site_spec(), "zzz")

    def test_trace_counts_coupled_sites(self):
        spec = chain_spec(k=4, region_sites=((0,), (2, 3)))
        total = sum(np.trace(model.projector(spec, rid).matrix)
                    for rid in spec.region_ids)
        assert total == 3.0


class TestHelpers:
    def test_thermal_baths_flatten(self):
        spec = chain_spec()
        baths = model.thermal_baths(spec)
        assert len(baths) == 2
        assert all(t == 1.0 for _, t in baths)

    def test_immutable(self):
        spec = one_site_spec()
        with pytest.raises(ValueError):
            spec.coupling[0, 0] = 5.0
