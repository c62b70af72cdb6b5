import math

import numpy as np
import pytest

from core.errors import GeometryError, ParameterError
from core.expressions import Expression
from core.geometry import BoundaryProfile, Region, build_domain, integrate_square, mass


@pytest.mark.parametrize('text, area', [
    ('0', 4.0),
    ('0.05*x^2', 4.0 - 0.05 * 2.0 / 3.0),
])
def test_domain_area(text, area):
    domain = build_domain(BoundaryProfile.from_text(text), 33)
    assert domain.area == pytest.approx(area, rel=1e-12)


def test_sine_profile_rejected():
    # g'(0) = 0.1 pi
    with pytest.raises(GeometryError):
        build_domain(BoundaryProfile.from_text('0.1*sin(pi*x)'), 33)


def test_profile_must_be_tangent_at_origin():
    with pytest.raises(GeometryError):
        BoundaryProfile.from_text('0.1*x').validate()
    with pytest.raises(GeometryError):
        BoundaryProfile.from_text('0.01 + x^2').validate()


def test_profile_constants_checked():
    with pytest.raises(GeometryError):
        BoundaryProfile.from_text('0', alpha=1.5)
    assert BoundaryProfile.from_text('0', r0=0.5, M0=2.0).height == pytest.approx(2.0)


def test_resolution_floor(flat_profile):
    with pytest.raises(ParameterError):
        build_domain(flat_profile, 8)


def test_mask_matches_graph(curved_profile):
    domain = build_domain(curved_profile, 33)
    xx, yy = np.meshgrid(domain.x1, domain.x2, indexing='ij')
    np.testing.assert_array_equal(domain.mask, yy > 0.05 * xx ** 2)
    np.testing.assert_allclose(domain.boundary_x2, 0.05 * domain.boundary_x1 ** 2)


def test_flat_membership_is_half_disc(flat_profile):
    domain = build_domain(flat_profile, 33)
    region = Region.disc(0.5, chart=domain)
    half = Region.half_disc(0.5)
    x1, x2 = np.meshgrid(np.linspace(-0.7, 0.7, 29), np.linspace(-0.7, 0.7, 29), indexing='ij')
    np.testing.assert_array_equal(region.contains(x1, x2), half.contains(x1, x2))


def test_unit_half_disc_area():
    assert mass(lambda x, y: np.ones_like(x), Region.half_disc(1.0)) == pytest.approx(math.pi / 2,
                                                                                      rel=1e-10)


@pytest.mark.parametrize('radius', [0.1, 0.4, 1.0])
def test_polar_masses(radius):
    region = Region.half_disc(radius)
    assert mass(Expression('x2'), region) == pytest.approx(math.pi * radius ** 4 / 8, rel=1e-10)
    assert mass(Expression('2*x1*x2'), region) == pytest.approx(math.pi * radius ** 6 / 12,
                                                                rel=1e-10)


def test_mass_monotone_in_radius(curved_profile):
    domain = build_domain(curved_profile, 33)
    u = domain.sample_function(lambda x, y: np.cos(x) * (y - 0.05 * x ** 2), 'u')
    values = [mass(u, Region.disc(s, chart=domain)) for s in (0.1, 0.2, 0.4, 0.8)]
    assert all(a <= b for a, b in zip(values[:-1], values[1:]))


def test_empty_intersection_flagged(flat_profile):
    domain = build_domain(flat_profile, 33)
    u = domain.sample_function(lambda x, y: np.ones_like(x))
    estimate = integrate_square(u, Region.disc(0.1, center=(5.0, 5.0)))
    assert estimate.empty and estimate.value == 0.0


def test_region_validation():
    with pytest.raises(ParameterError):
        Region.disc(0.0)
    with pytest.raises(ParameterError):
        Region('triangle')
