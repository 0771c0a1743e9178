import numpy as np
import pytest

from density import (
    DensityField,
    GridSpec,
    SampleCloud,
    default_field,
    describe,
    mixture_pdf,
    rasterize_density,
    sample_points,
)
from errors import InvalidFieldError


def two_blobs(domain=(0.0, 0.0, 100.0, 100.0)):
    return DensityField(
        means=[[20.0, 50.0], [80.0, 50.0]],
        covariances=[np.eye(2) * 4.0, np.eye(2) * 4.0],
        weights=[0.5, 0.5],
        domain=domain,
    )


def test_degenerate_component_samples_at_mean():
    field = DensityField([[3.0, 4.0]], [np.eye(2) * 1e-12], [1.0], (0, 0, 10, 10))
    cloud = sample_points(field, 4, seed=0)
    assert len(cloud) == 4
    assert np.all(np.linalg.norm(cloud.positions - [3.0, 4.0], axis=1) < 1e-4)
    assert np.all(cloud.weights == 0.25)
    assert cloud.consumed == 0.0


def test_component_counts_concentrate():
    cloud = sample_points(two_blobs(), 1000, seed=7)
    left = int(np.sum(cloud.positions[:, 0] < 50.0))
    assert abs(left - 500) <= 3 * np.sqrt(1000 * 0.25)


def test_sampling_is_deterministic_per_seed():
    a = sample_points(default_field(), 300, seed=11)
    b = sample_points(default_field(), 300, seed=11)
    c = sample_points(default_field(), 300, seed=12)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.weights, b.weights)
    assert not np.array_equal(a.positions, c.positions)


def test_samples_stay_in_domain_and_ledger_balances():
    field = default_field()
    cloud = sample_points(field, 500, seed=3)
    assert field.contains(cloud.positions).all()
    assert cloud.ledger_error() < 1e-12


def test_sampling_fails_when_mass_is_outside_domain():
    field = DensityField([[500.0, 500.0]], [np.eye(2)], [1.0], (0, 0, 10, 10))
    with pytest.raises(InvalidFieldError):
        sample_points(field, 5, seed=0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(weights=[0.5, 0.4]),
        dict(covariances=[np.eye(2), [[1.0, 2.0], [2.0, 1.0]]]),
        dict(domain=(0, 0, 0, 10)),
    ],
)
def test_invalid_fields_are_rejected(kwargs):
    base = dict(
        means=[[1.0, 1.0], [2.0, 2.0]],
        covariances=[np.eye(2), np.eye(2)],
        weights=[0.5, 0.5],
        domain=(0, 0, 10, 10),
    )
    base.update(kwargs)
    with pytest.raises(InvalidFieldError):
        DensityField(**base)


def test_sample_cloud_rejects_negative_weights():
    with pytest.raises(InvalidFieldError):
        SampleCloud([[0, 0], [1, 1]], [0.5, -0.1])


def test_rasterize_peak_on_cell_center_is_one():
    grid = GridSpec((0.0, 0.0), 1.0, 10, 10)
    field = DensityField([[4.5, 6.5]], [np.eye(2) * 2.0], [1.0], (0, 0, 10, 10))
    values = rasterize_density(field, grid)
    assert values.shape == (10, 10)
    assert values[4, 6] == 1.0
    assert values.max() == 1.0
    assert values.min() >= 0.0


def test_default_field_peak_near_expected_maximum():
    field = default_field()
    grid = GridSpec.for_domain(field.domain, 0.1)
    stats = describe(field, grid)
    x, y = stats.peak_position
    assert abs(x - 12.0) <= 0.1 and abs(y - 82.0) <= 0.1


def test_symmetric_field_rasterizes_symmetrically():
    field = DensityField(
        means=[[5.0, 10.0], [15.0, 10.0]],
        covariances=[np.eye(2) * 4.0, np.eye(2) * 4.0],
        weights=[0.5, 0.5],
        domain=(0, 0, 20, 20),
    )
    values = rasterize_density(field, GridSpec.for_domain(field.domain, 1.0))
    assert np.max(np.abs(values - values[::-1, :])) <= 1e-12


def test_rasterize_requires_covering_grid():
    field = two_blobs()
    with pytest.raises(InvalidFieldError):
        rasterize_density(field, GridSpec((0.0, 0.0), 1.0, 50, 100))


def test_rasterize_rejects_vanishing_density():
    field = DensityField([[5.0, 5.0]], [np.eye(2) * 1e-6], [1.0], (0, 0, 1000, 1000))
    grid = GridSpec.for_domain(field.domain, 100.0)
    with pytest.raises(InvalidFieldError):
        rasterize_density(field, grid)


def test_mixture_pdf_integrates_to_about_one():
    field = two_blobs()
    stats = describe(field, GridSpec.for_domain(field.domain, 0.5))
    assert stats.mass_in_domain == pytest.approx(1.0, abs=1e-3)
    assert mixture_pdf(field, np.array([[20.0, 50.0]]))[0] > mixture_pdf(field, np.array([[50.0, 50.0]]))[0]


def test_grid_spec_geometry():
    grid = GridSpec.for_domain((0.0, 0.0, 100.0, 50.0), 0.1)
    assert (grid.nx, grid.ny) == (1000, 500)
    assert grid.extent == pytest.approx((0.0, 0.0, 100.0, 50.0))
    centers = grid.centers()
    assert centers.shape == (1000, 500, 2)
    assert centers[0, 0] == pytest.approx([0.05, 0.05])
    with pytest.raises(ValueError):
        GridSpec((0, 0), 0.0, 1, 1)
