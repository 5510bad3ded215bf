from math import sqrt

import numpy as np
import pytest

from src.core.exceptions import DegeneratePointError, EmptyNeighborhoodError, InvalidArgumentError
from src.estimators.covariance import estimate_cov
from src.estimators.mean import (
    band_half_width,
    basis_bands,
    chi2_quantile,
    confidence_band,
    estimate_mean,
    in_sample_means,
    jackknife_mean,
    kernel_weights,
    nw_weights,
)
from src.models.dataset import Dataset
from src.models.kernels import KernelSpec, jackknife_variance_constant, kernel_constants


def _direct_mean(data, x, spec, b):
    """Textbook double loop over observations and coordinates."""
    weights = []
    for t in range(data.n):
        u = [(x[j] - data.scaled[t, j]) / b for j in range(data.k)]
        sq = sum(v * v for v in u)
        if spec.family.value == "epanechnikov":
            c_k = {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0}[data.k]
            value = (data.k + 2) / (2 * c_k) * (1 - sq) if sq <= 1 else 0.0
        else:
            value = (2 * np.pi) ** (-data.k / 2) * np.exp(-0.5 * sq)
        weights.append(value / b**data.k)
    total = sum(weights)
    mean = [sum(w * data.responses[t, i] for t, w in enumerate(weights)) / total for i in range(2)]
    return np.array(mean), total / data.n


@pytest.mark.parametrize("family", ["epanechnikov", "gaussian"])
def test_mean_matches_direct_loop(family):
    rng = np.random.default_rng(3)
    for trial in range(10):
        n = int(rng.integers(5, 21))
        k = int(rng.integers(1, 4))
        data = Dataset.from_arrays(rng.standard_normal((n, 2)), rng.standard_normal((n, k)))
        spec = KernelSpec(family, k)
        x = 0.3 * rng.standard_normal(k)
        b = 3.0
        expected_mean, expected_density = _direct_mean(data, x, spec, b)
        est = estimate_mean(data, x, spec, b)
        np.testing.assert_allclose(est.point, expected_mean, rtol=0, atol=1e-12, err_msg=str(trial))
        assert abs(est.density - expected_density) < 1e-12


def test_weights_are_a_probability_vector(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    weights = nw_weights(linear_dataset, [0.1, -0.2], spec, 0.3)
    assert (weights >= 0).all()
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_constant_responses_are_reproduced(rng):
    X = rng.standard_normal((100, 3))
    data = Dataset.from_arrays(np.tile([1.5, -2.0], (100, 1)), X)
    est = estimate_mean(data, np.zeros(3), KernelSpec("gaussian", 3), 0.7)
    np.testing.assert_allclose(est.point, [1.5, -2.0])


def test_empty_neighbourhood_raises(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    with pytest.raises(EmptyNeighborhoodError):
        estimate_mean(linear_dataset, [5.0, 5.0], spec, 0.5)
    with pytest.raises(InvalidArgumentError):
        estimate_mean(linear_dataset, [0.0, 0.0, 0.0], spec, 0.5)


def test_jackknife_removes_curvature_bias():
    grid = np.linspace(0.0, 1.0, 2001)
    data = Dataset.from_arrays(grid**2, grid, standardize=False)
    spec = KernelSpec("epanechnikov", 1)
    b = 0.05
    x = np.array([0.5])

    plain = estimate_mean(data, x, spec, b).point[0]
    corrected = jackknife_mean(data, x, spec, b)[0]
    # local constant bias is psi_K * mu''(x) * b^2 = 0.1 * 2 * b^2
    assert plain - 0.25 == pytest.approx(0.2 * b**2, rel=1e-2)
    assert abs(corrected - 0.25) < 1e-6


def test_in_sample_means_agree_with_pointwise_fits(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    fitted = in_sample_means(linear_dataset, spec, 0.4, chunk_size=37)
    for t in (0, 17, 399):
        expected = estimate_mean(linear_dataset, linear_dataset.scaled[t], spec, 0.4).point
        np.testing.assert_allclose(fitted[t], expected, atol=1e-12)
    rows = in_sample_means(linear_dataset, spec, 0.4, rows=np.array([17, 399]))
    np.testing.assert_allclose(rows, fitted[[17, 399]])


def test_chi2_quantiles():
    assert chi2_quantile(1, 0.05) == pytest.approx(1.959964**2, rel=1e-6)
    assert chi2_quantile(2, 0.05) == pytest.approx(5.991465, rel=1e-6)
    with pytest.raises(InvalidArgumentError):
        chi2_quantile(2, 1.0)


def test_band_half_width_formula():
    assert band_half_width(0.6, 4.0, 2.0, 12.0) == pytest.approx(sqrt(0.6 * 4.0 * 2.0 / 12.0))
    with pytest.raises(DegeneratePointError):
        band_half_width(0.6, 4.0, 2.0, 0.0)


def test_confidence_band_assembles_its_parts(linear_dataset):
    data = linear_dataset
    spec = KernelSpec("epanechnikov", 2)
    b, x, a, alpha = 0.4, np.array([0.1, 0.2]), np.array([1.0, -1.0]), 0.05
    cov = estimate_cov(data, x, spec, b).matrix

    band = confidence_band(data, x, spec, b, a, alpha, cov_matrix=cov)
    est = estimate_mean(data, x, spec, b)
    expected = sqrt(
        kernel_constants(spec).phi_K
        * chi2_quantile(2, alpha)
        * (a @ cov @ a)
        / (data.n * b**2 * est.density)
    )
    assert band.center == pytest.approx(a @ jackknife_mean(data, x, spec, b))
    assert band.half_width == pytest.approx(expected)
    assert band.level == pytest.approx(0.95)
    assert band.lower < band.center < band.upper

    wide = confidence_band(
        data, x, spec, b, a, alpha, cov_matrix=cov, variance_constant="jackknife"
    )
    ratio = sqrt(jackknife_variance_constant(spec) / kernel_constants(spec).phi_K)
    assert wide.half_width == pytest.approx(band.half_width * ratio)

    # the covariance is estimated internally when not supplied
    assert confidence_band(data, x, spec, b, a, alpha).half_width == pytest.approx(band.half_width)


def test_basis_bands_use_unit_contrasts(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    x = np.array([0.0, 0.0])
    bands = basis_bands(linear_dataset, x, spec, 0.4, 0.05)
    centre = jackknife_mean(linear_dataset, x, spec, 0.4)
    assert len(bands) == 2
    np.testing.assert_array_equal(bands[0].contrast, [1.0, 0.0])
    np.testing.assert_array_equal(bands[1].contrast, [0.0, 1.0])
    for j, band in enumerate(bands):
        assert band.center == pytest.approx(centre[j])
        assert band.half_width > 0


def test_band_rejects_bad_contrast(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    with pytest.raises(InvalidArgumentError):
        confidence_band(linear_dataset, [0.0, 0.0], spec, 0.4, [1.0, 0.0, 0.0], 0.05)
    with pytest.raises(InvalidArgumentError):
        confidence_band(
            linear_dataset, [0.0, 0.0], spec, 0.4, [1.0, 0.0], 0.05, variance_constant="other"
        )


def test_mean_is_affine_equivariant(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    A = np.array([[2.0, -0.5], [0.3, 1.5]])
    c = np.array([10.0, -3.0])
    moved = linear_dataset.with_responses(linear_dataset.responses @ A.T + c)
    for x in ([0.0, 0.0], [0.4, -0.3], [-0.7, 0.6]):
        base = estimate_mean(linear_dataset, np.array(x), spec, 0.4).point
        image = estimate_mean(moved, np.array(x), spec, 0.4).point
        np.testing.assert_allclose(image, A @ base + c, rtol=0, atol=1e-10)


def test_epanechnikov_weights_vanish_outside_the_bandwidth(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    x, b = np.array([0.2, -0.1]), 0.35
    weights = kernel_weights(linear_dataset, x, spec, b)
    distance = np.linalg.norm(linear_dataset.scaled - x, axis=1)
    assert (weights[distance > b] == 0.0).all()
    assert (weights[distance < b] > 0.0).all()
    assert (distance > b).any()


def test_half_width_shrinks_with_sample_size(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    x, a = np.array([0.1, 0.2]), np.array([1.0, 1.0])
    doubled = Dataset.from_arrays(
        np.vstack([linear_dataset.responses] * 2),
        np.vstack([linear_dataset.covariates] * 2),
        standardize=False,
    )
    cov = estimate_cov(linear_dataset, x, spec, 0.4).matrix
    single = confidence_band(linear_dataset, x, spec, 0.4, a, 0.05, cov_matrix=cov)
    double = confidence_band(doubled, x, spec, 0.4, a, 0.05, cov_matrix=cov)
    assert double.center == pytest.approx(single.center, abs=1e-12)
    assert double.half_width < single.half_width
    assert double.half_width == pytest.approx(single.half_width / sqrt(2.0), rel=1e-9)


def test_half_width_grows_with_contrast_variance(linear_dataset):
    spec = KernelSpec("epanechnikov", 2)
    x, a = np.array([0.1, 0.2]), np.array([1.0, -1.0])
    cov = estimate_cov(linear_dataset, x, spec, 0.4).matrix
    widths = [
        confidence_band(linear_dataset, x, spec, 0.4, a, 0.05, cov_matrix=s * cov).half_width
        for s in (0.5, 1.0, 2.0, 4.0)
    ]
    assert all(lo < hi for lo, hi in zip(widths, widths[1:]))
    assert widths[3] == pytest.approx(2.0 * widths[1], rel=1e-12)
    sizes = [band_half_width(0.6, 5.99, 2.0, m) for m in (10.0, 100.0, 1000.0)]
    assert sizes[0] > sizes[1] > sizes[2]
