"""Tests for the synthetic data generators (src/datagen.py)."""

import math

import numpy as np
import pytest

from src.datagen import (
    CLUSTER_COUNT,
    GaussianKind,
    GaussianModel,
    ToyKind,
    ToyParams,
    ToySetup,
    gen_gaussian,
    gen_means,
    gen_toy,
    rotation,
    sample_reference_bags,
    sample_toy,
    subsample,
    toy_covariance,
)
from src.exceptions import BagTooSmallError, InvalidParameterError
from src.kernel_core import Bag
from src.random_streams import stream


class TestGaussianModel:
    """Test the Gaussian mean models."""

    def test_dimension_defaults(self):
        """Test d = 1000, or 50 for SPARSE."""
        assert GaussianModel(GaussianKind.UNIF).d == 1000
        assert GaussianModel(GaussianKind.SPARSE).d == 50
        assert GaussianModel("CLUSTER").B == 2000

    def test_too_few_dimensions(self):
        """Test that UNIF needs its ten active coordinates."""
        with pytest.raises(InvalidParameterError):
            GaussianModel(GaussianKind.UNIF, d=5)

    def test_unif(self):
        """Test ten active coordinates in [-20, 20] and zeros elsewhere."""
        means = gen_means(GaussianModel(GaussianKind.UNIF, B=100, d=30), stream(1))
        assert np.all(means[:, 10:] == 0.0)
        assert np.all(np.abs(means[:, :10]) <= 20.0)

    def test_sphere(self):
        """Test that the first six coordinates lie on the radius-50 sphere."""
        means = gen_means(GaussianModel(GaussianKind.SPHERE, B=100, d=20), stream(2))
        np.testing.assert_allclose(np.linalg.norm(means[:, :6], axis=1), 50.0)
        assert np.all(means[:, 6:] == 0.0)

    def test_sparse(self):
        """Test exactly two nonzero coordinates in [0, 20]."""
        means = gen_means(GaussianModel(GaussianKind.SPARSE, B=200), stream(3))
        assert np.all(np.count_nonzero(means, axis=1) == 2)
        assert means.max() <= 20.0
        assert means.min() >= 0.0

    def test_cluster_equal_split(self):
        """Test that task i belongs to cluster i mod 20."""
        means = gen_means(GaussianModel(GaussianKind.CLUSTER, B=80, d=500), stream(4))
        same = np.sum((means[0] - means[CLUSTER_COUNT]) ** 2)
        other = np.sum((means[0] - means[1]) ** 2)
        assert same < other

    def test_cluster_spread(self):
        """Test that means sit at standard deviation 0.1 per coordinate around their centre."""
        means = gen_means(GaussianModel(GaussianKind.CLUSTER, B=80, d=500), stream(4))
        diff = means[0] - means[CLUSTER_COUNT]
        assert diff.var() == pytest.approx(2 * 0.1**2, rel=0.2)

    def test_observation_noise(self):
        """Test x_i - mu_i ~ N(0, I_d / N)."""
        model = GaussianModel(GaussianKind.UNIF, B=400, d=100, N=4)
        means, observations = gen_gaussian(model, stream(5))
        noise = observations - means
        assert noise.var() == pytest.approx(0.25, rel=0.05)

    def test_model_seed(self):
        """Test that the model seed makes generation reproducible."""
        model = GaussianModel(GaussianKind.SPARSE, B=10, seed=42)
        first, second = gen_gaussian(model), gen_gaussian(model)
        np.testing.assert_array_equal(first[1], second[1])


class TestToySetup:
    """Test the toy setups."""

    def test_setup_b(self):
        """Test 50 bags of 50 two-dimensional samples centred at the origin."""
        bags, params = gen_toy(ToySetup(ToyKind.B_NUM_BAGS, B=50, N=50), seed=0)
        assert len(bags) == 50
        assert all(bag.samples.shape == (50, 2) for bag in bags)
        assert all(np.array_equal(p.centre, [0.0, 0.0]) for p in params)
        assert all(abs(p.angle) <= math.pi / 4 for p in params)

    def test_setup_c_sizes(self):
        """Test linearly spaced bag sizes from 10 to 300."""
        sizes = ToySetup(ToyKind.C_IMBALANCED, B=30).bag_sizes()
        assert sizes[0] == 10
        assert sizes[-1] == 300
        assert sizes == sorted(sizes)

    def test_setup_d_centres(self):
        """Test B/10 centres equally spaced on the circle."""
        centres = ToySetup(ToyKind.D_CLUSTERED, B=40, radius=3.0).centres()
        unique = np.unique(np.round(centres, 12), axis=0)
        assert unique.shape == (4, 2)
        np.testing.assert_allclose(np.linalg.norm(centres, axis=1), 3.0)
        angles = np.sort(np.arctan2(unique[:, 1], unique[:, 0]))
        np.testing.assert_allclose(np.diff(angles), 2 * math.pi / 4)

    def test_setup_d_radius_zero(self):
        """Test that radius 0 puts every centre at the origin."""
        assert np.all(ToySetup(ToyKind.D_CLUSTERED, B=20).centres() == 0.0)

    def test_setup_d_divisible(self):
        """Test that the clustered setup needs B divisible by 10."""
        with pytest.raises(InvalidParameterError):
            ToySetup(ToyKind.D_CLUSTERED, B=25)

    def test_bag_independent_of_b(self):
        """Test that bag i does not depend on how many bags are drawn."""
        small, _ = gen_toy(ToySetup(ToyKind.A_BAG_SIZES, B=3, N=10), seed=8)
        large, _ = gen_toy(ToySetup(ToyKind.A_BAG_SIZES, B=6, N=10), seed=8)
        np.testing.assert_array_equal(small[2].samples, large[2].samples)

    def test_reference_bags_differ(self):
        """Test that reference bags come from a different stream."""
        bags, params = gen_toy(ToySetup(ToyKind.B_NUM_BAGS, B=2, N=10), 0, (0, 0))
        refs = sample_reference_bags(params, 10, 0, (0, 1))
        assert refs[0].size == 10
        assert not np.array_equal(refs[0].samples, bags[0].samples)


class TestRotation:
    """Test rotated covariances."""

    def test_orthogonal(self):
        """Test R(theta)^T R(theta) = I."""
        for theta in np.linspace(-math.pi, math.pi, 9):
            R = rotation(theta)
            assert np.abs(R.T @ R - np.eye(2)).max() <= 1e-12

    def test_eigenvalues(self):
        """Test that every rotation keeps the eigenvalues 1 and 10."""
        np.testing.assert_allclose(np.linalg.eigvalsh(toy_covariance(0.3)), [1.0, 10.0])

    def test_sample_covariance(self):
        """Test a 10^5-sample bag at theta = 0 against diag(1, 10) within 2%."""
        samples = sample_toy(ToyParams(np.zeros(2), 0.0), 100_000, stream(6))
        covariance = np.cov(samples, rowvar=False)
        assert covariance[0, 0] == pytest.approx(1.0, rel=0.02)
        assert covariance[1, 1] == pytest.approx(10.0, rel=0.02)
        assert abs(covariance[0, 1]) < 0.05


class TestSubsample:
    """Test subsampling without replacement."""

    def test_full_size_is_permutation(self):
        """Test that n = N permutes the rows."""
        bag = Bag("a", np.arange(10, dtype=float).reshape(5, 2))
        drawn = subsample(bag, 5, seed=1)
        assert sorted(map(tuple, drawn.samples)) == sorted(map(tuple, bag.samples))
        assert drawn.id == "a"

    def test_single_row(self):
        """Test that n = 1 gives a single-row bag."""
        bag = Bag("a", np.arange(10, dtype=float).reshape(5, 2))
        assert subsample(bag, 1, seed=1).size == 1

    def test_deterministic(self):
        """Test that a fixed seed gives identical rows."""
        bag = Bag("a", np.arange(40, dtype=float).reshape(20, 2))
        first = subsample(bag, 7, seed=3, stream_keys=(1, 2))
        second = subsample(bag, 7, seed=3, stream_keys=(1, 2))
        np.testing.assert_array_equal(first.samples, second.samples)

    def test_too_many(self):
        """Test that n > N is rejected."""
        with pytest.raises(BagTooSmallError):
            subsample(Bag("a", [[0.0], [1.0]]), 3, seed=0)

    def test_zero_rejected(self):
        """Test that at least one row must be drawn."""
        with pytest.raises(InvalidParameterError):
            subsample(Bag("a", [[0.0], [1.0]]), 0, seed=0)
