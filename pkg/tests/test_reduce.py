import numpy as np
import pytest

from convdesc import (
    ContractViolation,
    DataWarning,
    ParameterError,
    fit_pca,
    l2_normalize,
    reduce_feature,
    reduce_features,
)
from convdesc.masking import FeatureSet


class TestL2Normalize:
    def test_basic(self):
        assert np.allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])

    def test_zero_guard(self):
        assert np.array_equal(l2_normalize(np.zeros(2)), np.zeros(2))

    def test_idempotent_on_unit(self):
        v = np.array([0.6, 0.8])
        assert np.allclose(l2_normalize(l2_normalize(v)), v, atol=1e-15)


class TestFitPca:
    def test_diagonal_line_eigenvector(self):
        # symmetric spread along (1,1)/sqrt(2): rank-1 covariance
        t = np.array([-2.0, -1.0, 1.0, 2.0])
        data = np.outer(t, [1.0, 1.0]) / np.sqrt(2.0)
        with pytest.warns(DataWarning):  # rank 1 < d is fine here, d=1 no... d=1 rank1
            model = fit_pca(np.vstack([data, data]), 2)
        model1 = fit_pca(data, 1)
        assert np.allclose(model1.matrix[0], [0.7071, 0.7071], atol=1e-3)
        assert model.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)

    def test_axis_aligned_signed_permutation(self):
        # mean-zero data with an exactly diagonal sample covariance
        data = np.array(
            [[2.0, 0, 0], [-2.0, 0, 0], [0, 1.5, 0], [0, -1.5, 0], [0, 0, 1.0], [0, 0, -1.0]]
        )
        model = fit_pca(data, 3)
        perm = np.abs(model.matrix)
        assert np.allclose(perm, np.eye(3), atol=1e-8)  # variances already sorted
        assert np.all(model.matrix[np.arange(3), np.arange(3)] > 0)  # sign convention

    def test_fewer_samples_than_d(self, rng):
        with pytest.raises(ParameterError):
            fit_pca(rng.normal(size=(3, 8)), 4)

    def test_d_above_input_dim(self, rng):
        with pytest.raises(ParameterError):
            fit_pca(rng.normal(size=(10, 3)), 4)

    def test_orthonormal_rows(self, rng):
        model = fit_pca(rng.normal(size=(200, 12)), 5)
        gram = model.matrix @ model.matrix.T
        assert np.max(np.abs(gram - np.eye(5))) <= 1e-5

    def test_eigenvalues_sorted_and_recovered(self):
        rng = np.random.default_rng(99)
        true = np.array([9.0, 4.0, 1.0, 0.25])
        q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
        data = rng.normal(size=(10_000, 4)) * np.sqrt(true) @ q.T
        model = fit_pca(data, 4)
        assert np.all(np.diff(model.eigenvalues) <= 0)
        assert np.allclose(model.eigenvalues, true, rtol=0.05)

    def test_zero_variance_completes_basis_with_warning(self):
        data = np.ones((10, 3))
        with pytest.warns(DataWarning):
            model = fit_pca(data, 2)
        gram = model.matrix @ model.matrix.T
        assert np.max(np.abs(gram - np.eye(2))) <= 1e-8

    def test_accepts_feature_set_collections(self, rng):
        sets = [
            FeatureSet(vectors=rng.normal(size=(5, 4)),
                       source_coords=tuple((i + 1, 1) for i in range(5)))
            for _ in range(3)
        ]
        model = fit_pca(sets, 2)
        assert model.matrix.shape == (2, 4)

    def test_inner_product_preservation(self, rng):
        model = fit_pca(rng.normal(size=(300, 10)), 6)
        a, b = rng.normal(size=10), rng.normal(size=10)
        projector = model.matrix.T @ model.matrix
        lhs = (model.matrix @ a) @ (model.matrix @ b)
        rhs = (projector @ a) @ (projector @ b)
        assert abs(lhs - rhs) <= 1e-5


class TestReduceFeature:
    @pytest.fixture()
    def model(self, rng):
        return fit_pca(rng.normal(size=(100, 6)) * [3, 2, 1, 1, 1, 1], 3)

    def test_mean_maps_to_zero(self, model):
        assert np.array_equal(reduce_feature(model, model.mean), np.zeros(3))

    def test_unit_norm(self, model, rng):
        out = reduce_feature(model, rng.normal(size=6))
        assert abs(np.linalg.norm(out) - 1.0) <= 1e-6

    def test_one_dimensional_sign(self):
        data = np.array([[-1.0], [1.0], [-2.0], [2.0]])
        model = fit_pca(data, 1)
        assert np.allclose(reduce_feature(model, np.array([-3.0])), [-1.0])

    def test_dimension_mismatch(self, model):
        with pytest.raises(ContractViolation):
            reduce_feature(model, np.zeros(5))

    def test_batch_matches_single(self, model, rng):
        vectors = rng.normal(size=(20, 6))
        fs = FeatureSet(vectors=vectors, source_coords=tuple((i + 1, 1) for i in range(20)))
        batch = reduce_features(model, fs)
        singles = np.vstack([reduce_feature(model, v) for v in vectors])
        assert np.allclose(batch.vectors, singles, atol=1e-12)
