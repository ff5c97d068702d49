import numpy as np
import pytest

from convdesc import (
    ContractViolation,
    embed_features,
    embed_ffaemb,
    embed_fv,
    embed_temb,
    embed_vlad,
    fit_gmm,
    fit_kmeans,
    gmm_posteriors,
)
from convdesc.codebook import GmmCodebook, KmeansCodebook
from convdesc.embed import EmbeddingMethod, embedding_dim, flatten_outer
from convdesc.masking import FeatureSet


def classic_vlad(codebook, features):
    """One-shot VLAD oracle: per-centroid residual accumulation, feature order."""
    blocks = np.zeros((codebook.k, codebook.dim))
    for x in features:
        d2 = np.sum((codebook.centroids - x) ** 2, axis=1)
        j = int(np.argmin(d2))
        blocks[j] += x - codebook.centroids[j]
    return blocks.ravel()


def textbook_fisher_vector(gmm, features):
    """Batch Fisher Vector oracle: posterior-weighted moment sums."""
    sigma = np.sqrt(gmm.variances)
    posts = np.vstack([gmm_posteriors(gmm, x) for x in features])
    u_blocks, v_blocks = [], []
    for i in range(gmm.k):
        z = (features - gmm.means[i]) / sigma[i]
        u_blocks.append((posts[:, i : i + 1] * z).sum(axis=0) / np.sqrt(gmm.weights[i]))
        v_blocks.append(
            (posts[:, i : i + 1] * (z * z - 1.0)).sum(axis=0) / np.sqrt(2.0 * gmm.weights[i])
        )
    return np.concatenate([np.concatenate(u_blocks), np.concatenate(v_blocks)])


@pytest.fixture()
def kmeans_cb():
    return KmeansCodebook(centroids=np.array([[0.0, 0.0], [10.0, 0.0]]))


class TestFv:
    def test_single_component_example(self):
        gmm = GmmCodebook(
            weights=np.array([1.0]), means=np.array([[0.0]]), variances=np.array([[1.0]])
        )
        out = embed_fv(gmm, np.array([2.0]))
        assert out == pytest.approx([2.0, 2.1213203435596424], abs=1e-9)

    def test_zero_residual(self):
        gmm = GmmCodebook(
            weights=np.array([1.0]),
            means=np.array([[3.0, -1.0]]),
            variances=np.array([[2.0, 2.0]]),
        )
        out = embed_fv(gmm, np.array([3.0, -1.0]))
        assert np.allclose(out[:2], 0.0)
        assert np.allclose(out[2:], -1.0 / np.sqrt(2.0))

    def test_far_component_block_vanishes(self):
        gmm = GmmCodebook(
            weights=np.array([0.5, 0.5]),
            means=np.array([[0.0], [50.0]]),
            variances=np.array([[1.0], [1.0]]),
        )
        out = embed_fv(gmm, np.array([0.0]))
        # layout: [u1, u2, v1, v2]
        assert abs(out[1]) < 1e-12 and abs(out[3]) < 1e-12

    def test_dim_mismatch(self):
        gmm = GmmCodebook(
            weights=np.array([1.0]), means=np.array([[0.0]]), variances=np.array([[1.0]])
        )
        with pytest.raises(ContractViolation):
            embed_fv(gmm, np.zeros(2))

    def test_decomposition_matches_textbook_oracle(self, rng):
        data = rng.normal(size=(300, 8))
        gmm = fit_gmm(data, 4, seed=0)
        features = rng.normal(size=(60, 8))
        summed = np.zeros(2 * 4 * 8)
        for x in features:
            summed += embed_fv(gmm, x)
        oracle = textbook_fisher_vector(gmm, features)
        assert np.max(np.abs(summed - oracle)) <= 1e-9


class TestVlad:
    def test_example(self, kmeans_cb):
        out = embed_vlad(kmeans_cb, np.array([1.0, 1.0]))
        assert np.array_equal(out, [1.0, 1.0, 0.0, 0.0])

    def test_centroid_maps_to_zero(self, kmeans_cb):
        assert np.array_equal(embed_vlad(kmeans_cb, np.array([10.0, 0.0])), np.zeros(4))

    def test_one_hot_block(self, kmeans_cb, rng):
        for _ in range(20):
            out = embed_vlad(kmeans_cb, rng.normal(size=2) * 5).reshape(2, 2)
            nonzero_blocks = np.sum(np.any(out != 0, axis=1))
            assert nonzero_blocks <= 1

    def test_decomposition_matches_classic_oracle(self, rng):
        data = rng.normal(size=(100, 8))
        codebook = fit_kmeans(data, 4, seed=0)
        features = rng.normal(size=(50, 8))
        acc = np.zeros(32)
        for x in features:
            acc = acc + embed_vlad(codebook, x)
        assert np.array_equal(acc, classic_vlad(codebook, features))


class TestTemb:
    def test_unit_blocks(self, kmeans_cb, rng):
        for _ in range(20):
            out = embed_temb(kmeans_cb, rng.normal(size=2) * 3).reshape(2, 2)
            norms = np.linalg.norm(out, axis=1)
            for norm in norms:
                assert norm == pytest.approx(1.0, abs=1e-9) or norm == 0.0

    def test_midpoint_example(self):
        codebook = KmeansCodebook(centroids=np.array([[0.0, 0.0], [2.0, 0.0]]))
        out = embed_temb(codebook, np.array([1.0, 0.0]))
        assert np.allclose(out, [1.0, 0.0, -1.0, 0.0], atol=1e-12)

    def test_coincident_centroid_zero_block(self, kmeans_cb):
        out = embed_temb(kmeans_cb, np.array([0.0, 0.0])).reshape(2, 2)
        assert np.array_equal(out[0], [0.0, 0.0])
        assert np.linalg.norm(out[1]) == pytest.approx(1.0, abs=1e-12)


class TestFfaemb:
    def test_flatten_example(self):
        out = flatten_outer(np.outer([1.0, 2.0], [1.0, 2.0]))
        assert out == pytest.approx([1.0, 2.8284271247461903, 4.0], abs=1e-12)

    def test_flatten_preserves_inner_products(self, rng):
        for _ in range(20):
            a = rng.normal(size=(4, 4))
            b = rng.normal(size=(4, 4))
            a, b = a + a.T, b + b.T
            assert np.vdot(flatten_outer(a), flatten_outer(b)) == pytest.approx(
                np.vdot(a, b), abs=1e-9
            )

    def test_single_centroid_constraint_forces_gamma_one(self):
        codebook = KmeansCodebook(centroids=np.array([[1.0, 1.0]]))
        x = np.array([2.0, 3.0])
        out = embed_ffaemb(codebook, x, m=1)
        r = x - codebook.centroids[0]
        assert np.allclose(out, flatten_outer(np.outer(r, r)), atol=1e-12)

    def test_zero_residual_block(self, kmeans_cb):
        out = embed_ffaemb(kmeans_cb, np.array([0.0, 0.0]), m=2)
        assert np.array_equal(out[:3], np.zeros(3))

    def test_gamma_sums_to_one_on_support(self, rng):
        from convdesc.embed import local_coding_coefficients

        centroids = rng.normal(size=(6, 3))
        support, gamma = local_coding_coefficients(centroids, rng.normal(size=3), 4, 1e-4)
        assert len(support) == 4
        assert gamma.sum() == pytest.approx(1.0, abs=1e-12)

    def test_gamma_solves_constrained_least_squares(self, rng):
        # against a brute-force grid/optimizer-free check: the analytic KKT
        # solution must beat random feasible competitors
        from convdesc.embed import local_coding_coefficients

        centroids = rng.normal(size=(5, 3))
        x = rng.normal(size=3)
        m, mu = 3, 1e-3
        support, gamma = local_coding_coefficients(centroids, x, m, mu)
        sub = centroids[support]

        def objective(g):
            return np.sum((x - g @ sub) ** 2) + mu * np.sum(g * g)

        best = objective(gamma)
        for _ in range(300):
            g = rng.normal(size=m)
            g = g / g.sum() if abs(g.sum()) > 1e-9 else np.full(m, 1.0 / m)
            assert objective(g) >= best - 1e-9

    def test_support_out_of_range(self, kmeans_cb):
        with pytest.raises(ContractViolation):
            embed_ffaemb(kmeans_cb, np.zeros(2), m=3)


class TestEmbedFeatures:
    def test_dims_per_method(self, rng):
        data = rng.normal(size=(80, 4))
        km = fit_kmeans(data, 3, seed=0)
        gm = fit_gmm(data, 3, seed=0)
        fs = FeatureSet(vectors=rng.normal(size=(7, 4)),
                        source_coords=tuple((i + 1, 1) for i in range(7)))
        assert embed_features(gm, fs, EmbeddingMethod.FV).dim == 2 * 3 * 4
        assert embed_features(km, fs, EmbeddingMethod.VLAD).dim == 12
        assert embed_features(km, fs, EmbeddingMethod.TEMB).dim == 12
        assert embed_features(km, fs, EmbeddingMethod.FFAEMB, m=2).dim == 3 * 4 * 5 // 2
        assert embedding_dim(EmbeddingMethod.FFAEMB, 4, 3) == 30

    def test_codebook_type_enforced(self, rng):
        km = fit_kmeans(rng.normal(size=(30, 4)), 3, seed=0)
        fs = FeatureSet(vectors=rng.normal(size=(2, 4)), source_coords=((1, 1), (2, 1)))
        with pytest.raises(ContractViolation):
            embed_features(km, fs, EmbeddingMethod.FV)
