import numpy as np
import pytest

from convdesc import (
    FeatureTensor,
    MaskKind,
    ParameterError,
    SynthConfig,
    apply_mask,
    compute_mask,
    covariance_histogram,
    generate_dataset,
    retention_stats,
)
from convdesc.ingest import read_tensor
from convdesc.masking import FeatureSet
import convdesc.analysis as analysis_mod


def feature_set(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return FeatureSet(vectors=rows, source_coords=tuple((i + 1, 1) for i in range(len(rows))))


class TestRetentionStats:
    def test_none_mask_is_full(self, rng):
        tensors = [FeatureTensor(rng.normal(size=(3, 4, 2)).astype(np.float32))]
        stats = retention_stats(tensors, MaskKind.NONE)
        assert stats.per_image == (1.0,)
        assert stats.mean == 1.0

    def test_sum_mask_distinct_sums(self, rng):
        tensors = [
            FeatureTensor(rng.normal(size=(3, 3, 2)).astype(np.float32)) for _ in range(5)
        ]
        stats = retention_stats(tensors, MaskKind.SUM)
        for fraction in stats.per_image:
            assert fraction == pytest.approx(5 / 9)  # ceil(9/2)/9

    def test_max_mask_bound(self, rng):
        tensors = [FeatureTensor(rng.normal(size=(4, 4, 3)).astype(np.float32))]
        stats = retention_stats(tensors, MaskKind.MAX)
        assert stats.per_image[0] <= 3 / 16

    def test_needs_tensors(self):
        with pytest.raises(ParameterError):
            retention_stats([], MaskKind.NONE)


class TestCovarianceHistogram:
    def test_two_orthogonal(self):
        hist = covariance_histogram(feature_set([[1.0, 0.0], [0.0, 1.0]]), bins=20)
        assert hist.central_fraction == 1.0
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-9)
        center_bin = np.argmax(hist.mass)
        assert hist.bin_edges[center_bin] <= 0.0 <= hist.bin_edges[center_bin + 1]

    def test_two_identical(self):
        hist = covariance_histogram(feature_set([[2.0, 0.0], [2.0, 0.0]]), bins=20)
        assert hist.central_fraction == 0.0
        assert hist.mass[-1] == 1.0  # dot product exactly 1 lands in the last bin

    def test_three_feature_example(self):
        hist = covariance_histogram(
            feature_set([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), bins=10
        )
        assert hist.pair_count == 3
        assert hist.central_fraction == pytest.approx(2 / 3)

    def test_requires_two_features(self):
        with pytest.raises(ParameterError):
            covariance_histogram(feature_set([[1.0, 0.0]]), bins=10)

    def test_mass_sums_to_one(self, rng):
        hist = covariance_histogram(feature_set(rng.normal(size=(40, 6))), bins=33)
        assert hist.mass.sum() == pytest.approx(1.0, abs=1e-9)
        assert hist.pair_count == 40 * 39 // 2

    def test_sampled_path_deterministic(self, rng, monkeypatch):
        monkeypatch.setattr(analysis_mod, "EXACT_PAIR_LIMIT", 10)
        monkeypatch.setattr(analysis_mod, "SAMPLED_PAIRS", 5000)
        fs = feature_set(rng.normal(size=(50, 4)))
        a = covariance_histogram(fs, bins=21)
        b = covariance_histogram(fs, bins=21)
        assert np.array_equal(a.mass, b.mass)
        assert a.pair_count == 5000
        assert a.mass.sum() == pytest.approx(1.0, abs=1e-9)


class TestMaskDecorrelation:
    def test_max_mask_raises_central_fraction_on_bursty_data(self, tmp_path):
        # seeded regression: bursty duplicates dominate the unmasked set
        config = SynthConfig(burst_rate=0.5, background_noise_scale=0.05, seed=76001)
        manifest = generate_dataset(config, tmp_path / "bursty")
        fractions = {}
        for kind in (MaskKind.MAX, MaskKind.NONE):
            values = []
            for image in manifest.images[:12]:
                tensor = read_tensor(image.tensor_path)
                features = apply_mask(tensor, compute_mask(tensor, kind))
                values.append(covariance_histogram(features, 41).central_fraction)
            fractions[kind] = float(np.mean(values))
        assert fractions[MaskKind.MAX] >= fractions[MaskKind.NONE]
