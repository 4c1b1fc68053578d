"""Synthetic generator, query/train splitting, and the feature/label files."""

import numpy as np
import pytest

from dsibh import dataio
from dsibh.errors import FormatError, InvalidArgumentError


def f32_exact(rng, shape):
    """Random values that survive the f32 storage round trip unchanged."""
    return rng.random(shape).astype(np.float32).astype(np.float64)


class TestGenerateSynthetic:
    def test_shapes_and_labels(self):
        spec = dataio.SynthSpec(class_count=3, samples_per_class=5, d1=7, d2=4)
        bundle = dataio.generate_synthetic(spec)
        assert bundle.x1.shape == (15, 7)
        assert bundle.x2.shape == (15, 4)
        assert bundle.y.shape == (15, 3)
        assert np.array_equal(bundle.y.sum(axis=1), np.ones(15))
        assert bundle.query_indices.size == 0
        assert bundle.train_indices.size == 0

    def test_seed_determinism(self):
        spec = dataio.SynthSpec(4, 10, 6, 5, seed=42)
        a = dataio.generate_synthetic(spec)
        b = dataio.generate_synthetic(spec)
        assert np.array_equal(a.x1, b.x1)
        assert np.array_equal(a.x2, b.x2)
        assert np.array_equal(a.y, b.y)
        c = dataio.generate_synthetic(dataio.SynthSpec(4, 10, 6, 5, seed=43))
        assert not np.array_equal(a.x1, c.x1)

    def test_zero_noise_collapses_classes(self):
        spec = dataio.SynthSpec(3, 4, 5, 5, noise_sigma=0.0)
        bundle = dataio.generate_synthetic(spec)
        for k in range(3):
            rows = bundle.x1[bundle.y[:, k] == 1]
            assert np.array_equal(rows, np.tile(rows[0], (4, 1)))

    def test_moderate_noise_keeps_classes_separable(self):
        spec = dataio.SynthSpec(4, 250, 32, 32, noise_sigma=0.1, seed=0)
        bundle = dataio.generate_synthetic(spec)
        classes = bundle.y.argmax(axis=1)
        centroids = np.stack(
            [bundle.x1[classes == k].mean(axis=0) for k in range(4)]
        )
        gaps = bundle.x1[:, None, :] - centroids[None, :, :]
        nearest = np.einsum("nkd,nkd->nk", gaps, gaps).argmin(axis=1)
        assert (nearest == classes).mean() > 0.95

    def test_multilabel_rate_adds_second_classes(self):
        spec = dataio.SynthSpec(4, 100, 5, 5, multilabel_rate=0.5, seed=1)
        bundle = dataio.generate_synthetic(spec)
        per_row = bundle.y.sum(axis=1)
        assert set(np.unique(per_row)) <= {1, 2}
        frac = (per_row == 2).mean()
        assert 0.3 < frac < 0.7

    def test_wider_label_space(self):
        spec = dataio.SynthSpec(2, 3, 4, 4, label_dim=6)
        bundle = dataio.generate_synthetic(spec)
        assert bundle.y.shape == (6, 6)
        assert np.array_equal(bundle.y[:, 2:], np.zeros((6, 4), dtype=np.uint8))

    def test_spec_validation(self):
        with pytest.raises(InvalidArgumentError, match="counts"):
            dataio.SynthSpec(0, 5, 3, 3)
        with pytest.raises(InvalidArgumentError, match="label_dim"):
            dataio.SynthSpec(4, 5, 3, 3, label_dim=2)
        with pytest.raises(InvalidArgumentError, match="noise_sigma"):
            dataio.SynthSpec(2, 5, 3, 3, noise_sigma=-0.1)
        with pytest.raises(InvalidArgumentError, match="multilabel_rate"):
            dataio.SynthSpec(2, 5, 3, 3, multilabel_rate=1.5)


class TestSplit:
    def make_bundle(self, n_per_class, classes=4, d=1, seed=0):
        spec = dataio.SynthSpec(classes, n_per_class, d, d, seed=seed)
        return dataio.generate_synthetic(spec)

    def test_counts_and_partition(self):
        bundle = self.make_bundle(25)
        tagged = dataio.split(bundle, query_count=30, train_count=50, seed=5)
        assert tagged.query_indices.size == 30
        assert tagged.train_indices.size == 50
        assert tagged.retrieval_indices.size == 70
        assert not np.any(tagged.query_mask & tagged.train_mask)
        assert np.all(np.isin(tagged.train_indices, tagged.retrieval_indices))

    def test_benchmark_scale_split(self):
        bundle = self.make_bundle(18469, classes=4, d=1)
        assert bundle.n == 73876
        tagged = dataio.split(bundle, query_count=762, train_count=14000, seed=0)
        assert tagged.query_indices.size == 762
        assert tagged.train_indices.size == 14000
        assert tagged.retrieval_indices.size == 73876 - 762

    def test_zero_counts_are_valid(self):
        bundle = self.make_bundle(5)
        tagged = dataio.split(bundle, query_count=0, train_count=0, seed=1)
        assert tagged.query_indices.size == 0
        assert tagged.train_indices.size == 0
        assert tagged.retrieval_indices.size == bundle.n

    def test_same_seed_same_tags(self):
        bundle = self.make_bundle(10)
        a = dataio.split(bundle, 8, 20, seed=3)
        b = dataio.split(bundle, 8, 20, seed=3)
        assert np.array_equal(a.query_mask, b.query_mask)
        assert np.array_equal(a.train_mask, b.train_mask)
        c = dataio.split(bundle, 8, 20, seed=4)
        assert not np.array_equal(a.query_mask, c.query_mask)

    def test_count_validation(self):
        bundle = self.make_bundle(5)
        with pytest.raises(InvalidArgumentError, match="query_count"):
            dataio.split(bundle, bundle.n, 0, seed=0)
        with pytest.raises(InvalidArgumentError, match="query_count"):
            dataio.split(bundle, -1, 0, seed=0)
        with pytest.raises(InvalidArgumentError, match="train_count"):
            dataio.split(bundle, 2, bundle.n - 1, seed=0)
        with pytest.raises(InvalidArgumentError, match="train_count"):
            dataio.split(bundle, 2, -1, seed=0)

    def test_split_preserves_data(self):
        bundle = self.make_bundle(5)
        tagged = dataio.split(bundle, 3, 4, seed=2)
        assert np.array_equal(tagged.x1, bundle.x1)
        assert np.array_equal(tagged.x2, bundle.x2)
        assert np.array_equal(tagged.y, bundle.y)


class TestBundleValidation:
    def test_row_alignment_required(self):
        with pytest.raises(InvalidArgumentError, match="row-aligned"):
            dataio.DatasetBundle(
                np.ones((3, 2)), np.ones((2, 2)), np.ones((3, 1), dtype=np.uint8)
            )

    def test_mask_shape_checked(self):
        with pytest.raises(InvalidArgumentError, match="one entry per row"):
            dataio.DatasetBundle(
                np.ones((3, 2)),
                np.ones((3, 2)),
                np.ones((3, 1), dtype=np.uint8),
                query_mask=np.zeros(2, dtype=bool),
            )

    def test_disjointness_enforced(self):
        mask = np.array([True, False, False])
        with pytest.raises(InvalidArgumentError, match="retrieval set"):
            dataio.DatasetBundle(
                np.ones((3, 2)),
                np.ones((3, 2)),
                np.ones((3, 1), dtype=np.uint8),
                query_mask=mask,
                train_mask=mask,
            )


class TestFeatureFiles:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        x = f32_exact(rng, (13, 6))
        path = tmp_path / "x.dsibf"
        dataio.save_features(path, x)
        assert np.array_equal(dataio.load_features(path), x)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "x.dsibf"
        dataio.save_features(path, np.zeros((2, 3)))
        blob = path.read_bytes()
        assert blob[:5] == b"DSIBF"
        assert len(blob) == 5 + 8 + 2 * 3 * 4

    def test_truncation_reports_expected_bytes(self, tmp_path):
        path = tmp_path / "x.dsibf"
        dataio.save_features(path, np.zeros((4, 2)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match=r"expected 45 bytes \(4x2 f32"):
            dataio.load_features(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.dsibf"
        path.write_bytes(b"NOPEX" + bytes(8))
        with pytest.raises(FormatError, match="bad magic"):
            dataio.load_features(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "x.dsibf"
        path.write_bytes(b"DSIBF\x01")
        with pytest.raises(FormatError, match="truncated header"):
            dataio.load_features(path)


class TestLabelFiles:
    def test_csv_single_row(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("1,0,1\n")
        assert np.array_equal(dataio.load_labels(path), [[1, 0, 1]])

    def test_csv_round_trip(self, tmp_path):
        y = np.array([[1, 0, 0], [0, 1, 1], [1, 1, 1]], dtype=np.uint8)
        path = tmp_path / "y.csv"
        dataio.save_labels(path, y)
        assert np.array_equal(dataio.load_labels(path), y)

    def test_binary_container_accepted(self, tmp_path):
        y = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        path = tmp_path / "y.dsibf"
        dataio.save_features(path, y.astype(np.float64))
        assert np.array_equal(dataio.load_labels(path), y)

    def test_binary_container_rejects_non_binary_values(self, tmp_path):
        path = tmp_path / "y.dsibf"
        dataio.save_features(path, np.array([[0.5, 1.0]]))
        with pytest.raises(InvalidArgumentError, match="binary"):
            dataio.load_labels(path)

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("1,zebra\n")
        with pytest.raises(FormatError, match="not a valid 0/1 CSV"):
            dataio.load_labels(path)

    def test_csv_with_zero_row_rejected(self, tmp_path):
        path = tmp_path / "y.csv"
        path.write_text("1,0\n0,0\n")
        with pytest.raises(InvalidArgumentError, match="at least one set bit"):
            dataio.load_labels(path)
