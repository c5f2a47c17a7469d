"""Loader validation, preparation protocol, and cache container tests."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bplab import data as bd


class TestLoadRaw:
    def test_iris_counts(self, iris_file):
        table = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        assert table.features.shape == (150, 4)
        assert table.raw_columns == 4
        assert len(np.unique(table.labels)) == 3
        # class ids follow order of first appearance
        assert table.labels[0] == 0 and table.labels[-1] == 2

    def test_wine_counts(self, wine_file):
        table = bd.load_raw(bd.DatasetSpec("wine", wine_file))
        assert table.features.shape == (178, 13)
        counts = np.bincount(table.labels)
        np.testing.assert_array_equal(counts, [59, 71, 48])

    def test_titanic_encoding(self, titanic_file):
        table = bd.load_raw(bd.DatasetSpec("titanic", titanic_file))
        assert table.num_rows == 891
        assert table.raw_columns == 11
        assert table.features.shape == (891, 7)
        assert np.all(np.isfinite(table.features))  # ages imputed
        np.testing.assert_array_equal(np.bincount(table.labels), [549, 342])
        sex = table.features[:, 1]
        assert set(np.unique(sex)) <= {0.0, 1.0}

    def test_mnist_counts(self, mnist_dir):
        table = bd.load_raw(bd.DatasetSpec("mnist", mnist_dir))
        assert table.features.shape == (60_000, 784)
        assert len(np.unique(table.labels)) == 10

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            bd.load_raw(bd.DatasetSpec("iris", tmp_path / "nope.data"))

    def test_row_count_mismatch_rejected(self, iris_file, tmp_path):
        truncated = tmp_path / "short.data"
        lines = iris_file.read_text().splitlines()[:100]
        truncated.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="rows"):
            bd.load_raw(bd.DatasetSpec("iris", truncated))

    def test_unknown_dataset_name(self, iris_file):
        with pytest.raises(ValueError):
            bd.DatasetSpec("digits", iris_file)


class TestIdxParsing:
    def test_magic_numbers_accepted(self, mnist_dir):
        images = bd.read_idx_images(mnist_dir / "train-images-idx3-ubyte")
        labels = bd.read_idx_labels(mnist_dir / "train-labels-idx1-ubyte")
        assert images.shape == (60_000, 784)
        assert labels.shape == (60_000,)

    def test_wrong_magic_rejected(self, tmp_path):
        bad = tmp_path / "bad-images"
        with open(bad, "wb") as fh:
            fh.write(struct.pack(">IIII", 0x00000804, 1, 28, 28))
            fh.write(bytes(784))
        with pytest.raises(ValueError, match="magic"):
            bd.read_idx_images(bad)
        bad_labels = tmp_path / "bad-labels"
        with open(bad_labels, "wb") as fh:
            fh.write(struct.pack(">II", 0x00000803, 1))
            fh.write(bytes(1))
        with pytest.raises(ValueError, match="magic"):
            bd.read_idx_labels(bad_labels)

    def test_truncated_payload_rejected(self, tmp_path):
        bad = tmp_path / "short-images"
        with open(bad, "wb") as fh:
            fh.write(struct.pack(">IIII", 0x00000803, 2, 28, 28))
            fh.write(bytes(784))  # one image missing
        with pytest.raises(ValueError, match="payload"):
            bd.read_idx_images(bad)


class TestPrepare:
    def test_iris_protocol(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        prepared = bd.prepare(raw, num_qubits=4, seed=1)
        assert prepared.features.shape == (100, 4)  # 60 + 20 + 20, no reduction
        sizes = {k: len(v) for k, v in prepared.split_indices.items()}
        assert sizes == {"train": 60, "val": 20, "test": 20}
        assert set(np.unique(prepared.labels)) == {0, 1}
        assert prepared.features.min() >= 0.0
        assert prepared.features.max() <= np.pi
        assert prepared.reducer_provenance.startswith("identity(4d)")

    def test_split_disjointness_and_stratification(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        prepared = bd.prepare(raw, num_qubits=2, seed=2)
        all_idx = np.concatenate(list(prepared.split_indices.values()))
        assert len(np.unique(all_idx)) == len(all_idx) == 100
        for name, expected in (("train", 60), ("val", 20), ("test", 20)):
            x, y = prepared.split(name)
            assert len(y) == expected
            # iris has 50/50 in the first two classes: splits stay balanced
            assert abs(int(np.sum(y == 0)) - expected // 2) <= 1

    def test_wine_uses_every_available_instance(self, wine_file):
        raw = bd.load_raw(bd.DatasetSpec("wine", wine_file))
        prepared = bd.prepare(raw, num_qubits=4, seed=3)
        assert prepared.features.shape == (130, 4)
        assert prepared.reducer_provenance.startswith("pca(fit=train,13->4)")
        counts = np.bincount(prepared.labels)
        np.testing.assert_array_equal(counts, [59, 71])

    def test_mnist_reduction(self, mnist_dir):
        raw = bd.load_raw(bd.DatasetSpec("mnist", mnist_dir))
        prepared = bd.prepare(raw, num_qubits=2, seed=4)
        assert prepared.features.shape == (800, 2)
        sizes = {k: len(v) for k, v in prepared.split_indices.items()}
        assert sizes == {"train": 320, "val": 80, "test": 400}
        assert prepared.reducer_provenance.startswith("pca(fit=train,784->2)")

    def test_identity_reduction_is_affine_rescale(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        prepared = bd.prepare(raw, num_qubits=4, seed=5)
        src = raw.features[prepared.source_rows]
        train = prepared.split_indices["train"]
        lo = src[train].min(axis=0)
        hi = src[train].max(axis=0)
        expected = np.clip((src - lo) / (hi - lo) * np.pi, 0.0, np.pi)
        np.testing.assert_allclose(prepared.features, expected, atol=1e-12)

    def test_determinism_and_seed_sensitivity(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        a = bd.prepare(raw, num_qubits=3, seed=42)
        b = bd.prepare(raw, num_qubits=3, seed=42)
        c = bd.prepare(raw, num_qubits=3, seed=43)
        assert a.content_hash() == b.content_hash()
        assert a.content_hash() != c.content_hash()

    def test_no_leakage_from_heldout_rows(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        prepared = bd.prepare(raw, num_qubits=4, seed=6)
        train_positions = prepared.split_indices["train"]
        train_rows = set(prepared.source_rows[train_positions].tolist())
        # Corrupt every held-out source row; the train block must not move.
        tampered = bd.RawTable(raw.name, raw.features.copy(), raw.labels,
                               raw.raw_columns)
        for row in range(tampered.num_rows):
            if row not in train_rows:
                tampered.features[row] += 250.0
        again = bd.prepare(tampered, num_qubits=4, seed=6)
        np.testing.assert_array_equal(again.features[train_positions],
                                      prepared.features[train_positions])

    def test_insufficient_instances_rejected(self, iris_file):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        with pytest.raises(ValueError, match="class 7 is absent"):
            bd.prepare(raw, num_qubits=2, seed=0, classes_kept=(0, 7))


class TestPcaReducer:
    def test_recovers_dominant_direction(self):
        rng = np.random.default_rng(0)
        direction = np.array([3.0, 1.0, 0.5])
        direction /= np.linalg.norm(direction)
        x = rng.normal(size=(400, 1)) * 5.0 @ direction[None, :]
        x += rng.normal(scale=0.05, size=x.shape)
        reducer = bd.PcaReducer(1).fit(x)
        alignment = abs(float(reducer.components_[0] @ direction))
        assert alignment > 0.999

    def test_transform_requires_fit(self):
        with pytest.raises(RuntimeError):
            bd.PcaReducer(1).transform(np.zeros((3, 3)))

    def test_deterministic_sign(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(100, 4))
        a = bd.PcaReducer(2).fit(x)
        b = bd.PcaReducer(2).fit(x.copy())
        np.testing.assert_array_equal(a.components_, b.components_)
        for row in a.components_:
            assert row[np.argmax(np.abs(row))] > 0

    def test_too_many_components(self):
        with pytest.raises(ValueError):
            bd.PcaReducer(5).fit(np.zeros((3, 4)))


class TestApportion:
    @given(total=st.integers(1, 500),
           weights=st.lists(st.integers(1, 100), min_size=1, max_size=6))
    @settings(max_examples=100, deadline=None)
    def test_sums_exactly(self, total, weights):
        counts = bd._apportion(total, np.asarray(weights, dtype=float))
        assert counts.sum() == total
        assert np.all(counts >= 0)


class TestCacheContainer:
    def test_round_trip(self, iris_file, tmp_path):
        raw = bd.load_raw(bd.DatasetSpec("iris", iris_file))
        prepared = bd.prepare(raw, num_qubits=3, seed=9)
        path = tmp_path / "iris.bpld"
        bd.save_prepared(prepared, path)
        loaded = bd.load_prepared(path)
        assert loaded.name == "iris"
        assert loaded.num_qubits == 3
        assert loaded.seed == 9
        np.testing.assert_array_equal(loaded.features, prepared.features)
        np.testing.assert_array_equal(loaded.labels, prepared.labels)
        for name in bd.SPLIT_NAMES:
            np.testing.assert_array_equal(loaded.split_indices[name],
                                          prepared.split_indices[name])
        assert loaded.reducer_provenance == prepared.reducer_provenance
        assert loaded.content_hash() == prepared.content_hash()

    def test_rejects_foreign_bytes(self, tmp_path):
        path = tmp_path / "junk.bpld"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(ValueError):
            bd.load_prepared(path)
