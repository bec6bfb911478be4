"""Dataset containers, the two on-disk formats, splits, and model files."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dadl.classify import predict
from dadl.data_io import (DATASET_MAGIC, MODEL_MAGIC, DomainDataset,
                          load_dataset, load_model, make_split, normalize_l1,
                          save_dataset, save_model)
from dadl.errors import DataError, DataFormatError, ModelFormatError
from dadl.synth import make_shift_benchmark
from dadl.trainer import Hyperparams, fit


def random_dataset(seed, n=7, N=12, classes=3):
    rng = np.random.default_rng(seed)
    return DomainDataset(rng.normal(size=(n, N)),
                         rng.integers(0, classes, size=N), "rand")


class TestDomainDataset:
    def test_arrays_are_coerced(self):
        ds = DomainDataset([[1, 2], [3, 4]], [0, 1], "d")
        assert ds.features.dtype == np.float64
        assert ds.labels.dtype == np.int64

    def test_one_dimensional_features_rejected(self):
        with pytest.raises(DataError):
            DomainDataset(np.ones(4), [0, 0, 0, 0])

    def test_label_count_mismatch_rejected(self):
        with pytest.raises(DataError):
            DomainDataset(np.ones((2, 3)), [0, 1])

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            DomainDataset([[np.nan, 1.0]], [0, 0])

    def test_negative_label_rejected(self):
        with pytest.raises(DataError):
            DomainDataset(np.ones((2, 2)), [0, -1])


class TestCsvFormat:
    def test_small_example(self, tmp_path):
        p = tmp_path / "two.csv"
        p.write_text("1.0,0.0,0\n0.0,1.0,1\n")
        ds = load_dataset(p)
        assert np.array_equal(ds.features, [[1.0, 0.0], [0.0, 1.0]])
        assert np.array_equal(ds.labels, [0, 1])
        assert ds.domain_name == "two"

    def test_blank_lines_and_float_valued_labels(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("\n0.5,2.0\n\n0.25,3.0\n")
        ds = load_dataset(p)
        assert np.array_equal(ds.labels, [2, 3])

    @pytest.mark.parametrize("seed", range(3))
    def test_round_trip_is_exact(self, tmp_path, seed):
        ds = random_dataset(seed)
        p = tmp_path / "r.csv"
        save_dataset(ds, p)
        back = load_dataset(p, domain_name="rand")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        # a second save of the loaded copy is byte-identical
        q = tmp_path / "r2.csv"
        save_dataset(back, q)
        assert q.read_bytes() == p.read_bytes()

    def test_jagged_rows_rejected_with_location(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1.0,2.0,0\n1.0,0\n")
        with pytest.raises(DataFormatError, match=r"bad\.csv:2"):
            load_dataset(p)

    def test_unparseable_number_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1.0,zap,0\n")
        with pytest.raises(DataFormatError, match=r":1"):
            load_dataset(p)

    def test_non_integer_label_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1.0,2.0,0.5\n")
        with pytest.raises(DataFormatError, match="not an integer"):
            load_dataset(p)

    def test_non_finite_value_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1.0,nan,0\n")
        with pytest.raises(DataFormatError, match="non-finite"):
            load_dataset(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("\n\n")
        with pytest.raises(DataFormatError, match="no samples"):
            load_dataset(p)

    def test_single_column_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("1.0\n")
        with pytest.raises(DataFormatError):
            load_dataset(p)


class TestPackedFormat:
    @pytest.mark.parametrize("seed", range(3))
    def test_round_trip_is_exact(self, tmp_path, seed):
        ds = random_dataset(seed)
        p = tmp_path / "r.dadl"
        save_dataset(ds, p, format="packed")
        back = load_dataset(p, domain_name="rand")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        q = tmp_path / "r2.dadl"
        save_dataset(back, q, format="packed")
        assert q.read_bytes() == p.read_bytes()

    def test_formats_agree(self, tmp_path):
        ds = random_dataset(5)
        save_dataset(ds, tmp_path / "a.csv")
        save_dataset(ds, tmp_path / "a.dadl", format="packed")
        a = load_dataset(tmp_path / "a.csv")
        b = load_dataset(tmp_path / "a.dadl")
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)

    def test_sniffing_by_magic(self, tmp_path):
        ds = random_dataset(6)
        p = tmp_path / "noext"
        save_dataset(ds, p, format="packed")
        assert load_dataset(p).features.shape == ds.features.shape
        assert p.read_bytes()[:5] == DATASET_MAGIC

    def test_truncated_rejected(self, tmp_path):
        ds = random_dataset(7)
        p = tmp_path / "r.dadl"
        save_dataset(ds, p, format="packed")
        p.write_bytes(p.read_bytes()[:-9])
        with pytest.raises(DataFormatError, match="truncated or padded"):
            load_dataset(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        ds = random_dataset(8)
        p = tmp_path / "r.dadl"
        save_dataset(ds, p, format="packed")
        p.write_bytes(p.read_bytes() + b"\x00" * 4)
        with pytest.raises(DataFormatError, match="truncated or padded"):
            load_dataset(p)

    def test_unsupported_label_width_rejected(self, tmp_path):
        p = tmp_path / "r.dadl"
        p.write_bytes(DATASET_MAGIC + struct.pack("<III", 1, 1, 4))
        with pytest.raises(DataFormatError, match="label width"):
            load_dataset(p, format="packed")

    def test_zero_samples_rejected(self, tmp_path):
        p = tmp_path / "r.dadl"
        p.write_bytes(DATASET_MAGIC + struct.pack("<III", 0, 3, 8))
        with pytest.raises(DataFormatError, match="empty"):
            load_dataset(p, format="packed")

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "r.dadl"
        p.write_bytes(b"XXXXX" + struct.pack("<III", 1, 1, 8) + b"\x00" * 16)
        with pytest.raises(DataFormatError):
            load_dataset(p, format="packed")

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            load_dataset(tmp_path / "nope.csv")

    def test_unknown_format_rejected(self, tmp_path):
        ds = random_dataset(9)
        with pytest.raises(DataFormatError, match="unknown dataset format"):
            save_dataset(ds, tmp_path / "x", format="xml")
        save_dataset(ds, tmp_path / "x")
        with pytest.raises(DataFormatError, match="unknown dataset format"):
            load_dataset(tmp_path / "x", format="xml")


class TestNormalizeL1:
    def test_example(self):
        X = np.array([[1.0, 3.0], [3.0, 1.0]])
        assert np.allclose(normalize_l1(X), [[0.25, 0.75], [0.75, 0.25]])

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            normalize_l1(np.array([[1.0], [-0.1]]))

    def test_zero_column_rejected(self):
        with pytest.raises(DataError, match="column 1"):
            normalize_l1(np.array([[1.0, 0.0], [1.0, 0.0]]))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_columns_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.random((5, 8)) + 1e-12
        Y = normalize_l1(X)
        assert np.allclose(Y.sum(axis=0), 1.0)
        # scaling is per-column: ratios within a column are preserved
        assert np.allclose(Y * X.sum(axis=0), X)


class TestMakeSplit:
    def _ds(self):
        rng = np.random.default_rng(0)
        labels = np.repeat([0, 1, 2], [6, 4, 5])
        return DomainDataset(rng.normal(size=(3, 15)), labels, "d")

    def test_partition_in_original_order(self):
        ds = self._ds()
        sel, rest = make_split(ds, 2, seed=3)
        assert sel.labels.size == 6 and rest.labels.size == 9
        for c in (0, 1, 2):
            assert np.sum(sel.labels == c) == 2
        merged = np.concatenate([sel.features, rest.features], axis=1)
        assert sorted(map(tuple, merged.T)) == sorted(map(tuple, ds.features.T))
        assert sel.domain_name == rest.domain_name == "d"

    def test_same_seed_is_deterministic(self):
        ds = self._ds()
        a = make_split(ds, 2, seed=5)
        b = make_split(ds, 2, seed=5)
        assert np.array_equal(a[0].features, b[0].features)
        assert np.array_equal(a[1].labels, b[1].labels)

    def test_selected_rows_come_from_source(self):
        ds = self._ds()
        sel, _ = make_split(ds, 3, seed=1)
        cols = {tuple(col) for col in ds.features.T}
        assert all(tuple(col) in cols for col in sel.features.T)

    def test_class_too_small_rejected(self):
        ds = self._ds()
        with pytest.raises(DataError, match="class 1"):
            make_split(ds, 5, seed=0)

    def test_empty_remainder_rejected(self):
        rng = np.random.default_rng(1)
        ds = DomainDataset(rng.normal(size=(2, 4)), [0, 0, 1, 1], "d")
        with pytest.raises(DataError, match="remainder"):
            make_split(ds, 2, seed=0)

    def test_nonpositive_count_rejected(self):
        with pytest.raises(DataError):
            make_split(self._ds(), 0, seed=0)


class TestModelFiles:
    def _model(self, seed=0):
        src, tgt = make_shift_benchmark(n_classes=2, src_per_class=8,
                                        tgt_per_class=6, dim=10, seed=seed)
        h = Hyperparams(n_dim=3, k_nn=2, t0=1, atoms_per_class=2,
                        outer_iters=2, seed=seed)
        return fit([src, tgt], h), tgt

    def test_round_trip_preserves_predictions(self, tmp_path):
        model, tgt = self._model()
        p = tmp_path / "m.dadlm"
        save_model(model, p)
        back = load_model(p)
        assert back.hyperparams == model.hyperparams
        assert back.domain_names == model.domain_names
        assert np.array_equal(back.classes, model.classes)
        assert np.array_equal(back.dictionary.atoms, model.dictionary.atoms)
        for j in range(tgt.features.shape[1]):
            a = predict(model, tgt.features[:, j], "target")
            b = predict(back, tgt.features[:, j], "target")
            assert a.label == b.label
            # memory layout changes across the round trip, so BLAS may
            # re-associate sums; values agree far below decision level
            assert a.residuals == pytest.approx(b.residuals, rel=1e-9, abs=1e-12)

    def test_save_is_deterministic(self, tmp_path):
        model, _ = self._model(1)
        save_model(model, tmp_path / "a")
        save_model(model, tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
        assert (tmp_path / "a").read_bytes()[:6] == MODEL_MAGIC

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "m"
        p.write_bytes(b"NOTMDL" + b"\x00" * 32)
        with pytest.raises(ModelFormatError, match="not a"):
            load_model(p)

    def test_version_mismatch_rejected(self, tmp_path):
        model, _ = self._model(2)
        p = tmp_path / "m"
        save_model(model, p)
        raw = bytearray(p.read_bytes())
        raw[6:10] = struct.pack("<I", 99)
        p.write_bytes(bytes(raw))
        with pytest.raises(ModelFormatError, match="version 99"):
            load_model(p)

    def test_corrupt_header_rejected(self, tmp_path):
        model, _ = self._model(3)
        p = tmp_path / "m"
        save_model(model, p)
        raw = bytearray(p.read_bytes())
        _, header_len = struct.unpack_from("<II", raw, 6)
        raw[14:14 + header_len] = b"\xff" * header_len
        p.write_bytes(bytes(raw))
        with pytest.raises(ModelFormatError, match="header"):
            load_model(p)

    def test_truncation_rejected(self, tmp_path):
        model, _ = self._model(4)
        p = tmp_path / "m"
        save_model(model, p)
        p.write_bytes(p.read_bytes()[:-16])
        with pytest.raises(ModelFormatError, match="truncated"):
            load_model(p)

    def test_trailing_bytes_rejected(self, tmp_path):
        model, _ = self._model(5)
        p = tmp_path / "m"
        save_model(model, p)
        p.write_bytes(p.read_bytes() + b"\x01\x02")
        with pytest.raises(ModelFormatError, match="trailing"):
            load_model(p)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ModelFormatError, match="not found"):
            load_model(tmp_path / "ghost.dadlm")
