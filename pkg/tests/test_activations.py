import struct

import numpy as np
import pytest

import moepatterns as mp
from moepatterns.activations import MOEACT_MAGIC, MOEACT_VERSION
from moepatterns.errors import (
    BadMagicError,
    FormatError,
    InvalidValueError,
    ShapeError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

from conftest import random_tensor


def token_tensor(values, counts, m, n):
    return mp.ActivationTensor(
        granularity="token",
        num_samples=len(counts),
        num_layers=m,
        num_experts_per_layer=n,
        values=np.asarray(values, dtype=np.float32),
        token_counts=np.asarray(counts, dtype=np.uint32),
    )


class TestAggregateTokens:
    def test_sums_token_weights(self):
        # one sample, two tokens, one layer, two experts
        t = token_tensor([[[0.7, 0.3]], [[0.2, 0.8]]], [2], m=1, n=2)
        out = mp.aggregate_tokens(t)
        assert out.granularity == "sentence"
        np.testing.assert_allclose(out.values[0, 0], [0.9, 1.1], rtol=1e-6)
        assert out.num_samples == 1 and out.num_layers == 1

    def test_zero_tokens_stay_zero(self):
        t = token_tensor(np.zeros((3, 2, 2)), [1, 2], m=2, n=2)
        out = mp.aggregate_tokens(t)
        assert (out.values == 0).all()

    def test_single_token_is_identity(self):
        vals = np.array([[[0.4, 0.6]], [[0.1, 0.2]]], dtype=np.float32)
        t = token_tensor(vals, [1, 1], m=1, n=2)
        out = mp.aggregate_tokens(t)
        np.testing.assert_array_equal(out.values, vals)

    def test_rejects_sentence_input(self):
        s = random_tensor(np.random.default_rng(0), "sentence")
        with pytest.raises(InvalidValueError):
            mp.aggregate_tokens(s)

    def test_count_value_mismatch_is_format_error(self):
        with pytest.raises(ShapeError):
            token_tensor(np.zeros((3, 1, 2)), [1, 1], m=1, n=2)

    def test_output_bounded_by_token_count(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            t = random_tensor(rng, "token")
            if t.num_samples == 0:
                continue
            out = mp.aggregate_tokens(t)
            bound = out.token_counts.astype(np.float64) * (1 + 1e-5)
            assert (out.values.max(axis=(1, 2)) <= bound).all()


class TestFlatten:
    def test_row_order_is_layer_major(self):
        vals = np.array([[[0.5, 0.5], [1.0, 0.0]]], dtype=np.float32)
        t = mp.ActivationTensor("sentence", 1, 2, 2, vals)
        x = mp.flatten_to_matrix(t)
        np.testing.assert_allclose(x.data[:, 0], [0.5, 0.5, 1.0, 0.0])
        assert x.layout.pair_of(2) == (1, 0)

    def test_empty_sample_axis(self):
        t = mp.ActivationTensor("sentence", 0, 2, 3, np.zeros((0, 2, 3)))
        x = mp.flatten_to_matrix(t)
        assert x.data.shape == (6, 0)
        assert x.num_experts == 6

    def test_normalize_divides_by_token_count(self):
        t = mp.ActivationTensor(
            "sentence", 1, 2, 2, np.array([[[2.0, 2.0], [0.0, 0.0]]]), token_counts=[4]
        )
        x = mp.flatten_to_matrix(t, normalize=True)
        np.testing.assert_allclose(x.data[:, 0], [0.5, 0.5, 0.0, 0.0])

    def test_normalize_without_counts_fails(self):
        t = mp.ActivationTensor("sentence", 1, 1, 2, np.ones((1, 1, 2)))
        with pytest.raises(InvalidValueError):
            mp.flatten_to_matrix(t, normalize=True)

    def test_total_mass_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = random_tensor(rng, "sentence")
            x = mp.flatten_to_matrix(t)
            np.testing.assert_allclose(
                x.data.sum(), float(t.values.astype(np.float64).sum()), rtol=1e-6
            )

    def test_layout_bijection_round_trips(self):
        layout = mp.ExpertLayout(5, 7)
        for j in range(5):
            for k in range(7):
                assert layout.pair_of(layout.row_of(j, k)) == (j, k)
        for row in range(35):
            j, k = layout.pair_of(row)
            assert layout.row_of(j, k) == row


class TestTensorValidation:
    def test_rejects_negative(self):
        with pytest.raises(InvalidValueError):
            mp.ActivationTensor("sentence", 1, 1, 2, [[[-0.1, 0.2]]])

    def test_rejects_nan(self):
        with pytest.raises(InvalidValueError):
            mp.ActivationTensor("sentence", 1, 1, 2, [[[np.nan, 0.2]]])

    def test_rejects_token_sum_above_one(self):
        with pytest.raises(InvalidValueError):
            token_tensor([[[0.8, 0.4]]], [1], m=1, n=2)

    def test_allows_exact_top_k_sum(self):
        t = token_tensor([[[0.75, 0.25]]], [1], m=1, n=2)
        assert t.values.sum() == pytest.approx(1.0)

    def test_values_are_immutable(self):
        t = mp.ActivationTensor("sentence", 1, 1, 2, [[[0.1, 0.2]]])
        with pytest.raises(ValueError):
            t.values[0, 0, 0] = 5.0


class TestMoeactRoundTrip:
    @pytest.mark.parametrize("granularity", ["sentence", "token"])
    def test_payload_bit_exact(self, tmp_path, granularity):
        rng = np.random.default_rng(11)
        for i in range(50):
            t = random_tensor(rng, granularity)
            path = tmp_path / f"{granularity}_{i}.moeact"
            mp.write_moeact(t, path)
            back = mp.read_moeact(path)
            assert back.granularity == t.granularity
            assert back.num_samples == t.num_samples
            assert back.num_layers == t.num_layers
            assert back.num_experts_per_layer == t.num_experts_per_layer
            assert back.values.tobytes() == t.values.tobytes()
            if granularity == "token":
                np.testing.assert_array_equal(back.token_counts, t.token_counts)

    def test_write_read_write_identical_bytes(self, tmp_path):
        t = random_tensor(np.random.default_rng(5), "token")
        a, b = tmp_path / "a.moeact", tmp_path / "b.moeact"
        mp.write_moeact(t, a)
        mp.write_moeact(mp.read_moeact(a), b)
        assert a.read_bytes() == b.read_bytes()


class TestMoeactRejects:
    def _valid_bytes(self):
        t = mp.ActivationTensor("sentence", 2, 1, 2, np.ones((2, 1, 2), dtype=np.float32))
        header = struct.pack("<4sIB3xIII", MOEACT_MAGIC, MOEACT_VERSION, 0, 2, 1, 2)
        return header + t.values.astype("<f4").tobytes()

    def test_bad_magic(self, tmp_path):
        blob = b"XXXX" + self._valid_bytes()[4:]
        path = tmp_path / "bad.moeact"
        path.write_bytes(blob)
        with pytest.raises(BadMagicError):
            mp.read_moeact(path)

    def test_unsupported_version(self, tmp_path):
        blob = self._valid_bytes()
        blob = blob[:4] + struct.pack("<I", 9) + blob[8:]
        path = tmp_path / "v9.moeact"
        path.write_bytes(blob)
        with pytest.raises(UnsupportedVersionError):
            mp.read_moeact(path)

    def test_truncated_payload(self, tmp_path):
        blob = self._valid_bytes()
        path = tmp_path / "short.moeact"
        path.write_bytes(blob[:-5])
        with pytest.raises(TruncatedPayloadError):
            mp.read_moeact(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "long.moeact"
        path.write_bytes(self._valid_bytes() + b"zz")
        with pytest.raises(FormatError):
            mp.read_moeact(path)

    def test_negative_values_rejected(self, tmp_path):
        blob = self._valid_bytes()
        payload = np.frombuffer(blob[24:], dtype="<f4").copy()
        payload[1] = -1.0
        path = tmp_path / "neg.moeact"
        path.write_bytes(blob[:24] + payload.tobytes())
        with pytest.raises(InvalidValueError):
            mp.read_moeact(path)

    def test_nan_values_rejected(self, tmp_path):
        blob = self._valid_bytes()
        payload = np.frombuffer(blob[24:], dtype="<f4").copy()
        payload[0] = np.nan
        path = tmp_path / "nan.moeact"
        path.write_bytes(blob[:24] + payload.tobytes())
        with pytest.raises(InvalidValueError):
            mp.read_moeact(path)


class TestLabels:
    def test_round_trip(self, tmp_path):
        labels = mp.DomainLabels(("math", "law", "math"))
        path = tmp_path / "labels.jsonl"
        mp.write_labels(labels, path)
        back = mp.read_labels(path, num_samples=3)
        assert back.labels == labels.labels
        assert back.label_set == ("law", "math")

    def test_missing_sample_rejected(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"sample": 0, "domain": "a"}\n{"sample": 2, "domain": "b"}\n')
        with pytest.raises(FormatError):
            mp.read_labels(path, num_samples=3)

    def test_duplicate_sample_rejected(self, tmp_path):
        path = tmp_path / "labels.jsonl"
        path.write_text('{"sample": 0, "domain": "a"}\n{"sample": 0, "domain": "b"}\n')
        with pytest.raises(FormatError):
            mp.read_labels(path)
