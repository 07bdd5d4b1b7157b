"""Feature computation: worked examples, ranges, symmetries, batch parity."""
import math

import numpy as np
import pytest
from scipy.special import gammaincc

from tunneldetect.features import (
    SequentialFeatures,
    approx_entropy_pvalue,
    block_frequency_pvalue,
    cusum_pvalue,
    featurize,
    featurize_batch,
    hex_stats,
    longest_run_pvalue,
    serial_pvalue,
    shannon_entropy,
)
from tunneldetect.types import Bitstream, ConnectionKey


def bits_of(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


class TestWorkedExamples:
    def test_block_frequency_all_ones(self):
        # every block proportion is 1 -> chi2 = 4*8*52*(1/2)^2 = 416
        p = block_frequency_pvalue(bits_of(bytes([0xFF] * 52)), 8)
        assert p == pytest.approx(float(gammaincc(26, 208)), abs=1e-12)
        assert p < 1e-10

    def test_block_frequency_alternating_is_one(self):
        assert block_frequency_pvalue(bits_of(bytes([0x55] * 52)), 8) == 1.0

    def test_cusum_alternating_excursion_one(self):
        bits = bits_of(bytes([0x55] * 52))
        walk = np.cumsum(2 * bits.astype(int) - 1)
        assert int(np.abs(walk).max()) == 1
        assert cusum_pvalue(bits) == pytest.approx(1.0, abs=1e-6)

    def test_serial_alternating_degenerate(self):
        # only two 3-bit patterns occur
        assert serial_pvalue(bits_of(bytes([0x55] * 52)), 3) < 1e-10

    def test_approx_entropy_all_zero(self):
        bits = bits_of(bytes(52))
        expected = float(gammaincc(4, 416 * math.log(2.0) / 2.0))
        assert approx_entropy_pvalue(bits, 3) == pytest.approx(expected, abs=1e-12)

    def test_shannon_examples(self):
        assert shannon_entropy(bytes(range(52))) == pytest.approx(math.log2(52) / 8)
        assert shannon_entropy(bytes(26) + bytes([0xFF] * 26)) == pytest.approx(0.125)
        assert shannon_entropy(bytes([7] * 52)) == 0.0

    def test_hex_stats_examples(self):
        assert hex_stats(bytes([0x01, 0x23])) == pytest.approx((1.0, 0.0, 0.25))
        assert hex_stats(bytes([0xAB, 0xBA])) == pytest.approx((0.5, 0.5, 0.5))
        alnum, letters, run = hex_stats(bytes([0xAA] * 52))
        assert alnum == pytest.approx(1 / 104)
        assert letters == pytest.approx(1 / 104)
        assert run == 1.0


class TestPreconditions:
    def test_block_size_floor(self):
        with pytest.raises(ValueError):
            block_frequency_pvalue([0, 1] * 32, block_size=4)

    def test_longest_run_needs_128_bits(self):
        with pytest.raises(ValueError):
            longest_run_pvalue([0, 1] * 32)

    def test_serial_m_floor(self):
        with pytest.raises(ValueError):
            serial_pvalue([0, 1] * 32, m=1)

    def test_serial_length_floor(self):
        with pytest.raises(ValueError):
            serial_pvalue([0, 1] * 4, m=3)

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            cusum_pvalue([0, 1, 2, 1])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            shannon_entropy(b"")
        with pytest.raises(ValueError):
            hex_stats(b"")
        with pytest.raises(ValueError):
            featurize(b"short")


class TestProperties:
    def _random_matrix(self, rows: int, n_bytes: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return rng.integers(0, 256, size=(rows, n_bytes), dtype=np.uint8)

    def test_all_features_in_unit_interval(self):
        matrix = self._random_matrix(300, 52, seed=11)
        feats = featurize_batch(matrix)
        assert np.isfinite(feats).all()
        assert (feats >= 0.0).all() and (feats <= 1.0).all()
        # degenerate rows too
        for data in (bytes(52), bytes([0xFF] * 52), bytes([0x55] * 52), bytes(range(52))):
            arr = featurize(data).as_array()
            assert np.isfinite(arr).all()
            assert (arr >= 0.0).all() and (arr <= 1.0).all()

    def test_batch_matches_scalar(self):
        for n_bytes in (52, 44):
            matrix = self._random_matrix(200, n_bytes, seed=n_bytes)
            batch = featurize_batch(matrix, chunk_rows=64)
            scalar = np.stack([featurize(bytes(row)).as_array() for row in matrix])
            np.testing.assert_allclose(batch, scalar, atol=1e-12)

    def test_complement_invariance(self):
        # all tests except longest-run are symmetric under bit complement
        matrix = self._random_matrix(50, 52, seed=3)
        for row in matrix:
            bits = bits_of(bytes(row))
            comp = 1 - bits
            assert block_frequency_pvalue(bits) == pytest.approx(
                block_frequency_pvalue(comp), abs=1e-12
            )
            assert serial_pvalue(bits) == pytest.approx(serial_pvalue(comp), abs=1e-12)
            assert approx_entropy_pvalue(bits) == pytest.approx(
                approx_entropy_pvalue(comp), abs=1e-12
            )
            assert cusum_pvalue(bits) == pytest.approx(cusum_pvalue(comp), abs=1e-12)

    def test_shannon_invariant_under_value_relabeling(self):
        rng = np.random.default_rng(5)
        data = rng.integers(0, 256, 52, dtype=np.uint8)
        perm = rng.permutation(256).astype(np.uint8)
        assert shannon_entropy(bytes(data)) == pytest.approx(
            shannon_entropy(bytes(perm[data])), abs=1e-12
        )


class TestFeaturize:
    def test_featurize_bitstream_object(self):
        key = ConnectionKey("udp", "10.0.0.1", 5353, "10.0.0.2", 53)
        bs = Bitstream(data=bytes(range(52)), key=key, light_label=["DNS"])
        feats = featurize(bs)
        assert isinstance(feats, SequentialFeatures)
        assert feats.shannon == pytest.approx(math.log2(52) / 8)

    def test_round_trip_dict(self):
        feats = featurize(bytes(range(44)))
        again = SequentialFeatures.from_dict(feats.to_dict())
        np.testing.assert_allclose(again.as_array(), feats.as_array())

    def test_field_order_stable(self):
        assert SequentialFeatures.FIELDS == (
            "p_block_freq",
            "p_longest_run",
            "p_serial",
            "p_approx_entropy",
            "p_cusum",
            "shannon",
            "hex_alnum_ratio",
            "hex_letter_ratio",
            "hex_longest_run_ratio",
        )
