"""Per-packet sequential features.

Nine statistics per byte sequence, all in [0, 1]: five p-values from the
NIST SP 800-22 randomness suite with parameters fixed for short streams
(block frequency M=8, longest-run-of-ones 8-bit blocks, serial m=3,
approximate entropy m=3, forward cumulative sums), byte-level Shannon
entropy normalized by 8 bits, and three statistics over the lowercase hex
rendering of the bytes.

Scalar functions operate on one bit array; `featurize_batch` is the
vectorized equivalent used on whole captures and agrees with the scalar
path to float64 round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.special import gammaincc, ndtr

from .types import Bitstream

# Longest-run bucket probabilities for 8-bit blocks (K=3: runs <=1, 2, 3, >=4).
_LONGRUN_PI = np.array([0.21484375, 0.3671875, 0.23046875, 0.1875])

_POPCOUNT8 = np.array([bin(v).count("1") for v in range(256)], dtype=np.int64)


def _longest_ones_run(bits) -> int:
    best = 0
    run = 0
    for b in bits:
        if b:
            run += 1
            if run > best:
                best = run
        else:
            run = 0
    return best


_LONGRUN8 = np.array(
    [_longest_ones_run([(v >> (7 - i)) & 1 for i in range(8)]) for v in range(256)],
    dtype=np.int64,
)


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size == 0:
        raise ValueError("empty bit sequence")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("bit sequence must contain only 0 and 1")
    return arr


def block_frequency_pvalue(bits, block_size: int = 8) -> float:
    """Chi-square on per-block one-proportions; trailing partial block dropped."""
    arr = _as_bits(bits)
    if block_size < 8:
        raise ValueError("block_size must be >= 8")
    n_blocks = arr.size // block_size
    if n_blocks < 1:
        raise ValueError(f"need at least {block_size} bits, got {arr.size}")
    blocks = arr[: n_blocks * block_size].reshape(n_blocks, block_size)
    pi = blocks.sum(axis=1) / block_size
    chi2 = 4.0 * block_size * float(np.sum((pi - 0.5) ** 2))
    return float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


def longest_run_pvalue(bits) -> float:
    """Longest run of ones per 8-bit block, binned into 4 run-length buckets."""
    arr = _as_bits(bits)
    if arr.size < 128:
        raise ValueError(f"need at least 128 bits, got {arr.size}")
    n_blocks = arr.size // 8
    blocks = arr[: n_blocks * 8].reshape(n_blocks, 8)
    nu = np.zeros(4, dtype=np.int64)
    for block in blocks:
        run = _longest_ones_run(block)
        nu[min(max(run, 1), 4) - 1] += 1
    expected = n_blocks * _LONGRUN_PI
    chi2 = float(np.sum((nu - expected) ** 2 / expected))
    return float(gammaincc(3 / 2.0, chi2 / 2.0))


def _psi_squared(arr: np.ndarray, m: int) -> float:
    """Sum-of-squared pattern counts statistic with wrap-around windows."""
    if m <= 0:
        return 0.0
    n = arr.size
    ext = np.concatenate([arr, arr[: m - 1]]) if m > 1 else arr
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = codes * 2 + ext[j : j + n]
    counts = np.bincount(codes, minlength=2**m)
    return float((2**m / n) * np.sum(counts.astype(np.float64) ** 2) - n)


def serial_pvalue(bits, m: int = 3) -> float:
    """First serial-test p-value (difference of psi-square statistics)."""
    arr = _as_bits(bits)
    if m < 2:
        raise ValueError("m must be >= 2")
    if arr.size < 2 ** (m + 1):
        raise ValueError(f"need at least {2 ** (m + 1)} bits for m={m}, got {arr.size}")
    delta = max(_psi_squared(arr, m) - _psi_squared(arr, m - 1), 0.0)
    return float(gammaincc(2 ** (m - 1) / 2.0, delta / 2.0))


def _phi(arr: np.ndarray, m: int) -> float:
    n = arr.size
    ext = np.concatenate([arr, arr[: m - 1]]) if m > 1 else arr
    codes = np.zeros(n, dtype=np.int64)
    for j in range(m):
        codes = codes * 2 + ext[j : j + n]
    counts = np.bincount(codes, minlength=2**m).astype(np.float64)
    c = counts[counts > 0] / n
    return float(np.sum(c * np.log(c)))


def approx_entropy_pvalue(bits, m: int = 3) -> float:
    """ApEn(m) = phi(m) - phi(m+1) against the ln(2) ideal."""
    arr = _as_bits(bits)
    if m < 1:
        raise ValueError("m must be >= 1")
    if arr.size < 2 ** (m + 1):
        raise ValueError(f"need at least {2 ** (m + 1)} bits for m={m}, got {arr.size}")
    apen = _phi(arr, m) - _phi(arr, m + 1)
    chi2 = max(2.0 * arr.size * (math.log(2.0) - apen), 0.0)
    return float(gammaincc(2 ** (m - 1), chi2 / 2.0))


def _trunc_div(a: int, b: int) -> int:
    """Integer division truncating toward zero (C semantics)."""
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _cusum_pvalue_from_z(z: int, n: int) -> float:
    sqrt_n = math.sqrt(n)
    ratio = n // z
    sum1 = 0.0
    for k in range(_trunc_div(-ratio + 1, 4), _trunc_div(ratio - 1, 4) + 1):
        sum1 += float(ndtr((4 * k + 1) * z / sqrt_n))
        sum1 -= float(ndtr((4 * k - 1) * z / sqrt_n))
    sum2 = 0.0
    for k in range(_trunc_div(-ratio - 3, 4), _trunc_div(ratio - 1, 4) + 1):
        sum2 += float(ndtr((4 * k + 3) * z / sqrt_n))
        sum2 -= float(ndtr((4 * k + 1) * z / sqrt_n))
    return min(max(1.0 - sum1 + sum2, 0.0), 1.0)


def cusum_pvalue(bits) -> float:
    """Forward cumulative-sums test: max excursion of the +/-1 random walk."""
    arr = _as_bits(bits)
    if arr.size < 2:
        raise ValueError("need at least 2 bits")
    walk = np.cumsum(2 * arr - 1)
    z = int(np.max(np.abs(walk)))
    return _cusum_pvalue_from_z(z, arr.size)


@lru_cache(maxsize=8)
def _cusum_table(n: int) -> np.ndarray:
    """p-value lookup by max excursion z = 1..n (z=0 impossible)."""
    table = np.zeros(n + 1)
    table[0] = 1.0
    for z in range(1, n + 1):
        table[z] = _cusum_pvalue_from_z(z, n)
    return table


def shannon_entropy(data: bytes) -> float:
    """Byte-histogram entropy normalized by the 8-bit maximum."""
    if len(data) == 0:
        raise ValueError("empty byte sequence")
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    h = float(-np.sum(p * np.log2(p)))
    return min(max(h / 8.0, 0.0), 1.0)


def hex_stats(data: bytes) -> Tuple[float, float, float]:
    """(distinct-alnum ratio, distinct-letter ratio, longest-run ratio) over hex(data)."""
    if len(data) == 0:
        raise ValueError("empty byte sequence")
    h = data.hex()
    length = len(h)
    distinct = set(h)
    alnum_ratio = len(distinct) / length
    letter_ratio = sum(1 for c in distinct if c in "abcdef") / length
    best = run = 1
    for i in range(1, length):
        run = run + 1 if h[i] == h[i - 1] else 1
        if run > best:
            best = run
    return alnum_ratio, letter_ratio, best / length


@dataclass
class SequentialFeatures:
    p_block_freq: float
    p_longest_run: float
    p_serial: float
    p_approx_entropy: float
    p_cusum: float
    shannon: float
    hex_alnum_ratio: float
    hex_letter_ratio: float
    hex_longest_run_ratio: float

    FIELDS = (
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

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in self.FIELDS], dtype=np.float64)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "SequentialFeatures":
        return cls(**{f: float(d[f]) for f in cls.FIELDS})

    @classmethod
    def from_array(cls, a) -> "SequentialFeatures":
        return cls(*(float(x) for x in a))


def featurize(source: Union[Bitstream, bytes]) -> SequentialFeatures:
    """Compute all nine features for one extracted byte sequence."""
    data = source.data if isinstance(source, Bitstream) else bytes(source)
    if len(data) < 16:
        raise ValueError(f"need at least 16 bytes, got {len(data)}")
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    alnum, letters, hex_run = hex_stats(data)
    return SequentialFeatures(
        p_block_freq=block_frequency_pvalue(bits),
        p_longest_run=longest_run_pvalue(bits),
        p_serial=serial_pvalue(bits),
        p_approx_entropy=approx_entropy_pvalue(bits),
        p_cusum=cusum_pvalue(bits),
        shannon=shannon_entropy(data),
        hex_alnum_ratio=alnum,
        hex_letter_ratio=letters,
        hex_longest_run_ratio=hex_run,
    )


def _pattern_counts(bits: np.ndarray, m: int) -> np.ndarray:
    """Per-row wrap-around m-bit pattern counts; bits is (rows, n) uint8."""
    rows, n = bits.shape
    ext = np.concatenate([bits, bits[:, : m - 1]], axis=1) if m > 1 else bits
    codes = np.zeros((rows, n), dtype=np.int64)
    for j in range(m):
        codes = codes * 2 + ext[:, j : j + n]
    offsets = (np.arange(rows, dtype=np.int64) * (2**m))[:, None]
    flat = (codes + offsets).ravel()
    return np.bincount(flat, minlength=rows * 2**m).reshape(rows, 2**m).astype(np.float64)


def _phi_rows(counts: np.ndarray, n: int) -> np.ndarray:
    c = counts / n
    terms = np.where(counts > 0, c * np.log(np.where(counts > 0, c, 1.0)), 0.0)
    return terms.sum(axis=1)


def featurize_batch(data: np.ndarray, chunk_rows: int = 32768) -> np.ndarray:
    """Vectorized featurize over a (rows, n_bytes) uint8 matrix -> (rows, 9)."""
    data = np.ascontiguousarray(data, dtype=np.uint8)
    if data.ndim != 2:
        raise ValueError("expected a 2-D byte matrix")
    rows, n_bytes = data.shape
    if n_bytes < 16:
        raise ValueError(f"need at least 16 bytes per row, got {n_bytes}")
    out = np.empty((rows, 9), dtype=np.float64)
    for start in range(0, rows, chunk_rows):
        block = data[start : start + chunk_rows]
        out[start : start + block.shape[0]] = _featurize_chunk(block)
    return out


def _featurize_chunk(data: np.ndarray) -> np.ndarray:
    rows, n_bytes = data.shape
    n = n_bytes * 8
    bits = np.unpackbits(data, axis=1)

    # Block frequency, one 8-bit block per byte.
    pi = _POPCOUNT8[data] / 8.0
    chi2_bf = 32.0 * ((pi - 0.5) ** 2).sum(axis=1)
    p_bf = gammaincc(n_bytes / 2.0, chi2_bf / 2.0)

    # Longest run of ones per byte, bucketed.
    runs = np.clip(_LONGRUN8[data], 1, 4)
    expected = n_bytes * _LONGRUN_PI
    nu = np.stack([(runs == c).sum(axis=1) for c in (1, 2, 3, 4)], axis=1)
    chi2_lr = ((nu - expected) ** 2 / expected).sum(axis=1)
    p_lr = gammaincc(1.5, chi2_lr / 2.0)

    # Serial (m=3) and approximate entropy (m=3) share pattern counts.
    counts2 = _pattern_counts(bits, 2)
    counts3 = _pattern_counts(bits, 3)
    counts4 = _pattern_counts(bits, 4)
    psi2 = (4.0 / n) * (counts2**2).sum(axis=1) - n
    psi3 = (8.0 / n) * (counts3**2).sum(axis=1) - n
    p_serial = gammaincc(2.0, np.maximum(psi3 - psi2, 0.0) / 2.0)

    apen = _phi_rows(counts3, n) - _phi_rows(counts4, n)
    chi2_ae = np.maximum(2.0 * n * (math.log(2.0) - apen), 0.0)
    p_ae = gammaincc(4.0, chi2_ae / 2.0)

    # Cumulative sums via a per-length lookup over max excursions.
    walk = np.cumsum(2 * bits.astype(np.int64) - 1, axis=1)
    z = np.abs(walk).max(axis=1)
    p_cs = _cusum_table(n)[z]

    # Shannon entropy over byte values.
    offsets = (np.arange(rows, dtype=np.int64) * 256)[:, None]
    byte_counts = np.bincount(
        (data.astype(np.int64) + offsets).ravel(), minlength=rows * 256
    ).reshape(rows, 256)
    pb = byte_counts / n_bytes
    h = -np.where(byte_counts > 0, pb * np.log2(np.where(byte_counts > 0, pb, 1.0)), 0.0).sum(axis=1)
    shannon = np.clip(h / 8.0, 0.0, 1.0)

    # Hex statistics over interleaved nibbles.
    nibbles = np.empty((rows, 2 * n_bytes), dtype=np.int64)
    nibbles[:, 0::2] = data >> 4
    nibbles[:, 1::2] = data & 0x0F
    hex_len = 2 * n_bytes
    nib_counts = np.bincount(
        (nibbles + (np.arange(rows, dtype=np.int64) * 16)[:, None]).ravel(),
        minlength=rows * 16,
    ).reshape(rows, 16)
    alnum = (nib_counts > 0).sum(axis=1) / hex_len
    letters = (nib_counts[:, 10:] > 0).sum(axis=1) / hex_len
    run = np.ones(rows, dtype=np.int64)
    best = np.ones(rows, dtype=np.int64)
    for j in range(1, hex_len):
        run = np.where(nibbles[:, j] == nibbles[:, j - 1], run + 1, 1)
        np.maximum(best, run, out=best)
    hex_run = best / hex_len

    return np.stack(
        [p_bf, p_lr, p_serial, p_ae, p_cs, shannon, alnum, letters, hex_run], axis=1
    )
