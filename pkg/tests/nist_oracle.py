"""Independent reference implementations of the five randomness tests.

Straight-line transliterations of the NIST SP 800-22 statistical test suite
algorithms (block frequency, longest run of ones in 8-bit blocks, serial,
approximate entropy, forward cumulative sums), written with plain Python
loops and mpmath special functions so they share no code or numerics with
the library's vectorized implementations.

Running this module as a script regenerates tests/data/nist_vectors.json,
the committed vectors with frozen expected p-values.

The small worked examples published in the SP 800-22 document itself are
used as anchors in test_nist_oracle.py to validate these references.
"""
from __future__ import annotations

import json
import math
import sys
import zlib
from pathlib import Path

import mpmath

mpmath.mp.dps = 50

DATA_PATH = Path(__file__).parent / "data" / "nist_vectors.json"


def _igamc(a: float, x: float) -> float:
    if x <= 0:
        return 1.0
    return float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))


def _ncdf(x: float) -> float:
    return float(0.5 * mpmath.erfc(-x / mpmath.sqrt(2)))


def bits_of(data: bytes) -> list:
    out = []
    for byte in data:
        for i in range(8):
            out.append((byte >> (7 - i)) & 1)
    return out


def oracle_block_frequency(bits, block_size: int) -> float:
    n_blocks = len(bits) // block_size
    chi2 = 0.0
    for i in range(n_blocks):
        block = bits[i * block_size : (i + 1) * block_size]
        pi = sum(block) / block_size
        chi2 += (pi - 0.5) ** 2
    chi2 *= 4.0 * block_size
    return _igamc(n_blocks / 2.0, chi2 / 2.0)


def oracle_longest_run(bits) -> float:
    # Parameters for the shortest-stream row: 8-bit blocks, buckets <=1,2,3,>=4.
    pi = [0.21484375, 0.3671875, 0.23046875, 0.1875]
    n_blocks = len(bits) // 8
    nu = [0, 0, 0, 0]
    for i in range(n_blocks):
        block = bits[i * 8 : (i + 1) * 8]
        best = run = 0
        for b in block:
            run = run + 1 if b else 0
            best = max(best, run)
        nu[min(max(best, 1), 4) - 1] += 1
    chi2 = sum((nu[k] - n_blocks * pi[k]) ** 2 / (n_blocks * pi[k]) for k in range(4))
    return _igamc(3 / 2.0, chi2 / 2.0)


def _psi_sq(bits, m: int) -> float:
    if m <= 0:
        return 0.0
    n = len(bits)
    counts = {}
    for i in range(n):
        pattern = tuple(bits[(i + j) % n] for j in range(m))
        counts[pattern] = counts.get(pattern, 0) + 1
    return (2**m / n) * sum(c * c for c in counts.values()) - n


def oracle_serial(bits, m: int = 3) -> float:
    delta = _psi_sq(bits, m) - _psi_sq(bits, m - 1)
    return _igamc(2 ** (m - 1) / 2.0, max(delta, 0.0) / 2.0)


def _phi(bits, m: int) -> float:
    n = len(bits)
    counts = {}
    for i in range(n):
        pattern = tuple(bits[(i + j) % n] for j in range(m))
        counts[pattern] = counts.get(pattern, 0) + 1
    total = 0.0
    for c in counts.values():
        frac = c / n
        total += frac * math.log(frac)
    return total


def oracle_approx_entropy(bits, m: int = 3) -> float:
    apen = _phi(bits, m) - _phi(bits, m + 1)
    chi2 = max(2.0 * len(bits) * (math.log(2.0) - apen), 0.0)
    return _igamc(2 ** (m - 1), chi2 / 2.0)


def _trunc(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def oracle_cusum(bits) -> float:
    n = len(bits)
    s = 0
    z = 0
    for b in bits:
        s += 1 if b else -1
        z = max(z, abs(s))
    ratio = n // z
    sqrt_n = math.sqrt(n)
    sum1 = 0.0
    for k in range(_trunc(-ratio + 1, 4), _trunc(ratio - 1, 4) + 1):
        sum1 += _ncdf((4 * k + 1) * z / sqrt_n) - _ncdf((4 * k - 1) * z / sqrt_n)
    sum2 = 0.0
    for k in range(_trunc(-ratio - 3, 4), _trunc(ratio - 1, 4) + 1):
        sum2 += _ncdf((4 * k + 3) * z / sqrt_n) - _ncdf((4 * k + 1) * z / sqrt_n)
    return min(max(1.0 - sum1 + sum2, 0.0), 1.0)


def oracle_all(data: bytes) -> dict:
    bits = bits_of(data)
    return {
        "p_block_freq": oracle_block_frequency(bits, 8),
        "p_longest_run": oracle_longest_run(bits),
        "p_serial": oracle_serial(bits, 3),
        "p_approx_entropy": oracle_approx_entropy(bits, 3),
        "p_cusum": oracle_cusum(bits),
    }


def committed_vectors() -> list:
    """The 20 committed byte vectors: degenerate, structured, and seeded random."""
    import numpy as np

    vectors = [
        ("all-zero-52", bytes(52)),
        ("all-one-52", bytes([0xFF] * 52)),
        ("alternating-01-52", bytes([0x55] * 52)),
        ("alternating-10-52", bytes([0xAA] * 52)),
        ("nibble-alternating-52", bytes([0x33] * 52)),
        ("halves-52", bytes([0xF0] * 52)),
        ("ascending-bytes-52", bytes(range(52))),
        ("ascii-text-52", b"GET /index.html HTTP/1.1 Host: files.example.com:523"),
        ("single-one-52", bytes([0x80]) + bytes(51)),
        ("run3-per-byte-52", bytes([0b11100000] * 52)),
        (
            "deflate-prefix-52",
            zlib.compress(
                b"Across the network the collector wrote flow summaries, retry counts, "
                b"and cache hit ratios to the archive volume every thirty seconds."
            )[:52],
        ),
        ("base32-alphabet-52", (b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567" * 2)[:52]),
    ]
    for seed in range(1, 7):
        rng = np.random.default_rng(seed)
        vectors.append((f"pcg64-seed{seed}-52", bytes(rng.integers(0, 256, 52, dtype=np.uint8))))
    for seed in (7, 8):
        rng = np.random.default_rng(seed)
        vectors.append((f"pcg64-seed{seed}-44", bytes(rng.integers(0, 256, 44, dtype=np.uint8))))
    assert len(vectors) == 20
    return vectors


def regenerate() -> None:
    rows = []
    for name, data in committed_vectors():
        assert len(data) in (44, 52), name
        rows.append({"name": name, "hex": data.hex(), "expected": oracle_all(data)})
    DATA_PATH.parent.mkdir(parents=True, exist_ok=True)
    DATA_PATH.write_text(json.dumps(rows, indent=1) + "\n")
    print(f"wrote {len(rows)} vectors to {DATA_PATH}")


if __name__ == "__main__":
    sys.exit(regenerate())
