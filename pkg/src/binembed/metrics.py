"""Distances on the sphere and on packed codes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinaryCode, BinembedError, CodeBatch, Dataset, DimensionMismatch


def geodesic(x, y) -> float:
    """Angle between x and y divided by pi, in [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes differ: {x.shape} vs {y.shape}")
    return float(np.arccos(np.clip(x @ y, -1.0, 1.0)) / np.pi)


def geodesic_matrix(X, Y=None) -> np.ndarray:
    """All geodesic distances between rows of X and rows of Y (default X)."""
    X = X.rows if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
    Y = X if Y is None else (Y.rows if isinstance(Y, Dataset) else np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    return np.arccos(np.clip(X @ Y.T, -1.0, 1.0)) / np.pi


def _check_same_layout(a, b):
    if a.n_bits != b.n_bits or a.n_blocks != b.n_blocks:
        raise DimensionMismatch(
            f"code layouts differ: m={a.n_bits}, B={a.n_blocks} vs m={b.n_bits}, B={b.n_blocks}"
        )


def hamming_norm(a: BinaryCode, b: BinaryCode) -> float:
    """Fraction of differing bits, by XOR and popcount over the packed words."""
    _check_same_layout(a, b)
    return int(np.bitwise_count(a.words ^ b.words).sum()) / a.n_bits


def _block_counts(a: BinaryCode, b: BinaryCode) -> np.ndarray:
    diff = np.bitwise_xor(a.words, b.words)[None, :]
    bits = np.unpackbits(diff.view(np.uint8), axis=1, count=a.n_bits, bitorder="little")[0]
    return bits.reshape(a.n_blocks, a.block_bits).sum(axis=1)


def median_block_hamming(a: BinaryCode, b: BinaryCode) -> float:
    """Median over the B consecutive blocks of the per-block normalized Hamming distance.

    For even B the two central order statistics are averaged.
    """
    _check_same_layout(a, b)
    return float(np.median(_block_counts(a, b) / a.block_bits))


# ---------------------------------------------------------------------------
# Batched distance matrices
# ---------------------------------------------------------------------------


def _signed(codes: CodeBatch) -> np.ndarray:
    return np.where(codes.to_bits(), 1.0, -1.0)


def block_hamming_matrix(A: CodeBatch, B: CodeBatch | None = None) -> np.ndarray:
    """(Na, Nb, blocks) array of per-block normalized Hamming distances.

    Uses the +-1 inner product identity: differing = (len - <s_a, s_b>) / 2,
    which is exact in float64 for any practical code length.
    """
    B = A if B is None else B
    _check_same_layout(A, B)
    sa, sb = _signed(A), _signed(B)
    k = A.block_bits
    out = np.empty((len(A), len(B), A.n_blocks))
    for j in range(A.n_blocks):
        sl = slice(j * k, (j + 1) * k)
        out[:, :, j] = (k - sa[:, sl] @ sb[:, sl].T) / (2 * k)
    return out


def hamming_matrix(A: CodeBatch, B: CodeBatch | None = None) -> np.ndarray:
    B = A if B is None else B
    _check_same_layout(A, B)
    m = A.n_bits
    return (m - _signed(A) @ _signed(B).T) / (2 * m)


def median_block_matrix(A: CodeBatch, B: CodeBatch | None = None) -> np.ndarray:
    return np.median(block_hamming_matrix(A, B), axis=2)


METRICS = ("hamming", "median_block")


def code_distance_matrix(A: CodeBatch, B: CodeBatch | None = None, metric: str = "hamming",
                         chunk: int = 512) -> np.ndarray:
    """Distance matrix under ``metric``, computed in row chunks of A to bound memory."""
    if metric not in METRICS:
        raise BinembedError(f"unknown code metric {metric!r}; choose from {METRICS}")
    fn = hamming_matrix if metric == "hamming" else median_block_matrix
    B = A if B is None else B
    if len(A) <= chunk:
        return fn(A, B)
    parts = [fn(CodeBatch(A.words[s : s + chunk], A.n_bits, A.n_blocks), B)
             for s in range(0, len(A), chunk)]
    return np.concatenate(parts, axis=0)


# ---------------------------------------------------------------------------
# Distortion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistortionReport:
    max_abs_distortion: float
    mean_abs_distortion: float
    n_pairs: int


def pairwise_distortion(d: Dataset, codes: CodeBatch, metric: str = "hamming",
                        geodesics: np.ndarray | None = None) -> DistortionReport:
    """Worst and mean |code distance - geodesic| over all unordered pairs.

    ``geodesics`` may carry a precomputed ``geodesic_matrix(d)`` so sweeps can
    reuse it across embedders.
    """
    if len(codes) != d.n_points:
        raise DimensionMismatch(f"{len(codes)} codes for {d.n_points} points")
    n = d.n_points
    if n < 2:
        return DistortionReport(0.0, 0.0, 0)
    G = geodesic_matrix(d) if geodesics is None else geodesics
    C = code_distance_matrix(codes, metric=metric)
    iu = np.triu_indices(n, k=1)
    err = np.abs(C[iu] - G[iu])
    return DistortionReport(float(err.max()), float(err.mean()), int(err.size))
