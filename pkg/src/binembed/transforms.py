"""Random linear operators: subsampled randomized Hadamard sketch and partial
Gaussian Toeplitz projection, each with a slow reference twin for testing.

All apply functions accept a single vector or a 2-D batch (one point per row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .core import BinembedError, DimensionMismatch, SeedTree, as_seed_tree


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


_RADIX_BITS = 6


def _sylvester(r: int) -> np.ndarray:
    h = np.ones((1, 1))
    while h.shape[0] < r:
        h = np.block([[h, h], [h, -h]])
    return h


def fwht_inplace(v: np.ndarray) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform along the last axis, in place.

    ``v`` must be a writable float array whose last axis is a power of two.
    The butterfly network is applied in stages of up to 2**6 points, each
    stage a small dense +-1 Hadamard product, which keeps the O(L log L)
    work inside BLAS instead of one Python-level pass per bit.
    Returns ``v`` for chaining.
    """
    L = v.shape[-1]
    if not _is_pow2(L):
        raise BinembedError(f"Hadamard transform length must be a power of two, got {L}")
    lead = v.shape[:-1]
    bits = L.bit_length() - 1
    inner = 1
    while bits > 0:
        step = min(_RADIX_BITS, bits)
        r = 1 << step
        view = v.reshape(*lead, L // (inner * r), r, inner)
        view[...] = np.matmul(_sylvester(r), view)
        inner *= r
        bits -= step
    v *= 1.0 / np.sqrt(L)
    return v


def fwht(v) -> np.ndarray:
    return fwht_inplace(np.array(v, dtype=np.float64))


def _rademacher(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.where(rng.integers(0, 2, size=size) == 1, 1.0, -1.0)


def _as_batch(x, dim: int, what: str):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != dim:
        raise DimensionMismatch(f"{what} expects vectors of length {dim}, got shape {x.shape}")
    return batch, single


@dataclass(frozen=True, eq=False)
class HadamardSketch:
    """x -> sqrt(p'/n) * P H D x with x zero-padded from p to p' = 2^k."""

    input_dim: int
    diag_signs: np.ndarray
    row_indices: np.ndarray

    def __post_init__(self):
        padded = self.diag_signs.shape[0]
        if not _is_pow2(padded) or padded < self.input_dim:
            raise BinembedError(f"padded dim {padded} must be a power of two >= {self.input_dim}")
        if self.row_indices.size < 1:
            raise BinembedError("sketch needs at least one output row")
        if self.row_indices.min() < 0 or self.row_indices.max() >= padded:
            raise BinembedError("row index out of range")
        for arr in (self.diag_signs, self.row_indices):
            arr.setflags(write=False)

    @property
    def padded_dim(self) -> int:
        return self.diag_signs.shape[0]

    @property
    def out_dim(self) -> int:
        return self.row_indices.shape[0]

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.padded_dim / self.out_dim))

    def dense(self) -> np.ndarray:
        """The (n, p) matrix this sketch applies, via the fast path on the identity."""
        return sketch_apply(self, np.eye(self.input_dim)).T


def build_hadamard_sketch(p: int, n: int, seed: SeedTree | int) -> HadamardSketch:
    if p < 1 or n < 1:
        raise BinembedError(f"sketch dimensions must be positive, got p={p}, n={n}")
    tree = as_seed_tree(seed)
    padded = next_pow2(p)
    signs = _rademacher(tree.rng("hadamard_diag"), padded)
    rows = tree.rng("hadamard_rows").integers(0, padded, size=n)
    return HadamardSketch(p, signs, rows)


def sketch_apply(s: HadamardSketch, x) -> np.ndarray:
    batch, single = _as_batch(x, s.input_dim, "sketch")
    buf = np.zeros((batch.shape[0], s.padded_dim))
    np.multiply(batch, s.diag_signs[: s.input_dim], out=buf[:, : s.input_dim])
    fwht_inplace(buf)
    out = buf[:, s.row_indices]
    out *= s.scale
    return out[0] if single else out


def choose_chunk(n: int, rows_out: int) -> int:
    """Chunk length minimising (chunks + 1) * L log L over power-of-two FFT
    lengths L, with the single whole-vector circulant as one candidate."""
    def cost(c):
        L = scipy.fft.next_fast_len(c + rows_out - 1, real=True)
        return (-(-n // c) + 1) * L * np.log2(max(L, 2))

    candidates = [n]
    L = max(next_pow2(2 * rows_out), 512)
    while L - rows_out + 1 < n:
        candidates.append(L - rows_out + 1)
        L *= 2
    return min(candidates, key=cost)


@dataclass(frozen=True, eq=False)
class ToeplitzBlock:
    """First ``rows_out`` rows of T D with T[i, j] = g[i - j + n - 1] (0-based).

    Only g[: n + rows_out - 1] touches the output. Application splits the
    input into chunks of ``chunk`` coordinates; chunk k meets a window of
    ``chunk + rows_out - 1`` generator entries, so each chunk is one exact
    circular convolution of length ``fft_len >= chunk + rows_out - 1``.
    Chunk spectra are summed before a single inverse transform, giving
    O(n log rows_out) work per vector. With ``chunk = n`` this is the plain
    circulant embedding of the whole matrix.
    """

    generator: np.ndarray
    diag_signs: np.ndarray
    rows_out: int
    chunk: int | None = None

    def __post_init__(self):
        n = self.diag_signs.shape[0]
        if self.generator.shape != (2 * n - 1,):
            raise BinembedError(f"generator must have length {2 * n - 1}, got {self.generator.shape}")
        if not 1 <= self.rows_out <= n:
            raise BinembedError(f"rows_out={self.rows_out} must lie in [1, n={n}]")
        c = self.chunk or choose_chunk(n, self.rows_out)
        if not 1 <= c <= n:
            raise BinembedError(f"chunk={c} must lie in [1, n={n}]")
        k = -(-n // c)
        width = c + self.rows_out - 1
        fft_len = scipy.fft.next_fast_len(width, real=True)
        # window for chunk j starts at g[n - 1 - j*c - (c - 1)]; negative indices
        # only meet the zero padding of the last chunk
        start = n - 1 - np.arange(k)[:, None] * c - (c - 1) + np.arange(width)[None, :]
        windows = np.where(start >= 0, self.generator[np.clip(start, 0, None)], 0.0)
        spectra = scipy.fft.rfft(windows, fft_len, axis=1)
        for arr in (self.generator, self.diag_signs, spectra):
            arr.setflags(write=False)
        object.__setattr__(self, "chunk", c)
        object.__setattr__(self, "_fft_len", fft_len)
        object.__setattr__(self, "_spectra", spectra)

    @property
    def dim(self) -> int:
        return self.diag_signs.shape[0]

    @property
    def fft_len(self) -> int:
        return self._fft_len

    def dense(self) -> np.ndarray:
        """The (rows_out, n) matrix P T D, built entry by entry from the generator."""
        n = self.dim
        i = np.arange(self.rows_out)[:, None]
        j = np.arange(n)[None, :]
        return self.generator[i - j + n - 1] * self.diag_signs[None, :]


def build_toeplitz_block(n: int, rows_out: int, seed: SeedTree | int, index: int = 0,
                         chunk: int | None = None) -> ToeplitzBlock:
    """Draw block ``index`` of an embedder; each index has independent streams."""
    if n < 1:
        raise BinembedError(f"Toeplitz dimension must be positive, got {n}")
    if not 1 <= rows_out <= n:
        raise BinembedError(f"rows_out={rows_out} must lie in [1, n={n}]")
    tree = as_seed_tree(seed)
    gen = tree.rng("toeplitz_gen", index).standard_normal(2 * n - 1)
    signs = _rademacher(tree.rng("toeplitz_diag", index), n)
    return ToeplitzBlock(gen, signs, rows_out, chunk)


def toeplitz_apply(t: ToeplitzBlock, y, workers: int | None = None, out=None) -> np.ndarray:
    """Fast product with the block; ``out`` may be a preallocated (N, rows_out) view."""
    batch, single = _as_batch(y, t.dim, "Toeplitz block")
    n, c, L = t.dim, t.chunk, t.fft_len
    k = t._spectra.shape[0]
    # chunks laid out already zero-padded to L; letting rfft pad is ~2x slower
    u = np.zeros((batch.shape[0], k, L))
    for i in range(k):
        lo, hi = i * c, min(n, (i + 1) * c)
        np.multiply(batch[:, lo:hi], t.diag_signs[lo:hi], out=u[:, i, : hi - lo])
    spec = scipy.fft.rfft(u, axis=2, workers=workers, overwrite_x=True)
    acc = np.einsum("nkf,kf->nf", spec, t._spectra) if k > 1 else spec[:, 0] * t._spectra[0]
    full = scipy.fft.irfft(acc, L, axis=1, workers=workers, overwrite_x=True)
    rows = full[:, c - 1 : c - 1 + t.rows_out]
    if single:
        return rows[0].copy()
    if out is None:
        return np.ascontiguousarray(rows)
    out[...] = rows
    return out


def toeplitz_apply_naive(t: ToeplitzBlock, y) -> np.ndarray:
    batch, single = _as_batch(y, t.dim, "Toeplitz block")
    out = batch @ t.dense().T
    return out[0] if single else out


def sample_gaussian_matrix(rows: int, cols: int, seed) -> np.ndarray:
    """i.i.d. N(0, 1) matrix; ``seed`` is an int or a SeedTree (label gaussian_dense)."""
    if rows < 1 or cols < 1:
        raise BinembedError(f"matrix shape must be positive, got {rows}x{cols}")
    if isinstance(seed, SeedTree):
        rng = seed.rng("gaussian_dense")
    else:
        rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols))
