"""Sign-quantized random projection embedders.

``URPEmbedder``  sign(A x) with a dense Gaussian A (m x p).
``FBEEmbedder``  y = Phi x through a Hadamard sketch, then B independent partial
                 Toeplitz blocks, each producing m/B bits of sign(Psi_j y).
``FBE2Embedder`` sign(A Phi x) with a dense Gaussian A (m x n).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import (
    Algorithm,
    BinaryCode,
    BinembedError,
    CodeBatch,
    Dataset,
    DimensionMismatch,
    EmbedderConfig,
    unit_vector,
)
from .transforms import (
    build_hadamard_sketch,
    build_toeplitz_block,
    sample_gaussian_matrix,
    sketch_apply,
    toeplitz_apply,
)


def sign_quantize(v) -> np.ndarray:
    """1 where v >= 0, 0 where v < 0. Exact zeros map to 1."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise BinembedError("cannot quantize non-finite values")
    return v >= 0


class Embedder:
    """Base class; subclasses supply ``project`` (the real vector before sign)."""

    def __init__(self, config: EmbedderConfig):
        self.config = config

    @property
    def n_bits(self) -> int:
        return self.config.code_bits

    @property
    def n_blocks(self) -> int:
        return self.config.blocks

    def project(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _rows(self, x) -> np.ndarray:
        if isinstance(x, Dataset):
            rows = x.rows
        else:
            rows = np.asarray(x, dtype=np.float64)
            if rows.ndim == 1:
                rows = rows[None, :]
        if rows.ndim != 2 or rows.shape[1] != self.config.input_dim:
            raise DimensionMismatch(
                f"embedder expects dimension {self.config.input_dim}, got shape {rows.shape}"
            )
        return rows

    def embed(self, x) -> BinaryCode:
        x = unit_vector(x)
        return self.embed_batch(x[None, :])[0]

    def embed_batch(self, data, threads: int = 1, chunk: int = 256) -> CodeBatch:
        """Embed every row; rows are processed in chunks, optionally on a thread pool."""
        rows = self._rows(data)
        starts = range(0, rows.shape[0], chunk)

        def run(s):
            return sign_quantize(self.project(rows[s : s + chunk]))

        if threads > 1 and rows.shape[0] > chunk:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(run, starts))
        else:
            parts = [run(s) for s in starts]
        return CodeBatch.from_bits(np.concatenate(parts, axis=0), self.n_blocks)

    def __repr__(self):
        c = self.config
        return (f"{type(self).__name__}(p={c.input_dim}, m={c.code_bits}, "
                f"n={c.intermediate_dim}, B={c.blocks}, seed={c.seed.master})")


class URPEmbedder(Embedder):
    def __init__(self, config: EmbedderConfig):
        super().__init__(config)
        self.matrix = sample_gaussian_matrix(config.code_bits, config.input_dim, config.seed)
        self.matrix.setflags(write=False)

    def project(self, X):
        return X @ self.matrix.T


class FBEEmbedder(Embedder):
    def __init__(self, config: EmbedderConfig):
        super().__init__(config)
        n, tree = config.intermediate_dim, config.seed
        self.sketch = build_hadamard_sketch(config.input_dim, n, tree)
        rows = config.code_bits // config.blocks
        self.blocks = tuple(build_toeplitz_block(n, rows, tree, j) for j in range(config.blocks))

    def project(self, X):
        Y = sketch_apply(self.sketch, X)
        k = self.n_bits // self.n_blocks
        out = np.empty((Y.shape[0], self.n_bits))
        for j, t in enumerate(self.blocks):
            toeplitz_apply(t, Y, out=out[:, j * k : (j + 1) * k])
        return out


class FBE2Embedder(Embedder):
    def __init__(self, config: EmbedderConfig):
        super().__init__(config)
        self.sketch = build_hadamard_sketch(config.input_dim, config.intermediate_dim, config.seed)
        self.matrix = sample_gaussian_matrix(config.code_bits, config.intermediate_dim, config.seed)
        self.matrix.setflags(write=False)

    def project(self, X):
        return sketch_apply(self.sketch, X) @ self.matrix.T


_CLASSES = {
    Algorithm.URP: URPEmbedder,
    Algorithm.FBE: FBEEmbedder,
    Algorithm.FBE2: FBE2Embedder,
}


def fit(config: EmbedderConfig) -> Embedder:
    """Draw all random operators for ``config``. Same config, same operators."""
    return _CLASSES[config.algorithm](config)


def embed(e: Embedder, x) -> BinaryCode:
    return e.embed(x)


def embed_batch(e: Embedder, data, threads: int = 1) -> CodeBatch:
    return e.embed_batch(data, threads=threads)
