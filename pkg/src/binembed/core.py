"""Shared domain types: unit vectors, datasets, packed binary codes and seeding."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

WORD_BITS = 64
_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

SEED_LABELS = (
    "hadamard_diag",
    "hadamard_rows",
    "toeplitz_gen",
    "toeplitz_diag",
    "gaussian_dense",
    "dataset",
)


class BinembedError(ValueError):
    """Base class for invalid-argument errors raised by this package."""


class DimensionMismatch(BinembedError):
    pass


class ConfigError(BinembedError):
    pass


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def _splitmix64(state: int, index: int) -> int:
    """Return output number ``index`` of a SplitMix64 stream seeded with ``state``."""
    z = (state + (index + 1) * _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedTree:
    """Deterministic source of independent child seeds.

    A child seed for ``(label, index)`` is output number ``index`` of a
    SplitMix64 stream whose state is ``splitmix64(master ^ fnv1a64(label), 0)``.
    Every random component of an embedder draws from its own label, so adding
    blocks or changing one dimension never shifts the stream of another.
    """

    master: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master) <= _MASK64:
            raise BinembedError(f"master seed must fit in 64 bits, got {self.master}")
        object.__setattr__(self, "master", int(self.master))

    def derive(self, label: str, index: int = 0) -> int:
        if label not in SEED_LABELS:
            raise BinembedError(f"unknown seed label {label!r}; expected one of {SEED_LABELS}")
        return self._stream(label, index)

    def rng(self, label: str, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.derive(label, index))

    def child(self, index: int) -> "SeedTree":
        """Sub-tree used to give each sweep cell or trial its own master."""
        return SeedTree(self._stream("__child__", index))

    def _stream(self, label: str, index: int) -> int:
        if index < 0:
            raise BinembedError(f"seed index must be non-negative, got {index}")
        state = _splitmix64(self.master ^ _fnv1a64(label), 0)
        return _splitmix64(state, index)


def derive_seed(tree: SeedTree | int, label: str, index: int = 0) -> int:
    return as_seed_tree(tree).derive(label, index)


def as_seed_tree(seed: SeedTree | int) -> SeedTree:
    if isinstance(seed, SeedTree):
        return seed
    return SeedTree(int(seed))


# ---------------------------------------------------------------------------
# Points on the sphere
# ---------------------------------------------------------------------------

NORM_RTOL = 1e-6


def unit_vector(values) -> np.ndarray:
    """Validate ``values`` as a point of the unit sphere and return it as float64."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise BinembedError(f"unit vector must be 1-D, got shape {x.shape}")
    if x.shape[0] < 2:
        raise BinembedError("unit vector needs dimension >= 2")
    if not np.all(np.isfinite(x)):
        raise BinembedError("unit vector has non-finite entries")
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > NORM_RTOL:
        raise BinembedError(f"vector norm {norm!r} is not 1 within {NORM_RTOL}")
    return x


@dataclass(frozen=True, eq=False)
class Dataset:
    """N unit vectors of dimension p stored row-major."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64, order="C")
        if rows.ndim != 2:
            raise BinembedError(f"dataset must be 2-D, got shape {rows.shape}")
        n, p = rows.shape
        if n < 1:
            raise BinembedError("dataset needs at least one point")
        if p < 2:
            raise BinembedError("dataset dimension must be >= 2")
        if not np.all(np.isfinite(rows)):
            raise BinembedError("dataset has non-finite entries")
        norms = np.linalg.norm(rows, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > NORM_RTOL)
        if bad.size:
            raise BinembedError(f"row {bad[0]} has norm {norms[bad[0]]!r}, expected 1")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @classmethod
    def normalized(cls, values) -> "Dataset":
        """Build a dataset by projecting each row of ``values`` onto the sphere."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values / np.linalg.norm(values, axis=1, keepdims=True))

    @property
    def n_points(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self):
        return self.n_points

    def __getitem__(self, i):
        return self.rows[i]


# ---------------------------------------------------------------------------
# Packed binary codes
# ---------------------------------------------------------------------------


def n_words(n_bits: int) -> int:
    return (n_bits + WORD_BITS - 1) // WORD_BITS


def _check_layout(n_bits: int, n_blocks: int):
    if n_bits < 1:
        raise BinembedError(f"code needs at least one bit, got {n_bits}")
    if n_blocks < 1 or n_bits % n_blocks:
        raise BinembedError(f"number of blocks {n_blocks} must divide code length {n_bits}")


def _pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (N, m) boolean array into (N, ceil(m/64)) little-endian uint64 words."""
    n, m = bits.shape
    w = n_words(m)
    packed = np.packbits(bits, axis=1, bitorder="little")
    buf = np.zeros((n, w * 8), dtype=np.uint8)
    buf[:, : packed.shape[1]] = packed
    return buf.view("<u8").astype(np.uint64, copy=False)


def _unpack_rows(words: np.ndarray, n_bits: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(as_bytes, axis=1, count=n_bits, bitorder="little").astype(bool)


def _pad_mask(n_bits: int) -> np.ndarray:
    """Per-word masks with ones exactly at the valid bit positions."""
    mask = np.full(n_words(n_bits), np.uint64(_MASK64), dtype=np.uint64)
    tail = n_bits % WORD_BITS
    if tail:
        mask[-1] = np.uint64((1 << tail) - 1)
    return mask


@dataclass(frozen=True, eq=False)
class BinaryCode:
    """One m-bit code split into ``n_blocks`` consecutive blocks of m/B bits.

    Bit k lives in word k // 64 at bit position k % 64 (LSB first).
    Bits above m in the last word are always zero.
    """

    words: np.ndarray
    n_bits: int
    n_blocks: int = 1

    def __post_init__(self):
        _check_layout(self.n_bits, self.n_blocks)
        words = np.array(self.words, dtype=np.uint64).reshape(-1)
        if words.shape[0] != n_words(self.n_bits):
            raise BinembedError(
                f"{self.n_bits} bits need {n_words(self.n_bits)} words, got {words.shape[0]}"
            )
        if np.any(words & ~_pad_mask(self.n_bits)):
            raise BinembedError("pad bits above n_bits must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @property
    def block_bits(self) -> int:
        return self.n_bits // self.n_blocks

    def __eq__(self, other):
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return (
            self.n_bits == other.n_bits
            and self.n_blocks == other.n_blocks
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self):
        return hash((self.n_bits, self.n_blocks, self.words.tobytes()))

    def complement(self) -> "BinaryCode":
        return BinaryCode(~self.words & _pad_mask(self.n_bits), self.n_bits, self.n_blocks)


def pack_bits(bits, blocks: int = 1) -> BinaryCode:
    bits = np.asarray(bits).astype(bool).reshape(-1)
    _check_layout(bits.shape[0], blocks)
    return BinaryCode(_pack_rows(bits[None, :])[0], bits.shape[0], blocks)


def unpack_bits(code: BinaryCode) -> np.ndarray:
    return _unpack_rows(code.words[None, :], code.n_bits)[0]


@dataclass(frozen=True, eq=False)
class CodeBatch:
    """N codes sharing one layout, stored as an (N, words) uint64 matrix."""

    words: np.ndarray
    n_bits: int
    n_blocks: int = 1

    def __post_init__(self):
        _check_layout(self.n_bits, self.n_blocks)
        words = np.array(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(self.n_bits):
            raise BinembedError(
                f"expected (N, {n_words(self.n_bits)}) words, got shape {words.shape}"
            )
        if np.any(words & ~_pad_mask(self.n_bits)):
            raise BinembedError("pad bits above n_bits must be zero")
        words.setflags(write=False)
        object.__setattr__(self, "words", words)

    @classmethod
    def from_bits(cls, bits, blocks: int = 1) -> "CodeBatch":
        bits = np.asarray(bits).astype(bool)
        if bits.ndim != 2:
            raise BinembedError(f"bit matrix must be 2-D, got shape {bits.shape}")
        _check_layout(bits.shape[1], blocks)
        return cls(_pack_rows(bits), bits.shape[1], blocks)

    @classmethod
    def from_codes(cls, codes) -> "CodeBatch":
        codes = list(codes)
        if not codes:
            raise BinembedError("need at least one code")
        layout = {(c.n_bits, c.n_blocks) for c in codes}
        if len(layout) != 1:
            raise BinembedError(f"codes have mixed layouts {sorted(layout)}")
        m, b = layout.pop()
        return cls(np.stack([c.words for c in codes]), m, b)

    def to_bits(self) -> np.ndarray:
        return _unpack_rows(self.words, self.n_bits)

    @property
    def block_bits(self) -> int:
        return self.n_bits // self.n_blocks

    def __len__(self):
        return self.words.shape[0]

    def __getitem__(self, i) -> BinaryCode:
        return BinaryCode(self.words[i], self.n_bits, self.n_blocks)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, CodeBatch):
            return NotImplemented
        return (
            self.n_bits == other.n_bits
            and self.n_blocks == other.n_blocks
            and np.array_equal(self.words, other.words)
        )


# ---------------------------------------------------------------------------
# Embedder configuration
# ---------------------------------------------------------------------------


class Algorithm(str, enum.Enum):
    URP = "urp"
    FBE = "fbe"
    FBE2 = "fbe2"

    @classmethod
    def parse(cls, value) -> "Algorithm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", ""))
        except ValueError:
            raise ConfigError(f"unknown algorithm {value!r}; choose urp, fbe or fbe2") from None


def default_intermediate_dim(m: int) -> int:
    """ceil(1.3 m), computed in integers so 1.3*1000 does not round up to 1301."""
    return (13 * m + 9) // 10


def default_blocks(n_points: int, m: int | None = None) -> int:
    """Block count ~ 1.8 ln N, moved to the nearest divisor of m when m is given."""
    target = max(1, math.floor(1.8 * math.log(max(n_points, 1)) + 0.5))
    if m is None:
        return target
    divisors = [d for d in range(1, m + 1) if m % d == 0]
    return min(divisors, key=lambda d: (abs(d - target), -d))


@dataclass(frozen=True)
class EmbedderConfig:
    algorithm: Algorithm
    input_dim: int
    code_bits: int
    intermediate_dim: int | None = None
    blocks: int = 1
    seed: SeedTree = field(default_factory=SeedTree)

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        object.__setattr__(self, "seed", as_seed_tree(self.seed))
        p, m, n, b = self.input_dim, self.code_bits, self.intermediate_dim, self.blocks
        if p < 1:
            raise ConfigError(f"input_dim must be >= 1, got {p}")
        if m < 1:
            raise ConfigError(f"code_bits must be >= 1, got {m}")
        if self.algorithm is Algorithm.URP:
            if b != 1:
                raise ConfigError("URP codes always use a single block")
            return
        if n is None or n < 1:
            raise ConfigError(f"{self.algorithm.value} needs intermediate_dim >= 1, got {n}")
        if self.algorithm is Algorithm.FBE2:
            if b != 1:
                raise ConfigError("FBE2 codes always use a single block")
            return
        if b < 1 or m % b:
            raise ConfigError(f"blocks={b} must divide code_bits={m}")
        if m // b > n:
            raise ConfigError(
                f"block length m/B={m // b} exceeds intermediate_dim n={n}; need n >= m/B"
            )

    @classmethod
    def with_defaults(cls, algorithm, input_dim: int, code_bits: int, n_points: int = 1,
                      intermediate_dim: int | None = None, blocks: int | None = None,
                      seed: SeedTree | int = 0) -> "EmbedderConfig":
        """Fill n and B the way the synthetic experiments do: n = ceil(1.3 m), B ~ 1.8 ln N."""
        algorithm = Algorithm.parse(algorithm)
        if algorithm is Algorithm.URP:
            return cls(algorithm, input_dim, code_bits, None, 1, as_seed_tree(seed))
        if intermediate_dim is None:
            intermediate_dim = default_intermediate_dim(code_bits)
        if algorithm is Algorithm.FBE2:
            return cls(algorithm, input_dim, code_bits, intermediate_dim, 1, as_seed_tree(seed))
        if blocks is None:
            blocks = default_blocks(n_points, code_bits)
        return cls(algorithm, input_dim, code_bits, intermediate_dim, blocks, as_seed_tree(seed))
