"""Binary embeddings of unit vectors whose Hamming distances track geodesic distance."""

from .core import (
    Algorithm,
    BinaryCode,
    BinembedError,
    CodeBatch,
    ConfigError,
    Dataset,
    DimensionMismatch,
    EmbedderConfig,
    SeedTree,
    derive_seed,
    pack_bits,
    unit_vector,
    unpack_bits,
)
from .embedders import Embedder, embed, embed_batch, fit, sign_quantize
from .evaluation import (
    distortion_sweep,
    gen_sphere_dataset,
    m_for_target_delta,
    retrieval_eval,
)
from .metrics import (
    DistortionReport,
    geodesic,
    hamming_norm,
    median_block_hamming,
    pairwise_distortion,
)

__version__ = "0.1.0"
