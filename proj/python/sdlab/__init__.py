"""Sparse dictionary-learning workbench: python surface over the C++ core."""

from ._core import (
    Dictionary,
    IoError,
    NumericError,
    SparseCode,
    ValidationError,
    activation_stats,
    babel,
    coactivation_babel,
    decode,
    encode_batchtopk,
    encode_jumprelu,
    encode_mp,
    encode_relu,
    encode_topk,
    generate_synthetic,
    init_dictionary,
    load_activation_matrix,
    load_checkpoint,
    load_mnist_idx,
    mutual_coherence,
    r_squared,
    recovery_score,
    save_activation_matrix,
    save_checkpoint,
    train_sae,
)

__all__ = [
    "Dictionary",
    "IoError",
    "NumericError",
    "SparseCode",
    "ValidationError",
    "activation_stats",
    "babel",
    "coactivation_babel",
    "decode",
    "encode_batchtopk",
    "encode_jumprelu",
    "encode_mp",
    "encode_relu",
    "encode_topk",
    "generate_synthetic",
    "init_dictionary",
    "load_activation_matrix",
    "load_checkpoint",
    "load_mnist_idx",
    "mutual_coherence",
    "r_squared",
    "recovery_score",
    "save_activation_matrix",
    "save_checkpoint",
    "train_sae",
]
