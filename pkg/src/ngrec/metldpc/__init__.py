"""MET-LDPC ensembles, parity-check matrices and syndrome decoders."""

from .decoder import DecodeResult, SyndromeDecoder, decode, decode_bp, decode_lbp
from .ensemble import MultiEdgeEnsemble, NodeClass, bundled_ensembles, load_ensemble, parse_ensemble
from .matrix import SparseParityMatrix, construct_matrix, node_counts, syndrome

__all__ = [
    "DecodeResult",
    "MultiEdgeEnsemble",
    "NodeClass",
    "SparseParityMatrix",
    "SyndromeDecoder",
    "bundled_ensembles",
    "construct_matrix",
    "decode",
    "decode_bp",
    "decode_lbp",
    "load_ensemble",
    "node_counts",
    "parse_ensemble",
    "syndrome",
]
