"""Range coding of 4-ary symbol streams under explicit distributions.

Each symbol is coded as two binary decisions (high bit, then low bit)
with 24-bit probabilities. The adaptive coders of the builtin backend use
the same binary coder through ``_kernels``.
"""

import numpy as np

from . import _kernels as K
from .errors import DesyncDetected

HEADER_ALLOWANCE = 64


def _check_probs(probs, n):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.shape != (n, 4):
        raise ValueError(f"expected a ({n}, 4) probability array, got {probs.shape}")
    if (probs <= 0).any():
        raise ValueError("probabilities must be strictly positive")
    return probs


def range_encode(probs, symbols) -> bytes:
    """Encode ``symbols[i]`` under distribution ``probs[i]``."""
    syms = np.ascontiguousarray(symbols, dtype=np.uint8)
    probs = _check_probs(probs, len(syms))
    return K.encode_quad_stream(probs, syms).tobytes()


def range_decode(data: bytes, probs) -> np.ndarray:
    """Inverse of :func:`range_encode`; ``probs`` must replay the encoder's."""
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    probs = _check_probs(probs, probs.shape[0])
    buf = np.frombuffer(data, np.uint8)
    out, consumed = K.decode_quad_stream(buf, probs)
    if consumed != len(buf):
        raise DesyncDetected(
            f"decoder consumed {consumed} bytes of a {len(buf)}-byte stream"
        )
    return out


def model_code_length(probs, symbols) -> float:
    """Ideal code length in bits, the sum of -log2 p(symbol)."""
    probs = np.asarray(probs, float)
    syms = np.asarray(symbols, np.int64)
    if len(syms) == 0:
        return 0.0
    return float(-np.log2(probs[np.arange(len(syms)), syms]).sum())
