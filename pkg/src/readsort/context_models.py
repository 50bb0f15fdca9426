"""Finite-context and substitution-tolerant context models over {A,C,G,T}.

An ensemble is trained (counts only), then frozen; a frozen ensemble
estimates code lengths without touching its counts. Mixing weights start
from their post-training values at the beginning of every estimated
sequence, so estimates do not depend on call order.

Symbols are the integers 0..3 for A, C, G, T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import FrozenModel

ALPHABET = b"ACGT"
ALPHABET_SIZE = 4
LOG2_ALPHABET = 2
PROB_FLOOR = 2.0**-16
MAX_EXACT_ORDER = 12
MAX_ORDER = 20

_LUT = np.full(256, 255, np.uint8)
for _i, _c in enumerate(ALPHABET):
    _LUT[_c] = _i
_COMPLEMENT = np.array([3, 2, 1, 0], np.uint8)


@dataclass(frozen=True)
class FcmConfig:
    order: int
    alpha: float = 1 / 16

    def __post_init__(self):
        if not 0 <= self.order <= MAX_ORDER:
            raise ValueError(f"order must be in [0, {MAX_ORDER}], got {self.order}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def hashed(self) -> bool:
        return self.order > MAX_EXACT_ORDER


@dataclass(frozen=True)
class StcmConfig:
    """Tolerant model: shares counting with an FCM of ``base.order``.

    ``fallback_alpha`` replaces the base estimator's smoothing while the
    tolerant context carries substitutions, i.e. between a mismatch and the
    next hit or reset.
    """

    base: FcmConfig
    max_substitutions: int = 3
    fallback_alpha: float = 1.0

    def __post_init__(self):
        if self.max_substitutions < 0:
            raise ValueError("max_substitutions must be >= 0")
        if not self.fallback_alpha > 0:
            raise ValueError("fallback_alpha must be positive")

    @property
    def order(self) -> int:
        return self.base.order

    @property
    def hashed(self) -> bool:
        return self.base.hashed


ModelConfig = Union[FcmConfig, StcmConfig]


def default_models() -> list[ModelConfig]:
    return [
        FcmConfig(3),
        FcmConfig(8),
        FcmConfig(13),
        StcmConfig(FcmConfig(18), max_substitutions=3),
    ]


def table_bits_for(n_symbols: int, cap: int = 24, floor: int = 12) -> int:
    """Hash table size (log2 slots) suited to ``n_symbols`` training symbols."""
    need = max(int(n_symbols), 1).bit_length() + 1
    return max(floor, min(cap, need))


# ---------------------------------------------------------------- symbols


def map_symbol(byte: int, rng: np.random.Generator) -> int:
    """Symbol index for a sequence byte; bytes outside ACGT get a random symbol."""
    code = int(_LUT[byte])
    if code == 255:
        return int(rng.integers(0, 4))
    return code


def to_symbols(seq, rng: np.random.Generator | None = None) -> np.ndarray:
    """Map a byte string (or str) to a uint8 array of symbols 0..3.

    Non-ACGT bytes are replaced by draws from ``rng`` in positional order.
    Without an ``rng`` such bytes raise ``ValueError``.
    """
    if isinstance(seq, np.ndarray):
        if seq.dtype == np.uint8 and (seq.size == 0 or seq.max() < 4):
            return seq
        raise ValueError("symbol arrays must be uint8 in 0..3")
    if isinstance(seq, str):
        seq = seq.encode("ascii")
    codes = _LUT[np.frombuffer(seq, np.uint8)]
    bad = codes == 255
    if bad.any():
        if rng is None:
            raise ValueError("sequence has non-ACGT bytes and no generator was given")
        codes = codes.copy()
        codes[bad] = rng.integers(0, 4, int(bad.sum()), dtype=np.uint8)
    return codes


def reverse_complement(syms: np.ndarray) -> np.ndarray:
    return _COMPLEMENT[syms[::-1]]


def pack_sequences(seqs: Iterable, rng: np.random.Generator | None = None):
    """Concatenate sequences into (symbols, offsets) with ``offsets[i]:offsets[i+1]`` per item."""
    parts = [to_symbols(s, rng) for s in seqs]
    offs = np.zeros(len(parts) + 1, np.int64)
    if parts:
        np.cumsum([len(p) for p in parts], out=offs[1:])
        syms = np.concatenate(parts) if offs[-1] else np.zeros(0, np.uint8)
    else:
        syms = np.zeros(0, np.uint8)
    return syms, offs


# ---------------------------------------------------------------- ensemble


@dataclass(eq=False)
class ModelEnsemble:
    """Mixture of context models with weights decayed by ``gamma``.

    ``hash_bits`` sets the slot count (as a power of two) of every hashed
    (order > 12) table.
    """

    models: Sequence[ModelConfig] = field(default_factory=default_models)
    gamma: float = 0.99
    hash_bits: int = 22
    weights: np.ndarray | None = None
    frozen: bool = False

    def __post_init__(self):
        self.models = list(self.models)
        if not self.models:
            raise ValueError("an ensemble needs at least one model")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 1 <= self.hash_bits <= 32:
            raise ValueError("hash_bits must lie in [1, 32]")
        M = len(self.models)
        if self.weights is None:
            self.weights = np.full(M, 1.0 / M)
        else:
            w = np.asarray(self.weights, float)
            if w.shape != (M,) or (w <= 0).any():
                raise ValueError("weights must be positive, one per model")
            self.weights = w / w.sum()
        self._allocate()

    def _allocate(self):
        M = len(self.models)
        mi = np.zeros((M, 6), np.int64)
        masks = np.zeros(M, np.uint64)
        alphas = np.zeros(M)
        falphas = np.zeros(M)
        coff = 0
        for m, cfg in enumerate(self.models):
            base = cfg.base if isinstance(cfg, StcmConfig) else cfg
            mi[m, K.ORDER] = base.order
            mi[m, K.KIND] = K.KIND_STCM if isinstance(cfg, StcmConfig) else K.KIND_FCM
            mi[m, K.MAXSUB] = cfg.max_substitutions if isinstance(cfg, StcmConfig) else 0
            alphas[m] = base.alpha
            falphas[m] = cfg.fallback_alpha if isinstance(cfg, StcmConfig) else base.alpha
            masks[m] = np.uint64((1 << (2 * base.order)) - 1)
            mi[m, K.COFF] = coff
            if base.hashed:
                mi[m, K.HASHED] = 1
                mi[m, K.TBITS] = self.hash_bits
                coff += 8 << self.hash_bits
            else:
                mi[m, K.TBITS] = 2 * base.order
                coff += 4 << (2 * base.order)
        self._mi = mi
        self._masks = masks
        self._alphas = alphas
        self._falphas = falphas
        self._counts = np.zeros(coff, np.uint16)

    # -- phases

    def train(self, sequence, rng: np.random.Generator | None = None) -> "ModelEnsemble":
        """Count one sequence (str, bytes or symbol array)."""
        syms = to_symbols(sequence, rng)
        return self.train_many_packed(syms, np.array([0, len(syms)], np.int64))

    def train_many(self, sequences: Iterable, rng: np.random.Generator | None = None) -> "ModelEnsemble":
        """Count several sequences, resetting the context between them."""
        return self.train_many_packed(*pack_sequences(sequences, rng))

    def train_many_packed(self, syms: np.ndarray, offs: np.ndarray) -> "ModelEnsemble":
        if self.frozen:
            raise FrozenModel("cannot train a frozen ensemble")
        K.train_kernel(syms, offs, self._mi, self._masks, self._counts)
        return self

    def freeze(self) -> "ModelEnsemble":
        self.frozen = True
        return self

    def _require_frozen(self):
        if not self.frozen:
            raise FrozenModel("code length estimation requires a frozen ensemble")

    # -- estimation

    def probability(self, context, symbol) -> float:
        """Mixed probability of ``symbol`` following ``context`` under the current weights."""
        ctx = to_symbols(context)
        s = int(to_symbols(symbol)[0]) if not isinstance(symbol, (int, np.integer)) else int(symbol)
        q = np.empty(4)
        K.point_probability(
            ctx[-32:], self._mi, self._masks, self._alphas, self._falphas,
            self._counts, self.weights, PROB_FLOOR, q,
        )
        return float(q[s])

    def distribution(self, context) -> np.ndarray:
        ctx = to_symbols(context)
        q = np.empty(4)
        K.point_probability(
            ctx[-32:], self._mi, self._masks, self._alphas, self._falphas,
            self._counts, self.weights, PROB_FLOOR, q,
        )
        return q

    def code_length(self, sequence, rng: np.random.Generator | None = None) -> float:
        syms = to_symbols(sequence, rng)
        return float(self.code_lengths_packed(syms, np.array([0, len(syms)], np.int64))[0])

    def code_lengths(self, sequences: Iterable, rng: np.random.Generator | None = None) -> np.ndarray:
        return self.code_lengths_packed(*pack_sequences(sequences, rng))

    def code_lengths_packed(self, syms, offs, which=None, limits=None) -> np.ndarray:
        """Bits for each packed sequence (or the subset ``which``).

        With ``limits`` the estimate of a sequence stops as soon as it
        exceeds its limit; the returned value is then only known to be
        larger than the limit.
        """
        self._require_frozen()
        if which is None:
            which = np.arange(len(offs) - 1, dtype=np.int64)
        else:
            which = np.asarray(which, np.int64)
        if limits is None:
            limits = np.full(len(which), np.inf)
        out = np.empty(len(which))
        K.estimate_kernel(
            syms, offs, which, np.asarray(limits, float), self._mi, self._masks,
            self._alphas, self._falphas, self._counts, self.weights,
            self.gamma, PROB_FLOOR, out,
        )
        return out

    # -- introspection

    def count(self, model: int, context, symbol) -> int:
        """Raw counter of one model (0 when the context is absent)."""
        ctx = to_symbols(context)
        k = int(self._mi[model, K.ORDER])
        if len(ctx) < k:
            return 0
        h = 0
        for c in ctx[len(ctx) - k:]:
            h = (h << 2) | int(c)
        base = K.lookup(model, np.uint64(h), self._mi, self._counts)
        if base < 0:
            return 0
        s = int(to_symbols(symbol)[0]) if not isinstance(symbol, (int, np.integer)) else int(symbol)
        return int(self._counts[base + s])

    @property
    def table_bytes(self) -> int:
        return self._counts.nbytes

    def describe(self) -> dict:
        out = []
        for cfg in self.models:
            if isinstance(cfg, StcmConfig):
                out.append({"kind": "stcm", "order": cfg.order, "alpha": cfg.base.alpha,
                            "max_substitutions": cfg.max_substitutions,
                            "fallback_alpha": cfg.fallback_alpha})
            else:
                out.append({"kind": "fcm", "order": cfg.order, "alpha": cfg.alpha})
        return {"models": out, "gamma": self.gamma, "hash_bits": self.hash_bits}

    @classmethod
    def from_description(cls, desc: dict) -> "ModelEnsemble":
        models = []
        for m in desc["models"]:
            base = FcmConfig(int(m["order"]), float(m.get("alpha", 1 / 16)))
            if m.get("kind", "fcm") == "stcm":
                models.append(StcmConfig(base, int(m.get("max_substitutions", 3)),
                                         float(m.get("fallback_alpha", 1.0))))
            else:
                models.append(base)
        return cls(models, gamma=float(desc.get("gamma", 0.99)),
                   hash_bits=int(desc.get("hash_bits", 22)))


def train(ensemble: ModelEnsemble, sequence, rng=None) -> ModelEnsemble:
    return ensemble.train(sequence, rng)


def freeze(ensemble: ModelEnsemble) -> ModelEnsemble:
    return ensemble.freeze()


def probability(ensemble: ModelEnsemble, context, symbol) -> float:
    return ensemble.probability(context, symbol)


def code_length(ensemble: ModelEnsemble, sequence, rng=None) -> float:
    return ensemble.code_length(sequence, rng)


def uniform_bits(length: int) -> float:
    return float(LOG2_ALPHABET * length)

