"""Recursive read filtering and the resulting sort plan.

For each selected reference, in rank order, a fresh ensemble is trained on
the reference and frozen, and every still-unfiltered read ``y`` is scored by

    R(y) = C(y || x) / (2 |y|)

Reads with R <= t2 join that reference's group; the rest go on to the next
reference. The sorted file is the groups in pass order followed by the
reads no reference claimed.

Reference models are trained on both strands, because reads are sequenced
from either one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .context_models import (
    LOG2_ALPHABET, ModelEnsemble, default_models, pack_sequences, reverse_complement,
    table_bits_for, to_symbols,
)
from .errors import DomainError, EmptyRead, InvalidPlan
from .reorder_codec import is_permutation

log = logging.getLogger(__name__)

DEFAULT_T2 = 0.5


@dataclass(frozen=True)
class FilterThresholds:
    t1: float = 50.0
    t2: float = DEFAULT_T2

    def __post_init__(self):
        if not self.t2 >= 0:
            raise DomainError("t2 must be >= 0")


@dataclass
class SortPlan:
    groups: list[tuple[str, np.ndarray]] = field(default_factory=list)
    residual: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    @property
    def permutation(self) -> np.ndarray:
        parts = [idx for _, idx in self.groups] + [self.residual]
        return np.concatenate(parts).astype(np.int64) if parts else np.zeros(0, np.int64)

    @property
    def n(self) -> int:
        return sum(len(idx) for _, idx in self.groups) + len(self.residual)

    def group_sizes(self) -> dict:
        return {rid: len(idx) for rid, idx in self.groups}

    def summary(self) -> dict:
        return {
            "groups": [{"ref_id": rid, "reads": int(len(idx))} for rid, idx in self.groups],
            "residual": int(len(self.residual)),
        }

    @classmethod
    def identity(cls, n: int) -> "SortPlan":
        return cls([], np.arange(n, dtype=np.int64))


def reference_model(ref, models=None, rng: np.random.Generator | None = None,
                    both_strands: bool = True) -> ModelEnsemble:
    """Frozen ensemble trained on one reference (and its reverse complement)."""
    syms = to_symbols(ref, rng if rng is not None else np.random.default_rng(0))
    seqs = [syms, reverse_complement(syms)] if both_strands else [syms]
    ens = ModelEnsemble(
        models if models is not None else default_models(),
        hash_bits=table_bits_for(sum(len(s) for s in seqs)),
    )
    ens.train_many(seqs)
    return ens.freeze()


def score_from_bits(bits: float, length: int) -> float:
    if length <= 0:
        raise EmptyRead("the read score is undefined for an empty read")
    return bits / (length * LOG2_ALPHABET)


def read_score(y, ref_model: ModelEnsemble, rng: np.random.Generator | None = None) -> float:
    if len(y) == 0:
        raise EmptyRead("the read score is undefined for an empty read")
    return score_from_bits(ref_model.code_length(y, rng), len(y))


class PackedReads:
    """Read sequences mapped to symbols once, so every pass sees the same draws for non-ACGT bytes."""

    def __init__(self, sequences: Sequence, seed: int = 0):
        self.syms, self.offs = pack_sequences(sequences, np.random.default_rng([seed, 0x6669]))
        self.lengths = np.diff(self.offs)

    def __len__(self):
        return len(self.lengths)


def filter_pass(reads: PackedReads, candidates: np.ndarray, ref_model: ModelEnsemble, t2: float):
    """Split ``candidates`` into (filtered, unfiltered) by R <= t2.

    Scoring stops as soon as a read's running code length passes
    ``2 * t2 * |y|``: code lengths only grow, so the decision is exact.
    Empty reads cannot be scored and are never filtered.
    """
    candidates = np.asarray(candidates, np.int64)
    lens = reads.lengths[candidates]
    scorable = candidates[lens > 0]
    limits = LOG2_ALPHABET * t2 * reads.lengths[scorable].astype(float)
    bits = ref_model.code_lengths_packed(reads.syms, reads.offs, scorable, limits)
    keep = np.zeros(len(candidates), bool)
    keep[lens > 0] = bits <= limits
    return candidates[keep], candidates[~keep]


def recursive_filter(reads: PackedReads, selected_refs: Sequence, t2: float = DEFAULT_T2,
                     models=None, seed: int = 0) -> SortPlan:
    """``selected_refs`` are (ref_id, sequence) pairs in rank order."""
    FilterThresholds(t2=t2)
    remaining = np.arange(len(reads), dtype=np.int64)
    groups = []
    for i, (rid, seq) in enumerate(selected_refs):
        if not len(remaining):
            log.info("all reads filtered after %d of %d references", i, len(selected_refs))
            break
        model = reference_model(seq, models, np.random.default_rng([seed, 0x7266, i]))
        filtered, remaining = filter_pass(reads, remaining, model, t2)
        log.info("pass %d (%s): %d filtered, %d left", i + 1, rid, len(filtered), len(remaining))
        groups.append((rid, filtered))
    return SortPlan(groups, remaining)


def apply_plan(records: Sequence, plan: SortPlan | np.ndarray) -> list:
    """``output[k] = records[permutation[k]]``; whole records move together."""
    perm = plan.permutation if isinstance(plan, SortPlan) else np.asarray(plan, np.int64)
    if len(perm) != len(records):
        raise InvalidPlan(f"plan covers {len(perm)} reads, input has {len(records)}")
    if not is_permutation(perm):
        raise InvalidPlan("plan is not a permutation of the input reads")
    return [records[i] for i in perm.tolist()]
