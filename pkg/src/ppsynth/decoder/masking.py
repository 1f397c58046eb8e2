from __future__ import annotations

from typing import Sequence

import numpy as np

from ..grammar import LexError, PrefixState, token_kind, viable_kinds


class DeadEnd(RuntimeError):
    """No vocabulary token can extend the current prefix."""


def build_mask(state: PrefixState, vocab: Sequence[str]) -> np.ndarray:
    """Bit v is set iff appending vocab[v] keeps the prefix viable."""
    viable = viable_kinds(state)
    mask = np.zeros(len(vocab), dtype=bool)
    for i, text in enumerate(vocab):
        try:
            kind = token_kind(text)
        except LexError:
            continue
        mask[i] = kind in viable
    if not mask.any() and not state.complete:
        raise DeadEnd("no viable token in the vocabulary")
    return mask


def apply_mask(weights, mask, temperature: float = 0.3, reference: float = 0.3) -> np.ndarray:
    """Renormalized probabilities; masked-out entries are exactly zero.

    Weights are sharpened or flattened as ``w ** (reference / temperature)``
    so that the builtin weights are used as-is at the reference temperature.
    """
    w = np.asarray(weights, dtype=float)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    w = np.where(mask & (w > 0), w, 0.0)
    if not w.any():
        raise DeadEnd("every viable token has zero weight")
    w = np.where(w > 0, np.power(w / w.max(), reference / temperature), 0.0)
    return w / w.sum()
