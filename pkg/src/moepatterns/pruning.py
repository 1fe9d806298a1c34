"""Contribution-aware expert pruning from a learned factor pair (D, R).

Each expert's contribution is its dictionary row weighted by how often
every pattern fires: e = D @ row_sums(R).  A quantile of e fixes the keep
threshold once; the least-used pattern is then removed repeatedly (column
of D, row of R) until few enough experts stay above the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .activations import ActivationTensor, ExpertActivationMatrix, ExpertLayout, flatten_to_matrix
from .errors import ConfigError, InvalidValueError, ShapeError


@dataclass(frozen=True)
class ContributionState:
    """Per-pattern usage, per-expert contribution, and the keep threshold."""

    r_sum: np.ndarray
    e: np.ndarray
    f: float | None = None

    def __post_init__(self) -> None:
        for name in ("r_sum", "e"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class PruneMask:
    """Binary keep/drop decision per expert plus the removal history."""

    mask: np.ndarray
    k1: float
    k2: float
    trace: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=np.uint8)
        if mask.ndim != 1 or not np.isin(mask, (0, 1)).all():
            raise InvalidValueError("mask must be a flat 0/1 vector")
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "trace", tuple(int(t) for t in self.trace))

    @property
    def kept_indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.mask))

    @property
    def num_kept(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class MaskedActivationMatrix:
    """Activation rows surviving a mask, remembering who each row was."""

    data: np.ndarray
    kept_rows: tuple[int, ...]
    kept_pairs: tuple[tuple[int, int], ...]
    source_layout: ExpertLayout

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def degenerate(self) -> bool:
        return len(self.kept_rows) == 0


def _check_factors(dictionary: np.ndarray, coding: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dictionary, dtype=np.float64)
    r = np.asarray(coding, dtype=np.float64)
    if d.ndim != 2 or r.ndim != 2:
        raise ShapeError("dictionary and coding must be 2-D")
    if d.shape[1] != r.shape[0]:
        raise ShapeError(f"dictionary atoms {d.shape[1]} != coding rows {r.shape[0]}")
    if r.size and (r < 0).any():
        raise InvalidValueError("coding matrix must be nonnegative")
    if d.size and (d < 0).any():
        raise InvalidValueError("dictionary must be nonnegative")
    return d, r


def contribution_scores(dictionary: np.ndarray, coding: np.ndarray) -> ContributionState:
    """Sum pattern usage over samples, then weight atoms into expert scores."""
    d, r = _check_factors(dictionary, coding)
    r_sum = r.sum(axis=1)
    e = d @ r_sum
    return ContributionState(r_sum=r_sum, e=e)


def threshold_mask(e: np.ndarray, k1: float) -> tuple[float, np.ndarray]:
    """Keep threshold at the k1-quantile of descending scores, and its mask.

    The threshold is the ceil(k1 * Ne)-th largest score (1-based, clamped
    to the last); the mask keeps every expert scoring at or above it.
    """
    scores = np.asarray(e, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ShapeError("contribution vector must be 1-D and non-empty")
    if not 0 < k1 < 1:
        raise ConfigError("k1 must lie in (0, 1)")
    ne = scores.size
    rank = min(max(math.ceil(k1 * ne), 1), ne)
    f = float(np.sort(scores)[::-1][rank - 1])
    return f, (scores >= f).astype(np.uint8)


def prune(
    dictionary: np.ndarray,
    coding: np.ndarray,
    k1: float,
    k2: float,
    enable_fallback: bool = True,
) -> PruneMask:
    """Iteratively drop least-used patterns until the keep budget is met.

    The threshold f is fixed before the loop and never refreshed.  While
    more than ``(1 - k2) * Ne`` experts score at or above f, the pattern
    with the smallest usage (lowest index on ties) is removed from both
    factors and the scores recomputed.  If every pattern is removed while
    the mask is still too large, the fallback keeps the top
    ``ceil((1 - k2) * Ne)`` experts by original score.
    """
    if not 0 < k1 < 1 or not 0 < k2 < 1:
        raise ConfigError("k1 and k2 must lie in (0, 1)")
    d, r = _check_factors(dictionary, coding)
    ne = d.shape[0]
    if ne == 0:
        raise ShapeError("cannot prune zero experts")

    # Removed patterns are zeroed rather than deleted: the score sums then
    # keep their shape, so experts sitting exactly on the threshold are not
    # flipped by re-rounding when an irrelevant pattern goes away.
    r_sum = r.sum(axis=1)
    alive = np.ones(d.shape[1], dtype=bool)
    e = d @ np.where(alive, r_sum, 0.0)
    original_e = e.copy()
    f, mask = threshold_mask(e, k1)
    budget = (1.0 - k2) * ne
    trace: list[int] = []

    while int(mask.sum()) > budget:
        if not alive.any():
            if enable_fallback:
                keep = sorted(range(ne), key=lambda i: (-original_e[i], i))
                keep = keep[: math.ceil(budget)]
                mask = np.zeros(ne, dtype=np.uint8)
                mask[keep] = 1
            break
        worst = int(np.argmin(np.where(alive, r_sum, np.inf)))
        trace.append(worst)
        alive[worst] = False
        e = d @ np.where(alive, r_sum, 0.0)
        mask = (e >= f).astype(np.uint8)

    return PruneMask(mask=mask, k1=k1, k2=k2, trace=tuple(trace))


def apply_mask(source, mask: PruneMask | np.ndarray) -> MaskedActivationMatrix:
    """Drop the rows of an activation matrix (or sentence tensor) a mask rejects.

    The result keeps each surviving row's original (layer, expert) identity.
    An all-zero mask yields an empty, degenerate matrix.
    """
    bits = mask.mask if isinstance(mask, PruneMask) else np.asarray(mask, dtype=np.uint8)
    if isinstance(source, ActivationTensor):
        source = flatten_to_matrix(source)
    if isinstance(source, ExpertActivationMatrix):
        data = source.data
        layout = source.layout
    else:
        data = np.asarray(source, dtype=np.float64)
        layout = ExpertLayout(1, data.shape[0])
    if bits.shape != (data.shape[0],):
        raise ShapeError(f"mask length {bits.shape} does not match {data.shape[0]} experts")
    kept = tuple(int(i) for i in np.flatnonzero(bits))
    return MaskedActivationMatrix(
        data=data[list(kept), :],
        kept_rows=kept,
        kept_pairs=tuple(layout.pair_of(i) for i in kept),
        source_layout=layout,
    )


def prune_mask_to_json(mask: PruneMask, layout: ExpertLayout | None = None) -> dict:
    """Wire payload for a mask; unknown layouts are treated as one layer."""
    ne = int(mask.mask.size)
    layout = layout or ExpertLayout(1, ne)
    if layout.num_experts != ne:
        raise ShapeError(f"layout covers {layout.num_experts} experts, mask {ne}")
    kept = list(mask.kept_indices)
    return {
        "ne": ne,
        "k1": mask.k1,
        "k2": mask.k2,
        "mask": [int(b) for b in mask.mask],
        "kept": kept,
        "kept_layer_expert": [list(layout.pair_of(i)) for i in kept],
        "trace": list(mask.trace),
    }
