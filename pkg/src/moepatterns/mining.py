"""Interpretation of learned dictionaries against raw co-activation data.

Dictionary atoms are binarized into expert sets, compared with the full
enumeration of frequently co-activating expert pairs/triplets, and broken
down by input domain.  Token-level annotation assigns every token to the
atom that dominates its encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .activations import ActivationTensor, DomainLabels, ExpertActivationMatrix, ExpertLayout
from .errors import ConfigError, DegenerateError, InvalidValueError, ShapeError
from .dictionary import DictionaryLevel, Hierarchy, encode

COMBINATION_CAP = 5_000_000


@dataclass(frozen=True)
class PatternAtom:
    """A binarized dictionary column: the experts that carry its mass."""

    atom_index: int
    expert_rows: tuple[int, ...]
    weights: tuple[float, ...]
    usage: float
    expert_pairs: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "expert_rows", tuple(int(r) for r in self.expert_rows))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.usage < 0:
            raise InvalidValueError("atom usage must be nonnegative")
        if len(self.weights) != len(self.expert_rows):
            raise ShapeError("weights must align with expert rows")

    @property
    def row_set(self) -> frozenset[int]:
        return frozenset(self.expert_rows)


@dataclass(frozen=True)
class CoactivationTable:
    """Complete enumeration of expert combinations and their frequencies."""

    order: int
    threshold: np.ndarray
    num_samples: int
    entries: tuple[tuple[tuple[int, ...], float], ...] = field(default_factory=tuple)

    def top_fraction(self, k_percent: float) -> tuple[tuple[tuple[int, ...], float], ...]:
        """The combinations in the table's top ``k_percent``."""
        if not 0 < k_percent <= 100:
            raise ConfigError("k_percent must lie in (0, 100]")
        count = math.ceil(k_percent / 100.0 * len(self.entries))
        return self.entries[:count]


@dataclass(frozen=True)
class DomainProfile:
    """Normalized frequency of expert activations within one domain."""

    domain: str
    frequencies: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        freq = np.asarray(self.frequencies, dtype=np.float64)
        freq.flags.writeable = False
        object.__setattr__(self, "frequencies", freq)
        if (freq < 0).any():
            raise InvalidValueError("profile frequencies must be nonnegative")
        total = freq.sum()
        if self.degenerate:
            if total != 0:
                raise InvalidValueError("degenerate profile must be all-zero")
        elif abs(total - 1.0) > 1e-9:
            raise InvalidValueError(f"profile must sum to 1, got {total}")


@dataclass(frozen=True)
class TokenAnnotation:
    """Per-token atom assignments plus the atoms used for presentation."""

    level_index: int
    tau: float
    assignments: tuple[tuple[int | None, ...], ...]
    atoms: tuple[PatternAtom, ...]


def binarize_atoms(
    level: DictionaryLevel, tau: float, layout: ExpertLayout | None = None
) -> list[PatternAtom]:
    """Threshold each dictionary column at ``tau`` times its peak entry.

    An expert belongs to an atom when its weight is at least ``tau`` times
    the column maximum; all-zero columns produce empty atoms.  Usage is the
    L1 mass of the atom's coding row.
    """
    if not 0 < tau < 1:
        raise ConfigError("tau must lie in (0, 1)")
    d = level.dictionary
    usage = np.abs(level.coding).sum(axis=1)
    atoms = []
    for p in range(d.shape[1]):
        col = d[:, p]
        peak = col.max() if col.size else 0.0
        rows = tuple(int(r) for r in np.flatnonzero(col >= tau * peak)) if peak > 0 else ()
        pairs = tuple(layout.pair_of(r) for r in rows) if layout is not None else None
        atoms.append(
            PatternAtom(
                atom_index=p,
                expert_rows=rows,
                weights=tuple(float(col[r]) for r in rows),
                usage=float(usage[p]),
                expert_pairs=pairs,
            )
        )
    return atoms


def default_activation_threshold(x: np.ndarray) -> np.ndarray:
    """Per-expert cutoff: 75th percentile of the expert's nonzero values.

    Experts that never activate get an infinite cutoff so they are never
    counted as active.
    """
    data = np.asarray(x, dtype=np.float64)
    thresholds = np.full(data.shape[0], np.inf)
    for r in range(data.shape[0]):
        nonzero = data[r][data[r] > 0]
        if nonzero.size:
            thresholds[r] = np.percentile(nonzero, 75)
    return thresholds


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, ExpertActivationMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _active_mask(data: np.ndarray, threshold) -> np.ndarray:
    if threshold is None:
        threshold = default_activation_threshold(data)
    theta = np.asarray(threshold, dtype=np.float64)
    if theta.ndim == 0:
        return data >= theta
    if theta.shape != (data.shape[0],):
        raise ShapeError(f"threshold vector has shape {theta.shape}, expected ({data.shape[0]},)")
    return data >= theta[:, np.newaxis]


def exhaustive_coactivation(
    x, threshold=None, order: int = 2, cap: int = COMBINATION_CAP
) -> CoactivationTable:
    """Enumerate all expert pairs or triplets by co-activation frequency.

    A combination's frequency is the fraction of samples in which every
    member is active (value at or above the threshold).  The table holds
    every combination, sorted by descending frequency with lexicographic
    tie-break.  Refuses enumerations larger than ``cap``.
    """
    data = _as_matrix(x)
    ne, ns = data.shape
    if order not in (2, 3):
        raise ConfigError("order must be 2 or 3")
    if ns == 0:
        raise DegenerateError("co-activation frequency is undefined without samples")
    total = math.comb(ne, order)
    if total > cap:
        raise ConfigError(
            f"{total} combinations of order {order} exceed the cap of {cap}"
        )
    if threshold is None:
        threshold = default_activation_threshold(data)
    active = _active_mask(data, threshold).astype(np.int32)
    entries: list[tuple[tuple[int, ...], float]] = []
    if order == 2:
        counts = active @ active.T
        for i, j in combinations(range(ne), 2):
            entries.append(((i, j), counts[i, j] / ns))
    else:
        for i in range(ne):
            row_i = active[i]
            for j in range(i + 1, ne):
                both = row_i * active[j]
                higher = active[j + 1 :] @ both
                for offset, c in enumerate(higher):
                    entries.append(((i, j, j + 1 + offset), c / ns))
    entries.sort(key=lambda e: (-e[1], e[0]))
    theta = np.asarray(threshold, dtype=np.float64)
    theta = theta if theta.ndim else np.full(ne, float(theta))
    return CoactivationTable(
        order=order, threshold=theta, num_samples=ns, entries=tuple(entries)
    )


def coverage(atoms: list[PatternAtom], table: CoactivationTable, k_percent: float) -> float:
    """Fraction of atoms whose expert set contains a top-``k_percent`` combination.

    Containment means the combination's experts are a subset of the atom's
    binarized expert set.
    """
    if not atoms:
        raise DegenerateError("coverage is undefined with zero atoms")
    top = table.top_fraction(k_percent)
    hits = 0
    for atom in atoms:
        rows = atom.row_set
        if any(rows.issuperset(combo) for combo, _ in top):
            hits += 1
    return hits / len(atoms)


def domain_profiles(x, labels: DomainLabels, threshold=None) -> list[DomainProfile]:
    """Per-domain distribution of which experts activate, normalized to 1."""
    data = _as_matrix(x)
    if len(labels) != data.shape[1]:
        raise ShapeError(
            f"{len(labels)} labels for {data.shape[1]} samples; every sample needs one"
        )
    active = _active_mask(data, threshold)
    profiles = []
    label_arr = np.asarray(labels.labels)
    for domain in labels.label_set:
        cols = label_arr == domain
        counts = active[:, cols].sum(axis=1).astype(np.float64)
        total = counts.sum()
        if total == 0:
            profiles.append(DomainProfile(domain=domain, frequencies=counts, degenerate=True))
        else:
            profiles.append(DomainProfile(domain=domain, frequencies=counts / total))
    return profiles


def similarity_matrix(profiles: list[DomainProfile]) -> np.ndarray:
    """Pairwise cosine similarity of domain profiles.

    Rows and columns follow the given profile order.  Entries touching a
    degenerate (all-zero) profile are NaN rather than a silent zero.
    """
    if not profiles:
        raise DegenerateError("similarity needs at least one profile")
    lengths = {p.frequencies.shape[0] for p in profiles}
    if len(lengths) != 1:
        raise ShapeError("profiles must have equal length")
    vectors = np.stack([p.frequencies for p in profiles])
    norms = np.linalg.norm(vectors, axis=1)
    k = len(profiles)
    sim = np.full((k, k), np.nan)
    for a in range(k):
        for b in range(a, k):
            if norms[a] > 0 and norms[b] > 0:
                value = 1.0 if a == b else float(
                    vectors[a] @ vectors[b] / (norms[a] * norms[b])
                )
                sim[a, b] = sim[b, a] = value
    return sim


def annotate_tokens(
    tensor: ActivationTensor, hierarchy: Hierarchy, level: int, tau: float
) -> TokenAnnotation:
    """Assign every token to the atom dominating its encoding.

    Each token's flattened activation vector is encoded against the chosen
    level's dictionary; the assignment is the argmax coefficient (lowest
    atom index on ties) or ``None`` when the coefficients are all zero.
    """
    if tensor.granularity != "token":
        raise InvalidValueError("annotation requires a token-granularity tensor")
    dict_level = hierarchy.level(level)
    d = dict_level.dictionary
    ne = tensor.num_layers * tensor.num_experts_per_layer
    if d.shape[0] != ne:
        raise ShapeError(f"dictionary rows {d.shape[0]} != tensor experts {ne}")
    flat = tensor.values.astype(np.float64).reshape(-1, ne)
    per_sample: list[tuple[int | None, ...]] = []
    start = 0
    for count in tensor.token_counts:
        sample: list[int | None] = []
        for t in range(start, start + int(count)):
            coeffs = encode(flat[t], d)
            if coeffs.max(initial=0.0) <= 0.0:
                sample.append(None)
            else:
                sample.append(int(np.argmax(coeffs)))
        per_sample.append(tuple(sample))
        start += int(count)
    atoms = tuple(binarize_atoms(dict_level, tau, layout=tensor.layout))
    return TokenAnnotation(
        level_index=level, tau=tau, assignments=tuple(per_sample), atoms=atoms
    )


# ---------------------------------------------------------------------------
# JSON payloads
# ---------------------------------------------------------------------------


def coactivation_to_json(table: CoactivationTable) -> dict:
    return {
        "order": table.order,
        "threshold": [float(t) if np.isfinite(t) else None for t in table.threshold],
        "num_samples": table.num_samples,
        "entries": [
            {"experts": list(combo), "frequency": float(freq)}
            for combo, freq in table.entries
        ],
    }


def coactivation_from_json(payload: dict) -> CoactivationTable:
    theta = np.asarray(
        [np.inf if t is None else float(t) for t in payload["threshold"]], dtype=np.float64
    )
    entries = tuple(
        (tuple(int(e) for e in entry["experts"]), float(entry["frequency"]))
        for entry in payload["entries"]
    )
    return CoactivationTable(
        order=int(payload["order"]),
        threshold=theta,
        num_samples=int(payload["num_samples"]),
        entries=entries,
    )


def atoms_to_json(atoms: list[PatternAtom]) -> list[dict]:
    return [
        {
            "atom": a.atom_index,
            "experts": list(a.expert_rows),
            "layer_expert": [list(p) for p in a.expert_pairs] if a.expert_pairs else None,
            "weights": list(a.weights),
            "usage": a.usage,
        }
        for a in atoms
    ]


def profiles_to_json(profiles: list[DomainProfile], similarity: np.ndarray) -> dict:
    sim_rows = [
        [None if not np.isfinite(v) else float(v) for v in row] for row in similarity
    ]
    return {
        "domains": [
            {
                "domain": p.domain,
                "frequencies": [float(v) for v in p.frequencies],
                "degenerate": p.degenerate,
            }
            for p in profiles
        ],
        "similarity": sim_rows,
    }
