"""Shared oracle helpers for the test suite.

Everything here is deliberately written straight-line and independent of
the library's own code paths, so tests can check implementations against
naive re-derivations.
"""

from __future__ import annotations

import math

import numpy as np

import moepatterns as mp


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    return len(a & b) / len(a | b) if a | b else 1.0


def greedy_match_scores(planted, found) -> list[float]:
    """Best-pair greedy assignment of planted supports to learned supports."""
    pairs = sorted(
        ((jaccard(p, f), i, j) for i, p in enumerate(planted) for j, f in enumerate(found)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    used_p, used_f, scores = set(), set(), []
    for score, i, j in pairs:
        if i in used_p or j in used_f:
            continue
        used_p.add(i)
        used_f.add(j)
        scores.append(score)
    return scores


def naive_pair_table(data: np.ndarray, theta) -> dict[tuple[int, int], float]:
    """O(Ne^2 Ns) double-loop co-activation counter."""
    ne, ns = data.shape
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = np.full(ne, float(theta))
    out = {}
    for i in range(ne):
        for j in range(i + 1, ne):
            count = 0
            for s in range(ns):
                if data[i, s] >= theta[i] and data[j, s] >= theta[j]:
                    count += 1
            out[(i, j)] = count / ns
    return out


def reference_prune(d: np.ndarray, r: np.ndarray, k1: float, k2: float):
    """Straight-line transcription of the pruning procedure.

    Works on plain Python lists, recomputing everything from scratch each
    round; returns (mask, trace) with original 0-based pattern indices.
    """
    d = [list(map(float, row)) for row in d]
    r = [list(map(float, row)) for row in r]
    ne = len(d)
    npat = len(r)

    def scores(cols_alive):
        e = []
        for expert in range(ne):
            total = 0.0
            for p in cols_alive:
                total += d[expert][p] * sum(r[p])
            e.append(total)
        return e

    alive = list(range(npat))
    e0 = scores(alive)
    rank = min(max(math.ceil(k1 * ne), 1), ne)
    f = sorted(e0, reverse=True)[rank - 1]
    mask = [1 if v >= f else 0 for v in e0]
    trace = []
    budget = (1.0 - k2) * ne
    while sum(mask) > budget:
        if not alive:
            order = sorted(range(ne), key=lambda i: (-e0[i], i))
            keep = set(order[: math.ceil(budget)])
            mask = [1 if i in keep else 0 for i in range(ne)]
            break
        worst_pos = min(range(len(alive)), key=lambda pos: (sum(r[alive[pos]]), pos))
        trace.append(alive.pop(worst_pos))
        e = scores(alive)
        mask = [1 if v >= f else 0 for v in e]
    return mask, trace


def make_planted_data(
    seed: int,
    ne: int = 64,
    ns: int = 500,
    count: int = 8,
    size_range=(3, 5),
    noise: float = 0.05,
    prob: float = 0.3,
    gain_range=(0.5, 1.5),
):
    rng = np.random.default_rng(1000 + seed)
    patterns = mp.random_patterns(rng, ne, count, size_range, weight_range=(0.8, 1.2))
    config = mp.SynthConfig(
        ne=ne,
        ns=ns,
        patterns=patterns,
        activation_prob=prob,
        noise_sigma=noise,
        seed=2000 + seed,
        gain_range=gain_range,
    )
    matrix, fires = mp.generate(config)
    return config, matrix, fires


def make_two_tier_data(seed: int, ne: int = 64, ns: int = 400, noise: float = 0.02):
    """Four coarse patterns, each the union of two disjoint fine patterns."""
    rng = np.random.default_rng(seed)
    fine = mp.random_patterns(rng, ne, 8, (3, 4), weight_range=(0.8, 1.2))
    coarse = tuple(
        mp.PlantedPattern(
            fine[2 * g].expert_set + fine[2 * g + 1].expert_set,
            fine[2 * g].weight_profile + fine[2 * g + 1].weight_profile,
        )
        for g in range(4)
    )
    config = mp.SynthConfig(
        ne=ne, ns=ns, patterns=coarse, activation_prob=0.3, noise_sigma=noise, seed=seed + 1
    )
    matrix, fires = mp.generate(config)
    return fine, coarse, matrix


def random_tensor(rng: np.random.Generator, granularity: str = "sentence"):
    m = int(rng.integers(1, 4))
    n = int(rng.integers(1, 5))
    ns = int(rng.integers(0, 6))
    if granularity == "sentence":
        values = rng.random((ns, m, n)).astype(np.float32) * 3.0
        counts = None
    else:
        counts = rng.integers(1, 5, size=ns).astype(np.uint32)
        total = int(counts.sum())
        values = rng.random((total, m, n)).astype(np.float32)
        # keep per-token per-layer sums inside the routing budget
        sums = values.sum(axis=2, keepdims=True)
        values = values / np.maximum(sums, 1.0)
    return mp.ActivationTensor(
        granularity=granularity,
        num_samples=ns,
        num_layers=m,
        num_experts_per_layer=n,
        values=values,
        token_counts=counts,
    )
