"""Acceptance gate: one test per release criterion, at its stated tolerance.

Each test prints one PASS line once its assertions hold, so a plain
``pytest tests/test_acceptance.py -v -s`` reads as a checklist.
"""

import struct
import time

import numpy as np
import pytest

import moepatterns as mp
from moepatterns.activations import MOEACT_MAGIC, MOEACT_VERSION
from moepatterns.errors import BadMagicError, InvalidValueError, TruncatedPayloadError
from moepatterns.dictionary import (
    grad_data,
    grad_hier_next,
    grad_rec,
    grad_sparse_smooth,
    loss_sparse_smooth,
)

from conftest import (
    greedy_match_scores,
    make_planted_data,
    make_two_tier_data,
    naive_pair_table,
    random_tensor,
    reference_prune,
)


def test_pruning_oracle_equivalence_1000_instances():
    rng = np.random.default_rng(9000)
    start = time.perf_counter()
    for _ in range(1000):
        ne = int(rng.integers(1, 13))
        npat = int(rng.integers(1, 7))
        ns = int(rng.integers(1, 21))
        d = rng.random((ne, npat)) * rng.integers(0, 2, (ne, npat))
        r = rng.random((npat, ns)) * rng.integers(0, 2, (npat, ns))
        k1 = float(rng.uniform(0.05, 0.95))
        k2 = float(rng.uniform(0.05, 0.95))
        got = mp.prune(d, r, k1, k2)
        ref_mask, ref_trace = reference_prune(d, r, k1, k2)
        assert got.mask.tolist() == ref_mask
        assert list(got.trace) == ref_trace
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    print(f"\nPASS pruning-oracle-equivalence: 1000/1000 exact in {elapsed:.2f}s")


def test_pruning_worked_example():
    d = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    r = np.array([[1.0, 1.0], [0.0, 1.0]])
    state = mp.contribution_scores(d, r)
    assert state.e.tolist() == [2.0, 1.0, 1.5]
    f, initial = mp.threshold_mask(state.e, 0.34)
    assert f == 1.5
    assert initial.tolist() == [1, 0, 1]
    mask = mp.prune(d, r, k1=0.34, k2=0.5)
    assert mask.mask.tolist() == [1, 0, 0]
    # removal trace names the second pattern (0-based index 1)
    assert mask.trace == (1,)
    print("\nPASS pruning-worked-example: e=[2,1,1.5] f=1.5 mask=[1,0,0] trace=(1,)")


def test_dictionary_recovery_of_planted_patterns():
    start = time.perf_counter()
    passing = 0
    detail = []
    for seed in range(10):
        cfg, matrix, _ = make_planted_data(seed, ne=64, ns=500, count=8, size_range=(3, 5))
        hcfg = mp.DictionaryConfig(
            capacities=(12,), lambda0=float(matrix.data.size), max_iters=500, seed=seed
        )
        level = mp.fit_hierarchy(matrix, hcfg).level(1)
        atoms = mp.binarize_atoms(level, 0.5)
        scores = greedy_match_scores(
            [p.expert_set for p in cfg.patterns], [a.expert_rows for a in atoms]
        )
        recovered = sum(1 for s in scores if s >= 0.7)
        detail.append(recovered)
        if recovered >= 6:
            passing += 1
    elapsed = time.perf_counter() - start
    assert passing >= 8, f"only {passing}/10 seeds recovered >= 6/8 ({detail})"
    assert elapsed < 60.0
    print(f"\nPASS dictionary-recovery: {detail} patterns/seed, {passing}/10 seeds in {elapsed:.1f}s")


def test_hierarchy_consistency_two_tier():
    _, _, matrix = make_two_tier_data(seed=21)
    cfg = mp.DictionaryConfig(
        capacities=(4, 8), lambda0=float(matrix.data.size), max_iters=500, seed=2
    )
    hierarchy = mp.fit_hierarchy(matrix, cfg)
    l1, l2 = hierarchy.level(1), hierarchy.level(2)
    residual = np.abs(l1.dictionary - l2.dictionary @ l2.coding).sum(axis=0)
    assert residual.mean() < 0.1
    for level in (l1, l2):
        diffs = np.diff(np.array(level.loss_trace))
        assert (diffs <= 1e-9).all()
    print(f"\nPASS hierarchy-consistency: mean atom residual {residual.mean():.5f} < 0.1")


def _rel_err(a, b):
    return np.linalg.norm((a - b).ravel()) / max(np.linalg.norm(b.ravel()), 1e-12)


def _fd(fn, x, h=1e-6):
    g = np.zeros_like(x)
    flat, xv = g.ravel(), x.ravel()
    for i in range(xv.size):
        orig = xv[i]
        xv[i] = orig + h
        hi = fn()
        xv[i] = orig - h
        lo = fn()
        xv[i] = orig
        flat[i] = (hi - lo) / (2 * h)
    return g


def test_gradient_correctness_50_instances():
    rng = np.random.default_rng(9100)
    worst = 0.0
    for _ in range(50):
        t = rng.random((6, 4)) + 0.1
        d = rng.random((6, 4)) + 0.1
        r = rng.random((4, 4)) + 0.1
        gd, gr = grad_data(t, d, r)
        worst = max(worst, _rel_err(gd, _fd(lambda: mp.loss_data(t, d, r), d)))
        worst = max(worst, _rel_err(gr, _fd(lambda: mp.loss_data(t, d, r), r)))

        prev = rng.random((4, 6)) + 0.1
        nxt = rng.random((6, 4)) + 0.1
        gh = grad_hier_next(prev, nxt)
        worst = max(worst, _rel_err(gh, _fd(lambda: mp.loss_hier(prev, nxt), nxt)))

        pd_, nd_ = rng.random((6, 4)) + 0.1, rng.random((6, 4)) + 0.1
        pr_, nr_ = rng.random((4, 5)) + 0.1, rng.random((4, 4)) + 0.1
        gd2, gr2 = grad_rec(pd_, nd_, pr_, nr_)
        fn = lambda: mp.loss_rec(pd_, nd_, pr_, nr_)
        worst = max(worst, _rel_err(gd2, _fd(fn, nd_)))
        worst = max(worst, _rel_err(gr2, _fd(fn, nr_)))

        s = rng.random((6, 4)) + 0.1
        gs = grad_sparse_smooth(s, temperature=0.01)
        worst = max(worst, _rel_err(gs, _fd(lambda: loss_sparse_smooth(s, 0.01), s)))
        assert worst < 1e-4
    print(f"\nPASS gradient-correctness: worst relative error {worst:.2e} < 1e-4")


def test_coverage_beats_random_baselines():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(4000 + seed)
        patterns = mp.random_patterns(
            rng, 24, 6, (2, 2), weight_range=(0.9, 1.1), disjoint=True
        )
        cfg = mp.SynthConfig(
            ne=24,
            ns=200,
            patterns=patterns,
            activation_prob=0.35,
            noise_sigma=0.0,
            seed=4100 + seed,
        )
        matrix, _ = mp.generate(cfg)
        hcfg = mp.DictionaryConfig(
            capacities=(8,), lambda0=float(matrix.data.size), max_iters=300, seed=seed
        )
        level = mp.fit_hierarchy(matrix, hcfg).level(1)
        atoms = mp.binarize_atoms(level, 0.5)
        table = mp.exhaustive_coactivation(matrix, threshold=0.3, order=2)
        ours = mp.coverage(atoms, table, 10.0)

        base_rng = np.random.default_rng(4200 + seed)
        baseline_scores = []
        for _ in range(100):
            fakes = [
                mp.PatternAtom(
                    atom_index=i,
                    expert_rows=tuple(
                        int(v)
                        for v in base_rng.choice(24, size=len(a.expert_rows), replace=False)
                    )
                    if a.expert_rows
                    else (),
                    weights=tuple(1.0 for _ in a.expert_rows),
                    usage=1.0,
                )
                for i, a in enumerate(atoms)
            ]
            baseline_scores.append(mp.coverage(fakes, table, 10.0))
        if ours > float(np.mean(baseline_scores)):
            wins += 1
    assert wins >= 18, f"dictionary coverage beat random baselines in only {wins}/20 seeds"
    print(f"\nPASS coverage-direction: beat random baselines in {wins}/20 seeds")


def test_exhaustive_search_oracle_50_instances():
    rng = np.random.default_rng(9200)
    for _ in range(50):
        ne = int(rng.integers(2, 21))
        ns = int(rng.integers(1, 101))
        x = rng.random((ne, ns)) * 2.0
        theta = float(rng.uniform(0.2, 1.8))
        table = mp.exhaustive_coactivation(x, threshold=theta, order=2)
        assert dict(table.entries) == naive_pair_table(x, theta)
    print("\nPASS exhaustive-oracle: 50/50 order-2 tables match the double loop")


def test_published_formula_checks():
    assert abs(mp.pruned_param_count(25) - 12.725) < 1e-9
    assert abs(mp.pruned_param_count(0) - 16.4) < 1e-9
    assert abs(mp.pruned_param_count(100) - 1.7) < 1e-9
    change = mp.relative_change(0.50, 0.53)
    assert change == pytest.approx(-0.0566, abs=1e-4)
    assert abs(change) == pytest.approx(0.057, abs=1e-3)
    print("\nPASS formula-checks: param counts 16.4/12.725/1.7, change -5.66%")


def test_moeact_round_trip_and_rejections(tmp_path):
    rng = np.random.default_rng(9300)
    for i in range(100):
        tensor = random_tensor(rng, "token" if i % 2 else "sentence")
        path = tmp_path / f"t{i}.moeact"
        mp.write_moeact(tensor, path)
        back = mp.read_moeact(path)
        assert back.values.tobytes() == tensor.values.tobytes()
        assert (
            back.num_samples,
            back.num_layers,
            back.num_experts_per_layer,
            back.granularity,
        ) == (
            tensor.num_samples,
            tensor.num_layers,
            tensor.num_experts_per_layer,
            tensor.granularity,
        )

    header = struct.pack("<4sIB3xIII", MOEACT_MAGIC, MOEACT_VERSION, 0, 1, 1, 2)
    payload = np.array([0.5, 0.5], dtype="<f4").tobytes()
    ok = tmp_path / "ok.moeact"
    ok.write_bytes(header + payload)
    mp.read_moeact(ok)

    bad_magic = tmp_path / "magic.moeact"
    bad_magic.write_bytes(b"NOPE" + (header + payload)[4:])
    with pytest.raises(BadMagicError):
        mp.read_moeact(bad_magic)

    truncated = tmp_path / "short.moeact"
    truncated.write_bytes((header + payload)[:-3])
    with pytest.raises(TruncatedPayloadError):
        mp.read_moeact(truncated)

    negative = tmp_path / "neg.moeact"
    negative.write_bytes(header + np.array([-0.5, 0.5], dtype="<f4").tobytes())
    with pytest.raises(InvalidValueError):
        mp.read_moeact(negative)
    print("\nPASS moeact-round-trip: 100 bit-exact round trips, 3 rejection categories")


def test_domain_similarity_block_structure():
    # domains A and B share experts 5..9; domain C lives on 20..29
    ne, per_domain = 30, 40
    bank = {
        "alpha": [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)],
        "beta": [(5, 6), (7, 8), (9, 10), (11, 12), (13, 14)],
        "gamma": [(20, 21), (22, 23), (24, 25), (26, 27), (28, 29)],
    }
    blocks, labels = [], []
    for di, (name, pairs) in enumerate(sorted(bank.items())):
        patterns = tuple(mp.PlantedPattern(p, (1.0, 1.0)) for p in pairs)
        cfg = mp.SynthConfig(
            ne=ne,
            ns=per_domain,
            patterns=patterns,
            activation_prob=0.5,
            noise_sigma=0.0,
            seed=500 + di,
        )
        matrix, _ = mp.generate(cfg)
        blocks.append(matrix.data)
        labels.extend([name] * per_domain)
    x = np.concatenate(blocks, axis=1)
    profiles = mp.domain_profiles(x, mp.DomainLabels(tuple(labels)), threshold=0.3)
    order = [p.domain for p in profiles]
    sim = mp.similarity_matrix(profiles)
    a, b, c = order.index("alpha"), order.index("beta"), order.index("gamma")
    assert sim[a, b] > sim[a, c]
    assert sim[a, b] > sim[b, c]
    print(
        f"\nPASS domain-similarity: overlap pair {sim[a, b]:.3f} > cross "
        f"{max(sim[a, c], sim[b, c]):.3f}"
    )
