"""Contribution-aware pruning, from a hand-sized example to learned factors.

Expert scores are e = D @ row_sums(R); a quantile of e fixes the keep
threshold once, then least-used patterns are removed until few enough
experts stay above it.
"""

import numpy as np

import moepatterns as mp

# three experts, two patterns, hand-checkable numbers
d = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
r = np.array([[1.0, 1.0], [0.0, 1.0]])

state = mp.contribution_scores(d, r)
print("pattern usage:", state.r_sum, "-> expert scores:", state.e)
f, initial = mp.threshold_mask(state.e, k1=0.34)
print(f"threshold f={f}, initial mask {initial.tolist()}")

mask = mp.prune(d, r, k1=0.34, k2=0.5)
print(f"target: keep at most {(1 - 0.5) * 3:.1f} experts")
print(f"final mask {mask.mask.tolist()}, removal trace {list(mask.trace)}")

# the same machinery on learned factors
rng = np.random.default_rng(12)
patterns = mp.random_patterns(rng, ne=32, count=5, size_range=(3, 4), weight_range=(0.8, 1.2))
config = mp.SynthConfig(ne=32, ns=300, patterns=patterns, activation_prob=0.3,
                        noise_sigma=0.03, seed=13, layout=(4, 8))
matrix, _ = mp.generate(config)
fit = mp.DictionaryConfig(capacities=(8,), lambda0=float(matrix.data.size), max_iters=400, seed=1)
level = mp.fit_hierarchy(matrix, fit).level(1)

mask = mp.prune(level.dictionary, level.coding, k1=0.5, k2=0.25)
print(f"\nlearned factors: kept {mask.num_kept}/32 experts (target <= {int(0.75 * 32)})")

reduced = mp.apply_mask(matrix, mask)
print(f"reduced matrix: {reduced.data.shape[0]} rows; "
      f"first kept experts {reduced.kept_pairs[:4]} (layer, expert)")

planted_experts = sorted({e for p in patterns for e in p.expert_set})
kept = set(mask.kept_indices)
inside = sum(1 for e in kept if e in planted_experts)
print(f"{inside}/{len(kept)} kept experts belong to planted patterns")

print("\nparameter budget if this ratio were applied to a 16.4B-parameter MoE:")
for k in (0, 25, 50):
    print(f"  prune {k:3d}% -> {mp.pruned_param_count(k):.3f}B parameters")
print(f"accuracy 0.53 -> 0.50 is a {mp.relative_change(0.50, 0.53):+.2%} relative change")
