"""Domain-conditioned expert usage and its cosine-similarity matrix.

Three synthetic domains: two share part of their expert bank, the third
is disjoint.  The similarity matrix shows the block structure.
"""

import numpy as np

import moepatterns as mp

ne, per_domain = 30, 60
bank = {
    "algebra": [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9)],
    "geometry": [(5, 6), (7, 8), (9, 10), (11, 12), (13, 14)],  # overlaps algebra
    "history": [(20, 21), (22, 23), (24, 25), (26, 27), (28, 29)],
}

blocks, labels = [], []
for i, (name, pairs) in enumerate(sorted(bank.items())):
    cfg = mp.SynthConfig(
        ne=ne,
        ns=per_domain,
        patterns=tuple(mp.PlantedPattern(p, (1.0, 1.0)) for p in pairs),
        activation_prob=0.5,
        noise_sigma=0.0,
        seed=100 + i,
    )
    matrix, _ = mp.generate(cfg)
    blocks.append(matrix.data)
    labels += [name] * per_domain

x = np.concatenate(blocks, axis=1)
profiles = mp.domain_profiles(x, mp.DomainLabels(tuple(labels)), threshold=0.3)
for p in profiles:
    busiest = np.argsort(p.frequencies)[::-1][:4]
    print(f"{p.domain:>9}: busiest experts {busiest.tolist()}")

sim = mp.similarity_matrix(profiles)
names = [p.domain for p in profiles]
print("\ncosine similarity:")
print("          " + "  ".join(f"{n:>9}" for n in names))
for name, row in zip(names, sim):
    print(f"{name:>9} " + "  ".join(f"{v:9.3f}" for v in row))

print("\nthe overlapping pair scores higher than either cross pair,")
print("mirroring how related input domains share expert collaborations.")
