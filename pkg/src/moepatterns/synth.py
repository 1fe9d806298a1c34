"""Synthetic activation matrices with planted collaboration patterns.

Each planted pattern is a weighted set of experts that fires jointly.  A
generated sample is the gain-scaled sum of its fired patterns plus clipped
Gaussian noise, which gives dictionary learning and pruning a ground truth
to recover at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import ExpertActivationMatrix, ExpertLayout
from .errors import ConfigError


@dataclass(frozen=True)
class PlantedPattern:
    """A ground-truth expert clique: row indices plus positive weights."""

    expert_set: tuple[int, ...]
    weight_profile: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "expert_set", tuple(int(e) for e in self.expert_set))
        object.__setattr__(self, "weight_profile", tuple(float(w) for w in self.weight_profile))
        if not self.expert_set:
            raise ConfigError("pattern expert_set must be non-empty")
        if len(set(self.expert_set)) != len(self.expert_set):
            raise ConfigError("pattern expert_set has duplicate indices")
        if len(self.weight_profile) != len(self.expert_set):
            raise ConfigError("weight_profile length must match expert_set")
        if any(w <= 0 for w in self.weight_profile):
            raise ConfigError("pattern weights must be positive")
        if any(e < 0 for e in self.expert_set):
            raise ConfigError("expert indices must be nonnegative")


@dataclass(frozen=True)
class SynthConfig:
    ne: int
    ns: int
    patterns: tuple[PlantedPattern, ...]
    activation_prob: float = 0.3
    noise_sigma: float = 0.0
    seed: int = 0
    # Per-sample intensity range; (1.0, 1.0) pins the gain for exact checks.
    gain_range: tuple[float, float] = (0.5, 1.5)
    layout: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "patterns", tuple(self.patterns))
        if self.ne < 1 or self.ns < 0:
            raise ConfigError("ne must be >= 1 and ns >= 0")
        if not 0.0 <= self.activation_prob <= 1.0:
            raise ConfigError("activation_prob must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be nonnegative")
        lo, hi = self.gain_range
        if not (0 < lo <= hi):
            raise ConfigError("gain_range must satisfy 0 < lo <= hi")
        for p in self.patterns:
            if max(p.expert_set) >= self.ne:
                raise ConfigError(
                    f"pattern index {max(p.expert_set)} out of range for ne={self.ne}"
                )
        if self.layout is not None:
            m, n = self.layout
            if m * n != self.ne:
                raise ConfigError(f"layout {self.layout} inconsistent with ne={self.ne}")

    def expert_layout(self) -> ExpertLayout:
        if self.layout is None:
            return ExpertLayout(1, self.ne)
        return ExpertLayout(*self.layout)


def pattern_basis(config: SynthConfig) -> np.ndarray:
    """Ne x P matrix whose column p is pattern p's weight profile."""
    basis = np.zeros((config.ne, len(config.patterns)))
    for p, pat in enumerate(config.patterns):
        basis[list(pat.expert_set), p] = pat.weight_profile
    return basis


def generate(config: SynthConfig) -> tuple[ExpertActivationMatrix, np.ndarray]:
    """Draw a synthetic activation matrix and its pattern firing table.

    Column i of the matrix is ``gain_i * sum(fired pattern profiles)`` plus
    Gaussian noise, clamped at zero.  Returns the matrix and a boolean
    (num_patterns, ns) array marking which patterns fired per sample.
    Draw order is fixed (firings, gains, noise), so equal seeds give
    bit-identical output.
    """
    rng = np.random.default_rng(config.seed)
    npat = len(config.patterns)
    fires = rng.random((npat, config.ns)) < config.activation_prob
    gains = rng.uniform(config.gain_range[0], config.gain_range[1], config.ns)
    noise = rng.normal(0.0, config.noise_sigma, (config.ne, config.ns))
    data = pattern_basis(config) @ fires.astype(np.float64)
    data = np.maximum(data * gains[np.newaxis, :] + noise, 0.0)
    matrix = ExpertActivationMatrix(data=data, layout=config.expert_layout())
    return matrix, fires


def random_patterns(
    rng: np.random.Generator,
    ne: int,
    count: int,
    size_range: tuple[int, int] = (3, 5),
    weight_range: tuple[float, float] = (0.5, 1.5),
    disjoint: bool = True,
) -> tuple[PlantedPattern, ...]:
    """Sample ``count`` planted patterns with sizes in ``size_range``.

    With ``disjoint=True`` the expert sets never overlap, which keeps the
    ground truth identifiable for recovery tests.
    """
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad size_range {size_range}")
    sizes = rng.integers(lo, hi + 1, size=count)
    if disjoint:
        if int(sizes.sum()) > ne:
            raise ConfigError(
                f"{count} disjoint patterns of sizes {size_range} do not fit in ne={ne}"
            )
        pool = rng.permutation(ne)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        members = [pool[offsets[i] : offsets[i + 1]] for i in range(count)]
    else:
        members = [rng.choice(ne, size=int(s), replace=False) for s in sizes]
    patterns = []
    for experts in members:
        weights = rng.uniform(weight_range[0], weight_range[1], len(experts))
        patterns.append(
            PlantedPattern(tuple(int(e) for e in experts), tuple(float(w) for w in weights))
        )
    return tuple(patterns)


def firings_to_json(config: SynthConfig, fires: np.ndarray) -> dict:
    """Ground-truth payload emitted next to generated data."""
    return {
        "ne": config.ne,
        "ns": config.ns,
        "seed": config.seed,
        "activation_prob": config.activation_prob,
        "noise_sigma": config.noise_sigma,
        "gain_range": list(config.gain_range),
        "patterns": [
            {"experts": list(p.expert_set), "weights": list(p.weight_profile)}
            for p in config.patterns
        ],
        "firings": [
            [int(p) for p in np.flatnonzero(fires[:, i])] for i in range(fires.shape[1])
        ],
    }
