"""Hierarchical sparse dictionary learning on expert activation matrices.

Level 1 factors the activation matrix X into a nonnegative dictionary D_1
(columns are collaboration patterns over experts) and a nonnegative coding
matrix R_1.  Each deeper level factors the previous dictionary,
D_k ~= D_{k+1} R_{k+1}, so patterns refine from coarse to fine while all
dictionaries stay in expert space.

The objective per level combines four pieces:

* sparsity: the mean over coded objects of the largest coefficient
  magnitude, which stops single atoms from dominating any code;
* cross-level consistency: the coding mass spent on an atom at the finer
  level, weighted by how much that atom is used at the coarser level;
* weighted reconstruction: the L1 error of each coarse atom's finer-level
  reconstruction, weighted by the atom's usage;
* data fidelity: the mean squared reconstruction error of the level's
  target, weighted by ``lambda0`` (applied at every level; without it the
  all-zero coding trivially minimizes the remaining terms).

Dictionaries and codings are nonnegative, and dictionary columns are kept
at unit Euclidean norm (compensating rescale applied to the coding) to
resolve the scale ambiguity between the two factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .activations import ExpertActivationMatrix
from .errors import ConfigError, InvalidValueError, NumericalError, ShapeError

_ACCEPT_SLACK = 1e-12  # accepted steps may not raise the loss beyond this
_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class DictionaryConfig:
    """Capacities per level plus loss weights and optimizer settings."""

    capacities: tuple[int, ...]
    lambda0: float = 1.0
    lambda1: float = 0.1
    lambda2: float = 1.0
    learning_rate: float = 1.0
    max_iters: int = 500
    convergence_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        if not self.capacities:
            raise ConfigError("capacities must name at least one level")
        if any(c < 1 for c in self.capacities):
            raise ConfigError("every level capacity must be >= 1")
        if min(self.lambda0, self.lambda1, self.lambda2) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.learning_rate <= 0 or self.convergence_tol < 0:
            raise ConfigError("learning_rate must be positive, convergence_tol nonnegative")


@dataclass(frozen=True)
class DictionaryLevel:
    """One factor pair: dictionary columns are atoms, coding rows their use."""

    level_index: int
    dictionary: np.ndarray
    coding: np.ndarray
    loss_trace: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        d = np.array(self.dictionary, dtype=np.float64, copy=True)
        r = np.array(self.coding, dtype=np.float64, copy=True)
        if self.level_index < 1:
            raise ShapeError("level_index is 1-based")
        if d.ndim != 2 or r.ndim != 2:
            raise ShapeError("dictionary and coding must be 2-D")
        if d.shape[1] != r.shape[0]:
            raise ShapeError(
                f"dictionary has {d.shape[1]} atoms but coding has {r.shape[0]} rows"
            )
        for name, arr in (("dictionary", d), ("coding", r)):
            if arr.size and not np.isfinite(arr).all():
                raise InvalidValueError(f"{name} must be finite")
            if arr.size and (arr < 0).any():
                raise InvalidValueError(f"{name} must be nonnegative")
        # Unit column norms are the fitting convention, not a constructor
        # constraint: deserialized levels may carry externally built factors.
        for arr in (d, r):
            arr.flags.writeable = False
        object.__setattr__(self, "dictionary", d)
        object.__setattr__(self, "coding", r)
        object.__setattr__(self, "loss_trace", tuple(float(v) for v in self.loss_trace))

    @property
    def num_atoms(self) -> int:
        return self.dictionary.shape[1]


@dataclass(frozen=True)
class Hierarchy:
    """Ordered dictionary levels over one source matrix."""

    levels: tuple[DictionaryLevel, ...]
    source_dims: tuple[int, int]
    layout: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise ShapeError("hierarchy needs at least one level")
        ne, ns = self.source_dims
        for pos, level in enumerate(self.levels):
            if level.level_index != pos + 1:
                raise ShapeError("level indices must be consecutive from 1")
            if level.dictionary.shape[0] != ne:
                raise ShapeError("every dictionary must live in expert space")
            coded = ns if pos == 0 else self.levels[pos - 1].num_atoms
            if level.coding.shape[1] != coded:
                raise ShapeError(
                    f"level {pos + 1} codes {level.coding.shape[1]} objects, expected {coded}"
                )

    def level(self, k: int) -> DictionaryLevel:
        if not 1 <= k <= len(self.levels):
            raise ShapeError(f"hierarchy has no level {k}")
        return self.levels[k - 1]

    @property
    def depth(self) -> int:
        return len(self.levels)


# ---------------------------------------------------------------------------
# Loss terms and gradients
# ---------------------------------------------------------------------------


def loss_sparse(coding: np.ndarray) -> float:
    """Mean over coded objects of the largest coefficient magnitude."""
    r = np.asarray(coding, dtype=np.float64)
    if r.size == 0:
        return 0.0
    return float(np.abs(r).max(axis=0).mean())


def subgrad_sparse(coding: np.ndarray) -> np.ndarray:
    """Subgradient of :func:`loss_sparse`, ties split evenly among maximizers."""
    r = np.asarray(coding, dtype=np.float64)
    g = np.zeros_like(r)
    if r.size == 0:
        return g
    a = np.abs(r)
    m = a.max(axis=0)
    hit = (a == m[np.newaxis, :]) & (m[np.newaxis, :] > 0)
    counts = np.maximum(hit.sum(axis=0), 1)
    g[hit] = (np.sign(r) / (r.shape[1] * counts[np.newaxis, :]))[hit]
    return g


def loss_sparse_smooth(coding: np.ndarray, temperature: float = 0.01) -> float:
    """Log-sum-exp softening of :func:`loss_sparse`; used for gradient checks."""
    r = np.asarray(coding, dtype=np.float64)
    if r.size == 0:
        return 0.0
    return float(temperature * logsumexp(np.abs(r) / temperature, axis=0).mean())


def grad_sparse_smooth(coding: np.ndarray, temperature: float = 0.01) -> np.ndarray:
    r = np.asarray(coding, dtype=np.float64)
    if r.size == 0:
        return np.zeros_like(r)
    w = softmax(np.abs(r) / temperature, axis=0)
    return w * np.sign(r) / r.shape[1]


def loss_hier(prev_coding: np.ndarray, next_coding: np.ndarray) -> float:
    """Cross-level consistency between a level's coding and the finer one.

    For each atom j of the coarser level, multiplies the total finer-level
    coding mass spent on it (column j of ``next_coding``) by its own usage
    (row j of ``prev_coding``), averaged over atoms.
    """
    rp = np.asarray(prev_coding, dtype=np.float64)
    rn = np.asarray(next_coding, dtype=np.float64)
    if rn.shape[1] != rp.shape[0]:
        raise ShapeError(
            f"next coding covers {rn.shape[1]} atoms but previous coding has {rp.shape[0]} rows"
        )
    n = rp.shape[0]
    if n == 0:
        return 0.0
    usage = np.abs(rp).sum(axis=1)
    mass = np.abs(rn).sum(axis=0)
    return float((mass * usage).sum() / n)


def grad_hier_next(prev_coding: np.ndarray, next_coding: np.ndarray) -> np.ndarray:
    """Gradient of :func:`loss_hier` in the finer coding matrix."""
    rp = np.asarray(prev_coding, dtype=np.float64)
    rn = np.asarray(next_coding, dtype=np.float64)
    if rn.shape[1] != rp.shape[0]:
        raise ShapeError("coding shapes do not chain")
    usage = np.abs(rp).sum(axis=1) / rp.shape[0]
    return np.sign(rn) * usage[np.newaxis, :]


def loss_rec(
    prev_dictionary: np.ndarray,
    next_dictionary: np.ndarray,
    prev_coding: np.ndarray,
    next_coding: np.ndarray,
) -> float:
    """Usage-weighted L1 error of reconstructing each coarser atom.

    Atom j of the coarser dictionary is compared with column j of the
    finer-level product; the L1 residual is weighted by the atom's usage
    and averaged over atoms, so unused atoms do not constrain the fit.
    """
    dp = np.asarray(prev_dictionary, dtype=np.float64)
    dn = np.asarray(next_dictionary, dtype=np.float64)
    rp = np.asarray(prev_coding, dtype=np.float64)
    rn = np.asarray(next_coding, dtype=np.float64)
    if dn.shape[0] != dp.shape[0]:
        raise ShapeError("dictionaries must share the expert dimension")
    if rn.shape != (dn.shape[1], dp.shape[1]):
        raise ShapeError(
            f"next coding has shape {rn.shape}, expected {(dn.shape[1], dp.shape[1])}"
        )
    if rp.shape[0] != dp.shape[1]:
        raise ShapeError("previous coding rows must match previous atoms")
    n = dp.shape[1]
    if n == 0:
        return 0.0
    residual = np.abs(dp - dn @ rn).sum(axis=0)
    usage = np.abs(rp).sum(axis=1)
    return float((residual * usage).sum() / n)


def grad_rec(
    prev_dictionary: np.ndarray,
    next_dictionary: np.ndarray,
    prev_coding: np.ndarray,
    next_coding: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`loss_rec` in the finer dictionary and coding."""
    dp = np.asarray(prev_dictionary, dtype=np.float64)
    dn = np.asarray(next_dictionary, dtype=np.float64)
    rp = np.asarray(prev_coding, dtype=np.float64)
    rn = np.asarray(next_coding, dtype=np.float64)
    usage = np.abs(rp).sum(axis=1) / dp.shape[1]
    signed = np.sign(dp - dn @ rn) * usage[np.newaxis, :]
    return -signed @ rn.T, -dn.T @ signed


def loss_data(target: np.ndarray, dictionary: np.ndarray, coding: np.ndarray) -> float:
    """Mean squared reconstruction error of the level's target matrix."""
    t = np.asarray(target, dtype=np.float64)
    if t.size == 0:
        return 0.0
    resid = t - np.asarray(dictionary, dtype=np.float64) @ np.asarray(coding, dtype=np.float64)
    return float((resid * resid).sum() / t.size)


def grad_data(
    target: np.ndarray, dictionary: np.ndarray, coding: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`loss_data` in the dictionary and the coding."""
    t = np.asarray(target, dtype=np.float64)
    d = np.asarray(dictionary, dtype=np.float64)
    r = np.asarray(coding, dtype=np.float64)
    resid = t - d @ r
    scale = -2.0 / max(t.size, 1)
    return scale * resid @ r.T, scale * d.T @ resid


def loss_total(
    target: np.ndarray,
    dictionary: np.ndarray,
    coding: np.ndarray,
    config: DictionaryConfig,
    prev_coding: np.ndarray | None = None,
) -> float:
    """Composite level objective; cross-level terms need the coarser coding."""
    total = loss_sparse(coding)
    if config.lambda0:
        total += config.lambda0 * loss_data(target, dictionary, coding)
    if prev_coding is not None:
        if config.lambda1:
            total += config.lambda1 * loss_hier(prev_coding, coding)
        if config.lambda2:
            total += config.lambda2 * loss_rec(target, dictionary, prev_coding, coding)
    return total


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def _grads(target, d, r, config, prev_coding):
    g_d = np.zeros_like(d)
    g_r = subgrad_sparse(r)
    if config.lambda0:
        gd0, gr0 = grad_data(target, d, r)
        g_d += config.lambda0 * gd0
        g_r += config.lambda0 * gr0
    if prev_coding is not None:
        if config.lambda1:
            g_r += config.lambda1 * grad_hier_next(prev_coding, r)
        if config.lambda2:
            gd2, gr2 = grad_rec(target, d, prev_coding, r)
            g_d += config.lambda2 * gd2
            g_r += config.lambda2 * gr2
    return g_d, g_r


def _normalize_columns(d: np.ndarray, r: np.ndarray, fallback: np.ndarray):
    """Unit-normalize dictionary columns, rescaling coding rows to match.

    Columns that collapsed to zero are restored from ``fallback`` so the
    unit-norm invariant survives every step.
    """
    d = d.copy()
    r = r.copy()
    norms = np.linalg.norm(d, axis=0)
    dead = norms <= 1e-12
    if dead.any():
        d[:, dead] = fallback[:, dead]
        norms = np.linalg.norm(d, axis=0)
    d /= norms[np.newaxis, :]
    r *= norms[:, np.newaxis]
    return d, r


def _init_dictionary(target: np.ndarray, num_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Seed atoms from target columns, 1% perturbed, unit-normalized.

    Columns are drawn without replacement (cycling through all of them when
    atoms outnumber columns) so no part of the target starts uncovered.
    """
    ne, ncols = target.shape
    d = np.zeros((ne, num_atoms))
    if ncols:
        if num_atoms <= ncols:
            picks = rng.choice(ncols, size=num_atoms, replace=False)
        else:
            whole = np.tile(np.arange(ncols), num_atoms // ncols)
            rest = rng.choice(ncols, size=num_atoms - whole.size, replace=False)
            picks = rng.permutation(np.concatenate([whole, rest]))
        d = target[:, picks].astype(np.float64, copy=True)
    scale = 0.01 * np.maximum(np.linalg.norm(d, axis=0), 1e-3)
    d = np.maximum(d + rng.standard_normal(d.shape) * (scale[np.newaxis, :] / np.sqrt(ne)), 0.0)
    norms = np.linalg.norm(d, axis=0)
    dead = norms <= 1e-12
    if dead.any():
        d[:, dead] = np.abs(rng.standard_normal((ne, int(dead.sum()))))
        norms = np.linalg.norm(d, axis=0)
    return d / norms[np.newaxis, :]


def fit_level(
    target: np.ndarray,
    num_atoms: int,
    config: DictionaryConfig,
    level_index: int = 1,
    prev_coding: np.ndarray | None = None,
) -> DictionaryLevel:
    """Factor ``target`` into ``num_atoms`` nonnegative unit-norm atoms.

    Alternates one projected-gradient update of the coding with one of the
    dictionary per outer iteration.  Candidate steps that would raise the
    loss are rejected and the step size halved, so the recorded loss trace
    is non-increasing.  Stops at ``max_iters`` or when the relative loss
    improvement falls below ``convergence_tol``.
    """
    t = np.asarray(target, dtype=np.float64)
    if t.ndim != 2:
        raise ShapeError("target must be a 2-D matrix")
    if t.size and (not np.isfinite(t).all() or (t < 0).any()):
        raise InvalidValueError("target must be finite and nonnegative")
    if num_atoms < 1:
        raise ConfigError("num_atoms must be >= 1")

    rng = np.random.default_rng([config.seed, level_index])
    d = _init_dictionary(t, num_atoms, rng)
    r = np.zeros((num_atoms, t.shape[1]))

    def objective(dd, rr):
        return loss_total(t, dd, rr, config, prev_coding)

    loss = objective(d, r)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss at iteration 0")
    trace = [loss]
    eta_r = config.learning_rate
    eta_d = config.learning_rate

    size = max(t.size, 1)
    for it in range(1, config.max_iters + 1):
        g_d, g_r = _grads(t, d, r, config, prev_coding)

        # Coding step: scale by the data term's curvature so the first try
        # is usually accepted, then backtrack on rejection.  The step scale
        # that ends up accepted seeds the next iteration.
        lip_r = 2.0 * config.lambda0 * np.linalg.norm(d.T @ d, 2) / size + 1e-12
        step = eta_r / lip_r
        for _ in range(_MAX_BACKTRACKS):
            cand = np.maximum(r - step * g_r, 0.0)
            cand_loss = objective(d, cand)
            if cand_loss <= loss + _ACCEPT_SLACK * max(1.0, abs(loss)):
                r, loss = cand, cand_loss
                eta_r = min(step * lip_r * 1.25, 1e6)
                break
            step *= 0.5

        lip_d = 2.0 * config.lambda0 * np.linalg.norm(r @ r.T, 2) / size + 1e-12
        step = eta_d / lip_d
        for _ in range(_MAX_BACKTRACKS):
            cand_d = np.maximum(d - step * g_d, 0.0)
            cand_d, cand_r = _normalize_columns(cand_d, r, fallback=d)
            cand_loss = objective(cand_d, cand_r)
            if cand_loss <= loss + _ACCEPT_SLACK * max(1.0, abs(loss)):
                d, r, loss = cand_d, cand_r, cand_loss
                eta_d = min(step * lip_d * 1.25, 1e6)
                break
            step *= 0.5

        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at iteration {it}")
        previous = trace[-1]
        trace.append(loss)
        if previous - loss <= config.convergence_tol * max(abs(previous), 1e-30):
            break

    return DictionaryLevel(
        level_index=level_index, dictionary=d, coding=r, loss_trace=tuple(trace)
    )


def fit_hierarchy(source, config: DictionaryConfig) -> Hierarchy:
    """Fit every configured level, each factoring the previous dictionary.

    ``source`` may be an :class:`ExpertActivationMatrix` or a bare
    nonnegative matrix.  Level 1 factors the source; level k+1 factors
    D_k with the cross-level terms weighted by ``lambda1``/``lambda2``.
    """
    layout = None
    if isinstance(source, ExpertActivationMatrix):
        layout = (source.layout.num_layers, source.layout.experts_per_layer)
        x = source.data
    else:
        x = np.asarray(source, dtype=np.float64)
    levels = [fit_level(x, config.capacities[0], config, level_index=1)]
    for k in range(2, len(config.capacities) + 1):
        prev = levels[-1]
        levels.append(
            fit_level(
                prev.dictionary,
                config.capacities[k - 1],
                config,
                level_index=k,
                prev_coding=prev.coding,
            )
        )
    return Hierarchy(levels=tuple(levels), source_dims=x.shape, layout=layout)


def encode(
    x: np.ndarray,
    dictionary: np.ndarray,
    penalty: float = 0.0,
    max_iters: int = 500,
    tol: float = 1e-12,
) -> np.ndarray:
    """Nonnegative coefficients reconstructing ``x`` from the dictionary.

    Minimizes the squared residual plus ``penalty`` times the largest
    coefficient, by projected gradient from zero with a fixed step set by
    the dictionary's curvature.  Deterministic in its inputs.
    """
    v = np.asarray(x, dtype=np.float64).ravel()
    d = np.asarray(dictionary, dtype=np.float64)
    if not np.isfinite(v).all():
        raise InvalidValueError("input vector must be finite")
    if (v < 0).any():
        raise InvalidValueError("input vector must be nonnegative")
    if v.shape[0] != d.shape[0]:
        raise ShapeError(f"vector length {v.shape[0]} != dictionary rows {d.shape[0]}")
    gram = d.T @ d
    lip = 2.0 * np.linalg.norm(gram, 2)
    r = np.zeros(d.shape[1])
    if lip == 0.0:
        return r
    step = 1.0 / lip
    dtx = d.T @ v
    for _ in range(max_iters):
        grad = 2.0 * (gram @ r - dtx)
        if penalty:
            grad += penalty * subgrad_sparse(r[:, np.newaxis]).ravel()
        nxt = np.maximum(r - step * grad, 0.0)
        if np.abs(nxt - r).max() <= tol * max(1.0, np.abs(nxt).max()):
            r = nxt
            break
        r = nxt
    return r


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def hierarchy_to_json(hierarchy: Hierarchy) -> dict:
    """JSON payload: per level its index, capacity, factors, loss trace."""
    return {
        "source_dims": list(hierarchy.source_dims),
        "layout": list(hierarchy.layout) if hierarchy.layout else None,
        "levels": [
            {
                "k": level.level_index,
                "Np": level.num_atoms,
                "D": [[float(v) for v in row] for row in level.dictionary],
                "R": [[float(v) for v in row] for row in level.coding],
                "loss_trace": [float(v) for v in level.loss_trace],
            }
            for level in hierarchy.levels
        ],
    }


def hierarchy_from_json(payload: dict) -> Hierarchy:
    levels = tuple(
        DictionaryLevel(
            level_index=int(entry["k"]),
            dictionary=np.asarray(entry["D"], dtype=np.float64),
            coding=np.asarray(entry["R"], dtype=np.float64),
            loss_trace=tuple(entry.get("loss_trace", ())),
        )
        for entry in payload["levels"]
    )
    layout = payload.get("layout")
    return Hierarchy(
        levels=levels,
        source_dims=tuple(payload["source_dims"]),
        layout=tuple(layout) if layout else None,
    )
