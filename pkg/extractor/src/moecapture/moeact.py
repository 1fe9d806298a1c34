"""MOEACT v1 writer (token granularity) and the JSON-lines label sidecar.

The format, byte for byte:

    magic "MOEA" | version u32 LE = 1 | granularity u8 = 1 (token)
    | 3 zero bytes | Ns u32 | m u32 | n u32
    | token counts: Ns x u32
    | payload float32 LE: token-major, then layer, then expert

Files are written to a temp name in the target directory and renamed into
place, so a crash never leaves a half-written capture behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import NonFiniteWeightsError, TopologyError, WeightRangeError

MAGIC = b"MOEA"
VERSION = 1
TOKEN_SUM_SLACK = 1e-5
_HEADER = struct.Struct("<4sIB3xIII")


def validate_token_values(values: np.ndarray, token_counts: np.ndarray) -> None:
    """Check the invariants the activation-matrix side will re-check on read."""
    if values.ndim != 3:
        raise TopologyError(f"values must be (tokens, layers, experts), got {values.shape}")
    if int(np.sum(token_counts)) != values.shape[0]:
        raise TopologyError(
            f"token counts sum to {int(np.sum(token_counts))} but payload has "
            f"{values.shape[0]} token rows"
        )
    if values.size == 0:
        return
    if not np.isfinite(values).all():
        raise NonFiniteWeightsError("captured weights contain NaN or infinity")
    if (values < 0).any():
        raise WeightRangeError("captured weights must be nonnegative")
    layer_sums = values.sum(axis=2, dtype=np.float64)
    worst = float(layer_sums.max(initial=0.0))
    if worst > 1.0 + TOKEN_SUM_SLACK:
        raise WeightRangeError(
            f"per-token per-layer routing mass {worst:.6g} exceeds 1 + {TOKEN_SUM_SLACK}"
        )


def _atomic_write(path: Path, blob: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_token_moeact(
    values: np.ndarray,
    token_counts,
    num_layers: int,
    num_experts: int,
    path,
) -> Path:
    """Serialize token-granularity activations, atomically."""
    path = Path(path)
    counts = np.asarray(token_counts, dtype=np.uint32)
    values = np.ascontiguousarray(values, dtype=np.float32)
    if values.shape[1:] != (num_layers, num_experts):
        raise TopologyError(
            f"values shaped {values.shape}, expected (*, {num_layers}, {num_experts})"
        )
    validate_token_values(values, counts)
    header = _HEADER.pack(MAGIC, VERSION, 1, counts.size, num_layers, num_experts)
    blob = header + counts.astype("<u4").tobytes() + values.astype("<f4").tobytes()
    _atomic_write(path, blob)
    return path


def write_labels(domains, path) -> Path:
    """One {"sample": i, "domain": ...} JSON line per captured record."""
    path = Path(path)
    lines = "".join(
        json.dumps({"sample": i, "domain": str(domain)}) + "\n"
        for i, domain in enumerate(domains)
    )
    _atomic_write(path, lines.encode("utf-8"))
    return path
