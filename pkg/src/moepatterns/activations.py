"""Expert activation tensors, the flattened activation matrix, and file I/O.

Activation data enters as per-token (or per-sentence) routing weights for
every expert in every layer of a mixture-of-experts model.  This module
defines the two in-memory containers, the transforms between them, and the
MOEACT binary file format plus its JSON-lines domain-label sidecar.

All containers are immutable after construction; the operations are pure
functions, so everything here is safe for concurrent reads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    InvalidValueError,
    ShapeError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MOEACT_MAGIC = b"MOEA"
MOEACT_VERSION = 1
_HEADER = struct.Struct("<4sIB3xIII")

SENTENCE = "sentence"
TOKEN = "token"

# Routers may allocate exactly 1.0 across the selected experts; allow float
# rounding on top of that.
TOKEN_SUM_SLACK = 1e-5


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ExpertLayout:
    """Bijection between (layer, expert) pairs and flat row indices.

    Row ``layer * experts_per_layer + expert`` holds the expert's activation
    mass; the inverse is ``divmod(row, experts_per_layer)``.
    """

    num_layers: int
    experts_per_layer: int

    def __post_init__(self) -> None:
        if self.num_layers < 1 or self.experts_per_layer < 1:
            raise ShapeError("layout requires at least one layer and one expert per layer")

    @property
    def num_experts(self) -> int:
        return self.num_layers * self.experts_per_layer

    def row_of(self, layer: int, expert: int) -> int:
        if not (0 <= layer < self.num_layers and 0 <= expert < self.experts_per_layer):
            raise ShapeError(f"(layer={layer}, expert={expert}) outside layout")
        return layer * self.experts_per_layer + expert

    def pair_of(self, row: int) -> tuple[int, int]:
        if not 0 <= row < self.num_experts:
            raise ShapeError(f"row {row} outside layout with {self.num_experts} experts")
        return divmod(row, self.experts_per_layer)


@dataclass(frozen=True)
class ActivationTensor:
    """Per-sample routing weights, at sentence or token granularity.

    ``values`` has shape (num_samples, m, n) at sentence granularity and
    (sum(token_counts), m, n) at token granularity, stored float32.  Token
    rows are grouped by sample, in sample order.  ``token_counts`` is
    required at token granularity and optional at sentence granularity
    (kept when a sentence tensor was aggregated from tokens, so columns can
    later be normalized by sequence length).
    """

    granularity: str
    num_samples: int
    num_layers: int
    num_experts_per_layer: int
    values: np.ndarray
    token_counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.granularity not in (SENTENCE, TOKEN):
            raise InvalidValueError(f"unknown granularity {self.granularity!r}")
        values = np.asarray(self.values, dtype=np.float32)
        object.__setattr__(self, "values", _freeze(values))
        if self.token_counts is not None:
            counts = np.asarray(self.token_counts, dtype=np.uint32)
            if counts.shape != (self.num_samples,):
                raise ShapeError(
                    f"token_counts has shape {counts.shape}, expected ({self.num_samples},)"
                )
            object.__setattr__(self, "token_counts", _freeze(counts))
        self._validate()

    def _validate(self) -> None:
        ns, m, n = self.num_samples, self.num_layers, self.num_experts_per_layer
        if min(ns, m, n) < 0 or m == 0 or n == 0:
            raise ShapeError("dimensions must be positive (num_samples may be zero)")
        if self.granularity == TOKEN:
            if self.token_counts is None:
                raise ShapeError("token granularity requires token_counts")
            rows = int(self.token_counts.sum())
        else:
            rows = ns
        if self.values.shape != (rows, m, n):
            raise ShapeError(
                f"values has shape {self.values.shape}, expected ({rows}, {m}, {n})"
            )
        if self.values.size:
            if not np.isfinite(self.values).all():
                raise InvalidValueError("activation values must be finite")
            if (self.values < 0).any():
                raise InvalidValueError("activation values must be nonnegative")
        if self.granularity == TOKEN and self.values.size:
            layer_sums = self.values.sum(axis=2, dtype=np.float64)
            worst = float(layer_sums.max(initial=0.0))
            if worst > 1.0 + TOKEN_SUM_SLACK:
                raise InvalidValueError(
                    f"per-token per-layer routing mass {worst:.6g} exceeds 1"
                )
        if self.granularity == SENTENCE and self.token_counts is not None and self.values.size:
            bound = self.token_counts.astype(np.float64) * (1.0 + TOKEN_SUM_SLACK)
            if (self.values.max(axis=(1, 2)) > bound).any():
                raise InvalidValueError(
                    "sentence-level value exceeds the sample's token count"
                )

    @property
    def layout(self) -> ExpertLayout:
        return ExpertLayout(self.num_layers, self.num_experts_per_layer)

    def sample_tokens(self, i: int) -> np.ndarray:
        """Token rows of sample ``i`` (token granularity only)."""
        if self.granularity != TOKEN:
            raise InvalidValueError("sample_tokens is defined for token granularity")
        offsets = np.concatenate([[0], np.cumsum(self.token_counts)])
        return self.values[offsets[i] : offsets[i + 1]]


@dataclass(frozen=True)
class ExpertActivationMatrix:
    """Nonnegative Ne x Ns matrix of sentence-level expert activation mass.

    Row ``layout.row_of(layer, expert)`` holds one expert; column i holds
    one sample.  This is the input to dictionary learning, co-activation
    search, and pruning.
    """

    data: np.ndarray
    layout: ExpertLayout

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] != self.layout.num_experts:
            raise ShapeError(
                f"matrix has {data.shape[0]} rows, layout expects {self.layout.num_experts}"
            )
        if data.size:
            if not np.isfinite(data).all():
                raise InvalidValueError("matrix entries must be finite")
            if (data < 0).any():
                raise InvalidValueError("matrix entries must be nonnegative")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def num_experts(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DomainLabels:
    """One domain tag per sample, from a closed non-empty label set."""

    labels: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not all(isinstance(x, str) for x in self.labels):
            raise InvalidValueError("domain labels must be strings")
        if self.labels and not self.label_set:
            raise InvalidValueError("label set must be non-empty")

    @property
    def label_set(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels)))

    def __len__(self) -> int:
        return len(self.labels)


def aggregate_tokens(tensor: ActivationTensor) -> ActivationTensor:
    """Sum token-level routing weights into sentence-level values.

    The sentence-level value of expert (j, k) for sample i is the sum of
    that expert's routing allocation over the sample's tokens.  Token counts
    are retained on the result so later normalization stays possible.
    """
    if tensor.granularity != TOKEN:
        raise InvalidValueError("aggregate_tokens expects a token-granularity tensor")
    counts = tensor.token_counts
    out = np.zeros(
        (tensor.num_samples, tensor.num_layers, tensor.num_experts_per_layer),
        dtype=np.float64,
    )
    values = tensor.values.astype(np.float64)
    start = 0
    for i, t in enumerate(counts):
        out[i] = values[start : start + int(t)].sum(axis=0)
        start += int(t)
    return ActivationTensor(
        granularity=SENTENCE,
        num_samples=tensor.num_samples,
        num_layers=tensor.num_layers,
        num_experts_per_layer=tensor.num_experts_per_layer,
        values=out.astype(np.float32),
        token_counts=counts,
    )


def flatten_to_matrix(tensor: ActivationTensor, normalize: bool = False) -> ExpertActivationMatrix:
    """Reshape a sentence tensor into the Ne x Ns expert activation matrix.

    Row ``j * n + k`` of the result is expert k of layer j.  With
    ``normalize=True`` each sample column is divided by its token count, so
    columns become length-independent average allocations.
    """
    if tensor.granularity != SENTENCE:
        raise InvalidValueError("flatten_to_matrix expects a sentence-granularity tensor")
    ns = tensor.num_samples
    ne = tensor.num_layers * tensor.num_experts_per_layer
    data = tensor.values.astype(np.float64).reshape(ns, ne).T.copy()
    if normalize:
        if tensor.token_counts is None:
            raise InvalidValueError("normalization requires token counts on the tensor")
        counts = tensor.token_counts.astype(np.float64)
        if (counts == 0).any():
            raise InvalidValueError("cannot normalize samples with zero tokens")
        data /= counts[np.newaxis, :]
    return ExpertActivationMatrix(data=data, layout=tensor.layout)


def write_moeact(tensor: ActivationTensor, path) -> None:
    """Serialize a tensor to the MOEACT v1 binary format (little-endian)."""
    gran = 1 if tensor.granularity == TOKEN else 0
    header = _HEADER.pack(
        MOEACT_MAGIC,
        MOEACT_VERSION,
        gran,
        tensor.num_samples,
        tensor.num_layers,
        tensor.num_experts_per_layer,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        if gran == 1:
            fh.write(tensor.token_counts.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(tensor.values, dtype="<f4").tobytes())


def read_moeact(path) -> ActivationTensor:
    """Read a MOEACT v1 file, validating structure and value invariants."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError(f"file shorter than the {_HEADER.size}-byte header")
    magic, version, gran, ns, m, n = _HEADER.unpack_from(blob)
    if magic != MOEACT_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MOEACT_MAGIC!r}")
    if version != MOEACT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if blob[9:12] != b"\x00\x00\x00":
        raise FormatError("nonzero header padding")
    if gran not in (0, 1):
        raise FormatError(f"unknown granularity byte {gran}")
    offset = _HEADER.size
    token_counts = None
    if gran == 1:
        need = 4 * ns
        if len(blob) < offset + need:
            raise TruncatedPayloadError("token-count block truncated")
        token_counts = np.frombuffer(blob, dtype="<u4", count=ns, offset=offset)
        offset += need
        rows = int(token_counts.sum())
    else:
        rows = ns
    need = 4 * rows * m * n
    if len(blob) < offset + need:
        raise TruncatedPayloadError(
            f"payload holds {len(blob) - offset} bytes, expected {need}"
        )
    if len(blob) > offset + need:
        raise FormatError(f"{len(blob) - offset - need} trailing bytes after payload")
    values = np.frombuffer(blob, dtype="<f4", count=rows * m * n, offset=offset)
    values = values.reshape(rows, m, n)
    return ActivationTensor(
        granularity=TOKEN if gran == 1 else SENTENCE,
        num_samples=ns,
        num_layers=m,
        num_experts_per_layer=n,
        values=values,
        token_counts=token_counts,
    )


def write_labels(labels: DomainLabels, path) -> None:
    """Write the JSON-lines domain-label sidecar."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, domain in enumerate(labels.labels):
            fh.write(json.dumps({"sample": i, "domain": domain}) + "\n")


def read_labels(path, num_samples: int | None = None) -> DomainLabels:
    """Read the sidecar, requiring exactly one label per sample index."""
    seen: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sample = int(obj["sample"])
                domain = str(obj["domain"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad label record on line {lineno}: {exc}") from exc
            if sample in seen:
                raise FormatError(f"duplicate label for sample {sample}")
            seen[sample] = domain
    count = num_samples if num_samples is not None else len(seen)
    missing = [i for i in range(count) if i not in seen]
    if missing or len(seen) != count:
        raise FormatError(
            f"labels must cover samples 0..{count - 1} exactly; missing {missing[:5]}"
        )
    return DomainLabels(tuple(seen[i] for i in range(count)))
