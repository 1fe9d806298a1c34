"""Hook a live MoE model and record the routing weights it actually applies.

The contract with the model: every configured router module's forward
output is a (tokens, experts) tensor holding the post-top-k, renormalized
allocation per token — the weights multiplied into the expert outputs —
with exact zeros for unselected experts.  ``toy.TinyMoE`` is a reference
implementation of that contract.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import (
    EmptyCaptureError,
    NonFiniteWeightsError,
    RouterHookError,
    SequenceOverflowError,
    TopologyError,
)
from .moeact import validate_token_values, write_labels, write_token_moeact


@dataclass(frozen=True)
class TextRecord:
    """One input: the raw text and the domain tag it carries."""

    text: str
    domain: str


@dataclass(frozen=True)
class CaptureConfig:
    model_id: str
    router_layers: tuple[str, ...]
    output_path: str
    max_samples: int = 128
    max_seq_len: int = 2048
    labels_path: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "router_layers", tuple(self.router_layers))
        if not self.router_layers:
            raise ValueError("router_layers must name at least one module")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")
        if self.max_seq_len < 1:
            raise ValueError("max_seq_len must be >= 1")

    def resolved_labels_path(self) -> Path:
        if self.labels_path is not None:
            return Path(self.labels_path)
        out = Path(self.output_path)
        return out.with_name(out.stem + ".labels.jsonl")


@dataclass(frozen=True)
class CaptureResult:
    output_path: Path
    labels_path: Path
    num_samples: int
    token_counts: tuple[int, ...]
    num_layers: int
    num_experts: int


def _resolve_routers(model: torch.nn.Module, names: Sequence[str]):
    modules = []
    for name in names:
        try:
            modules.append(model.get_submodule(name))
        except AttributeError as exc:
            raise RouterHookError(f"router module {name!r} not found on model") from exc
    return modules


def _as_token_weights(name: str, raw) -> torch.Tensor:
    if not isinstance(raw, torch.Tensor):
        raise TopologyError(f"router {name!r} produced {type(raw).__name__}, not a tensor")
    if raw.dim() == 3 and raw.shape[0] == 1:
        raw = raw.squeeze(0)
    if raw.dim() != 2:
        raise TopologyError(
            f"router {name!r} output has shape {tuple(raw.shape)}, expected (tokens, experts)"
        )
    return raw.detach().to(torch.float32).cpu()


def capture(
    model: torch.nn.Module,
    records: Sequence[TextRecord],
    config: CaptureConfig,
    encoder: Callable[[str], torch.Tensor],
) -> CaptureResult:
    """Run each record through the model and write one MOEACT token file.

    ``encoder`` turns a record's text into the 1-D token-id tensor the
    model consumes.  Sample order in the file matches the input order;
    captured weights are validated (finite, nonnegative, per-token
    per-layer mass at most 1) before anything touches disk, and the file
    plus its label sidecar are written atomically.
    """
    records = list(records)[: config.max_samples]
    if not records:
        raise EmptyCaptureError("no input records; refusing to write an empty capture")
    routers = _resolve_routers(model, config.router_layers)

    logs: list[list[torch.Tensor]] = [[] for _ in routers]
    handles = [
        module.register_forward_hook(
            lambda mod, args, out, slot=i: logs[slot].append(out)
        )
        for i, module in enumerate(routers)
    ]

    per_sample: list[np.ndarray] = []
    num_experts: int | None = None
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            for idx, record in enumerate(records):
                ids = encoder(record.text)
                if ids.dim() != 1:
                    raise TopologyError(
                        f"encoder returned shape {tuple(ids.shape)} for record {idx}, "
                        "expected a flat token-id tensor"
                    )
                if ids.numel() > config.max_seq_len:
                    raise SequenceOverflowError(
                        f"record {idx} has {ids.numel()} tokens, limit {config.max_seq_len}"
                    )
                for slot in logs:
                    slot.clear()
                model(ids)
                layer_weights = []
                tokens = ids.numel()
                for name, slot in zip(config.router_layers, logs):
                    if len(slot) != 1:
                        raise RouterHookError(
                            f"router {name!r} fired {len(slot)} times for record {idx}, "
                            "expected exactly once"
                        )
                    weights = _as_token_weights(name, slot[0])
                    if weights.shape[0] != tokens:
                        raise TopologyError(
                            f"router {name!r} saw {weights.shape[0]} tokens, input has {tokens}"
                        )
                    if num_experts is None:
                        num_experts = weights.shape[1]
                    elif weights.shape[1] != num_experts:
                        raise TopologyError(
                            f"router {name!r} has {weights.shape[1]} experts, "
                            f"previous layers had {num_experts}"
                        )
                    if not torch.isfinite(weights).all():
                        raise NonFiniteWeightsError(
                            f"router {name!r} produced non-finite weights on record {idx}"
                        )
                    layer_weights.append(weights.numpy())
                # (tokens, layers, experts)
                per_sample.append(np.stack(layer_weights, axis=1))
    finally:
        for handle in handles:
            handle.remove()
        if was_training:
            model.train()

    token_counts = np.array([s.shape[0] for s in per_sample], dtype=np.uint32)
    values = (
        np.concatenate(per_sample, axis=0)
        if per_sample
        else np.zeros((0, len(routers), num_experts or 0), dtype=np.float32)
    )
    validate_token_values(values.astype(np.float32), token_counts)

    out = write_token_moeact(
        values,
        token_counts,
        num_layers=len(routers),
        num_experts=int(num_experts or 0),
        path=config.output_path,
    )
    labels = write_labels([r.domain for r in records], config.resolved_labels_path())
    return CaptureResult(
        output_path=out,
        labels_path=labels,
        num_samples=len(records),
        token_counts=tuple(int(t) for t in token_counts),
        num_layers=len(routers),
        num_experts=int(num_experts or 0),
    )
