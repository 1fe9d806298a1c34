"""A miniature MoE language model implementing the router contract.

Each layer's gate computes softmax routing probabilities, keeps the top-k,
renormalizes them to sum to 1, and returns the resulting (tokens, experts)
weight matrix — zeros for unselected experts.  Those are exactly the
weights multiplied into the expert outputs, so hooking the gate modules
observes the allocations the model really applies.
"""

from __future__ import annotations

import torch
from torch import nn


class TopKGate(nn.Module):
    def __init__(self, dim: int, num_experts: int, top_k: int):
        super().__init__()
        self.proj = nn.Linear(dim, num_experts)
        self.top_k = top_k

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        probs = torch.softmax(self.proj(hidden), dim=-1)
        vals, idx = torch.topk(probs, self.top_k, dim=-1)
        vals = vals / vals.sum(dim=-1, keepdim=True)
        weights = torch.zeros_like(probs)
        return weights.scatter(-1, idx, vals)


class MoELayer(nn.Module):
    def __init__(self, dim: int, num_experts: int, top_k: int):
        super().__init__()
        self.gate = TopKGate(dim, num_experts, top_k)
        self.experts = nn.ModuleList(nn.Linear(dim, dim) for _ in range(num_experts))

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        weights = self.gate(hidden)
        out = torch.zeros_like(hidden)
        for e, expert in enumerate(self.experts):
            out = out + weights[:, e : e + 1] * expert(hidden)
        return hidden + out


class TinyMoE(nn.Module):
    """Two MoE layers over an embedding; softmax top-2 routing by default."""

    def __init__(
        self,
        vocab: int = 64,
        dim: int = 16,
        num_layers: int = 2,
        num_experts: int = 4,
        top_k: int = 2,
        seed: int = 0,
    ):
        super().__init__()
        torch.manual_seed(seed)
        self.embed = nn.Embedding(vocab, dim)
        self.layers = nn.ModuleList(
            MoELayer(dim, num_experts, top_k) for _ in range(num_layers)
        )

    def forward(self, token_ids: torch.Tensor) -> torch.Tensor:
        hidden = self.embed(token_ids)
        for layer in self.layers:
            hidden = layer(hidden)
        return hidden

    def router_names(self) -> tuple[str, ...]:
        return tuple(f"layers.{i}.gate" for i in range(len(self.layers)))


def byte_encoder(vocab: int = 64):
    """Encode text as bytes modulo the vocabulary; enough for capture tests."""

    def encode(text: str) -> torch.Tensor:
        data = text.encode("utf-8") or b"\x00"
        return torch.tensor([b % vocab for b in data], dtype=torch.long)

    return encode
