"""Small closed-form evaluation helpers."""

from __future__ import annotations

from .errors import ConfigError, InvalidValueError

# DeepSeek-MoE-16B parameter budget in billions: everything, and the slice
# belonging to prunable routed experts.
DEEPSEEK_TOTAL_B = 16.4
DEEPSEEK_ROUTED_B = 14.7


def relative_change(acc_pruned: float, acc_base: float) -> float:
    """Relative accuracy change of a pruned model against its baseline."""
    if acc_base <= 0:
        raise InvalidValueError("baseline accuracy must be positive")
    return (acc_pruned - acc_base) / acc_base


def pruned_param_count(
    k_percent: float,
    total_b: float = DEEPSEEK_TOTAL_B,
    routed_b: float = DEEPSEEK_ROUTED_B,
) -> float:
    """Remaining parameters (billions) after pruning k% of routed experts."""
    if not 0 <= k_percent <= 100:
        raise ConfigError("pruning percentage must lie in [0, 100]")
    return total_b - routed_b * (k_percent / 100.0)
