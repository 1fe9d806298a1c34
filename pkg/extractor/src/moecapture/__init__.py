"""Capture MoE router allocations into MOEACT activation files."""

from .capture import CaptureConfig, CaptureResult, TextRecord, capture
from .moeact import write_labels, write_token_moeact

__version__ = "0.1.0"

__all__ = [
    "CaptureConfig",
    "CaptureResult",
    "TextRecord",
    "capture",
    "write_labels",
    "write_token_moeact",
]
