"""Capture failure modes, each with a stable category string."""


class CaptureError(Exception):
    category = "capture"


class RouterHookError(CaptureError):
    """A configured router module is missing or never produced output."""

    category = "capture/router-hook"


class SequenceOverflowError(CaptureError):
    category = "capture/sequence-overflow"


class NonFiniteWeightsError(CaptureError):
    category = "capture/non-finite"


class EmptyCaptureError(CaptureError):
    category = "capture/empty"


class TopologyError(CaptureError):
    """Router outputs disagree on shape across layers or tokens."""

    category = "capture/topology"


class WeightRangeError(CaptureError):
    """Negative weights, or per-token per-layer mass above 1."""

    category = "capture/weight-range"
