"""Validation of output payloads against the shipped JSON schemas."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import FormatError

KINDS = (
    "hierarchy",
    "mask",
    "coactivation",
    "profiles",
    "coverage",
    "groundtruth",
    "annotation",
    "report",
    "manifest",
)


@lru_cache(maxsize=None)
def load_schema(kind: str) -> dict:
    if kind not in KINDS:
        raise FormatError(f"no schema named {kind!r}")
    ref = resources.files("moepatterns.schemas") / f"{kind}.schema.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def validate_payload(kind: str, payload: dict) -> dict:
    """Raise :class:`FormatError` when the payload violates its schema."""
    try:
        jsonschema.validate(payload, load_schema(kind))
    except jsonschema.ValidationError as exc:
        raise FormatError(f"{kind} payload invalid: {exc.message}") from exc
    return payload
