"""Load and apply the shipped JSON schemas for payload bodies."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import ValidationError

SCHEMA_KINDS = ("text", "trials", "distribution", "dotplot", "cell_probs", "storyboard")


@lru_cache(maxsize=None)
def load_schema(kind: str) -> dict:
    if kind not in SCHEMA_KINDS:
        raise ValidationError(f"no schema for payload kind {kind!r}")
    text = (
        resources.files("dpcomm").joinpath(f"schemas/{kind}.schema.json").read_text("utf-8")
    )
    return json.loads(text)


def validate_payload(payload: dict) -> None:
    """Raise ValidationError when a payload body violates its schema."""
    kind = payload.get("kind")
    schema = load_schema(kind)
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"payload fails {kind} schema: {exc.message}") from exc
