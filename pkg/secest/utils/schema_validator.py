"""
JSON Schema validation for system definitions and experiment configurations.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Union

from jsonschema import Draft7Validator

_MATRIX = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "array",
        "minItems": 1,
        "items": {"type": "number"},
    },
}

SYSTEM_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["A", "C"],
    "properties": {
        "A": _MATRIX,
        "B": _MATRIX,
        "C": _MATRIX,
        "G": _MATRIX,
        "proc_noise_cov": _MATRIX,
        "meas_noise_cov": _MATRIX,
    },
    "additionalProperties": True,
}

EXPERIMENT_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["n", "p", "window", "matrix_source"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "p": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 1},
        "matrix_source": {
            "enum": ["random_lti", "designed_feedback", "poor_feedback", "ideal_gaussian_coding"],
        },
        "s_range": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "trials_per_point": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
}

SchemaLike = Union[Dict[str, Any], str, Path]


def _dotted(parts) -> str:
    return ".".join(str(p) for p in parts)


class SchemaValidator:
    """Checks system and experiment documents against the secest schemas."""

    def __init__(self):
        self.schema_cache: Dict[str, Dict[str, Any]] = {}

    def validate(self, document: Any, schema: SchemaLike) -> bool:
        """
        Raise on the first schema violation.

        Raises:
            ValidationError: the document does not match
        """
        Draft7Validator(self._resolve(schema)).validate(document)
        return True

    def errors(self, document: Any, schema: SchemaLike) -> List[Dict[str, str]]:
        """Every violation, ordered by the location in the document."""
        found = Draft7Validator(self._resolve(schema)).iter_errors(document)
        return [
            {"message": e.message, "path": _dotted(e.absolute_path),
             "schema_path": _dotted(e.absolute_schema_path)}
            for e in sorted(found, key=lambda e: _dotted(e.absolute_path))
        ]

    def validate_safe(self, document: Any, schema: SchemaLike) -> Dict[str, Any]:
        """Same check as ``validate`` but returns {"valid": bool, "errors": [...]}."""
        try:
            errors = self.errors(document, schema)
        except (OSError, json.JSONDecodeError) as e:
            errors = [{"message": f"Cannot load schema: {e}", "path": "", "schema_path": ""}]
        return {"valid": not errors, "errors": errors}

    def validate_system(self, document: Any) -> Dict[str, Any]:
        return self.validate_safe(document, SYSTEM_SCHEMA)

    def validate_experiment(self, document: Any) -> Dict[str, Any]:
        return self.validate_safe(document, EXPERIMENT_SCHEMA)

    def _resolve(self, schema: SchemaLike) -> Dict[str, Any]:
        if isinstance(schema, dict):
            return schema
        key = str(schema)
        if key not in self.schema_cache:
            self.schema_cache[key] = json.loads(Path(key).read_text())
        return self.schema_cache[key]
