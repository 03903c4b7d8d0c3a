"""
Tests for JSON schema validation of systems and experiments.
"""
import json

import pytest
from jsonschema import ValidationError

from secest.utils.schema_validator import EXPERIMENT_SCHEMA, SchemaValidator


@pytest.fixture
def validator():
    return SchemaValidator()


def test_valid_system_document(validator):
    """Test a minimal system with A and C."""
    result = validator.validate_system({"A": [[0.5]], "C": [[1.0], [2.0]]})

    assert result == {"valid": True, "errors": []}


@pytest.mark.parametrize("doc", [
    {"A": [[0.5]]},
    {"A": [[0.5]], "C": [["one"]]},
    {"A": [], "C": [[1.0]]},
    [1, 2, 3],
])
def test_invalid_system_documents(validator, doc):
    """Test that missing C, non-numeric entries, empty matrices and non-objects are reported."""
    result = validator.validate_system(doc)

    assert not result["valid"]
    assert result["errors"] and "message" in result["errors"][0]


def test_experiment_document(validator):
    """Test the experiment schema: a valid document and an unknown matrix source."""
    doc = {"n": 8, "p": 10, "window": 8, "matrix_source": "designed_feedback", "s_range": [0, 4]}

    assert validator.validate_experiment(doc)["valid"]
    bad = validator.validate_experiment({**doc, "matrix_source": "handmade"})
    assert not bad["valid"]
    assert bad["errors"][0]["path"] == "matrix_source"


def test_validate_raises_and_loads_schema_files(validator, tmp_path):
    """Test that validate raises ValidationError and accepts a schema file path."""
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(EXPERIMENT_SCHEMA))

    assert validator.validate({"n": 1, "p": 1, "window": 1, "matrix_source": "random_lti"}, str(path))
    with pytest.raises(ValidationError):
        validator.validate({"n": 0}, str(path))
    assert str(path) in validator.schema_cache


def test_all_violations_are_reported_in_path_order(validator):
    """
    Test that every problem in a system document is listed.

    This test verifies that:
    - a bad A and a bad C both appear
    - errors are ordered by their location in the document
    """
    result = validator.validate_system({"A": [["x"]], "C": [], "B": [[1.0]]})

    paths = [e["path"] for e in result["errors"]]
    assert not result["valid"]
    assert paths == sorted(paths) and len(paths) == 2, f"Unexpected error paths {paths}"
    assert paths[0].startswith("A") and paths[1] == "C"
