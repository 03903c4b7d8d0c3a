"""
Tests for the report generator and JSON helpers.
"""
import json

import numpy as np
import pandas as pd

from secest.utils import format_duration, load_json_file, save_json_file, to_serializable
from secest.utils.report_generator import ReportGenerator


def test_write_json_converts_numpy_and_adds_metadata(tmp_path):
    """
    Test the JSON report.

    This test verifies that:
    - numpy arrays, scalars and sets are serialized
    - generation metadata is attached
    """
    generator = ReportGenerator(str(tmp_path / "reports"))
    path = generator.write_json({"x0": np.array([1.0, 2.0]), "q": np.int64(3),
                                 "support": frozenset({2, 0})}, "run.json")

    data = load_json_file(path)
    assert data["x0"] == [1.0, 2.0]
    assert data["q"] == 3
    assert data["support"] == [0, 2]
    assert data["metadata"]["generator"] == "secest"


def test_write_table_csv_from_rows(tmp_path):
    """Test that a list of row dicts becomes a CSV without an index column."""
    generator = ReportGenerator(str(tmp_path))
    path = generator.write_table_csv([{"S": 0, "success_rate": 1.0}, {"S": 4, "success_rate": 0.5}],
                                     "table.csv")

    frame = pd.read_csv(path)
    assert list(frame.columns) == ["S", "success_rate"]
    assert frame["success_rate"].tolist() == [1.0, 0.5]


def test_markdown_summary_sections_and_tables(tmp_path):
    """Test headings, fact lists and pipe tables in the Markdown overview."""
    generator = ReportGenerator(str(tmp_path))
    table = pd.DataFrame({"S": [0, 4], "success_rate": [1.0, 0.123456]})

    path = generator.write_markdown_summary("Run", {"Overview": {"n": 8}, "Notes": "all good"},
                                            {"Success": table})

    text = open(path).read()
    assert text.startswith("# Run")
    assert "- **n:** 8" in text
    assert "## Notes\n\nall good" in text
    rows = [[cell.strip() for cell in line.strip("|").split("|")]
            for line in text.splitlines() if line.startswith("|")]
    assert rows[0] == ["S", "success_rate"]
    assert set(rows[1][0]) <= set(":-"), f"Missing separator row: {rows[1]}"
    assert rows[3] == ["4", "0.1235"]


def test_save_json_roundtrip_helpers(tmp_path):
    """Test save_json_file with nested numpy values and the duration formatter."""
    path = str(tmp_path / "doc.json")
    save_json_file({"nested": {"a": np.float64(0.5), "b": (np.bool_(True),)}}, path)

    assert json.load(open(path)) == {"nested": {"a": 0.5, "b": [True]}}
    assert to_serializable({1: np.arange(2)}) == {"1": [0, 1]}
    assert format_duration(12.5) == "12.50s"
