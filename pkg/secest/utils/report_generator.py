"""
Report generator for secest runs.
Writes JSON summaries, CSV tables and a Markdown overview of experiment results.
"""
import os
import json
import datetime
from typing import Dict, List, Any, Optional, Union

import pandas as pd

from secest.utils import to_serializable


class ReportGenerator:
    """Generates reports from experiment results in various formats."""

    def __init__(self, output_dir: Optional[str] = None):
        """
        Args:
            output_dir: Directory to save reports (default: ./results)
        """
        self.output_dir = output_dir or './results'
        os.makedirs(self.output_dir, exist_ok=True)

    def _path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def write_json(self, data: Dict[str, Any], filename: str = "summary.json") -> str:
        """
        Write a JSON report with generation metadata attached.

        Returns:
            Path to the written file
        """
        report_data = dict(data)
        report_data["metadata"] = {
            "generated_at": datetime.datetime.now().isoformat(),
            "generator": "secest",
        }
        file_path = self._path(filename)
        with open(file_path, "w") as f:
            json.dump(to_serializable(report_data), f, indent=2)
        return file_path

    def write_table_csv(self, table: Union[pd.DataFrame, List[Dict[str, Any]]],
                        filename: str) -> str:
        """Write a DataFrame (or a list of row dicts) as CSV without the index."""
        frame = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
        file_path = self._path(filename)
        frame.to_csv(file_path, index=False)
        return file_path

    def write_markdown_summary(self, title: str, sections: Dict[str, Any],
                               tables: Optional[Dict[str, pd.DataFrame]] = None,
                               filename: str = "summary.md") -> str:
        """
        Write a Markdown overview.

        Args:
            title: Report title
            sections: Mapping of heading to either a dict of key/value facts or a string
            tables: Mapping of heading to DataFrame rendered as a pipe table

        Returns:
            Path to the generated Markdown report
        """
        md_content = f"# {title}\n\n"
        md_content += f"Generated on: {datetime.datetime.now().strftime('%Y-%m-%d %H:%M:%S')}\n\n"

        for heading, body in sections.items():
            md_content += f"## {heading}\n\n"
            if isinstance(body, dict):
                for key, value in body.items():
                    md_content += f"- **{key}:** {to_serializable(value)}\n"
                md_content += "\n"
            else:
                md_content += f"{body}\n\n"

        for heading, frame in (tables or {}).items():
            md_content += f"## {heading}\n\n"
            md_content += _frame_to_markdown(frame) + "\n\n"

        file_path = self._path(filename)
        with open(file_path, "w") as f:
            f.write(md_content)
        return file_path


def _frame_to_markdown(frame: pd.DataFrame) -> str:
    return frame.to_markdown(index=False, tablefmt="pipe", floatfmt=".4g")
