"""
Shared helpers: JSON conversion of numpy results, timestamps, durations.
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
TIMESTAMP_FORMAT = "%Y%m%d_%H%M%S"

PathLike = Union[str, Path]


def to_serializable(value: Any) -> Any:
    """Convert numpy containers and scalars (recursively) into JSON-friendly values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_serializable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_serializable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(to_serializable(v) for v in value)
    return value


def load_json_file(file_path: PathLike) -> Any:
    return json.loads(Path(file_path).read_text())


def save_json_file(data: Dict[str, Any], file_path: PathLike) -> None:
    """Write ``data`` as indented JSON; numpy values are converted first."""
    Path(file_path).write_text(json.dumps(to_serializable(data), indent=2))


def get_timestamp() -> str:
    return datetime.now().strftime(TIMESTAMP_FORMAT)


def format_duration(seconds: float) -> str:
    """12.50s, 3m 4.00s or 1h 2m 3.00s."""
    minutes, secs = divmod(float(seconds), 60)
    hours, minutes = divmod(int(minutes), 60)
    if hours:
        return f"{hours}h {minutes}m {secs:.2f}s"
    if minutes:
        return f"{minutes}m {secs:.2f}s"
    return f"{secs:.2f}s"
