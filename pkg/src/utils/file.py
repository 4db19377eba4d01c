"""
Artifact writers: JSON and CSV with fixed float formatting
"""

import csv
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

INF_TAG = {'inf': True}


def sanitize_filename(filename: str) -> str:
    """
    Create a safe filename for the file system

    Args:
        filename: Original filename

    Returns:
        str: Sanitized filename safe for filesystem
    """
    filename = re.sub(r'[<>:"/\\|?*\[\]()]', '_', filename)
    filename = re.sub(r'[\x00-\x1f\x7f]', '', filename)
    filename = re.sub(r'[\s_]+', '_', filename)
    filename = filename.strip('._- ')
    return filename[:200] if filename else "untitled"


def format_float(x: float) -> str:
    """9 significant digits; 'inf' / '-inf' for infinities"""
    x = float(x)
    if math.isinf(x):
        return 'inf' if x > 0 else '-inf'
    if math.isnan(x):
        return 'nan'
    return f"{x:.9g}"


def _clean(value: Any) -> Any:
    """Convert numpy types, round floats to 9 digits and tag infinities"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return dict(INF_TAG) if value > 0 else {'inf': True, 'negative': True}
        return float(format_float(value))
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Any, filepath: Path) -> Path:
    """
    Write JSON with sorted keys and two-space indentation

    Args:
        data: Nested dicts/lists/arrays
        filepath: Destination

    Returns:
        Path: The path written
    """
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(data), sort_keys=True, indent=2, allow_nan=False)
    filepath.write_text(text + "\n", encoding='utf-8')
    return filepath


def write_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], filepath: Path) -> Path:
    """Write a CSV file; floats go through format_float"""
    filepath = Path(filepath)
    filepath.parent.mkdir(parents=True, exist_ok=True)
    with open(filepath, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return filepath


def read_json(filepath: Path) -> Any:
    with open(filepath, encoding='utf-8') as f:
        return json.load(f)
