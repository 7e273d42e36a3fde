import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from fracneumann.core.atomic_write import atomic_write

logger = logging.getLogger(__name__)

ASSEMBLE_REPORT = "assemble.json"
CONSTANTS_REPORT = "constants.json"
CERTIFICATE_REPORT = "certificate.json"
SOLVE_REPORT = "solve.json"
MESH_CSV = "mesh.csv"
PAIRS_CSV = "pairs.csv"


def solution_csv_name(index: int) -> str:
    return f"solution_{index}.csv"


def _float(value: float) -> float | str:
    if math.isfinite(value):
        return value
    if math.isnan(value):
        return "nan"
    return "inf" if value > 0 else "-inf"


def to_plain(value: Any) -> Any:  # noqa: ANN401
    """Recursively turn numpy scalars, arrays and tuples into JSON types; non-finite floats become strings."""
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [to_plain(item) for item in value.tolist()]
    if isinstance(value, bool | np.bool_):
        return bool(value)
    if isinstance(value, int | np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        return _float(float(value))
    return value


def render_report(payload: dict[str, Any]) -> str:
    """Deterministic JSON text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(to_plain(payload), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def write_report(directory: Path, name: str, payload: dict[str, Any]) -> Path:
    path = directory / name
    atomic_write(render_report(payload), path)
    logger.info(f"Wrote {path}")
    return path
