"""
Deterministic CSV / JSON emission of SweepResult objects.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, TextIO, Union

import numpy as np

from ..experiments import SweepResult
from ..model import InvalidParameterError, OutputError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")

Destination = Union[str, Path, TextIO]


def figure_filename(panel_name: str, fmt: str) -> str:
    """fig2_PL0.1uW + csv -> fig2_PL0.1uW.csv"""
    if fmt not in FORMATS:
        raise InvalidParameterError(f"format must be one of {FORMATS}, got {fmt!r}")
    return f"{panel_name}.{fmt}"


def format_number(value: Any) -> str:
    """17 significant digits for floats so that every double round-trips."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _per_point(result: SweepResult) -> Dict[str, List[Any]]:
    """Numeric diagnostics recorded once per axis point."""
    size = len(result.axis_values)
    return {
        key: values
        for key, values in result.solver_diagnostics.items()
        if len(values) == size and size > 1 and all(isinstance(v, (int, float, np.number)) for v in values)
    }


def _header_lines(result: SweepResult, per_point: Dict[str, List[Any]]) -> List[str]:
    lines = [f"name={result.name}", f"axis={result.axis_name}"]
    lines.extend(f"{key}={format_number(value)}" for key, value in result.config_snapshot.items())
    for key, values in result.solver_diagnostics.items():
        if key in per_point:
            continue
        if len(values) == 1:
            lines.append(f"diagnostics.{key}={format_number(values[0])}")
        elif key == "status":
            failed = sum(1 for status in values if status != "ok")
            lines.append(f"diagnostics.failed_points={failed}")
    return lines


def _write_csv(result: SweepResult, stream: TextIO) -> None:
    per_point = _per_point(result)
    for line in _header_lines(result, per_point):
        stream.write(f"# {line}\n")
    names = [result.axis_name, *result.columns, *(f"diag_{key}" for key in per_point)]
    series = [result.axis_values, *result.columns.values(), *per_point.values()]
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*series):
        writer.writerow([format_number(value) for value in row])


def _json_value(value: Any) -> Any:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _write_json(result: SweepResult, stream: TextIO) -> None:
    document = {
        "name": result.name,
        "axis_name": result.axis_name,
        "config_snapshot": {key: _json_value(value) for key, value in result.config_snapshot.items()},
        "solver_diagnostics": {
            key: [_json_value(value) for value in values] for key, values in result.solver_diagnostics.items()
        },
        "columns": {
            name: [_json_value(value) for value in series]
            for name, series in [(result.axis_name, result.axis_values), *result.columns.items()]
        },
    }
    json.dump(document, stream, indent=2, allow_nan=False)
    stream.write("\n")


def emit_sweep(result: SweepResult, fmt: str, destination: Destination) -> None:
    """
    Write a sweep as CSV or JSON.

    Args:
        result: Sweep to write
        fmt: "csv" or "json"
        destination: File path or an open text stream

    Raises:
        OutputError: the destination path cannot be written
    """
    if fmt not in FORMATS:
        raise InvalidParameterError(f"format must be one of {FORMATS}, got {fmt!r}")
    write = _write_csv if fmt == "csv" else _write_json

    if not isinstance(destination, (str, Path)):
        write(result, destination)
        return

    path = Path(destination)
    try:
        with open(path, "w", encoding="utf-8", newline="") as stream:
            write(result, stream)
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    logger.info(f"Wrote {len(result.axis_values)} rows to {path}")
