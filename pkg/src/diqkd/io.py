"""File formats: float formatting, provenance headers and CSV/JSON writers."""
from __future__ import annotations

import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, is_dataclass
from typing import Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

FLOAT_FORMAT = ".9g"


def tool_version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("artifact")
    except PackageNotFoundError:  # running from a source tree
        return "0+unknown"


def format_float(x) -> str:
    """Nine significant digits; integers, strings and flags pass through."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        out = format(x, FLOAT_FORMAT)
        return "0" if out == "-0" else out
    return str(x)


def provenance_lines(command: str, config: Mapping) -> List[str]:
    """Comment lines echoing the run configuration."""
    lines = [f"# diqkd {tool_version()} {command}"]
    for key in sorted(config):
        lines.append(f"# {key}={format_float(config[key]) if not isinstance(config[key], str) else config[key]}")
    return lines


def write_csv(fh: TextIO, columns: Sequence[str], rows: Iterable[Mapping], header: Optional[List[str]] = None) -> None:
    for line in header or ():
        fh.write(line + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_float(row[c]) for c in columns])


def _jsonable(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    if isinstance(obj, Mapping):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(format(x, FLOAT_FORMAT)) if math.isfinite(x) else format_float(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, fh: TextIO = sys.stdout) -> None:
    json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
    fh.write("\n")


# Experiment tables -------------------------------------------------------------

EXPERIMENT_COLUMNS = ("label", "year", "S", "qber", "source")


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


def load_experiments_with_errors(path) -> Tuple[list, List[RowError]]:
    """Parse ``label,year,S,qber,source``; bad rows are reported, good rows kept."""
    from .keyrate import ExperimentRecord

    with open(path, newline="", encoding="utf-8") as fh:
        text = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not text:
        warnings.warn(f"{path}: no experiment rows")
        return [], []
    reader = csv.DictReader(text)
    missing = [c for c in EXPERIMENT_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"{path}: missing columns {', '.join(missing)}")
    records, errors = [], []
    for line, row in enumerate(reader, start=2):
        try:
            rec = ExperimentRecord(
                label=row["label"].strip(),
                year=int(row["year"]),
                s=float(row["S"]),
                qber=float(row["qber"]),
                source=(row["source"] or "").strip(),
            )
        except (TypeError, ValueError) as exc:
            errors.append(RowError(line, str(exc)))
            continue
        records.append(rec)
    if not records and not errors:
        warnings.warn(f"{path}: no experiment rows")
    return records, errors


def load_experiments(path) -> list:
    records, errors = load_experiments_with_errors(path)
    for e in errors:
        warnings.warn(f"{path}:{e.line}: {e.message}")
    return records
