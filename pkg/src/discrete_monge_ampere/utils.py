# -*- coding: utf-8 -*-
""" Utils module provides shared tolerances, custom exceptions and artifact writers for the toolkit"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

# Geometry
GEOMETRY_TOL: float = 1e-12
INCLUSION_TOL: float = 1e-8
MVEE_TOL: float = 1e-6
MVEE_MAX_ITERATIONS: int = 10000

# Convex functions and checks
MASS_TOL: float = 1e-10
CHECK_TOL: float = 1e-9
AMP_TOL: float = 1e-6

SCHEMA_VERSION: int = 1
OUTPUT_DIR_ENV: str = "MA_TOOLKIT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR: str = "ma_output"

SCHEMA_PATH = Path(__file__).resolve().parent / "schema" / "csv_columns.json"


class MongeAmpereError(Exception):
    def __init__(self, message):
        super().__init__(message)
        self.message = message


class GeometryError(MongeAmpereError):
    pass


class NormalizationError(MongeAmpereError):
    def __init__(self, message, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class ConvexityError(MongeAmpereError):
    pass


class BarrierDomainError(MongeAmpereError):
    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ProblemError(MongeAmpereError):
    pass


class SolverConvergenceError(MongeAmpereError):
    def __init__(self, message, worst_residual: float, iterations: int):
        super().__init__(message)
        self.worst_residual = worst_residual
        self.iterations = iterations


class FitError(MongeAmpereError):
    pass


class ConfigError(MongeAmpereError):
    def __init__(self, message, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


def as_points(points, dimension: Optional[int] = None) -> np.ndarray:
    """ Returns points as a float (k, n) array, promoting a single point to one row."""
    arr = np.atleast_2d(np.asarray(points, dtype=float))
    if dimension is not None and arr.shape[1] != dimension:
        raise GeometryError(f"Expected points of dimension {dimension}, got {arr.shape[1]}")
    return arr


def format_float(value: float) -> str:
    """ Formats floats so that repeated runs produce byte-identical CSV files."""
    return format(float(value), ".17g")


def load_csv_schema() -> Dict[str, List[str]]:
    with open(SCHEMA_PATH, encoding="utf-8") as schema_file:
        return json.load(schema_file)["artifacts"]


def artifact_columns(artifact: str, dimension: Optional[int] = None) -> List[str]:
    """ Documented columns of an artifact, with `x{i}` expanded to one column per coordinate."""
    schema = load_csv_schema()
    if artifact not in schema:
        raise ConfigError(f"Artifact {artifact} is not documented in the CSV schema", field=artifact)
    columns = []
    for column in schema[artifact]:
        if "{i}" in column:
            if dimension is None:
                raise ConfigError(f"Artifact {artifact} needs a dimension for column {column}", field=artifact)
            columns += [column.format(i=i + 1) for i in range(dimension)]
        else:
            columns.append(column)
    return columns


def write_csv_artifact(path: Path, artifact: str, rows: Iterable[Sequence], dimension: Optional[int] = None) -> Path:
    """ Writes rows to a CSV file whose header is the documented column list of the artifact.

    Args:
        path (Path): Destination file.
        artifact (str): Key of the artifact in the shipped CSV column schema.
        rows (Iterable[Sequence]): Data rows, one value per documented column.
        dimension (Optional[int]): Number of coordinate columns for artifacts that carry points.

    Returns:
        Path: The resolved path of the written file.
    """
    columns = artifact_columns(artifact, dimension)

    output_path = Path(path).resolve()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8", newline="") as out_file:
        writer = csv.writer(out_file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ConfigError(f"Row of length {len(row)} does not match columns of {artifact}", field=artifact)
            writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])

    logging.info("Saved output file: %s", output_path)
    return output_path


def write_json_artifact(path: Path, record: Dict) -> Path:
    output_path = Path(path).resolve()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as out_file:
        json.dump(record, out_file, indent=2, sort_keys=True, default=_json_default)
        out_file.write("\n")
    logging.info("Saved output file: %s", output_path)
    return output_path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
