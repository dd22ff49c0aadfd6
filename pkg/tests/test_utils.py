import json

import numpy as np
import pytest

from utils import (ConfigError, GeometryError, artifact_columns, as_points, format_float, load_csv_schema,
                   write_csv_artifact, write_json_artifact)


def test_as_points_promotes_single_point():
    assert as_points([1.0, 2.0]).shape == (1, 2)
    with pytest.raises(GeometryError):
        as_points([[1.0, 2.0, 3.0]], dimension=2)


def test_format_float_round_trips():
    value = 0.1 + 0.2
    assert float(format_float(value)) == value


def test_every_artifact_is_documented():
    schema = load_csv_schema()
    assert {"nodes", "masses", "modulus", "checks", "divergence", "probe"} <= set(schema)


def test_coordinate_columns_expand():
    assert artifact_columns("nodes", dimension=3) == ["index", "boundary", "x1", "x2", "x3", "value"]
    with pytest.raises(ConfigError):
        artifact_columns("nodes")
    with pytest.raises(ConfigError):
        artifact_columns("holdings")


def test_write_csv_artifact(tmp_path):
    path = write_csv_artifact(tmp_path / "nested" / "checks.csv", "checks", [("amp", 1, np.float64(0.25))])
    assert path.read_text(encoding="utf-8") == "check,passed,margin\namp,1,0.25\n"


def test_csv_row_length_checked(tmp_path):
    with pytest.raises(ConfigError):
        write_csv_artifact(tmp_path / "modulus.csv", "modulus", [(0.1, 0.2)])


def test_write_json_artifact_handles_numpy(tmp_path):
    record = {"values": np.arange(3), "passed": np.bool_(True), "margin": np.float64(0.5)}
    path = write_json_artifact(tmp_path / "summary.json", record)
    assert json.loads(path.read_text(encoding="utf-8")) == {"margin": 0.5, "passed": True, "values": [0, 1, 2]}
