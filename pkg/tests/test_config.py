import json

import numpy as np
import pytest

from config import (ExperimentConfig, MeshConfig, RunConfig, boundary_form, density_form, exact_solution,
                    load_barrier_config, load_experiment, load_preset, parse_barrier_config, parse_experiment,
                    preset_names)
from utils import SCHEMA_VERSION, ConfigError


def experiment_record(**overrides):
    record = {
        "schema_version": SCHEMA_VERSION,
        "name": "square",
        "domain": {"kind": "box", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "mesh": {"spacings": [0.25]},
        "problem": {"density": "constant", "boundary": "zero"},
        "checks": ["amp"],
    }
    record.update(overrides)
    return record


def test_parse_experiment():
    config = parse_experiment(experiment_record())
    assert isinstance(config, ExperimentConfig)
    assert config.name == "square"
    assert config.mesh.spacings == (0.25,)
    assert config.checks == ("amp",)
    assert config.settings.holder_range == (0.55, 0.80)


def test_unknown_fields_rejected():
    with pytest.raises(ConfigError) as err:
        parse_experiment(experiment_record(colour="blue"))
    assert err.value.field == "colour"
    with pytest.raises(ConfigError) as err:
        parse_experiment(experiment_record(mesh={"spacings": [0.25], "jitter": 1}))
    assert err.value.field == "mesh.jitter"


def test_schema_version_required():
    with pytest.raises(ConfigError) as err:
        parse_experiment(experiment_record(schema_version=2))
    assert err.value.field == "schema_version"
    record = experiment_record()
    del record["schema_version"]
    with pytest.raises(ConfigError):
        parse_experiment(record)


@pytest.mark.parametrize("overrides", [
    {"checks": ["amp", "telepathy"]},
    {"problem": {"density": "gaussian"}},
    {"problem": {"boundary": "zero", "tol": 0.0}},
    {"domain": {"kind": "file"}},
    {"mesh": {"spacings": [-0.1]}},
    {"mesh": {"spacings": [0.1, 0.05], "refine_levels": [1, 2, 3]}},
    {"settings": {"holder_range": [0.8, 0.5]}},
])
def test_invalid_experiments_rejected(overrides):
    with pytest.raises(ConfigError):
        parse_experiment(experiment_record(**overrides))


def test_barrier_epsilon_above_half_rejected():
    with pytest.raises(ConfigError) as err:
        parse_barrier_config({"schema_version": SCHEMA_VERSION, "barriers": {"epsilons": [0.6]}})
    assert err.value.field == "barriers.epsilons"


def test_barrier_config_defaults():
    config = parse_barrier_config({"schema_version": SCHEMA_VERSION})
    assert config.dimensions == (2, 3, 4, 5)
    assert config.upper_bound_override is None
    assert "barrier_upper_bound" in config.checks


def test_schedule_broadcast():
    assert MeshConfig(spacings=(0.1,), refine_levels=(4, 8, 16)).schedule() == [(0.1, 4), (0.1, 8), (0.1, 16)]
    assert MeshConfig(spacings=(0.1, 0.05)).schedule() == [(0.1, 0), (0.05, 0)]
    assert MeshConfig(spacings=(0.1, 0.05), refine_levels=(1, 2)).schedule() == [(0.1, 1), (0.05, 2)]


def test_presets_parse():
    names = preset_names()
    assert "amp-square-2d" in names
    assert "converse-3d" in names
    for name in names:
        assert load_preset(name).name == name


def test_unknown_preset():
    with pytest.raises(ConfigError) as err:
        load_preset("no-such-preset")
    assert "amp-square-2d" in err.value.message


def test_converse_preset_refines_toward_face():
    config = load_preset("converse-3d")
    domain = config.build_domain()
    face = config.refine_face(domain)
    assert np.allclose(domain.normals[face], [-1.0, 0.0, 0.0])
    assert [levels for _, levels in config.mesh.schedule()] == [4, 8, 16]


def test_build_problem_scales_tolerance():
    config = parse_experiment(experiment_record(problem={"density": "one_plus_x1", "tol": 1e-8}))
    problem, tol = config.build_problem(0.25, 0, tol_scale=10.0)
    assert tol == pytest.approx(1e-7)
    assert problem.upper_bound == pytest.approx(2.0)
    assert problem.mesh.nodes.shape == (25, 2)


def test_named_forms():
    points = np.array([[0.5, 1.0], [2.0, 0.0]])
    assert np.allclose(density_form("one_plus_x1_squared", 2.0)(points), [2.5, 10.0])
    assert np.allclose(boundary_form("affine", (1.0, -1.0, 0.5))(points), [0.0, 2.5])
    with pytest.raises(ConfigError):
        boundary_form("affine", (1.0,))
    with pytest.raises(ConfigError):
        density_form("gaussian")


def test_exact_solution_pairs():
    manufactured = parse_experiment(experiment_record(
        problem={"density": "one_plus_x1_squared", "boundary": "quartic_manufactured"}))
    assert exact_solution(manufactured.problem) is not None
    assert exact_solution(parse_experiment(experiment_record()).problem) is None


def test_load_from_files(tmp_path):
    experiment = tmp_path / "square.json"
    experiment.write_text(json.dumps(experiment_record(name="from-file")))
    assert load_experiment(experiment).name == "from-file"
    barriers = tmp_path / "barriers.json"
    barriers.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "barriers": {"dimensions": [2]}}))
    assert load_barrier_config(barriers).dimensions == (2,)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_experiment(broken)
    with pytest.raises(ConfigError):
        load_experiment(tmp_path / "missing.json")


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(command="solve", tol_scale=0.0)
    with pytest.raises(ConfigError):
        RunConfig(command="solve", workers=0)
