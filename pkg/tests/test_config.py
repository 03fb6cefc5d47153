import glob
import math
import os

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from dgfflab import ConfigInvalid, ExperimentConfig, load_config
from dgfflab.config import EXPERIMENTS, evaluate_rule

ROOT = os.path.dirname(os.path.dirname(__file__))

DISKS = {"name": "disks", "V": {"kind": "disk", "center": [0, 0], "radius": 0.5}, "W": {"kind": "disk", "center": [0, 0], "radius": 1.0}}


def raw(**over):
    d = {"experiment": "capacity-suite", "seed": 3, "geometries": [DISKS], "N": [16], "output": "out"}
    d.update(over)
    return d


def test_round_trip_through_yaml():
    cfg = ExperimentConfig.from_dict(raw(scales={"r": "r = N/16"}, params={"c": 0.5}, replicas={"samples": 10}))
    back = ExperimentConfig.from_dict(yaml.safe_load(cfg.to_yaml()))
    assert back.to_dict() == cfg.to_dict()
    assert back.config_hash == cfg.config_hash


def test_hash_ignores_output_but_not_seed():
    a = ExperimentConfig.from_dict(raw())
    assert a.config_hash == ExperimentConfig.from_dict(raw(output="elsewhere")).config_hash
    assert a.config_hash != ExperimentConfig.from_dict(raw(seed=4)).config_hash


@given(N=st.integers(1, 4096), u=st.floats(-5, 5), c=st.floats(0.01, 2))
def test_scale_rule_evaluation(N, u, c):
    assert evaluate_rule("r = N*exp(-c*u)", N=N, u=u, c=c) == pytest.approx(N * math.exp(-c * u))
    assert evaluate_rule("floor(sqrt(N)) + 2**3", N=N) == math.floor(math.sqrt(N)) + 8


@pytest.mark.parametrize("bad", ["__import__('os')", "N.real", "[N]", "lambda: 1", "unknown * 2"])
def test_scale_rule_rejects_unsafe_syntax(bad):
    with pytest.raises(ValueError):
        evaluate_rule(bad, N=4)


def test_containment_failure_names_the_check():
    outside = dict(DISKS, V={"kind": "disk", "center": [0.8, 0], "radius": 0.5})
    with pytest.raises(ConfigInvalid) as exc:
        ExperimentConfig.from_dict(raw(geometries=[outside]))
    assert exc.value.field == "geometries[0]" and "containment" in str(exc.value)


@pytest.mark.parametrize(
    "over, field",
    [
        ({"experiment": "nope"}, "experiment"),
        ({"seed": -1}, "seed"),
        ({"N": [16, 0]}, "N[1]"),
        ({"u": [float("nan")]}, "u[0]"),
        ({"replicas": {"samples": 0}}, "replicas.samples"),
        ({"tolerances": {"exact": 0}}, "tolerances.exact"),
        ({"scales": {"r": "N*"}}, "scales.r"),
        ({"geometries": []}, "geometries"),
        ({"N": []}, "N"),
        ({"colour": "blue"}, "config"),
    ],
)
def test_field_level_diagnostics(over, field):
    with pytest.raises(ConfigInvalid) as exc:
        ExperimentConfig.from_dict(raw(**over))
    assert exc.value.field == field


def test_yaml_errors_are_config_errors(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("experiment: [unclosed\n")
    with pytest.raises(ConfigInvalid) as exc:
        load_config(p)
    assert exc.value.field == "syntax"
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "missing.yaml")


def test_shipped_configs_cover_every_experiment():
    paths = sorted(glob.glob(os.path.join(ROOT, "configs", "*.yaml")))
    names = {load_config(p).experiment for p in paths}
    assert names == set(EXPERIMENTS)


def test_scale_and_count_helpers():
    cfg = ExperimentConfig.from_dict(raw(scales={"r": "N*exp(-c*u)"}, params={"c": 0.5}, replicas={"samples": 100}))
    assert cfg.scale("r", 64, u=2.0) == pytest.approx(64 * math.exp(-1.0))
    assert cfg.count("samples", 7, scale=0.25) == 25
    assert cfg.count("other", 7) == 7
