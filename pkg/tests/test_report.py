"""Canonical serialization: stable bytes, fixed float text, CSV tables."""

import json
import math

import numpy as np
import pytest

from urnlab.errors import InvalidArgumentError
from urnlab.ode import FlowState
from urnlab.report import (canonical_json, emit_report, flow_csv,
                           format_float, gauss_csv, matrix_csv, provenance,
                           trajectory_csv, urn_csv)
from urnlab.sa import Trajectory
from urnlab.urn import UrnState, UrnTrajectory


def test_format_float_roundtrips():
    for v in [0.1, math.pi, 1e-17, 3.0, -2.5e300, 1.0 / 3.0]:
        assert float(format_float(v)) == v
    assert format_float(1.0) == "1"
    assert format_float(0.1) == "0.10000000000000001"


def test_format_float_rejects_non_finite():
    for v in [math.inf, -math.inf, math.nan]:
        with pytest.raises(InvalidArgumentError):
            format_float(v)


def test_canonical_json_layout():
    text = canonical_json({"b": [1, 2.5], "a": None})
    assert text == '{\n  "a": null,\n  "b": [\n    1,\n    2.5\n  ]\n}'


def test_canonical_json_key_order_independent():
    a = canonical_json({"x": 1, "y": {"q": [True, False]}, "z": "√n"})
    b = canonical_json({"z": "√n", "y": {"q": [True, False]}, "x": 1})
    assert a == b
    assert json.loads(a) == {"x": 1, "y": {"q": [True, False]}, "z": "√n"}


def test_canonical_json_empty_containers():
    assert canonical_json({"a": [], "b": {}}) == '{\n  "a": [],\n  "b": {}\n}'


def test_canonical_json_accepts_numpy():
    text = canonical_json({"m": np.arange(4.0).reshape(2, 2),
                           "k": np.int64(3), "v": np.float64(0.5)})
    assert json.loads(text) == {"m": [[0, 1], [2, 3]], "k": 3, "v": 0.5}


def test_canonical_json_rejects_odd_values():
    with pytest.raises(InvalidArgumentError):
        canonical_json({"s": {1, 2}})
    with pytest.raises(InvalidArgumentError):
        canonical_json({1: "x"})
    with pytest.raises(InvalidArgumentError):
        canonical_json({"v": float("nan")})


def test_trajectory_csv_rows():
    traj = Trajectory(checkpoints=((0, np.array([0.5])),
                                   (2, np.array([0.25]))),
                      seed=0, spec_digest="x")
    assert trajectory_csv(traj) == "n,theta_1\n0,0.5\n2,0.25\n"


def test_urn_csv_rows():
    traj = UrnTrajectory(checkpoints=(
        UrnState(np.array([1.0, 2.0]), np.array([0, 1]), 1),), seed=0)
    assert urn_csv(traj) == "n,Y_1,Y_2,N_1,N_2\n1,1,2,0,1\n"


def test_gauss_csv_rows():
    out = gauss_csv([(1.0, np.array([0.0, 1.5]))])
    assert out == "t,G_1,G_2\n1,0,1.5\n"


def test_flow_csv_rows():
    st = FlowState(np.array([0.5, 0.25]), 0.0, 0.0)
    assert flow_csv([st]) == "s,f,theta_1,theta_2\n0,0,0.5,0.25\n"


def test_matrix_csv_rows():
    assert matrix_csv(np.eye(2)) == "1,0\n0,1\n"


def test_empty_tables_rejected():
    with pytest.raises(InvalidArgumentError):
        trajectory_csv(Trajectory(checkpoints=(), seed=0, spec_digest="x"))
    with pytest.raises(InvalidArgumentError):
        urn_csv(UrnTrajectory(checkpoints=(), seed=0))
    with pytest.raises(InvalidArgumentError):
        gauss_csv([])
    with pytest.raises(InvalidArgumentError):
        flow_csv([])


def test_emit_report_json_bytes(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    emit_report({"a": 1.5, "s": "√n"}, "json", str(a))
    emit_report({"s": "√n", "a": 1.5}, "json", str(b))
    data = a.read_bytes()
    assert data == '{\n  "a": 1.5,\n  "s": "√n"\n}\n'.encode("utf-8")
    assert data == b.read_bytes()


def test_emit_report_unwraps_to_dict(tmp_path):
    class Box:
        def to_dict(self):
            return {"v": 2}

    path = tmp_path / "r.json"
    emit_report(Box(), "json", str(path))
    assert json.loads(path.read_text()) == {"v": 2}


def test_emit_report_csv_matrix(tmp_path):
    path = tmp_path / "m.csv"
    emit_report(np.eye(2), "csv", str(path))
    assert path.read_text() == "1,0\n0,1\n"
    with pytest.raises(InvalidArgumentError, match="needs a matrix"):
        emit_report(np.zeros(3), "csv", str(path))


def test_emit_report_unsupported_format(tmp_path):
    with pytest.raises(InvalidArgumentError, match="unsupported"):
        emit_report({}, "xml", str(tmp_path / "r.xml"))


def test_emit_report_io_error_propagates(tmp_path):
    with pytest.raises(OSError):
        emit_report({}, "json", str(tmp_path / "missing" / "r.json"))


def test_provenance_fields():
    p = provenance("abc", 7)
    assert p["tool"] == "urnlab"
    assert p["config_digest"] == "abc" and p["seed"] == 7
    assert isinstance(p["tool_version"], str) and p["tool_version"]
