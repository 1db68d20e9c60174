import json

import numpy as np
import pytest

from idid import io
from idid.core import LinearPolicy, PanelDataset
from idid.scores import ScoreVector

from conftest import make_dataset


def test_dataset_roundtrip(tmp_path):
    data = make_dataset(25)
    path = tmp_path / "d.csv"
    io.write_dataset(data, path)
    back = io.read_dataset(path)
    assert path.read_text().splitlines()[0] == "x1,x2,a,y,t,z"
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.y, data.y)


def test_panel_roundtrip(tmp_path):
    p = PanelDataset(np.arange(6.0).reshape(3, 2), [0, 1, 1], [0, 0, 1], [1.5, 2, 3],
                     [1, 1, 0], [2, 3.25, 4])
    path = tmp_path / "p.csv"
    io.write_dataset(p, path)
    assert path.read_text().splitlines()[0] == "x1,x2,z,a0,y0,a1,y1"
    back = io.read_any(path)
    assert isinstance(back, PanelDataset)
    np.testing.assert_array_equal(back.y1, p.y1)


def test_unparseable_cell(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,a,y,t,z\n0.5,1,2,0,1\n0.1,1,abc,0,1\n")
    with pytest.raises(io.SchemaError, match="row 1: cannot parse cell 'abc'"):
        io.read_dataset(path)


def test_thousands_separator_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text('x1,a,y,t,z\n0.5,1,"1,000",0,1\n')
    with pytest.raises(io.SchemaError, match="row 0"):
        io.read_dataset(path)


def test_missing_columns(tmp_path):
    path = tmp_path / "d.csv"
    io.write_dataset(make_dataset(5), path)
    with pytest.raises(io.SchemaError, match="missing columns: a0, y0, a1, y1"):
        io.read_panel(path)


def test_header_only_is_empty(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x1,a,y,t,z\n")
    with pytest.raises(io.SchemaError, match="n ≥ 1 violated"):
        io.read_dataset(path)


def test_policy_json(tmp_path):
    pol = LinearPolicy([-1.0, 3.0, 4.0], ("intercept", "x1", "x2"))
    obj = io.policy_to_json(pol, 1.5, "mr1", 3)
    assert set(obj) >= {"eta", "objective", "estimator", "seed"}
    path = tmp_path / "p.json"
    io.write_json(path, obj)
    assert json.loads(path.read_text())["estimator"] == "mr1"
    np.testing.assert_allclose(io.read_policy(path).eta, pol.eta)


def test_score_and_trace_csv(tmp_path):
    io.write_scores(tmp_path / "s.csv", ScoreVector(np.array([1.0, -2.5]), "linear_in_d", "mr"))
    assert (tmp_path / "s.csv").read_text().splitlines() == [
        "unit,score,estimator_tag,form", "0,1,mr,linear_in_d", "1,-2.5,mr,linear_in_d",
    ]
    io.write_trace(tmp_path / "t.csv", [0.1, 0.2])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "generation,best_objective"


def test_atomic_write_leaves_no_temp(tmp_path):
    io.atomic_write(tmp_path / "f.txt", "hello")
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]
