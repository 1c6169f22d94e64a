import json

import numpy as np
import pytest

from survcop import io
from survcop.data import BivariateSurvDataset
from survcop.errors import ValidationError

HEADER = "time1,status1,time2,status2,x1,x2\n"


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_read_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    data = BivariateSurvDataset(rng.exponential(size=20) + 0.1, rng.integers(0, 2, 20),
                                rng.exponential(size=20) + 0.1, rng.integers(0, 2, 20),
                                rng.normal(size=(20, 3)), ["age", "dose", "x3"])
    path = str(tmp_path / "d.csv")
    io.write_dataset(path, data, comments=["made by a test"])
    back = io.read_dataset(path)
    for name in ("time1", "status1", "time2", "status2", "X"):
        np.testing.assert_array_equal(getattr(back, name), getattr(data, name))
    assert back.covariate_names == ["age", "dose", "x3"]
    assert open(path).readline() == "# made by a test\n"


def test_no_covariates(tmp_path):
    d = io.read_dataset(_write(tmp_path, "time1,status1,time2,status2\n1,1,2,0\n"))
    assert d.p == 0 and d.n == 1


def test_columns_in_any_order(tmp_path):
    d = io.read_dataset(_write(tmp_path, "x1,time2,status2,time1,status1\n0.5,2,1,1,0\n"))
    assert d.time1[0] == 1.0 and d.time2[0] == 2.0 and d.X[0, 0] == 0.5


@pytest.mark.parametrize("body,line,fragment", [
    (HEADER + "1,1,2,0,0.1,0.2\n1,1,2,0,0.1\n", 3, "expected 6 fields"),
    (HEADER + "1,1,2,0,0.1,0.2\n1,1,2,0,,0.2\n", 3, "missing"),
    (HEADER + "1,1,2,0,abc,0.2\n", 2, "non-numeric"),
    (HEADER + "0,1,2,0,0.1,0.2\n", 2, "strictly positive"),
    (HEADER + "1,1,-2,0,0.1,0.2\n", 2, "strictly positive"),
    (HEADER + "1,2,2,0,0.1,0.2\n", 2, "0 or 1"),
    (HEADER + "1,1,2,0,nan,0.2\n", 2, "non-finite"),
    ("# note\n" + HEADER + "\n1,1,2,0,0.1,0.2\n1,0.5,2,0,0.1,0.2\n", 5, "0 or 1"),
])
def test_rejections_carry_line_numbers(tmp_path, body, line, fragment):
    with pytest.raises(ValidationError, match=fragment) as e:
        io.read_dataset(_write(tmp_path, body))
    assert f"d.csv:{line}:" in str(e.value)


def test_header_problems(tmp_path):
    with pytest.raises(ValidationError, match="missing required"):
        io.read_dataset(_write(tmp_path, "time1,status1,time2\n1,1,2\n"))
    with pytest.raises(ValidationError, match="duplicate"):
        io.read_dataset(_write(tmp_path, "time1,status1,time2,status2,a,a\n1,1,2,1,0,0\n"))
    with pytest.raises(ValidationError, match="empty"):
        io.read_dataset(_write(tmp_path, ""))
    with pytest.raises(ValidationError, match="no data"):
        io.read_dataset(_write(tmp_path, HEADER))


def test_scr_ingestion_checks(tmp_path):
    with pytest.raises(ValidationError, match="time1 <= time2"):
        io.read_dataset(_write(tmp_path, "time1,status1,time2,status2\n3,1,2,1\n"), scr=True)


def test_quoted_fields(tmp_path):
    d = io.read_dataset(_write(tmp_path, '"time1","status1","time2","status2","x, y"\n"1.5",1,2,0,"3"\n'))
    assert d.covariate_names == ["x, y"] and d.X[0, 0] == 3.0


def test_json_deterministic(tmp_path):
    obj = {"b": np.float64(0.1), "a": [np.int64(3), np.array([1.5, np.inf])], "c": np.bool_(True)}
    text = io.dumps(obj)
    assert text == io.dumps(dict(reversed(list(obj.items()))))
    assert json.loads(text) == {"a": [3, [1.5, None]], "b": 0.1, "c": True}
    path = str(tmp_path / "x.json")
    io.write_json(path, obj)
    assert io.read_json(path) == json.loads(text)


def test_fmt_roundtrip():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123, -2.5):
        assert float(io.fmt(v)) == v
    assert io.fmt(np.int64(7)) == "7"


def test_invalid_json(tmp_path):
    p = _write(tmp_path, '{"a": 1,\n "b": }', "bad.json")
    with pytest.raises(ValidationError, match="bad.json:2"):
        io.read_json(p)
