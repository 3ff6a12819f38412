import json
import math

import numpy as np
import pytest

from clockspin.io import format_table, read_config, read_table, write_table

ROWS = [{"B_T": 0.1, "name": "|F=4, mF=-2>", "n": 3, "x": np.float64(1 / 3)},
        {"B_T": 0.2, "name": "a,b", "n": 4, "x": float("nan")}]


def test_csv_shortest_repr():
    text = format_table(ROWS, "csv")
    lines = text.splitlines()
    assert lines[0] == "B_T,name,n,x"
    assert lines[1] == '0.1,"|F=4, mF=-2>",3,0.3333333333333333'
    assert text.endswith("\n") and "\r" not in text


def test_json_nan_and_order():
    doc = json.loads(format_table(ROWS, "json", meta={"k": np.float64(2.0)}))
    assert doc["columns"] == ["B_T", "name", "n", "x"]
    assert list(doc["rows"][0]) == doc["columns"]
    assert doc["rows"][1]["x"] is None
    assert doc["meta"] == {"k": 2.0}


def test_unknown_format():
    with pytest.raises(ValueError):
        format_table(ROWS, "xml")


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_round_trip(tmp_path, fmt):
    path = tmp_path / f"t.{fmt}"
    write_table(ROWS, path, fmt)
    back = read_table(path)
    assert back[0]["B_T"] == 0.1
    assert back[0]["name"] == "|F=4, mF=-2>"
    assert back[0]["x"] == pytest.approx(1 / 3, rel=1e-15)
    x1 = back[1]["x"]
    assert x1 is None or math.isnan(x1)


def test_config_keeps_case(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nrange = 0.07 0.09\n[system]\nS = 0.5\nA = 1.0\n")
    cfg = read_config(path)
    assert cfg["range"] == "0.07 0.09"
    assert cfg["system_params"] == {"S": "0.5", "A": "1.0"}
