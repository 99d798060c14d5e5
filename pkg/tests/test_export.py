import json
import math

import numpy as np
import pytest

from empowerment import export


def test_csv_floats_roundtrip(tmp_path):
    vals = [0.1, 1 / 3, 5.930737337562887, float("nan"), 2]
    export.write_csv(tmp_path / "a.csv", ["v"], [[v] for v in vals])
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "v"
    assert float(lines[2]) == 1 / 3
    assert lines[4] == "nan"
    assert lines[5] == "2"
    assert (tmp_path / "a.csv").read_bytes().count(b"\r") == 0


def test_grid_csv_layout(tmp_path):
    values = np.array([[1.0, 2.0], [3.0, 4.0]])  # values[j, i]
    export.write_grid_csv(tmp_path / "g.csv", values, [10, 11], [20, 21], ("x", "y", "e"))
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines == ["x,y,e", "10,20,1.0", "11,20,2.0", "10,21,3.0", "11,21,4.0"]


class TestPgm:
    def test_scaling(self):
        img = export.normalize_8bit(np.array([[0.0, 0.5], [1.0, np.nan]]))
        assert img.tolist() == [[0, 128], [255, 0]]

    def test_constant_and_empty(self):
        assert np.all(export.normalize_8bit(np.full((2, 2), 3.0)) == 128)
        assert np.all(export.normalize_8bit(np.full((2, 2), np.nan)) == 0)

    def test_roundtrip_and_orientation(self, tmp_path):
        values = np.arange(6, dtype=float).reshape(2, 3)  # row 0 is the southern row
        export.write_pgm(tmp_path / "m.pgm", values)
        data = (tmp_path / "m.pgm").read_bytes()
        assert data.startswith(b"P5\n3 2\n255\n")
        img = export.read_pgm(tmp_path / "m.pgm")
        assert img.shape == (2, 3)
        # north (last row) is drawn first
        assert img[0].tolist() == [153, 204, 255]
        assert img[1].tolist() == [0, 51, 102]
        export.write_pgm(tmp_path / "n.pgm", values, flip_rows=False)
        assert export.read_pgm(tmp_path / "n.pgm")[0].tolist() == [0, 51, 102]

    def test_rejects_other_formats(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(ValueError):
            export.read_pgm(tmp_path / "x.pgm")


class TestJson:
    def test_sorted_and_nan_null(self):
        text = export.dumps({"b": float("nan"), "a": np.float64(1.5), "c": np.arange(2), "d": (1, np.int64(2))})
        assert json.loads(text) == {"a": 1.5, "b": None, "c": [0, 1], "d": [1, 2]}
        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("\n")

    def test_deterministic(self, tmp_path):
        doc = {"x": [1 / 3, math.pi], "y": {"z": float("inf")}}
        export.write_json(tmp_path / "a.json", doc)
        export.write_json(tmp_path / "b.json", dict(reversed(doc.items())))
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert export.sha256(tmp_path / "a.json") == export.sha256(tmp_path / "b.json")

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            export.dumps({"o": object()})
