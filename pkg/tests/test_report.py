import csv
import json
import re
import xml.etree.ElementTree as ET

import pytest

from _corpora import fixture10
from lenlift.benchbuild import DEFAULT_FACTORS
from lenlift.datamodel import EvalSummary
from lenlift.evalmetrics import SweepResult, evaluate
from lenlift.judge import mock_judge
from lenlift.report import ReportError, emit_svg_chart, scatter_data, scatter_svg, write_report

NS = "{http://www.w3.org/2000/svg}"


def sweep(label, rates):
    return SweepResult([(f, EvalSummary(5, r, None, 3.0, scale=f)) for f, r in zip(DEFAULT_FACTORS, rates)], label)


def test_scatter_points_skip_failures():
    bench, gens = fixture10()
    points = scatter_data(bench, gens)
    assert len(points) == 9
    assert points[1].row() == ("10", "1.2000", "true")
    assert points[0].row() == ("10", "0.9000", "false")


def test_scatter_svg_matches_csv(tmp_path):
    bench, gens = fixture10()
    write_report(tmp_path, bench, gens, png=False)
    rows = list(csv.reader((tmp_path / "scatter.csv").open()))
    assert rows[0] == ["target_len", "ratio", "violation"]
    root = ET.parse(tmp_path / "scatter.svg").getroot()
    circles = root.findall(f".//{NS}circle")
    assert len(circles) == len(rows) - 1 == 9
    assert [c.find(f"{NS}title").text.split(",") for c in circles] == rows[1:]
    assert sorted(c.get("class") for c in circles).count("violation") == 2


def test_report_is_byte_deterministic(tmp_path):
    bench, gens = fixture10()
    vs, _ = evaluate(bench, gens, mock_judge("prefer-longer"))
    sweeps = [sweep("m", [0, 0, 10, 20, 40, 60, 80, 100, 100])]
    a = write_report(tmp_path / "a", bench, gens, vs, sweeps)
    b = write_report(tmp_path / "b", bench, gens, vs, sweeps)
    assert [p.name for p in a] == [p.name for p in b]
    assert {p.name for p in a} == {"scatter.csv", "scatter.svg", "summary.json", "scatter.png",
                                   "sweep.csv", "sweep.svg", "sweep.png"}
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes(), pa.name
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["win_rate"] == 33.3 and summary["failures"] == 1


def test_sweep_chart_markers(tmp_path):
    bench, gens = fixture10()
    write_report(tmp_path, bench, gens, sweeps=[sweep("one", [5] * 9), sweep("two", [50] * 9)], png=False)
    root = ET.parse(tmp_path / "sweep.svg").getroot()
    markers = root.findall(f".//{NS}circle[@class='marker']")
    assert len(markers) == 18
    assert [m.get("data-series") for m in markers[:9]] == ["one"] * 9
    rows = list(csv.reader((tmp_path / "sweep.csv").open()))
    assert rows[1] == ["0.9", "5.0", "", "3.0", "one"]
    assert len(root.findall(f".//{NS}polyline")) == 2


def test_svg_escapes_labels(tmp_path):
    emit_svg_chart([sweep("a<b & c", [1] * 9)], "line", tmp_path / "s.svg")
    ET.parse(tmp_path / "s.svg")  # well-formed
    assert "a&lt;b &amp; c" in (tmp_path / "s.svg").read_text()


def test_errors(tmp_path):
    with pytest.raises(ReportError):
        scatter_svg([])
    with pytest.raises(ReportError):
        emit_svg_chart([], "pie", tmp_path / "x.svg")


def test_coordinates_are_fixed_precision():
    bench, gens = fixture10()
    svg = scatter_svg(scatter_data(bench, gens))
    assert not re.search(r'c[xy]="\d+\.\d{3,}"', svg)
