"""
tests/test_report.py — Tests de modelos de reporte y del ReportStore
"""
from __future__ import annotations

import json

import pytest
from pydantic import ValidationError

from torus_forge.report.models import (
    CertReport,
    DiophReport,
    ReportKind,
    StabilityPoint,
    StabilityReport,
    parse_report,
)
from torus_forge.report.store import ReportStore


def _dioph(**kwargs) -> DiophReport:
    return DiophReport(
        config={"kappa": 0.05},
        box=[[0.8, 1.2]],
        kappa=0.05,
        tau=1.5,
        k_scan=200,
        resolution=5,
        total=5,
        passing=3,
        passing_fraction=0.6,
        **kwargs,
    )


# ------------------------------------------------------------------
# Modelos
# ------------------------------------------------------------------

def test_kind_is_plain_string():
    report = _dioph()
    assert report.kind == "dioph"
    assert report.model_dump()["kind"] == "dioph"


def test_ok_and_failing():
    report = _dioph(flags={"window": True, "boundary": False, "fraction": False})
    assert not report.ok
    assert report.failing() == ["boundary", "fraction"]
    assert _dioph().ok


def test_parse_report_dispatches_on_kind():
    data = CertReport(operation="compose", certificate={"h1": 8.0}).model_dump()
    report = parse_report(data)
    assert isinstance(report, CertReport)
    assert report.certificate == {"h1": 8.0}


def test_parse_report_unknown_kind():
    with pytest.raises(ValueError):
        parse_report({"kind": "telemetry"})


def test_every_kind_has_a_model():
    """Cada kind llega a su modelo: falla la validación de campos, no el despacho."""
    for kind in ReportKind:
        with pytest.raises(ValidationError):
            parse_report({"kind": kind.value, "operation": None, "box": None})


# ------------------------------------------------------------------
# Store
# ------------------------------------------------------------------

class TestReportStore:
    def test_write_then_read(self, tmp_store: ReportStore):
        path = tmp_store.write_report("regression_dioph", _dioph())
        assert path.name == "regression_dioph.json"
        back = tmp_store.read_report("regression_dioph")
        assert isinstance(back, DiophReport)
        assert back == _dioph()

    def test_json_is_sorted(self, tmp_store: ReportStore):
        path = tmp_store.write_report("d", _dioph())
        text = path.read_text()
        keys = list(json.loads(text))
        assert keys == sorted(keys)
        assert text.endswith("\n")

    def test_nested_points(self, tmp_store: ReportStore):
        report = StabilityReport(
            kappa=0.05, C2=1.0, rho=2.0, tau=1.5, exponent_index=5.0,
            points=[StabilityPoint(distance=1e-3, value=1e-9, discrete=1.1e-9, ratio=0.9)],
        )
        tmp_store.write_report("s", report)
        back = tmp_store.read_report("s")
        assert back.points[0].discrete == 1.1e-9

    def test_csv_keeps_float_repr(self, tmp_store: ReportStore):
        value = 0.1 + 0.2
        tmp_store.write_csv("trace", ["j", "value", "flag"], [[0, value, "true"]])
        header, rows = tmp_store.read_csv("trace")
        assert header == ["j", "value", "flag"]
        assert rows == [["0", repr(value), "true"]]
        assert float(rows[0][1]) == value

    def test_names(self, tmp_store: ReportStore):
        assert tmp_store.names() == []
        tmp_store.write_json("b", {"x": 1})
        tmp_store.write_csv("a", ["x"], [])
        assert tmp_store.names() == ["a.csv", "b.json"]
        assert tmp_store.read_json("b") == {"x": 1}

    def test_empty_csv(self, tmp_store: ReportStore):
        (tmp_store.dir / "empty.csv").parent.mkdir(parents=True, exist_ok=True)
        (tmp_store.dir / "empty.csv").write_text("")
        assert tmp_store.read_csv("empty") == ([], [])
