"""
tests/test_runner.py — Tests del pipeline asíncrono sobre el experimento de regresión
"""
from __future__ import annotations

import time

import pytest

from torus_forge.core.runner import (
    STAGES,
    PipelineResult,
    gather_ordered,
    iterate_settings,
    run_pipeline,
    schedule_params,
    stability_report,
)
from torus_forge.kam.schedule import ANALYTIC
from torus_forge.report.models import DiophReport, ReportKind, RunReport
from torus_forge.report.store import ReportStore


# ------------------------------------------------------------------
# Reparto de trabajos
# ------------------------------------------------------------------

class TestGatherOrdered:
    @pytest.mark.asyncio
    async def test_keeps_item_order(self):
        def work(i: int) -> int:
            time.sleep(0.04 - 0.01 * i)
            return i * i

        assert await gather_ordered([0, 1, 2, 3], work, jobs=2) == [0, 1, 4, 9]

    @pytest.mark.asyncio
    async def test_single_job(self):
        assert await gather_ordered(["a", "b"], str.upper, jobs=0) == ["A", "B"]


# ------------------------------------------------------------------
# Parámetros derivados
# ------------------------------------------------------------------

def test_settings_from_config(regression_config):
    settings = iterate_settings(regression_config)
    assert settings.mode == ANALYTIC
    assert settings.K_cap == 12
    assert settings.j_max == 12
    params = schedule_params(regression_config, r0=1e-4)
    assert params.r0 == 1e-4
    assert params.tau_prime == 3.0
    assert schedule_params(regression_config).r0 == regression_config.schedule.r0


def test_stability_report_flags():
    report, (header, rows) = stability_report(0.05, 1.0, 2.0, 1.5, 1e-2, 30, {})
    assert report.ok
    assert report.exponent_index == pytest.approx(5.0)
    assert len(report.points) == 30
    assert report.points[-1].distance == pytest.approx(1e-2)
    assert header == ["distance", "value", "discrete", "ratio"]
    assert len(rows) == 30


def test_exit_code():
    result = PipelineResult()
    assert result.exit_code == 0
    result.reports["dioph"] = DiophReport(
        box=[[0.0, 1.0]], kappa=1.0, tau=1.0, k_scan=0, resolution=1, total=1, passing=1,
        passing_fraction=1.0, flags={"window": False},
    )
    assert result.failing() == ["dioph.window"]
    assert result.exit_code == 2


# ------------------------------------------------------------------
# Pipeline
# ------------------------------------------------------------------

class TestPipeline:
    @pytest.mark.asyncio
    async def test_unknown_stage(self, regression_config):
        with pytest.raises(ValueError):
            await run_pipeline(regression_config, stages=("dioph", "render"))

    @pytest.mark.asyncio
    async def test_partial_pipeline(self, regression_config, tmp_store):
        result = await run_pipeline(regression_config, store=tmp_store, jobs=1, stages=("dioph",))
        assert list(result.reports) == ["dioph"]
        assert [w[0] for w in result.grid] == pytest.approx([0.9, 1.0, 1.1])
        assert tmp_store.names() == ["regression_dioph.csv", "regression_dioph.json"]

    def test_all_stages_reported(self, pipeline):
        result, _ = pipeline
        assert list(result.reports) == list(STAGES)
        assert result.reports["dioph"].passing == 3
        assert result.reports["dioph"].passing_fraction == pytest.approx(0.6)

    def test_schedule_report(self, pipeline):
        sched = pipeline[0].reports["schedule"]
        assert sched.mode == ANALYTIC
        assert sched.sigma == pytest.approx(0.00625)
        assert sched.rho_prime == pytest.approx(5.0)
        assert sched.ok

    def test_run_report(self, pipeline):
        run = pipeline[0].reports["run"]
        assert isinstance(run, RunReport)
        assert [r.omega[0] for r in run.runs] == pytest.approx([0.9, 1.0, 1.1])
        assert run.flags["converged"]
        assert all(r.levels >= 1 for r in run.runs)
        assert run.jet_orders == 1
        assert run.flags["jet_consistency"]
        assert len(run.jet_consistency) == 3
        assert all(c <= 1e-6 for c in run.jet_consistency)

    def test_files_written(self, pipeline):
        _, store = pipeline
        names = store.names()
        for stage in STAGES:
            assert f"regression_{stage}.json" in names
        assert "regression_drift.csv" in names
        back = store.read_report("regression_normalform")
        assert back.kind == ReportKind.NORMAL_FORM.value
        assert back.drift_max is not None

    def test_normal_form_report(self, pipeline):
        report = pipeline[0].reports["normalform"]
        assert report.ok
        assert report.drift_offsets == pytest.approx([0.0, 1e-3, 5e-4])
        assert len(report.drift_onsets) == 3
        assert all(len(row) == 3 for row in report.drift_onsets)
        assert report.flags["onset_order"]
        assert all(row[0] is None for row in report.drift_onsets)

    def test_whitney_report(self, pipeline):
        whitney = pipeline[0].reports["whitney"]
        assert whitney.points == 3
        assert whitney.m_max == 1
        assert whitney.modes == 17


@pytest.mark.asyncio
async def test_runs_are_byte_identical(regression_config, tmp_path):
    """Dos corridas (1 y 2 trabajadores) dejan los mismos bytes en disco."""
    first, second = ReportStore(tmp_path / "a"), ReportStore(tmp_path / "b")
    await run_pipeline(regression_config, store=first, jobs=1)
    await run_pipeline(regression_config, store=second, jobs=2)
    assert first.names() == second.names()
    for name in first.names():
        assert (first.dir / name).read_bytes() == (second.dir / name).read_bytes()


@pytest.mark.asyncio
async def test_integrable_pipeline_is_identity(regression_config):
    """Con H¹ = 0 no hay pasos KAM, la conjugación es exacta y J no deriva."""
    model = regression_config.model.model_copy(update={"modes": [([1], 0.0)]})
    output = regression_config.output.model_copy(update={"drift_T": 5.0, "drift_records": 5})
    exp = regression_config.model_copy(update={"model": model, "output": output})
    result = await run_pipeline(exp, jobs=1, stages=STAGES[:5])
    assert result.reduced.eps_H == pytest.approx(1e-5)
    for run in result.jet.runs:
        assert run.levels == 0
        assert run.residuals[-1] <= 1e-12
        assert run.conjugacy <= 1e-12
    report = result.reports["normalform"]
    assert report.drift_max <= 1e-12
    assert report.energy_error <= 1e-12
