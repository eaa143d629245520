"""
tests/conftest.py — Fixtures compartidas para el test suite de torus-forge
"""
from __future__ import annotations

import asyncio
from pathlib import Path

import numpy as np
import pytest

from torus_forge.core.experiment import ExperimentConfig, load_experiment
from torus_forge.core.runner import PipelineResult, run_pipeline
from torus_forge.model.family import ParamFamily, expand_family
from torus_forge.model.presets.polynomial import quadratic
from torus_forge.report.store import ReportStore
from torus_forge.series.fourier import FourierTaylor

ROOT = Path(__file__).parent.parent

GOLDEN = (1.0, (np.sqrt(5) - 1) / 2)


@pytest.fixture
def tmp_store(tmp_path: Path) -> ReportStore:
    """ReportStore apuntando a un directorio temporal vacío."""
    return ReportStore(tmp_path)


@pytest.fixture
def golden() -> np.ndarray:
    """Frecuencia (1, número áureo − 1): de tipo constante, diofántica para todo τ ≥ 1."""
    return np.array(GOLDEN)


@pytest.fixture
def forced_rotator() -> ParamFamily:
    """H⁰ = ½|I|², H¹ = 10⁻⁴·(cos θ₁ + cos(θ₁ + θ₂)), expandida en la frecuencia áurea."""
    H1 = FourierTaylor.cosine((1, 0), 1e-4) + FourierTaylor.cosine((1, 1), 1e-4)
    return expand_family(quadratic(2), H1, [GOLDEN], R=0.1)


@pytest.fixture(scope="session")
def regression_config() -> ExperimentConfig:
    """El experimento de regresión del repo: péndulo débil en n = 1."""
    return load_experiment(ROOT / "model.cfg")


@pytest.fixture(scope="session")
def pipeline(regression_config: ExperimentConfig, tmp_path_factory) -> tuple[PipelineResult, ReportStore]:
    """Pipeline completo sobre model.cfg, una sola vez por sesión."""
    store = ReportStore(tmp_path_factory.mktemp("out"))
    result = asyncio.run(run_pipeline(regression_config, store=store, jobs=2))
    return result, store
