"""
torus_forge/config.py — Configuración del proceso cargada desde .env
"""
from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv

# Cargar .env desde la raíz del proyecto
_ROOT = Path(__file__).parent.parent
load_dotenv(_ROOT / ".env")


class Config:
    """Settings del proceso. Los parámetros del experimento viven en model.cfg."""

    # Paralelismo (espejo de --jobs)
    jobs: int = int(os.getenv("TORUS_FORGE_JOBS", "1"))

    # Logging
    log_level: str = os.getenv("TORUS_FORGE_LOG_LEVEL", "INFO").upper()

    # Numérica
    resonance_floor: float = float(os.getenv("TORUS_FORGE_RESONANCE_FLOOR", "1e-14"))
    seed: int = int(os.getenv("TORUS_FORGE_SEED", "0"))

    # Paths
    root_dir: Path = _ROOT
    output_dir: Path = Path(os.getenv("TORUS_FORGE_OUTPUT_DIR", str(_ROOT / "out")))

    @classmethod
    def effective_jobs(cls, override: int | None = None) -> int:
        """--jobs gana sobre la variable de entorno; nunca menos de 1."""
        return max(1, override if override is not None else cls.jobs)

    @classmethod
    def validate(cls) -> list[str]:
        """Retorna lista de errores de configuración."""
        errors = []
        if cls.jobs < 1:
            errors.append("TORUS_FORGE_JOBS debe ser ≥ 1")
        if cls.log_level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
            errors.append(f"TORUS_FORGE_LOG_LEVEL inválido: {cls.log_level}")
        if not 0.0 < cls.resonance_floor < 1e-6:
            errors.append("TORUS_FORGE_RESONANCE_FLOOR fuera de (0, 1e-6)")
        return errors


# Singleton accesible directamente
config = Config()
