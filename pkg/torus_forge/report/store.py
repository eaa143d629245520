"""
torus_forge/report/store.py — Leer/escribir reportes JSON y trazas CSV
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Sequence

from torus_forge.config import config
from torus_forge.report.models import Report, parse_report

logger = logging.getLogger(__name__)


class ReportStore:
    """Directorio de salida: <nombre>.json para reportes, <nombre>.csv para trazas."""

    def __init__(self, output_dir: Path | None = None):
        self.dir = Path(output_dir or config.output_dir)

    def _path(self, name: str, suffix: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / f"{name}{suffix}"

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    def write_report(self, name: str, report: Report) -> Path:
        path = self._path(name, ".json")
        data = report.model_dump()
        path.write_text(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        logger.info(f"Reporte {report.kind} → {path}")
        return path

    def read_report(self, name: str) -> Report:
        path = self.dir / f"{name}.json"
        return parse_report(json.loads(path.read_text()))

    def write_json(self, name: str, data: dict[str, Any]) -> Path:
        path = self._path(name, ".json")
        path.write_text(json.dumps(data, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
        return path

    def read_json(self, name: str) -> dict[str, Any]:
        return json.loads((self.dir / f"{name}.json").read_text())

    # ------------------------------------------------------------------
    # CSV
    # ------------------------------------------------------------------

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = self._path(name, ".csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        logger.debug(f"{len(rows)} filas → {path}")
        return path

    def read_csv(self, name: str) -> tuple[list[str], list[list[str]]]:
        with open(self.dir / f"{name}.csv", newline="") as f:
            rows = list(csv.reader(f))
        if not rows:
            return [], []
        return rows[0], rows[1:]

    def names(self) -> list[str]:
        if not self.dir.exists():
            return []
        return sorted(p.name for p in self.dir.iterdir() if p.suffix in (".json", ".csv"))
