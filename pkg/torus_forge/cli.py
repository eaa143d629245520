"""
torus_forge/cli.py — Línea de comandos torus-forge

Runnable como: python3 -m torus_forge <subcomando> …
Códigos de salida: 0 ok, 1 error de configuración, 2 bandera de validez
que falla, 3 divergencia numérica.
"""
from __future__ import annotations

import argparse
import asyncio
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from torus_forge.approx.extension import TrigFunction
from torus_forge.approx.green import approx_sequence, centered_strips
from torus_forge.certs.gevrey import (
    GevreyCertificate,
    compose_cert,
    compose_cert_joint,
    majorant_solution,
    minimal_h_constant,
)
from torus_forge.certs.inversion import invert_near_identity
from torus_forge.config import Config, config
from torus_forge.core.experiment import ExperimentConfig, load_experiment
from torus_forge.core.runner import (
    STAGES,
    PipelineResult,
    iterate_settings,
    run_pipeline,
    stability_report,
)
from torus_forge.errors import ConfigError, TorusForgeError
from torus_forge.kam.iterate import step_params
from torus_forge.kam.schedule import ANALYTIC, GEVREY, ScheduleParams, build_schedule
from torus_forge.kam.step import kam_step
from torus_forge.report.models import (
    ApproxReport,
    CertReport,
    DiophReport,
    ScheduleReport,
    StepReport,
)
from torus_forge.report.store import ReportStore
from torus_forge.series.diophantine import build_window

logger = logging.getLogger(__name__)


def _setup_logging(level: str | None) -> None:
    logging.basicConfig(
        level=getattr(logging, (level or config.log_level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )


def _parse_box(text: str) -> list[tuple[float, float]]:
    return [tuple(float(x) for x in part.split(":")) for part in text.split(",")]


def _store(args: argparse.Namespace) -> ReportStore:
    return ReportStore(Path(args.out) if args.out else None)


def _finish(store: ReportStore, name: str, report, trace: tuple[list, list] | None = None) -> int:
    store.write_report(name, report)
    if trace is not None:
        store.write_csv(name, *trace)
    if not report.ok:
        logger.warning(f"{name}: fallan {', '.join(report.failing())}")
        return 2
    return 0


# ------------------------------------------------------------------
# Subcomandos
# ------------------------------------------------------------------

def cmd_dioph(args: argparse.Namespace) -> int:
    box = _parse_box(args.box)
    window = build_window(box, args.kappa, args.tau, args.kscan, args.res)
    report = DiophReport(
        config=vars_config(args),
        box=[list(b) for b in window.box],
        kappa=args.kappa,
        tau=args.tau,
        k_scan=args.kscan,
        resolution=args.res,
        total=len(window.points),
        passing=len(window.passing),
        passing_fraction=window.passing_fraction,
    )
    return _finish(_store(args), "dioph", report, (window.header(), window.rows()))


def cmd_schedule(args: argparse.Namespace) -> int:
    if args.config:
        return _pipeline(args, ("dioph", "schedule"))
    params = ScheduleParams(
        rho=args.rho, tau=args.tau, n=args.n, kappa=args.kappa, r0=args.r0,
        sigma=args.sigma, mode=args.mode, tau_prime=args.tau_prime, j_max=args.levels,
    )
    sched = build_schedule(params)
    ratios = sched.h_ratios()
    report = ScheduleReport(
        config=vars_config(args),
        flags={name: bool(np.all(vals)) for name, vals in sched.flags.items()},
        mode=params.mode,
        sigma=sched.sigma,
        sigma0=float(sched.sigma_j[0]),
        delta=sched.delta,
        B=sched.B,
        levels=sched.levels,
        rho_eff=params.rho_eff,
        rho_prime=params.rho_prime,
        max_h_ratio=float(ratios.max()) if ratios.size else 0.0,
    )
    return _finish(_store(args), "schedule", report, (sched.header(), sched.rows()))


def cmd_step(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    result = asyncio.run(run_pipeline(exp, stages=("schedule",), jobs=args.jobs))
    family = result.reduced.family
    omega = np.asarray(result.grid[args.index], dtype=float)
    params = step_params(result.schedule, 0, iterate_settings(exp))
    r = kam_step(family.member(omega), omega, params, family=family, xi=omega).report
    report = StepReport(
        config=exp.resolved(),
        flags={k: bool(v) for k, v in r.flags.items()},
        omega=omega.tolist(),
        K=r.K,
        sigma=r.sigma,
        eta=r.eta,
        eps=r.eps,
        p_plus=r.p_plus,
        deformation=r.deformation,
        phi_shift=r.phi_shift,
        residual_before=r.residual_before,
        residual_after=r.residual_after,
        error_ratio=r.error_ratio,
        deformation_ratio=r.deformation_ratio,
    )
    return _finish(_store(args), f"{exp.output.name}_step", report, (r.header(), [r.row()]))


def _pipeline(args: argparse.Namespace, stages: Sequence[str], exp: ExperimentConfig | None = None) -> int:
    exp = exp or load_experiment(args.config)
    result: PipelineResult = asyncio.run(run_pipeline(exp, store=_store(args), jobs=args.jobs, stages=stages))
    for name in result.failing():
        logger.warning(f"Falla: {name}")
    return result.exit_code


def cmd_run(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    updates = {}
    if args.omega_grid:
        updates["frequency"] = exp.frequency.model_copy(
            update={"grid": [[float(x) for x in row.split(",")] for row in args.omega_grid.split(";")]}
        )
    if args.mode:
        updates["schedule"] = exp.schedule.model_copy(update={"mode": args.mode})
    if updates:
        exp = ExperimentConfig.model_validate({**exp.model_dump(), **{k: v.model_dump() for k, v in updates.items()}})
    return _pipeline(args, ("dioph", "schedule", "run"), exp)


def cmd_approx(args: argparse.Namespace) -> int:
    P = TrigFunction.gevrey_model(args.modes)
    if args.first_order:
        strips = centered_strips(args.first_order, args.levels, L1=1.0, rho=args.rho)
    else:
        strips = [args.u0 * args.ratio**j for j in range(args.levels)]
    result = approx_sequence(P, strips, L1=1.0, rho=args.rho)
    report = ApproxReport(
        config=vars_config(args),
        flags={"rate": (result.rate_slope < 0 and result.rate_r2 >= 0.98)
               if not math.isnan(result.rate_slope) else False},
        rho=args.rho,
        levels=args.levels,
        rate_slope=None if math.isnan(result.rate_slope) else result.rate_slope,
        rate_r2=None if math.isnan(result.rate_r2) else result.rate_r2,
        max_dbar_defect=max(lv.dbar_defect for lv in result.levels),
    )
    return _finish(_store(args), "approx", report, (result.header(), result.rows()))


def cmd_whitney(args: argparse.Namespace) -> int:
    exp = load_experiment(args.config)
    store = _store(args)
    result = asyncio.run(run_pipeline(exp, store=store, jobs=args.jobs,
                                      stages=("dioph", "schedule", "run", "whitney")))
    store.write_json(f"{exp.output.name}_jet", result.graph.to_dict())
    return result.exit_code


def cmd_normalform(args: argparse.Namespace) -> int:
    return _pipeline(args, ("dioph", "schedule", "run", "whitney", "normalform"))


def cmd_stability(args: argparse.Namespace) -> int:
    if args.config:
        exp = load_experiment(args.config)
        update = {"stability_dmax": args.dmax, "stability_points": args.points}
        if args.tmax:
            update["drift_T"] = args.tmax
        output = exp.output.model_copy(update=update)
        exp = ExperimentConfig.model_validate({**exp.model_dump(), "output": output.model_dump()})
        return _pipeline(args, STAGES, exp)
    report, trace = stability_report(args.kappa, args.C2, args.rho, args.tau, args.dmax,
                                      args.points, vars_config(args))
    return _finish(_store(args), "stability", report, trace)


def cmd_cert(args: argparse.Namespace) -> int:
    if args.operation == "compose":
        g = GevreyCertificate(amplitude=args.A1, h1=args.B1, h2=args.C1, rho=args.rho,
                              rho_prime=args.rho_prime, n=args.n)
        f = GevreyCertificate(amplitude=1.0, h1=args.B2, h2=args.C2, rho=args.rho,
                              rho_prime=args.rho_prime, n=args.n)
        joint = compose_cert_joint(g, f)
        param = compose_cert(f, g)
        report = CertReport(
            config=vars_config(args),
            operation="compose",
            certificate=joint.as_dict(),
            chain=joint.chain,
            extra={"param": param.chain, "minimal_H": minimal_h_constant(args.rho)},
        )
    else:
        res = invert_near_identity(lambda u: -args.amplitude * np.sin(u), np.array([args.target]))
        table = majorant_solution(args.eps_A, args.h, rho=args.rho, rho_prime=args.rho_prime)
        report = CertReport(
            config=vars_config(args),
            operation="invert",
            chain={"iterations": res.iterations, "residual": res.residual},
            extra={
                "point": float(res.point[0]),
                "majorant": [[q, a, v] for q, a, v in table.rows()],
            },
        )
    code = _finish(_store(args), f"cert_{args.operation}", report)
    if args.json:
        print(json.dumps(report.model_dump(), sort_keys=True, indent=2, ensure_ascii=False))
    return code


def vars_config(args: argparse.Namespace) -> dict:
    """Argumentos de la línea de comandos como config resuelta del reporte."""
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "log_level", "jobs")}


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torus-forge", description="Toros invariantes KAM en clase Gevrey")
    parser.add_argument("--jobs", type=int, default=None, help="trabajadores (TORUS_FORGE_JOBS)")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")
    parser.add_argument("--out", default=None, help="directorio de salida (TORUS_FORGE_OUTPUT_DIR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dioph", help="ventana diofántica Ω_κ")
    p.add_argument("--box", required=True, help='"lo:hi,lo:hi"')
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--kscan", type=int, default=200)
    p.add_argument("--res", type=int, default=21)
    p.set_defaults(func=cmd_dioph)

    p = sub.add_parser("schedule", help="esquema súper-exponencial")
    p.add_argument("--config", default=None)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=1.5)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--kappa", type=float, default=0.01)
    p.add_argument("--r0", type=float, default=1e-3)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--mode", choices=(GEVREY, ANALYTIC), default=GEVREY)
    p.add_argument("--tau-prime", dest="tau_prime", type=float, default=None)
    p.add_argument("--levels", type=int, default=20)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("step", help="un paso KAM en una frecuencia de la grilla")
    p.add_argument("--config", required=True)
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_step)

    p = sub.add_parser("run", help="iteración KAM sobre la grilla de frecuencias")
    p.add_argument("--config", required=True)
    p.add_argument("--omega-grid", dest="omega_grid", default=None, help='"w1,w2;w1,w2"')
    p.add_argument("--mode", choices=(GEVREY, ANALYTIC), default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("approx-demo", help="aproximantes analíticos de la función modelo G^ρ")
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--u0", type=float, default=0.2)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--first-order", dest="first_order", type=int, default=None,
                   help="anchos centrados en N = first_order, first_order + 1, …")
    p.add_argument("--modes", type=int, default=200)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("whitney", help="jets del grafo del toro y su extensión")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_whitney)

    p = sub.add_parser("normalform", help="forma normal simpléctica exacta")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_normalform)

    p = sub.add_parser("stability", help="cota de estabilidad efectiva y deriva")
    p.add_argument("--config", default=None)
    p.add_argument("--dmax", type=float, default=1e-2)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--C2", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=2.0)
    p.add_argument("--tau", type=float, default=1.5)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("cert", help="cálculo de certificados Gevrey")
    p.add_argument("operation", choices=("compose", "invert"))
    p.add_argument("--json", action="store_true")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--rho-prime", dest="rho_prime", type=float, default=1.0)
    p.add_argument("--A1", type=float, default=1.0)
    p.add_argument("--B1", type=float, default=1.0)
    p.add_argument("--C1", type=float, default=1.0)
    p.add_argument("--B2", type=float, default=1.0)
    p.add_argument("--C2", type=float, default=1.0)
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--target", type=float, default=1.0)
    p.add_argument("--eps-A", dest="eps_A", type=float, default=0.1)
    p.add_argument("--h", type=float, default=1.0)
    p.set_defaults(func=cmd_cert)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    if args.jobs is not None and args.jobs < 1:
        parser.error("--jobs debe ser ≥ 1")
    problems = Config.validate()
    if problems:
        for p in problems:
            logger.error(p)
        return ConfigError.exit_code
    try:
        return args.func(args)
    except TorusForgeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Parámetros inválidos: {e}")
        return ConfigError.exit_code
