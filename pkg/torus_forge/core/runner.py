"""
torus_forge/core/runner.py — Pipeline completo de un experimento

dioph → modelo → esquema → iteración por ω → jets → Whitney → forma normal
→ estabilidad. Las frecuencias de la grilla (y los arranques de deriva) son
trabajos independientes: se reparten con asyncio.to_thread bajo un semáforo
de `jobs` y se reensamblan en el orden de la grilla.
"""
from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Sequence, TypeVar

import numpy as np

from torus_forge.config import Config
from torus_forge.core.experiment import ExperimentConfig
from torus_forge.kam.iterate import (
    IterateSettings,
    TorusJet,
    iterate,
)
from torus_forge.kam.schedule import KamSchedule, ScheduleParams, build_schedule
from torus_forge.normal_form.drift import DriftTrace, drift_experiment
from torus_forge.normal_form.generating import (
    NormalForm,
    ReducedFamily,
    build_chi,
    generating_potential,
    graph_jet,
    reduce_to_family,
)
from torus_forge.normal_form.stability import stability_profile
from torus_forge.report.models import (
    DiophReport,
    FrequencyRun,
    NormalFormReport,
    Report,
    RunReport,
    ScheduleReport,
    StabilityPoint,
    StabilityReport,
    WhitneyReport,
)
from torus_forge.report.store import ReportStore
from torus_forge.series.diophantine import FrequencyWindow, build_window
from torus_forge.whitney.extension import (
    WhitneyJet,
    assemble,
    extend_jet,
    fourier_weight,
    torus_jet_samples,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

STAGES = ("dioph", "schedule", "run", "whitney", "normalform", "stability")

DRIFT_TOL = 1e-7
ENERGY_TOL = 1e-10


@dataclass
class PipelineResult:
    reports: dict[str, Report] = field(default_factory=dict)
    traces: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    window: FrequencyWindow | None = None
    grid: list[tuple[float, ...]] = field(default_factory=list)
    reduced: ReducedFamily | None = None
    schedule: KamSchedule | None = None
    jet: TorusJet | None = None
    graph: WhitneyJet | None = None
    normal_form: NormalForm | None = None
    drift: list[DriftTrace] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.reports.values())

    def failing(self) -> list[str]:
        return [f"{name}.{flag}" for name, r in self.reports.items() for flag in r.failing()]

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 2


async def gather_ordered(
    items: Sequence[Any], work: Callable[[Any], T], jobs: int
) -> list[T]:
    """Corre work(item) en hilos, a lo sumo `jobs` a la vez; resultados en el orden de items."""
    semaphore = asyncio.Semaphore(max(1, jobs))

    async def one(item: Any) -> T:
        async with semaphore:
            return await asyncio.to_thread(work, item)

    return list(await asyncio.gather(*(one(item) for item in items)))


# ------------------------------------------------------------------
# Parámetros derivados de la config
# ------------------------------------------------------------------

def schedule_params(exp: ExperimentConfig, r0: float | None = None) -> ScheduleParams:
    s = exp.schedule
    return ScheduleParams(
        rho=s.rho,
        tau=exp.frequency.tau,
        n=exp.model.n,
        kappa=exp.frequency.kappa,
        r0=r0 if r0 else s.r0,
        L1=s.L1,
        L2=s.L2,
        varsigma=s.varsigma,
        c1=s.c1,
        sigma=s.sigma,
        a_const=s.a_const,
        b_const=s.b_const,
        j_max=s.j_max,
        mode=s.mode,
        tau_prime=s.tau_prime,
    )


def iterate_settings(exp: ExperimentConfig) -> IterateSettings:
    t = exp.tolerances
    return IterateSettings(
        kappa=exp.frequency.kappa,
        tau=exp.frequency.tau,
        mode=exp.schedule.mode,
        L1=exp.schedule.L1,
        rho=exp.schedule.rho,
        K_cap=t.K_cap,
        j_max=t.levels,
        tol=t.tol,
        h=t.h,
    )


def _nan_to_none(x: float) -> float | None:
    return None if x is None or math.isnan(x) else float(x)


def _inf_to_none(x: float) -> float | None:
    return None if math.isinf(x) else float(x)


def _later_or_equal(near: float | None, far: float | None) -> bool:
    """None es "nunca": el arranque cercano no puede derivar antes que el lejano."""
    if near is None:
        return True
    return far is not None and near >= far


# ------------------------------------------------------------------
# Etapas
# ------------------------------------------------------------------

def _dioph_stage(exp: ExperimentConfig, result: PipelineResult) -> None:
    f = exp.frequency
    window = build_window(f.box, f.kappa, f.tau, f.k_scan, f.resolution)
    result.window = window
    result.grid = ([tuple(w) for w in f.grid] if f.grid is not None
                   else [p.omega for p in window.passing])
    result.reports["dioph"] = DiophReport(
        config=exp.resolved(),
        box=[list(b) for b in window.box],
        kappa=f.kappa,
        tau=f.tau,
        k_scan=f.k_scan,
        resolution=f.resolution,
        total=len(window.points),
        passing=len(window.passing),
        passing_fraction=window.passing_fraction,
    )
    result.traces["dioph"] = (window.header(), window.rows())


def _schedule_stage(exp: ExperimentConfig, result: PipelineResult) -> None:
    H0, H1 = exp.integrable(), exp.perturbation()
    result.reduced = reduce_to_family(H0, H1, exp.frequency.kappa, result.grid,
                                      eps_H=exp.model.eps_H, threshold=exp.tolerances.eps_threshold)
    sched = build_schedule(schedule_params(exp, r0=result.reduced.r))
    result.schedule = sched
    ratios = sched.h_ratios()
    result.reports["schedule"] = ScheduleReport(
        config=exp.resolved(),
        flags={name: bool(np.all(vals)) for name, vals in sched.flags.items()},
        mode=sched.params.mode,
        sigma=sched.sigma,
        sigma0=float(sched.sigma_j[0]),
        delta=sched.delta,
        B=sched.B,
        levels=sched.levels,
        rho_eff=sched.params.rho_eff,
        rho_prime=sched.rho_prime,
        max_h_ratio=float(ratios.max()) if ratios.size else 0.0,
    )
    result.traces["schedule"] = (sched.header(), sched.rows())


async def _run_stage(exp: ExperimentConfig, result: PipelineResult, jobs: int) -> None:
    family = result.reduced.family
    settings = iterate_settings(exp)
    sched = result.schedule
    G = exp.tolerances.grid_size

    def solve(omega: tuple[float, ...]) -> TorusJet:
        return iterate(family, sched, [omega], settings, G, order=1,
                       nodes=exp.tolerances.jet_nodes, seed=Config.seed,
                       tolerance=exp.tolerances.jet)

    singles = await gather_ordered(result.grid, solve, jobs)
    runs = [s.runs[0] for s in singles]
    result.jet = TorusJet(runs, G, [s.derivatives[0] for s in singles],
                          [s.consistency[0] for s in singles])

    rows = []
    for run in runs:
        for j, (res, ratio) in enumerate(zip(run.residuals, run.template_log_ratios)):
            rows.append([repr(float(w)) for w in run.omega] + [j, repr(float(res)), repr(float(ratio))])
    n = exp.model.n
    header = [f"omega{i + 1}" for i in range(n)] + ["level", "residual", "template_log_ratio"]
    result.traces["run"] = (header, rows)

    torus_tol = exp.tolerances.torus
    result.reports["run"] = RunReport(
        config=exp.resolved(),
        flags={
            "converged": all(r.residuals[-1] <= settings.tol for r in runs),
            "conjugacy": all(r.conjugacy <= torus_tol for r in runs),
            "symplectic": all(r.symplectic <= exp.tolerances.symplectic for r in runs),
            "truncation": all(r.truncation <= torus_tol for r in runs),
            "jet_consistency": all(c <= exp.tolerances.jet for c in result.jet.consistency),
        },
        mode=settings.mode,
        sigma=sched.sigma,
        runs=[
            FrequencyRun(
                omega=[float(w) for w in r.omega],
                xi=[float(np.real(x)) for x in r.xi],
                levels=r.levels,
                residuals=[float(x) for x in r.residuals],
                template_log_ratios=[float(x) for x in r.template_log_ratios],
                contraction_exponent=_nan_to_none(r.contraction_exponent()),
                conjugacy=_nan_to_none(r.conjugacy),
                invariance=_nan_to_none(r.invariance),
                symplectic=_nan_to_none(r.symplectic),
                truncation=_nan_to_none(r.truncation),
            )
            for r in runs
        ],
        jet_orders=1,
        jet_consistency=result.jet.consistency,
    )


def _whitney_stage(exp: ExperimentConfig, result: PipelineResult) -> None:
    jet = result.jet
    n, G = jet.n, jet.grid_size
    graph = graph_jet(jet, result.reduced.family, m_max=1).fit_constants()
    result.graph = graph

    # Ida y vuelta de (U − θ)₁ por pesos de Fourier, extensión y ensamblado
    samples = torus_jet_samples(jet, 0, "u", m_max=1, A=graph.A, C2=graph.C2,
                                rho=exp.schedule.rho, rho_prime=graph.rho_prime)
    modes = fourier_weight(samples, n, G)
    ext = extend_jet(modes.jet, check=False)
    rebuilt = assemble(modes, jet.theta(), ext(samples.points))
    roundtrip = float(np.abs(rebuilt - np.real(samples.values())).max())
    compatibility = graph.compatibility()[0]
    growth = extend_jet(graph, check=False).growth(graph.points, max_order=2)

    result.reports["whitney"] = WhitneyReport(
        config=exp.resolved(),
        flags={"roundtrip": roundtrip <= 1e-9},
        points=graph.size,
        m_max=graph.m_max,
        constants={"A": graph.A, "C1": graph.C1, "C2": graph.C2, "rho_prime": graph.rho_prime},
        compatibility=compatibility,
        roundtrip_error=roundtrip,
        mode_radius=modes.r,
        modes=len(modes.modes),
        growth={str(k): float(v) for k, v in growth.items()},
    )


async def _normal_form_stage(exp: ExperimentConfig, result: PipelineResult, jobs: int) -> None:
    t = exp.tolerances
    H0, H1 = exp.integrable(), exp.perturbation()
    data = generating_potential(result.graph, result.jet.grid_size, lagrangian_tol=t.lagrangian)
    nf = build_chi(data, H0, H1)
    result.normal_form = nf
    flat_R, flat_dR = nf.flatness()
    torus = nf.torus_defect()
    symplectic = nf.symplecticity(seed=Config.seed)
    period = max(data.period_defect(i, seed=Config.seed) for i in range(len(data.actions)))

    n = nf.n
    out = exp.output
    # Arranques: sobre cada toro, a distancia d y a distancia d/2
    offsets = [0.0] + ([out.drift_distance, out.drift_distance / 2] if out.drift_distance > 0 else [])
    starts = [np.concatenate([np.zeros(n), J + d]) for d in offsets for J in nf.flat_set]

    drift_max = energy_max = None
    onsets: list[list[float | None]] = []
    if H1.degree == 0:
        traces = await gather_ordered(
            starts, lambda s: drift_experiment(nf, s[None, :], out.drift_T, records=out.drift_records), jobs
        )
        result.drift = traces
        rows = []
        for index, trace in enumerate(traces):
            for row in trace.rows():
                rows.append([repr(row["time"]), index, repr(row["drift"]), repr(row["energy_error"])])
        result.traces["drift"] = (["time", "start", "drift", "energy_error"], rows)
        m = len(nf.flat_set)
        drift_max = max(tr.max_drift for tr in traces[:m])
        energy_max = max(tr.max_energy_error for tr in traces)
        onsets = [[_inf_to_none(traces[k * m + i].onset_time(DRIFT_TOL)) for k in range(len(offsets))]
                  for i in range(m)]
    else:
        logger.warning("H¹ depende de las acciones: se omite el experimento de deriva")

    flags = {
        "flatness": max(flat_R, flat_dR) <= t.flatness,
        "symplectic": symplectic <= t.symplectic,
        "torus": torus <= t.torus,
    }
    if drift_max is not None:
        flags["drift"] = drift_max <= DRIFT_TOL
        flags["energy"] = energy_max <= ENERGY_TOL
    if len(offsets) == 3 and onsets:
        flags["onset_order"] = all(_later_or_equal(row[2], row[1]) for row in onsets)
    red = result.reduced
    result.reports["normalform"] = NormalFormReport(
        config=exp.resolved(),
        flags=flags,
        eps_H=red.eps_H,
        radius=red.r,
        degenerate=red.degenerate,
        template_ratio=red.template_ratio,
        lagrangian_defect=data.lagrangian_defect,
        gradient_residual=data.gradient_residual,
        compatibility=data.compatibility,
        period_defect=period,
        degeneracy=nf.degeneracy,
        flat_remainder=flat_R,
        flat_derivative=flat_dR,
        torus_defect=torus,
        symplectic=symplectic,
        drift_max=drift_max,
        energy_error=energy_max,
        drift_offsets=offsets if onsets else [],
        drift_onsets=onsets,
        constants={"A": result.graph.A, "C2": result.graph.C2},
    )


def stability_report(
    kappa: float, C2: float, rho: float, tau: float, dmax: float, points: int,
    config: dict[str, Any],
) -> tuple[StabilityReport, tuple[list[str], list[list]]]:
    """Perfil de la cota en distancias geométricas (dmax·10⁻³, dmax) y su traza CSV."""
    distances = np.geomspace(dmax * 1e-3, dmax, points)
    bounds = stability_profile(distances, kappa, C2, rho, tau)
    values = [b.value for b in bounds]
    max_ratio = max(max(b.ratio, 1 / b.ratio) for b in bounds if b.ratio > 0)
    report = StabilityReport(
        config=config,
        flags={
            "monotone": all(b >= a for a, b in zip(values, values[1:])),
            "discrete": max_ratio <= 3.0,
        },
        kappa=kappa,
        C2=C2,
        rho=rho,
        tau=tau,
        exponent_index=bounds[0].exponent_index,
        points=[StabilityPoint(distance=b.distance, value=b.value, discrete=b.discrete, ratio=b.ratio)
                for b in bounds],
        max_ratio=max_ratio,
    )
    trace = (
        ["distance", "value", "discrete", "ratio"],
        [[repr(b.distance), repr(b.value), repr(b.discrete), repr(b.ratio)] for b in bounds],
    )
    return report, trace


def _stability_stage(exp: ExperimentConfig, result: PipelineResult) -> None:
    out = exp.output
    C2 = result.graph.C2 if result.graph is not None else 1.0
    report, trace = stability_report(
        exp.frequency.kappa, C2, exp.schedule.rho, exp.frequency.tau,
        out.stability_dmax, out.stability_points, exp.resolved(),
    )
    result.reports["stability"] = report
    result.traces["stability"] = trace


# ------------------------------------------------------------------
# Pipeline
# ------------------------------------------------------------------

async def run_pipeline(
    exp: ExperimentConfig,
    store: ReportStore | None = None,
    jobs: int | None = None,
    stages: Sequence[str] = STAGES,
) -> PipelineResult:
    """Corre las etapas pedidas en orden; cada etapa necesita las anteriores."""
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ValueError(f"etapas desconocidas: {sorted(unknown)}")
    last = max(STAGES.index(s) for s in stages) if stages else -1
    jobs = Config.effective_jobs(jobs)
    result = PipelineResult()

    steps: list[tuple[str, Callable[[], Awaitable[None] | None]]] = [
        ("dioph", lambda: _dioph_stage(exp, result)),
        ("schedule", lambda: _schedule_stage(exp, result)),
        ("run", lambda: _run_stage(exp, result, jobs)),
        ("whitney", lambda: _whitney_stage(exp, result)),
        ("normalform", lambda: _normal_form_stage(exp, result, jobs)),
        ("stability", lambda: _stability_stage(exp, result)),
    ]
    for index, (name, stage) in enumerate(steps[:last + 1]):
        logger.info(f"Etapa {index + 1}/{last + 1}: {name}")
        outcome = stage()
        if asyncio.iscoroutine(outcome):
            await outcome

    if store is not None:
        prefix = exp.output.name
        for name, report in result.reports.items():
            store.write_report(f"{prefix}_{name}", report)
        for name, (header, rows) in result.traces.items():
            store.write_csv(f"{prefix}_{name}", header, rows)

    if result.failing():
        logger.warning(f"Banderas que fallan: {', '.join(result.failing())}")
    return result
