"""Dispatch of a scenario to the library and its output files."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product
from pathlib import Path

from . import analytic as an
from .dynamics import efficiencies, integrate, output_field
from .errors import ScenarioError
from .model import ControlWaveform, MemoryParams, ScheduleSpec, make_exponential_signal, storage_grid
from .modes import build_mode_basis, mode_records, multimode_stage2_efficiency, overlap_matrix
from .optimizer import classify_regime, optimize_storage, seed_controls
from .report import ResultRecord, emit_csv, emit_modes_csv, emit_trace_csv, emit_waveform_csv
from .scenario import AnalyticEntry, Scenario

__all__ = ["RunOutput", "default_workers", "run", "sweep_points"]


class RunOutput(list):
    """Result records of one run plus the files it wrote."""

    def __init__(self, records=(), files=()):
        super().__init__(records)
        self.files: list[Path] = list(files)


def default_workers() -> int:
    env = os.environ.get("SPINVAULT_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def _record(sid: str, params: MemoryParams, T: float, **etas) -> ResultRecord:
    return ResultRecord(sid, params.J / params.gamma_s if params.gamma_s else math.inf,
                        params.gamma_s * T, params.C, **etas)


def _simulate(s: Scenario):
    p, sch, cfg = s.params, s.schedule, s.optimizer
    grid, sch = storage_grid(sch, cfg.steps_per_T, cfg.steps_per_exchange, cfg.max_steps)
    signal = make_exponential_signal(sch.T, grid)
    control = s.control or {"kind": "lambda"}
    if control["kind"] == "constant":
        ctrl = ControlWaveform.constant(grid, control["omega_tilde"])
    else:
        seeds = seed_controls(p, sch.T, grid, sch)
        if control["kind"] not in seeds:
            raise ScenarioError(f"control {control['kind']!r} not available for these parameters")
        ctrl = seeds[control["kind"]]
    traj = integrate(p, ctrl, signal, grid)
    rep = efficiencies(traj, signal, sch, p)
    regime = classify_regime(traj, sch.T_prime).value
    return traj, rep, regime, None


def _optimize(s: Scenario):
    res = optimize_storage(s.params, None, s.schedule, s.optimizer)
    return res.traj, res.report, res.regime.value, res.trace


def _analytic_record(s: Scenario, e: AnalyticEntry) -> ResultRecord:
    p, sch = s.params, s.schedule
    sid = f"{s.id}:{e.scheme}"
    dark = math.exp(-2.0 * p.gamma_k * sch.tau)
    if e.scheme == "sequential":
        T = 1.0 / (e.gamma_Omega - p.gamma_s) if e.gamma_Omega else (e.T or sch.T)
        x = p.gamma_s * T
        ex = math.exp(-math.pi * p.gamma_s / (2.0 * p.J))
        tot = an.sequential_total_efficiency(p, x, sch.tau)
        return _record(sid, p, T, eta_in=an.lambda_storage_first_order(p.C, p.gamma_s, T) * ex,
                       eta_out=an.lambda_retrieval_first_order(p.C, p.gamma_s, T) * ex,
                       eta_dark=dark, eta_tot=tot, max_S2=None, regime="Sequential")
    if e.scheme == "adiabatic":
        T = e.T or sch.T
        one = an.adiabatic_storage_efficiency(p, T)
        return _record(sid, p, T, eta_in=one, eta_out=one, eta_dark=dark,
                       eta_tot=an.adiabatic_total_efficiency(p, T, sch.tau), max_S2=None, regime="Adiabatic")
    gk = p.gamma_k if e.gamma_k_transfer is None else e.gamma_k_transfer
    tot = an.adiabatic_pumped_efficiency(p.C, e.gamma_Omega, p.gamma_s, e.gamma_J, gk)
    one = math.sqrt(tot)
    T = 1.0 / e.gamma_Omega
    return _record(sid, p, T, eta_in=one, eta_out=one, eta_dark=dark, eta_tot=tot * dark,
                   max_S2=None, regime="Adiabatic")


def sweep_points(s: Scenario) -> list[tuple[str, MemoryParams, ScheduleSpec]]:
    """Grid points in row-major order over the declared axes."""
    base, sch = s.params, s.schedule
    points = []
    for idx, values in zip(product(*(range(a.count) for a in s.sweep)), product(*(a.values() for a in s.sweep))):
        chosen = dict(zip((a.name for a in s.sweep), values))
        p = base
        if "J_over_gs" in chosen:
            p = p.with_(J=chosen["J_over_gs"] * base.gamma_s)
        if "C" in chosen:
            p = p.with_(C=chosen["C"])
        T = chosen["gsT"] / base.gamma_s if "gsT" in chosen else sch.T
        sid = f"{s.id}:{'.'.join(map(str, idx))}"
        points.append((sid, p, ScheduleSpec.standard(p, T, sch.tau)))
    return points


def _sweep_one(args) -> ResultRecord:
    sid, p, sch, cfg = args
    t0 = time.perf_counter()
    res = optimize_storage(p, None, sch, cfg)
    r = res.report
    return replace(_record(sid, p, sch.T, eta_in=r.eta_in, eta_out=r.eta_out, eta_dark=r.eta_dark,
                           eta_tot=r.eta_tot, max_S2=r.max_S2, regime=res.regime.value),
                   wall_time=time.perf_counter() - t0)


def run(s: Scenario, out_dir: str | Path | None = None, workers: int | None = None,
        plots: bool = True) -> RunOutput:
    """Run ``s``; with ``out_dir`` write results.csv and companion files."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    files: list[Path] = []
    records: list[ResultRecord] = []
    t0 = time.perf_counter()

    if s.mode in ("simulate", "optimize"):
        traj, rep, regime, trace = (_simulate if s.mode == "simulate" else _optimize)(s)
        trace_name = f"{s.id}_trace.csv" if trace else None
        rec = _record(s.id, s.params, s.schedule.T, eta_in=rep.eta_in, eta_out=rep.eta_out,
                      eta_dark=rep.eta_dark, eta_tot=rep.eta_tot, max_S2=rep.max_S2, regime=regime)
        records.append(replace(rec, trace=trace_name, wall_time=time.perf_counter() - t0))
        if out is not None:
            E_out = output_field(s.params, traj.ctrl, traj)
            files.append(out / f"{s.id}_waveforms.csv")
            emit_waveform_csv(traj, files[-1], E_out)
            if trace:
                files.append(out / trace_name)
                emit_trace_csv(trace, files[-1])
            if plots:
                from .plotting import plot_trace, plot_waveforms

                files.append(out / f"{s.id}_waveforms.png")
                plot_waveforms(traj, files[-1], E_out, title=f"{s.id}: eta_tot={rep.eta_tot:.4f}")
                if trace:
                    files.append(out / f"{s.id}_trace.png")
                    plot_trace(trace, files[-1])

    elif s.mode == "analytic":
        records = [_analytic_record(s, e) for e in s.analytic]

    elif s.mode == "modes":
        recs = mode_records(s.cell)
        if out is not None:
            files.append(out / f"{s.id}_modes.csv")
            emit_modes_csv(recs, files[-1])
            if plots:
                from .plotting import plot_modes

                files.append(out / f"{s.id}_overlaps.png")
                plot_modes(overlap_matrix(s.cell), files[-1])
        if s.params is not None and s.params.J > 0:
            basis = build_mode_basis(s.cell, s.params.gamma_s, s.params.gamma_k)
            eta = multimode_stage2_efficiency(basis, s.params.J)
            T = s.schedule.T if s.schedule else math.nan
            records.append(_record(s.id, s.params, T, eta_in=None, eta_out=None, eta_dark=None,
                                   eta_tot=eta, max_S2=None, regime="Sequential"))

    elif s.mode == "sweep":
        points = sweep_points(s)
        jobs = [(sid, p, sch, s.optimizer) for sid, p, sch in points]
        n = workers or default_workers()
        if n <= 1 or len(jobs) == 1:
            records = [_sweep_one(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
                records = list(pool.map(_sweep_one, jobs))
        if out is not None and plots and len(s.sweep) == 2 and {a.name for a in s.sweep} == {"J_over_gs", "gsT"}:
            from .plotting import plot_regime_map

            names = [a.name for a in s.sweep]
            ny, nx = (s.sweep[0].count, s.sweep[1].count)
            labels = [[records[i * nx + j].regime for j in range(nx)] for i in range(ny)]
            if names[0] == "gsT":
                labels = [list(col) for col in zip(*labels)]
            files.append(out / f"{s.id}_regimes.png")
            plot_regime_map(s.sweep[names.index("gsT")].values(), s.sweep[names.index("J_over_gs")].values(),
                            labels, files[-1])

    if out is not None and records:
        files.insert(0, out / "results.csv")
        emit_csv(records, files[0])
    return RunOutput(records, files)
