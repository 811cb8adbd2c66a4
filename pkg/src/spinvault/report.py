"""Result records and their CSV serialization.

Floats are written with ``repr``, the shortest decimal that round-trips, so
repeated runs of a deterministic scenario give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .model import StateTrajectory
from .modes import ModeRecord
from .optimizer import TraceRecord

__all__ = [
    "CSV_COLUMNS",
    "ResultRecord",
    "emit_csv",
    "emit_modes_csv",
    "emit_trace_csv",
    "emit_waveform_csv",
]

CSV_COLUMNS = (
    "scenario_id", "J_over_gs", "gsT", "C", "eta_in", "eta_out", "eta_dark", "eta_tot", "max_S2", "regime",
)
ETA_SLACK = 1e-6


@dataclass(frozen=True)
class ResultRecord:
    """One row of a results table. Missing quantities are ``None``.

    ``trace`` names the companion iteration-trace file; ``wall_time`` is kept
    out of the CSV so the file stays reproducible.
    """

    scenario_id: str
    J_over_gs: float
    gsT: float
    C: float
    eta_in: float | None
    eta_out: float | None
    eta_dark: float | None
    eta_tot: float | None
    max_S2: float | None
    regime: str
    trace: str | None = None
    wall_time: float | None = None

    def __post_init__(self) -> None:
        for name in ("eta_in", "eta_out", "eta_dark", "eta_tot"):
            v = getattr(self, name)
            if v is None:
                continue
            v = float(v)
            object.__setattr__(self, name, v)
            if not (-ETA_SLACK <= v <= 1.0 + ETA_SLACK):
                raise DomainError(f"{name} = {v!r} outside [0, 1]")
        if self.max_S2 is not None:
            object.__setattr__(self, "max_S2", float(self.max_S2))


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return repr(v) if math.isfinite(v) else str(v)
    return str(value)


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    try:
        path.write_text(buf.getvalue(), encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(records: Sequence[ResultRecord], path: str | Path) -> None:
    """Results table with the fixed column order; refuses an empty table."""
    if not records:
        raise DomainError("no records to write")
    _write(Path(path), CSV_COLUMNS, ([getattr(r, c) for c in CSV_COLUMNS] for r in records))


def emit_waveform_csv(traj: StateTrajectory, path: str | Path, E_out: np.ndarray | None = None) -> None:
    """Controls and populations against time."""
    ctrl = traj.ctrl
    E_out = traj.E_out if E_out is None else E_out
    cols = (
        traj.times, ctrl.omega_tilde, ctrl.delta_s, ctrl.delta_k,
        np.abs(traj.S) ** 2, np.abs(traj.K) ** 2, np.abs(traj.E_in) ** 2, np.abs(E_out) ** 2,
    )
    header = ("t", "omega_tilde", "delta_s", "delta_k", "S2", "K2", "E_in2", "E_out2")
    _write(Path(path), header, zip(*(np.asarray(c, dtype=float).tolist() for c in cols)))


def emit_trace_csv(trace: Sequence[TraceRecord], path: str | Path) -> None:
    header = ("iteration", "stage", "seed", "phi", "eta_in", "regime")
    _write(Path(path), header, ((r.iteration, r.stage, r.seed, r.phi, r.eta_in, r.regime) for r in trace))


def emit_modes_csv(records: Sequence[ModeRecord], path: str | Path) -> None:
    """Normalized eigenvalues, b and the overlap row of each alkali mode."""
    n = len(records[0].overlaps) if records else 0
    header = ("index", "alkali_normalized", "noble_normalized", "b", *(f"c_{j}" for j in range(n)))
    _write(Path(path), header, ((r.index, r.alkali_normalized, r.noble_normalized, r.b, *r.overlaps) for r in records))
