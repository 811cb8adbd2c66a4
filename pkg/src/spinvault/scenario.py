"""JSON scenario files and the preset library.

A scenario is one JSON object with the sections ``id``, ``mode``,
``params``, ``schedule``, ``signal``, ``control``, ``optimizer``, ``cell``,
``analytic`` and ``sweep``. Unknown keys are rejected at every level.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import DomainError, ScenarioError
from .model import MemoryParams, ScheduleSpec
from .modes import CellSpec
from .optimizer import SEEDS, OptimizerConfig

__all__ = [
    "AnalyticEntry",
    "MODES",
    "PRESETS",
    "Scenario",
    "SweepAxis",
    "dump_scenario",
    "load_scenario",
    "preset",
    "scenario_from_dict",
]

MODES = ("simulate", "optimize", "analytic", "modes", "sweep")
SCHEMES = ("sequential", "adiabatic", "pumped")
CONTROL_KINDS = SEEDS + ("constant",)
AXIS_NAMES = ("J_over_gs", "gsT", "C")


@dataclass(frozen=True)
class AnalyticEntry:
    """One closed-form evaluation.

    ``sequential`` uses the signal rate ``gamma_Omega`` (T = 1/(gamma_Omega -
    gamma_s)) or else the schedule's T. ``adiabatic`` uses ``T`` or the
    schedule's T. ``pumped`` uses ``gamma_Omega`` and ``gamma_J``, with
    ``gamma_k_transfer`` as the noble-gas decay during the transfers.
    """

    scheme: str
    gamma_Omega: float | None = None
    gamma_J: float | None = None
    gamma_k_transfer: float | None = None
    T: float | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ScenarioError(f"analytic.scheme: expected one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "pumped" and (self.gamma_Omega is None or self.gamma_J is None):
            raise ScenarioError("analytic: pumped scheme needs gamma_Omega and gamma_J")


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    count: int
    scale: str = "log"

    def __post_init__(self) -> None:
        if self.name not in AXIS_NAMES:
            raise ScenarioError(f"sweep.axes.name: expected one of {AXIS_NAMES}, got {self.name!r}")
        if self.scale not in ("log", "linear"):
            raise ScenarioError("sweep.axes.scale: expected 'log' or 'linear'")
        if int(self.count) != self.count or self.count < 1:
            raise ScenarioError("sweep.axes.count: must be a positive integer")
        if self.max < self.min:
            raise ScenarioError("sweep.axes: max must be >= min")
        if self.scale == "log" and self.min <= 0:
            raise ScenarioError("sweep.axes.min: log axes need min > 0")

    def values(self) -> list[float]:
        if self.count == 1:
            return [float(self.min)]
        n = self.count - 1
        if self.scale == "log":
            lo, hi = math.log10(self.min), math.log10(self.max)
            return [10.0 ** (lo + (hi - lo) * i / n) for i in range(self.count)]
        return [self.min + (self.max - self.min) * i / n for i in range(self.count)]


@dataclass(frozen=True)
class Scenario:
    id: str
    mode: str
    params: MemoryParams | None = None
    schedule: ScheduleSpec | None = None
    signal: str = "exponential"
    control: dict[str, Any] | None = None
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    cell: CellSpec | None = None
    analytic: tuple[AnalyticEntry, ...] = ()
    sweep: tuple[SweepAxis, ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ScenarioError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.signal != "exponential":
            raise ScenarioError(f"signal.kind: only 'exponential' is supported, got {self.signal!r}")
        need_params = self.mode in ("simulate", "optimize", "analytic", "sweep")
        if need_params and (self.params is None or self.schedule is None):
            raise ScenarioError(f"mode {self.mode!r} needs params and schedule sections")
        if self.mode == "modes" and self.cell is None:
            raise ScenarioError("mode 'modes' needs a cell section")
        if self.mode == "analytic" and not self.analytic:
            raise ScenarioError("mode 'analytic' needs an analytic section")
        if self.mode == "sweep" and not self.sweep:
            raise ScenarioError("mode 'sweep' needs sweep axes")
        if len({a.name for a in self.sweep}) != len(self.sweep):
            raise ScenarioError("sweep.axes: names must be distinct")
        if self.control is not None:
            kind = self.control.get("kind")
            if kind not in CONTROL_KINDS:
                raise ScenarioError(f"control.kind: expected one of {CONTROL_KINDS}, got {kind!r}")
            if kind == "constant" and "omega_tilde" not in self.control:
                raise ScenarioError("control.omega_tilde: required for a constant control")

    def with_mode(self, mode: str) -> Scenario:
        return scenario_from_dict({**scenario_to_dict(self), "mode": mode})

    def with_max_iters(self, n: int) -> Scenario:
        data = scenario_to_dict(self)
        data["optimizer"] = {**data["optimizer"], "max_iters": n}
        return scenario_from_dict(data)


def _fields(cls: type) -> list[str]:
    return [f.name for f in fields(cls)]


def _section(data: Any, name: str, allowed: list[str], required: tuple[str, ...] = ()) -> dict[str, Any]:
    if not isinstance(data, dict):
        raise ScenarioError(f"{name}: expected an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ScenarioError(f"{name}: unknown key {unknown[0]!r}")
    for key in required:
        if key not in data:
            raise ScenarioError(f"{name}: missing required key {key!r}")
    return data


def _number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{section}.{key}: expected a number, got {value!r}")
    return float(value)


def _build(cls: type, name: str, data: dict[str, Any], numeric: tuple[str, ...]) -> Any:
    kwargs = {k: (_number(name, k, v) if k in numeric and v is not None else v) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ScenarioError(f"{name}: {exc}") from exc


def scenario_from_dict(data: Any) -> Scenario:
    top = _section(data, "scenario", _fields(Scenario), required=("id", "mode"))
    if not isinstance(top["id"], str) or not top["id"]:
        raise ScenarioError("id: expected a non-empty string")
    params = schedule = cell = None
    if top.get("params") is not None:
        p = _section(top["params"], "params", _fields(MemoryParams), ("gamma_p", "gamma_s", "gamma_k", "J", "C"))
        params = _build(MemoryParams, "params", p, tuple(p))
    if top.get("schedule") is not None:
        s = dict(_section(top["schedule"], "schedule", _fields(ScheduleSpec), ("T",)))
        if s.get("T_prime") is None:
            if params is None:
                raise ScenarioError("schedule.T_prime: required without a params section")
            tau = _number("schedule", "tau", s.get("tau", 0.0))
            try:
                schedule = ScheduleSpec.standard(params, _number("schedule", "T", s["T"]), tau)
            except DomainError as exc:
                raise ScenarioError(f"schedule: {exc}") from exc
        else:
            schedule = _build(ScheduleSpec, "schedule", s, tuple(s))
    signal = "exponential"
    if top.get("signal") is not None:
        signal = _section(top["signal"], "signal", ["kind"], ("kind",))["kind"]
    control = None
    if top.get("control") is not None:
        c = _section(top["control"], "control", ["kind", "omega_tilde"], ("kind",))
        control = {k: (_number("control", k, v) if k == "omega_tilde" else v) for k, v in c.items()}
    opt = _section(top.get("optimizer") or {}, "optimizer", _fields(OptimizerConfig))
    floats = ("lambda_omega", "momentum_alpha", "convergence_rtol", "initial_step")
    for key, value in opt.items():
        if key in floats:
            _number("optimizer", key, value)
    optimizer = _build(OptimizerConfig, "optimizer", opt, ())
    if top.get("cell") is not None:
        c = dict(_section(top["cell"], "cell", _fields(CellSpec), ("R", "D_a", "D_b")))
        for key in ("beta_s", "beta_k"):
            if c.get(key) == "inf":
                c[key] = math.inf
        cell = _build(CellSpec, "cell", c, ("R", "D_a", "D_b", "beta_s", "beta_k"))
    analytic = []
    for entry in top.get("analytic") or []:
        e = _section(entry, "analytic", _fields(AnalyticEntry), ("scheme",))
        analytic.append(_build(AnalyticEntry, "analytic", e, tuple(k for k in e if k != "scheme")))
    axes = []
    if top.get("sweep") is not None:
        sw = _section(top["sweep"], "sweep", ["axes"], ("axes",))
        for axis in sw["axes"]:
            a = _section(axis, "sweep.axes", _fields(SweepAxis), ("name", "min", "max", "count"))
            axes.append(_build(SweepAxis, "sweep.axes", a, ("min", "max")))
    return Scenario(
        id=top["id"], mode=top["mode"], params=params, schedule=schedule, signal=signal,
        control=control, optimizer=optimizer, cell=cell, analytic=tuple(analytic), sweep=tuple(axes),
    )


def _plain(obj: Any) -> dict[str, Any]:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = "inf" if isinstance(v, float) and math.isinf(v) else v
    return out


def scenario_to_dict(s: Scenario) -> dict[str, Any]:
    return {
        "id": s.id,
        "mode": s.mode,
        "params": _plain(s.params) if s.params else None,
        "schedule": _plain(s.schedule) if s.schedule else None,
        "signal": {"kind": s.signal},
        "control": dict(s.control) if s.control else None,
        "optimizer": _plain(s.optimizer),
        "cell": _plain(s.cell) if s.cell else None,
        "analytic": [{k: v for k, v in _plain(e).items() if v is not None} for e in s.analytic],
        "sweep": {"axes": [_plain(a) for a in s.sweep]} if s.sweep else None,
    }


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=False) + "\n"


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return scenario_from_dict(data)


# Table rows: rates in 1/s. gamma_p only enters the bandwidth check and the
# optical leakage; 6e10 1/s is a pressure-broadened optical width.
_ROW_GAMMA_P = 6e10
# Figure runs use the alkali decay as the unit and a fast optical dipole.
_FIG = {"gamma_p": 1e9, "gamma_s": 1.0, "gamma_k": 0.0, "J": 100.0, "C": 100.0}

_PRESETS: dict[str, dict[str, Any]] = {
    "table1-row1": {
        "id": "table1-row1", "mode": "analytic",
        "params": {"gamma_p": _ROW_GAMMA_P, "gamma_s": 17.0, "gamma_k": 1.0 / (100 * 3600), "J": 1000.0, "C": 100.0},
        "schedule": {"T": 1.0 / (1e4 - 17.0)},
        "analytic": [{"scheme": "sequential", "gamma_Omega": 1e4}, {"scheme": "adiabatic", "T": 0.01}],
    },
    "table1-row2": {
        "id": "table1-row2", "mode": "analytic",
        "params": {"gamma_p": _ROW_GAMMA_P, "gamma_s": 6800.0, "gamma_k": 0.044, "J": 580.0, "C": 100.0},
        "schedule": {"T": 1.0 / (15 * 6800.0)},
        "analytic": [{"scheme": "pumped", "gamma_Omega": 15 * 6800.0, "gamma_J": 3.2, "gamma_k_transfer": 0.0}],
    },
    "table1-row3": {
        "id": "table1-row3", "mode": "analytic",
        "params": {"gamma_p": _ROW_GAMMA_P, "gamma_s": 85.0, "gamma_k": 1.0 / 540, "J": 15.0, "C": 60.0},
        "schedule": {"T": 1.0 / (15 * 85.0)},
        "analytic": [{"scheme": "pumped", "gamma_Omega": 15 * 85.0, "gamma_J": 0.17, "gamma_k_transfer": 0.0}],
    },
    "table1-row4": {
        "id": "table1-row4", "mode": "analytic",
        "params": {"gamma_p": _ROW_GAMMA_P, "gamma_s": 50.0, "gamma_k": 1.0 / 140, "J": 29.0, "C": 100.0},
        "schedule": {"T": 1.0 / (50 * 50.0)},
        "analytic": [{"scheme": "pumped", "gamma_Omega": 50 * 50.0, "gamma_J": 0.35, "gamma_k_transfer": 0.0}],
    },
    "fig4": {
        "id": "fig4", "mode": "optimize", "params": dict(_FIG), "schedule": {"T": 1e-3},
        "optimizer": {"max_iters": 500},
    },
    "fig6": {
        "id": "fig6", "mode": "optimize", "params": dict(_FIG), "schedule": {"T": 17.8},
    },
    "regime-map": {
        "id": "regime-map", "mode": "sweep", "params": dict(_FIG), "schedule": {"T": 1.0},
        "optimizer": {"seed": "auto", "max_iters": 20, "steps_per_T": 100, "max_steps": 4000},
        "sweep": {"axes": [
            {"name": "J_over_gs", "min": 1.0, "max": 100.0, "count": 8, "scale": "log"},
            {"name": "gsT", "min": 1e-3, "max": 1e2, "count": 8, "scale": "log"},
        ]},
    },
    "sphere-modes": {
        "id": "sphere-modes", "mode": "modes",
        "cell": {"R": 1.0, "D_a": 1.0, "D_b": 1.0, "n_modes": 7},
    },
}

PRESETS = tuple(_PRESETS)


def preset(name: str) -> Scenario:
    if name not in _PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return scenario_from_dict(copy.deepcopy(_PRESETS[name]))
