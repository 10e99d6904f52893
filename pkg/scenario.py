#!/usr/bin/env python3
"""
VTM-SIM: Scenario Files
JSON scenario parsing and validation

Scenario format (field names as stored on disk):

    {
      "name": "3r_locking",
      "model": {"gravity": 9.81, "links": [{"length", "mass", "com_offset", "inertia_com"}, ...]},
      "initial": {"q": [...], "qd": [...]},
      "t_end": 2.0,
      "dt": 1e-4,
      "events": [{"time_s": 0.8, "joint": 2}, ...],
      "formulation": "voronets_minimal",
      "transition": "minimal",
      "impulses": [[...], null, ...],
      "sample_stride": 10
    }

Joints are 1-based. Only locking events are supported.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from chain_model import ChainModel, ForceLaw, State, chain_from_dict
from config import IntegratorConfig
from constraint_schedule import ConstraintSchedule, LockEvent, ScheduleError
from simulate import GRID_TOLERANCE, Formulation, event_steps
from transition import TransitionMethod

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"
DEFAULT_STRIDE = IntegratorConfig.sample_stride


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario file."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class EventSpec:
    time_s: float
    joint: int  # 1-based


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    model: ChainModel
    q0: np.ndarray
    qd0: np.ndarray
    t_end: float
    dt: float
    events: Tuple[EventSpec, ...] = ()
    formulation: Formulation = Formulation.VORONETS_MINIMAL
    transition: TransitionMethod = TransitionMethod.MINIMAL
    impulses: Optional[Tuple[Optional[np.ndarray], ...]] = None
    sample_stride: int = DEFAULT_STRIDE
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self, grid_tolerance: float = GRID_TOLERANCE):
        n = self.model.n
        if np.shape(self.q0) != (n,):
            raise ScenarioError(f"initial q has {np.size(self.q0)} entries, chain has {n} joints", "initial.q")
        if np.shape(self.qd0) != (n,):
            raise ScenarioError(f"initial qd has {np.size(self.qd0)} entries, chain has {n} joints", "initial.qd")
        if not (np.all(np.isfinite(self.q0)) and np.all(np.isfinite(self.qd0))):
            raise ScenarioError("initial state must be finite", "initial")
        if self.dt <= 0:
            raise ScenarioError(f"dt must be positive, got {self.dt}", "dt")
        if self.t_end <= 0:
            raise ScenarioError(f"t_end must be positive, got {self.t_end}", "t_end")
        n_steps = int(round(self.t_end / self.dt))
        if abs(n_steps * self.dt - self.t_end) > grid_tolerance:
            raise ScenarioError(
                f"t_end {self.t_end} is not on the integration grid (dt={self.dt}, nearest node {n_steps * self.dt})",
                "t_end",
            )
        if self.sample_stride < 1:
            raise ScenarioError(f"sample_stride must be >= 1, got {self.sample_stride}", "sample_stride")
        if self.events and self.t_end < self.events[-1].time_s:
            raise ScenarioError(
                f"t_end {self.t_end} precedes last event at {self.events[-1].time_s}", "t_end"
            )
        if self.impulses is not None:
            if len(self.impulses) != len(self.events):
                raise ScenarioError(
                    f"{len(self.impulses)} impulse vectors for {len(self.events)} events", "impulses"
                )
            for U in self.impulses:
                if U is not None and np.shape(U) != (n,):
                    raise ScenarioError(f"impulse vector must have {n} entries", "impulses")
        try:
            sched = self.to_schedule()
            event_steps(sched, 0.0, self.dt, n_steps, grid_tolerance)
        except ScheduleError as e:
            raise ScenarioError(str(e), "events") from e

    @property
    def n(self) -> int:
        return self.model.n

    def to_schedule(self) -> ConstraintSchedule:
        return ConstraintSchedule(
            events=tuple(LockEvent(time=e.time_s, joint_index=e.joint) for e in self.events),
            n=self.model.n,
        )

    def initial_state(self) -> State:
        return State(t=0.0, q=self.q0.copy(), qd=self.qd0.copy())

    def force_law(self) -> ForceLaw:
        """Passive chain: u = Q = 0 between events"""
        return ForceLaw()

    def with_overrides(self, transition: Optional[str] = None, formulation: Optional[str] = None,
                       dt: Optional[float] = None, sample_stride: Optional[int] = None) -> "Scenario":
        changes = {}
        if transition is not None:
            changes["transition"] = TransitionMethod(transition)
        if formulation is not None:
            changes["formulation"] = Formulation.parse(formulation)
        if dt is not None:
            changes["dt"] = float(dt)
        if sample_stride is not None:
            changes["sample_stride"] = int(sample_stride)
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": {
                "gravity": self.model.gravity,
                "links": [
                    {
                        "length": link.length,
                        "mass": link.mass,
                        "com_offset": link.com_offset,
                        "inertia_com": link.inertia_com,
                    }
                    for link in self.model.links
                ],
            },
            "initial": {"q": self.q0.tolist(), "qd": self.qd0.tolist()},
            "t_end": self.t_end,
            "dt": self.dt,
            "events": [{"time_s": e.time_s, "joint": e.joint} for e in self.events],
            "formulation": self.formulation.value,
            "transition": self.transition.value,
            "impulses": None if self.impulses is None else [
                None if U is None else U.tolist() for U in self.impulses
            ],
            "sample_stride": self.sample_stride,
        }


def _require(data: dict, key: str, prefix: str = ""):
    if key not in data:
        raise ScenarioError("missing required field", f"{prefix}{key}")
    return data[key]


def _vector(value, name: str) -> np.ndarray:
    try:
        return np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"not a numeric vector: {e}", name) from e


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"must be a number, got {value!r}", name)
    if not np.isfinite(value):
        raise ScenarioError(f"must be finite, got {value!r}", name)
    return float(value)


def _integer(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"must be an integer, got {value!r}", name)
    return value


def _events(raw: Sequence) -> Tuple[EventSpec, ...]:
    if not isinstance(raw, list):
        raise ScenarioError("events must be a list", "events")
    events = []
    for i, item in enumerate(raw):
        prefix = f"events[{i}]."
        if not isinstance(item, dict):
            raise ScenarioError("event must be an object", f"events[{i}]")
        action = item.get("action", "lock")
        if action != "lock":
            raise ScenarioError(f"unsupported event action '{action}' (only locking)", f"{prefix}action")
        time_s = _require(item, "time_s", prefix)
        joint = _integer(_require(item, "joint", prefix), f"{prefix}joint")
        events.append(EventSpec(time_s=_number(time_s, f"{prefix}time_s"), joint=joint))
    return tuple(events)


def scenario_from_dict(data: dict, name: Optional[str] = None, source: Optional[str] = None,
                       defaults: Optional[IntegratorConfig] = None) -> Scenario:
    """Build a validated Scenario; dt and sample_stride fall back to the integrator defaults"""
    defaults = defaults or IntegratorConfig()
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    model_data = _require(data, "model")
    try:
        _require(model_data, "links", "model.")
        model = chain_from_dict(model_data)
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"invalid chain description: {e}", "model") from e

    initial = _require(data, "initial")
    q0 = _vector(_require(initial, "q", "initial."), "initial.q")
    qd0 = _vector(initial.get("qd", np.zeros(len(q0))), "initial.qd")

    impulses = data.get("impulses")
    if impulses is not None:
        if not isinstance(impulses, list):
            raise ScenarioError("impulses must be a list", "impulses")
        impulses = tuple(None if U is None else _vector(U, "impulses") for U in impulses)

    try:
        formulation = Formulation.parse(data.get("formulation", Formulation.VORONETS_MINIMAL.value))
    except ValueError as e:
        raise ScenarioError(f"unknown formulation: {e}", "formulation") from e
    try:
        transition = TransitionMethod(data.get("transition", TransitionMethod.MINIMAL.value))
    except ValueError as e:
        raise ScenarioError(f"unknown transition method: {e}", "transition") from e

    return Scenario(
        name=data.get("name") or name or "scenario",
        model=model,
        q0=q0,
        qd0=qd0,
        t_end=_number(_require(data, "t_end"), "t_end"),
        dt=_number(data.get("dt", defaults.dt), "dt"),
        events=_events(data.get("events", [])),
        formulation=formulation,
        transition=transition,
        impulses=impulses,
        sample_stride=_integer(data.get("sample_stride", defaults.sample_stride), "sample_stride"),
        source=source,
    )


def parse_scenario(path, defaults: Optional[IntegratorConfig] = None) -> Scenario:
    """Load and validate a scenario JSON file"""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"JSON parse error: {e.msg}", "json", e.lineno) from e
    return scenario_from_dict(data, name=path.stem, source=str(path), defaults=defaults)


def builtin_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def resolve_scenario_path(name_or_path: str) -> Path:
    """A file path, or the name of a bundled scenario"""
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = SCENARIO_DIR / f"{path.stem}.json"
    if bundled.exists():
        return bundled
    raise ScenarioError(f"no scenario file or bundled scenario named '{name_or_path}'")


def load_scenario(name_or_path: str, defaults: Optional[IntegratorConfig] = None) -> Scenario:
    return parse_scenario(resolve_scenario_path(name_or_path), defaults)


if __name__ == "__main__":
    for name in builtin_scenarios():
        sc = load_scenario(name)
        print(f"{sc.name}: n={sc.n}, events={[(e.time_s, e.joint) for e in sc.events]}, "
              f"t_end={sc.t_end}, dt={sc.dt}")
