#!/usr/bin/env python3
"""
VTM-SIM: Run Metrics & Reports
Event, phase and comparison statistics for simulated trajectories
"""

from datetime import datetime, timezone
from dataclasses import dataclass, field, asdict
from itertools import combinations
from typing import Dict, List, Optional
from pathlib import Path

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from config import ToleranceConfig
from simulate import Trajectory, TrajectoryRow
from transition import TransitionMethod
from utils import safe_json_save


@dataclass
class EventStats:
    """Per-event record"""
    time: float
    joint: int
    kinetic_drop: float
    impulse: List[float]
    impulse_norm: float
    momentum_jump: float
    momentum_residual: float
    energy_before: float
    energy_after: float
    system_size: int = 0

    @property
    def energy_jump(self) -> float:
        return self.energy_after - self.energy_before


@dataclass
class PhaseStats:
    """Smooth phase between two events"""
    index: int
    t_start: float
    t_end: float
    locked: List[int]  # 1-based
    samples: int
    energy_drift: float  # (max E - min E) / max(|E_kin| + |E_pot|)
    max_constraint_drift: float = 0.0
    max_lock_deviation: float = 0.0


@dataclass
class RunSummary:
    """Aggregated results of one run"""
    name: str
    method: str
    formulation: str
    rows: int
    events: List[EventStats] = field(default_factory=list)
    phases: List[PhaseStats] = field(default_factory=list)
    max_constraint_drift: float = 0.0
    max_lock_deviation: float = 0.0
    wall_time: float = 0.0

    @property
    def consistent(self) -> bool:
        return TransitionMethod(self.method).consistent

    @property
    def max_momentum_jump(self) -> float:
        return max((e.momentum_jump for e in self.events), default=0.0)

    @property
    def max_energy_drift(self) -> float:
        return max((p.energy_drift for p in self.phases), default=0.0)

    def checks(self, tolerances: Optional[ToleranceConfig] = None) -> Dict[str, bool]:
        """Momentum continuity, energy drop, phase drift, frozen locks"""
        tol = tolerances or ToleranceConfig()
        scale = max((abs(e.energy_before) for e in self.events), default=1.0)
        return {
            "momentum_continuous": self.max_momentum_jump <= tol.momentum_jump,
            "energy_non_increasing": all(
                e.kinetic_drop >= 0.0 and e.energy_jump <= 1e-12 * max(1.0, scale)
                for e in self.events
            ),
            "phase_energy_drift": self.max_energy_drift <= tol.energy_drift,
            "locks_frozen": self.max_lock_deviation == 0.0,
        }

    def passed(self, tolerances: Optional[ToleranceConfig] = None) -> bool:
        return all(self.checks(tolerances).values())

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "method": self.method,
            "formulation": self.formulation,
            "rows": self.rows,
            "events": [asdict(e) for e in self.events],
            "phases": [asdict(p) for p in self.phases],
            "max_constraint_drift": self.max_constraint_drift,
            "max_lock_deviation": self.max_lock_deviation,
            "wall_time": self.wall_time,
            "checks": self.checks(),
        }

    def save(self, path) -> Path:
        data = {"generated": datetime.now(timezone.utc).isoformat(), "summary": self.to_dict()}
        return safe_json_save(path, data)


def _phase_rows(traj: Trajectory) -> List[List[TrajectoryRow]]:
    """Rows of each smooth phase; pre-event rows close a phase, post-event rows open the next"""
    phases: List[List[TrajectoryRow]] = [[]]
    pending_post = False
    for row in traj.rows:
        if row.event and not pending_post:
            phases[-1].append(row)
            phases.append([])
            pending_post = True
        else:
            phases[-1].append(row)
            pending_post = False
    return phases


def _energy_drift(rows: List[TrajectoryRow]) -> float:
    if len(rows) < 2:
        return 0.0
    total = np.array([r.total for r in rows])
    scale = max(max(abs(r.kinetic) + abs(r.potential) for r in rows), np.finfo(float).tiny)
    return float((total.max() - total.min()) / scale)


def summarize(traj: Trajectory) -> RunSummary:
    """Collect per-event and per-phase statistics of a trajectory"""
    events = [
        EventStats(
            time=rec.time,
            joint=rec.joint,
            kinetic_drop=rec.kinetic_drop,
            impulse=rec.impulse.tolist(),
            impulse_norm=float(np.linalg.norm(rec.impulse)),
            momentum_jump=rec.momentum_jump,
            momentum_residual=rec.momentum_residual,
            energy_before=rec.energy_before,
            energy_after=rec.energy_after,
            system_size=rec.system_size,
        )
        for rec in traj.events
    ]
    lock_values = {rec.joint - 1: rec.lock_value for rec in traj.events}

    phases = []
    for i, rows in enumerate(_phase_rows(traj)):
        if not rows:
            continue
        locked = [rec.joint for rec in traj.events[:i]]
        deviation = 0.0
        for j in (joint - 1 for joint in locked):
            deviation = max(deviation, max((abs(r.q[j] - lock_values[j]) for r in rows), default=0.0))
        phases.append(PhaseStats(
            index=i,
            t_start=rows[0].t,
            t_end=rows[-1].t,
            locked=locked,
            samples=len(rows),
            energy_drift=_energy_drift(rows),
            max_constraint_drift=max((r.drift for r in rows), default=0.0),
            max_lock_deviation=deviation,
        ))

    return RunSummary(
        name=traj.name,
        method=traj.method,
        formulation=traj.formulation,
        rows=len(traj.rows),
        events=events,
        phases=phases,
        max_constraint_drift=max((p.max_constraint_drift for p in phases), default=0.0),
        max_lock_deviation=max((p.max_lock_deviation for p in phases), default=0.0),
        wall_time=traj.wall_time,
    )


def max_deviation(a: Trajectory, b: Trajectory) -> float:
    """Max-norm difference of (q, qd) between two runs sampled on the same grid"""
    if len(a) != len(b) or a.n != b.n:
        raise ValueError(f"Trajectories differ in shape: {len(a)}x{a.n} vs {len(b)}x{b.n}")
    if len(a) == 0:
        return 0.0
    if not np.array_equal(a.times, b.times):
        raise ValueError("Trajectories are sampled at different times")
    return float(max(np.max(np.abs(a.q - b.q)), np.max(np.abs(a.qd - b.qd))))


@dataclass
class CompareReport:
    scenario: str
    methods: List[str]
    deviations: Dict[str, float]  # "a|b" -> max-norm deviation
    gate: float
    system_sizes: Dict[str, List[int]] = field(default_factory=dict)

    @staticmethod
    def key(a: str, b: str) -> str:
        return f"{a}|{b}"

    def deviation(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        return self.deviations.get(self.key(a, b), self.deviations.get(self.key(b, a), np.nan))

    @property
    def consistent_max(self) -> float:
        """Largest deviation among pairs of consistent methods (naive is exempt)"""
        consistent = [m for m in self.methods if TransitionMethod(m).consistent]
        return max((self.deviation(a, b) for a, b in combinations(consistent, 2)), default=0.0)

    @property
    def passed(self) -> bool:
        return self.consistent_max <= self.gate

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "methods": self.methods,
            "deviations": self.deviations,
            "system_sizes": self.system_sizes,
            "gate": self.gate,
            "consistent_max": self.consistent_max,
            "passed": self.passed,
        }


def compare_runs(trajectories: Dict[str, Trajectory], gate: float = 1e-7, scenario: str = "scenario") -> CompareReport:
    methods = list(trajectories)
    deviations = {
        CompareReport.key(a, b): max_deviation(trajectories[a], trajectories[b])
        for a, b in combinations(methods, 2)
    }
    sizes = {m: [rec.system_size for rec in t.events] for m, t in trajectories.items()}
    return CompareReport(scenario=scenario, methods=methods, deviations=deviations, gate=gate, system_sizes=sizes)


def render_summary(summary: RunSummary, console: Optional[Console] = None,
                   tolerances: Optional[ToleranceConfig] = None):
    console = console or Console()
    table = Table(title=f"{summary.name}: {summary.method} / {summary.formulation}")
    table.add_column("t [s]", justify="right")
    table.add_column("joint", justify="right")
    table.add_column("kinetic drop [J]", justify="right")
    table.add_column("|impulse| [N m s]", justify="right")
    table.add_column("momentum jump", justify="right")
    table.add_column("size", justify="right")
    tol = tolerances or ToleranceConfig()
    for e in summary.events:
        flag = "" if e.momentum_jump <= tol.momentum_jump else " [red]![/red]"
        table.add_row(
            f"{e.time:.4f}", str(e.joint), f"{e.kinetic_drop:.6g}", f"{e.impulse_norm:.6g}",
            f"{e.momentum_jump:.3e}{flag}", str(e.system_size),
        )
    if summary.events:
        console.print(table)
    else:
        console.print(f"[bold]{summary.name}[/bold]: no events")

    lines = [
        f"phase {p.index} [{p.t_start:.4f}, {p.t_end:.4f}] locked {p.locked or '-'}: "
        f"energy drift {p.energy_drift:.3e}"
        for p in summary.phases
    ]
    lines.append(f"max constraint drift: {summary.max_constraint_drift:.3e}")
    lines.append(f"max lock deviation:   {summary.max_lock_deviation:.3e}")
    lines.append(f"rows: {summary.rows}   wall time: {summary.wall_time:.2f} s")
    checks = summary.checks(tol)
    lines.append("checks: " + ", ".join(
        f"{name} {'[green]ok[/green]' if ok else '[red]FAIL[/red]'}" for name, ok in checks.items()
    ))
    console.print(Panel("\n".join(lines), title="Run summary"))


def render_compare(report: CompareReport, console: Optional[Console] = None):
    console = console or Console()
    table = Table(title=f"{report.scenario}: max |dq|, |dqd| between methods")
    table.add_column("")
    for m in report.methods:
        table.add_column(m, justify="right")
    for a in report.methods:
        table.add_row(a, *[f"{report.deviation(a, b):.3e}" for b in report.methods])
    console.print(table)
    if report.system_sizes:
        sizes = ", ".join(f"{m}: {s}" for m, s in report.system_sizes.items())
        console.print(f"system sizes per event: {sizes}")
    verdict = "[green]PASS[/green]" if report.passed else "[red]FAIL[/red]"
    console.print(f"consistent max {report.consistent_max:.3e} (gate {report.gate:.0e}) {verdict}")


if __name__ == "__main__":
    from chain_model import ForceLaw, State, three_bar_pendulum
    from constraint_schedule import ConstraintSchedule, LockEvent
    from simulate import run_scenario

    model = three_bar_pendulum()
    sched = ConstraintSchedule(events=(LockEvent(0.8, 2), LockEvent(1.3, 3)), n=3)
    s0 = State(0.0, np.full(3, np.pi / 6), np.zeros(3))
    traj = run_scenario(model, ForceLaw(), sched, s0, 2.0, 1e-4, sample_stride=100)
    render_summary(summarize(traj))
