#!/usr/bin/env python3
"""
VTM-SIM Session Logger

Structured logging for runs, lock events, and transitions.
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Optional, Dict, Any
from dataclasses import dataclass, asdict

from rich.console import Console


@dataclass
class SimLog:
    timestamp: str
    action: str  # RUN_START, PHASE_START, LOCK_CAPTURED, REGULARITY, TRANSITION, RUN_COMPLETE, COMPARE, ERROR
    scenario: Optional[str] = None
    details: Optional[Dict[str, Any]] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["details"] is None:
            del d["details"]
        if d["scenario"] is None:
            del d["scenario"]
        return d


class SimLogger:
    """Logs simulation activity for later inspection."""

    def __init__(self, log_dir: str = "logs", quiet: bool = False, console: Optional[Console] = None):
        self.log_dir = Path(log_dir)
        self.quiet = quiet
        self.console = console or Console(stderr=True)
        self.session_id = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.logs: list = []

    def _log(self, action: str, scenario: Optional[str] = None, **details):
        entry = SimLog(
            timestamp=datetime.now().isoformat(),
            action=action,
            scenario=scenario,
            details=details if details else None
        )
        self.logs.append(entry)

        if self.quiet:
            return
        msg = f"[dim]{entry.timestamp}[/dim] [bold]{action}[/bold]"
        if scenario:
            msg += f" | {scenario}"
        if details:
            msg += f" | {json.dumps(details, default=str)}"
        self.console.print(msg, highlight=False)

    def run_start(self, scenario: str, n: int, events: int, formulation: str, method: str, dt: float, t_end: float):
        self._log("RUN_START", scenario,
                  n=n,
                  events=events,
                  formulation=formulation,
                  method=method,
                  dt=dt,
                  t_end=t_end)

    def phase_start(self, scenario: str, t: float, locked: list):
        self._log("PHASE_START", scenario, t=t, locked=[j + 1 for j in locked])

    def lock_captured(self, scenario: str, t: float, joint: int, value: float):
        self._log("LOCK_CAPTURED", scenario, t=t, joint=joint, lock_value=value)

    def regularity(self, scenario: str, t: float, report: dict):
        self._log("REGULARITY", scenario, t=t, **report)

    def transition(self, scenario: str, t: float, method: str, kinetic_drop: float,
                   impulse_norm: float, momentum_residual: float):
        self._log("TRANSITION", scenario,
                  t=t,
                  method=method,
                  kinetic_drop=kinetic_drop,
                  impulse_norm=impulse_norm,
                  momentum_residual=momentum_residual)

    def run_complete(self, scenario: str, rows: int, events: int, wall_time: float):
        self._log("RUN_COMPLETE", scenario, rows=rows, events=events, wall_time=round(wall_time, 4))

    def compare(self, scenario: str, methods: list, max_deviation: float, passed: bool):
        self._log("COMPARE", scenario, methods=methods, max_deviation=max_deviation, passed=passed)

    def error(self, message: str, scenario: Optional[str] = None, **details):
        self._log("ERROR", scenario, error=message, **details)

    def save(self) -> Path:
        """Save logs to file."""
        self.log_dir.mkdir(parents=True, exist_ok=True)
        path = self.log_dir / f"session_{self.session_id}.json"
        with open(path, "w") as f:
            json.dump([entry.to_dict() for entry in self.logs], f, indent=2, default=str)
        return path

    def get_summary(self) -> dict:
        """Get session summary."""
        runs = [entry for entry in self.logs if entry.action == "RUN_COMPLETE"]
        captured = [entry for entry in self.logs if entry.action == "LOCK_CAPTURED"]
        transitions = [entry for entry in self.logs if entry.action == "TRANSITION"]
        errors = [entry for entry in self.logs if entry.action == "ERROR"]

        return {
            "session_id": self.session_id,
            "total_logs": len(self.logs),
            "runs_completed": len(runs),
            "events": len(captured),
            "transitions": len(transitions),
            "errors": len(errors),
            "scenarios": sorted(set(entry.scenario for entry in runs if entry.scenario))
        }


if __name__ == "__main__":
    logger = SimLogger()

    logger.run_start("3r_locking", n=3, events=2, formulation="voronets_minimal", method="minimal",
                     dt=1e-4, t_end=2.0)
    logger.lock_captured("3r_locking", 0.8, 2, 0.41)
    logger.transition("3r_locking", 0.8, "minimal", 12.5, 40.1, 1e-14)
    logger.run_complete("3r_locking", rows=2003, events=2, wall_time=4.2)

    path = logger.save()
    print(f"\nLogs saved to: {path}")
    print(f"Summary: {logger.get_summary()}")
