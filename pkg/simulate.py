#!/usr/bin/env python3
"""
VTM-SIM: Simulation Loop
Fixed-step RK4 integration with scheduled joint-locking events

Between events the locked coordinates are frozen at their captured values
and removed from the integrated state; the chosen formulation still
evaluates the full-state dynamics. At an event the step that lands on the
event time is completed first, then the lock is captured and the velocity
jump is solved at q(t_i).
"""

import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import lu_factor, lu_solve

from chain_model import (
    ChainModel,
    ForceLaw,
    State,
    dynamics_terms,
    energies,
    mass_matrix,
)
from constraint_schedule import (
    ConstraintSchedule,
    PhaseConstraints,
    ScheduleError,
    capture_lock,
    split_at_event,
    validate_regularity,
)
from logger import SimLogger
from projection_kernels import (
    RANK_SCALE,
    Partition,
    choose_partition,
    nullspace_projector,
    orthogonal_complement,
    reduced_system,
    solve_saddle,
    weighted_pseudoinverse,
)
from transition import TransitionInput, TransitionMethod, momentum_residual, solve_transition

GRID_TOLERANCE = 1e-12

Deriv = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class NumericalError(RuntimeError):
    """Non-finite state or derivative during integration."""


class Formulation(Enum):
    INDEX1_DAE = "index1_dae"
    PROJECTED_ODE = "projected_ode"
    VORONETS_MINIMAL = "voronets_minimal"

    @classmethod
    def parse(cls, tag: str) -> "Formulation":
        aliases = {
            "index1": cls.INDEX1_DAE,
            "projected": cls.PROJECTED_ODE,
            "voronets": cls.VORONETS_MINIMAL,
        }
        if isinstance(tag, cls):
            return tag
        if tag in aliases:
            return aliases[tag]
        return cls(tag)


def _force_terms(model: ChainModel, forces: ForceLaw, s: State) -> Tuple[np.ndarray, np.ndarray]:
    """M(q) and u - C qd - P - Q"""
    M, Cqd, P = dynamics_terms(model, s.q, s.qd)
    rhs = -Cqd - P
    if not forces.passive:
        rhs = rhs + forces.u(model, s) - forces.Q(model, s)
    return M, rhs


def _solve_spd(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-stage solve with a small SPD matrix; numpy's LAPACK call has the least overhead"""
    return np.linalg.solve(A, b)


def accel_index1(model: ChainModel, forces: ForceLaw, phase: PhaseConstraints,
                 s: State) -> Tuple[np.ndarray, np.ndarray]:
    """[[M, J^T], [J, 0]] [qdd; lambda] = [u - C qd - P - Q; -Jdot qd]"""
    M, rhs = _force_terms(model, forces, s)
    J = phase.jacobian(s.q)
    qdd, lam, _ = solve_saddle(M, J, rhs, -phase.jacobian_dot_qd(s.q, s.qd), with_residual=False)
    return qdd, lam


def accel_projected(model: ChainModel, forces: ForceLaw, phase: PhaseConstraints, s: State,
                    check_rank: bool = True) -> np.ndarray:
    """qdd = M^-1 N^T (u - C qd - P - Q) - J_M^+ Jdot qd

    Evaluated as a - J_M^+ (J a + Jdot qd) with a = M^-1 (u - C qd - P - Q).
    """
    M, rhs = _force_terms(model, forces, s)
    a = _solve_spd(M, rhs)
    if phase.m == 0:
        return a
    J = phase.jacobian(s.q)
    J_pinv = weighted_pseudoinverse(J, M, check_rank=check_rank)
    return a - J_pinv @ (J @ a + phase.jacobian_dot_qd(s.q, s.qd))


def projected_residual(model: ChainModel, forces: ForceLaw, phase: PhaseConstraints,
                       s: State, qdd: np.ndarray) -> float:
    """max |N^T (M qdd + C qd + P + Q - u)|"""
    M, rhs = _force_terms(model, forces, s)
    N = nullspace_projector(phase.jacobian(s.q), M)
    return float(np.max(np.abs(N.T @ (M @ qdd - rhs))))


def _fdot_sdot(phase: PhaseConstraints, part: Partition, s: State) -> np.ndarray:
    """Fdot sdot; independent rows vanish, dependent rows solve J_p x = -Jdot qd"""
    term = np.zeros(phase.n)
    if phase.m == 0 or phase.constant_jacobian:
        return term
    J = phase.jacobian(s.q)
    J_p = J[:, list(part.dependent)]
    term[list(part.dependent)] = -lu_solve(lu_factor(J_p), phase.jacobian_dot_qd(s.q, s.qd))
    return term


def accel_voronets(model: ChainModel, forces: ForceLaw, phase: PhaseConstraints,
                   part: Partition, s: State, F: Optional[np.ndarray] = None) -> np.ndarray:
    """Reduced accelerations sdd from M_bar sdd = u_bar - C_bar sdot - P_bar - Q_bar

    F may be passed in when the phase Jacobian is constant.
    """
    M, rhs = _force_terms(model, forces, s)
    if phase.m == 0:
        return _solve_spd(M, rhs)
    if F is None:
        F = orthogonal_complement(phase.jacobian(s.q), part)
    zeros = np.zeros(model.n)
    # rhs already folds u - C qd - P - Q together
    M_bar, rhs_bar = reduced_system(F, M, zeros, zeros, zeros, rhs, _fdot_sdot(phase, part, s))
    return _solve_spd(M_bar, rhs_bar)


def lift_voronets(model: ChainModel, phase: PhaseConstraints, part: Partition,
                  s: State, sdd: np.ndarray, F: Optional[np.ndarray] = None) -> np.ndarray:
    """qdd = F sdd + Fdot sdot"""
    if phase.m == 0:
        return np.asarray(sdd, dtype=float)
    if F is None:
        F = orthogonal_complement(phase.jacobian(s.q), part)
    return F @ sdd + _fdot_sdot(phase, part, s)


def rk4_step(deriv: Deriv, s: State, dt: float, t_next: Optional[float] = None) -> State:
    """Classical RK4 on (q, qd) with qdd = deriv(t, q, qd)

    t_next overrides s.t + dt so callers can place nodes at t0 + k dt.
    """
    if dt <= 0:
        raise ValueError(f"Step size must be positive, got {dt}")

    def evaluate(t, q, qd):
        qdd = np.asarray(deriv(t, q, qd), dtype=float)
        if not np.all(np.isfinite(qdd)):
            raise NumericalError(f"Non-finite acceleration at t={t}")
        return qdd

    q, qd, t = s.q, s.qd, s.t
    half = 0.5 * dt
    k1_q, k1_v = qd, evaluate(t, q, qd)
    k2_q, k2_v = qd + half * k1_v, evaluate(t + half, q + half * k1_q, qd + half * k1_v)
    k3_q, k3_v = qd + half * k2_v, evaluate(t + half, q + half * k2_q, qd + half * k2_v)
    k4_q, k4_v = qd + dt * k3_v, evaluate(t + dt, q + dt * k3_q, qd + dt * k3_v)

    q_new = q + dt / 6.0 * (k1_q + 2.0 * k2_q + 2.0 * k3_q + k4_q)
    qd_new = qd + dt / 6.0 * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qd_new))):
        raise NumericalError(f"Non-finite state after step from t={t}")
    return State(t=t + dt if t_next is None else t_next, q=q_new, qd=qd_new)


@dataclass(frozen=True, eq=False)
class TrajectoryRow:
    t: float
    q: np.ndarray
    qd: np.ndarray
    momentum: np.ndarray  # F^T M qd, one entry per independent coordinate
    independent: Tuple[int, ...]
    kinetic: float
    potential: float
    total: float
    drift: float
    event: bool = False

    def momentum_full(self) -> np.ndarray:
        """Momentum spread over n joints, NaN where the joint is dependent (locked)"""
        out = np.full(len(self.q), np.nan)
        out[list(self.independent)] = self.momentum
        return out


@dataclass(frozen=True, eq=False)
class EventRecord:
    time: float
    joint: int  # 1-based
    lock_value: float
    method: str
    qd_minus: np.ndarray
    qd_plus: np.ndarray
    impulse: np.ndarray
    kinetic_drop: float
    energy_before: float
    energy_after: float
    momentum_jump: float  # max |p+ - p- - F^T U|
    momentum_residual: float
    system_size: int
    regularity: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "joint": self.joint,
            "lock_value": self.lock_value,
            "method": self.method,
            "qd_minus": self.qd_minus.tolist(),
            "qd_plus": self.qd_plus.tolist(),
            "impulse": self.impulse.tolist(),
            "kinetic_drop": self.kinetic_drop,
            "energy_before": self.energy_before,
            "energy_after": self.energy_after,
            "momentum_jump": self.momentum_jump,
            "momentum_residual": self.momentum_residual,
            "system_size": self.system_size,
            "regularity": self.regularity,
        }


@dataclass
class Trajectory:
    n: int
    rows: List[TrajectoryRow] = field(default_factory=list)
    events: List[EventRecord] = field(default_factory=list)
    name: str = "scenario"
    formulation: str = Formulation.INDEX1_DAE.value
    method: str = TransitionMethod.MINIMAL.value
    wall_time: float = 0.0

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def times(self) -> np.ndarray:
        return np.array([row.t for row in self.rows])

    @property
    def q(self) -> np.ndarray:
        return np.array([row.q for row in self.rows]).reshape(-1, self.n)

    @property
    def qd(self) -> np.ndarray:
        return np.array([row.qd for row in self.rows]).reshape(-1, self.n)

    @property
    def momentum(self) -> np.ndarray:
        return np.array([row.momentum_full() for row in self.rows]).reshape(-1, self.n)

    @property
    def total_energy(self) -> np.ndarray:
        return np.array([row.total for row in self.rows])

    def event_rows(self) -> List[Tuple[TrajectoryRow, TrajectoryRow]]:
        """(pre, post) row pairs, one per event"""
        flagged = [row for row in self.rows if row.event]
        return list(zip(flagged[0::2], flagged[1::2]))

    def columns(self) -> List[str]:
        n = self.n
        return (
            ["t"]
            + [f"q_{j}" for j in range(1, n + 1)]
            + [f"qd_{j}" for j in range(1, n + 1)]
            + [f"p_{j}" for j in range(1, n + 1)]
            + ["E_kin", "E_pot", "E_tot", "drift", "event"]
        )

    def to_frame(self) -> pd.DataFrame:
        data = np.column_stack([
            self.times,
            self.q,
            self.qd,
            self.momentum,
            [row.kinetic for row in self.rows],
            [row.potential for row in self.rows],
            self.total_energy,
            [row.drift for row in self.rows],
        ]) if self.rows else np.zeros((0, 3 * self.n + 5))
        frame = pd.DataFrame(data, columns=self.columns()[:-1])
        frame["event"] = np.array([int(row.event) for row in self.rows], dtype=int)
        return frame


def diagnostics_row(model: ChainModel, phase: PhaseConstraints, part: Partition, s: State,
                    event: bool = False, drift_phase: Optional[PhaseConstraints] = None,
                    F: Optional[np.ndarray] = None) -> TrajectoryRow:
    """Momentum F^T M qd for the phase's complement, energies, and constraint drift

    drift_phase overrides the phase used for the drift column (pre-event rows
    report drift against the constraints active before the event).
    """
    M = mass_matrix(model, s.q)
    if F is None:
        F = orthogonal_complement(phase.jacobian(s.q), part)
    momentum = F.T @ (M @ s.qd)
    e = energies(model, s)
    dphase = drift_phase if drift_phase is not None else phase
    drift = 0.0
    if dphase.m:
        drift = float(max(
            np.max(np.abs(dphase.evaluate_h(s.q))),
            np.max(np.abs(dphase.jacobian(s.q) @ s.qd)),
        ))
    return TrajectoryRow(
        t=s.t,
        q=s.q.copy(),
        qd=s.qd.copy(),
        momentum=momentum,
        independent=part.independent,
        kinetic=e.kinetic,
        potential=e.potential,
        total=e.total,
        drift=drift,
        event=event,
    )


def event_steps(sched: ConstraintSchedule, t0: float, dt: float, n_steps: int,
                tolerance: float = GRID_TOLERANCE) -> dict:
    """Map integration step index -> schedule event index; events must sit on grid nodes"""
    steps = {}
    for i, event in enumerate(sched.events):
        k = int(round((event.time - t0) / dt))
        if abs(t0 + k * dt - event.time) > tolerance:
            raise ScheduleError(
                f"Event at t={event.time} is not on the integration grid (dt={dt}, nearest node {t0 + k * dt})"
            )
        if not 0 <= k <= n_steps:
            raise ScheduleError(f"Event at t={event.time} outside [{t0}, {t0 + n_steps * dt}]")
        steps[k] = i
    return steps


class _PhaseRunner:
    """Frozen-coordinate derivative for one phase under one formulation

    Joint locks have constant Jacobians, so the partition, its complement F
    and the rank checks are settled once when the phase starts.
    """

    def __init__(self, model: ChainModel, forces: ForceLaw, phase: PhaseConstraints,
                 formulation: Formulation, q_frozen: np.ndarray):
        self.model = model
        self.forces = forces
        self.phase = phase
        self.formulation = formulation
        self.part = choose_partition(phase.J, model.n)
        self.free = np.array(phase.free(), dtype=int)
        self.q_frozen = q_frozen.copy()
        self.F = orthogonal_complement(phase.J, self.part) if phase.constant_jacobian else None

    def full_state(self, t: float, q_free: np.ndarray, qd_free: np.ndarray) -> State:
        q = self.q_frozen.copy()
        qd = np.zeros(self.model.n)
        q[self.free] = q_free
        qd[self.free] = qd_free
        return State(t=t, q=q, qd=qd)

    def accel(self, s: State) -> np.ndarray:
        if self.formulation is Formulation.INDEX1_DAE:
            return accel_index1(self.model, self.forces, self.phase, s)[0]
        if self.formulation is Formulation.PROJECTED_ODE:
            return accel_projected(self.model, self.forces, self.phase, s, check_rank=self.F is None)
        sdd = accel_voronets(self.model, self.forces, self.phase, self.part, s, self.F)
        return lift_voronets(self.model, self.phase, self.part, s, sdd, self.F)

    def deriv(self, t: float, q_free: np.ndarray, qd_free: np.ndarray) -> np.ndarray:
        return self.accel(self.full_state(t, q_free, qd_free))[self.free]

    def step(self, s: State, dt: float, t_next: float) -> State:
        reduced = State(t=s.t, q=s.q[self.free], qd=s.qd[self.free])
        stepped = rk4_step(self.deriv, reduced, dt, t_next)
        return self.full_state(stepped.t, stepped.q, stepped.qd)


def run_scenario(
    model: ChainModel,
    forces: ForceLaw,
    sched: ConstraintSchedule,
    s0: State,
    t_end: float,
    dt: float,
    formulation: Formulation = Formulation.VORONETS_MINIMAL,
    transition_method: TransitionMethod = TransitionMethod.MINIMAL,
    *,
    impulses: Optional[Sequence[Optional[Sequence[float]]]] = None,
    sample_stride: int = 10,
    grid_tolerance: float = GRID_TOLERANCE,
    rank_scale: float = RANK_SCALE,
    logger: Optional[SimLogger] = None,
    name: str = "scenario",
) -> Trajectory:
    """Integrate phase by phase and apply a velocity jump at every lock event"""
    formulation = Formulation.parse(formulation)
    method = TransitionMethod(transition_method)
    if method is TransitionMethod.NAIVE:
        formulation = Formulation.INDEX1_DAE
    if dt <= 0:
        raise ValueError(f"Step size must be positive, got {dt}")
    if sample_stride < 1:
        raise ValueError(f"sample_stride must be >= 1, got {sample_stride}")
    if sched.n != model.n:
        raise ScheduleError(f"Schedule for {sched.n} joints, model has {model.n}")
    model.check_vector(s0.q, "q0")
    model.check_vector(s0.qd, "qd0")
    if impulses is not None and len(impulses) != len(sched.events):
        raise ScheduleError(f"{len(impulses)} impulse vectors for {len(sched.events)} events")

    t0 = float(s0.t)
    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 0:
        raise ValueError(f"t_end {t_end} before start time {t0}")
    if abs(t0 + n_steps * dt - t_end) > grid_tolerance:
        raise ValueError(f"t_end {t_end} is not on the integration grid (dt={dt}, nearest node {t0 + n_steps * dt})")
    steps = event_steps(sched, t0, dt, n_steps, grid_tolerance)

    traj = Trajectory(n=model.n, name=name, formulation=formulation.value, method=method.value)
    if logger:
        logger.run_start(name, model.n, len(sched.events), formulation.value, method.value, dt, t_end)
    started = time.perf_counter()

    state = State(t=t0, q=s0.q.copy(), qd=s0.qd.copy())
    captured: List = []
    runner = _PhaseRunner(model, forces, PhaseConstraints.from_events(captured, model.n), formulation, state.q)
    if logger:
        logger.phase_start(name, t0, [])

    def handle_event(index: int):
        nonlocal sched, state, runner
        event = sched.events[index]
        capture_tolerance = max(grid_tolerance, 1e-9)
        if event.captured:
            # a preset lock value must be the angle the joint actually has at t_i
            if abs(event.lock_value - state.q[event.column]) > capture_tolerance:
                raise ScheduleError(
                    f"Preset lock value {event.lock_value} for joint {event.joint_index} differs from "
                    f"q_{event.joint_index}(t={state.t}) = {state.q[event.column]}"
                )
            q = state.q.copy()
            q[event.column] = event.lock_value
            state = State(t=state.t, q=q, qd=state.qd)
        else:
            event = capture_lock(event, state, tolerance=capture_tolerance)
            sched = sched.with_event(event)
        captured.append(event)
        if logger:
            logger.lock_captured(name, state.t, event.joint_index, event.lock_value)

        J1, J2 = split_at_event(sched, event)
        M = mass_matrix(model, state.q)
        report = validate_regularity(J1, J2, M, rank_scale)
        if logger:
            logger.regularity(name, state.t, report.to_dict())
        report.raise_if_failed()

        U = None
        if impulses is not None and impulses[index] is not None:
            U = model.check_vector(impulses[index], "impulse U")
        tin = TransitionInput(M=M, J1=J1, J2=J2, qd_minus=state.qd, U=U)
        result = solve_transition(method, tin)

        before = runner.phase
        post = _PhaseRunner(model, forces, PhaseConstraints.from_events(captured, model.n), formulation, state.q)
        qd_plus = result.qd_plus.copy()
        qd_plus[list(post.phase.locked)] = 0.0
        s_plus = State(t=state.t, q=state.q, qd=qd_plus)

        pre_row = diagnostics_row(model, post.phase, post.part, state, event=True,
                                  drift_phase=before, F=post.F)
        post_row = diagnostics_row(model, post.phase, post.part, s_plus, event=True, F=post.F)
        F = post.F if post.F is not None else orthogonal_complement(post.phase.J, post.part)
        jump = float(np.max(np.abs(post_row.momentum - pre_row.momentum - F.T @ tin.U), initial=0.0))
        residual = momentum_residual(tin, result)
        traj.rows.extend([pre_row, post_row])
        traj.events.append(EventRecord(
            time=state.t,
            joint=event.joint_index,
            lock_value=event.lock_value,
            method=method.value,
            qd_minus=state.qd.copy(),
            qd_plus=qd_plus,
            impulse=result.impulse,
            kinetic_drop=result.kinetic_drop,
            energy_before=pre_row.total,
            energy_after=post_row.total,
            momentum_jump=jump,
            momentum_residual=residual,
            system_size=result.system_size,
            regularity=report.to_dict(),
        ))
        if logger:
            logger.transition(name, state.t, method.value, result.kinetic_drop,
                              float(np.linalg.norm(result.impulse)), residual)
            logger.phase_start(name, state.t, list(post.phase.locked))
        state = s_plus
        runner = post

    try:
        if 0 in steps:
            handle_event(steps[0])
        else:
            traj.rows.append(diagnostics_row(model, runner.phase, runner.part, state, F=runner.F))

        for k in range(1, n_steps + 1):
            state = runner.step(state, dt, t0 + k * dt)
            if k in steps:
                handle_event(steps[k])
            elif k % sample_stride == 0 or k == n_steps:
                traj.rows.append(diagnostics_row(model, runner.phase, runner.part, state, F=runner.F))
    except Exception as e:
        if logger:
            logger.error(str(e), name, t=state.t, kind=type(e).__name__)
        raise

    traj.wall_time = time.perf_counter() - started
    if logger:
        logger.run_complete(name, len(traj.rows), len(traj.events), traj.wall_time)
    return traj


def write_csv(traj: Trajectory, path, float_digits: int = 17) -> Path:
    """Header row plus one line per sample; momentum of locked joints left empty"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    traj.to_frame().to_csv(path, index=False, float_format=f"%.{float_digits}g", na_rep="")
    return path


def read_csv(path, name: Optional[str] = None) -> Trajectory:
    frame = pd.read_csv(path)
    q_cols = [c for c in frame.columns if c.startswith("q_")]
    n = len(q_cols)
    q = frame[q_cols].to_numpy(dtype=float)
    qd = frame[[f"qd_{j}" for j in range(1, n + 1)]].to_numpy(dtype=float)
    p = frame[[f"p_{j}" for j in range(1, n + 1)]].to_numpy(dtype=float)
    traj = Trajectory(n=n, name=name or Path(path).stem)
    for i in range(len(frame)):
        independent = tuple(int(j) for j in np.flatnonzero(~np.isnan(p[i])))
        traj.rows.append(TrajectoryRow(
            t=float(frame["t"].iloc[i]),
            q=q[i],
            qd=qd[i],
            momentum=p[i, list(independent)],
            independent=independent,
            kinetic=float(frame["E_kin"].iloc[i]),
            potential=float(frame["E_pot"].iloc[i]),
            total=float(frame["E_tot"].iloc[i]),
            drift=float(frame["drift"].iloc[i]),
            event=bool(frame["event"].iloc[i]),
        ))
    return traj


if __name__ == "__main__":
    from chain_model import three_bar_pendulum
    from constraint_schedule import LockEvent

    model = three_bar_pendulum()
    sched = ConstraintSchedule(events=(LockEvent(0.8, 2), LockEvent(1.3, 3)), n=3)
    s0 = State(0.0, np.full(3, np.pi / 6), np.zeros(3))
    traj = run_scenario(model, ForceLaw(), sched, s0, 2.0, 1e-4, sample_stride=100)
    for rec in traj.events:
        print(f"t={rec.time:.4f} joint {rec.joint}: drop={rec.kinetic_drop:.6f} J, jump={rec.momentum_jump:.2e}")
    print(f"{len(traj)} rows in {traj.wall_time:.2f} s")
