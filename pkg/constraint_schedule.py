#!/usr/bin/env python3
"""
VTM-SIM: Constraint Schedule
Piecewise quasi-scleronomic constraints for successive joint locking

Joints in LockEvent are 1-based (as in scenario files); everything that
indexes arrays (JointLock.column, PhaseConstraints.locked) is 0-based.
Phases are right-continuous: the event at t_i belongs to [t_i, t_i+1).
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import List, Optional, Protocol, Sequence, Tuple, runtime_checkable

import numpy as np

from chain_model import State
from projection_kernels import RankError, as_rows, numerical_rank, RANK_SCALE

GRID_TOLERANCE = 1e-9


class ScheduleError(ValueError):
    """Invalid lock schedule or capture request."""


class RegularityError(RankError):
    """Topology change at a singular configuration (regularity assumptions fail)."""


@runtime_checkable
class ConstraintProvider(Protocol):
    """Holonomic constraint block h(q) = 0 with its Jacobian"""
    rows: int
    constant_jacobian: bool

    def evaluate(self, q: np.ndarray) -> np.ndarray: ...

    def jacobian(self, q: np.ndarray) -> np.ndarray: ...

    def jacobian_dot_qd(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class JointLock:
    """h(q) = q_j - value; J is a selector row, J-dot vanishes"""
    column: int
    n: int
    value: float
    rows: int = 1
    constant_jacobian: bool = True

    def evaluate(self, q: np.ndarray) -> np.ndarray:
        return np.array([q[self.column] - self.value])

    def jacobian(self, q: np.ndarray = None) -> np.ndarray:
        row = np.zeros((1, self.n))
        row[0, self.column] = 1.0
        return row

    def jacobian_dot_qd(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        return np.zeros(1)


@dataclass(frozen=True)
class LockEvent:
    """Lock of one joint at a scheduled time"""
    time: float
    joint_index: int  # 1-based
    lock_value: Optional[float] = None

    @property
    def column(self) -> int:
        return self.joint_index - 1

    @property
    def captured(self) -> bool:
        return self.lock_value is not None

    def provider(self, n: int) -> JointLock:
        if not self.captured:
            raise ScheduleError(f"Lock of joint {self.joint_index} at t={self.time} not captured yet")
        return JointLock(column=self.column, n=n, value=float(self.lock_value))


@dataclass(frozen=True)
class ConstraintSchedule:
    """Ordered lock events on an n-coordinate chain (activation only)"""
    events: Tuple[LockEvent, ...]
    n: int

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        locked = set()
        last_time = -np.inf
        for event in self.events:
            if event.time <= last_time:
                raise ScheduleError(
                    f"Event times must be strictly increasing: {event.time} after {last_time}"
                )
            if not 1 <= event.joint_index <= self.n:
                raise ScheduleError(f"Joint {event.joint_index} outside 1..{self.n}")
            if event.joint_index in locked:
                raise ScheduleError(f"Joint {event.joint_index} is locked twice")
            locked.add(event.joint_index)
            last_time = event.time

    def index_of(self, event: LockEvent) -> int:
        for i, e in enumerate(self.events):
            if e.joint_index == event.joint_index and abs(e.time - event.time) <= GRID_TOLERANCE:
                return i
        raise ScheduleError(f"Event (t={event.time}, joint {event.joint_index}) not in schedule")

    def with_event(self, event: LockEvent) -> "ConstraintSchedule":
        """Copy with the matching event replaced (used to store a captured lock)"""
        events = list(self.events)
        events[self.index_of(event)] = event
        return replace(self, events=tuple(events))

    def events_until(self, t: float) -> List[LockEvent]:
        return [e for e in self.events if e.time <= t + GRID_TOLERANCE]


@dataclass(frozen=True, eq=False)
class PhaseConstraints:
    """Active constraint set of one phase"""
    J: np.ndarray
    h_values: np.ndarray
    locked: Tuple[int, ...] = ()
    providers: Tuple[ConstraintProvider, ...] = field(default=(), repr=False)

    @property
    def m(self) -> int:
        return self.J.shape[0]

    @property
    def n(self) -> int:
        return self.J.shape[1]

    @cached_property
    def constant_jacobian(self) -> bool:
        return all(p.constant_jacobian for p in self.providers)

    def evaluate_h(self, q: np.ndarray) -> np.ndarray:
        if not self.providers:
            return np.zeros(0)
        return np.concatenate([p.evaluate(q) for p in self.providers])

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        if self.constant_jacobian:
            return self.J
        return as_rows(np.vstack([p.jacobian(q) for p in self.providers]), self.n)

    def jacobian_dot_qd(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        if not self.providers:
            return np.zeros(0)
        return np.concatenate([p.jacobian_dot_qd(q, qd) for p in self.providers])

    def free(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n) if i not in self.locked)

    @classmethod
    def from_events(cls, events: Sequence[LockEvent], n: int) -> "PhaseConstraints":
        providers = tuple(e.provider(n) for e in events)
        if providers:
            J = np.vstack([p.jacobian() for p in providers])
        else:
            J = np.zeros((0, n))
        return cls(
            J=J,
            h_values=np.array([p.value for p in providers]),
            locked=tuple(p.column for p in providers),
            providers=providers,
        )


def active_constraints_at(sched: ConstraintSchedule, t: float) -> PhaseConstraints:
    """J and captured lock values of the phase containing t"""
    return PhaseConstraints.from_events(sched.events_until(t), sched.n)


def evaluate_h(sched: ConstraintSchedule, q: np.ndarray, t: float) -> np.ndarray:
    return active_constraints_at(sched, t).evaluate_h(q)


def capture_lock(event: LockEvent, s: State, tolerance: float = GRID_TOLERANCE) -> LockEvent:
    """Record the running joint angle as the lock value"""
    if event.captured:
        raise ScheduleError(f"Lock of joint {event.joint_index} at t={event.time} already captured")
    if abs(s.t - event.time) > tolerance:
        raise ScheduleError(f"State time {s.t} does not match event time {event.time}")
    if not 0 <= event.column < len(s.q):
        raise ScheduleError(f"Joint {event.joint_index} outside state of size {len(s.q)}")
    return replace(event, lock_value=float(s.q[event.column]))


def _selector_rows(columns: Sequence[int], n: int) -> np.ndarray:
    J = np.zeros((len(columns), n))
    for row, col in enumerate(columns):
        J[row, col] = 1.0
    return J


def split_at_event(sched: ConstraintSchedule, event: LockEvent) -> Tuple[np.ndarray, np.ndarray]:
    """(J1, J2): persistent rows before the event and rows added at it"""
    index = sched.index_of(event)
    before = [e.column for e in sched.events[:index]]
    return _selector_rows(before, sched.n), _selector_rows([sched.events[index].column], sched.n)


@dataclass(frozen=True)
class RegularityReport:
    m1: int
    m2: int
    rank_J1: int
    rank_J2: int
    rank_stacked: int

    @property
    def ok(self) -> bool:
        return (
            self.rank_J1 == self.m1
            and self.rank_J2 == self.m2
            and self.rank_stacked == self.m1 + self.m2
        )

    def to_dict(self) -> dict:
        return {
            "m1": self.m1,
            "m2": self.m2,
            "rank_J1": self.rank_J1,
            "rank_J2": self.rank_J2,
            "rank_stacked": self.rank_stacked,
            "ok": self.ok,
        }

    def raise_if_failed(self):
        if not self.ok:
            raise RegularityError(
                f"Irregular topology change: rank J1 {self.rank_J1}/{self.m1}, "
                f"rank J2 {self.rank_J2}/{self.m2}, "
                f"rank (J1; J2) {self.rank_stacked}/{self.m1 + self.m2}"
            )


def validate_regularity(
    J1: np.ndarray, J2: np.ndarray, M: np.ndarray, scale: float = RANK_SCALE
) -> RegularityReport:
    """Full-rank and independence checks on persistent and added constraints"""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"Mass matrix must be square, got {M.shape}")
    n = M.shape[0]
    J1 = as_rows(J1, n)
    J2 = as_rows(J2, n)
    return RegularityReport(
        m1=J1.shape[0],
        m2=J2.shape[0],
        rank_J1=numerical_rank(J1, scale),
        rank_J2=numerical_rank(J2, scale),
        rank_stacked=numerical_rank(np.vstack([J1, J2]), scale),
    )


if __name__ == "__main__":
    sched = ConstraintSchedule(
        events=(LockEvent(0.8, 2, lock_value=0.3), LockEvent(1.3, 3, lock_value=-0.1)), n=3
    )
    for t in (0.5, 1.0, 2.0):
        print(t, active_constraints_at(sched, t).J.tolist())
    J1, J2 = split_at_event(sched, sched.events[1])
    print(validate_regularity(J1, J2, np.eye(3)).to_dict())
