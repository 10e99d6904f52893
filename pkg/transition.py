#!/usr/bin/env python3
"""
VTM-SIM: Transition Solvers
Momentum-consistent velocity jumps at constraint-activation events

All consistent solvers write the impulse balance as
    M dqd + J_+^T Lambda = U
and differ only in the coordinates the saddle system is posed in.
The impulse of Q is neglected everywhere.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional

import numpy as np

from chain_model import kinetic_energy
from constraint_schedule import validate_regularity
from projection_kernels import (
    Partition,
    PartitionError,
    as_rows,
    choose_partition,
    nullspace_projector,
    orthogonal_complement,
    solve_saddle,
)

VELOCITY_CONSTRAINT_TOL = 1e-8


class TransitionMethod(Enum):
    GENERAL = "general"
    PARTITIONED = "partitioned"
    REDUNDANT = "redundant"
    MINIMAL = "minimal"
    NAIVE = "naive"

    @property
    def consistent(self) -> bool:
        return self is not TransitionMethod.NAIVE


@dataclass(frozen=True, eq=False)
class TransitionInput:
    """Quantities at the switching configuration q0"""
    M: np.ndarray
    J1: np.ndarray
    J2: np.ndarray
    qd_minus: np.ndarray
    U: Optional[np.ndarray] = None

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        n = M.shape[0]
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "J1", as_rows(self.J1, n))
        object.__setattr__(self, "J2", as_rows(self.J2, n))
        qd = np.asarray(self.qd_minus, dtype=float)
        if qd.shape != (n,):
            raise ValueError(f"qd_minus has shape {qd.shape}, expected ({n},)")
        object.__setattr__(self, "qd_minus", qd)
        U = np.zeros(n) if self.U is None else np.asarray(self.U, dtype=float)
        if U.shape != (n,):
            raise ValueError(f"U has shape {U.shape}, expected ({n},)")
        object.__setattr__(self, "U", U)
        if self.m1:
            violation = np.max(np.abs(self.J1 @ qd))
            if violation > VELOCITY_CONSTRAINT_TOL:
                raise ValueError(
                    f"Pre-event velocity violates persistent constraints by {violation:.3e}"
                )

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def m1(self) -> int:
        return self.J1.shape[0]

    @property
    def m2(self) -> int:
        return self.J2.shape[0]

    @property
    def J_plus(self) -> np.ndarray:
        return np.vstack([self.J1, self.J2])


@dataclass(frozen=True, eq=False)
class TransitionResult:
    dqd: np.ndarray
    qd_plus: np.ndarray
    impulse: np.ndarray
    kinetic_drop: float
    method: str = TransitionMethod.GENERAL.value
    persistent_impulse: Optional[np.ndarray] = None
    system_size: int = 0
    residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "dqd": self.dqd.tolist(),
            "qd_plus": self.qd_plus.tolist(),
            "impulse": self.impulse.tolist(),
            "persistent_impulse": None if self.persistent_impulse is None else self.persistent_impulse.tolist(),
            "kinetic_drop": self.kinetic_drop,
            "system_size": self.system_size,
            "residual": self.residual,
        }


def system_size(method: TransitionMethod, n: int, m1: int, m2: int) -> int:
    """Dimension of the coefficient matrix each formulation factors"""
    sizes = {
        TransitionMethod.GENERAL: n + m1 + m2,
        TransitionMethod.PARTITIONED: n + m1 + m2,
        TransitionMethod.REDUNDANT: n + m2,
        TransitionMethod.MINIMAL: n - m1 + m2,
        TransitionMethod.NAIVE: 0,
    }
    return sizes[TransitionMethod(method)]


def _require_regular(tin: TransitionInput):
    validate_regularity(tin.J1, tin.J2, tin.M).raise_if_failed()


def _result(tin: TransitionInput, dqd: np.ndarray, impulse: np.ndarray, method: TransitionMethod,
            residual: float, persistent_impulse: Optional[np.ndarray] = None) -> TransitionResult:
    return TransitionResult(
        dqd=dqd,
        qd_plus=tin.qd_minus + dqd,
        impulse=impulse,
        kinetic_drop=kinetic_energy(tin.M, dqd),
        method=method.value,
        persistent_impulse=persistent_impulse,
        system_size=system_size(method, tin.n, tin.m1, tin.m2),
        residual=residual,
    )


def solve_general(tin: TransitionInput) -> TransitionResult:
    """[[M, J+^T], [J+, 0]] [dqd; Lambda] = [U; -J+ qd_minus]"""
    _require_regular(tin)
    J_plus = tin.J_plus
    dqd, impulse, residual = solve_saddle(tin.M, J_plus, tin.U, -J_plus @ tin.qd_minus)
    return _result(tin, dqd, impulse, TransitionMethod.GENERAL, residual)


def solve_partitioned(tin: TransitionInput) -> TransitionResult:
    """Saddle system with separate impulses for persistent and added constraints"""
    _require_regular(tin)
    B = np.vstack([tin.J1, tin.J2])
    bottom = np.concatenate([-tin.J1 @ tin.qd_minus, -tin.J2 @ tin.qd_minus])
    dqd, impulses, residual = solve_saddle(tin.M, B, tin.U, bottom)
    return _result(
        tin, dqd, impulses[tin.m1:], TransitionMethod.PARTITIONED, residual,
        persistent_impulse=impulses[:tin.m1],
    )


def solve_redundant_projected(tin: TransitionInput) -> TransitionResult:
    """[[M, N^T J2^T], [J2 N, 0]] [dqd; Lambda2] = [N^T U; -J2 qd_minus], N = N_{J1,M}

    The top right side carries N^T U as the projected momentum balance
    demands; it reduces to U whenever U vanishes or m1 = 0.
    """
    _require_regular(tin)
    N = nullspace_projector(tin.J1, tin.M)
    B = tin.J2 @ N
    dqd, impulse, residual = solve_saddle(tin.M, B, N.T @ tin.U, -tin.J2 @ tin.qd_minus)
    return _result(tin, dqd, impulse, TransitionMethod.REDUNDANT, residual)


def solve_minimal_voronets(tin: TransitionInput, F1: np.ndarray,
                           part: Optional[Partition] = None) -> TransitionResult:
    """[[F1^T M F1, F1^T J2^T], [J2 F1, 0]] [ds; Lambda2] = [F1^T U; -J2 F1 sd_minus], dqd = F1 ds"""
    _require_regular(tin)
    F1 = np.asarray(F1, dtype=float)
    if F1.shape != (tin.n, tin.n - tin.m1):
        raise PartitionError(f"F1 has shape {F1.shape}, expected ({tin.n}, {tin.n - tin.m1})")
    if part is None:
        part = choose_partition(tin.J1, tin.n)
    independent = list(part.independent)
    if not np.allclose(F1[independent, :], np.eye(len(independent)), rtol=0.0, atol=1e-12):
        raise PartitionError("Independent rows of F1 do not form the identity")
    sd_minus = tin.qd_minus[independent]
    M_bar = F1.T @ tin.M @ F1
    B = tin.J2 @ F1
    ds, impulse, residual = solve_saddle(0.5 * (M_bar + M_bar.T), B, F1.T @ tin.U, -B @ sd_minus)
    return _result(tin, F1 @ ds, impulse, TransitionMethod.MINIMAL, residual)


def _selector_columns(J: np.ndarray) -> list:
    columns = []
    for row in J:
        nonzero = np.flatnonzero(row)
        if len(nonzero) != 1 or row[nonzero[0]] != 1.0:
            raise ValueError("Naive zeroing needs selector rows (a single 1 per row)")
        columns.append(int(nonzero[0]))
    return columns


def naive_zeroing(tin: TransitionInput) -> TransitionResult:
    """Zero the newly locked rates without any momentum balance (negative control)"""
    columns = _selector_columns(tin.J2)
    dqd = np.zeros(tin.n)
    dqd[columns] = -tin.qd_minus[columns]
    # implied impulse on the locked joints, diagnostic only
    impulse = -(tin.M @ dqd)[columns]
    return _result(tin, dqd, impulse, TransitionMethod.NAIVE, 0.0)


def momentum_residual(tin: TransitionInput, result: TransitionResult) -> float:
    """max |F+^T (M dqd - U)| over a basis F+ of ker J+"""
    J_plus = tin.J_plus
    F_plus = orthogonal_complement(J_plus, choose_partition(J_plus, tin.n))
    return float(np.max(np.abs(F_plus.T @ (tin.M @ result.dqd - tin.U)), initial=0.0))


def solve_transition(method: TransitionMethod, tin: TransitionInput,
                     part: Optional[Partition] = None) -> TransitionResult:
    """Dispatch to one of the five transition rules"""
    method = TransitionMethod(method)
    if method is TransitionMethod.MINIMAL:
        part = part or choose_partition(tin.J1, tin.n)
        return solve_minimal_voronets(tin, orthogonal_complement(tin.J1, part), part)
    solvers: Dict[TransitionMethod, Callable[[TransitionInput], TransitionResult]] = {
        TransitionMethod.GENERAL: solve_general,
        TransitionMethod.PARTITIONED: solve_partitioned,
        TransitionMethod.REDUNDANT: solve_redundant_projected,
        TransitionMethod.NAIVE: naive_zeroing,
    }
    return solvers[method](tin)


if __name__ == "__main__":
    tin = TransitionInput(
        M=np.array([[2.0, 1.0], [1.0, 3.0]]),
        J1=np.zeros((0, 2)),
        J2=np.array([[0.0, 1.0]]),
        qd_minus=np.array([1.0, 1.0]),
    )
    for method in TransitionMethod:
        r = solve_transition(method, tin)
        print(f"{method.value:12} dqd={r.dqd} impulse={r.impulse} drop={r.kinetic_drop:.4f}")
