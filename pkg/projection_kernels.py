#!/usr/bin/env python3
"""
VTM-SIM: Projection Kernels
Weighted pseudoinverse, null-space projectors, orthogonal complements

Shared by the motion-equation formulations and the transition solvers.
Coordinate indices are 0-based throughout.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve, solve, svdvals

RANK_SCALE = 1e3


class RankError(ValueError):
    """Constraint Jacobian (or a derived inner matrix) is rank deficient."""


class PartitionError(RankError):
    """Dependent-coordinate block J_p of a partition is singular."""


@dataclass(frozen=True)
class Partition:
    """Split of coordinates into dependent p (one per constraint) and independent s"""
    dependent: Tuple[int, ...]
    independent: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dependent", tuple(int(i) for i in self.dependent))
        object.__setattr__(self, "independent", tuple(int(i) for i in self.independent))
        if set(self.dependent) & set(self.independent):
            raise PartitionError(
                f"Dependent {self.dependent} and independent {self.independent} overlap"
            )

    @property
    def n(self) -> int:
        return len(self.dependent) + len(self.independent)

    def validate(self, n: int):
        if sorted(self.dependent + self.independent) != list(range(n)):
            raise PartitionError(f"Partition does not cover coordinates 0..{n - 1}")

    @classmethod
    def from_dependent(cls, dependent: Sequence[int], n: int) -> "Partition":
        dep = tuple(dependent)
        return cls(dependent=dep, independent=tuple(i for i in range(n) if i not in dep))


def as_rows(J: np.ndarray, n: int) -> np.ndarray:
    """Coerce to an (m, n) float array; empty input becomes (0, n)"""
    J = np.asarray(J, dtype=float)
    if J.size == 0:
        return np.zeros((0, n))
    if J.ndim == 1:
        J = J[None, :]
    if J.shape[1] != n:
        raise ValueError(f"Jacobian has {J.shape[1]} columns, expected {n}")
    return J


def rank_tolerance(A: np.ndarray, scale: float = RANK_SCALE) -> float:
    """sigma_max * max(dim) * eps * scale"""
    if A.size == 0:
        return 0.0
    sigma_max = svdvals(A)[0]
    return sigma_max * max(A.shape) * np.finfo(float).eps * scale


def numerical_rank(A: np.ndarray, scale: float = RANK_SCALE) -> int:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    sigma = svdvals(A)
    tol = sigma[0] * max(A.shape) * np.finfo(float).eps * scale
    return int(np.sum(sigma > tol))


def _require_full_row_rank(J: np.ndarray):
    m = J.shape[0]
    if m and numerical_rank(J) < m:
        raise RankError(f"Jacobian with {m} rows has rank {numerical_rank(J)}")


def weighted_pseudoinverse(J: np.ndarray, M: np.ndarray, check_rank: bool = True) -> np.ndarray:
    """M-weighted right pseudoinverse J_M^+ = M^-1 J^T (J M^-1 J^T)^-1

    check_rank=False skips the rank SVD and scipy's finiteness checks, for
    callers that validated a constant J once.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    J = as_rows(J, n)
    if J.shape[0] == 0:
        return np.zeros((n, 0))
    if check_rank:
        _require_full_row_rank(J)
    Minv_Jt = cho_solve(cho_factor(M, check_finite=check_rank), J.T, check_finite=check_rank)
    inner = J @ Minv_Jt
    try:
        inner_factor = cho_factor(0.5 * (inner + inner.T), check_finite=check_rank)
    except LinAlgError as e:
        raise RankError(f"J M^-1 J^T is singular: {e}") from e
    return cho_solve(inner_factor, Minv_Jt.T, check_finite=check_rank).T


def nullspace_projector(J: np.ndarray, M: np.ndarray) -> np.ndarray:
    """N_{J,M} = I - J_M^+ J"""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    J = as_rows(J, n)
    if J.shape[0] == 0:
        return np.eye(n)
    return np.eye(n) - weighted_pseudoinverse(J, M) @ J


def choose_partition(J: np.ndarray, n: int = None) -> Partition:
    """Greedy column pivoting: each elimination step takes the column with largest |pivot|"""
    J = np.asarray(J, dtype=float)
    if n is None:
        n = J.shape[1] if J.ndim == 2 else J.size
    J = as_rows(J, n)
    work = J.copy()
    dependent = []
    for row in range(work.shape[0]):
        candidates = [c for c in range(n) if c not in dependent]
        col = max(candidates, key=lambda c: abs(work[row, c]))
        pivot = work[row, col]
        if abs(pivot) <= rank_tolerance(J):
            raise PartitionError(f"No admissible pivot for constraint row {row}")
        dependent.append(col)
        below = work[row + 1:, col] / pivot
        work[row + 1:, :] -= np.outer(below, work[row, :])
    return Partition.from_dependent(dependent, n)


def orthogonal_complement(J: np.ndarray, part: Partition) -> np.ndarray:
    """F with J F = 0; independent rows of F form the identity"""
    n = part.n
    part.validate(n)
    J = as_rows(J, n)
    m = J.shape[0]
    if m != len(part.dependent):
        raise PartitionError(f"{m} constraints but {len(part.dependent)} dependent coordinates")
    F = np.zeros((n, n - m))
    F[list(part.independent), :] = np.eye(n - m)
    if m == 0:
        return F
    J_p = J[:, list(part.dependent)]
    J_s = J[:, list(part.independent)]
    if numerical_rank(J_p) < m:
        raise PartitionError(f"J_p on coordinates {part.dependent} is singular")
    F[list(part.dependent), :] = -lu_solve(lu_factor(J_p), J_s)
    return F


def reduced_system(
    F: np.ndarray,
    M: np.ndarray,
    Cvec: np.ndarray,
    P: np.ndarray,
    Q: np.ndarray,
    u: np.ndarray,
    Fdot_sdot_term: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mass matrix and right side of the Voronets equations in s-coordinates"""
    F = np.asarray(F, dtype=float)
    n = M.shape[0]
    if F.shape[0] != n:
        raise ValueError(f"F has {F.shape[0]} rows, expected {n}")
    for name, v in (("Cvec", Cvec), ("P", P), ("Q", Q), ("u", u), ("Fdot_sdot_term", Fdot_sdot_term)):
        if np.shape(v) != (n,):
            raise ValueError(f"{name} has shape {np.shape(v)}, expected ({n},)")
    M_bar = F.T @ M @ F
    rhs_bar = F.T @ (u - Cvec - P - Q - M @ Fdot_sdot_term)
    return 0.5 * (M_bar + M_bar.T), rhs_bar


def solve_saddle(A: np.ndarray, B: np.ndarray, top: np.ndarray, bottom: np.ndarray,
                 with_residual: bool = True) -> Tuple[np.ndarray, np.ndarray, float]:
    """Solve [[A, B^T], [B, 0]] [x; y] = [top; bottom] by pivoted LDL^T (symmetric indefinite)"""
    k = A.shape[0]
    m = B.shape[0]
    if m == 0:
        return cho_solve(cho_factor(A, check_finite=False), top, check_finite=False), np.zeros(0), 0.0
    K = np.zeros((k + m, k + m))
    K[:k, :k] = A
    K[:k, k:] = B.T
    K[k:, :k] = B
    rhs = np.concatenate([top, bottom])
    try:
        sol = solve(K, rhs, assume_a="sym", check_finite=False)
    except LinAlgError as e:
        raise RankError(f"Saddle-point matrix is singular: {e}") from e
    residual = 0.0
    if with_residual:
        scale = max(
            np.max(np.abs(K)) * np.max(np.abs(sol)),
            np.max(np.abs(rhs)),
            np.finfo(float).tiny,
        )
        residual = float(np.max(np.abs(K @ sol - rhs)) / scale)
    return sol[:k], sol[k:], residual


if __name__ == "__main__":
    M = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    J1 = np.array([[0.0, 1.0, 0.0]])
    print("J_M^+ =", weighted_pseudoinverse(J1, M).ravel())
    print("N =\n", nullspace_projector(J1, M))
    part = choose_partition(J1)
    print("partition:", part)
    print("F =\n", orthogonal_complement(J1, part))
