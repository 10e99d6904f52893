#!/usr/bin/env python3
"""
VTM-SIM: Chain Model
Closed-form dynamics terms of a planar serial revolute chain

Joint angles are relative; the absolute angle of link i is
theta_i = q_1 + ... + q_i, measured from the downward vertical and
positive counterclockwise. q = 0 is the hanging equilibrium and the
zero of the potential energy.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve


class DimensionError(ValueError):
    """Vector or matrix dimension does not match the chain."""


@dataclass(frozen=True)
class LinkParams:
    """Geometry and inertia of one link"""
    length: float  # m
    mass: float  # kg
    com_offset: float  # m, from inboard joint along the link
    inertia_com: float  # kg m^2 about the joint-parallel axis through the COM

    def validate(self):
        if self.length <= 0:
            raise ValueError(f"Link length must be positive, got {self.length}")
        if self.mass <= 0:
            raise ValueError(f"Link mass must be positive, got {self.mass}")
        if not 0 <= self.com_offset <= self.length:
            raise ValueError(
                f"COM offset {self.com_offset} outside link of length {self.length}"
            )
        if self.inertia_com <= 0:
            raise ValueError(f"Link inertia must be positive, got {self.inertia_com}")

    @classmethod
    def uniform_bar(cls, length: float, mass: float, width: float) -> "LinkParams":
        """Solid bar with square cross section, COM at mid-length"""
        inertia = mass * (length ** 2 + width ** 2) / 12.0
        return cls(length=length, mass=mass, com_offset=length / 2.0, inertia_com=inertia)


@dataclass(frozen=True)
class ChainModel:
    """Planar serial n-revolute chain under gravity"""
    links: Tuple[LinkParams, ...]
    gravity: float = 9.81
    angle_convention: str = field(default="relative, from downward vertical, ccw", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if len(self.links) < 1:
            raise ValueError("Chain needs at least one link")
        if self.gravity < 0:
            raise ValueError(f"Gravity must be non-negative, got {self.gravity}")
        for link in self.links:
            link.validate()

    @property
    def n(self) -> int:
        return len(self.links)

    @cached_property
    def _mu(self) -> np.ndarray:
        """Constant coupling coefficients of the absolute-angle mass matrix.

        mu[j, k] = sum_i m_i a_ij a_ik with a_ij = L_j (j < i), d_j (j = i), 0 (j > i).
        """
        n = self.n
        lengths = np.array([link.length for link in self.links])
        masses = np.array([link.mass for link in self.links])
        offsets = np.array([link.com_offset for link in self.links])
        a = np.zeros((n, n))
        for i in range(n):
            a[i, :i] = lengths[:i]
            a[i, i] = offsets[i]
        return a.T @ (masses[:, None] * a)

    @cached_property
    def _inertias(self) -> np.ndarray:
        return np.array([link.inertia_com for link in self.links])

    @cached_property
    def _inertia_diag(self) -> np.ndarray:
        return np.diag(self._inertias)

    @cached_property
    def _beta(self) -> np.ndarray:
        """First mass moments: beta_j = m_j d_j + L_j sum_{i>j} m_i"""
        masses = np.array([link.mass for link in self.links])
        outboard = np.concatenate([np.cumsum(masses[::-1])[::-1][1:], [0.0]])
        return np.array([
            link.mass * link.com_offset + link.length * outboard[j]
            for j, link in enumerate(self.links)
        ])

    def check_vector(self, v: np.ndarray, name: str = "vector") -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise DimensionError(f"{name} has shape {v.shape}, expected ({self.n},)")
        return v


@dataclass(frozen=True, eq=False)
class State:
    """Time, joint angles and joint rates"""
    t: float
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=float))
        if self.q.shape != self.qd.shape:
            raise DimensionError(f"q {self.q.shape} and qd {self.qd.shape} differ")


def _zero_applied(q: np.ndarray, qd: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(q)


def _zero_other(qd: np.ndarray, q: np.ndarray, t: float) -> np.ndarray:
    return np.zeros_like(q)


@dataclass(frozen=True)
class ForceLaw:
    """Applied control forces u(q, qd, t) and other forces Q(qd, q, t)"""
    applied: Callable[[np.ndarray, np.ndarray, float], np.ndarray] = _zero_applied
    other: Callable[[np.ndarray, np.ndarray, float], np.ndarray] = _zero_other

    def u(self, model: ChainModel, s: State) -> np.ndarray:
        return model.check_vector(self.applied(s.q, s.qd, s.t), "applied force u")

    def Q(self, model: ChainModel, s: State) -> np.ndarray:
        return model.check_vector(self.other(s.qd, s.q, s.t), "force Q")

    @property
    def passive(self) -> bool:
        """True when both u and Q are the zero defaults"""
        return self.applied is _zero_applied and self.other is _zero_other


def _absolute(q: np.ndarray) -> np.ndarray:
    return np.cumsum(q)


def _pull_back_vector(v: np.ndarray) -> np.ndarray:
    """A^T v for the lower-triangular ones matrix A (theta = A q)"""
    return np.cumsum(v[::-1])[::-1]


def _pull_back_matrix(H: np.ndarray) -> np.ndarray:
    """A^T H A for the lower-triangular ones matrix A"""
    rows = np.cumsum(H[::-1, :], axis=0)[::-1, :]
    return np.cumsum(rows[:, ::-1], axis=1)[:, ::-1]


def mass_matrix(model: ChainModel, q: np.ndarray) -> np.ndarray:
    """Generalized mass matrix M(q), symmetric positive definite"""
    q = model.check_vector(q, "q")
    theta = _absolute(q)
    diff = theta[:, None] - theta[None, :]
    H = model._mu * np.cos(diff) + model._inertia_diag
    M = _pull_back_matrix(H)
    return 0.5 * (M + M.T)


def mass_matrix_derivatives(model: ChainModel, q: np.ndarray) -> np.ndarray:
    """dM/dq as an (n, n, n) array, last index is the differentiation variable"""
    q = model.check_vector(q, "q")
    n = model.n
    theta = _absolute(q)
    diff = theta[:, None] - theta[None, :]
    dH_base = -model._mu * np.sin(diff)
    out = np.zeros((n, n, n))
    for p in range(n):
        # dH/dtheta_p is nonzero only in row p and column p
        dH = np.zeros((n, n))
        dH[p, :] += dH_base[p, :]
        dH[:, p] -= dH_base[:, p]
        out[:, :, p] = _pull_back_matrix(dH)
    # theta_p depends on q_l for l <= p
    return np.cumsum(out[:, :, ::-1], axis=2)[:, :, ::-1]


def christoffel_symbols(model: ChainModel, q: np.ndarray) -> np.ndarray:
    """Gamma[i, j, k] = 1/2 (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i)"""
    dM = mass_matrix_derivatives(model, q)
    return 0.5 * (dM + dM.transpose(0, 2, 1) - dM.transpose(2, 0, 1))


def coriolis_matrix(model: ChainModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """C(q, qd) with C_ij = sum_k Gamma_ijk qd_k, so that C qd is the Coriolis vector"""
    qd = model.check_vector(qd, "qd")
    return christoffel_symbols(model, q) @ qd


def coriolis_vector(model: ChainModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """C(q, qd) qd in closed form"""
    q = model.check_vector(q, "q")
    qd = model.check_vector(qd, "qd")
    theta = _absolute(q)
    omega = _absolute(qd)
    diff = theta[:, None] - theta[None, :]
    h = (model._mu * np.sin(diff)) @ (omega ** 2)
    return _pull_back_vector(h)


def potential_energy(model: ChainModel, q: np.ndarray) -> float:
    q = model.check_vector(q, "q")
    theta = _absolute(q)
    return float(model.gravity * np.dot(model._beta, 1.0 - np.cos(theta)))


def gravity_vector(model: ChainModel, q: np.ndarray) -> np.ndarray:
    """P(q) = dV/dq"""
    q = model.check_vector(q, "q")
    theta = _absolute(q)
    return _pull_back_vector(model.gravity * model._beta * np.sin(theta))


def dynamics_terms(model: ChainModel, q: np.ndarray, qd: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """M(q), C(q, qd) qd and P(q) from a single trigonometric evaluation

    Same values as mass_matrix, coriolis_vector and gravity_vector. Inputs
    are not shape-checked; this is the integrator's per-stage call.
    """
    theta = _absolute(q)
    omega = _absolute(qd)
    diff = theta[:, None] - theta[None, :]
    mu = model._mu
    M = _pull_back_matrix(mu * np.cos(diff) + model._inertia_diag)
    Cqd = _pull_back_vector((mu * np.sin(diff)) @ (omega ** 2))
    P = _pull_back_vector(model.gravity * model._beta * np.sin(theta))
    return 0.5 * (M + M.T), Cqd, P


def unconstrained_accel(model: ChainModel, forces: ForceLaw, s: State) -> np.ndarray:
    """a = M^-1 (u - C qd - P - Q)"""
    M = mass_matrix(model, s.q)
    rhs = forces.u(model, s) - coriolis_vector(model, s.q, s.qd) - gravity_vector(model, s.q) - forces.Q(model, s)
    return cho_solve(cho_factor(M), rhs)


@dataclass(frozen=True)
class Energies:
    kinetic: float
    potential: float
    total: float


def kinetic_energy(M: np.ndarray, qd: np.ndarray) -> float:
    return float(0.5 * qd @ M @ qd)


def energies(model: ChainModel, s: State) -> Energies:
    qd = model.check_vector(s.qd, "qd")
    kinetic = kinetic_energy(mass_matrix(model, s.q), qd)
    potential = potential_energy(model, s.q)
    return Energies(kinetic=kinetic, potential=potential, total=kinetic + potential)


def link_points(model: ChainModel, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Joint positions (n+1, 2) and COM positions (n, 2) in the plane"""
    q = model.check_vector(q, "q")
    theta = _absolute(q)
    axis = np.stack([np.sin(theta), -np.cos(theta)], axis=1)
    lengths = np.array([link.length for link in model.links])
    offsets = np.array([link.com_offset for link in model.links])
    joints = np.vstack([np.zeros(2), np.cumsum(lengths[:, None] * axis, axis=0)])
    coms = joints[:-1] + offsets[:, None] * axis
    return joints, coms


def three_bar_pendulum(gravity: float = 9.81) -> ChainModel:
    """Three identical 1 m aluminium bars, 0.2 x 0.2 m section"""
    link = LinkParams(length=1.0, mass=108.0, com_offset=0.5, inertia_com=9.36)
    return ChainModel(links=(link, link, link), gravity=gravity)


def chain_from_dict(data: dict) -> ChainModel:
    links = [LinkParams(**link) for link in data["links"]]
    return ChainModel(links=tuple(links), gravity=data.get("gravity", 9.81))


if __name__ == "__main__":
    model = three_bar_pendulum()
    q0 = np.full(3, np.pi / 6)
    print("M(0) =\n", mass_matrix(model, np.zeros(3)))
    print("M(q0) =\n", mass_matrix(model, q0))
    print("P(q0) =", gravity_vector(model, q0))
    print("E(q0) =", energies(model, State(0.0, q0, np.zeros(3))))
