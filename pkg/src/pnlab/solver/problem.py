"""Problem and solver configuration types, the spatial operator and its Jacobian."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

from ..grid import Grid, GridFunction, laplacian_matrix, laplacian_values
from ..spaces import abs_pow

log = logging.getLogger(__name__)

Source = Callable[[float, Grid], np.ndarray]
JAC_MASK = 1e-12


class SolverFailure(RuntimeError):
    """A stepper could not produce an acceptable step after all retries."""


@dataclass(frozen=True)
class ProblemSpec:
    """u_t − |u|^ρ Δu + b₀|u|^{μ+1} = h on ``domain`` × (0, T], u = 0 on the boundary.

    Setting ``b`` (nodal array) selects the growth variant
    u_t − |u|^ρ Δu − b(x)|u|^{ρ+1} = 0, in which ``b0``, ``mu`` and ``h`` are
    ignored.
    """

    rho: float
    domain: Grid
    T: float
    mu: float = 0.0
    b0: float = 0.0
    h: Source | None = field(default=None, compare=False)
    u0: GridFunction | None = None
    b: np.ndarray | None = field(default=None, compare=False)
    label: str = ""

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        if self.u0 is None:
            object.__setattr__(self, "u0", self.domain.zeros())
        elif self.u0.grid != self.domain:
            raise ValueError("u0 must live on the problem domain")
        if self.b is not None:
            b = np.broadcast_to(np.asarray(self.b, dtype=float), self.domain.shape).copy()
            b.setflags(write=False)
            object.__setattr__(self, "b", b)

    @property
    def growth_variant(self) -> bool:
        return self.b is not None

    def source(self, t: float) -> np.ndarray:
        if self.h is None or self.growth_variant:
            return np.zeros(self.domain.shape)
        return np.broadcast_to(np.asarray(self.h(t, self.domain), dtype=float), self.domain.shape)

    def describe(self) -> dict:
        d = {
            "rho": self.rho, "mu": self.mu, "b0": self.b0, "T": self.T,
            "extents": list(self.domain.extents), "n_cells": list(self.domain.n_cells),
            "label": self.label,
        }
        if self.growth_variant:
            d["b_max"] = float(np.max(self.b))
            d["b_min"] = float(np.min(self.b))
        return d


def admissibility(spec: ProblemSpec) -> tuple[bool, str]:
    """min{0, ρ/2 − 1} <= μ < ρ <= 2, evaluated literally; logs the branch of the min taken."""
    rho, mu = spec.rho, spec.mu
    if rho / 2 - 1 < 0:
        branch = "rho<2: lower bound rho/2-1"
    else:
        branch = "rho>=2: lower bound 0"
    lower = min(0.0, rho / 2 - 1)
    ok = lower <= mu < rho <= 2
    log.info("admissibility %s (branch %s, rho=%g, mu=%g)", ok, branch, rho, mu)
    return ok, branch


Method = Literal["semi-implicit", "implicit-newton", "galerkin", "elliptic-regularized"]
METHODS = ("semi-implicit", "implicit-newton", "galerkin", "elliptic-regularized")


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 50
    damping: float = 0.5


@dataclass(frozen=True)
class SolverConfig:
    method: Method = "semi-implicit"
    dt: float = 1e-2
    newton: NewtonOptions = NewtonOptions()
    m: int = 8
    epsilon: float = 0.1
    epsilon_schedule: tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    spatial: Literal["fd", "galerkin"] = "fd"
    max_halvings: int = 10
    record_stride: int = 1
    monitor_blowup: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError(f"epsilon_schedule must be non-empty, positive and decreasing, got {sched}")
        object.__setattr__(self, "epsilon_schedule", sched)
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    def describe(self) -> dict:
        return {
            "method": self.method, "dt": self.dt, "m": self.m, "epsilon": self.epsilon,
            "epsilon_schedule": list(self.epsilon_schedule), "spatial": self.spatial,
            "newton": {"tol": self.newton.tol, "max_iter": self.newton.max_iter, "damping": self.newton.damping},
            "record_stride": self.record_stride,
        }


# ---------------------------------------------------------------------------
# spatial operator f(u) = −|u|^ρ Δu + R(u)


def reaction(u: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    if spec.growth_variant:
        return -spec.b * abs_pow(u, spec.rho + 1)
    if spec.b0 == 0:
        return np.zeros_like(u)
    return spec.b0 * abs_pow(u, spec.mu + 1)


def reaction_derivative(u: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    if spec.growth_variant:
        return -spec.b * (spec.rho + 1) * abs_pow(u, spec.rho) * np.sign(u)
    if spec.b0 == 0:
        return np.zeros_like(u)
    return spec.b0 * (spec.mu + 1) * abs_pow(u, spec.mu) * np.sign(u)


def spatial_operator(u: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    return -abs_pow(u, spec.rho) * laplacian_values(u, spec.domain.spacing) + reaction(u, spec)


def spatial_jacobian(u: np.ndarray, spec: ProblemSpec, A: sp.spmatrix | None = None) -> sp.csr_matrix:
    """d f / d u with ρ|u|^{ρ−1} sign(u) Δu set to 0 where |u| < 1e−12."""
    A = laplacian_matrix(spec.domain) if A is None else A
    flat = u.ravel()
    lap = A @ flat
    small = np.abs(flat) < JAC_MASK
    dcoef = np.where(small, 0.0, spec.rho * abs_pow(flat, spec.rho - 1) * np.sign(flat))
    diag = -dcoef * lap + reaction_derivative(flat, spec)
    return sp.csr_matrix(-sp.diags(abs_pow(flat, spec.rho)) @ A + sp.diags(diag))


def residual(u: GridFunction, spec: ProblemSpec, t: float) -> GridFunction:
    """f(u) − h(t) nodewise."""
    return u.with_values(spatial_operator(u.values, spec) - spec.source(t))


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectoryRecord:
    times: list[float]
    states: list[GridFunction]
    diagnostics: list[dict]
    status: str = "completed"
    message: str = ""
    coefficients: list[np.ndarray] | None = None
    monitor: object | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    def check(self) -> None:
        t = np.asarray(self.times)
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")


def l2q_norm(traj: TrajectoryRecord) -> float:
    """(∫₀ᵀ ‖u‖²_{L₂} dt)^{1/2} by the trapezoid rule."""
    dv = traj.states[0].grid.cell_volume
    sq = np.array([np.sum(s.values**2) * dv for s in traj.states])
    return float(np.sqrt(np.trapezoid(sq, traj.times)))


def _interp_states(traj: TrajectoryRecord, times: Sequence[float]) -> np.ndarray:
    t = np.asarray(traj.times)
    vals = traj.values().reshape(len(t), -1)
    out = np.empty((len(times), vals.shape[1]))
    for i, s in enumerate(times):
        j = int(np.clip(np.searchsorted(t, s), 1, len(t) - 1))
        w = (s - t[j - 1]) / (t[j] - t[j - 1])
        out[i] = (1 - w) * vals[j - 1] + w * vals[j]
    return out


def l2q_distance(a: TrajectoryRecord, b: TrajectoryRecord, relative: bool = True) -> float:
    """‖a − b‖_{L₂(Q)} on the time nodes of ``a`` (``b`` interpolated linearly in time)."""
    dv = a.states[0].grid.cell_volume
    va = a.values().reshape(len(a.times), -1)
    vb = _interp_states(b, a.times)
    diff = np.sqrt(np.trapezoid(np.sum((va - vb) ** 2, axis=1) * dv, a.times))
    if not relative:
        return float(diff)
    ref = l2q_norm(a)
    return float(diff / ref) if ref > 0 else float(diff)
