"""
Elliptic regularization in time:

    −ε x″ + x′ + f(t, x) = y,    x(0) = x₀,    x′(T) = 0,

discretised by central differences on a uniform time grid with a
second-order one-sided Neumann row at t = T, and solved as one global
space–time system by damped Newton. The ε schedule is traversed by
continuation, each solve warm-started from the previous one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..grid import GridFunction, laplacian_matrix
from .galerkin import GalerkinBasis
from .problem import ProblemSpec, SolverConfig, TrajectoryRecord, spatial_jacobian, spatial_operator
from .stepping import _time_grid, run_trajectory

log = logging.getLogger(__name__)

MAX_UNKNOWNS = 100_000


@dataclass
class RegularizedFamily:
    """Trajectories keyed by ε, in the order they were solved."""

    trajectories: dict[float, TrajectoryRecord] = field(default_factory=dict)
    newton_iters: dict[float, int] = field(default_factory=dict)
    status: str = "completed"
    message: str = ""

    @property
    def epsilons(self) -> list[float]:
        return list(self.trajectories)


class _FD:
    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.A = laplacian_matrix(spec.domain)
        self.dim = spec.domain.size

    def lift(self, u: np.ndarray) -> np.ndarray:
        return u.ravel()

    def to_grid(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.spec.domain.shape)

    def F(self, x, t):
        u = self.to_grid(x)
        return (spatial_operator(u, self.spec) - self.spec.source(t)).ravel()

    def J(self, x):
        return spatial_jacobian(self.to_grid(x), self.spec, self.A)


class _Modal:
    """Projection onto the first m eigenmodes; equations paired with xᵏ (the λ_k weights of the
    Lxᵏ pairing scale rows only and do not change the solution)."""

    def __init__(self, spec: ProblemSpec, m: int):
        self.spec = spec
        self.basis = GalerkinBasis.build(spec.domain, m)
        self.A = laplacian_matrix(spec.domain)
        self.dim = m
        self.dv = spec.domain.cell_volume

    def lift(self, u: np.ndarray) -> np.ndarray:
        return self.basis.project(u)

    def to_grid(self, c: np.ndarray) -> np.ndarray:
        return self.basis.synthesize(c)

    def F(self, c, t):
        u = self.to_grid(c)
        r = spatial_operator(u, self.spec) - self.spec.source(t)
        return self.basis.modes @ r.ravel() * self.dv

    def J(self, c):
        Jf = spatial_jacobian(self.to_grid(c), self.spec, self.A)
        return sp.csr_matrix(self.basis.modes @ (Jf @ self.basis.modes.T) * self.dv)


def _time_operator(N: int, dt: float, eps: float) -> tuple[sp.csr_matrix, float, float]:
    """Matrix over unknowns x_1..x_N plus the coefficients multiplying x_0 in rows 1 and N."""
    lo = -eps / dt**2 - 1.0 / (2 * dt)
    mid = 2 * eps / dt**2
    hi = -eps / dt**2 + 1.0 / (2 * dt)
    T = sp.lil_matrix((N, N))
    for r in range(N - 1):  # interior time j = r + 1
        if r >= 1:
            T[r, r - 1] = lo
        T[r, r] = mid
        T[r, r + 1] = hi
    T[N - 1, N - 1] = 3.0 / (2 * dt)
    T[N - 1, N - 2] = -4.0 / (2 * dt)
    x0_last = 0.0
    if N >= 3:
        T[N - 1, N - 3] = 1.0 / (2 * dt)
    else:
        x0_last = 1.0 / (2 * dt)
    return T.tocsr(), lo, x0_last


def _solve_space_time(op, x0: np.ndarray, times: np.ndarray, eps: float, guess: np.ndarray, newton) -> tuple[np.ndarray, int]:
    N = len(times) - 1
    d = op.dim
    dt = times[1] - times[0]
    Tt, x0_first, x0_last = _time_operator(N, dt, eps)
    K = sp.kron(Tt, sp.identity(d), format="csr")
    const = np.zeros(N * d)
    const[:d] += x0_first * x0
    const[(N - 1) * d:] += x0_last * x0

    def R(X):
        blocks = X.reshape(N, d)
        out = K @ X + const
        fx = np.concatenate([op.F(blocks[j], times[j + 1]) for j in range(N - 1)] + [np.zeros(d)])
        return out + fx

    X = guess.copy()
    r = R(X)
    scale = max(1.0, float(np.max(np.abs(X))))
    for it in range(1, newton.max_iter + 1):
        blocks = X.reshape(N, d)
        Jd = sp.block_diag([op.J(blocks[j]) for j in range(N - 1)] + [sp.csr_matrix((d, d))], format="csr")
        dX = spla.spsolve(sp.csc_matrix(K + Jd), -r)
        if not np.all(np.isfinite(dX)):
            raise RuntimeError("non-finite Newton update in space-time solve")
        lam, rn = 1.0, np.linalg.norm(r)
        while True:
            cand = X + lam * dX
            rc = R(cand)
            if np.linalg.norm(rc) < rn or lam < 1e-4:
                break
            lam *= newton.damping
        X, r = cand, rc
        if np.max(np.abs(lam * dX)) <= newton.tol * scale:
            return X, it
    raise RuntimeError(f"space-time Newton did not converge in {newton.max_iter} iterations (eps={eps})")


def solve_elliptic_regularized(spec: ProblemSpec, config: SolverConfig, guess: TrajectoryRecord | None = None) -> RegularizedFamily:
    """Solve along ``config.epsilon_schedule``; ``config.spatial`` selects grid ("fd") or m-mode unknowns."""
    times = _time_grid(spec.T, config.dt)
    N = len(times) - 1
    if N < 2:
        raise ValueError("need at least two time steps")
    op = _Modal(spec, config.m) if config.spatial == "galerkin" else _FD(spec)
    if N * op.dim > MAX_UNKNOWNS:
        raise ValueError(f"space-time system has {N * op.dim} unknowns, above the cap of {MAX_UNKNOWNS}")
    x0 = op.lift(spec.u0.values)
    if guess is None:
        ts_cfg = SolverConfig(method="semi-implicit", dt=config.dt, monitor_blowup=False)
        guess = run_trajectory(spec, ts_cfg)
    if len(guess.times) == N + 1:
        X = np.concatenate([op.lift(s.values) for s in guess.states[1:]])
    else:
        X = np.tile(x0, N)
    fam = RegularizedFamily()
    for eps in config.epsilon_schedule:
        try:
            X, iters = _solve_space_time(op, x0, times, eps, X, config.newton)
        except RuntimeError as exc:
            fam.status, fam.message = "solver-failure", str(exc)
            log.warning("elliptic regularization stopped at eps=%g: %s", eps, exc)
            break
        blocks = X.reshape(N, op.dim)
        states = [spec.u0] + [GridFunction(spec.domain, op.to_grid(b)) for b in blocks]
        coefs = [x0] + list(blocks) if config.spatial == "galerkin" else None
        diags = [{"t": float(t), "epsilon": eps} for t in times]
        fam.trajectories[eps] = TrajectoryRecord([float(t) for t in times], states, diags, "completed", "", coefs)
        fam.newton_iters[eps] = iters
    return fam


# ---------------------------------------------------------------------------
# scalar case


def solve_scalar_two_point(f0: np.ndarray, times: np.ndarray, eps: float) -> np.ndarray:
    """Discrete solution of −εx″ + x′ = f₀, x(0) = 0, x′(T) = 0 on a uniform grid."""
    times = np.asarray(times, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    N = len(times) - 1
    dt = times[1] - times[0]
    Tt, _, _ = _time_operator(N, dt, eps)
    rhs = np.concatenate([f0[1:N], [0.0]])
    x = spla.spsolve(sp.csc_matrix(Tt), rhs)
    return np.concatenate([[0.0], x])


def regularized_kernel_velocity(f0: np.ndarray, epsilon: float, t: float | np.ndarray, times: np.ndarray | None = None) -> np.ndarray:
    """dx/dt(t) = (1/ε) ∫₀^{T−t} f₀(T−τ) exp{−(T−t−τ)/ε} dτ.

    ``f0`` is a time series on ``times`` (default: uniform on [0, 1]),
    interpolated linearly; the kernel integral of each linear piece is exact.
    """
    f0 = np.asarray(f0, dtype=float)
    times = np.linspace(0.0, 1.0, len(f0)) if times is None else np.asarray(times, dtype=float)
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(ts)
    for i, tt in enumerate(ts):
        # substitute s = T − τ: (1/ε) ∫_t^T f₀(s) e^{−(s−t)/ε} ds
        knots = np.concatenate([[tt], times[times > tt]])
        vals = np.interp(knots, times, f0)
        a, b = knots[:-1], knots[1:]
        fa, fb = vals[:-1], vals[1:]
        ea, eb = np.exp(-(a - tt) / epsilon), np.exp(-(b - tt) / epsilon)
        I0 = epsilon * (ea - eb)
        I1 = -epsilon * (b - a) * eb + epsilon * I0
        slope = np.where(b > a, (fb - fa) / np.where(b > a, b - a, 1.0), 0.0)
        out[i] = np.sum(fa * I0 + slope * I1) / epsilon
    return out[0] if scalar else out


def linear_mode_closed_form(lam: float, eps: float, y: float, T: float, t: np.ndarray) -> np.ndarray:
    """Solution of −εc″ + c′ + λc = y, c(0) = 0, c′(T) = 0 for constant y."""
    t = np.asarray(t, dtype=float)
    disc = np.sqrt(1 + 4 * eps * lam)
    r1 = (1 + disc) / (2 * eps)  # growing root, written relative to T
    r2 = (1 - disc) / (2 * eps)
    # c = y/λ + A e^{r1 (t−T)} + B e^{r2 t}
    e1 = np.exp(-r1 * T)
    e2 = np.exp(r2 * T)
    M = np.array([[e1, 1.0], [r1, r2 * e2]])
    A, B = np.linalg.solve(M, [-y / lam, 0.0])
    return y / lam + A * np.exp(r1 * (t - T)) + B * np.exp(r2 * t)
