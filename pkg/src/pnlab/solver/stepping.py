"""
Backward-Euler based time steppers and the trajectory driver.

Every stepper advances by a requested ``dt``. When a step is rejected
(Newton non-convergence, or growth by more than a factor 2 in one step of the
growth variant) it is replaced by two half steps, recursively, at most
``max_halvings`` levels deep. Recorded times therefore stay on the nominal grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..grid import EigenPair, GridFunction, first_eigenpair, laplacian_matrix
from ..spaces import PnParams, abs_pow, s_delta_core
from .galerkin import GalerkinBasis
from .problem import (
    NewtonOptions,
    ProblemSpec,
    SolverConfig,
    SolverFailure,
    TrajectoryRecord,
    spatial_jacobian,
    spatial_operator,
)

log = logging.getLogger(__name__)


class StepRejected(RuntimeError):
    pass


class HalvingExhausted(SolverFailure):
    pass


@dataclass
class StepInfo:
    newton_iters: int = 0
    substeps: int = 0
    depth: int = 0


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


def _step_residual(u_new, u_old, spec, dt, t) -> float:
    r = (u_new - u_old) / dt + spatial_operator(u_new, spec) - spec.source(t)
    return float(np.sqrt(np.sum(r**2) * spec.domain.cell_volume))


# ---------------------------------------------------------------------------
# single steps


def _semi_implicit(u_n: np.ndarray, spec: ProblemSpec, dt: float, t: float, A=None) -> np.ndarray:
    """(I/dt − diag|u_n|^ρ Δ_h + diag(q)) u = u_n/dt + h(t) + explicit terms.

    ``q = b₀|u_n|^μ sign(u_n)`` where that is non-negative (implicit, keeps the
    M-matrix structure); elsewhere the reaction is taken explicitly. The
    growth-variant source is always explicit.
    """
    A = laplacian_matrix(spec.domain) if A is None else A
    flat = u_n.ravel()
    rhs = flat / dt + spec.source(t).ravel()
    diag = np.full(flat.shape, 1.0 / dt)
    if spec.growth_variant:
        rhs += spec.b.ravel() * abs_pow(flat, spec.rho + 1)
    elif spec.b0 != 0:
        q = spec.b0 * abs_pow(flat, spec.mu) * np.sign(flat)
        implicit = q >= 0
        diag += np.where(implicit, q, 0.0)
        rhs -= np.where(implicit, 0.0, spec.b0 * abs_pow(flat, spec.mu + 1))
    M = sp.diags(diag) - sp.diags(abs_pow(flat, spec.rho)) @ A
    try:
        out = spla.spsolve(sp.csc_matrix(M), rhs)
    except RuntimeError as exc:  # singular factor
        raise SolverFailure(f"semi-implicit system is singular: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise SolverFailure("semi-implicit step produced non-finite values")
    return out.reshape(u_n.shape)


def _newton(u_n: np.ndarray, spec: ProblemSpec, dt: float, t: float, opts: NewtonOptions, A=None, guess=None):
    A = laplacian_matrix(spec.domain) if A is None else A
    h = spec.source(t)
    I = sp.identity(u_n.size, format="csr")

    def F(u):
        return ((u - u_n) / dt + spatial_operator(u, spec) - h).ravel()

    u = u_n.copy() if guess is None else guess.copy()
    r = F(u)
    scale = max(1.0, float(np.max(np.abs(u_n))))
    for it in range(1, opts.max_iter + 1):
        J = I / dt + spatial_jacobian(u, spec, A)
        try:
            du = spla.spsolve(sp.csc_matrix(J), -r).reshape(u.shape)
        except RuntimeError as exc:
            raise StepRejected(f"singular Newton Jacobian: {exc}") from exc
        if not np.all(np.isfinite(du)):
            raise StepRejected("non-finite Newton update")
        lam, rn = 1.0, np.linalg.norm(r)
        while True:
            cand = u + lam * du
            rc = F(cand)
            if np.linalg.norm(rc) < rn or lam < 1e-4:
                break
            lam *= opts.damping
        u, r = cand, rc
        if np.max(np.abs(lam * du)) <= opts.tol * scale or np.max(np.abs(r)) * dt <= opts.tol * scale:
            return u, it
    raise StepRejected(f"Newton did not converge in {opts.max_iter} iterations")


def _galerkin_step(c_n: np.ndarray, basis: GalerkinBasis, spec: ProblemSpec, dt: float, t: float, opts: NewtonOptions):
    """Newton on ⟨u/dt + f(u) − u_n/dt − h, Lxᵏ⟩ = 0, k = 1..m, u = Σ c_k xᵏ."""
    lam = basis.eigenvalues
    dv = basis.grid.cell_volume
    h = spec.source(t).ravel()
    A = None

    def G(c):
        u = basis.synthesize(c)
        r = (u.ravel() - basis.synthesize(c_n).ravel()) / dt + spatial_operator(u, spec).ravel() - h
        return lam * (basis.modes @ r) * dv

    def jac(c):
        nonlocal A
        if basis.m <= 16:
            g0 = G(c)
            J = np.empty((basis.m, basis.m))
            for k in range(basis.m):
                step = 1e-7 * max(1.0, abs(c[k]))
                cp = c.copy()
                cp[k] += step
                J[:, k] = (G(cp) - g0) / step
            return J
        A = laplacian_matrix(basis.grid) if A is None else A
        Jf = sp.identity(basis.grid.size) / dt + spatial_jacobian(basis.synthesize(c), spec, A)
        return lam[:, None] * (basis.modes @ (Jf @ basis.modes.T)) * dv

    c = c_n.copy()
    g = G(c)
    scale = max(1.0, float(np.max(np.abs(c_n))))
    for it in range(1, opts.max_iter + 1):
        try:
            dc = np.linalg.solve(jac(c), -g)
        except np.linalg.LinAlgError as exc:
            raise StepRejected(f"singular Galerkin Jacobian: {exc}") from exc
        step, gn = 1.0, np.linalg.norm(g)
        while True:
            cand = c + step * dc
            gc = G(cand)
            if np.linalg.norm(gc) < gn or step < 1e-4:
                break
            step *= opts.damping
        c, g = cand, gc
        if np.max(np.abs(step * dc)) <= opts.tol * scale:
            return c, it
    raise StepRejected(f"Galerkin Newton did not converge in {opts.max_iter} iterations")


# ---------------------------------------------------------------------------
# adaptive wrappers


def _advance(state, t0: float, dt: float, single, max_halvings: int, growth_guard: bool, info: StepInfo, depth: int = 0):
    """Advance ``state`` from t0 to t0 + dt, splitting rejected steps in halves."""
    try:
        new, iters = single(state, dt, t0 + dt)
        if growth_guard:
            before, after = np.max(np.abs(state)), np.max(np.abs(new))
            if before > 0 and after > 2.0 * before:
                raise StepRejected(f"growth factor {after / before:.3g} in one step")
        info.newton_iters += iters
        info.substeps += 1
        info.depth = max(info.depth, depth)
        return new
    except StepRejected as exc:
        if depth >= max_halvings:
            raise HalvingExhausted(f"step rejected after {max_halvings} halvings at t={t0:.6g}: {exc}") from exc
        mid = _advance(state, t0, dt / 2, single, max_halvings, growth_guard, info, depth + 1)
        return _advance(mid, t0 + dt / 2, dt / 2, single, max_halvings, growth_guard, info, depth + 1)


def step_semi_implicit(u_n: GridFunction, spec: ProblemSpec, dt: float, t: float | None = None) -> GridFunction:
    """One lagged-coefficient step to time ``t`` (default ``dt``)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = dt if t is None else t
    return u_n.with_values(_semi_implicit(_vals(u_n), spec, dt, t))


def step_implicit_newton(u_n: GridFunction, spec: ProblemSpec, dt: float, t: float | None = None,
                         opts: NewtonOptions = NewtonOptions(), max_halvings: int = 10) -> GridFunction:
    """Fully implicit step; Newton failures trigger recursive halving, then :class:`SolverFailure`."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    t = dt if t is None else t
    A = laplacian_matrix(spec.domain)

    def single(u, h, tn):
        return _newton(u, spec, h, tn, opts, A, guess=_semi_implicit(u, spec, h, tn, A))

    return u_n.with_values(_advance(_vals(u_n), t - dt, dt, single, max_halvings, False, StepInfo()))


# ---------------------------------------------------------------------------
# trajectories


def _diagnostics(u: np.ndarray, spec: ProblemSpec, eig: EigenPair, core: PnParams) -> dict:
    dv = spec.domain.cell_volume
    gf = GridFunction(spec.domain, u)
    return {
        "phi": float(0.5 * np.sum(u * u) * dv),
        "s_delta_core": s_delta_core(gf, core),
        "max_abs": float(np.max(np.abs(u))),
        "v1_coeff": float(np.sum(u * eig.v1.values) * dv),
    }


def _time_grid(T: float, dt: float) -> np.ndarray:
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    return np.linspace(0.0, T, n + 1)


def run_trajectory(spec: ProblemSpec, config: SolverConfig, eig: EigenPair | None = None) -> TrajectoryRecord:
    """Drive the configured stepper from 0 to T with per-step diagnostics.

    The elliptic-regularized method returns the member for the smallest ε of
    the schedule.
    """
    from ..dynamics import BlowupMonitor  # dynamics depends on this module

    if config.method == "elliptic-regularized":
        from .regularized import solve_elliptic_regularized

        fam = solve_elliptic_regularized(spec, config)
        return fam.trajectories[min(fam.trajectories)]
    eig = first_eigenpair(spec.domain) if eig is None else eig
    core = PnParams(spec.rho, 2.0)
    times = _time_grid(spec.T, config.dt)
    A = laplacian_matrix(spec.domain)
    opts = config.newton

    basis = None
    if config.method == "galerkin":
        basis = GalerkinBasis.build(spec.domain, config.m)
        state = basis.project(spec.u0)

        def single(c, h, tn):
            return _galerkin_step(c, basis, spec, h, tn, opts)

        def to_grid(c):
            return basis.synthesize(c)
    else:
        state = spec.u0.values.copy()
        if config.method == "semi-implicit":
            def single(u, h, tn):
                return _semi_implicit(u, spec, h, tn, A), 0
        else:
            def single(u, h, tn):
                return _newton(u, spec, h, tn, opts, A, guess=_semi_implicit(u, spec, h, tn, A))

        def to_grid(u):
            return u

    u = to_grid(state)
    monitor = BlowupMonitor(spec.u0, eig.v1, spec.rho) if config.monitor_blowup else None
    rec_t, rec_s, rec_c, diags = [0.0], [GridFunction(spec.domain, u)], [], []
    if basis is not None:
        rec_c.append(state.copy())
    d0 = {"t": 0.0, "dt": 0.0, **_diagnostics(u, spec, eig, core), "newton_iters": 0, "substeps": 0,
          "step_residual": 0.0, "bochner": 0.0}
    diags.append(d0)
    if monitor is not None:
        monitor.update(0.0, spec.u0)
    p = spec.rho + 2
    acc, prev_core = 0.0, d0["s_delta_core"] ** p
    status, message = "completed", ""
    growth_guard = spec.growth_variant and config.method == "semi-implicit"
    for k in range(1, len(times)):
        t0, t1 = times[k - 1], times[k]
        info = StepInfo()
        try:
            new = _advance(state, t0, t1 - t0, single, config.max_halvings, growth_guard, info)
        except HalvingExhausted as exc:
            if spec.growth_variant:
                status, message = "blow-up-detected", str(exc)
            else:
                status, message = "solver-failure", str(exc)
            break
        except SolverFailure as exc:
            status, message = "solver-failure", str(exc)
            break
        u_old = to_grid(state)
        state = new
        u = to_grid(state)
        d = {"t": float(t1), "dt": float(t1 - t0), **_diagnostics(u, spec, eig, core),
             "newton_iters": info.newton_iters, "substeps": info.substeps,
             "step_residual": _step_residual(u, u_old, spec, t1 - t0, t1)}
        cur = d["s_delta_core"] ** p
        acc += 0.5 * (prev_core + cur) * (t1 - t0)
        prev_core = cur
        d["bochner"] = float(acc ** (1.0 / p))
        diags.append(d)
        if k % config.record_stride == 0 or k == len(times) - 1:
            rec_t.append(float(t1))
            rec_s.append(GridFunction(spec.domain, u))
            if basis is not None:
                rec_c.append(state.copy())
        if monitor is not None and monitor.update(float(t1), GridFunction(spec.domain, u)) != "ok":
            status, message = "blow-up-detected", monitor.message
            break
    if rec_t[-1] != diags[-1]["t"]:  # stopped between strides: keep the last accepted state
        rec_t.append(diags[-1]["t"])
        rec_s.append(GridFunction(spec.domain, to_grid(state)))
        if basis is not None:
            rec_c.append(state.copy())
    return TrajectoryRecord(rec_t, rec_s, diags, status, message, rec_c if basis is not None else None, monitor)


def solve_galerkin(spec: ProblemSpec, config: SolverConfig, eig: EigenPair | None = None) -> TrajectoryRecord:
    """Spectral Galerkin trajectory with ``config.m`` modes."""
    if config.method != "galerkin":
        config = SolverConfig(**{**config.__dict__, "method": "galerkin"})
    return run_trajectory(spec, config, eig)
