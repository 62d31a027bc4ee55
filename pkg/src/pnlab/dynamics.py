"""
Long-time behaviour: the energy Φ(t) = ½‖u(t)‖², the Ghidaglia–Gronwall
bound, the decay envelope, the bounded / blow-up regime dichotomy and a
streaming blow-up monitor.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.integrate import solve_ivp

from .grid import EigenPair, GridFunction
from .solver.problem import ProblemSpec, TrajectoryRecord

BLOWUP_FACTOR = 1e6
GHIDAGLIA_MARGIN = 1e-8


def phi(u: GridFunction) -> float:
    return float(0.5 * np.sum(u.values**2) * u.grid.cell_volume)


# ---------------------------------------------------------------------------
# Ghidaglia's lemma


@dataclass(frozen=True)
class GronwallParams:
    """Constants of y′ + θ yˡ <= η."""

    theta: float
    l: float
    eta_const: float = 0.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not self.l > 1:
            raise ValueError(f"l must exceed 1, got {self.l}")
        if self.eta_const < 0:
            raise ValueError(f"eta_const must be non-negative, got {self.eta_const}")


def ghidaglia_bound(p: GronwallParams, t: float | np.ndarray) -> float | np.ndarray:
    """(η/θ)^{1/l} + (θ(l−1)t)^{−1/(l−1)}."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("bound is only defined for t > 0")
    out = (p.eta_const / p.theta) ** (1.0 / p.l) + (p.theta * (p.l - 1) * t) ** (-1.0 / (p.l - 1))
    return float(out) if out.ndim == 0 else out


@dataclass
class GhidagliaReport:
    params: GronwallParams
    y0: float
    T: float
    times: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    violations: int
    min_margin: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_ghidaglia(p: GronwallParams, y0: float, T: float, t0: float = 1e-3, n_samples: int = 200,
                     margin: float = GHIDAGLIA_MARGIN) -> GhidagliaReport:
    """Integrate the extremal ODE y′ = η − θyˡ from y(0) = y0 and compare with the bound on [t0, T].

    Integration starts at 0 (not t0): the bound holds for the solution issued
    from t = 0, and starting a large y0 at t0 would exceed the bound there.
    """
    if not y0 > 0:
        raise ValueError("y0 must be positive")
    ts = np.geomspace(t0, T, n_samples)

    def rhs(_, y):
        return [p.eta_const - p.theta * max(y[0], 0.0) ** p.l]

    sol = solve_ivp(rhs, (0.0, T), [y0], method="RK45", t_eval=ts, rtol=1e-11, atol=1e-13)
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    y = sol.y[0]
    bound = ghidaglia_bound(p, ts)
    gap = bound + margin - y
    return GhidagliaReport(p, y0, T, ts, y, bound, int(np.sum(gap < 0)), float(np.min(bound - y)))


def random_ghidaglia_sweep(n: int = 100, seed: int = 0, T: float = 10.0) -> list[GhidagliaReport]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        p = GronwallParams(
            theta=float(10 ** rng.uniform(-1, 1)),
            l=float(rng.uniform(1.2, 4.0)),
            eta_const=float(rng.uniform(0, 10)) if rng.random() < 0.75 else 0.0,
        )
        out.append(verify_ghidaglia(p, float(10 ** rng.uniform(-2, 3)), T))
    return out


# ---------------------------------------------------------------------------
# decay


@dataclass
class DecayRecord:
    times: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    slope: float
    expected_slope: float | None
    plateau: float
    amplitude: float
    C1: float
    C_forcing: float
    envelope: np.ndarray = field(repr=False)
    envelope_violation: bool
    status: str  # pass | fail | inconclusive | fitted
    trajectory_status: str = "completed"

    def verdict(self) -> dict:
        return {
            "slope": self.slope, "expected_slope": self.expected_slope, "plateau": self.plateau,
            "amplitude": self.amplitude, "C1": self.C1, "C_forcing": self.C_forcing,
            "envelope_violation": self.envelope_violation, "status": self.status,
            "trajectory_status": self.trajectory_status,
        }


def tail_slope(times: np.ndarray, values: np.ndarray, min_samples: int = 20) -> float | None:
    """Least-squares slope of log values vs log t over the last decade of t; None if too short."""
    times, values = np.asarray(times), np.asarray(values)
    T = times[-1]
    sel = (times >= T / 10) & (times > 0) & (values > 0)
    if times[times > 0].min(initial=T) > T / 10 or np.sum(sel) < min_samples:
        return None
    return float(np.polyfit(np.log(times[sel]), np.log(values[sel]), 1)[0])


def decay_study(traj: TrajectoryRecord, spec: ProblemSpec, tol: float = 0.3, burn_in: float | None = None,
                envelope_tol: float = 1e-9) -> DecayRecord:
    """Fit the decay of Φ along a trajectory.

    The envelope ‖u‖² <= P + K t^{−2/ρ} is fitted past the burn-in (P = 0 for
    unforced runs, else the tail mean of ‖u‖²); K maps to C₁ = (2/ρ)K^{−ρ/2} and
    the forcing constant C + C₂‖h‖^q = C₁ P^{p/2} with p = ρ + 2.
    """
    t = np.array([d["t"] for d in traj.diagnostics])
    ph = np.array([d["phi"] for d in traj.diagnostics])
    rho = spec.rho
    forced = spec.h is not None or spec.b0 != 0 or spec.growth_variant
    expected = None if forced else -2.0 / rho
    slope = tail_slope(t, ph)
    burn_in = min(1.0, t[-1] / 10) if burn_in is None else burn_in
    sq = 2 * ph
    past = t >= burn_in
    plateau = float(np.mean(sq[t >= t[-1] / 10])) if forced else 0.0
    excess = np.clip(sq[past] - plateau, 0, None) * t[past] ** (2 / rho)
    K = float(np.max(excess)) if excess.size else 0.0
    env = np.full_like(t, np.inf)
    env[t > 0] = plateau + K * t[t > 0] ** (-2 / rho)
    violation = bool(np.any(sq[past] > env[past] * (1 + envelope_tol) + 1e-300))
    C1 = (2 / rho) * K ** (-rho / 2) if K > 0 else math.inf
    C_forcing = C1 * plateau ** ((rho + 2) / 2) if np.isfinite(C1) else 0.0
    if slope is None:
        status = "inconclusive"
    elif expected is None:
        status = "fitted"
    else:
        status = "pass" if abs(slope - expected) <= tol else "fail"
    return DecayRecord(t, ph, float("nan") if slope is None else slope, expected, plateau, K, C1, C_forcing,
                       env, violation, status, traj.status)


# ---------------------------------------------------------------------------
# regime classification


@dataclass(frozen=True)
class BlowupCriterion:
    M: float
    lambda1: float
    regime: str  # bounded | indeterminate | blow-up-candidate
    delta: float
    b_sup: float
    b_inf: float

    def to_dict(self) -> dict:
        return asdict(self)


def growth_coefficient(spec: ProblemSpec) -> np.ndarray:
    """b(x) of u_t − |u|^ρΔu − b|u|^{ρ+1} = 0; the base form with μ = ρ maps to b = −b₀."""
    if spec.growth_variant:
        return np.asarray(spec.b)
    if spec.mu == spec.rho:
        return np.full(spec.domain.shape, -spec.b0)
    raise ValueError("regime classification needs the growth form (mu = rho or an explicit b(x))")


def classify_regime(spec: ProblemSpec, eig: EigenPair, b: np.ndarray | None = None) -> BlowupCriterion:
    """Bounded if M = ‖b‖∞(ρ+2)²/(4(ρ+1)) < λ₁; blow-up candidate if inf b − λ₁ > 0 and u₀ > 0."""
    b = growth_coefficient(spec) if b is None else np.asarray(b, dtype=float)
    rho = spec.rho
    lam = eig.lambda1
    c = float(np.max(np.abs(b)))
    M = c * (rho + 2) ** 2 / (4 * (rho + 1))
    delta = float(np.min(b)) - lam
    if M < lam:
        regime = "bounded"
    elif delta > 0 and np.all(spec.u0.values > 0):
        regime = "blow-up-candidate"
    else:
        regime = "indeterminate"
    return BlowupCriterion(M, lam, regime, delta, c, float(np.min(b)))


# ---------------------------------------------------------------------------
# blow-up monitoring


def positive_functional(u: GridFunction, v1: GridFunction, rho: float, rel: float = 1e-8) -> float:
    """(1−ρ)⁻¹⟨u^{1−ρ}, v₁⟩ over nodes with u > rel·max u; ⟨log u, v₁⟩ at ρ = 1."""
    vals = u.values
    peak = np.max(vals)
    if peak <= 0:
        return float("nan")
    keep = vals > rel * peak
    if rho == 1:
        w = np.where(keep, np.log(np.where(keep, vals, 1.0)), 0.0)
    else:
        w = np.where(keep, np.where(keep, vals, 1.0) ** (1 - rho), 0.0) / (1 - rho)
    return float(np.sum(w * v1.values) * u.grid.cell_volume)


class BlowupMonitor:
    """Streaming check: blow-up once max|u| exceeds ``factor`` times the reference amplitude.

    The reference is max|u₀|, or 1 when u₀ ≡ 0.
    """

    def __init__(self, u0: GridFunction, v1: GridFunction, rho: float, factor: float = BLOWUP_FACTOR):
        self.v1 = v1
        self.rho = rho
        ref = u0.max_abs()
        self.reference = ref if ref > 0 else 1.0
        self.threshold = factor * self.reference
        self.times: list[float] = []
        self.v1_coeff: list[float] = []
        self.max_abs: list[float] = []
        self.functional: list[float] = []
        self.status = "ok"
        self.t_star: float | None = None
        self.message = ""

    def update(self, t: float, u: GridFunction) -> str:
        self.times.append(t)
        self.v1_coeff.append(float(np.sum(u.values * self.v1.values) * u.grid.cell_volume))
        self.max_abs.append(u.max_abs())
        self.functional.append(positive_functional(u, self.v1, self.rho) if np.all(u.values >= 0) else float("nan"))
        if self.status == "ok" and self.max_abs[-1] > self.threshold:
            self.status = "blow-up"
            self.t_star = t
            self.message = f"max|u| = {self.max_abs[-1]:.3e} exceeds {self.threshold:.3e} at t = {t:.6g}"
        return self.status

    def monotone_growth(self) -> bool:
        c = np.asarray(self.v1_coeff)
        return bool(len(c) > 1 and np.all(np.diff(c) > 0))


@dataclass
class BlowupStatus:
    status: str  # blow-up-detected | bounded | solver-failure
    t_star: float | None
    monotone_v1_growth: bool
    sup_phi: float
    times: list[float] = field(repr=False)
    v1_coeff: list[float] = field(repr=False)
    functional: list[float] = field(repr=False)

    def verdict(self) -> dict:
        return {"status": self.status, "t_star": self.t_star, "monotone_v1_growth": self.monotone_v1_growth,
                "sup_phi": self.sup_phi}


def detect_blowup(states: Iterable[tuple[float, GridFunction]] | TrajectoryRecord, v1: GridFunction, rho: float,
                  u0: GridFunction | None = None) -> BlowupStatus:
    """Run a :class:`BlowupMonitor` over streamed ``(t, u)`` pairs or a finished trajectory.

    For a trajectory that was itself stopped by a halving cascade, the recorded
    termination status is honoured.
    """
    pending = None
    if isinstance(states, TrajectoryRecord):
        pending = states.status
        states = zip(states.times, states.states)
    mon = None
    sup_phi = 0.0
    for t, u in states:
        if mon is None:
            mon = BlowupMonitor(u0 if u0 is not None else u, v1, rho)
        sup_phi = max(sup_phi, phi(u))
        if mon.update(t, u) != "ok":
            break
    if mon is None:
        raise ValueError("no states supplied")
    if mon.status != "ok":
        status, t_star = "blow-up-detected", mon.t_star
    elif pending == "blow-up-detected":
        status, t_star = "blow-up-detected", mon.times[-1]
    elif pending == "solver-failure":
        status, t_star = "solver-failure", None
    else:
        status, t_star = "bounded", None
    return BlowupStatus(status, t_star, mon.monotone_growth(), sup_phi, mon.times, mon.v1_coeff, mon.functional)


# ---------------------------------------------------------------------------
# outputs


def write_decay_csv(rec: DecayRecord, v1_coeff: Iterable[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "phi", "envelope", "v1_coeff"])
        for t, p, e, c in zip(rec.times, rec.phi, rec.envelope, v1_coeff):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(e)), repr(float(c))])


def write_blowup_csv(status: BlowupStatus, phis: Iterable[float], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "phi", "v1_coeff", "functional"])
        for t, p, c, f in zip(status.times, phis, status.v1_coeff, status.functional):
            w.writerow([repr(float(t)), repr(float(p)), repr(float(c)), repr(float(f))])


def write_verdict(verdict: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_jsonable(verdict), indent=2, sort_keys=True) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x
