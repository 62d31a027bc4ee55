"""
Seminorms, transforms and metrics of the weighted function classes

    S_1(α, β):  [u]^{α+β} = ∫ |u|^{α+β} + |u|^α |∇u|^β
    S_Δ(α, β):  [u]^{α+β} = [u]^{α₁+β₁}_{S_1(α₁, β₁)} + ∫ |u|^α |Δu|^β,   α₁+β₁ = α+β

evaluated with the discrete operators of :mod:`pnlab.grid`. All seminorms are
returned as the (α+β)-th root, so they are homogeneous of degree one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .grid import GridFunction, grad_norm_values, gradient_values, laplacian_values


class ParameterError(ValueError):
    """Exponents outside the admissible range of an operation."""


@dataclass(frozen=True)
class PnParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.beta < 1:
            raise ParameterError(f"beta must be >= 1, got {self.beta}")
        if self.alpha / self.beta <= -1:
            raise ParameterError(f"alpha/beta must exceed -1, got {self.alpha}/{self.beta}")

    @property
    def rho(self) -> float:
        return self.alpha / self.beta

    @property
    def degree(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class BochnerParams:
    p: float
    space: PnParams
    space1: PnParams | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError(f"time exponent p must be >= 1, got {self.p}")


def abs_pow(x: np.ndarray, s: float) -> np.ndarray:
    """|x|^s with 0^0 = 1 and 0^s = 0 for s > 0."""
    x = np.abs(np.asarray(x, dtype=float))
    if s == 0:
        return np.ones_like(x)
    if s > 0:
        return x**s
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = x[nz] ** s
    return out


def signed_pow(x: np.ndarray, s: float) -> np.ndarray:
    """|x|^s · x for s > -1, equal to 0 where x = 0."""
    x = np.asarray(x, dtype=float)
    return abs_pow(x, s) * x


def eta_transform(u: GridFunction, params: PnParams) -> GridFunction:
    return u.with_values(signed_pow(u.values, params.rho))


def eta_inverse(v: GridFunction, params: PnParams) -> GridFunction:
    return v.with_values(signed_pow(v.values, -params.alpha / (params.alpha + params.beta)))


def _dv(u: GridFunction) -> float:
    return u.grid.cell_volume


def power_integral(u: GridFunction, s: float) -> float:
    """∫ |u|^s."""
    return float(np.sum(abs_pow(u.values, s)) * _dv(u))


def gradient_integral(u: GridFunction, a: float, b: float) -> float:
    """∫ |u|^a |∇u|^b."""
    g = grad_norm_values(u.values, u.grid.spacing)
    return float(np.sum(abs_pow(u.values, a) * abs_pow(g, b)) * _dv(u))


def laplacian_integral(u: GridFunction, a: float, b: float) -> float:
    """∫ |u|^a |Δu|^b."""
    lap = laplacian_values(u.values, u.grid.spacing)
    return float(np.sum(abs_pow(u.values, a) * abs_pow(lap, b)) * _dv(u))


def s1_seminorm(u: GridFunction, params: PnParams) -> float:
    a, b = params.alpha, params.beta
    total = power_integral(u, a + b) + gradient_integral(u, a, b)
    return total ** (1.0 / (a + b))


def _check_pair(params: PnParams, params1: PnParams | None) -> PnParams:
    if params1 is None:
        return params
    if not np.isclose(params1.degree, params.degree, rtol=0, atol=1e-12):
        raise ParameterError(
            f"alpha1+beta1 = {params1.degree} must equal alpha+beta = {params.degree}"
        )
    return params1


def s_delta_seminorm(u: GridFunction, params: PnParams, params1: PnParams | None = None) -> float:
    """Full S_Δ seminorm; ``params1`` defaults to ``params``."""
    p1 = _check_pair(params, params1)
    total = s1_seminorm(u, p1) ** p1.degree + laplacian_integral(u, params.alpha, params.beta)
    return total ** (1.0 / params.degree)


def s_delta_core(u: GridFunction, params: PnParams) -> float:
    """(∫ |u|^α |Δu|^β)^{1/(α+β)}; with (α, β) = (ρ, 2) this is the S⁰_{Δ,ρ,2} seminorm."""
    return laplacian_integral(u, params.alpha, params.beta) ** (1.0 / params.degree)


SeminormKind = Literal["s1", "s_delta", "s_delta_core"]


def spatial_seminorm(u: GridFunction, which: SeminormKind, params: PnParams, params1: PnParams | None = None) -> float:
    if which == "s1":
        return s1_seminorm(u, params)
    if which == "s_delta":
        return s_delta_seminorm(u, params, params1)
    if which == "s_delta_core":
        return s_delta_core(u, params)
    raise ValueError(f"unknown seminorm {which!r}")


def bochner_seminorm(traj, bp: BochnerParams, which: SeminormKind = "s_delta_core") -> float:
    """(∫₀ᵀ [u(t)]^p dt)^{1/p} by the trapezoid rule over the recorded times.

    ``traj`` is anything with ``times`` and ``states`` sequences (a
    :class:`pnlab.solver.TrajectoryRecord` in practice).
    """
    times = np.asarray(traj.times, dtype=float)
    if len(times) < 2 or len(traj.states) != len(times):
        raise ValueError("need at least two time samples with matching states")
    vals = np.array([spatial_seminorm(s, which, bp.space, bp.space1) ** bp.p for s in traj.states])
    return float(np.trapezoid(vals, times) ** (1.0 / bp.p))


def w1_norm(values: np.ndarray, spacing: Sequence[float], beta: float, dv: float) -> float:
    """Discrete W¹_β norm (∫|v|^β + ∫|∇v|^β)^{1/β}."""
    g = grad_norm_values(values, spacing)
    return float((np.sum(np.abs(values) ** beta + g**beta) * dv) ** (1.0 / beta))


def lp_norm(values: np.ndarray, beta: float, dv: float) -> float:
    return float((np.sum(np.abs(values) ** beta) * dv) ** (1.0 / beta))


def _same_grid(u: GridFunction, w: GridFunction) -> None:
    if u.grid != w.grid:
        raise ValueError("metric arguments must share a grid")


MetricKind = Literal["full", "s0"]


def metric_s1(u: GridFunction, w: GridFunction, params: PnParams, kind: MetricKind = "full") -> float:
    """Distance in S_1(α, β).

    ``full``: ‖η(u) − η(w)‖_{W¹_β}^{1/(ρ+1)};
    ``s0``:   ‖ |u|^ρ ∇u − |w|^ρ ∇w ‖_{L_β}^{1/(ρ+1)} (zero-trace variant).
    """
    _same_grid(u, w)
    rho, beta = params.rho, params.beta
    h, dv = u.grid.spacing, u.grid.cell_volume
    if kind == "full":
        diff = signed_pow(u.values, rho) - signed_pow(w.values, rho)
        return w1_norm(diff, h, beta, dv) ** (1.0 / (rho + 1.0))
    if kind == "s0":
        gu = gradient_values(u.values, h)
        gw = gradient_values(w.values, h)
        au, aw = abs_pow(u.values, rho), abs_pow(w.values, rho)
        mag = np.sqrt(sum((au * cu - aw * cw) ** 2 for cu, cw in zip(gu, gw)))
        return lp_norm(mag, beta, dv) ** (1.0 / (rho + 1.0))
    raise ValueError(f"unknown metric kind {kind!r}")


def metric_s_delta(
    u: GridFunction,
    w: GridFunction,
    params: PnParams,
    params1: PnParams | None = None,
    kind: MetricKind = "full",
) -> float:
    """Distance in S_Δ(α, β): ‖|u|^ρΔu − |w|^ρΔw‖_{L_β}^{1/(ρ+1)}, plus the η₁ W¹_{β₁} term for ``full``."""
    _same_grid(u, w)
    p1 = _check_pair(params, params1)
    rho, beta = params.rho, params.beta
    h, dv = u.grid.spacing, u.grid.cell_volume
    lu = abs_pow(u.values, rho) * laplacian_values(u.values, h)
    lw = abs_pow(w.values, rho) * laplacian_values(w.values, h)
    core = lp_norm(lu - lw, beta, dv) ** (1.0 / (rho + 1.0))
    if kind == "s0":
        return core
    if kind != "full":
        raise ValueError(f"unknown metric kind {kind!r}")
    return metric_s1(u, w, p1, "full") + core


def write_seminorm_csv(rows: Iterable[tuple[str, float, float, float]], path: str | Path) -> None:
    """Rows of (function-id, alpha, beta, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function_id", "alpha", "beta", "value"])
        for fid, a, b, v in rows:
            w.writerow([fid, repr(float(a)), repr(float(b)), repr(float(v))])
