"""
Empirical checks of the weighted embedding inequalities and the two pointwise
identities behind them.

Each inequality is evaluated member by member on a corpus, at the base grid
and at successive refinements. A single-constant inequality ``LHS <= c RHS``
is fitted by ``c = max LHS/RHS``; a two-term inequality
``LHS <= c1 A + c2 B`` by the non-negative linear program

    minimise c1 + c2 * λ₁^{-β}   subject to   c1 A_j + c2 B_j >= LHS_j,

whose objective is corpus independent (so the optimum can only shrink when
members are removed). A fit is refinement-stable when every coarser fit still
bounds the finest-level data to within the drift tolerance.
"""

from __future__ import annotations

import json
import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from .corpus import CorpusMember, TestCorpus
from .grid import Grid, GridFunction, grad_norm_values, laplacian_values, continuum_lambda1
from .spaces import ParameterError, PnParams, abs_pow, s1_seminorm, s_delta_seminorm, signed_pow

MASK_REL = 1e-8
DRIFT_TOL = 0.25


# ---------------------------------------------------------------------------
# masked integrands


def _mask(values: np.ndarray, rel: float = MASK_REL) -> np.ndarray:
    peak = np.max(np.abs(values)) if values.size else 0.0
    return np.abs(values) > rel * peak


def _wpow(values: np.ndarray, s: float, mask: np.ndarray | None) -> np.ndarray:
    """|u|^s, zeroed off ``mask`` when the exponent is negative."""
    out = abs_pow(values, s)
    if s < 0 and mask is not None:
        out = np.where(mask, out, 0.0)
    return out


def _integral(integrand: np.ndarray, grid: Grid) -> float:
    return float(np.sum(integrand) * grid.cell_volume)


def _second_diffs(values: np.ndarray, spacing) -> list[np.ndarray]:
    p = np.pad(values, 1)
    out = []
    for axis, h in enumerate(spacing):
        lo = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out.append((p[tuple(hi)] - 2 * values + p[tuple(lo)]) / h**2)
    return out


# ---------------------------------------------------------------------------
# inequality definitions: u -> (lhs, [rhs terms])


@dataclass
class Inequality:
    id: str
    params: dict
    terms: Callable[[GridFunction], tuple[float, list[float]]]
    term_names: tuple[str, ...]
    fixed_zero: tuple[bool, ...] = ()
    scales: Callable[[Grid], tuple[float, ...]] | None = None
    singular: bool = False


def _grad_term(u, a, b, mask):
    g = grad_norm_values(u.values, u.grid.spacing)
    return _integral(_wpow(u.values, a, mask) * abs_pow(g, b), u.grid)


def _lap_term(u, a, b, mask):
    lap = laplacian_values(u.values, u.grid.spacing)
    return _integral(_wpow(u.values, a, mask) * abs_pow(lap, b), u.grid)


def _pow_term(u, s, mask):
    return _integral(_wpow(u.values, s, mask), u.grid)


def _lam_scale(beta):
    return lambda grid: (1.0, continuum_lambda1(grid) ** (-beta))


def gradient_by_hessian(alpha: float, beta: float, beta0: float) -> Inequality:
    """∫|u|^α|∇u|^{β₀+β} <= c Σᵢ∫|u|^{α+β₀}|Dᵢ²u|^β + ε₁ κ(β−β₀) ∫|u|^{α+β₀+β}."""
    if not (alpha > -1 and beta >= beta0 >= 0 and beta >= 1 and beta0 + beta >= 2):
        raise ParameterError(f"gradient-by-hessian bound needs α>-1, β>=β0>=0, β>=1, β0+β>=2; got {alpha, beta, beta0}")
    kappa = 1.0 if beta > beta0 else 0.0

    def terms(u):
        m = _mask(u.values)
        lhs = _grad_term(u, alpha, beta0 + beta, m)
        w = _wpow(u.values, alpha + beta0, m)
        A = sum(_integral(w * abs_pow(d, beta), u.grid) for d in _second_diffs(u.values, u.grid.spacing))
        B = _pow_term(u, alpha + beta0 + beta, m) if kappa else 0.0
        return lhs, [A, B]

    return Inequality(
        "grad-by-hessian", {"alpha": alpha, "beta": beta, "beta0": beta0}, terms, ("c", "eps1"),
        fixed_zero=(False, kappa == 0.0), scales=_lam_scale(beta), singular=alpha < 0,
    )


def power_by_weighted_gradient(alpha: float, beta0: float, beta: float) -> Inequality:
    """∫|u|^{α+β₀+β} <= c ∫|u|^{α+β₀}|∇u|^β."""
    _check_power_by_gradient(alpha, beta0, beta)

    def terms(u):
        m = _mask(u.values)
        return _pow_term(u, alpha + beta0 + beta, m), [_grad_term(u, alpha + beta0, beta, m)]

    return Inequality("power-by-weighted-grad", {"alpha": alpha, "beta0": beta0, "beta": beta}, terms, ("c",),
                      singular=alpha + beta0 < 0)


def power_by_gradient(alpha: float, beta0: float, beta: float) -> Inequality:
    """∫|u|^{α+β₀+β} <= c ∫|u|^α|∇u|^{β₀+β}."""
    _check_power_by_gradient(alpha, beta0, beta)

    def terms(u):
        m = _mask(u.values)
        return _pow_term(u, alpha + beta0 + beta, m), [_grad_term(u, alpha, beta0 + beta, m)]

    return Inequality("power-by-grad", {"alpha": alpha, "beta0": beta0, "beta": beta}, terms, ("c",), singular=alpha < 0)


def _check_power_by_gradient(alpha, beta0, beta):
    if not (alpha + beta0 + beta > 1 and beta0 >= 0 and beta >= 1):
        raise ParameterError(f"power-by-gradient bound needs α+β0+β>1, β0>=0, β>=1; got {alpha, beta0, beta}")


def gradient_comparison(alpha0: float, beta0: float, alpha1: float, beta1: float) -> Inequality:
    """∫|u|^{α₀}|∇u|^{β₀} <= c ∫|u|^{α₁}|∇u|^{β₁} + c₁, with c₁ = 0 when the degrees match."""
    if not (1 <= alpha0 + beta0 <= alpha1 + beta1 and 1 <= beta0 <= beta1 and alpha0 * beta1 >= alpha1 * beta0):
        raise ParameterError(f"gradient comparison exponent conditions violated: {alpha0, beta0, alpha1, beta1}")
    equal = math.isclose(alpha0 + beta0, alpha1 + beta1)

    def terms(u):
        m = _mask(u.values)
        return _grad_term(u, alpha0, beta0, m), [_grad_term(u, alpha1, beta1, m), 1.0]

    return Inequality(
        "grad-comparison", {"alpha0": alpha0, "beta0": beta0, "alpha1": alpha1, "beta1": beta1}, terms, ("c", "c1"),
        fixed_zero=(False, equal), scales=lambda grid: (1.0, 1.0),
    )


def power_by_laplacian(alpha: float, beta: float) -> Inequality:
    """∫|u|^{α+β} <= c ∫|u|^α|Δu|^β."""
    if not (alpha > -1 and beta >= 1 and alpha + beta >= 2):
        raise ParameterError(f"power-by-laplacian bound needs α>-1, β>=1, α+β>=2; got {alpha, beta}")

    def terms(u):
        m = _mask(u.values)
        return _pow_term(u, alpha + beta, m), [_lap_term(u, alpha, beta, m)]

    return Inequality("power-by-laplacian", {"alpha": alpha, "beta": beta}, terms, ("c",), singular=alpha < 0)


def _check_gradient_by_laplacian(alpha, beta, dim):
    limit = dim / (dim - 1) if dim >= 2 else 1.0
    if not (alpha > -1 and beta > limit):
        raise ParameterError(f"gradient-by-laplacian bound needs α>-1 and β>{limit:g} in {dim}D; got {alpha, beta}")


def gradient_by_laplacian(alpha: float, beta: float, dim: int) -> Inequality:
    """∫|u|^α|∇u|^{2β} <= c₁∫|u|^{α+β}|Δu|^β + c₂∫|u|^{α+2β}."""
    _check_gradient_by_laplacian(alpha, beta, dim)

    def terms(u):
        m = _mask(u.values)
        return _grad_term(u, alpha, 2 * beta, m), [_lap_term(u, alpha + beta, beta, m), _pow_term(u, alpha + 2 * beta, m)]

    return Inequality("grad-by-laplacian", {"alpha": alpha, "beta": beta}, terms, ("c1", "c2"),
                      fixed_zero=(False, False), scales=_lam_scale(beta), singular=alpha < 0)


def gradient_by_laplacian_pure(alpha: float, beta: float, dim: int) -> Inequality:
    """∫|u|^α|∇u|^{2β} <= c ∫|u|^{α+β}|Δu|^β."""
    _check_gradient_by_laplacian(alpha, beta, dim)

    def terms(u):
        m = _mask(u.values)
        return _grad_term(u, alpha, 2 * beta, m), [_lap_term(u, alpha + beta, beta, m)]

    return Inequality("grad-by-laplacian-pure", {"alpha": alpha, "beta": beta}, terms, ("c",), singular=alpha < 0)


def _is_w1_instance(alpha, beta, alpha1, beta1):
    return beta == 2 and 0 < alpha <= 2 and alpha1 == 0 and math.isclose(beta1, alpha + 2)


def s1_by_s_delta(alpha: float, beta: float, alpha1: float, beta1: float, dim: int,
                  params_s1: PnParams | None = None) -> Inequality:
    """[u]_{S_1(α₁,β₁)} <= C [u]_{S_Δ(α,β)} (seminorm form).

    The W¹_{ρ+2} instance (α, β, α₁, β₁) = (ρ, 2, 0, ρ+2), 0 < ρ <= 2, is
    admitted because the W¹_{ρ+2} embedding holds there on its own, even though it sits on the
    boundary α = β − 1 (and β = n/(n−1) in 2D).
    """
    limit = dim / (dim - 1) if dim >= 2 else 1.0
    ok = (
        alpha >= 0 and alpha1 >= 0 and beta1 >= 1 and beta > limit
        and (alpha1 + beta1) / (alpha + beta) >= beta / beta1
        and alpha * beta1 >= alpha1 * beta
        and alpha > beta - 1
    )
    if not ok and not _is_w1_instance(alpha, beta, alpha1, beta1):
        raise ParameterError(f"S1-by-SΔ embedding exponent conditions violated: {alpha, beta, alpha1, beta1}")
    pd = PnParams(alpha, beta)
    p1 = PnParams(alpha1, beta1)

    def terms(u):
        return s1_seminorm(u, p1), [s_delta_seminorm(u, pd, params_s1)]

    return Inequality("s1-by-sdelta", {"alpha": alpha, "beta": beta, "alpha1": alpha1, "beta1": beta1}, terms, ("C",))


def eta_laplacian_bound(alpha: float, beta: float, dim: int, alpha1: float | None = None, beta1: float | None = None) -> Inequality:
    """‖Δ_h η(u)‖_{L_β} <= C [u]_{S_Δ(α,β)}^{(α+β)/β}."""
    alpha1 = alpha if alpha1 is None else alpha1
    beta1 = beta if beta1 is None else beta1
    limit = dim / (dim - 1) if dim >= 2 else 1.0
    ok = (
        alpha >= 0 and alpha1 > -1 and beta1 >= beta >= beta1 / 2 >= 1 and beta > limit
        and math.isclose(alpha + beta, alpha1 + beta1)
        and (beta1 != 2 * beta or alpha > beta - 1)
    )
    if not ok:
        raise ParameterError(f"eta-laplacian bound exponent conditions violated: {alpha, beta, alpha1, beta1}")
    pd, p1 = PnParams(alpha, beta), PnParams(alpha1, beta1)
    deg = (alpha + beta) / beta

    def terms(u):
        v = signed_pow(u.values, pd.rho)
        lap = laplacian_values(v, u.grid.spacing)
        lhs = _integral(np.abs(lap) ** beta, u.grid) ** (1.0 / beta)
        return lhs, [s_delta_seminorm(u, pd, p1) ** deg]

    return Inequality("eta-laplacian", {"alpha": alpha, "beta": beta, "alpha1": alpha1, "beta1": beta1}, terms, ("C",))


# ---------------------------------------------------------------------------
# evaluation and fitting


@dataclass
class MemberRow:
    function_id: str
    lhs: float
    rhs_terms: list[float]
    rhs: float = float("nan")
    ratio: float = float("nan")


@dataclass
class LevelResult:
    n_cells: tuple[int, ...]
    rows: list[MemberRow]
    constants: dict[str, float]
    nonfinite: list[str]
    skipped: list[str]
    masked_fraction: float = 0.0


@dataclass
class InequalityReport:
    inequality: str
    params: dict
    levels: list[LevelResult]
    constants: dict[str, float]
    drift: float
    constant_drift: dict[str, float]
    violation: bool
    notes: list[str] = field(default_factory=list)

    @property
    def rows(self) -> list[MemberRow]:
        return self.levels[-1].rows

    @property
    def refinement_trace(self) -> list[dict]:
        return [{"n_cells": list(lv.n_cells), "constants": lv.constants} for lv in self.levels]

    def summary(self) -> dict:
        return {
            "inequality": self.inequality,
            "params": self.params,
            "constants": self.constants,
            "refinement_trace": self.refinement_trace,
            "drift": self.drift,
            "constant_drift": self.constant_drift,
            "violation": self.violation,
            "nonfinite": self.levels[-1].nonfinite,
            "skipped": self.levels[-1].skipped,
            "masked_fraction": self.levels[-1].masked_fraction,
            "notes": self.notes,
        }

    def write(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / f"inequality_{self.inequality}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["function_id", "lhs", "rhs", "ratio"])
            for r in self.rows:
                w.writerow([r.function_id, repr(r.lhs), repr(r.rhs), repr(r.ratio)])


def _fit(ineq: Inequality, lhs: np.ndarray, terms: np.ndarray, grid: Grid) -> dict[str, float]:
    names = ineq.term_names
    active = [i for i in range(len(names)) if not (ineq.fixed_zero and ineq.fixed_zero[i])]
    consts = {n: 0.0 for n in names}
    pos = lhs > 0
    if not np.any(pos):
        return consts
    if len(active) == 1:
        i = active[0]
        consts[names[i]] = float(np.max(lhs[pos] / terms[pos, i]))
        return consts
    scale = ineq.scales(grid) if ineq.scales else (1.0,) * len(names)
    a = terms[pos][:, active] / lhs[pos, None]
    res = linprog(
        c=[scale[i] for i in active],
        A_ub=-a,
        b_ub=-np.ones(len(a)),
        bounds=[(0, None)] * len(active),
        method="highs",
    )
    if not res.success:
        return {n: float("inf") for n in names}
    for i, val in zip(active, res.x):
        consts[names[i]] = float(val)
    return consts


def _evaluate(ineq: Inequality, corpus: TestCorpus) -> LevelResult:
    rows, nonfinite, skipped = [], [], []
    for member, u in corpus:
        lhs, terms = ineq.terms(u)
        rows.append(MemberRow(member.id, float(lhs), [float(t) for t in terms]))
    active = [i for i in range(len(ineq.term_names)) if not (ineq.fixed_zero and ineq.fixed_zero[i])]
    keep = []
    for r in rows:
        rhs_avail = sum(r.rhs_terms[i] for i in active)
        if r.lhs == 0 and rhs_avail == 0:
            skipped.append(r.function_id)
        elif rhs_avail <= 0 or not np.isfinite(rhs_avail) or not np.isfinite(r.lhs):
            nonfinite.append(r.function_id)
        else:
            keep.append(r)
    if keep:
        lhs = np.array([r.lhs for r in keep])
        terms = np.array([r.rhs_terms for r in keep])
        consts = _fit(ineq, lhs, terms, corpus.grid)
    else:
        consts = {n: 0.0 for n in ineq.term_names}
    cvec = np.array([consts[n] for n in ineq.term_names])
    for r in rows:
        r.rhs = float(np.dot(cvec, r.rhs_terms)) if len(cvec) > 1 else float(r.rhs_terms[0])
        if r.rhs > 0:
            r.ratio = r.lhs / r.rhs
        elif r.lhs == 0:
            r.ratio = 0.0
        else:
            r.ratio = float("inf")
    masked = float(np.mean([1.0 - np.mean(_mask(u.values)) for _, u in corpus])) if ineq.singular and len(corpus) else 0.0
    return LevelResult(corpus.grid.n_cells, rows, consts, nonfinite, skipped, masked)


def _bound_transfer(ineq: Inequality, coarse: dict, fine: LevelResult) -> float:
    """max over fine-level members of LHS / (coarse-fit RHS)."""
    cvec = np.array([coarse[n] for n in ineq.term_names])
    worst = 0.0
    for r in fine.rows:
        if r.function_id in fine.skipped or r.function_id in fine.nonfinite:
            continue
        rhs = float(np.dot(cvec, r.rhs_terms))
        worst = max(worst, r.lhs / rhs if rhs > 0 else float("inf"))
    return worst


def run_inequality(ineq: Inequality, corpus: TestCorpus, levels: int = 3, drift_tol: float = DRIFT_TOL) -> InequalityReport:
    """Evaluate ``ineq`` on ``corpus`` and ``levels - 1`` successive refinements."""
    results = []
    c = corpus
    for k in range(levels):
        if k:
            c = c.refined()
        results.append(_evaluate(ineq, c))
    fine = results[-1]
    notes = []
    if fine.skipped:
        notes.append(f"zero members skipped: {', '.join(fine.skipped)}")
    if ineq.singular:
        notes.append(f"negative exponents evaluated with mask |u| > {MASK_REL:g} max|u|")
    if len(ineq.term_names) == 1 or sum(1 for z in ineq.fixed_zero if not z) == 1:
        name = next(n for i, n in enumerate(ineq.term_names) if not (ineq.fixed_zero and ineq.fixed_zero[i]))
        ref = fine.constants[name]
        drift = max(abs(lv.constants[name] / ref - 1.0) for lv in results) if ref > 0 else 0.0
    else:
        drift = max(abs(_bound_transfer(ineq, lv.constants, fine) - 1.0) for lv in results)
    constant_drift = {}
    for n in ineq.term_names:
        ref = fine.constants[n]
        vals = [lv.constants[n] for lv in results]
        constant_drift[n] = max(abs(v - ref) for v in vals) / ref if ref > 0 else (0.0 if max(vals) == 0 else float("inf"))
    nonfinite = any(lv.nonfinite for lv in results)
    if nonfinite:
        notes.append("members with finite LHS but vanishing RHS: " + ", ".join(sorted({i for lv in results for i in lv.nonfinite})))
    violation = bool(nonfinite or not np.isfinite(drift) or drift >= drift_tol)
    return InequalityReport(ineq.id, ineq.params, results, fine.constants, float(drift), constant_drift, violation, notes)


def verify_gradient_by_hessian(corpus, alpha=1.0, beta=2.0, beta0=0.0, levels=3):
    return run_inequality(gradient_by_hessian(alpha, beta, beta0), corpus, levels)


def verify_power_by_laplacian(corpus, alpha=1.0, beta=2.0, levels=3):
    return run_inequality(power_by_laplacian(alpha, beta), corpus, levels)


def verify_gradient_by_laplacian(corpus, alpha=1.0, beta=3.0, levels=3):
    return run_inequality(gradient_by_laplacian(alpha, beta, corpus.grid.dim), corpus, levels)


def verify_gradient_by_laplacian_pure(corpus, alpha=1.0, beta=3.0, levels=3):
    return run_inequality(gradient_by_laplacian_pure(alpha, beta, corpus.grid.dim), corpus, levels)


def verify_power_gradient_family(corpus, tuples: dict | None = None, levels=3) -> list[InequalityReport]:
    """Both power-by-gradient forms and the gradient comparison; ``tuples`` maps form id to its exponents."""
    t = {
        "power-by-weighted-grad": (1.0, 1.0, 2.0),
        "power-by-grad": (1.0, 1.0, 2.0),
        "grad-comparison": (2.0, 1.0, 1.0, 2.0),
    }
    t.update(tuples or {})
    return [
        run_inequality(power_by_weighted_gradient(*t["power-by-weighted-grad"]), corpus, levels),
        run_inequality(power_by_gradient(*t["power-by-grad"]), corpus, levels),
        run_inequality(gradient_comparison(*t["grad-comparison"]), corpus, levels),
    ]


def verify_s1_by_s_delta(corpus, alpha=1.0, beta=2.0, alpha1=0.0, beta1=3.0, levels=3):
    return run_inequality(s1_by_s_delta(alpha, beta, alpha1, beta1, corpus.grid.dim), corpus, levels)


def verify_eta_laplacian_bound(corpus, alpha=2.0, beta=2.0, levels=3):
    return run_inequality(eta_laplacian_bound(alpha, beta, corpus.grid.dim), corpus, levels)


# ---------------------------------------------------------------------------
# pointwise identities


@dataclass
class IdentityReport:
    identity: str
    params: dict
    n_cells: list[tuple[int, ...]]
    residuals: list[float]
    interior_residuals: list[float]
    masked_fraction: list[float]
    orders: list[float]
    interior_orders: list[float]

    @property
    def order(self) -> float:
        return self.orders[-1] if self.orders else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_cells"] = [list(n) for n in self.n_cells]
        return d


def _interior(grid: Grid, frac: float = 0.1) -> np.ndarray:
    coords = grid.coordinates()
    keep = np.ones(grid.shape, dtype=bool)
    for c, L in zip(coords, grid.extents):
        keep &= (c >= frac * L) & (c <= (1 - frac) * L)
    return keep


def _masked_l2(r: np.ndarray, mask: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.where(mask, r, 0.0) ** 2) * grid.cell_volume))


def eta_chain_residual(u: GridFunction, params: PnParams, interior: bool = False) -> tuple[float, float]:
    """Masked L₂ norm of Δ_h η(u) − [((α+β)/β)|u|^ρ Δ_h u + (α(α+β)/β²)|u|^{ρ−2}u|∇_h u|²]."""
    a, b = params.alpha, params.beta
    rho = params.rho
    vals, h = u.values, u.grid.spacing
    mask = _mask(vals)
    lhs = laplacian_values(signed_pow(vals, rho), h)
    g2 = grad_norm_values(vals, h) ** 2
    rhs = (a + b) / b * abs_pow(vals, rho) * laplacian_values(vals, h)
    if a != 0:
        rhs = rhs + a * (a + b) / b**2 * _wpow(vals, rho - 2, mask) * vals * g2
    if interior:
        mask = mask & _interior(u.grid)
    frac = 1.0 - float(np.mean(_mask(vals))) if vals.size else 0.0
    return _masked_l2(lhs - rhs, mask, u.grid), frac


def _div_form(vals: np.ndarray, coef: np.ndarray, spacing) -> np.ndarray:
    """∇·(coef ∇u) with face coefficients from arithmetic means; zero ghost values."""
    pu = np.pad(vals, 1)
    pc = np.pad(coef, 1)
    out = np.zeros_like(vals)
    for axis, h in enumerate(spacing):
        sl = lambda lo, hi: tuple(slice(lo, hi) if ax == axis else slice(1, -1) for ax in range(vals.ndim))
        up_u, dn_u = pu[sl(2, None)], pu[sl(0, -2)]
        up_c, dn_c = pc[sl(2, None)], pc[sl(0, -2)]
        flux_up = 0.5 * (coef + up_c) * (up_u - vals)
        flux_dn = 0.5 * (coef + dn_c) * (vals - dn_u)
        out += (flux_up - flux_dn) / h**2
    return out


def gradient_split_residual(u: GridFunction, rho: float, theta: float, variant: str = "general",
                          interior: bool = False) -> tuple[float, float]:
    """Masked L₂ residual of

        |u|^{ρ−2}u|∇u|² = Δ(|u|^ρ u)/(ρ(ρ+1)(1−θ)) − |u|^{(1−θ)ρ} Δ(|u|^{θρ}u)/(ρ(θρ+1)(1−θ))

    ``variant="theta23"`` uses the divergence form available at θ = 2/3:
    3Δ(|u|^ρu)/(ρ(ρ+1)) − (3/ρ)|u|^{ρ/3} ∇·(|u|^{2ρ/3}∇u).
    """
    if not (rho > 0 and 0.5 <= theta < 1):
        raise ParameterError(f"gradient split identity needs ρ>0 and 1/2<=θ<1; got ρ={rho}, θ={theta}")
    vals, h = u.values, u.grid.spacing
    mask = _mask(vals)
    lhs = _wpow(vals, rho - 2, mask) * vals * grad_norm_values(vals, h) ** 2
    first = laplacian_values(signed_pow(vals, rho), h)
    if variant == "theta23":
        second = _div_form(vals, abs_pow(vals, 2 * rho / 3), h)
        rhs = 3.0 / (rho * (rho + 1)) * first - (3.0 / rho) * abs_pow(vals, rho / 3) * second
    elif variant == "general":
        second = laplacian_values(signed_pow(vals, theta * rho), h)
        rhs = first / (rho * (rho + 1) * (1 - theta)) - abs_pow(vals, (1 - theta) * rho) * second / (
            rho * (theta * rho + 1) * (1 - theta)
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if interior:
        mask = mask & _interior(u.grid)
    frac = 1.0 - float(np.mean(_mask(vals))) if vals.size else 0.0
    return _masked_l2(lhs - rhs, mask, u.grid), frac


def _orders(res: Sequence[float], grids: Sequence[Grid]) -> list[float]:
    out = []
    for (r0, g0), (r1, g1) in zip(zip(res, grids), zip(res[1:], grids[1:])):
        if r0 > 0 and r1 > 0:
            out.append(math.log(r0 / r1) / math.log(g0.spacing[0] / g1.spacing[0]))
        else:
            out.append(float("inf") if r1 == 0 else float("nan"))
    return out


def _sampler(u):
    if isinstance(u, CorpusMember):
        return u.sample
    return lambda grid: grid.sample(u)


def _refinement(name, params, u, grid: Grid, levels: int, fn) -> IdentityReport:
    sample = _sampler(u)
    grids = [grid]
    for _ in range(levels - 1):
        grids.append(grids[-1].refine())
    res, ires, frac = [], [], []
    for g in grids:
        gf = sample(g)
        r, f = fn(gf, False)
        ri, _ = fn(gf, True)
        res.append(r)
        ires.append(ri)
        frac.append(f)
    return IdentityReport(name, params, [g.n_cells for g in grids], res, ires, frac, _orders(res, grids), _orders(ires, grids))


def check_eta_chain(u, params: PnParams, grid: Grid, levels: int = 3) -> IdentityReport:
    """Refinement study of the η chain rule for Δ. ``u`` is a closed form or corpus member."""
    return _refinement("eta-chain", {"alpha": params.alpha, "beta": params.beta}, u, grid, levels,
                       lambda gf, inner: eta_chain_residual(gf, params, inner))


def check_gradient_split(u, rho: float, theta: float, grid: Grid, levels: int = 3, variant: str = "general") -> IdentityReport:
    return _refinement("gradient-split" if variant == "general" else "gradient-split-theta23", {"rho": rho, "theta": theta}, u, grid, levels,
                       lambda gf, inner: gradient_split_residual(gf, rho, theta, variant, inner))


# ---------------------------------------------------------------------------
# suite


def default_suite(dim: int) -> list[Inequality]:
    """Parameter choices satisfying every precondition in the given dimension."""
    beta_l = 3.0  # > n/(n-1) for n = 2
    beta_c = 2.0 if dim == 1 else 2.5
    return [
        gradient_by_hessian(1.0, 2.0, 0.0),
        gradient_by_hessian(1.0, 2.0, 2.0),
        power_by_weighted_gradient(1.0, 1.0, 2.0),
        power_by_gradient(1.0, 1.0, 2.0),
        gradient_comparison(2.0, 1.0, 1.0, 2.0),
        gradient_comparison(1.0, 1.0, 1.0, 2.0),
        power_by_laplacian(1.0, 2.0),
        gradient_by_laplacian(1.0, beta_l, dim),
        gradient_by_laplacian_pure(1.0, beta_l, dim),
        s1_by_s_delta(1.0, 2.0, 0.0, 3.0, dim),
        eta_laplacian_bound(2.0 if dim == 1 else 2.5, beta_c, dim),
    ]


def suite_key(ineq: Inequality) -> str:
    tail = "_".join(f"{k}{v:g}" for k, v in ineq.params.items())
    return f"{ineq.id}_{tail}"


def write_summary(reports: dict[str, InequalityReport], path: str | Path) -> None:
    out = {k: reports[k].summary() for k in sorted(reports)}
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
