"""
Experiment orchestration: TOML configs, single runs, Cartesian sweeps and the
run manifest.

A config file fully determines a run. Top-level keys ``kind``, ``seed``,
``jobs`` and ``output_dir``; sections ``[problem]``, ``[solver]``,
``[embeddings]``, ``[decay]``, ``[blowup]``, ``[regularization]`` and
``[sweep]`` (with a ``[sweep.grid]`` table of dotted keys to value lists).
"""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .corpus import DEFAULT_SEED, broken_corpus, default_corpus
from .dynamics import (
    classify_regime,
    decay_study,
    detect_blowup,
    random_ghidaglia_sweep,
    write_blowup_csv,
    write_decay_csv,
    write_verdict,
)
from .embeddings import (
    check_eta_chain,
    check_gradient_split,
    default_suite,
    run_inequality,
    suite_key,
)
from .grid import Grid, first_eigenpair
from .solver import (
    NewtonOptions,
    ProblemSpec,
    SolverConfig,
    admissibility,
    l2q_distance,
    l2q_norm,
    regularized_kernel_velocity,
    run_trajectory,
    solve_elliptic_regularized,
    solve_scalar_two_point,
    write_trajectory,
)
from .solver.output import write_diagnostics
from .spaces import PnParams

log = logging.getLogger(__name__)

KINDS = ("solve", "verify-embeddings", "decay-study", "blowup-study", "regularization-study", "sweep")
OUTPUT_ROOT_ENV = "PNLAB_OUTPUT_ROOT"
MANIFEST = "run_manifest.json"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    """Invalid experiment configuration, detected before any computation."""


def artifact_version() -> str:
    try:
        return version("pnlab")
    except PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict
    seed: int = DEFAULT_SEED
    jobs: int = 0
    output_dir: Path = Path("runs")

    @classmethod
    def load(cls, path: str | Path, kind: str | None = None) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, kind)

    @classmethod
    def from_dict(cls, raw: dict, kind: str | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(raw)
        declared = raw.get("kind")
        if kind and declared and declared != kind:
            raise ConfigError(f"config declares kind {declared!r} but subcommand requests {kind!r}")
        k = kind or declared
        if k not in KINDS:
            raise ConfigError(f"unknown experiment kind {k!r}; expected one of {', '.join(KINDS)}")
        raw["kind"] = k
        seed = raw.get("seed", DEFAULT_SEED)
        if not isinstance(seed, int) or seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        jobs = raw.get("jobs", 0)
        if not isinstance(jobs, int) or jobs < 0:
            raise ConfigError(f"jobs must be a non-negative integer, got {jobs!r}")
        cfg = cls(k, raw, seed, jobs, Path(raw.get("output_dir", f"runs/{k}")))
        cfg.validate()
        return cfg

    def with_overrides(self, out: str | None = None, seed: int | None = None, jobs: int | None = None,
                       inequalities: list[str] | None = None) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        if inequalities:
            raw.setdefault("embeddings", {})["inequalities"] = list(inequalities)
        if out is not None:
            raw["output_dir"] = str(out)
        if seed is not None:
            raw["seed"] = seed
        if jobs is not None:
            raw["jobs"] = jobs
        return ExperimentConfig.from_dict(raw, self.kind)

    def resolved_output(self) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not self.output_dir.is_absolute():
            return Path(root) / self.output_dir
        return self.output_dir

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        return sec

    def validate(self) -> None:
        try:
            if self.kind in ("solve", "decay-study", "blowup-study", "regularization-study"):
                build_problem(self.section("problem"), self.kind)
                build_solver(self.section("solver"), self.kind)
            elif self.kind == "verify-embeddings":
                build_suites(self.section("embeddings"))
            elif self.kind == "sweep":
                for point in sweep_points(self):
                    point.validate()
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


def _get(sec: dict, key: str, default, types=(int, float)):
    val = sec.get(key, default)
    if types and val is not None and not isinstance(val, types):
        raise ConfigError(f"{key} has the wrong type: {val!r}")
    return val


def _profile(name: str, amplitude: float, grid: Grid, eig=None) -> np.ndarray:
    x = grid.coordinates()
    if name == "zero":
        return np.zeros(grid.shape)
    if name == "sine":
        out = np.ones(grid.shape)
        for xi, L in zip(x, grid.extents):
            out = out * np.sin(np.pi * xi / L)
        return amplitude * out
    if name == "bump":
        out = np.ones(grid.shape)
        for xi, L in zip(x, grid.extents):
            out = out * 16 * (xi / L) ** 2 * (1 - xi / L) ** 2
        return amplitude * out
    if name == "v1":
        eig = first_eigenpair(grid) if eig is None else eig
        return amplitude * eig.v1.values
    raise ConfigError(f"unknown profile {name!r}; expected zero, sine, bump or v1")


def build_problem(sec: dict, kind: str = "solve") -> ProblemSpec:
    dim = _get(sec, "dim", 1, (int,))
    n = _get(sec, "n", 49, (int,))
    extent = _get(sec, "extent", 1.0)
    grid = Grid.uniform(n, float(extent), dim)
    u0_name = _get(sec, "u0", "zero", (str,))
    h_name = _get(sec, "h", "zero", (str,))
    u0 = grid.zeros().with_values(_profile(u0_name, float(_get(sec, "u0_amplitude", 1.0)), grid))
    h_vals = _profile(h_name, float(_get(sec, "h_amplitude", 1.0)), grid)
    h = None if h_name == "zero" else _ConstantSource(h_vals)
    b = sec.get("b")
    if b is not None and not isinstance(b, (int, float)):
        raise ConfigError("b must be a number (constant growth coefficient)")
    expect = _get(sec, "expect", "auto", (str,))
    if expect not in ("auto", "bounded", "blow-up"):
        raise ConfigError(f"expect must be auto, bounded or blow-up, got {expect!r}")
    rho = float(_get(sec, "rho", 1.0))
    return ProblemSpec(
        rho=rho, domain=grid, T=float(_get(sec, "T", 1.0)),
        mu=float(_get(sec, "mu", rho if b is not None else 0.0)), b0=float(_get(sec, "b0", 0.0)),
        h=h, u0=u0, b=None if b is None else float(b), label=f"u0={u0_name},h={h_name}",
    )


class _ConstantSource:
    """Time-independent source; picklable, unlike a closure."""

    def __init__(self, values: np.ndarray):
        self.values = values

    def __call__(self, t, grid):
        return self.values


def build_solver(sec: dict, kind: str = "solve") -> SolverConfig:
    newton = sec.get("newton", {})
    default_method = "elliptic-regularized" if kind == "regularization-study" else "semi-implicit"
    return SolverConfig(
        method=_get(sec, "method", default_method, (str,)),
        dt=float(_get(sec, "dt", 1e-2)),
        newton=NewtonOptions(float(newton.get("tol", 1e-10)), int(newton.get("max_iter", 50)), float(newton.get("damping", 0.5))),
        m=_get(sec, "m", 8, (int,)),
        epsilon=float(_get(sec, "epsilon", 0.1)),
        epsilon_schedule=tuple(sec.get("epsilon_schedule", (0.1, 0.05, 0.025, 0.0125))),
        spatial=_get(sec, "spatial", "fd", (str,)),
        record_stride=_get(sec, "record_stride", 1, (int,)),
    )


def build_suites(sec: dict) -> dict[int, list]:
    dims = sec.get("dims", [1, 2])
    if not dims or any(d not in (1, 2) for d in dims):
        raise ConfigError(f"embeddings.dims must list 1 and/or 2, got {dims!r}")
    suites = {d: default_suite(d) for d in dims}
    wanted = sec.get("inequalities")
    if wanted is None:
        return suites
    if not isinstance(wanted, list) or not wanted:
        raise ConfigError("embeddings.inequalities must be a non-empty list of inequality ids")
    known = {ineq.id for suite in suites.values() for ineq in suite}
    unknown = sorted(set(wanted) - known)
    if unknown:
        raise ConfigError(f"unknown inequality ids {unknown}; known: {', '.join(sorted(known))}")
    return {d: [ineq for ineq in suite if ineq.id in wanted] for d, suite in suites.items()}


# ---------------------------------------------------------------------------
# manifest


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def inventory(root: Path) -> dict[str, str]:
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.name != MANIFEST and not p.name.startswith(".tmp"))
    return {p.relative_to(root).as_posix(): _sha256(p) for p in files}


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    stages: dict[str, float] = field(default_factory=dict)
    statuses: dict[str, str] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    partial: bool = False

    def to_dict(self) -> dict:
        return {
            "config": self.config, "version": self.version, "seed": self.seed, "wall_clock_s": self.stages,
            "statuses": self.statuses, "files": self.files, "exit_code": self.exit_code, "partial": self.partial,
        }

    def write(self, root: Path) -> Path:
        """Atomic: written to a temporary file in ``root`` and renamed."""
        self.files = inventory(root)
        fd, tmp = tempfile.mkstemp(dir=root, prefix=".tmp-manifest-")
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        target = root / MANIFEST
        os.replace(tmp, target)
        return target


class _Stages:
    def __init__(self, manifest: RunManifest):
        self.m = manifest

    def __call__(self, name):
        m = self.m

        class _T:
            def __enter__(self_):
                self_.t = time.perf_counter()

            def __exit__(self_, *exc):
                m.stages[name] = round(time.perf_counter() - self_.t, 6)

        return _T()


# ---------------------------------------------------------------------------
# experiment kinds


def _expected_blowup(cfg: ExperimentConfig, spec: ProblemSpec, eig) -> bool:
    expect = cfg.section("problem").get("expect", "auto")
    if expect != "auto":
        return expect == "blow-up"
    if spec.growth_variant or spec.mu == spec.rho:
        return classify_regime(spec, eig).regime == "blow-up-candidate"
    return False


def _status_exit(status: str, expected_blowup: bool) -> int:
    if status == "solver-failure":
        return EXIT_FAIL
    if status == "blow-up-detected":
        return EXIT_OK if expected_blowup else EXIT_FAIL
    if status == "completed" and expected_blowup:
        log.warning("blow-up was expected but the run completed")
    return EXIT_OK


def _run_solve(cfg, out, man, stage):
    spec = build_problem(cfg.section("problem"))
    solver = build_solver(cfg.section("solver"))
    eig = first_eigenpair(spec.domain)
    ok, branch = admissibility(spec)
    with stage("solve"):
        traj = run_trajectory(spec, solver, eig)
    stride = int(cfg.section("solver").get("snapshot_stride", 10))
    with stage("write"):
        write_trajectory(traj, out / "trajectory", spec, solver, stride)
        summary = {
            "status": traj.status, "message": traj.message, "admissible": ok, "admissibility_branch": branch,
            "l2q_norm": l2q_norm(traj), "bochner_s_delta_core": traj.diagnostics[-1]["bochner"],
            "t_final": traj.times[-1],
        }
        write_verdict(summary, out / "summary.json")
    man.statuses["solve"] = traj.status
    return _status_exit(traj.status, _expected_blowup(cfg, spec, eig))


def _run_verify(cfg, out, man, stage):
    sec = cfg.section("embeddings")
    suites = build_suites(sec)
    levels = int(sec.get("levels", 3))
    broken = bool(sec.get("broken", False))
    sizes = {1: int(sec.get("n1", 99)), 2: int(sec.get("n2", 31))}
    code = EXIT_OK
    for dim, suite in suites.items():
        grid = Grid.uniform(sizes[dim], dim=dim)
        corpus = (broken_corpus if broken else default_corpus)(grid, cfg.seed)
        reports = {}
        with stage(f"inequalities_{dim}d"):
            for ineq in suite:
                key = suite_key(ineq)
                rep = run_inequality(ineq, corpus, levels)
                reports[key] = rep
                rep_dir = out / f"{dim}d"
                rep_dir.mkdir(parents=True, exist_ok=True)
                _write_rows(rep, rep_dir / f"inequality_{key}.csv")
                man.statuses[f"{dim}d/{key}"] = "violation" if rep.violation else "ok"
                if rep.violation:
                    code = EXIT_FAIL
        write_verdict({k: reports[k].summary() for k in sorted(reports)}, out / f"{dim}d" / "summary.json")
    if sec.get("identities", True):
        with stage("identities"):
            bump = lambda x: x**2 * (1 - x) ** 2
            g = Grid.uniform(49)
            ids = {
                "eta-chain": check_eta_chain(lambda x: np.sin(np.pi * x), PnParams(2.0, 2.0), g, levels + 1).to_dict(),
                "gradient-split_theta0.5": check_gradient_split(bump, 1.0, 0.5, g, levels + 1).to_dict(),
                "gradient-split_theta2/3": check_gradient_split(bump, 1.0, 2 / 3, g, levels + 1).to_dict(),
                "gradient-split_theta2/3_divergence": check_gradient_split(bump, 1.0, 2 / 3, g, levels + 1, "theta23").to_dict(),
            }
            write_verdict(ids, out / "identities.json")
    return code


def _write_rows(rep, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["function_id", "lhs", "rhs", "ratio"])
        for r in rep.rows:
            w.writerow([r.function_id, repr(r.lhs), repr(r.rhs), repr(r.ratio)])


def _run_decay(cfg, out, man, stage):
    spec = build_problem(cfg.section("problem"))
    solver = build_solver(cfg.section("solver"))
    sec = cfg.section("decay")
    eig = first_eigenpair(spec.domain)
    with stage("solve"):
        traj = run_trajectory(spec, solver, eig)
    rec = decay_study(traj, spec, tol=float(sec.get("tol", 0.3)))
    write_diagnostics(traj, out / "diagnostics.csv")
    write_decay_csv(rec, [d["v1_coeff"] for d in traj.diagnostics], out / "decay.csv")
    verdict = rec.verdict()
    draws = int(sec.get("ghidaglia_draws", 100))
    if draws:
        with stage("ghidaglia"):
            reps = random_ghidaglia_sweep(draws, cfg.seed)
        with open(out / "ghidaglia.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["theta", "l", "eta_const", "y0", "violations", "min_margin"])
            for r in reps:
                w.writerow([repr(r.params.theta), repr(r.params.l), repr(r.params.eta_const), repr(r.y0),
                            r.violations, repr(r.min_margin)])
        verdict["ghidaglia_violations"] = sum(r.violations for r in reps)
    write_verdict(verdict, out / "verdict.json")
    man.statuses["decay"] = rec.status
    code = _status_exit(traj.status, False)
    if rec.status == "fail" or rec.envelope_violation or verdict.get("ghidaglia_violations", 0):
        code = EXIT_FAIL
    return code


def _run_blowup(cfg, out, man, stage):
    spec = build_problem(cfg.section("problem"))
    solver = build_solver(cfg.section("solver"))
    eig = first_eigenpair(spec.domain)
    crit = classify_regime(spec, eig)
    with stage("solve"):
        traj = run_trajectory(spec, solver, eig)
    st = detect_blowup(traj, eig.v1, spec.rho, spec.u0)
    write_diagnostics(traj, out / "diagnostics.csv")
    phis = [0.5 * float(np.sum(s.values**2)) * spec.domain.cell_volume for s in traj.states]
    write_blowup_csv(st, phis, out / "blowup.csv")
    verdict = {"regime": crit.to_dict(), **st.verdict(), "trajectory_status": traj.status}
    write_verdict(verdict, out / "verdict.json")
    man.statuses["blowup"] = st.status
    return _status_exit(traj.status, _expected_blowup(cfg, spec, eig))


def _run_regularization(cfg, out, man, stage):
    spec = build_problem(cfg.section("problem"), "regularization-study")
    solver = build_solver(cfg.section("solver"), "regularization-study")
    sec = cfg.section("regularization")
    ref_dt = float(sec.get("reference_dt", solver.dt / 10))
    with stage("reference"):
        ref = run_trajectory(spec, SolverConfig("implicit-newton", dt=ref_dt, monitor_blowup=False))
    with stage("regularized"):
        fam = solve_elliptic_regularized(spec, solver)
    rows = [(eps, l2q_distance(ref, tr, relative=False), fam.newton_iters[eps]) for eps, tr in fam.trajectories.items()]
    with open(out / "regularization.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "l2q_distance", "newton_iters"])
        for eps, d, it in rows:
            w.writerow([repr(eps), repr(d), it])
    dists = [d for _, d, _ in rows]
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    # scalar kernel check on f0(t) = cos(3t) + t²
    eps0 = solver.epsilon_schedule[0]
    ts = np.linspace(0.0, spec.T, int(sec.get("kernel_nodes", 4001)))
    f0 = np.cos(3 * ts) + ts**2
    x = solve_scalar_two_point(f0, ts, eps0)
    kernel_gap = float(np.max(np.abs(np.gradient(x, ts, edge_order=2) - regularized_kernel_velocity(f0, eps0, ts, ts))))
    verdict = {"status": fam.status, "message": fam.message, "distances": dists, "monotone": monotone,
               "kernel_gap": kernel_gap}
    write_verdict(verdict, out / "verdict.json")
    man.statuses["regularization"] = fam.status
    if fam.status != "completed" or not monotone or kernel_gap > 1e-4:
        return EXIT_FAIL
    return EXIT_OK


RUNNERS = {
    "solve": _run_solve,
    "verify-embeddings": _run_verify,
    "decay-study": _run_decay,
    "blowup-study": _run_blowup,
    "regularization-study": _run_regularization,
}


# ---------------------------------------------------------------------------
# sweeps


def _set_dotted(raw: dict, key: str, value) -> None:
    parts = key.split(".")
    cur = raw
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value


def point_key(assignment: dict) -> str:
    return "_".join(f"{k.split('.')[-1]}={v:g}" if isinstance(v, (int, float)) else f"{k.split('.')[-1]}={v}"
                    for k, v in sorted(assignment.items()))


def sweep_points(cfg: ExperimentConfig) -> list["ExperimentConfig"]:
    sec = cfg.section("sweep")
    base_kind = sec.get("kind", "solve")
    if base_kind not in KINDS or base_kind == "sweep":
        raise ConfigError(f"sweep.kind must be a non-sweep experiment kind, got {base_kind!r}")
    grid = sec.get("grid", {})
    keys = sorted(grid)
    for k in keys:
        if not isinstance(grid[k], list):
            raise ConfigError(f"sweep.grid.{k} must be a list")
    points = []
    for values in itertools.product(*(grid[k] for k in keys)) if keys else []:
        assignment = dict(zip(keys, values))
        raw = {k: copy.deepcopy(v) for k, v in cfg.raw.items() if k not in ("sweep", "kind", "output_dir")}
        for k, v in assignment.items():
            _set_dotted(raw, k, v)
        raw["kind"] = base_kind
        raw["output_dir"] = point_key(assignment)
        points.append(ExperimentConfig.from_dict(raw))
    return points


def _run_point(args) -> tuple[str, int, dict]:
    raw, out = args
    cfg = ExperimentConfig.from_dict(raw)
    man = _execute(cfg, Path(out))
    return cfg.raw["output_dir"], man.exit_code, man.statuses


def _run_sweep(cfg, out, man, stage):
    points = sweep_points(cfg)
    jobs = cfg.jobs or os.cpu_count() or 1
    tasks = [(p.raw, str(out / "points" / p.raw["output_dir"])) for p in points]
    with stage("points"):
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as ex:
                results = list(ex.map(_run_point, tasks))
        else:
            results = [_run_point(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    cols = sorted({k for _, _, st in results for k in st})
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "exit_code", *cols])
        for key, code, st in results:
            w.writerow([key, code, *(st.get(c, "") for c in cols)])
    for key, code, st in results:
        man.statuses[key] = "ok" if code == EXIT_OK else "failed"
    return max((code for _, code, _ in results), default=EXIT_OK)


RUNNERS["sweep"] = _run_sweep


def _execute(cfg: ExperimentConfig, out: Path) -> RunManifest:
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(cfg.raw, artifact_version(), cfg.seed)
    try:
        man.exit_code = RUNNERS[cfg.kind](cfg, out, man, _Stages(man))
    except Exception as exc:  # keep partial outputs, mark the manifest
        log.exception("experiment failed")
        man.partial = True
        man.statuses["error"] = f"{type(exc).__name__}: {exc}"
        man.exit_code = EXIT_FAIL
    man.write(out)
    return man


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute ``cfg`` and write all outputs plus the run manifest under its output directory."""
    return _execute(cfg, cfg.resolved_output())


def sweep(cfg: ExperimentConfig) -> RunManifest:
    if cfg.kind != "sweep":
        raise ConfigError("sweep() needs a sweep config")
    return run(cfg)
