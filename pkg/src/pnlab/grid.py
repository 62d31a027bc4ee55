"""
Uniform Dirichlet grids on intervals and rectangles, and the discrete
calculus every other module is built on.

Only interior nodes carry unknowns. Boundary values are identically zero and
enter the stencils as zero ghost values, so the discrete Laplacian is the usual
3-point (1D) / 5-point (2D) operator and is symmetric with respect to the
inner product ``<u, w> = sum(u * w) * cell_volume``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class EigenSolveError(RuntimeError):
    """Inverse power iteration did not converge."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid of interior nodes on ``prod_i (0, L_i)``.

    ``spacing[i] = extents[i] / (n_cells[i] + 1)``; node ``j`` (1-based) on
    axis ``i`` sits at ``j * spacing[i]``.
    """

    extents: tuple[float, ...]
    n_cells: tuple[int, ...]

    def __post_init__(self):
        extents = tuple(float(v) for v in self.extents)
        n_cells = tuple(int(v) for v in self.n_cells)
        if len(extents) not in (1, 2) or len(extents) != len(n_cells):
            raise ValueError("grid must be 1D or 2D with one extent and one node count per axis")
        if any(L <= 0 or not np.isfinite(L) for L in extents):
            raise ValueError(f"extents must be positive and finite, got {extents}")
        if any(n < 3 for n in n_cells):
            raise ValueError(f"need at least 3 interior nodes per axis, got {n_cells}")
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "n_cells", n_cells)

    @classmethod
    def uniform(cls, n: int | Sequence[int], extent: float | Sequence[float] = 1.0, dim: int | None = None) -> "Grid":
        """Convenience constructor: ``Grid.uniform(99)`` or ``Grid.uniform(63, dim=2)``."""
        if dim is None:
            dim = len(n) if isinstance(n, Sequence) else (len(extent) if isinstance(extent, Sequence) else 1)
        ns = tuple(n) if isinstance(n, Sequence) else (n,) * dim
        Ls = tuple(extent) if isinstance(extent, Sequence) else (extent,) * dim
        return cls(Ls, ns)

    @property
    def dim(self) -> int:
        return len(self.n_cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.extents, self.n_cells))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n_cells

    @property
    def size(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod(self.extents))

    def axes(self) -> list[np.ndarray]:
        return [np.arange(1, n + 1) * h for n, h in zip(self.n_cells, self.spacing)]

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Nodal coordinate arrays, each of shape ``self.shape`` (ij indexing)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def refine(self) -> "Grid":
        """Halve the spacing; nodes of ``self`` are a subset of the result's nodes."""
        return Grid(self.extents, tuple(2 * n + 1 for n in self.n_cells))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def sample(self, func: Callable[..., np.ndarray]) -> "GridFunction":
        """Evaluate ``func(x)`` or ``func(x, y)`` at the interior nodes."""
        values = np.broadcast_to(np.asarray(func(*self.coordinates()), dtype=float), self.shape)
        return GridFunction(self, np.array(values))


@dataclass(frozen=True)
class GridFunction:
    """Interior nodal values of a scalar field; boundary values are zero."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other, self.grid))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other, self.grid))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _vals(other, grid: Grid):
    if isinstance(other, GridFunction):
        if other.grid != grid:
            raise ValueError("grid functions live on different grids")
        return other.values
    return other


@dataclass(frozen=True)
class EigenPair:
    """First Dirichlet eigenpair of ``-Δ`` on a grid.

    ``v1`` is the discrete eigenvector, positive and normalised so that
    ``integrate(v1**2) == 1``.
    """

    lambda1_discrete: float
    lambda1_continuum: float
    v1: GridFunction
    iterations: int
    residual: float

    @property
    def lambda1(self) -> float:
        return self.lambda1_continuum


def _pad(values: np.ndarray) -> np.ndarray:
    return np.pad(values, 1)


def laplacian_values(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Array-level 3/5-point Laplacian with zero ghost values."""
    p = _pad(values)
    out = np.zeros_like(values, dtype=float)
    for axis, h in enumerate(spacing):
        lo = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += (p[tuple(hi)] - 2.0 * values + p[tuple(lo)]) / h**2
    return out


def gradient_values(values: np.ndarray, spacing: Sequence[float]) -> list[np.ndarray]:
    """Array-level centred differences; the zero ghost makes near-boundary rows Dirichlet-aware."""
    p = _pad(values)
    comps = []
    for axis, h in enumerate(spacing):
        lo = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        comps.append((p[tuple(hi)] - p[tuple(lo)]) / (2.0 * h))
    return comps


def grad_norm_values(values: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    comps = gradient_values(values, spacing)
    return np.sqrt(sum(c * c for c in comps))


def laplacian(u: GridFunction) -> GridFunction:
    return u.with_values(laplacian_values(u.values, u.grid.spacing))


def gradient(u: GridFunction) -> list[GridFunction]:
    return [u.with_values(c) for c in gradient_values(u.values, u.grid.spacing)]


def grad_norm(u: GridFunction) -> GridFunction:
    """Nodewise Euclidean norm of the discrete gradient."""
    return u.with_values(grad_norm_values(u.values, u.grid.spacing))


def integrate(w: GridFunction | np.ndarray, grid: Grid | None = None) -> float:
    """Composite rule with full weight per interior node (boundary nodes carry 0)."""
    if isinstance(w, GridFunction):
        grid, values = w.grid, w.values
    else:
        if grid is None:
            raise TypeError("grid required when integrating a bare array")
        values = w
    return float(np.sum(values) * grid.cell_volume)


def inner(u: GridFunction, w: GridFunction) -> float:
    return integrate(u.values * _vals(w, u.grid), u.grid)


def l2_norm(u: GridFunction) -> float:
    return float(np.sqrt(inner(u, u)))


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of the discrete Laplacian acting on C-order flattened values."""
    mats = []
    for n, h in zip(grid.n_cells, grid.spacing):
        mats.append(sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2)
    if grid.dim == 1:
        return sp.csr_matrix(mats[0])
    nx, ny = grid.n_cells
    return sp.csr_matrix(sp.kron(mats[0], sp.identity(ny)) + sp.kron(sp.identity(nx), mats[1]))


def continuum_lambda1(grid: Grid) -> float:
    return float(np.pi**2 * sum(1.0 / L**2 for L in grid.extents))


def first_eigenpair(grid: Grid, tol: float = 1e-14, max_iter: int = 500) -> EigenPair:
    """Inverse power iteration on ``-Δ_h``; also reports the continuum ``π² Σ 1/L_i²``."""
    A = (-laplacian_matrix(grid)).tocsc()
    lu = spla.splu(A)
    dv = grid.cell_volume
    x = np.ones(grid.size)
    x /= np.sqrt(np.sum(x * x) * dv)
    lam = np.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        y /= np.sqrt(np.sum(y * y) * dv)
        if np.sum(y) < 0:
            y = -y
        lam_new = float(np.sum(y * (A @ y)) * dv)
        change = np.sqrt(np.sum((y - x) ** 2) * dv)
        x = y
        converged = abs(lam_new - lam) <= tol * lam_new and change <= 1e-12
        lam = lam_new
        if converged:
            break
    else:
        raise EigenSolveError(f"inverse power iteration did not converge in {max_iter} iterations")
    resid = float(np.sqrt(np.sum((A @ x - lam * x) ** 2) * dv) / lam)
    if resid > 1e-10 or np.any(x <= 0):
        raise EigenSolveError(f"eigenpair check failed: residual {resid:.3e}")
    return EigenPair(lam, continuum_lambda1(grid), GridFunction(grid, x), it, resid)
