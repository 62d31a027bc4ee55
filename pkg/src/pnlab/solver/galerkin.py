"""Spectral basis of discrete Dirichlet eigenmodes and hat functions in time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import Grid, GridFunction


def _modes_1d(n: int, L: float) -> tuple[np.ndarray, np.ndarray]:
    h = L / (n + 1)
    j = np.arange(1, n + 1)
    k = np.arange(1, n + 1)
    vecs = np.sqrt(2.0 / L) * np.sin(np.outer(k, j) * np.pi / (n + 1))
    lams = 4.0 / h**2 * np.sin(k * np.pi * h / (2 * L)) ** 2
    return lams, vecs


@dataclass(frozen=True)
class GalerkinBasis:
    """First ``m`` eigenvectors of ``−Δ_h`` (discrete sine modes), orthonormal in discrete L₂.

    ``modes`` has shape ``(m, grid.size)``; ``eigenvalues`` are the exact
    discrete eigenvalues, sorted ascending (ties broken by mode index).
    """

    grid: Grid
    m: int
    eigenvalues: np.ndarray = field(repr=False)
    modes: np.ndarray = field(repr=False)
    labels: tuple = field(repr=False)
    time_nodes: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def build(cls, grid: Grid, m: int, time_nodes=None) -> "GalerkinBasis":
        if not 1 <= m <= grid.size:
            raise ValueError(f"m must lie in [1, {grid.size}] on this grid, got {m}")
        per_axis = [_modes_1d(n, L) for n, L in zip(grid.n_cells, grid.extents)]
        if grid.dim == 1:
            lams, vecs = per_axis[0]
            labels = tuple((k + 1,) for k in range(m))
            return cls(grid, m, lams[:m].copy(), vecs[:m].copy(), labels, _tn(time_nodes))
        (lx, vx), (ly, vy) = per_axis
        pairs = sorted(((lx[i] + ly[j], i, j) for i in range(len(lx)) for j in range(len(ly))))[:m]
        lams = np.array([p[0] for p in pairs])
        modes = np.stack([np.outer(vx[i], vy[j]).ravel() for _, i, j in pairs])
        labels = tuple((i + 1, j + 1) for _, i, j in pairs)
        return cls(grid, m, lams, modes, labels, _tn(time_nodes))

    def project(self, u: GridFunction | np.ndarray) -> np.ndarray:
        vals = u.values if isinstance(u, GridFunction) else np.asarray(u)
        return self.modes @ vals.ravel() * self.grid.cell_volume

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return (np.asarray(c) @ self.modes).reshape(self.grid.shape)

    def gram(self) -> np.ndarray:
        return self.modes @ self.modes.T * self.grid.cell_volume

    def hat(self, s: int, t: float | np.ndarray) -> np.ndarray:
        """Piecewise-linear hat function θˢ centred on ``time_nodes[s]``."""
        if self.time_nodes is None:
            raise ValueError("basis built without a time grid")
        e = np.zeros(len(self.time_nodes))
        e[s] = 1.0
        return np.interp(t, self.time_nodes, e)


def _tn(t):
    return None if t is None else np.asarray(t, dtype=float)
