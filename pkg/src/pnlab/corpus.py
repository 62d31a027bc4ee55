"""Test-function corpora for the embedding checks.

Every smooth member is a closed form vanishing on the boundary, so a corpus
can be re-sampled on any grid of the same domain for refinement studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .grid import Grid, GridFunction

DEFAULT_SEED = 20240611


@dataclass(frozen=True)
class CorpusMember:
    id: str
    family: str
    params: dict = field(default_factory=dict, compare=False)
    func: Callable[..., np.ndarray] | None = field(default=None, compare=False, repr=False)
    grid_func: Callable[[Grid], np.ndarray] | None = field(default=None, compare=False, repr=False)
    smooth: bool = True

    def sample(self, grid: Grid) -> GridFunction:
        if self.grid_func is not None:
            return GridFunction(grid, self.grid_func(grid))
        return grid.sample(self.func)


@dataclass(frozen=True)
class TestCorpus:
    __test__ = False  # not a pytest class

    grid: Grid
    members: tuple[CorpusMember, ...]
    functions: tuple[GridFunction, ...]
    seed: int | None = None

    @classmethod
    def from_members(cls, grid: Grid, members, seed: int | None = None) -> "TestCorpus":
        members = tuple(members)
        ids = [m.id for m in members]
        if len(set(ids)) != len(ids):
            raise ValueError("corpus member ids must be unique")
        return cls(grid, members, tuple(m.sample(grid) for m in members), seed)

    def on(self, grid: Grid) -> "TestCorpus":
        return TestCorpus.from_members(grid, self.members, self.seed)

    def refined(self) -> "TestCorpus":
        return self.on(self.grid.refine())

    def subset(self, ids) -> "TestCorpus":
        keep = set(ids)
        return TestCorpus.from_members(self.grid, [m for m in self.members if m.id in keep], self.seed)

    def __iter__(self) -> Iterator[tuple[CorpusMember, GridFunction]]:
        return iter(zip(self.members, self.functions))

    def __len__(self) -> int:
        return len(self.members)


def _sine(k: int, L: float):
    return lambda x: np.sin(k * np.pi * x / L)


def _bump(a: float, b: float, L: float):
    # scaled so max is O(1) for every (a, b)
    peak = (a / (a + b)) ** a * (b / (a + b)) ** b
    return lambda x: (x / L) ** a * (1 - x / L) ** b / peak


def _trig_sum(coefs: np.ndarray, L: float):
    ks = np.arange(1, len(coefs) + 1)

    def f(x):
        x = np.asarray(x)
        return np.tensordot(coefs, np.sin(np.multiply.outer(ks, x) * np.pi / L), axes=1)

    return f


def _trig_sum_2d(coefs: np.ndarray, Lx: float, Ly: float):
    K, M = coefs.shape

    def f(x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for k in range(K):
            sx = np.sin((k + 1) * np.pi * x / Lx)
            for m in range(M):
                out = out + coefs[k, m] * sx * np.sin((m + 1) * np.pi * y / Ly)
        return out

    return f


def members_1d(extent: float = 1.0, seed: int = DEFAULT_SEED, n_random: int = 6) -> list[CorpusMember]:
    L = extent
    out = [CorpusMember(f"sin{k}", "sine", {"k": k}, _sine(k, L)) for k in range(1, 6)]
    for a, b in [(1, 1), (2, 2), (2, 3), (3, 2), (3, 3)]:
        out.append(CorpusMember(f"bump{a}{b}", "bump", {"a": a, "b": b}, _bump(a, b, L)))
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        coefs = rng.standard_normal(4) / np.arange(1, 5) ** 2
        out.append(CorpusMember(f"trig{i}", "random_trig", {"coefs": coefs.tolist()}, _trig_sum(coefs, L)))
    return out


def members_2d(extents=(1.0, 1.0), seed: int = DEFAULT_SEED, n_random: int = 6) -> list[CorpusMember]:
    Lx, Ly = extents
    out = []
    for k, m in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3)]:
        sx, sy = _sine(k, Lx), _sine(m, Ly)
        out.append(CorpusMember(f"sin{k}x{m}", "sine", {"k": k, "m": m}, lambda x, y, sx=sx, sy=sy: sx(x) * sy(y)))
    for a, b in [(1, 1), (2, 2), (2, 3), (3, 3)]:
        bx, by = _bump(a, b, Lx), _bump(b, a, Ly)
        out.append(CorpusMember(f"bump{a}{b}x{b}{a}", "bump", {"a": a, "b": b}, lambda x, y, bx=bx, by=by: bx(x) * by(y)))
    rng = np.random.default_rng(seed + 1)
    for i in range(n_random):
        coefs = rng.standard_normal((3, 3)) / np.add.outer(np.arange(1, 4), np.arange(1, 4)) ** 2
        out.append(CorpusMember(f"trig2d{i}", "random_trig", {"coefs": coefs.tolist()}, _trig_sum_2d(coefs, Lx, Ly)))
    return out


def default_corpus(grid: Grid, seed: int = DEFAULT_SEED) -> TestCorpus:
    if grid.dim == 1:
        members = members_1d(grid.extents[0], seed)
    else:
        members = members_2d(grid.extents, seed)
    return TestCorpus.from_members(grid, members, seed)


def _sawtooth(grid: Grid) -> np.ndarray:
    # equal values on odd nodes, zero on even nodes; with an odd node count on
    # every axis this lies in the kernel of the centred gradient
    masks = [(np.arange(1, n + 1) % 2 == 1).astype(float) for n in grid.n_cells]
    if grid.dim == 1:
        return masks[0]
    return np.multiply.outer(masks[0], masks[1])


def sawtooth_member() -> CorpusMember:
    """Grid-scale oscillation; not C²-representable, used to build a corpus that must fail."""
    return CorpusMember("sawtooth", "sawtooth", {}, grid_func=_sawtooth, smooth=False)


def broken_corpus(grid: Grid, seed: int = DEFAULT_SEED) -> TestCorpus:
    base = default_corpus(grid, seed)
    return TestCorpus.from_members(grid, [*base.members, sawtooth_member()], seed)
