"""Triadic cube bookkeeping: cubes, partitions, adapted rectangles, Whitney covers.

Cubes use a lower-corner convention at unit cell resolution: the cube of
level n anchored at `base` covers the integer cells base + [0, 3^n)^d.
Adapted rectangles are images of centered cubes under a symmetric matrix q0
and are represented through the set of unit cells whose centers they contain;
the half-open membership window makes translates partition the plane, which
subsumes lexicographic tie-breaking for points equidistant to the lattice.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class GridError(Exception):
    pass


class BadPartition(GridError):
    pass


# A cell index is a tuple of integer coordinates of a unit cell.
CellIndex = tuple


@dataclass(frozen=True)
class TriadicCube:
    """Triadic cube of side 3^level unit cells, anchored at its lower corner."""

    level: int
    base: tuple
    d: int

    def __post_init__(self):
        if self.level < 0:
            raise GridError("negative level")
        base = tuple(int(b) for b in self.base)
        if len(base) != self.d:
            raise GridError("base / dimension mismatch")
        object.__setattr__(self, "base", base)

    @property
    def side(self):
        return 3 ** self.level

    @property
    def volume(self):
        return self.side ** self.d

    def slices(self, origin=None):
        """Index slices of this cube's cells relative to a box origin."""
        o = origin if origin is not None else (0,) * self.d
        return tuple(slice(b - oo, b - oo + self.side) for b, oo in zip(self.base, o))

    def cells(self):
        """All unit-cell indices, lexicographic order, as an (m, d) int array."""
        axes = [np.arange(b, b + self.side) for b in self.base]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=-1)

    def center(self):
        return np.asarray(self.base, dtype=float) + 0.5 * self.side

    def child(self, offset, k):
        return TriadicCube(k, tuple(b + 3**k * o for b, o in zip(self.base, offset)), self.d)


def partition(cube: TriadicCube, k: int):
    """Split a cube into its 3^{d(level-k)} level-k subcubes, lexicographically."""
    if k > cube.level or k < 0:
        raise BadPartition(f"cannot partition level {cube.level} into level {k}")
    m = 3 ** (cube.level - k)
    return [
        cube.child(offset, k)
        for offset in itertools.product(range(m), repeat=cube.d)
    ]


def subcubes_in(cube: TriadicCube, k: int):
    """Alias used by multiscale sums: lattice 3^k Z^d restricted to the cube."""
    return partition(cube, k)


def concentric_cube(cube: TriadicCube, r: int) -> TriadicCube:
    """Level-r cube sharing the parent's center (triadic sides are odd, so
    the centers align exactly)."""
    if r > cube.level:
        raise GridError("inner level exceeds the cube level")
    shift = (cube.side - 3**r) // 2
    return TriadicCube(r, tuple(b + shift for b in cube.base), cube.d)


@dataclass(frozen=True)
class AdaptedCube:
    """Image of a centered triadic cube under q0, tracked through unit cells."""

    level: int
    base: tuple  # center point, a point of the scaled lattice 3^level * q0(Z^d)
    q0: np.ndarray

    def __post_init__(self):
        q = np.array(self.q0, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise GridError("q0 must be a square matrix")
        if np.abs(q - q.T).max() > 1e-12 * max(1.0, np.abs(q).max()):
            raise GridError("q0 must be symmetric")
        q.flags.writeable = False
        object.__setattr__(self, "q0", q)
        object.__setattr__(self, "base", tuple(float(b) for b in self.base))
        if len(self.base) != q.shape[0]:
            raise GridError("base / q0 dimension mismatch")

    @property
    def d(self):
        return self.q0.shape[0]

    @property
    def side(self):
        return 3 ** self.level


def adapted_cells(ac: AdaptedCube):
    """Unit cells whose centers x satisfy q0^{-1}(x - center) in [-L/2, L/2)^d.

    Returned lexicographically sorted as an (m, d) integer array.
    """
    d = ac.d
    L = float(ac.side)
    qinv = np.linalg.inv(ac.q0)
    center = np.asarray(ac.base)
    # bounding box of q0([-L/2, L/2]^d) around the center
    radius = np.abs(ac.q0).sum(axis=1) * (L / 2.0)
    lo = np.floor(center - radius - 1).astype(int)
    hi = np.ceil(center + radius + 1).astype(int)
    axes = [np.arange(lo[i], hi[i]) for i in range(d)]
    grid = np.meshgrid(*axes, indexing="ij")
    cells = np.stack([g.ravel() for g in grid], axis=-1)
    y = (cells + 0.5 - center) @ qinv.T
    inside = np.all((y >= -L / 2.0) & (y < L / 2.0), axis=1)
    return cells[inside]


def cells_to_mask(cells, lo=None):
    """Boolean occupancy array for a cell set; returns (mask, lo)."""
    cells = np.asarray(cells, dtype=int)
    if lo is None:
        lo = cells.min(axis=0)
    shape = tuple(cells.max(axis=0) - lo + 1)
    mask = np.zeros(shape, dtype=bool)
    mask[tuple((cells - lo).T)] = True
    return mask, np.asarray(lo, dtype=int)


def whitney_partition(ac: AdaptedCube):
    """Greedy partition of the adapted cube's cell set into triadic cubes.

    Largest cubes first: at level j every lattice-aligned level-j cube whose
    cells all remain uncovered is taken; level 0 mops up the rest, so the
    result is an exact partition of adapted_cells(ac).
    """
    cells = adapted_cells(ac)
    if cells.size == 0:
        return []
    mask, lo = cells_to_mask(cells)
    d = ac.d
    out = []
    for j in range(ac.level, 0, -1):
        side = 3**j
        # lattice-aligned candidates in absolute coordinates
        starts = [
            np.arange(-(-lo[i] // side) * side - side, lo[i] + mask.shape[i] + side, side)
            for i in range(d)
        ]
        for corner in itertools.product(*starts):
            rel = np.asarray(corner) - lo
            if np.any(rel < 0) or np.any(rel + side > mask.shape):
                continue
            block = mask[tuple(slice(r, r + side) for r in rel)]
            if block.all():
                out.append(TriadicCube(j, tuple(int(c) for c in corner), d))
                mask[tuple(slice(r, r + side) for r in rel)] = False
    rest = np.argwhere(mask)
    for rel in rest:
        out.append(TriadicCube(0, tuple(int(c) for c in rel + lo), d))
    return out
