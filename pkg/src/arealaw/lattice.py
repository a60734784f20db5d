"""Hypercubic lattices, regions and their boundaries.

Sites live on integer coordinates with unit spacing; distances are Euclidean
(minimum image along periodic axes).  A site of a region ``V`` is on the
boundary when some site outside ``V`` is within distance 1 of it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class LatticeError(ValueError):
    """Malformed lattice query (bad index, trivial region, ...)."""


@dataclass(frozen=True)
class LatticeGeometry:
    """Finite hypercubic lattice.

    Parameters
    ----------
    extents : tuple of int
        Number of sites along each axis; ``len(extents)`` is the dimension.
    periodic : bool
        Use minimum-image distances along every axis.
    """

    extents: tuple[int, ...]
    periodic: bool = False
    sites: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ext = tuple(int(e) for e in self.extents)
        if not ext or any(e < 1 for e in ext):
            raise LatticeError(f"extents must be positive integers, got {self.extents!r}")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "sites", tuple(itertools.product(*(range(e) for e in ext))))

    @classmethod
    def chain(cls, n: int, periodic: bool = False) -> "LatticeGeometry":
        return cls((n,), periodic)

    @classmethod
    def square(cls, lx: int, ly: int, periodic: bool = False) -> "LatticeGeometry":
        return cls((lx, ly), periodic)

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def __len__(self) -> int:
        return self.n_sites

    def _check(self, i: int) -> int:
        if not isinstance(i, (int, np.integer)) or not 0 <= i < self.n_sites:
            raise LatticeError(f"site index {i!r} out of range for {self.n_sites} sites")
        return int(i)

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        pos = np.array(self.sites, dtype=float)
        diff = np.abs(pos[:, None, :] - pos[None, :, :])
        if self.periodic:
            ext = np.array(self.extents, dtype=float)
            diff = np.minimum(diff, ext - diff)
        dist = np.sqrt((diff ** 2).sum(-1))
        dist.setflags(write=False)
        return dist

    def distance(self, i: int, j: int) -> float:
        """Euclidean distance between sites ``i`` and ``j`` in lattice units."""
        return float(self.distance_matrix[self._check(i), self._check(j)])

    def index(self, coord: Sequence[int]) -> int:
        try:
            return self.sites.index(tuple(int(c) for c in coord))
        except ValueError:
            raise LatticeError(f"coordinate {tuple(coord)} not on lattice") from None

    def diameter(self) -> float:
        return float(self.distance_matrix.max())

    def ball(self, centers: Iterable[int], radius: float) -> frozenset[int]:
        """Sites within distance ``radius`` (inclusive) of any of ``centers``."""
        c = [self._check(i) for i in centers]
        if not c:
            return frozenset()
        near = (self.distance_matrix[c] <= radius + 1e-12).any(axis=0)
        return frozenset(np.flatnonzero(near).tolist())

    def region(self, sites: Iterable[int]) -> "Region":
        return Region(self, frozenset(self._check(i) for i in sites))

    def slab(self, axis: int, start: int, stop: int) -> "Region":
        """Axis-aligned slab ``start <= coord[axis] < stop``."""
        if not 0 <= axis < self.dimension:
            raise LatticeError(f"axis {axis} invalid for dimension {self.dimension}")
        return self.region(k for k, s in enumerate(self.sites) if start <= s[axis] < stop)

    def left_half(self) -> "Region":
        return self.slab(0, 0, self.extents[0] // 2)


@dataclass(frozen=True)
class Region:
    lattice: LatticeGeometry
    sites: frozenset[int]

    def __len__(self) -> int:
        return len(self.sites)

    def __contains__(self, i: int) -> bool:
        return i in self.sites

    @property
    def sorted(self) -> list[int]:
        return sorted(self.sites)

    @property
    def complement(self) -> frozenset[int]:
        return frozenset(range(self.lattice.n_sites)) - self.sites

    def is_trivial(self) -> bool:
        return not self.sites or not self.complement

    @cached_property
    def boundary(self) -> frozenset[int]:
        return boundary(self)


def boundary(region: Region) -> frozenset[int]:
    """Sites of ``region`` with a complement site at distance <= 1."""
    if region.is_trivial():
        raise LatticeError("boundary undefined for an empty or full region")
    inside = sorted(region.sites)
    outside = sorted(region.complement)
    dist = region.lattice.distance_matrix[np.ix_(inside, outside)]
    hit = (dist <= 1.0 + 1e-12).any(axis=1)
    return frozenset(i for i, h in zip(inside, hit) if h)


def depth_coordinate(i: int, region: Region) -> tuple[int, int]:
    """Boundary coordinate ``(x_i, r_i)`` of a site inside ``region``.

    ``r_i`` is the distance to the nearest boundary site rounded down, and
    ``x_i`` is that nearest boundary site (lowest index on ties).
    """
    lat = region.lattice
    i = lat._check(i)
    if i not in region.sites:
        raise LatticeError(f"site {i} is not inside the region")
    bnd = sorted(boundary(region))
    dist = lat.distance_matrix[i, bnd]
    k = int(np.argmin(dist))  # argmin returns the first minimum -> lowest index
    return bnd[k], int(math.floor(dist[k] + 1e-12))


def crossing_pair_sum(region: Region, alpha: float) -> float:
    """Exact ``sum_{i in V, j not in V} r_ij**(-alpha)``."""
    if alpha <= 0:
        raise LatticeError("alpha must be positive")
    if region.is_trivial():
        return 0.0
    dist = region.lattice.distance_matrix[np.ix_(sorted(region.sites), sorted(region.complement))]
    return float(np.sum(dist ** (-float(alpha))))


def half_chain_crossing_bracket(length: int, alpha: float) -> tuple[float, float]:
    """Bracket for the infinite single-cut crossing sum ``zeta(alpha - 1)``.

    Uses a chain of ``2 * length`` sites cut in the middle.  The lower end is the
    exact finite crossing sum, the upper end adds the integral-test tail
    ``length**(2 - alpha) / (alpha - 2)`` for pairs beyond distance ``length``.
    """
    if alpha <= 2:
        raise LatticeError("single-cut crossing sum diverges for alpha <= 2 in 1D")
    lat = LatticeGeometry.chain(2 * length)
    lower = crossing_pair_sum(lat.left_half(), alpha)
    tail = length ** (2.0 - alpha) / (alpha - 2.0)
    return lower, lower + tail
