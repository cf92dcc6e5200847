"""Finite cell universe, region set algebra, and the neighboring predicate.

The continuous state space is modeled as a finite set of cells 0..N-1.
Regions are bitsets over the cells, controller dynamics are total successor
maps, and closeness between regions is either metric (cell coordinates plus
a step bound) or declared through an explicit adjacency relation.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Iterator, Optional, Sequence


class WorldError(ValueError):
    """Raised for malformed universes or mismatched region universes."""


class Region:
    """An immutable subset of a world's cells, stored as an int bitmask."""

    __slots__ = ("n", "mask")

    def __init__(self, n: int, mask: int = 0) -> None:
        if mask < 0 or mask >> n:
            raise WorldError(f"mask has bits outside universe of {n} cells")
        self.n = n
        self.mask = mask

    @classmethod
    def from_cells(cls, n: int, cells: Iterable[int]) -> "Region":
        mask = 0
        for c in cells:
            if not 0 <= c < n:
                raise WorldError(f"cell {c} outside universe of {n} cells")
            mask |= 1 << c
        return cls(n, mask)

    @classmethod
    def full(cls, n: int) -> "Region":
        return cls(n, (1 << n) - 1)

    @classmethod
    def empty(cls, n: int) -> "Region":
        return cls(n, 0)

    @classmethod
    def where(cls, n: int, pred: Callable[[int], bool]) -> "Region":
        return cls.from_cells(n, (c for c in range(n) if pred(c)))

    def _check(self, other: "Region") -> None:
        if self.n != other.n:
            raise WorldError("regions over different universes")

    def __or__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.n, self.mask | other.mask)

    def __and__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.n, self.mask & other.mask)

    def __sub__(self, other: "Region") -> "Region":
        self._check(other)
        return Region(self.n, self.mask & ~other.mask)

    def complement(self) -> "Region":
        return Region(self.n, ~self.mask & ((1 << self.n) - 1))

    def issubset(self, other: "Region") -> bool:
        self._check(other)
        return not (self.mask & ~other.mask)

    def isdisjoint(self, other: "Region") -> bool:
        self._check(other)
        return not (self.mask & other.mask)

    @property
    def is_empty(self) -> bool:
        return self.mask == 0

    def __contains__(self, cell: int) -> bool:
        return bool(self.mask >> cell & 1)

    def __len__(self) -> int:
        return self.mask.bit_count()

    def __bool__(self) -> bool:  # pragma: no cover - guard against misuse
        raise TypeError("Region truthiness is ambiguous; use .is_empty")

    def cells(self) -> Iterator[int]:
        mask = self.mask
        while mask:
            low = mask & -mask
            yield low.bit_length() - 1
            mask ^= low

    def any_cell(self) -> int:
        if not self.mask:
            raise WorldError("empty region has no cells")
        return (self.mask & -self.mask).bit_length() - 1

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Region) and self.n == other.n and self.mask == other.mask

    def __hash__(self) -> int:
        return hash((self.n, self.mask))

    def __repr__(self) -> str:
        return f"Region({self.n}, cells={sorted(self.cells())})"


class SuccessorMap:
    """Total one-step dynamics for one action leaf: cell -> cell."""

    __slots__ = ("n", "targets")

    def __init__(self, targets: Sequence[int]) -> None:
        n = len(targets)
        for c, t in enumerate(targets):
            if not 0 <= t < n:
                raise WorldError(f"successor of cell {c} is {t}, outside universe")
        self.n = n
        self.targets = tuple(targets)

    @classmethod
    def from_function(cls, n: int, fn: Callable[[int], int]) -> "SuccessorMap":
        return cls([fn(c) for c in range(n)])

    @classmethod
    def identity(cls, n: int) -> "SuccessorMap":
        return cls(range(n))

    def next(self, cell: int) -> int:
        return self.targets[cell]

    def image(self, region: Region) -> Region:
        return Region.from_cells(self.n, (self.targets[c] for c in region.cells()))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SuccessorMap) and self.targets == other.targets

    def __repr__(self) -> str:
        return f"SuccessorMap(n={self.n})"


class World:
    """A finite cell universe with optional metric coordinates or adjacency.

    Exactly one of ``coords`` / ``adjacency`` can be supplied.  With coords,
    neighboring is metric: two nonempty regions are neighboring when their
    minimal pairwise euclidean distance is at most the step bound delta.
    With adjacency, two regions are neighboring when they overlap or some
    cross pair is related.  Adjacency rows may be directed; symmetric inputs
    stay symmetric.
    """

    __slots__ = ("cell_count", "coords", "adjacency_rows", "_ball_cache")

    def __init__(
        self,
        cell_count: int,
        coords: Optional[Sequence[Sequence[float]]] = None,
        adjacency: Optional[Iterable[tuple[int, int]]] = None,
        adjacency_rows: Optional[Sequence[int]] = None,
        symmetric: bool = True,
    ) -> None:
        if cell_count <= 0:
            raise WorldError("cell_count must be positive")
        given = sum(x is not None for x in (coords, adjacency, adjacency_rows))
        if given > 1:
            raise WorldError("give at most one of coords / adjacency")
        self.cell_count = cell_count
        self.coords: Optional[tuple[tuple[float, ...], ...]] = None
        self.adjacency_rows: Optional[tuple[int, ...]] = None
        if coords is not None:
            pts = tuple(tuple(float(x) for x in p) for p in coords)
            if len(pts) != cell_count:
                raise WorldError("need one coordinate vector per cell")
            dims = {len(p) for p in pts}
            if len(dims) != 1:
                raise WorldError("coordinate vectors must share one dimension")
            self.coords = pts
        elif adjacency is not None:
            rows = [0] * cell_count
            for p, q in adjacency:
                if not (0 <= p < cell_count and 0 <= q < cell_count):
                    raise WorldError(f"adjacency pair ({p}, {q}) outside universe")
                rows[p] |= 1 << q
                if symmetric:
                    rows[q] |= 1 << p
            self.adjacency_rows = tuple(rows)
        elif adjacency_rows is not None:
            if len(adjacency_rows) != cell_count:
                raise WorldError("need one adjacency row per cell")
            self.adjacency_rows = tuple(adjacency_rows)
        self._ball_cache: dict[float, tuple[int, ...]] = {}

    # ------------------------------------------------------------------
    def distance(self, a: int, b: int) -> float:
        if self.coords is None:
            raise WorldError("world has no coordinates")
        return math.dist(self.coords[a], self.coords[b])

    def region(self, cells: Iterable[int]) -> Region:
        return Region.from_cells(self.cell_count, cells)

    def full_region(self) -> Region:
        return Region.full(self.cell_count)

    def _balls(self, delta: float) -> tuple[int, ...]:
        """Per-cell bitset of cells within delta (including the cell itself)."""
        cached = self._ball_cache.get(delta)
        if cached is not None:
            return cached
        n = self.cell_count
        rows = [1 << c for c in range(n)]
        for p in range(n):
            for q in range(p + 1, n):
                if self.distance(p, q) <= delta:
                    rows[p] |= 1 << q
                    rows[q] |= 1 << p
        result = tuple(rows)
        self._ball_cache[delta] = result
        return result

    def neighboring(self, a: Region, b: Region, delta: Optional[float] = None) -> bool:
        """True when a one-step transition between the two regions is possible.

        Both regions must be nonempty; callers drop empty sets first.
        """
        if a.is_empty or b.is_empty:
            raise WorldError("neighboring is undefined for empty regions")
        if a.n != self.cell_count or b.n != self.cell_count:
            raise WorldError("regions belong to a different universe")
        if self.coords is not None:
            if delta is None:
                raise WorldError("metric neighboring needs a step bound delta")
            balls = self._balls(delta)
            return any(balls[p] & b.mask for p in a.cells())
        if self.adjacency_rows is not None:
            if a.mask & b.mask:
                return True
            return any(self.adjacency_rows[p] & b.mask for p in a.cells())
        raise WorldError("world has neither coordinates nor adjacency")


def step_bound(world: World, maps: Iterable[SuccessorMap]) -> float:
    """Largest euclidean displacement any map makes from any cell."""
    if world.coords is None:
        raise WorldError("step bound needs coordinates; supply adjacency instead")
    delta = 0.0
    for m in maps:
        if m.n != world.cell_count:
            raise WorldError("successor map over a different universe")
        for c in range(world.cell_count):
            d = world.distance(c, m.next(c))
            if d > delta:
                delta = d
    return delta
