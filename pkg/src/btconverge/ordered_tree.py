"""Ordered trees and the partial orders derived from them.

An ordered tree is a rooted tree with an additional left-to-right order
among the children of every vertex.  It is stored as two edge sets over a
dense vertex range 0..n-1: child-to-parent edges and left-to-right sibling
edges.  From those we derive the ancestor order, the sibling order, the
uncle orders obtained by composition, and the parent map.  Everything
downstream (tick semantics, influence regions, pathway sets) is phrased in
terms of these orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional


class TreeStructureError(ValueError):
    """Raised when edge sets do not describe a valid ordered tree."""


class Relation:
    """A binary relation over vertices 0..n-1, one successor bitset per source.

    Instances are treated as immutable values; all operations return new
    relations.
    """

    __slots__ = ("n", "rows")

    def __init__(self, n: int, pairs: Iterable[tuple[int, int]] = ()) -> None:
        rows = [0] * n
        for i, j in pairs:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"pair ({i}, {j}) outside vertex range 0..{n - 1}")
            rows[i] |= 1 << j
        self.n = n
        self.rows = tuple(rows)

    @classmethod
    def _from_rows(cls, n: int, rows: list[int]) -> "Relation":
        rel = cls.__new__(cls)
        rel.n = n
        rel.rows = tuple(rows)
        return rel

    def __contains__(self, pair: tuple[int, int]) -> bool:
        i, j = pair
        return bool(self.rows[i] >> j & 1)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Relation)
            and self.n == other.n
            and self.rows == other.rows
        )

    def __hash__(self) -> int:
        return hash((self.n, self.rows))

    def __repr__(self) -> str:
        return f"Relation({self.n}, {sorted(self.pairs())})"

    def pairs(self) -> Iterator[tuple[int, int]]:
        for i, row in enumerate(self.rows):
            while row:
                low = row & -row
                yield (i, low.bit_length() - 1)
                row ^= low

    def successors(self, i: int) -> int:
        """Bitset of vertices j with (i, j) in the relation."""
        return self.rows[i]

    def union(self, other: "Relation") -> "Relation":
        self._check(other)
        return Relation._from_rows(self.n, [a | b for a, b in zip(self.rows, other.rows)])

    def converse(self) -> "Relation":
        rows = [0] * self.n
        for i, j in self.pairs():
            rows[j] |= 1 << i
        return Relation._from_rows(self.n, rows)

    def strict(self) -> "Relation":
        """Drop every reflexive pair."""
        return Relation._from_rows(
            self.n, [row & ~(1 << i) for i, row in enumerate(self.rows)]
        )

    def is_reflexive(self) -> bool:
        return all(row >> i & 1 for i, row in enumerate(self.rows))

    def is_irreflexive(self) -> bool:
        return not any(row >> i & 1 for i, row in enumerate(self.rows))

    def is_transitive(self) -> bool:
        for i in range(self.n):
            row = self.rows[i]
            j_bits = row
            while j_bits:
                low = j_bits & -j_bits
                j = low.bit_length() - 1
                if self.rows[j] & ~row:
                    return False
                j_bits ^= low
        return True

    def is_antisymmetric(self) -> bool:
        return all(
            i == j for i, j in self.pairs() if (j, i) in self
        )

    def _check(self, other: "Relation") -> None:
        if self.n != other.n:
            raise ValueError("relations over different vertex sets")


def reflexive_transitive_closure(rel: Relation) -> Relation:
    """Smallest reflexive and transitive relation containing ``rel``.

    Bit-parallel Floyd-Warshall; n is small throughout this package so the
    O(n^2) word operations are negligible.
    """
    n = rel.n
    rows = list(rel.rows)
    for k in range(n):
        bit = 1 << k
        for i in range(n):
            if rows[i] & bit:
                rows[i] |= rows[k]
    for i in range(n):
        rows[i] |= 1 << i
    return Relation._from_rows(n, rows)


def compose(a: Relation, b: Relation) -> Relation:
    """Relation {(i, k) | exists j with (i, j) in a and (j, k) in b}."""
    a._check(b)
    rows = [0] * a.n
    for i in range(a.n):
        j_bits = a.rows[i]
        acc = 0
        while j_bits:
            low = j_bits & -j_bits
            acc |= b.rows[low.bit_length() - 1]
            j_bits ^= low
        rows[i] = acc
    return Relation._from_rows(a.n, rows)


@dataclass(frozen=True)
class TreeOrders:
    """All derived orders of an ordered tree.

    parent_order holds (ancestor-or-self, descendant) pairs, sibling_order
    holds (left-or-self, right) pairs among siblings.  left_uncle and
    right_uncle are the strict composed orders: (j, i) in left_uncle means
    j is a left sibling of some ancestor-or-self of i; right_uncle is the
    mirror image.  left_to_right / right_to_left extend the uncle orders
    downward through descendants and are exposed for diagnostics only.
    """

    parent_order: Relation
    sibling_order: Relation
    left_uncle: Relation
    right_uncle: Relation
    left_to_right: Relation
    right_to_left: Relation
    parent_map: tuple[Optional[int], ...]


class OrderedTree:
    """Vertex set plus parent and sibling edge sets, validated on construction.

    parent_edges are (child, parent) pairs; sibling_edges are (left, right)
    pairs between children of the same parent.  The children of every vertex
    must be totally ordered by the closure of the sibling edges.
    """

    __slots__ = ("n", "parent_edges", "sibling_edges", "parent", "children", "root", "_orders")

    def __init__(
        self,
        n: int,
        parent_edges: Iterable[tuple[int, int]],
        sibling_edges: Iterable[tuple[int, int]],
    ) -> None:
        parent_edges = frozenset(parent_edges)
        sibling_edges = frozenset(sibling_edges)
        if n <= 0:
            raise TreeStructureError("tree needs at least one vertex")
        for i, j in parent_edges | sibling_edges:
            if not (0 <= i < n and 0 <= j < n):
                raise TreeStructureError(f"edge ({i}, {j}) outside vertex range")
        if parent_edges & sibling_edges:
            raise TreeStructureError("parent and sibling edge sets overlap")

        parent: list[Optional[int]] = [None] * n
        for child, par in parent_edges:
            if child == par:
                raise TreeStructureError(f"self-loop parent edge at {child}")
            if parent[child] is not None:
                raise TreeStructureError(f"vertex {child} has two parents")
            parent[child] = par
        roots = [i for i in range(n) if parent[i] is None]
        if len(roots) != 1:
            raise TreeStructureError(f"expected exactly one root, found {roots}")
        root = roots[0]
        # acyclicity: walking up from any vertex must reach the root
        for i in range(n):
            seen = set()
            j: Optional[int] = i
            while j is not None:
                if j in seen:
                    raise TreeStructureError(f"parent edges contain a cycle through {j}")
                seen.add(j)
                j = parent[j]

        kids: dict[int, list[int]] = {i: [] for i in range(n)}
        for i in range(n):
            if parent[i] is not None:
                kids[parent[i]].append(i)
        for left, right in sibling_edges:
            if parent[left] != parent[right] or parent[left] is None:
                raise TreeStructureError(
                    f"sibling edge ({left}, {right}) does not join children of one parent"
                )

        sib = Relation(n, sibling_edges)
        sib_closed = reflexive_transitive_closure(sib)
        if not sib_closed.is_antisymmetric():
            raise TreeStructureError("sibling edges contain a cycle")
        children: list[tuple[int, ...]] = [()] * n
        for par, group in kids.items():
            for a in group:
                for b in group:
                    if a != b and (a, b) not in sib_closed and (b, a) not in sib_closed:
                        raise TreeStructureError(
                            f"children {a} and {b} of {par} are not sibling-ordered"
                        )
            # total order: sort by number of right successors, descending
            children[par] = tuple(
                sorted(group, key=lambda v: -(sib_closed.successors(v).bit_count()))
            )

        self.n = n
        self.parent_edges = parent_edges
        self.sibling_edges = sibling_edges
        self.parent = tuple(parent)
        self.children = tuple(children)
        self.root = root
        self._orders: Optional[TreeOrders] = None

    @classmethod
    def from_children(cls, children: dict[int, Iterable[int]], n: int) -> "OrderedTree":
        """Build from ordered child lists; consecutive children become sibling edges."""
        parent_edges = []
        sibling_edges = []
        for par, group in children.items():
            group = list(group)
            for child in group:
                parent_edges.append((child, par))
            for left, right in zip(group, group[1:]):
                sibling_edges.append((left, right))
        return cls(n, parent_edges, sibling_edges)

    def orders(self) -> TreeOrders:
        if self._orders is None:
            self._orders = self._derive()
        return self._orders

    def _derive(self) -> TreeOrders:
        n = self.n
        # parent_order: (ancestor-or-self, descendant); close parent->child edges
        down = Relation(n, ((p, c) for c, p in self.parent_edges))
        parent_order = reflexive_transitive_closure(down)
        sibling_order = reflexive_transitive_closure(Relation(n, self.sibling_edges))
        strict_sib = sibling_order.strict()
        left_uncle = compose(strict_sib, parent_order)
        right_uncle = compose(strict_sib.converse(), parent_order)
        desc_to_anc = parent_order.converse()  # (descendant-or-self, ancestor)
        left_to_right = compose(desc_to_anc, left_uncle)
        right_to_left = compose(desc_to_anc, right_uncle)
        return TreeOrders(
            parent_order=parent_order,
            sibling_order=sibling_order,
            left_uncle=left_uncle,
            right_uncle=right_uncle,
            left_to_right=left_to_right,
            right_to_left=right_to_left,
            parent_map=self.parent,
        )

    def ancestors_or_self(self, i: int) -> Iterator[int]:
        j: Optional[int] = i
        while j is not None:
            yield j
            j = self.parent[j]

    def __repr__(self) -> str:
        return f"OrderedTree(n={self.n}, root={self.root})"
