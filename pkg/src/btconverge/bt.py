"""Behavior-tree models over a finite cell universe and their region analysis.

A model is an ordered tree whose internal vertices are Sequence or Fallback
composition nodes and whose leaves are Action or Condition nodes carrying
success/failure regions (and, for actions, one-step dynamics plus an
optional attraction basin).  The analysis computes, per vertex:

* the running/success/failure regions, propagated bottom-up from the leaves;
* the influence region, the necessary condition for the vertex to determine
  the root's output;
* membership in the success/failure pathway sets;
* the operating region, the sufficient condition under which the root's
  output equals the vertex's output.

Everything is exact set computation on bitset regions, so the analysis can
be cross-checked exhaustively against per-cell evaluation of the tick
cascade.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

from .ordered_tree import OrderedTree, TreeOrders
from .statespace import Region, SuccessorMap, World


class ModelError(ValueError):
    """Raised when a behavior-tree model violates its invariants."""


class NodeKind(enum.Enum):
    SEQUENCE = "seq"
    FALLBACK = "fal"
    ACTION = "action"
    CONDITION = "condition"


class Status(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass(frozen=True)
class Doa:
    """Attraction basin data for one action: basin, goal, step deadline."""

    basin: Region
    goal: Region
    horizon: int

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ModelError("doa horizon must be a positive step count")


@dataclass(frozen=True)
class LeafData:
    name: str
    kind: NodeKind
    success: Region
    failure: Region
    controller: Optional[SuccessorMap] = None
    doa: Optional[Doa] = None


@dataclass(frozen=True)
class NodeSpec:
    kind: NodeKind
    children: tuple["NodeSpec", ...] = ()
    leaf: Optional[LeafData] = None


def seq(*children: NodeSpec) -> NodeSpec:
    return NodeSpec(NodeKind.SEQUENCE, tuple(children))


def fal(*children: NodeSpec) -> NodeSpec:
    return NodeSpec(NodeKind.FALLBACK, tuple(children))


def action(
    name: str,
    success: Region,
    failure: Optional[Region] = None,
    controller: Optional[SuccessorMap] = None,
    doa: Optional[Doa] = None,
) -> NodeSpec:
    if failure is None:
        failure = Region.empty(success.n)
    return NodeSpec(
        NodeKind.ACTION,
        leaf=LeafData(name, NodeKind.ACTION, success, failure, controller, doa),
    )


def condition(name: str, success: Region, failure: Optional[Region] = None) -> NodeSpec:
    if failure is None:
        failure = success.complement()
    return NodeSpec(NodeKind.CONDITION, leaf=LeafData(name, NodeKind.CONDITION, success, failure))


class BTModel:
    """An immutable behavior-tree model bound to a world.

    Vertex ids are assigned by depth-first preorder over the node spec, so
    sibling order matches the order children were written in.
    """

    __slots__ = (
        "world",
        "tree",
        "kinds",
        "names",
        "leaves",
        "leaf_by_name",
        "_analysis",
    )

    def __init__(self, world: World, spec: NodeSpec) -> None:
        kinds: list[NodeKind] = []
        names: list[Optional[str]] = []
        leaves: dict[int, LeafData] = {}
        children_map: dict[int, list[int]] = {}

        def visit(node: NodeSpec) -> int:
            vid = len(kinds)
            kinds.append(node.kind)
            names.append(node.leaf.name if node.leaf is not None else None)
            children_map[vid] = []
            if node.kind in (NodeKind.SEQUENCE, NodeKind.FALLBACK):
                if not node.children:
                    raise ModelError(f"{node.kind.value} vertex {vid} has no children")
                for child in node.children:
                    children_map[vid].append(visit(child))
            else:
                if node.children:
                    raise ModelError("leaf nodes cannot have children")
                if node.leaf is None:
                    raise ModelError("leaf node without leaf data")
                leaves[vid] = node.leaf
            return vid

        visit(spec)
        n = len(kinds)
        self.world = world
        self.tree = OrderedTree.from_children(children_map, n)
        self.kinds = tuple(kinds)
        self.names = tuple(names)
        self.leaves = leaves
        self.leaf_by_name = {}
        for vid, leaf in leaves.items():
            if leaf.name in self.leaf_by_name:
                raise ModelError(f"duplicate leaf name {leaf.name!r}")
            self.leaf_by_name[leaf.name] = vid
        self._analysis: Optional[NodeAnalysis] = None
        self._validate()

    # ------------------------------------------------------------------
    def _validate(self) -> None:
        universe = self.world.full_region()
        for vid, leaf in self.leaves.items():
            if leaf.success.n != self.world.cell_count:
                raise ModelError(f"leaf {leaf.name!r} regions are over a different universe")
            if not leaf.success.isdisjoint(leaf.failure):
                raise ModelError(f"leaf {leaf.name!r} has overlapping success and failure")
            if leaf.kind is NodeKind.CONDITION:
                if (leaf.success | leaf.failure) != universe:
                    raise ModelError(
                        f"condition {leaf.name!r} must have an empty running region"
                    )
                if leaf.controller is not None:
                    raise ModelError(f"condition {leaf.name!r} cannot carry a controller")
            else:
                if leaf.controller is None:
                    raise ModelError(f"action {leaf.name!r} needs a controller")
                if leaf.controller.n != self.world.cell_count:
                    raise ModelError(f"action {leaf.name!r} controller universe mismatch")
            if leaf.doa is not None:
                running = universe - leaf.success - leaf.failure
                if not leaf.doa.basin.issubset(running | leaf.success):
                    raise ModelError(
                        f"leaf {leaf.name!r}: basin must avoid the failure region"
                    )
                if not leaf.doa.goal.issubset(leaf.doa.basin & leaf.success):
                    raise ModelError(
                        f"leaf {leaf.name!r}: goal must lie in basin and success region"
                    )

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return self.tree.n

    def orders(self) -> TreeOrders:
        return self.tree.orders()

    def leaf_vertices(self) -> tuple[int, ...]:
        return tuple(sorted(self.leaves))

    def action_vertices(self) -> tuple[int, ...]:
        return tuple(v for v in sorted(self.leaves) if self.kinds[v] is NodeKind.ACTION)

    def vertex_of(self, name: str) -> int:
        try:
            return self.leaf_by_name[name]
        except KeyError:
            raise ModelError(f"unknown leaf {name!r}") from None

    def analysis(self) -> "NodeAnalysis":
        if self._analysis is None:
            self._analysis = analyze(self)
        return self._analysis

    def __repr__(self) -> str:
        return f"BTModel(vertices={self.n}, cells={self.world.cell_count})"


@dataclass(frozen=True)
class NodeAnalysis:
    """Per-vertex regions and pathway memberships of one model."""

    running: tuple[Region, ...]
    success: tuple[Region, ...]
    failure: tuple[Region, ...]
    influence: tuple[Region, ...]
    omega: tuple[Region, ...]
    success_pathway: frozenset[int]
    failure_pathway: frozenset[int]


def propagate_metadata(model: BTModel) -> tuple[tuple[Region, ...], tuple[Region, ...], tuple[Region, ...]]:
    """Bottom-up running/success/failure regions for every vertex.

    A Sequence succeeds where all children succeed, and runs (fails) where
    some child runs (fails) after all earlier siblings succeeded.  A
    Fallback is the mirror image with success and failure exchanged.
    """
    n = model.n
    universe = model.world.full_region()
    running: list[Optional[Region]] = [None] * n
    success: list[Optional[Region]] = [None] * n
    failure: list[Optional[Region]] = [None] * n

    for v in _postorder(model.tree):
        kind = model.kinds[v]
        if kind in (NodeKind.ACTION, NodeKind.CONDITION):
            leaf = model.leaves[v]
            success[v] = leaf.success
            failure[v] = leaf.failure
            running[v] = universe - leaf.success - leaf.failure
            continue
        kids = model.tree.children[v]
        if kind is NodeKind.SEQUENCE:
            gate = universe  # intersection of earlier siblings' success
            r_acc = Region.empty(universe.n)
            f_acc = Region.empty(universe.n)
            for c in kids:
                r_acc |= running[c] & gate
                f_acc |= failure[c] & gate
                gate = gate & success[c]
            success[v] = gate
            running[v] = r_acc
            failure[v] = f_acc
        else:
            gate = universe  # intersection of earlier siblings' failure
            r_acc = Region.empty(universe.n)
            s_acc = Region.empty(universe.n)
            for c in kids:
                r_acc |= running[c] & gate
                s_acc |= success[c] & gate
                gate = gate & failure[c]
            failure[v] = gate
            running[v] = r_acc
            success[v] = s_acc
    return tuple(running), tuple(success), tuple(failure)  # type: ignore[arg-type]


def influence_regions(model: BTModel, success: tuple[Region, ...], failure: tuple[Region, ...]) -> tuple[Region, ...]:
    """Necessary-condition region per vertex.

    The influence region of a vertex intersects, over every strict left
    uncle whose parent is a Sequence, that uncle's success region, and over
    every strict left uncle whose parent is a Fallback, its failure region.
    Empty ranges contribute the full universe.
    """
    orders = model.orders()
    parent = model.tree.parent
    lu_in = orders.left_uncle.converse()  # row[i] = {j : j left-uncle of i}
    out: list[Region] = []
    for i in range(model.n):
        region = model.world.full_region()
        bits = lu_in.successors(i)
        while bits:
            low = bits & -bits
            j = low.bit_length() - 1
            bits ^= low
            p = parent[j]
            if model.kinds[p] is NodeKind.SEQUENCE:
                region &= success[j]
            elif model.kinds[p] is NodeKind.FALLBACK:
                region &= failure[j]
        out.append(region)
    return tuple(out)


def pathways(model: BTModel) -> tuple[frozenset[int], frozenset[int]]:
    """Vertices whose success (failure) propagates to the root unhindered.

    A vertex is on the success pathway when no right uncle of it has a
    Sequence parent; on the failure pathway when no right uncle has a
    Fallback parent.
    """
    orders = model.orders()
    parent = model.tree.parent
    seq_parent = 0
    fal_parent = 0
    for v in range(model.n):
        p = parent[v]
        if p is None:
            continue
        if model.kinds[p] is NodeKind.SEQUENCE:
            seq_parent |= 1 << v
        elif model.kinds[p] is NodeKind.FALLBACK:
            fal_parent |= 1 << v
    ru_in = orders.right_uncle.converse()  # row[i] = {j : j right-uncle of i}
    s_path = frozenset(i for i in range(model.n) if not ru_in.successors(i) & seq_parent)
    f_path = frozenset(i for i in range(model.n) if not ru_in.successors(i) & fal_parent)
    return s_path, f_path


def operating_regions(
    model: BTModel,
    running: tuple[Region, ...],
    success: tuple[Region, ...],
    failure: tuple[Region, ...],
    influence: tuple[Region, ...],
    s_path: frozenset[int],
    f_path: frozenset[int],
) -> tuple[Region, ...]:
    """Sufficient-condition region per vertex (case split over pathway sets)."""
    out: list[Region] = []
    for i in range(model.n):
        if i in s_path and i in f_path:
            region = influence[i]
        elif i in s_path:
            region = influence[i] & (running[i] | success[i])
        elif i in f_path:
            region = influence[i] & (running[i] | failure[i])
        else:
            region = influence[i] & running[i]
        out.append(region)
    return tuple(out)


def analyze(model: BTModel) -> NodeAnalysis:
    running, success, failure = propagate_metadata(model)
    influence = influence_regions(model, success, failure)
    s_path, f_path = pathways(model)
    omega = operating_regions(model, running, success, failure, influence, s_path, f_path)
    return NodeAnalysis(running, success, failure, influence, omega, s_path, f_path)


def tick_path(model: BTModel, x: int) -> list[int]:
    """Root-to-leaf vertex path the tick resolution takes at cell x."""
    analysis = model.analysis()
    path = [model.tree.root]
    while True:
        v = path[-1]
        kind = model.kinds[v]
        if kind in (NodeKind.ACTION, NodeKind.CONDITION):
            return path
        kids = model.tree.children[v]
        chosen = kids[-1]
        if kind is NodeKind.SEQUENCE:
            for c in kids[:-1]:
                if x not in analysis.success[c]:
                    chosen = c
                    break
        else:
            for c in kids[:-1]:
                if x not in analysis.failure[c]:
                    chosen = c
                    break
        path.append(chosen)


def tick(model: BTModel, x: int) -> tuple[int, Status]:
    """Resolve the executing leaf and the root status at cell x."""
    leaf = tick_path(model, x)[-1]
    data = model.leaves[leaf]
    if x in data.success:
        return leaf, Status.SUCCESS
    if x in data.failure:
        return leaf, Status.FAILURE
    return leaf, Status.RUNNING


@dataclass(frozen=True)
class AbstractionVerdict:
    valid: bool
    overlaps: tuple[tuple[int, int], ...]
    uncovered: Region

    def __bool__(self) -> bool:
        return self.valid


def validate_abstraction(model: BTModel, vertices: Iterable[int]) -> AbstractionVerdict:
    """Check that the chosen vertices' operating regions partition the universe."""
    omega = model.analysis().omega
    verts = sorted(set(vertices))
    overlaps = []
    covered = Region.empty(model.world.cell_count)
    for idx, i in enumerate(verts):
        for j in verts[idx + 1 :]:
            if not omega[i].isdisjoint(omega[j]):
                overlaps.append((i, j))
        covered |= omega[i]
    uncovered = covered.complement()
    return AbstractionVerdict(not overlaps and uncovered.is_empty, tuple(overlaps), uncovered)


def _postorder(tree: OrderedTree) -> Iterable[int]:
    stack: list[tuple[int, bool]] = [(tree.root, False)]
    while stack:
        v, expanded = stack.pop()
        if expanded:
            yield v
            continue
        stack.append((v, True))
        for c in reversed(tree.children[v]):
            stack.append((c, False))
