"""Prepares graph, condensation, analysis sets, and convergence certificates.

Given an abstraction (a vertex set whose operating regions partition the
universe), each operating region is sliced into the part outside the
action's basin, the part inside the basin but short of the goal, and the
goal part.  The slices become graph vertices; edges over-approximate the
one-step transitions the closed loop can make.  Collapsing strongly
connected components yields a DAG whose sinks should be goal slices, and a
per-class exit-time bound turns the DAG into an explicit step bound for
reaching the goals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .bt import BTModel, Doa, NodeKind, action as action_spec, validate_abstraction
from .execution import ExitResult, check_fts, closed_loop_targets, empirical_exit_time
from .statespace import Region, SuccessorMap

FLAVOR_OUTSIDE = "a"  # operating region minus basin
FLAVOR_BASIN = "b"  # basin minus goal
FLAVOR_GOAL = "c"  # goal slice


class AbstractionError(ValueError):
    pass


class FtsPreconditionError(ValueError):
    def __init__(self, failures: dict[str, object]) -> None:
        super().__init__(f"finite-time-success check failed for: {sorted(failures)}")
        self.failures = failures


@dataclass(frozen=True)
class PrepVertex:
    owner: int
    flavor: str
    cells: Region

    def key(self) -> tuple[int, str]:
        return (self.owner, self.flavor)


class PreparesGraph:
    """Slice vertices plus directed possible-transition edges."""

    __slots__ = ("vertices", "edges", "index", "cell_vertex")

    def __init__(self, vertices: Sequence[PrepVertex], edges: Iterable[tuple[int, int]]) -> None:
        self.vertices = tuple(vertices)
        self.edges = frozenset(edges)
        self.index = {v.key(): i for i, v in enumerate(self.vertices)}
        if len(self.index) != len(self.vertices):
            raise AbstractionError("duplicate (owner, flavor) vertex")
        n_cells = self.vertices[0].cells.n if self.vertices else 0
        lookup = [-1] * n_cells
        disjoint = True
        for i, v in enumerate(self.vertices):
            for c in v.cells.cells():
                if lookup[c] != -1:
                    disjoint = False
                lookup[c] = i
        self.cell_vertex = tuple(lookup) if disjoint else None

    def vertex_of_cell(self, cell: int) -> Optional[int]:
        if self.cell_vertex is None:
            raise AbstractionError("vertex regions overlap; no per-cell lookup")
        i = self.cell_vertex[cell]
        return None if i == -1 else i

    def successors(self, u: int) -> list[int]:
        return sorted(w for uu, w in self.edges if uu == u)

    def vertex(self, owner: int, flavor: str) -> int:
        try:
            return self.index[(owner, flavor)]
        except KeyError:
            raise AbstractionError(f"no vertex ({owner}, {flavor!r}) in graph") from None

    def __repr__(self) -> str:
        return f"PreparesGraph(vertices={len(self.vertices)}, edges={len(self.edges)})"


def build_prepares_graph(
    model: BTModel,
    abstraction: Iterable[int],
    delta: Optional[float] = None,
) -> PreparesGraph:
    """Slice the abstraction's operating regions and connect them.

    Edge rules: an outside slice reaches every neighboring slice (another
    owner's outside slice, or any basin/goal slice); a basin slice reaches a
    neighboring slice only where its own basin overlaps the target (another
    owner for outside/basin targets, any owner for goal targets); goal
    slices have no outgoing edges.
    """
    members = sorted(set(abstraction))
    verdict = validate_abstraction(model, members)
    if not verdict:
        raise AbstractionError(
            f"operating regions do not partition: overlaps={verdict.overlaps} "
            f"uncovered={sorted(verdict.uncovered.cells())}"
        )
    analysis = model.analysis()
    world = model.world
    vertices: list[PrepVertex] = []
    basins: dict[int, Region] = {}
    for i in members:
        omega = analysis.omega[i]
        if omega.is_empty:
            continue
        leaf = model.leaves.get(i)
        if leaf is None or model.kinds[i] is not NodeKind.ACTION or leaf.doa is None:
            raise AbstractionError(
                f"abstraction member {i} has a nonempty operating region but no basin data"
            )
        basin, goal = leaf.doa.basin, leaf.doa.goal
        basins[i] = basin
        for flavor, cells in (
            (FLAVOR_OUTSIDE, omega - basin),
            (FLAVOR_BASIN, omega & (basin - goal)),
            (FLAVOR_GOAL, omega & goal),
        ):
            if not cells.is_empty:
                vertices.append(PrepVertex(i, flavor, cells))
    vertices.sort(key=lambda v: v.key())

    edges: set[tuple[int, int]] = set()
    for ui, u in enumerate(vertices):
        if u.flavor == FLAVOR_GOAL:
            continue
        for wi, w in enumerate(vertices):
            if ui == wi:
                continue
            if u.flavor == FLAVOR_OUTSIDE:
                if w.flavor == FLAVOR_OUTSIDE and w.owner == u.owner:
                    continue
            else:  # basin slice
                if w.flavor != FLAVOR_GOAL and w.owner == u.owner:
                    continue
                if basins[u.owner].isdisjoint(w.cells):
                    continue
            if world.neighboring(u.cells, w.cells, delta):
                edges.add((ui, wi))
    return PreparesGraph(vertices, edges)


class CondensedGraph:
    """Strongly-connected-component quotient of a prepares graph (a DAG)."""

    __slots__ = ("graph", "classes", "edges", "sinks", "class_of")

    def __init__(self, graph: PreparesGraph) -> None:
        n = len(graph.vertices)
        succ: list[list[int]] = [[] for _ in range(n)]
        for u, w in graph.edges:
            succ[u].append(w)
        comp = _tarjan_scc(n, succ)
        groups: dict[int, list[int]] = {}
        for v, c in enumerate(comp):
            groups.setdefault(c, []).append(v)
        ordered = sorted(groups.values(), key=min)
        class_of = [0] * n
        for ci, group in enumerate(ordered):
            for v in group:
                class_of[v] = ci
        edges = frozenset(
            (class_of[u], class_of[w])
            for u, w in graph.edges
            if class_of[u] != class_of[w]
        )
        has_out = {u for u, _ in edges}
        self.graph = graph
        self.classes = tuple(tuple(sorted(g)) for g in ordered)
        self.edges = edges
        self.sinks = frozenset(ci for ci in range(len(ordered)) if ci not in has_out)
        self.class_of = tuple(class_of)

    def class_cells(self, ci: int) -> Region:
        cells = self.graph.vertices[self.classes[ci][0]].cells
        for v in self.classes[ci][1:]:
            cells |= self.graph.vertices[v].cells
        return cells

    def class_of_cell(self, cell: int) -> Optional[int]:
        v = self.graph.vertex_of_cell(cell)
        return None if v is None else self.class_of[v]

    def class_keys(self, ci: int) -> tuple[tuple[int, str], ...]:
        return tuple(self.graph.vertices[v].key() for v in self.classes[ci])

    def successors(self, ci: int) -> list[int]:
        return sorted(cj for c, cj in self.edges if c == ci)

    def is_goal_class(self, ci: int) -> bool:
        return all(self.graph.vertices[v].flavor == FLAVOR_GOAL for v in self.classes[ci])

    def __repr__(self) -> str:
        return f"CondensedGraph(classes={len(self.classes)}, edges={len(self.edges)})"


def condense(graph: PreparesGraph) -> CondensedGraph:
    return CondensedGraph(graph)


def analysis_set(condensed: CondensedGraph, seeds: Iterable[int]) -> frozenset[int]:
    """Forward-reachability closure of the seed classes: no edge leaves it."""
    todo = list(dict.fromkeys(seeds))
    for ci in todo:
        if not 0 <= ci < len(condensed.classes):
            raise AbstractionError(f"seed class {ci} does not exist")
    seen = set(todo)
    while todo:
        ci = todo.pop()
        for cj in condensed.successors(ci):
            if cj not in seen:
                seen.add(cj)
                todo.append(cj)
    return frozenset(seen)


@dataclass(frozen=True)
class BehaviorGraph:
    """Projection of an analysis set's edges back onto abstraction members."""

    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    def reachability(self) -> frozenset[tuple[int, int]]:
        """Strict reachability pairs (transitive closure without the diagonal)."""
        succ: dict[int, set[int]] = {i: set() for i in self.nodes}
        for i, j in self.edges:
            succ[i].add(j)
        closed: set[tuple[int, int]] = set()
        for start in self.nodes:
            stack = list(succ[start])
            seen: set[int] = set()
            while stack:
                j = stack.pop()
                if j in seen:
                    continue
                seen.add(j)
                stack.extend(succ[j])
            closed.update((start, j) for j in seen if j != start)
        return frozenset(closed)


def behavior_graph(graph: PreparesGraph, vertex_subset: Iterable[int]) -> BehaviorGraph:
    subset = set(vertex_subset)
    nodes = tuple(sorted({graph.vertices[v].owner for v in subset}))
    edges = frozenset(
        (graph.vertices[u].owner, graph.vertices[w].owner)
        for u, w in graph.edges
        if u in subset and w in subset
    )
    return BehaviorGraph(nodes, edges)


@dataclass(frozen=True)
class Certificate:
    """A successful convergence verdict with an explicit step bound.

    bound is |analysis set| times the largest per-class exit time, the shape
    quoted for the worked examples; transitions_bound counts only non-sink
    classes, and refined_bound tightens via the longest path with per-class
    exit times.
    """

    graph: PreparesGraph
    condensed: CondensedGraph
    analysis_classes: tuple[int, ...]
    sink_classes: tuple[int, ...]
    per_class_exit: dict[int, int] = field(compare=False)
    bound: int = 0
    transitions_bound: int = 0
    refined_bound: int = 0

    def goal_cells(self) -> Region:
        cells = self.condensed.class_cells(self.sink_classes[0])
        for ci in self.sink_classes[1:]:
            cells |= self.condensed.class_cells(ci)
        return cells

    def start_cells(self) -> Region:
        cells = self.condensed.class_cells(self.analysis_classes[0])
        for ci in self.analysis_classes[1:]:
            cells |= self.condensed.class_cells(ci)
        return cells


@dataclass(frozen=True)
class Refutation:
    """Why certification failed: a non-goal sink or a never-exiting cell."""

    kind: str  # "non-goal-sink" | "no-exit"
    witness_class: int
    witness_cell: Optional[int]
    detail: str
    condensed: CondensedGraph


def certify_convergence(
    model: BTModel,
    abstraction: Iterable[int],
    delta: Optional[float] = None,
    seeds: Optional[Iterable[int]] = None,
    max_steps: Optional[int] = None,
) -> Certificate | Refutation:
    """Run the full pipeline: slices, condensation, exit times, step bound.

    Every abstraction member must pass its finite-time-success check first;
    failures raise FtsPreconditionError.  A sink class containing non-goal
    slices, or a class some cell never leaves, yields a Refutation.
    """
    members = sorted(set(abstraction))
    failures: dict[str, object] = {}
    for i in members:
        leaf = model.leaves.get(i)
        if leaf is None or model.kinds[i] is not NodeKind.ACTION or leaf.doa is None:
            if model.analysis().omega[i].is_empty:
                continue
            failures[model.names[i] or str(i)] = "missing basin data"
            continue
        verdict = check_fts(model, i)
        if not verdict:
            failures[leaf.name] = verdict
    if failures:
        raise FtsPreconditionError(failures)

    graph = build_prepares_graph(model, members, delta)
    condensed = condense(graph)
    if seeds is None:
        chosen = analysis_set(condensed, range(len(condensed.classes)))
    else:
        chosen = analysis_set(condensed, seeds)
    ordered = tuple(sorted(chosen))
    sinks_in = tuple(sorted(condensed.sinks & chosen))
    for ci in sinks_in:
        if not condensed.is_goal_class(ci):
            keys = condensed.class_keys(ci)
            return Refutation(
                "non-goal-sink",
                ci,
                condensed.class_cells(ci).any_cell(),
                f"sink class {keys} contains non-goal slices",
                condensed,
            )
    per_class: dict[int, int] = {}
    for ci in ordered:
        if ci in condensed.sinks:
            continue
        result: ExitResult = empirical_exit_time(model, condensed.class_cells(ci), max_steps)
        if result.steps is None:
            return Refutation(
                "no-exit",
                ci,
                result.witness,
                f"cell {result.witness} never leaves class {condensed.class_keys(ci)}",
                condensed,
            )
        per_class[ci] = result.steps
    worst = max(per_class.values(), default=0)
    bound = len(ordered) * worst
    refined = _longest_path_bound(condensed, set(ordered), per_class)
    return Certificate(
        graph=graph,
        condensed=condensed,
        analysis_classes=ordered,
        sink_classes=sinks_in,
        per_class_exit=per_class,
        bound=bound,
        transitions_bound=len(ordered) - len(sinks_in),
        refined_bound=refined,
    )


@dataclass(frozen=True)
class AcyclicVerdict:
    acyclic: bool
    transition_bound: Optional[int]
    per_class_deadline: Optional[dict[int, int]]
    message: str

    def __bool__(self) -> bool:
        return self.acyclic


def check_acyclic_case(
    condensed: CondensedGraph,
    chosen: Iterable[int],
    model: Optional[BTModel] = None,
) -> AcyclicVerdict:
    """Singleton-classes special case: transition count bounded by |analysis set|.

    When every class is a singleton the slice graph has no cycles, so the
    guaranteed exit of each non-sink class already follows from the per-leaf
    step deadlines and the per-class simulation may be skipped.
    """
    chosen = sorted(set(chosen))
    fat = [ci for ci in chosen if len(condensed.classes[ci]) > 1]
    if fat:
        return AcyclicVerdict(
            False, None, None, f"classes {fat} merge cycles; general bound required"
        )
    deadlines: Optional[dict[int, int]] = None
    if model is not None:
        deadlines = {}
        for ci in chosen:
            owner = condensed.graph.vertices[condensed.classes[ci][0]].owner
            leaf = model.leaves.get(owner)
            if leaf is not None and leaf.doa is not None:
                deadlines[ci] = leaf.doa.horizon
    return AcyclicVerdict(
        True,
        len(chosen),
        deadlines,
        f"no cycles: at most {len(chosen)} transitions; per-leaf deadlines suffice",
    )


def certificate_as_fts_leaf(model: BTModel, cert: Certificate, name: str = "certified") -> BTModel:
    """Wrap a certified model as one action leaf whose basin/goal/deadline it proves.

    The leaf's dynamics are the closed loop of the certified model; its
    success and failure regions are the certified root's.  Cells where the
    loop resolves a Condition self-loop (they lie outside the certified
    start set, which the finite-time check restricts to).
    """
    analysis = model.analysis()
    root = model.tree.root
    targets = [t if t is not None else c for c, t in enumerate(closed_loop_targets(model))]
    leaf = action_spec(
        name,
        success=analysis.success[root],
        failure=analysis.failure[root],
        controller=SuccessorMap(targets),
        doa=Doa(cert.start_cells(), cert.goal_cells(), max(cert.bound, 1)),
    )
    return BTModel(model.world, leaf)


def _tarjan_scc(n: int, succ: Sequence[Sequence[int]]) -> list[int]:
    """Iterative Tarjan; returns a component id per vertex."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    stack: list[int] = []
    counter = 0
    n_comp = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work: list[tuple[int, int]] = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            for k in range(pi, len(succ[v])):
                w = succ[v][k]
                if index[w] == -1:
                    work[-1] = (v, k + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comp
                    if w == v:
                        break
                n_comp += 1
    return comp


def _longest_path_bound(
    condensed: CondensedGraph, chosen: set[int], per_class: dict[int, int]
) -> int:
    """Max over paths in the chosen sub-DAG of summed non-sink exit times."""
    order = _topo_order(condensed, chosen)
    best: dict[int, int] = {}
    for ci in reversed(order):
        weight = per_class.get(ci, 0)
        succs = [cj for cj in condensed.successors(ci) if cj in chosen]
        best[ci] = weight + max((best[cj] for cj in succs), default=0)
    return max(best.values(), default=0)


def _topo_order(condensed: CondensedGraph, chosen: set[int]) -> list[int]:
    indeg = {ci: 0 for ci in chosen}
    for ci, cj in condensed.edges:
        if ci in chosen and cj in chosen:
            indeg[cj] += 1
    ready = sorted(ci for ci, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        ci = ready.pop()
        order.append(ci)
        for cj in condensed.successors(ci):
            if cj in chosen:
                indeg[cj] -= 1
                if indeg[cj] == 0:
                    ready.append(cj)
    return order
