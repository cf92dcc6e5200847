"""Backchained tree generation from action/condition libraries.

A library pairs each action with the ordered list of conditions that must
hold for it to work, and each condition with the ordered list of actions
that achieve it.  Backchaining from a top-level action expands every
precondition into a fallback over the condition and its achievers,
recursively, yielding a tree whose expected run is a chain of actions each
establishing the next action's missing precondition.

The link structure (action, condition, action triplets and their closure)
gives closed forms for which conditions must fail or hold for an action to
execute; those specialize the generic influence/operating machinery and are
cross-checked against it in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Optional

from .bt import BTModel, LeafData, NodeKind, NodeSpec, fal, seq
from .prepares import Certificate, Refutation, behavior_graph, certify_convergence
from .statespace import Region, World

Id = Hashable


class LibraryError(ValueError):
    pass


class AssumptionError(ValueError):
    """A structural assumption the backchain closed forms need is violated."""


def _id_key(x: Id):
    return (0, x) if isinstance(x, int) else (1, str(x))


@dataclass(frozen=True)
class ActionEntry:
    leaf: LeafData
    preconditions: tuple[Id, ...]


@dataclass(frozen=True)
class ConditionEntry:
    leaf: LeafData
    achievers: tuple[Id, ...]


class ActionConditionLibrary:
    """Validated action and condition tables over one world."""

    __slots__ = ("world", "actions", "conditions")

    def __init__(
        self,
        world: World,
        actions: dict[Id, ActionEntry],
        conditions: dict[Id, ConditionEntry],
    ) -> None:
        overlap = set(actions) & set(conditions)
        if overlap:
            raise LibraryError(f"action and condition ids overlap: {sorted(overlap, key=_id_key)}")
        universe = world.full_region()
        for cid, entry in conditions.items():
            if entry.leaf.kind is not NodeKind.CONDITION:
                raise LibraryError(f"condition {cid!r} carries non-condition leaf data")
            if (entry.leaf.success | entry.leaf.failure) != universe:
                raise LibraryError(f"condition {cid!r} must never return running")
            for a in entry.achievers:
                if a not in actions:
                    raise LibraryError(f"condition {cid!r} lists unknown achiever {a!r}")
                if not actions[a].leaf.success.issubset(entry.leaf.success):
                    raise LibraryError(
                        f"achiever {a!r} can succeed outside condition {cid!r}"
                    )
        for aid, entry in actions.items():
            if entry.leaf.kind is not NodeKind.ACTION:
                raise LibraryError(f"action {aid!r} carries non-action leaf data")
            for c in entry.preconditions:
                if c not in conditions:
                    raise LibraryError(f"action {aid!r} lists unknown precondition {c!r}")
            if entry.leaf.doa is not None and not entry.leaf.doa.basin.is_empty:
                gate = universe
                for c in entry.preconditions:
                    gate &= conditions[c].leaf.success
                if gate != entry.leaf.doa.basin:
                    raise LibraryError(
                        f"action {aid!r}: precondition intersection differs from its basin"
                    )
        seen_pre: dict[Id, Id] = {}
        for aid, entry in actions.items():
            for c in entry.preconditions:
                if c in seen_pre:
                    raise LibraryError(
                        f"condition {c!r} is a precondition of both {seen_pre[c]!r} and {aid!r}"
                    )
                seen_pre[c] = aid
        seen_ach: dict[Id, Id] = {}
        for cid, entry in conditions.items():
            for a in entry.achievers:
                if a in seen_ach:
                    raise LibraryError(
                        f"action {a!r} achieves both {seen_ach[a]!r} and {cid!r}"
                    )
                seen_ach[a] = cid
        self.world = world
        self.actions = dict(actions)
        self.conditions = dict(conditions)

    def action_ids(self) -> list[Id]:
        return sorted(self.actions, key=_id_key)

    def condition_ids(self) -> list[Id]:
        return sorted(self.conditions, key=_id_key)


@dataclass(frozen=True)
class LinkStructure:
    """Triplets (achiever, condition, consumer) plus the derived closures."""

    links: frozenset[tuple[Id, Id, Id]]
    order: frozenset[tuple[Id, Id]]
    downstream: dict[Id, frozenset[tuple[Id, Id, Id]]]
    post: dict[Id, frozenset[Id]]
    acc: dict[Id, frozenset[Id]]

    def order_is_antisymmetric(self) -> bool:
        return not any(a != c and (c, a) in self.order for a, c in self.order)


def compute_links(lib: ActionConditionLibrary) -> LinkStructure:
    links = set()
    for cid, centry in lib.conditions.items():
        for a in centry.achievers:
            for consumer, aentry in lib.actions.items():
                if cid in aentry.preconditions:
                    links.add((a, cid, consumer))
    pairs = {(a, c) for a, _b, c in links}
    order = _reflexive_transitive(pairs, lib.actions)
    downstream: dict[Id, frozenset] = {}
    post: dict[Id, frozenset] = {}
    acc: dict[Id, frozenset] = {}
    for i in lib.actions:
        mine = frozenset(t for t in links if (i, t[0]) in order)
        downstream[i] = mine
        post[i] = frozenset(b for _a, b, _c in mine)
        acc_set = set()
        for _a, b, c in mine:
            pre = lib.actions[c].preconditions
            acc_set.update(pre[: pre.index(b)])
        acc[i] = frozenset(acc_set)
    return LinkStructure(frozenset(links), frozenset(order), downstream, post, acc)


def _reflexive_transitive(pairs: set[tuple[Id, Id]], ids: Iterable[Id]) -> set[tuple[Id, Id]]:
    succ: dict[Id, set[Id]] = {}
    for a, c in pairs:
        succ.setdefault(a, set()).add(c)
    closed = {(i, i) for i in ids}
    for start in list(ids):
        seen: set[Id] = set()
        stack = list(succ.get(start, ()))
        while stack:
            j = stack.pop()
            if j in seen:
                continue
            seen.add(j)
            stack.extend(succ.get(j, ()))
        closed.update((start, j) for j in seen)
    return closed


def validate_bc_assumptions(lib: ActionConditionLibrary, root: Id, links: Optional[LinkStructure] = None) -> LinkStructure:
    """Enforce the structural assumptions the closed-form analysis needs.

    The top-level action must not sit below any link, every condition has
    at most one achiever, and a condition nobody achieves must never fail.
    """
    if links is None:
        links = compute_links(lib)
    if root not in lib.actions:
        raise LibraryError(f"unknown root action {root!r}")
    if links.downstream.get(root):
        raise AssumptionError(
            f"top-level action {root!r} still has links to satisfy: "
            f"{sorted(links.downstream[root])}"
        )
    for cid, entry in lib.conditions.items():
        if len(entry.achievers) > 1:
            raise AssumptionError(f"condition {cid!r} has several achievers {entry.achievers}")
        if not entry.achievers and not entry.leaf.failure.is_empty:
            raise AssumptionError(f"achiever-less condition {cid!r} can fail")
    return links


@dataclass(frozen=True)
class BcBt:
    """A generated tree plus the leaf-vertex <-> library-id correspondence."""

    model: BTModel
    vertex_of: dict[Id, int]
    id_of: dict[int, Id]


def build_bcbt(lib: ActionConditionLibrary, root: Id) -> BcBt:
    """Expand the backchain recursion into a concrete model.

    A precondition with no achiever collapses to a bare condition leaf (a
    one-child fallback is the same function).  A library where an action is
    transitively its own precondition-achiever cannot terminate and is
    rejected with the offending cycle.
    """
    if root not in lib.actions:
        raise LibraryError(f"unknown root action {root!r}")
    visiting: list[Id] = []

    def action_subtree(i: Id) -> NodeSpec:
        if i in visiting:
            cycle = visiting[visiting.index(i) :] + [i]
            raise LibraryError(f"library recursion cycles through actions {cycle}")
        visiting.append(i)
        entry = lib.actions[i]
        children = [condition_subtree(j) for j in entry.preconditions]
        children.append(NodeSpec(NodeKind.ACTION, leaf=entry.leaf))
        visiting.pop()
        return seq(*children)

    def condition_subtree(j: Id) -> NodeSpec:
        entry = lib.conditions[j]
        leaf = NodeSpec(NodeKind.CONDITION, leaf=entry.leaf)
        if not entry.achievers:
            return leaf
        return fal(leaf, *(action_subtree(k) for k in entry.achievers))

    model = BTModel(lib.world, action_subtree(root))
    vertex_of: dict[Id, int] = {}
    id_of: dict[int, Id] = {}
    names = {lib.actions[i].leaf.name: i for i in lib.actions}
    names.update({lib.conditions[j].leaf.name: j for j in lib.conditions})
    for name, vertex in model.leaf_by_name.items():
        lid = names[name]
        vertex_of[lid] = vertex
        id_of[vertex] = lid
    return BcBt(model, vertex_of, id_of)


@dataclass(frozen=True)
class InfluenceTerms:
    """Symbolic influence region of an action: success terms and failure terms."""

    acc: tuple[Id, ...]
    pre: tuple[Id, ...]
    post: tuple[Id, ...]


def bc_influence_terms(lib: ActionConditionLibrary, links: LinkStructure, i: Id) -> InfluenceTerms:
    return InfluenceTerms(
        acc=tuple(sorted(links.acc[i], key=_id_key)),
        pre=tuple(lib.actions[i].preconditions),
        post=tuple(sorted(links.post[i], key=_id_key)),
    )


def bc_influence(lib: ActionConditionLibrary, links: LinkStructure, i: Id) -> Region:
    """Closed-form influence region of action i in the backchained tree."""
    terms = bc_influence_terms(lib, links, i)
    region = lib.world.full_region()
    for j in terms.acc:
        region &= lib.conditions[j].leaf.success
    for j in terms.pre:
        region &= lib.conditions[j].leaf.success
    for j in terms.post:
        region &= lib.conditions[j].leaf.failure
    return region


@dataclass(frozen=True)
class OperatingVerdict:
    ok: bool
    violations: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def verify_bc_operating(lib: ActionConditionLibrary, built: BcBt, links: Optional[LinkStructure] = None) -> OperatingVerdict:
    """Check the closed-form operating-region facts against the generic pipeline.

    Executing actions never make the whole tree fail; linked actions never
    make it succeed; conditions never operate.  The leaf-level pathway sets
    must equal their closed forms.
    """
    if links is None:
        links = compute_links(lib)
    analysis = built.model.analysis()
    violations: list[str] = []
    for i in lib.actions:
        v = built.vertex_of[i]
        if not (analysis.omega[v] & analysis.failure[v]).is_empty:
            violations.append(f"action {i!r} operates inside its failure region")
        if links.downstream[i] and not (analysis.omega[v] & analysis.success[v]).is_empty:
            violations.append(f"linked action {i!r} operates inside its success region")
    for j in lib.conditions:
        v = built.vertex_of[j]
        if not analysis.omega[v].is_empty:
            violations.append(f"condition {j!r} has a nonempty operating region")
    leaf_vertices = set(built.id_of)
    expected_s = {built.vertex_of[i] for i in lib.actions if not links.downstream[i]}
    expected_f = {built.vertex_of[i] for i in lib.actions}
    expected_f |= {built.vertex_of[j] for j in lib.conditions if not lib.conditions[j].achievers}
    got_s = analysis.success_pathway & leaf_vertices
    got_f = analysis.failure_pathway & leaf_vertices
    if got_s != expected_s:
        violations.append(f"success pathway leaves {sorted(got_s)} != expected {sorted(expected_s)}")
    if got_f != expected_f:
        violations.append(f"failure pathway leaves {sorted(got_f)} != expected {sorted(expected_f)}")
    return OperatingVerdict(not violations, tuple(violations))


@dataclass(frozen=True)
class BcConvergenceReport:
    hypothesis_ok: bool
    hypothesis_witnesses: tuple[tuple[Id, int], ...]
    pattern_ok: Optional[bool]
    pattern_violations: tuple[tuple[Id, Id], ...]
    result: Certificate | Refutation

    def __bool__(self) -> bool:
        return self.pattern_ok is not False and isinstance(self.result, Certificate)


def check_bc_convergence(
    lib: ActionConditionLibrary,
    root: Id,
    delta: Optional[float] = None,
    seeds: Optional[Iterable[int]] = None,
    require_hypothesis: bool = False,
) -> BcConvergenceReport:
    """Certify a backchained tree; check the acyclic transition pattern.

    The pattern claim (region transitions only run from an action to one
    whose missing or pending conditions the first action's postconditions
    touch) is conditioned on every basin staying inside the success regions
    of the conditions upstream of it.  A library whose actions undo
    upstream conditions, like a recharge cycle, fails that hypothesis; the
    violation is reported (or raised with require_hypothesis), the pattern
    claim is skipped, and the general certification still runs.
    """
    links = validate_bc_assumptions(lib, root)
    hypothesis_witnesses: list[tuple[Id, int]] = []
    for i in sorted(lib.actions, key=_id_key):
        entry = lib.actions[i]
        if entry.leaf.doa is None:
            continue
        guard = lib.world.full_region()
        for j in links.acc[i]:
            guard &= lib.conditions[j].leaf.success
        if not entry.leaf.doa.basin.issubset(guard):
            witness = (entry.leaf.doa.basin - guard).any_cell()
            if require_hypothesis:
                raise LibraryError(
                    f"action {i!r}: basin leaves its upstream success regions at cell {witness}"
                )
            hypothesis_witnesses.append((i, witness))
    built = build_bcbt(lib, root)
    abstraction = [built.vertex_of[i] for i in lib.actions if i in built.vertex_of]
    result = certify_convergence(built.model, abstraction, delta=delta, seeds=seeds)
    hypothesis_ok = not hypothesis_witnesses
    pattern_ok: Optional[bool] = None
    violations: list[tuple[Id, Id]] = []
    if hypothesis_ok and isinstance(result, Certificate):
        pattern_ok = True
        chosen_vertices = [
            v for ci in result.analysis_classes for v in result.condensed.classes[ci]
        ]
        bg = behavior_graph(result.graph, chosen_vertices)
        for u, w in sorted(bg.reachability()):
            iu, iw = built.id_of[u], built.id_of[w]
            if not links.post[iu] & (links.acc[iw] | set(lib.actions[iw].preconditions)):
                pattern_ok = False
                violations.append((iu, iw))
    return BcConvergenceReport(
        hypothesis_ok, tuple(hypothesis_witnesses), pattern_ok, tuple(violations), result
    )


def lint_library(lib: ActionConditionLibrary) -> list[str]:
    """Advisory notes: redundant preconditions, missed achievers.

    Nothing here is enforced; minimality of precondition lists and
    maximality of achiever lists have no operational definition, so the
    lint only flags the easy cases.
    """
    notes: list[str] = []
    universe = lib.world.full_region()
    for aid, entry in lib.actions.items():
        for j in entry.preconditions:
            rest = universe
            for k in entry.preconditions:
                if k != j:
                    rest &= lib.conditions[k].leaf.success
            if rest.issubset(lib.conditions[j].leaf.success):
                notes.append(f"precondition {j!r} of action {aid!r} is implied by the others")
    for cid, centry in lib.conditions.items():
        for aid, aentry in lib.actions.items():
            if aid in centry.achievers:
                continue
            if aentry.leaf.success.issubset(centry.leaf.success) and not aentry.leaf.success.is_empty:
                notes.append(f"action {aid!r} also establishes condition {cid!r}")
    return notes
