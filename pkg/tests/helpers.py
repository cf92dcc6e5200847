"""Shared generators and independent oracles for the test suite.

Oracles here deliberately avoid the library's set-algebra code paths: tree
orders are chased by path enumeration, node statuses by recursive cascade
evaluation, graph edges by direct rule checks over all vertex pairs.
"""

from __future__ import annotations

import random
from typing import Optional

from btconverge.backchain import ActionConditionLibrary, ActionEntry, ConditionEntry
from btconverge.bt import (
    BTModel,
    Doa,
    LeafData,
    NodeKind,
    NodeSpec,
    Status,
    action,
    condition,
    fal,
    seq,
)
from btconverge.statespace import Region, SuccessorMap, World


# ----------------------------------------------------------------------
# random trees and regions


def random_region(rng: random.Random, n: int, allow_empty: bool = True) -> Region:
    mask = rng.getrandbits(n)
    if not allow_empty and mask == 0:
        mask = 1 << rng.randrange(n)
    return Region(n, mask)


def random_disjoint_pair(rng: random.Random, n: int) -> tuple[Region, Region]:
    a = rng.getrandbits(n)
    b = rng.getrandbits(n) & ~a
    return Region(n, a), Region(n, b)


def random_tree_model(
    rng: random.Random,
    n_cells: int,
    max_depth: int = 4,
    max_leaves: int = 8,
    conditions: bool = True,
) -> BTModel:
    world = World(n_cells)
    counter = [0]
    budget = [rng.randint(1, max_leaves)]

    def leaf_spec() -> NodeSpec:
        counter[0] += 1
        name = f"leaf{counter[0]}"
        if conditions and rng.random() < 0.3:
            return condition(name, random_region(rng, n_cells))
        s, f = random_disjoint_pair(rng, n_cells)
        return action(name, s, f, SuccessorMap.identity(n_cells))

    def node(depth: int) -> NodeSpec:
        budget[0] -= 1
        if depth >= max_depth or budget[0] <= 0 or rng.random() < 0.35:
            return leaf_spec()
        width = rng.randint(1, 3)
        kids = [node(depth + 1) for _ in range(width)]
        return seq(*kids) if rng.random() < 0.5 else fal(*kids)

    spec = node(0)
    if spec.kind in (NodeKind.ACTION, NodeKind.CONDITION):
        spec = seq(spec) if rng.random() < 0.5 else fal(spec)
    return BTModel(world, spec)


def dual_model(model: BTModel) -> BTModel:
    """Swap sequences with fallbacks and every leaf's success with failure."""

    def rebuild(v: int) -> NodeSpec:
        kind = model.kinds[v]
        if kind is NodeKind.SEQUENCE:
            return NodeSpec(NodeKind.FALLBACK, tuple(rebuild(c) for c in model.tree.children[v]))
        if kind is NodeKind.FALLBACK:
            return NodeSpec(NodeKind.SEQUENCE, tuple(rebuild(c) for c in model.tree.children[v]))
        leaf = model.leaves[v]
        return NodeSpec(
            kind,
            leaf=LeafData(leaf.name, leaf.kind, leaf.failure, leaf.success, leaf.controller, None),
        )

    return BTModel(model.world, rebuild(model.tree.root))


# ----------------------------------------------------------------------
# naive cascade evaluation (independent of propagate_metadata / analyze)


def naive_status(model: BTModel, v: int, x: int) -> Status:
    kind = model.kinds[v]
    if kind in (NodeKind.ACTION, NodeKind.CONDITION):
        leaf = model.leaves[v]
        if x in leaf.success:
            return Status.SUCCESS
        if x in leaf.failure:
            return Status.FAILURE
        return Status.RUNNING
    if kind is NodeKind.SEQUENCE:
        for c in model.tree.children[v]:
            st = naive_status(model, c, x)
            if st is not Status.SUCCESS:
                return st
        return Status.SUCCESS
    for c in model.tree.children[v]:
        st = naive_status(model, c, x)
        if st is not Status.FAILURE:
            return st
    return Status.FAILURE


def naive_tick_path(model: BTModel, x: int) -> list[int]:
    path = [model.tree.root]
    while True:
        v = path[-1]
        kind = model.kinds[v]
        if kind in (NodeKind.ACTION, NodeKind.CONDITION):
            return path
        kids = model.tree.children[v]
        skip = Status.SUCCESS if kind is NodeKind.SEQUENCE else Status.FAILURE
        chosen = kids[-1]
        for c in kids[:-1]:
            if naive_status(model, c, x) is not skip:
                chosen = c
                break
        path.append(chosen)


# ----------------------------------------------------------------------
# brute-force order oracles (path enumeration over the stored tree)


def oracle_orders(model_or_tree) -> dict[str, set[tuple[int, int]]]:
    tree = model_or_tree.tree if isinstance(model_or_tree, BTModel) else model_or_tree
    n = tree.n
    parent = tree.parent

    def ancestors_or_self(i: int) -> list[int]:
        out = [i]
        while parent[out[-1]] is not None:
            out.append(parent[out[-1]])
        return out

    sib: set[tuple[int, int]] = set()
    for group in tree.children:
        for ai, a in enumerate(group):
            for b in group[ai + 1 :]:
                sib.add((a, b))
    sib_refl = sib | {(i, i) for i in range(n)}
    par = {
        (a, i) for i in range(n) for a in ancestors_or_self(i)
    }
    left_uncle = {
        (j, i)
        for i in range(n)
        for k in ancestors_or_self(i)
        for j in range(n)
        if (j, k) in sib
    }
    right_uncle = {
        (j, i)
        for i in range(n)
        for k in ancestors_or_self(i)
        for j in range(n)
        if (k, j) in sib
    }
    left_to_right = {
        (i, k)
        for i in range(n)
        for j in ancestors_or_self(i)
        for k in range(n)
        if (j, k) in left_uncle
    }
    right_to_left = {
        (i, k)
        for i in range(n)
        for j in ancestors_or_self(i)
        for k in range(n)
        if (j, k) in right_uncle
    }
    return {
        "parent": par,
        "sibling": sib_refl,
        "left_uncle": left_uncle,
        "right_uncle": right_uncle,
        "left_to_right": left_to_right,
        "right_to_left": right_to_left,
    }


# ----------------------------------------------------------------------
# random funnel models over gridworlds (valid abstractions by construction)


def random_gridworld_model(
    rng: random.Random, side: int = 5, n_parts: int = 4
) -> tuple[BTModel, list[int], float]:
    """A fallback of guarded actions whose operating regions partition the grid."""
    n = side * side
    world = World(n, coords=[(float(c % side), float(c // side)) for c in range(n)])
    cells = list(range(n))
    rng.shuffle(cells)
    cut = sorted(rng.sample(range(1, n), n_parts - 1))
    parts = [cells[a:b] for a, b in zip([0] + cut, cut + [n])]
    suffix: list[Region] = [Region.empty(n)] * (n_parts + 1)
    for k in range(n_parts - 1, -1, -1):
        suffix[k] = suffix[k + 1] | Region.from_cells(n, parts[k])

    children = []
    for k in range(n_parts):
        failure = suffix[k + 1]
        success = Region(n, rng.getrandbits(n)) - failure
        basin = Region(n, rng.getrandbits(n)) - failure
        goal = Region(n, rng.getrandbits(n)) & basin & success
        children.append(
            action(
                f"act{k}",
                success=success,
                failure=failure,
                controller=SuccessorMap.identity(n),
                doa=Doa(basin, goal, 3),
            )
        )
    model = BTModel(world, fal(*children))
    abstraction = list(model.action_vertices())
    delta = 1.0
    return model, abstraction, delta


def oracle_prepares_edges(model: BTModel, abstraction: list[int], delta: float):
    """Direct evaluation of the six edge rules over all slice pairs."""
    analysis = model.analysis()
    world = model.world
    slices = []
    for i in abstraction:
        doa = model.leaves[i].doa
        omega = analysis.omega[i]
        if omega.is_empty:
            continue
        for flavor, cells in (
            ("a", omega - doa.basin),
            ("b", omega & (doa.basin - doa.goal)),
            ("c", omega & doa.goal),
        ):
            if not cells.is_empty:
                slices.append((i, flavor, cells))
    edges = set()
    for i, fi, ci in slices:
        for j, fj, cj in slices:
            if (i, fi) == (j, fj):
                continue
            if fi == "c":
                continue
            if fi == "a":
                if fj == "a" and i == j:
                    continue
            elif fi == "b":
                if fj in ("a", "b") and i == j:
                    continue
                if model.leaves[i].doa.basin.isdisjoint(cj):
                    continue
            if world.neighboring(ci, cj, delta):
                edges.add(((i, fi), (j, fj)))
    return edges


# ----------------------------------------------------------------------
# random libraries satisfying the structural assumptions


def random_library(
    rng: random.Random, n_cells: int = 24, max_actions: int = 5
) -> tuple[ActionConditionLibrary, str]:
    """A random chain/forest library with one achiever per condition."""
    world = World(n_cells)
    universe = Region.full(n_cells)
    n_actions = rng.randint(2, max_actions)
    names = [f"a{k}" for k in range(n_actions)]
    root = names[-1]
    # each non-root action achieves a condition consumed by a later action
    achieved_cond = {name: f"c_{name}" for name in names[:-1]}
    consumer: dict[str, str] = {}
    for k, name in enumerate(names[:-1]):
        consumer[name] = names[rng.randint(k + 1, n_actions - 1)]

    cond_success = {c: random_region(rng, n_cells, allow_empty=False) for c in achieved_cond.values()}
    # optional achiever-less preconditions (must never fail -> full success)
    extra_conds = []
    for k, name in enumerate(names):
        if rng.random() < 0.4:
            cname = f"c_free_{name}"
            cond_success[cname] = universe
            extra_conds.append((cname, name))

    preconds: dict[str, list[str]] = {name: [] for name in names}
    for name, cond_name in achieved_cond.items():
        preconds[consumer[name]].append(cond_name)
    for cname, name in extra_conds:
        preconds[name].insert(rng.randrange(len(preconds[name]) + 1), cname)
    for name in names:
        rng.shuffle(preconds[name])

    actions: dict[str, ActionEntry] = {}
    conditions: dict[str, ConditionEntry] = {}
    for cname, success in cond_success.items():
        achievers = tuple(
            name for name, c in achieved_cond.items() if c == cname
        )
        leaf = LeafData(cname, NodeKind.CONDITION, success, success.complement())
        conditions[cname] = ConditionEntry(leaf, achievers)
    for name in names:
        basin = universe
        for c in preconds[name]:
            basin &= cond_success[c]
        if name in achieved_cond:
            upper = cond_success[achieved_cond[name]]
        else:
            upper = universe
        success = Region(n_cells, rng.getrandbits(n_cells)) & upper
        failure = Region(n_cells, rng.getrandbits(n_cells)) - success - basin
        goal = basin & success
        leaf = LeafData(
            name,
            NodeKind.ACTION,
            success,
            failure,
            SuccessorMap.identity(n_cells),
            Doa(basin, goal, 3),
        )
        actions[name] = ActionEntry(leaf, tuple(preconds[name]))
    return ActionConditionLibrary(world, actions, conditions), root


def chain_library(n_cells: int = 12) -> tuple[ActionConditionLibrary, str]:
    """Three funnels on a line; satisfies the acyclic-pattern hypothesis."""
    world = World(n_cells, coords=[(float(x),) for x in range(n_cells)])
    c1 = Region.where(n_cells, lambda x: x >= 4)
    c2 = Region.where(n_cells, lambda x: x >= 8)
    top = Region.from_cells(n_cells, [n_cells - 1])
    full = Region.full(n_cells)

    def drive(lo: int, hi: int) -> SuccessorMap:
        return SuccessorMap.from_function(
            n_cells, lambda x: x + 1 if lo <= x < hi else x
        )

    conditions = {
        "c1": ConditionEntry(LeafData("c1", NodeKind.CONDITION, c1, c1.complement()), ("start",)),
        "c2": ConditionEntry(LeafData("c2", NodeKind.CONDITION, c2, c2.complement()), ("mid",)),
    }
    actions = {
        "start": ActionEntry(
            LeafData("start", NodeKind.ACTION, c1, Region.empty(n_cells), drive(0, 4), Doa(full, c1, 4)),
            (),
        ),
        "mid": ActionEntry(
            LeafData("mid", NodeKind.ACTION, c2, Region.empty(n_cells), drive(4, 8), Doa(c1, c2, 4)),
            ("c1",),
        ),
        "finish": ActionEntry(
            LeafData("finish", NodeKind.ACTION, top, Region.empty(n_cells), drive(8, n_cells - 1), Doa(c2, top, 4)),
            ("c2",),
        ),
    }
    return ActionConditionLibrary(world, actions, conditions), "finish"


# ----------------------------------------------------------------------
# two-leaf composition fixtures: guarded sequence and recovery fallback


def two_stage_sequence_model(n_cells: int = 8) -> tuple[BTModel, list[str]]:
    world = World(n_cells, coords=[(float(x),) for x in range(n_cells)])
    s1 = Region.where(n_cells, lambda x: x >= 4)
    goal = Region.from_cells(n_cells, [n_cells - 1])
    first = action(
        "reach_gate",
        success=s1,
        controller=SuccessorMap.from_function(n_cells, lambda x: x + 1 if x < 4 else x),
        doa=Doa(Region.full(n_cells), s1, 4),
    )
    second = action(
        "reach_goal",
        success=goal,
        controller=SuccessorMap.from_function(n_cells, lambda x: x + 1 if 4 <= x < n_cells - 1 else x),
        doa=Doa(s1, goal, 3),
    )
    return BTModel(world, seq(first, second)), ["reach_gate", "reach_goal"]


def two_stage_fallback_model(n_cells: int = 8) -> tuple[BTModel, list[str]]:
    world = World(n_cells, coords=[(float(x),) for x in range(n_cells)])
    b1 = Region.where(n_cells, lambda x: x >= 3)
    s1 = Region.from_cells(n_cells, [n_cells - 1])
    f1 = Region.where(n_cells, lambda x: x < 3)
    s2 = Region.from_cells(n_cells, [3])
    first = action(
        "main_task",
        success=s1,
        failure=f1,
        controller=SuccessorMap.from_function(n_cells, lambda x: x + 1 if 3 <= x < n_cells - 1 else x),
        doa=Doa(b1, s1, 4),
    )
    second = action(
        "recover",
        success=s2,
        controller=SuccessorMap.from_function(n_cells, lambda x: x + 1 if x < 3 else x),
        doa=Doa(Region.where(n_cells, lambda x: x <= 3), s2, 3),
    )
    return BTModel(world, fal(first, second)), ["main_task", "recover"]


# ----------------------------------------------------------------------
# random guarded-substitution instances over complete-adjacency base worlds


def random_substitution_instance(
    rng: random.Random, n_cells: int = 12
) -> tuple[BTModel, "SubstitutionSpec", dict[str, int]]:
    """An old fallback-of-(condition, action) model plus a valid spec.

    Returns candidate cells for each single-requirement violation: the
    generator retries until every injection has a cell that provably flips
    the preservation verdict.
    """
    from btconverge.substitution import RrLeaf, SubstitutionSpec

    n = n_cells
    world = World(n, adjacency=[(i, j) for i in range(n) for j in range(i + 1, n)])
    while True:
        s_td = random_region(rng, n, allow_empty=False)
        f_td = s_td.complement()
        if f_td.is_empty:
            continue
        s_mb = Region(n, rng.getrandbits(n)) & s_td
        f_mb = Region(n, rng.getrandbits(n)) & (s_td - s_mb)
        rok = random_region(rng, n)
        s_rr = Region(n, rng.getrandbits(n)) & rok
        f_rr = Region(n, rng.getrandbits(n)) - s_rr
        mb_inject = f_td - s_rr - f_rr
        dd_inject = f_td & rok
        rr_inject = f_td - rok - f_rr
        fail_inject = f_td
        if any(r.is_empty for r in (mb_inject, dd_inject, rr_inject, fail_inject)):
            continue
        break
    model = BTModel(
        world,
        fal(
            condition("task_done", s_td),
            action(
                "mb",
                success=s_mb,
                failure=f_mb,
                controller=SuccessorMap([rng.randrange(n) for _ in range(n)]),
            ),
        ),
    )
    spec = SubstitutionSpec(
        target=0,
        dd_targets=[rng.randrange(n) for _ in range(n)],
        rr=RrLeaf(
            success=s_rr,
            failure=f_rr,
            controller=SuccessorMap([rng.randrange(n) for _ in range(n)]),
        ),
        rok_success=rok,
        time_budget=rng.randint(1, 4),
        hysteresis_cap=rng.randint(0, 2),
    )
    injections = {
        "mb-success": mb_inject.any_cell(),
        "dd-running": dd_inject.any_cell(),
        "rr-risk": rr_inject.any_cell(),
        "td-mb-failure": fail_inject.any_cell(),
    }
    return model, spec, injections


def rebuild_old_with_mb(model: BTModel, success: Optional[Region] = None, failure: Optional[Region] = None) -> BTModel:
    td = model.leaves[model.vertex_of("task_done")]
    mb = model.leaves[model.vertex_of("mb")]
    return BTModel(
        model.world,
        fal(
            condition("task_done", td.success),
            action(
                "mb",
                success=success if success is not None else mb.success,
                failure=failure if failure is not None else mb.failure,
                controller=mb.controller,
            ),
        ),
    )
