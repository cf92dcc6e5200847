"""Guarded substitution of a data-driven controller into a verified tree.

A fallback of the form (task-done condition, model-based action) is replaced
by a fallback that first tries a data-driven controller while a time budget
and a risk condition hold, then a risk-reduction controller while the time
budget holds, and finally the original model-based action.  The state is
augmented with a saturating step counter (the time budget) and a hysteresis
counter measuring consecutive time spent in the risk-ok region, so all
region machinery applies verbatim to the product universe.

The module mechanically verifies what the substitution is supposed to
preserve: the subtree's propagated success region stays equal to the
task-done region with an empty failure region, the transition graph changes
only by the documented data-driven/risk-reduction loop, the loop is left
within the time budget, and the whole model re-certifies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .bt import BTModel, Doa, LeafData, NodeKind, NodeSpec, condition as condition_spec
from .execution import empirical_exit_time
from .prepares import (
    FLAVOR_BASIN,
    FLAVOR_GOAL,
    FLAVOR_OUTSIDE,
    Certificate,
    Refutation,
    build_prepares_graph,
    certify_convergence,
)
from .statespace import Region, SuccessorMap, World

DD_NAME = "dd_controller"
RR_NAME = "rr_controller"
ROK_NAME = "risk_ok"
TOK_DD_NAME = "time_ok_dd"
TOK_RR_NAME = "time_ok_rr"


class SubstitutionError(ValueError):
    pass


@dataclass(frozen=True)
class RrLeaf:
    """Risk-reduction controller data over the base universe."""

    success: Region
    failure: Region
    controller: SuccessorMap
    doa: Optional[Doa] = None


@dataclass(frozen=True)
class SubstitutionSpec:
    """What to install at the target fallback.

    dd_targets gives the data-driven controller's base-cell target per base
    cell (length N) or per augmented cell (length N * budgets), so a learned
    policy may read the counters.  dd_success / dd_failure exist only to
    let tests inject a violation of the full-running-region requirement.
    """

    target: int
    dd_targets: Sequence[int]
    rr: RrLeaf
    rok_success: Region
    time_budget: int
    hysteresis_cap: int = 0
    hysteresis: bool = False
    dd_success: Optional[Region] = None
    dd_failure: Optional[Region] = None


class Augmentation:
    """Product of a base universe with time and hysteresis counters.

    The time counter advances by one each step and saturates at the budget;
    the hysteresis counter follows the consecutive-risk-ok rule: it
    increments (capped) when the pre-step base cell sits in the risk-ok
    region and resets to zero otherwise.  One-step adjacency is directed:
    counter components move exactly as forced, base components move to a
    neighboring-or-same base cell.
    """

    __slots__ = (
        "base",
        "time_cap",
        "hyst_cap",
        "rok_base",
        "world",
        "_base_neighbors",
    )

    def __init__(
        self,
        base: World,
        time_cap: int,
        hyst_cap: int,
        rok_base: Region,
        base_delta: Optional[float] = None,
    ) -> None:
        if time_cap < 0 or hyst_cap < 0:
            raise SubstitutionError("counter caps must be non-negative")
        self.base = base
        self.time_cap = time_cap
        self.hyst_cap = hyst_cap
        self.rok_base = rok_base
        n_base = base.cell_count
        if base.coords is not None:
            if base_delta is None:
                raise SubstitutionError("metric base world needs its step bound")
            balls = base._balls(base_delta)
            self._base_neighbors = tuple(balls)
        elif base.adjacency_rows is not None:
            self._base_neighbors = tuple(
                row | (1 << c) for c, row in enumerate(base.adjacency_rows)
            )
        else:
            raise SubstitutionError("base world needs coordinates or adjacency")
        n_aug = n_base * (time_cap + 1) * (hyst_cap + 1)
        rows = [0] * n_aug
        for cell in range(n_aug):
            c, t, h = self.decode(cell)
            t2 = min(t + 1, time_cap)
            h2 = min(h + 1, hyst_cap) if c in rok_base else 0
            targets = self._base_neighbors[c]
            while targets:
                low = targets & -targets
                c2 = low.bit_length() - 1
                targets ^= low
                rows[cell] |= 1 << self.encode(c2, t2, h2)
        self.world = World(n_aug, adjacency_rows=rows)

    # ------------------------------------------------------------------
    def encode(self, c: int, t: int, h: int) -> int:
        return (c * (self.time_cap + 1) + t) * (self.hyst_cap + 1) + h

    def decode(self, cell: int) -> tuple[int, int, int]:
        cell, h = divmod(cell, self.hyst_cap + 1)
        c, t = divmod(cell, self.time_cap + 1)
        return c, t, h

    def lift_region(self, base_region: Region) -> Region:
        return Region.where(
            self.world.cell_count, lambda cell: self.decode(cell)[0] in base_region
        )

    def project_region(self, region: Region) -> Region:
        return Region.from_cells(
            self.base.cell_count, (self.decode(cell)[0] for cell in region.cells())
        )

    def time_ok_region(self) -> Region:
        return Region.where(
            self.world.cell_count, lambda cell: self.decode(cell)[1] < self.time_cap
        )

    def hysteresis_ready_region(self) -> Region:
        return Region.where(
            self.world.cell_count, lambda cell: self.decode(cell)[2] >= self.hyst_cap
        )

    def step(self, c: int, t: int, h: int, base_target: int) -> int:
        t2 = min(t + 1, self.time_cap)
        h2 = min(h + 1, self.hyst_cap) if c in self.rok_base else 0
        return self.encode(base_target, t2, h2)

    def lift_map(self, base_targets: Sequence[int]) -> SuccessorMap:
        """Lift base-cell targets (indexed by base or augmented cell)."""
        n_aug = self.world.cell_count
        per_aug = len(base_targets) == n_aug
        if not per_aug and len(base_targets) != self.base.cell_count:
            raise SubstitutionError("target array length matches neither universe")
        out = []
        for cell in range(n_aug):
            c, t, h = self.decode(cell)
            base_target = base_targets[cell] if per_aug else base_targets[c]
            out.append(self.step(c, t, h, base_target))
        return SuccessorMap(out)

    def lift_leaf(self, leaf: LeafData) -> LeafData:
        controller = None
        if leaf.controller is not None:
            controller = self.lift_map(leaf.controller.targets)
        doa = None
        if leaf.doa is not None:
            doa = Doa(
                self.lift_region(leaf.doa.basin),
                self.lift_region(leaf.doa.goal),
                leaf.doa.horizon,
            )
        return LeafData(
            leaf.name,
            leaf.kind,
            self.lift_region(leaf.success),
            self.lift_region(leaf.failure),
            controller,
            doa,
        )


@dataclass(frozen=True)
class SubstitutionResult:
    old_model: BTModel
    new_model: BTModel
    augmentation: Augmentation
    spec: SubstitutionSpec
    target_old: int
    target_new: int
    td_base_success: Region


def _target_shape(model: BTModel, target: int) -> tuple[int, int]:
    if not 0 <= target < model.n or model.kinds[target] is not NodeKind.FALLBACK:
        raise SubstitutionError(f"target vertex {target} is not a fallback node")
    kids = model.tree.children[target]
    if len(kids) != 2:
        raise SubstitutionError("target fallback must have exactly two children")
    td, mb = kids
    if model.kinds[td] is not NodeKind.CONDITION or model.kinds[mb] is not NodeKind.ACTION:
        raise SubstitutionError("target children must be a condition then an action")
    return td, mb


def substitute(
    model: BTModel,
    spec: SubstitutionSpec,
    base_delta: Optional[float] = None,
    enforce: bool = True,
) -> SubstitutionResult:
    """Build the augmented model with the guarded subtree installed.

    With enforce on, the four displayed requirements are checked on the base
    regions first and a violation is reported by name; enforce off exists so
    tests can watch the preservation check catch a bad spec.
    """
    td, mb = _target_shape(model, spec.target)
    td_leaf = model.leaves[td]
    mb_leaf = model.leaves[mb]
    if enforce:
        if not mb_leaf.success.issubset(td_leaf.success):
            raise SubstitutionError("violated requirement: S_MB inside S_TD")
        if spec.dd_success is not None or spec.dd_failure is not None:
            raise SubstitutionError("violated requirement: R_DD is the whole universe")
        if not spec.rr.success.issubset(spec.rok_success):
            raise SubstitutionError("violated requirement: S_RR inside S_ROK")
        if not td_leaf.failure.isdisjoint(mb_leaf.failure):
            raise SubstitutionError("violated requirement: F_TD and F_MB disjoint")
    aug = Augmentation(
        model.world, spec.time_budget, spec.hysteresis_cap, spec.rok_success, base_delta
    )
    n_aug = aug.world.cell_count
    empty = Region.empty(n_aug)
    taken = set(model.leaf_by_name)
    for name in (DD_NAME, RR_NAME, ROK_NAME, TOK_DD_NAME, TOK_RR_NAME):
        if name in taken:
            raise SubstitutionError(f"leaf name {name!r} already used by the model")

    time_ok = aug.time_ok_region()
    rok_region = aug.lift_region(spec.rok_success)
    rr_success = aug.lift_region(spec.rr.success)
    rr_goal = aug.lift_region(spec.rr.doa.goal) if spec.rr.doa is not None else empty
    if spec.hysteresis:
        # the counter guard applies to the risk condition and, with it, to
        # what counts as finished risk reduction; gating only the condition
        # would let the subtree succeed through the risk-reduction branch in
        # counter-reset states and break the preservation identity
        ready = aug.hysteresis_ready_region()
        rok_region &= ready
        rr_success &= ready
        rr_goal &= ready
    dd_success = aug.lift_region(spec.dd_success) if spec.dd_success is not None else empty
    dd_failure = aug.lift_region(spec.dd_failure) if spec.dd_failure is not None else empty
    dd_leaf = LeafData(
        DD_NAME,
        NodeKind.ACTION,
        dd_success,
        dd_failure,
        aug.lift_map(spec.dd_targets),
        Doa(empty, empty, 1),
    )
    rr_doa = (
        Doa(aug.lift_region(spec.rr.doa.basin), rr_goal, spec.rr.doa.horizon)
        if spec.rr.doa is not None
        else Doa(empty, empty, 1)
    )
    rr_leaf = LeafData(
        RR_NAME,
        NodeKind.ACTION,
        rr_success,
        aug.lift_region(spec.rr.failure),
        aug.lift_map(spec.rr.controller.targets),
        rr_doa,
    )

    def rebuild(v: int) -> NodeSpec:
        if v == spec.target:
            return NodeSpec(
                NodeKind.FALLBACK,
                (
                    NodeSpec(NodeKind.CONDITION, leaf=aug.lift_leaf(td_leaf)),
                    NodeSpec(
                        NodeKind.SEQUENCE,
                        (
                            condition_spec(TOK_DD_NAME, time_ok),
                            condition_spec(ROK_NAME, rok_region),
                            NodeSpec(NodeKind.ACTION, leaf=dd_leaf),
                        ),
                    ),
                    NodeSpec(
                        NodeKind.SEQUENCE,
                        (
                            condition_spec(TOK_RR_NAME, time_ok),
                            NodeSpec(NodeKind.ACTION, leaf=rr_leaf),
                        ),
                    ),
                    NodeSpec(NodeKind.ACTION, leaf=aug.lift_leaf(mb_leaf)),
                ),
            )
        kind = model.kinds[v]
        if kind in (NodeKind.SEQUENCE, NodeKind.FALLBACK):
            return NodeSpec(kind, tuple(rebuild(c) for c in model.tree.children[v]))
        return NodeSpec(kind, leaf=aug.lift_leaf(model.leaves[v]))

    new_model = BTModel(aug.world, rebuild(model.tree.root))
    # locate the rebuilt target: parent of the new MB leaf
    mb_new = new_model.vertex_of(mb_leaf.name)
    target_new = new_model.tree.parent[mb_new]
    return SubstitutionResult(
        old_model=model,
        new_model=new_model,
        augmentation=aug,
        spec=spec,
        target_old=spec.target,
        target_new=target_new,
        td_base_success=td_leaf.success,
    )


@dataclass(frozen=True)
class PreservationVerdict:
    ok: bool
    detail: str = ""
    witness: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


def verify_preservation(result: SubstitutionResult) -> PreservationVerdict:
    """Extensional check that the swap left the subtree's regions untouched.

    The new subtree's propagated success region must equal the old one and
    also the lifted task-done region; both failure regions must be empty.
    Reported per augmented cell with the first difference as witness.
    """
    aug = result.augmentation
    old_analysis = result.old_model.analysis()
    new_analysis = result.new_model.analysis()
    s_old = aug.lift_region(old_analysis.success[result.target_old])
    f_old = aug.lift_region(old_analysis.failure[result.target_old])
    s_new = new_analysis.success[result.target_new]
    f_new = new_analysis.failure[result.target_new]
    s_td = aug.lift_region(result.td_base_success)
    if s_new != s_old:
        diff = (s_new - s_old) | (s_old - s_new)
        return PreservationVerdict(False, "new success region differs from old", diff.any_cell())
    if s_new != s_td:
        diff = (s_new - s_td) | (s_td - s_new)
        return PreservationVerdict(
            False, "subtree success region differs from task-done region", diff.any_cell()
        )
    if not f_old.is_empty:
        return PreservationVerdict(False, "old subtree can fail", f_old.any_cell())
    if not f_new.is_empty:
        return PreservationVerdict(False, "new subtree can fail", f_new.any_cell())
    return PreservationVerdict(True)


@dataclass(frozen=True)
class SubstitutionReport:
    ok: bool
    graph_diffs: tuple[str, ...]
    loop_exit_steps: Optional[int]
    result: Certificate | Refutation

    def __bool__(self) -> bool:
        return self.ok and isinstance(self.result, Certificate)


def verify_substituted_convergence(
    old_cert: Certificate,
    result: SubstitutionResult,
    seeds: Optional[Sequence[int]] = None,
) -> SubstitutionReport:
    """Re-derive the transition graph and certificate of the substituted model.

    The new graph must equal the old one except for the documented loop
    subgraph: the data-driven slice and the risk-reduction slice may feed
    each other and exit only to the model-based slice or to the old
    successors of the model-based slice; edges between untouched slices
    must match the old graph exactly.  An edge breaking the loop pattern is
    an error; the loop itself must be left within the time budget.
    """
    new_model = result.new_model
    old_model = result.old_model
    mb_name = old_model.leaves[_target_shape(old_model, result.target_old)[1]].name
    name_of_old = {v: old_model.names[v] for v in old_model.leaves}
    new_vertex_of_name = new_model.leaf_by_name

    old_graph = old_cert.graph
    old_owners = {vtx.owner for vtx in old_graph.vertices}
    owner_map = {o: new_vertex_of_name[name_of_old[o]] for o in old_owners}
    abstraction = sorted(
        set(owner_map.values()) | {new_model.vertex_of(DD_NAME), new_model.vertex_of(RR_NAME)}
    )
    new_graph = build_prepares_graph(new_model, abstraction)

    dd_v = new_model.vertex_of(DD_NAME)
    rr_v = new_model.vertex_of(RR_NAME)
    mb_v = new_vertex_of_name[mb_name]
    mb_old = old_model.vertex_of(mb_name)

    def new_key(idx: int) -> tuple[int, str]:
        return new_graph.vertices[idx].key()

    def old_key_to_new(key: tuple[int, str]) -> tuple[int, str]:
        return (owner_map[key[0]], key[1])

    diffs: list[str] = []
    # well-behavedness: the loop owners expose exactly the expected slices
    for owner, flavors in ((dd_v, {FLAVOR_OUTSIDE}), (rr_v, {FLAVOR_BASIN}), (mb_v, {FLAVOR_BASIN, FLAVOR_GOAL})):
        got = {v.flavor for v in new_graph.vertices if v.owner == owner}
        extra = got - flavors
        if extra:
            diffs.append(
                f"owner {new_model.names[owner]} has unexpected slices {sorted(extra)}"
            )

    old_edges_keys = {
        (old_graph.vertices[u].key(), old_graph.vertices[w].key()) for u, w in old_graph.edges
    }
    allowed_next = {
        old_key_to_new(old_graph.vertices[w].key())
        for u, w in old_graph.edges
        if old_graph.vertices[u].owner == mb_old
    }
    sources_old = {
        old_key_to_new(old_graph.vertices[u].key())
        for u, w in old_graph.edges
        if old_graph.vertices[w].owner == mb_old
    }
    loop_owners = {dd_v, rr_v}
    loop_keys = {(dd_v, FLAVOR_OUTSIDE), (rr_v, FLAVOR_BASIN)}
    allowed_exits = allowed_next | {(mb_v, FLAVOR_BASIN)}

    for u, w in sorted(new_graph.edges):
        uk, wk = new_key(u), new_key(w)
        if uk[0] in loop_owners:
            if wk in loop_keys or wk in allowed_exits:
                continue
            raise SubstitutionError(
                f"illegal edge out of the guarded loop: {uk} -> {wk}"
            )
        if wk[0] in loop_owners:
            if uk in sources_old or uk[0] == mb_v:
                continue
            raise SubstitutionError(
                f"illegal edge into the guarded loop: {uk} -> {wk}"
            )

    # untouched part must match the old graph exactly (owner-mapped)
    new_plain = {
        (new_key(u), new_key(w))
        for u, w in new_graph.edges
        if new_key(u)[0] not in loop_owners and new_key(w)[0] not in loop_owners
    }
    old_plain_mapped = {
        (old_key_to_new(a), old_key_to_new(b)) for a, b in old_edges_keys
    }
    for edge in sorted(new_plain - old_plain_mapped):
        diffs.append(f"new edge absent from old graph: {edge}")
    for edge in sorted(old_plain_mapped - new_plain):
        if edge[1][0] == mb_v or edge[0][0] == mb_v:
            # old flow into/out of the model-based slice may now route via the loop
            target_ok = any(
                new_key(w)[0] in loop_owners and new_key(u) == edge[0]
                for u, w in new_graph.edges
            )
            if edge[1][0] == mb_v and target_ok:
                continue
        diffs.append(f"old edge missing from new graph: {edge}")

    loop_cells = Region.empty(new_model.world.cell_count)
    for vtx in new_graph.vertices:
        if vtx.owner in loop_owners:
            loop_cells |= vtx.cells
    loop_exit: Optional[int] = None
    if not loop_cells.is_empty:
        exit_result = empirical_exit_time(new_model, loop_cells)
        loop_exit = exit_result.steps
        if exit_result.steps is None:
            diffs.append(f"guarded loop never exits from cell {exit_result.witness}")
        elif exit_result.steps > result.spec.time_budget:
            diffs.append(
                f"guarded loop exit takes {exit_result.steps} steps, over the "
                f"budget of {result.spec.time_budget}"
            )

    outcome = certify_convergence(new_model, abstraction, seeds=seeds)
    return SubstitutionReport(
        ok=not diffs and isinstance(outcome, Certificate),
        graph_diffs=tuple(diffs),
        loop_exit_steps=loop_exit,
        result=outcome,
    )
