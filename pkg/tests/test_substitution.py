"""Guarded controller substitution: lifting, preservation, graph discipline."""

import dataclasses

import pytest

from btconverge.bt import BTModel, Doa, NodeKind, action, condition, fal, seq
from btconverge.execution import simulate
from btconverge.prepares import Certificate, certify_convergence
from btconverge.statespace import Region, SuccessorMap, World
from btconverge.substitution import (
    Augmentation,
    RrLeaf,
    SubstitutionError,
    SubstitutionSpec,
    substitute,
    verify_preservation,
    verify_substituted_convergence,
)
from btconverge import bundled

from helpers import random_substitution_instance, rebuild_old_with_mb


@pytest.fixture(scope="module")
def patrol_setup():
    b = bundled.patrol()
    members = [b.model.vertex_of(n) for n in b.abstraction]
    cert = certify_convergence(b.model, members, b.delta)
    assert isinstance(cert, Certificate)
    spec = bundled.patrol_substitution()
    result = substitute(b.model, spec, base_delta=b.delta)
    return b, cert, spec, result


def test_new_subtree_shape(patrol_setup):
    _b, _cert, _spec, result = patrol_setup
    m = result.new_model
    target = result.target_new
    assert m.kinds[target] is NodeKind.FALLBACK
    kids = m.tree.children[target]
    assert [m.kinds[c] for c in kids] == [
        NodeKind.CONDITION,
        NodeKind.SEQUENCE,
        NodeKind.SEQUENCE,
        NodeKind.ACTION,
    ]
    dd_branch = m.tree.children[kids[1]]
    assert [m.names[c] for c in dd_branch] == ["time_ok_dd", "risk_ok", "dd_controller"]
    rr_branch = m.tree.children[kids[2]]
    assert [m.names[c] for c in rr_branch] == ["time_ok_rr", "rr_controller"]
    assert m.names[kids[3]] == "mb_patrol"


def test_counter_dynamics_forced(patrol_setup):
    b, _cert, spec, result = patrol_setup
    aug = result.augmentation
    m = result.new_model
    for leaf in m.leaves.values():
        if leaf.controller is None:
            continue
        for cell in range(m.world.cell_count):
            c, t, h = aug.decode(cell)
            c2, t2, h2 = aug.decode(leaf.controller.next(cell))
            assert t2 == min(t + 1, spec.time_budget)
            expected_h = min(h + 1, spec.hysteresis_cap) if c in spec.rok_success else 0
            assert h2 == expected_h


def test_preservation_holds(patrol_setup):
    _b, _cert, _spec, result = patrol_setup
    assert verify_preservation(result)


def test_substituted_convergence_report(patrol_setup):
    _b, cert, spec, result = patrol_setup
    report = verify_substituted_convergence(cert, result)
    assert report
    assert report.graph_diffs == ()
    assert report.loop_exit_steps is not None
    assert report.loop_exit_steps <= spec.time_budget
    assert isinstance(report.result, Certificate)


def test_zero_budget_keeps_old_behavior():
    b = bundled.patrol()
    spec = dataclasses.replace(bundled.patrol_substitution(), time_budget=0)
    result = substitute(b.model, spec, base_delta=b.delta)
    aug = result.augmentation
    assert verify_preservation(result)
    # the guard never holds, so every augmented trace projects onto an old one
    for cell in range(result.new_model.world.cell_count):
        new_trace = simulate(result.new_model, cell, 12)
        old_trace = simulate(b.model, aug.decode(cell)[0], 12)
        projected = tuple(aug.decode(x)[0] for x in new_trace.states)
        assert projected == old_trace.states[: len(projected)]


def test_post_budget_projection_matches_old_model():
    b = bundled.patrol()
    spec = bundled.patrol_substitution()
    result = substitute(b.model, spec, base_delta=b.delta)
    aug = result.augmentation
    for base_cell in range(b.model.world.cell_count):
        start = aug.encode(base_cell, spec.time_budget, 0)
        new_trace = simulate(result.new_model, start, 10)
        old_trace = simulate(b.model, base_cell, 10)
        projected = tuple(aug.decode(x)[0] for x in new_trace.states)
        assert projected == old_trace.states[: len(projected)]


def test_dd_equal_to_mb_is_inert(patrol_setup):
    b, cert, _spec, _result = patrol_setup
    mb_ctrl = b.model.leaves[b.model.vertex_of("mb_patrol")].controller
    spec = dataclasses.replace(bundled.patrol_substitution(), dd_targets=list(mb_ctrl.targets))
    result = substitute(b.model, spec, base_delta=b.delta)
    report = verify_substituted_convergence(cert, result)
    assert report and report.graph_diffs == ()


def test_time_counter_monotone_and_no_loop_after_budget(patrol_setup):
    _b, _cert, spec, result = patrol_setup
    m = result.new_model
    aug = result.augmentation
    dd = m.vertex_of("dd_controller")
    rr = m.vertex_of("rr_controller")
    from btconverge.bt import tick_path

    for cell in range(m.world.cell_count):
        trace = simulate(m, cell, 15)
        times = [aug.decode(x)[1] for x in trace.states]
        assert times == sorted(times)
        for x in trace.states:
            if aug.decode(x)[1] >= spec.time_budget:
                path = set(tick_path(m, x))
                assert dd not in path and rr not in path


def test_hysteresis_counter_tracks_consecutive_risk_ok(patrol_setup):
    _b, _cert, spec, result = patrol_setup
    m = result.new_model
    aug = result.augmentation
    for base_cell in range(bundled.PATROL_CELLS):
        start = aug.encode(base_cell, 0, 0)
        trace = simulate(m, start, 12)
        bases = [aug.decode(x)[0] for x in trace.states]
        counters = [aug.decode(x)[2] for x in trace.states]
        for k, h in enumerate(counters):
            suffix = 0
            while suffix < k and bases[k - 1 - suffix] in spec.rok_success:
                suffix += 1
            assert h == min(suffix, spec.hysteresis_cap), (base_cell, k)


def test_hysteresis_guard_shifts_only_the_two_guarded_regions():
    b = bundled.patrol()
    plain = substitute(b.model, bundled.patrol_substitution(False), base_delta=b.delta)
    gated = substitute(b.model, bundled.patrol_substitution(True), base_delta=b.delta)
    ap, ag = plain.new_model.analysis(), gated.new_model.analysis()
    for name in plain.new_model.leaf_by_name:
        vp = plain.new_model.vertex_of(name)
        vg = gated.new_model.vertex_of(name)
        if name in ("dd_controller", "rr_controller"):
            continue
        assert ap.omega[vp] == ag.omega[vg], name
    dd_p, rr_p = plain.new_model.vertex_of("dd_controller"), plain.new_model.vertex_of("rr_controller")
    dd_g, rr_g = gated.new_model.vertex_of("dd_controller"), gated.new_model.vertex_of("rr_controller")
    assert (ap.omega[dd_p] | ap.omega[rr_p]) == (ag.omega[dd_g] | ag.omega[rr_g])
    assert ag.omega[dd_g].issubset(ap.omega[dd_p])
    assert ap.omega[rr_p].issubset(ag.omega[rr_g])


def test_preservation_on_random_instances(rng):
    for _ in range(40):
        model, spec, _inj = random_substitution_instance(rng)
        result = substitute(model, spec)
        assert verify_preservation(result)


def test_each_requirement_violation_flips_the_verdict(rng):
    for _ in range(12):
        model, spec, inj = random_substitution_instance(rng)

        variants = {
            "mb-success": (
                rebuild_old_with_mb(
                    model,
                    success=model.leaves[model.vertex_of("mb")].success
                    | Region.from_cells(model.world.cell_count, [inj["mb-success"]]),
                ),
                spec,
                "S_MB inside S_TD",
            ),
            "dd-running": (
                model,
                dataclasses.replace(
                    spec,
                    dd_success=Region.from_cells(model.world.cell_count, [inj["dd-running"]]),
                ),
                "R_DD is the whole universe",
            ),
            "rr-risk": (
                model,
                dataclasses.replace(
                    spec,
                    rr=RrLeaf(
                        spec.rr.success
                        | Region.from_cells(model.world.cell_count, [inj["rr-risk"]]),
                        spec.rr.failure,
                        spec.rr.controller,
                        spec.rr.doa,
                    ),
                ),
                "S_RR inside S_ROK",
            ),
            "td-mb-failure": (
                rebuild_old_with_mb(
                    model,
                    failure=model.leaves[model.vertex_of("mb")].failure
                    | Region.from_cells(model.world.cell_count, [inj["td-mb-failure"]]),
                ),
                spec,
                "F_TD and F_MB disjoint",
            ),
        }
        for kind, (bad_model, bad_spec, message) in variants.items():
            with pytest.raises(SubstitutionError, match=message):
                substitute(bad_model, bad_spec)
            result = substitute(bad_model, bad_spec, enforce=False)
            verdict = verify_preservation(result)
            assert not verdict, kind
            assert verdict.witness is not None


def test_task_done_everywhere_preserves_trivially():
    n = 6
    world = World(n, adjacency=[(i, j) for i in range(n) for j in range(i + 1, n)])
    full = Region.full(n)
    model = BTModel(
        world,
        fal(
            condition("task_done", full),
            action("mb", success=Region.empty(n), controller=SuccessorMap.identity(n)),
        ),
    )
    spec = SubstitutionSpec(
        target=0,
        dd_targets=list(range(n)),
        rr=RrLeaf(Region.empty(n), Region.empty(n), SuccessorMap.identity(n)),
        rok_success=Region.empty(n),
        time_budget=2,
    )
    result = substitute(model, spec)
    assert verify_preservation(result)
    analysis = result.new_model.analysis()
    assert analysis.success[result.target_new] == result.new_model.world.full_region()


def test_target_shape_validation():
    b = bundled.patrol()
    spec = dataclasses.replace(bundled.patrol_substitution(), target=0)
    with pytest.raises(SubstitutionError, match="fallback"):
        substitute(b.model, spec, base_delta=b.delta)


def test_illegal_neighbor_edge_is_an_error():
    """A prep stage bordering the guarded region breaks the loop discipline."""
    n = 10
    world = World(n, coords=[(float(x),) for x in range(n)])
    region = lambda pred: Region.where(n, pred)
    prep_done = region(lambda x: x >= 2)
    td = region(lambda x: x >= 8)
    model = BTModel(
        world,
        seq(
            fal(
                condition("prep_done", prep_done),
                action(
                    "prep",
                    success=prep_done,
                    controller=SuccessorMap.from_function(n, lambda x: x + 1 if x < 2 else x),
                    doa=Doa(region(lambda x: x <= 2), Region.from_cells(n, [2]), 2),
                ),
            ),
            fal(
                condition("task_done", td),
                action(
                    "mb",
                    success=td,
                    controller=SuccessorMap.from_function(n, lambda x: x + 1 if 2 <= x < 8 else x),
                    doa=Doa(region(lambda x: 2 <= x <= 8), Region.from_cells(n, [8]), 6),
                ),
            ),
            action(
                "park",
                success=Region.from_cells(n, [9]),
                controller=SuccessorMap.from_function(n, lambda x: x + 1 if 8 <= x < 9 else x),
                doa=Doa(td, Region.from_cells(n, [9]), 2),
            ),
        ),
    )
    members = [model.vertex_of(x) for x in ("prep", "mb", "park")]
    cert = certify_convergence(model, members, 1.0)
    assert isinstance(cert, Certificate)
    spec = SubstitutionSpec(
        target=4,
        dd_targets=[x + 1 if x < 9 else x for x in range(n)],
        rr=RrLeaf(
            success=Region.from_cells(n, [5]),
            failure=Region.empty(n),
            controller=SuccessorMap.from_function(n, lambda x: x + 1 if 2 <= x < 5 else x),
            doa=Doa(region(lambda x: 2 <= x <= 5), Region.from_cells(n, [5]), 4),
        ),
        rok_success=region(lambda x: 2 <= x <= 7),
        time_budget=5,
        hysteresis_cap=0,
    )
    result = substitute(model, spec, base_delta=1.0)
    # the guarded slice starts at cell 2, right next to the prep funnel
    with pytest.raises(SubstitutionError, match="illegal edge"):
        verify_substituted_convergence(cert, result)


def test_augmentation_lift_and_project_roundtrip():
    base = World(4, adjacency=[(0, 1), (1, 2), (2, 3)])
    aug = Augmentation(base, 2, 1, Region.from_cells(4, [1, 2]))
    r = Region.from_cells(4, [0, 2])
    lifted = aug.lift_region(r)
    assert aug.project_region(lifted) == r
    assert len(lifted) == len(r) * 3 * 2
    assert aug.time_ok_region() == Region.where(
        aug.world.cell_count, lambda cell: aug.decode(cell)[1] < 2
    )
