"""Bundled example models: small worlds with known analysis results.

* eat_tree       - a symbolic three-leaf tree over status-triple cells
* surveying_robot - a line world with battery and survey-progress
                    dimensions whose slice graph contains a recharge cycle
* surveying_robot_library - the same scenario expressed as an
                    action/condition library (basins widened to the
                    precondition intersections, as a library requires)
* mobile_manipulator - a pick-and-place library over a 32-cell bit universe
* patrol         - a line patrol task shaped for guarded controller
                    substitution (its risk region isolates the new slices)
* gridworld      - a 6x6 funnel chain for demos and exports
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .backchain import ActionConditionLibrary, ActionEntry, ConditionEntry
from .bt import BTModel, Doa, LeafData, NodeKind, action, condition, fal, seq
from .statespace import Region, SuccessorMap, World
from .substitution import RrLeaf, SubstitutionSpec


@dataclass(frozen=True)
class BundledModel:
    name: str
    model: BTModel
    abstraction: tuple[str, ...]
    delta: Optional[float]


# ----------------------------------------------------------------------
# eat tree: cells encode the (apple, peel, banana) statuses in base 3,
# digit values 0 running, 1 success, 2 failure.

EAT_CELLS = 27


def _eat_digit(cell: int, slot: int) -> int:
    return (cell // 3**slot) % 3


def _eat_region(n: int, slot: int, value: int) -> Region:
    return Region.where(n, lambda c: _eat_digit(c, slot) == value)


def _eat_controller(slot: int) -> SuccessorMap:
    # finish the own task: running -> success, otherwise stay put
    def go(cell: int) -> int:
        return cell + 3**slot if _eat_digit(cell, slot) == 0 else cell

    return SuccessorMap.from_function(EAT_CELLS, go)


def eat_tree() -> BundledModel:
    n = EAT_CELLS
    adjacency = [
        (c, d)
        for c in range(n)
        for d in range(c + 1, n)
        if sum(_eat_digit(c, s) != _eat_digit(d, s) for s in range(3)) == 1
    ]
    world = World(n, adjacency=adjacency)

    def eat_action(name: str, slot: int):
        return action(
            name,
            success=_eat_region(n, slot, 1),
            failure=_eat_region(n, slot, 2),
            controller=_eat_controller(slot),
            doa=Doa(_eat_region(n, slot, 2).complement(), _eat_region(n, slot, 1), 2),
        )

    model = BTModel(
        world,
        fal(
            eat_action("eat_apple", 0),
            seq(eat_action("peel_banana", 1), eat_action("eat_banana", 2)),
        ),
    )
    return BundledModel("eat_tree", model, ("eat_apple", "peel_banana", "eat_banana"), None)


# ----------------------------------------------------------------------
# surveying robot: positions 0 (home) .. 2 (path), battery 1..4, survey
# progress 0..4.  Cells where the survey is complete but the battery is
# below the go-out threshold do not exist: completing the final stretch
# docks the robot back to a working charge, so "done but stranded" states
# never arise and the behavior graph is exactly the documented cycle.

SURVEY_POS = (0, 1, 2)
SURVEY_BAT = (1, 2, 3, 4)
SURVEY_SV = (0, 1, 2, 3, 4)
SURVEY_MAX = 4
SURVEY_THRESH = 3  # battery level needed to head out


class SurveyWorld:
    """Cell numbering helpers for the surveying robot universe."""

    def __init__(self) -> None:
        self.triples = [
            (pos, bat, sv)
            for pos in SURVEY_POS
            for bat in SURVEY_BAT
            for sv in SURVEY_SV
            if not (sv == SURVEY_MAX and bat < SURVEY_THRESH)
        ]
        self.index = {t: i for i, t in enumerate(self.triples)}
        self.n = len(self.triples)
        self.world = World(self.n, coords=[(float(p), float(b), float(s)) for p, b, s in self.triples])

    def cell(self, pos: int, bat: int, sv: int) -> int:
        return self.index[(pos, bat, sv)]

    def region(self, pred: Callable[[int, int, int], bool]) -> Region:
        return Region.from_cells(
            self.n, (i for i, (p, b, s) in enumerate(self.triples) if pred(p, b, s))
        )

    def controller(self, rule: Callable[[int, int, int], tuple[int, int, int]]) -> SuccessorMap:
        targets = []
        for i, triple in enumerate(self.triples):
            out = rule(*triple)
            targets.append(self.index.get(out, i))
        return SuccessorMap(targets)


def _survey_rules(sw: SurveyWorld) -> dict[str, object]:
    full = sw.world.full_region()

    def go_home(p: int, b: int, s: int) -> tuple[int, int, int]:
        return (p - 1, b, s) if p > 0 else (p, b, s)

    def charge(p: int, b: int, s: int) -> tuple[int, int, int]:
        return (p, b + 1, s) if b < 4 else (p, b, s)

    def goto_path(p: int, b: int, s: int) -> tuple[int, int, int]:
        return (p + 1, b, s) if p < 2 else (p, b, s)

    def follow_path(p: int, b: int, s: int) -> tuple[int, int, int]:
        if p != 2 or s >= SURVEY_MAX:
            return (p, b, s)
        if b <= 1:
            return (p, b + 1, s)  # dock top-up before surveying on
        if s + 1 < SURVEY_MAX:
            return (p, max(b - 1, 2), s + 1)
        return (p, max(b - 1, SURVEY_THRESH), s + 1)  # final stretch ends at the dock

    def idle(p: int, b: int, s: int) -> tuple[int, int, int]:
        return (p - 1, b, s) if p > 0 else (p, b, s)

    return {
        "battery_ok": sw.region(lambda p, b, s: b >= SURVEY_THRESH),
        "at_home": sw.region(lambda p, b, s: p == 0),
        "battery_nonzero": full,
        "surveyed": sw.region(lambda p, b, s: s == SURVEY_MAX),
        "near_path": sw.region(lambda p, b, s: p == 2),
        "go_home": (sw.region(lambda p, b, s: p == 0), sw.controller(go_home)),
        "charge": (sw.region(lambda p, b, s: b == 4), sw.controller(charge)),
        "goto_path": (sw.region(lambda p, b, s: p == 2), sw.controller(goto_path)),
        "follow_path": (sw.region(lambda p, b, s: s == SURVEY_MAX), sw.controller(follow_path)),
        "idle": (sw.region(lambda p, b, s: p == 0), sw.controller(idle)),
    }


def surveying_robot() -> BundledModel:
    sw = SurveyWorld()
    r = _survey_rules(sw)
    doas = {
        "go_home": Doa(sw.region(lambda p, b, s: b < SURVEY_THRESH), sw.region(lambda p, b, s: b < SURVEY_THRESH and p == 0), 2),
        "charge": Doa(sw.region(lambda p, b, s: p == 0 and s < SURVEY_MAX), sw.region(lambda p, b, s: p == 0 and b == 4 and s < SURVEY_MAX), 3),
        "goto_path": Doa(sw.region(lambda p, b, s: b >= SURVEY_THRESH and s < SURVEY_MAX), sw.region(lambda p, b, s: b >= SURVEY_THRESH and s < SURVEY_MAX and p == 2), 2),
        "follow_path": Doa(
            sw.region(lambda p, b, s: (p == 2 and b >= 2 and s < SURVEY_MAX) or s == SURVEY_MAX),
            sw.region(lambda p, b, s: s == SURVEY_MAX),
            4,
        ),
        "idle": Doa(sw.region(lambda p, b, s: s == SURVEY_MAX), sw.region(lambda p, b, s: s == SURVEY_MAX and p == 0), 2),
    }

    def act(name: str) -> object:
        success, controller = r[name]
        return action(name, success=success, controller=controller, doa=doas[name])

    model = BTModel(
        sw.world,
        seq(
            fal(
                condition("battery_ok", r["battery_ok"]),
                seq(
                    fal(
                        condition("at_home", r["at_home"]),
                        seq(condition("battery_nonzero", r["battery_nonzero"]), act("go_home")),
                    ),
                    act("charge"),
                ),
            ),
            fal(
                condition("surveyed", r["surveyed"]),
                seq(
                    fal(
                        condition("near_path", r["near_path"]),
                        seq(condition("battery_nonzero_2", r["battery_nonzero"]), act("goto_path")),
                    ),
                    act("follow_path"),
                ),
            ),
            act("idle"),
        ),
    )
    return BundledModel(
        "surveying_robot",
        model,
        ("go_home", "charge", "goto_path", "follow_path", "idle"),
        math.sqrt(2.0),
    )


def surveying_robot_library() -> tuple[ActionConditionLibrary, str]:
    """The same scenario as a library; basins equal precondition intersections."""
    sw = SurveyWorld()
    r = _survey_rules(sw)
    full = sw.world.full_region()
    at_home = r["at_home"]
    near_path = r["near_path"]
    battery_ok = r["battery_ok"]
    surveyed = r["surveyed"]

    def cond_leaf(name: str, success: Region) -> LeafData:
        return LeafData(name, NodeKind.CONDITION, success, success.complement())

    def act_leaf(name: str, basin: Region, goal: Region, horizon: int) -> LeafData:
        success, controller = r[name]
        return LeafData(
            name, NodeKind.ACTION, success, Region.empty(sw.n), controller, Doa(basin, goal, horizon)
        )

    conditions = {
        "battery_ok": ConditionEntry(cond_leaf("battery_ok", battery_ok), ("charge",)),
        "at_home": ConditionEntry(cond_leaf("at_home", at_home), ("go_home",)),
        "battery_nonzero": ConditionEntry(cond_leaf("battery_nonzero", full), ()),
        "surveyed": ConditionEntry(cond_leaf("surveyed", surveyed), ("follow_path",)),
        "near_path": ConditionEntry(cond_leaf("near_path", near_path), ("goto_path",)),
        "battery_nonzero_2": ConditionEntry(cond_leaf("battery_nonzero_2", full), ()),
    }
    actions = {
        "go_home": ActionEntry(
            act_leaf("go_home", full, r["go_home"][0], 2), ("battery_nonzero",)
        ),
        "charge": ActionEntry(
            act_leaf("charge", at_home, at_home & r["charge"][0], 3), ("at_home",)
        ),
        "goto_path": ActionEntry(
            act_leaf("goto_path", full, r["goto_path"][0], 2), ("battery_nonzero_2",)
        ),
        "follow_path": ActionEntry(
            act_leaf("follow_path", near_path, near_path & r["follow_path"][0], 6), ("near_path",)
        ),
        "idle": ActionEntry(
            act_leaf("idle", battery_ok & surveyed, battery_ok & surveyed & at_home, 2),
            ("battery_ok", "surveyed"),
        ),
    }
    lib = ActionConditionLibrary(sw.world, actions, conditions)
    return lib, "idle"


# ----------------------------------------------------------------------
# mobile manipulator: 32-cell universe, one bit per establishable fact.

_MANIP_BITS = {
    "in_safe_area": 0,
    "object_at_goal": 1,
    "object_in_gripper": 2,
    "near_object": 3,
    "near_goal": 4,
}


def mobile_manipulator() -> tuple[ActionConditionLibrary, str]:
    n = 32
    world = World(n, adjacency=[
        (c, c ^ (1 << b)) for c in range(n) for b in range(5) if not c >> b & 1
    ])
    full = Region.full(n)

    def bit_region(name: str) -> Region:
        b = _MANIP_BITS[name]
        return Region.where(n, lambda c: bool(c >> b & 1))

    def set_bit(name: str) -> SuccessorMap:
        b = _MANIP_BITS[name]
        return SuccessorMap.from_function(n, lambda c: c | 1 << b)

    def cond_leaf(name: str, success: Region) -> LeafData:
        return LeafData(name, NodeKind.CONDITION, success, success.complement())

    def act_leaf(name: str, success: Region, controller: SuccessorMap, basin: Region) -> LeafData:
        goal = basin & success
        return LeafData(
            name, NodeKind.ACTION, success, Region.empty(n), controller, Doa(basin, goal, 2)
        )

    conditions = {
        "in_safe_area": ConditionEntry(cond_leaf("in_safe_area", bit_region("in_safe_area")), ("goto_safe_area",)),
        "safe_area_reachable": ConditionEntry(cond_leaf("safe_area_reachable", full), ()),
        "object_at_goal": ConditionEntry(cond_leaf("object_at_goal", bit_region("object_at_goal")), ("place_object",)),
        "object_in_gripper": ConditionEntry(cond_leaf("object_in_gripper", bit_region("object_in_gripper")), ("grasp_object",)),
        "near_object": ConditionEntry(cond_leaf("near_object", bit_region("near_object")), ("goto_object",)),
        "object_reachable": ConditionEntry(cond_leaf("object_reachable", full), ()),
        "near_goal": ConditionEntry(cond_leaf("near_goal", bit_region("near_goal")), ("goto_goal",)),
        "goal_reachable": ConditionEntry(cond_leaf("goal_reachable", full), ()),
    }
    actions = {
        "goto_safe_area": ActionEntry(
            act_leaf("goto_safe_area", bit_region("in_safe_area"), set_bit("in_safe_area"), full),
            ("safe_area_reachable",),
        ),
        "goto_object": ActionEntry(
            act_leaf("goto_object", bit_region("near_object"), set_bit("near_object"), full),
            ("object_reachable",),
        ),
        "grasp_object": ActionEntry(
            act_leaf("grasp_object", bit_region("object_in_gripper"), set_bit("object_in_gripper"), bit_region("near_object")),
            ("near_object",),
        ),
        "goto_goal": ActionEntry(
            act_leaf("goto_goal", bit_region("near_goal"), set_bit("near_goal"), full),
            ("goal_reachable",),
        ),
        "place_object": ActionEntry(
            act_leaf(
                "place_object",
                bit_region("object_at_goal"),
                set_bit("object_at_goal"),
                bit_region("object_in_gripper") & bit_region("near_goal"),
            ),
            ("object_in_gripper", "near_goal"),
        ),
        "idle": ActionEntry(
            act_leaf(
                "idle",
                bit_region("in_safe_area") & bit_region("object_at_goal"),
                SuccessorMap.identity(n),
                bit_region("in_safe_area") & bit_region("object_at_goal"),
            ),
            ("in_safe_area", "object_at_goal"),
        ),
    }
    return ActionConditionLibrary(world, actions, conditions), "idle"


# ----------------------------------------------------------------------
# patrol: a line 0..9; drive right until the task region, then park.  The
# risk region 3..7 isolates the data-driven slice so substitution verifies.

PATROL_CELLS = 10


def patrol() -> BundledModel:
    n = PATROL_CELLS
    world = World(n, coords=[(float(x),) for x in range(n)])
    task_done = Region.where(n, lambda x: x >= 8)

    mb_ctrl = SuccessorMap.from_function(n, lambda x: x + 1 if x < 8 else x)
    park_ctrl = SuccessorMap.from_function(n, lambda x: x + 1 if x < 9 else x)
    model = BTModel(
        world,
        seq(
            fal(
                condition("task_done", task_done),
                action(
                    "mb_patrol",
                    success=task_done,
                    controller=mb_ctrl,
                    doa=Doa(Region.where(n, lambda x: x <= 8), Region.from_cells(n, [8]), 8),
                ),
            ),
            action(
                "park",
                success=Region.from_cells(n, [9]),
                controller=park_ctrl,
                doa=Doa(task_done, Region.from_cells(n, [9]), 2),
            ),
        ),
    )
    return BundledModel("patrol", model, ("mb_patrol", "park"), 1.0)


def patrol_substitution(hysteresis: bool = False) -> SubstitutionSpec:
    n = PATROL_CELLS
    return SubstitutionSpec(
        target=1,  # the fallback over (task_done, mb_patrol)
        dd_targets=[x + 1 if x < 9 else x for x in range(n)],
        rr=RrLeaf(
            success=Region.from_cells(n, [4]),
            failure=Region.empty(n),
            controller=SuccessorMap.from_function(n, lambda x: x + 1 if x < 4 else x),
            doa=Doa(Region.where(n, lambda x: x <= 4), Region.from_cells(n, [4]), 4),
        ),
        rok_success=Region.where(n, lambda x: 3 <= x <= 7),
        time_budget=5,
        hysteresis_cap=1,
        hysteresis=hysteresis,
    )


# ----------------------------------------------------------------------
# gridworld: 6x6 funnel chain with one outside-basin strip and one goal.

GRID_SIDE = 6


def gridworld() -> BundledModel:
    side = GRID_SIDE
    n = side * side
    world = World(n, coords=[(float(c % side), float(c // side)) for c in range(n)])

    def xy(c: int) -> tuple[int, int]:
        return c % side, c // side

    def region(pred: Callable[[int, int], bool]) -> Region:
        return Region.where(n, lambda c: pred(*xy(c)))

    def ctrl(rule: Callable[[int, int], tuple[int, int]]) -> SuccessorMap:
        return SuccessorMap.from_function(n, lambda c: rule(*xy(c))[0] + side * rule(*xy(c))[1])

    right = region(lambda x, y: x >= 3)
    top = region(lambda x, y: y >= 3)
    corner = Region.from_cells(n, [5 + side * 5])

    model = BTModel(
        world,
        seq(
            fal(
                condition("right_half", right),
                action(
                    "go_right",
                    success=right,
                    controller=ctrl(lambda x, y: (x + 1, y) if x < 3 else (x, y)),
                    doa=Doa(region(lambda x, y: x >= 1), right, 3),
                ),
            ),
            fal(
                condition("top_half", top),
                action(
                    "go_up",
                    success=top,
                    controller=ctrl(lambda x, y: (x, y + 1) if y < 3 else (x, y)),
                    doa=Doa(right, right & top, 3),
                ),
            ),
            action(
                "dock",
                success=corner,
                controller=ctrl(lambda x, y: (x + 1, y) if x < 5 else ((x, y + 1) if y < 5 else (x, y))),
                doa=Doa(right & top, corner, 5),
            ),
        ),
    )
    return BundledModel("gridworld", model, ("go_right", "go_up", "dock"), 1.0)
