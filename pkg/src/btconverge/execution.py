"""Closed-loop simulation and finite-time-success checking.

The discrete-time execution ticks the tree at the current cell, applies the
resolved action's successor map, and repeats.  When the tick resolves a
Condition leaf there is no controller to apply; the simulator halts and
reports it rather than freezing silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .bt import BTModel, NodeKind, Status, tick
from .statespace import Region

HALT_STOP = "stop"
HALT_NO_ACTION = "no-action"
HALT_MAX_STEPS = "max-steps"


class ExecutionError(ValueError):
    pass


@dataclass(frozen=True)
class Trace:
    """One closed-loop run: per step the cell, the resolved leaf, the root status."""

    states: tuple[int, ...]
    leaves: tuple[int, ...]
    statuses: tuple[Status, ...]
    halt: str

    def __len__(self) -> int:
        return len(self.states)

    def to_log(self, model: BTModel) -> str:
        lines = []
        for k, (cell, leaf, status) in enumerate(zip(self.states, self.leaves, self.statuses)):
            name = model.names[leaf] or f"v{leaf}"
            lines.append(f"{k} {cell} {name} {status.value}")
        lines.append(f"# halt: {self.halt}")
        return "\n".join(lines)


def simulate(
    model: BTModel,
    x0: int,
    max_steps: int,
    stop: Optional[Callable[[int, Status], bool]] = None,
) -> Trace:
    """Tick-then-step from x0 until stop holds, a Condition resolves, or max_steps."""
    if not 0 <= x0 < model.world.cell_count:
        raise ExecutionError(f"start cell {x0} outside universe")
    if max_steps <= 0:
        raise ExecutionError("max_steps must be positive")
    states: list[int] = []
    leaves: list[int] = []
    statuses: list[Status] = []
    x = x0
    halt = HALT_MAX_STEPS
    for _ in range(max_steps):
        leaf, status = tick(model, x)
        states.append(x)
        leaves.append(leaf)
        statuses.append(status)
        if stop is not None and stop(x, status):
            halt = HALT_STOP
            break
        if model.kinds[leaf] is not NodeKind.ACTION:
            halt = HALT_NO_ACTION
            break
        x = model.leaves[leaf].controller.next(x)
    return Trace(tuple(states), tuple(leaves), tuple(statuses), halt)


@dataclass(frozen=True)
class FtsVerdict:
    """Outcome of a finite-time-success check.

    kind is one of basin-static, goal-static, basin-invariance,
    goal-invariance, deadline; witness is the offending cell and step the
    first step count involved (None when not applicable).
    """

    ok: bool
    kind: Optional[str] = None
    witness: Optional[int] = None
    step: Optional[int] = None

    def __bool__(self) -> bool:
        return self.ok


def check_fts(model: BTModel, leaf: int) -> FtsVerdict:
    """Verify the basin/goal/deadline contract of one action leaf.

    The leaf's own dynamics are iterated from every basin cell: the basin
    and the goal must each be closed under one step, and every basin cell
    must reach the goal within the leaf's step deadline.  An empty basin is
    vacuously fine.
    """
    data = model.leaves.get(leaf)
    if data is None or model.kinds[leaf] is not NodeKind.ACTION:
        raise ExecutionError(f"vertex {leaf} is not an action leaf")
    if data.doa is None:
        raise ExecutionError(f"leaf {data.name!r} has no attraction basin data")
    basin, goal, horizon = data.doa.basin, data.doa.goal, data.doa.horizon
    if basin.is_empty:
        return FtsVerdict(True)
    universe = model.world.full_region()
    running = universe - data.success - data.failure
    if not basin.issubset(running | data.success):
        bad = (basin - (running | data.success)).any_cell()
        return FtsVerdict(False, "basin-static", bad, None)
    if not goal.issubset(basin & data.success):
        bad = (goal - (basin & data.success)).any_cell()
        return FtsVerdict(False, "goal-static", bad, None)
    nxt = data.controller.next
    for c in basin.cells():
        if nxt(c) not in basin:
            return FtsVerdict(False, "basin-invariance", c, 1)
    for c in goal.cells():
        if nxt(c) not in goal:
            return FtsVerdict(False, "goal-invariance", c, 1)
    cap = max(horizon, model.world.cell_count + 1)
    for c in basin.cells():
        x = c
        hit: Optional[int] = 0 if x in goal else None
        if hit is None:
            for k in range(1, cap + 1):
                x = nxt(x)
                if x in goal:
                    hit = k
                    break
        if hit is None:
            return FtsVerdict(False, "deadline", c, None)
        if hit > horizon:
            return FtsVerdict(False, "deadline", c, hit)
    return FtsVerdict(True)


@dataclass(frozen=True)
class ExitResult:
    """Max first-exit step over all start cells, or the cell that never exits."""

    steps: Optional[int]
    witness: Optional[int] = None

    def __bool__(self) -> bool:
        return self.steps is not None


def empirical_exit_time(model: BTModel, region: Region, max_steps: Optional[int] = None) -> ExitResult:
    """Closed-loop bound on how long the state can remain inside region.

    Simulates the full loop from every region cell and returns the maximum
    first step at which the state leaves.  On a finite deterministic system
    a trajectory that has not left within cell_count steps never will, so
    the default cap makes non-exit a certainty, not a timeout guess.
    """
    if region.n != model.world.cell_count:
        raise ExecutionError("region over a different universe")
    cap = max_steps if max_steps is not None else model.world.cell_count + 1
    worst = 0
    for c in region.cells():
        x = c
        exited: Optional[int] = None
        for k in range(1, cap + 1):
            leaf, _status = tick(model, x)
            if model.kinds[leaf] is not NodeKind.ACTION:
                break  # state frozen: no controller applies here
            x = model.leaves[leaf].controller.next(x)
            if x not in region:
                exited = k
                break
        if exited is None:
            return ExitResult(None, c)
        worst = max(worst, exited)
    return ExitResult(worst)


def hitting_time(model: BTModel, x0: int, goal: Region, max_steps: int) -> Optional[int]:
    """First step at which the closed loop reaches goal from x0, or None."""
    x = x0
    if x in goal:
        return 0
    for k in range(1, max_steps + 1):
        leaf, _status = tick(model, x)
        if model.kinds[leaf] is not NodeKind.ACTION:
            return None
        x = model.leaves[leaf].controller.next(x)
        if x in goal:
            return k
    return None


def closed_loop_targets(model: BTModel) -> list[Optional[int]]:
    """Per-cell next cell under the full loop; None where a Condition resolves."""
    out: list[Optional[int]] = []
    for c in range(model.world.cell_count):
        leaf, _status = tick(model, c)
        if model.kinds[leaf] is NodeKind.ACTION:
            out.append(model.leaves[leaf].controller.next(c))
        else:
            out.append(None)
    return out
