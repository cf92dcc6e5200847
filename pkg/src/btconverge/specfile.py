"""JSON spec documents: the on-disk format the CLI reads and writes.

A document carries a universe block, leaf definitions, a tree, and
optionally an abstraction list, an action/condition library, and a
substitution block.  Regions serialize as sorted cell-index arrays,
dynamics as per-cell target arrays.  Parsing validates every reference and
index and reports the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

from .backchain import ActionConditionLibrary, ActionEntry, ConditionEntry
from .bt import BTModel, Doa, LeafData, NodeKind, NodeSpec
from .statespace import Region, SuccessorMap, World, WorldError
from .substitution import RrLeaf, SubstitutionSpec

FORMAT = "btconverge/1"


class SpecError(ValueError):
    pass


@dataclass
class LoadedSpec:
    document: dict
    world: World
    model: Optional[BTModel]
    abstraction: Optional[list[str]]
    delta: Optional[float]
    library: Optional[ActionConditionLibrary]
    library_root: Optional[str]
    substitution: Optional[SubstitutionSpec]


def load_path(path: str) -> LoadedSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: not valid JSON: {exc}") from exc
    return parse_document(doc)


def parse_document(doc: dict) -> LoadedSpec:
    if not isinstance(doc, dict):
        raise SpecError("document must be a JSON object")
    if doc.get("format") != FORMAT:
        raise SpecError(f"unsupported format {doc.get('format')!r}; expected {FORMAT!r}")
    world = _parse_world(_require(doc, "universe", dict))
    delta = doc.get("delta")
    if delta is not None and not isinstance(delta, (int, float)):
        raise SpecError("delta must be a number")

    leaves = {}
    for entry in doc.get("leaves", []):
        leaf = _parse_leaf(entry, world)
        if leaf.name in leaves:
            raise SpecError(f"duplicate leaf {leaf.name!r}")
        leaves[leaf.name] = leaf

    model = None
    if "tree" in doc:
        spec = _parse_tree(doc["tree"], leaves)
        try:
            model = BTModel(world, spec)
        except ValueError as exc:
            raise SpecError(f"tree: {exc}") from exc

    abstraction = doc.get("abstraction")
    if abstraction is not None:
        if model is None:
            raise SpecError("abstraction block without a tree")
        for name in abstraction:
            if name not in model.leaf_by_name:
                raise SpecError(f"abstraction references unknown leaf {name!r}")

    library = None
    library_root = None
    if "library" in doc:
        library, library_root = _parse_library(doc["library"], world)

    substitution = None
    if "substitution" in doc:
        if model is None:
            raise SpecError("substitution block without a tree")
        substitution = _parse_substitution(doc["substitution"], world, model)

    return LoadedSpec(doc, world, model, abstraction, delta, library, library_root, substitution)


def _require(doc: dict, key: str, typ: type) -> Any:
    if key not in doc:
        raise SpecError(f"missing {key!r} block")
    value = doc[key]
    if not isinstance(value, typ):
        raise SpecError(f"{key!r} must be a {typ.__name__}")
    return value


def _parse_world(block: dict) -> World:
    cells = block.get("cells")
    if not isinstance(cells, int) or cells <= 0:
        raise SpecError("universe.cells must be a positive integer")
    coords = block.get("coords")
    adjacency = block.get("adjacency")
    try:
        if coords is not None:
            return World(cells, coords=coords)
        if adjacency is not None:
            pairs = [(int(p), int(q)) for p, q in adjacency]
            if block.get("adjacency_directed"):
                rows = [0] * cells
                for p, q in pairs:
                    if not (0 <= p < cells and 0 <= q < cells):
                        raise WorldError(f"adjacency pair ({p}, {q}) outside universe")
                    rows[p] |= 1 << q
                return World(cells, adjacency_rows=rows)
            return World(cells, adjacency=pairs)
        return World(cells)
    except WorldError as exc:
        raise SpecError(f"universe: {exc}") from exc


def _parse_region(value: Any, world: World, where: str) -> Region:
    if not isinstance(value, list):
        raise SpecError(f"{where}: expected a list of cell indices")
    try:
        return Region.from_cells(world.cell_count, value)
    except WorldError as exc:
        raise SpecError(f"{where}: {exc}") from exc


def _parse_leaf(entry: dict, world: World) -> LeafData:
    name = entry.get("name")
    if not isinstance(name, str) or not name:
        raise SpecError("leaf without a name")
    kind = entry.get("kind")
    if kind not in ("action", "condition"):
        raise SpecError(f"leaf {name!r}: kind must be action or condition")
    success = _parse_region(entry.get("success", []), world, f"leaf {name!r} success")
    if "failure" in entry:
        failure = _parse_region(entry["failure"], world, f"leaf {name!r} failure")
    elif kind == "condition":
        failure = success.complement()
    else:
        failure = Region.empty(world.cell_count)
    controller = None
    if kind == "action":
        targets = entry.get("next")
        if not isinstance(targets, list) or len(targets) != world.cell_count:
            raise SpecError(f"leaf {name!r}: next must list one target per cell")
        try:
            controller = SuccessorMap(targets)
        except WorldError as exc:
            raise SpecError(f"leaf {name!r} next: {exc}") from exc
    doa = None
    if entry.get("doa") is not None:
        doa = _parse_doa(entry["doa"], world, name)
    try:
        return LeafData(
            name,
            NodeKind.ACTION if kind == "action" else NodeKind.CONDITION,
            success,
            failure,
            controller,
            doa,
        )
    except ValueError as exc:
        raise SpecError(f"leaf {name!r}: {exc}") from exc


def _parse_doa(block: dict, world: World, name: str) -> Doa:
    horizon = block.get("horizon")
    if not isinstance(horizon, int) or horizon <= 0:
        raise SpecError(f"leaf {name!r}: doa.horizon must be a positive integer")
    try:
        return Doa(
            _parse_region(block.get("basin", []), world, f"leaf {name!r} doa.basin"),
            _parse_region(block.get("goal", []), world, f"leaf {name!r} doa.goal"),
            horizon,
        )
    except ValueError as exc:
        raise SpecError(f"leaf {name!r} doa: {exc}") from exc


def _parse_tree(node: Any, leaves: dict[str, LeafData]) -> NodeSpec:
    if not isinstance(node, dict) or len(node) != 1:
        raise SpecError("tree nodes must be objects with one of seq / fal / leaf")
    key, value = next(iter(node.items()))
    if key == "leaf":
        if value not in leaves:
            raise SpecError(f"tree references unknown leaf {value!r}")
        leaf = leaves[value]
        return NodeSpec(leaf.kind, leaf=leaf)
    if key in ("seq", "fal"):
        if not isinstance(value, list) or not value:
            raise SpecError(f"{key} node needs a nonempty child list")
        kind = NodeKind.SEQUENCE if key == "seq" else NodeKind.FALLBACK
        return NodeSpec(kind, tuple(_parse_tree(child, leaves) for child in value))
    raise SpecError(f"unknown tree node type {key!r}")


def _parse_library(block: dict, world: World) -> tuple[ActionConditionLibrary, Optional[str]]:
    actions = {}
    for entry in block.get("actions", []):
        leaf = _parse_leaf({**entry, "kind": "action"}, world)
        pre = entry.get("preconditions", [])
        actions[leaf.name] = ActionEntry(leaf, tuple(pre))
    conditions = {}
    for entry in block.get("conditions", []):
        leaf = _parse_leaf({**entry, "kind": "condition"}, world)
        ach = entry.get("achievers", [])
        conditions[leaf.name] = ConditionEntry(leaf, tuple(ach))
    try:
        lib = ActionConditionLibrary(world, actions, conditions)
    except ValueError as exc:
        raise SpecError(f"library: {exc}") from exc
    root = block.get("root")
    if root is not None and root not in actions:
        raise SpecError(f"library root {root!r} is not an action")
    return lib, root


def _parse_substitution(block: dict, world: World, model: BTModel) -> SubstitutionSpec:
    target = block.get("target")
    if isinstance(target, str):
        if target not in model.leaf_by_name:
            raise SpecError(f"substitution target leaf {target!r} unknown")
        vertex = model.leaf_by_name[target]
        parent = model.tree.parent[vertex]
        if parent is None:
            raise SpecError("substitution target has no enclosing fallback")
        target = parent
    if not isinstance(target, int):
        raise SpecError("substitution.target must be a leaf name or vertex id")
    budget = block.get("time_budget")
    if not isinstance(budget, int) or budget < 0:
        raise SpecError("substitution.time_budget must be a non-negative integer")
    hyst_cap = block.get("hysteresis_cap", 0)
    if not isinstance(hyst_cap, int) or hyst_cap < 0:
        raise SpecError("substitution.hysteresis_cap must be a non-negative integer")
    dd_next = block.get("dd_next")
    if not isinstance(dd_next, list):
        raise SpecError("substitution.dd_next must be a target array")
    rr_block = block.get("rr")
    if not isinstance(rr_block, dict):
        raise SpecError("substitution.rr block missing")
    try:
        rr_ctrl = SuccessorMap(rr_block.get("next", []))
    except WorldError as exc:
        raise SpecError(f"substitution.rr.next: {exc}") from exc
    rr_doa = None
    if rr_block.get("doa") is not None:
        rr_doa = _parse_doa(rr_block["doa"], world, "rr_controller")
    rr = RrLeaf(
        success=_parse_region(rr_block.get("success", []), world, "substitution.rr.success"),
        failure=_parse_region(rr_block.get("failure", []), world, "substitution.rr.failure"),
        controller=rr_ctrl,
        doa=rr_doa,
    )
    dd_success = None
    if block.get("dd_success") is not None:
        dd_success = _parse_region(block["dd_success"], world, "substitution.dd_success")
    dd_failure = None
    if block.get("dd_failure") is not None:
        dd_failure = _parse_region(block["dd_failure"], world, "substitution.dd_failure")
    return SubstitutionSpec(
        target=target,
        dd_targets=dd_next,
        rr=rr,
        rok_success=_parse_region(block.get("risk_ok", []), world, "substitution.risk_ok"),
        time_budget=budget,
        hysteresis_cap=hyst_cap,
        hysteresis=bool(block.get("hysteresis", False)),
        dd_success=dd_success,
        dd_failure=dd_failure,
    )


# ----------------------------------------------------------------------
# serialization


def _region_cells(region: Region) -> list[int]:
    return sorted(region.cells())


def _world_block(world: World) -> dict:
    block: dict[str, Any] = {"cells": world.cell_count}
    if world.coords is not None:
        block["coords"] = [list(p) for p in world.coords]
    elif world.adjacency_rows is not None:
        pairs = []
        symmetric = True
        for p, row in enumerate(world.adjacency_rows):
            bits = row
            while bits:
                low = bits & -bits
                q = low.bit_length() - 1
                bits ^= low
                pairs.append([p, q])
                if not world.adjacency_rows[q] >> p & 1:
                    symmetric = False
        block["adjacency"] = pairs
        if not symmetric:
            block["adjacency_directed"] = True
    return block


def _leaf_entry(leaf: LeafData) -> dict:
    entry: dict[str, Any] = {
        "name": leaf.name,
        "kind": "action" if leaf.kind is NodeKind.ACTION else "condition",
        "success": _region_cells(leaf.success),
        "failure": _region_cells(leaf.failure),
    }
    if leaf.controller is not None:
        entry["next"] = list(leaf.controller.targets)
    if leaf.doa is not None:
        entry["doa"] = {
            "basin": _region_cells(leaf.doa.basin),
            "goal": _region_cells(leaf.doa.goal),
            "horizon": leaf.doa.horizon,
        }
    return entry


def _tree_block(model: BTModel, vertex: int) -> dict:
    kind = model.kinds[vertex]
    if kind in (NodeKind.ACTION, NodeKind.CONDITION):
        return {"leaf": model.names[vertex]}
    key = "seq" if kind is NodeKind.SEQUENCE else "fal"
    return {key: [_tree_block(model, c) for c in model.tree.children[vertex]]}


def build_document(
    model: BTModel,
    abstraction: Optional[list[str]] = None,
    delta: Optional[float] = None,
    substitution: Optional[dict] = None,
) -> dict:
    doc: dict[str, Any] = {
        "format": FORMAT,
        "universe": _world_block(model.world),
        "leaves": [_leaf_entry(model.leaves[v]) for v in sorted(model.leaves)],
        "tree": _tree_block(model, model.tree.root),
    }
    if delta is not None:
        doc["delta"] = delta
    if abstraction is not None:
        doc["abstraction"] = list(abstraction)
    if substitution is not None:
        doc["substitution"] = substitution
    return doc


def substitution_block(spec: SubstitutionSpec, target_name: Optional[str] = None) -> dict:
    block: dict[str, Any] = {
        "target": target_name if target_name is not None else spec.target,
        "time_budget": spec.time_budget,
        "hysteresis_cap": spec.hysteresis_cap,
        "hysteresis": spec.hysteresis,
        "risk_ok": _region_cells(spec.rok_success),
        "dd_next": list(spec.dd_targets),
        "rr": {
            "success": _region_cells(spec.rr.success),
            "failure": _region_cells(spec.rr.failure),
            "next": list(spec.rr.controller.targets),
        },
    }
    if spec.rr.doa is not None:
        block["rr"]["doa"] = {
            "basin": _region_cells(spec.rr.doa.basin),
            "goal": _region_cells(spec.rr.doa.goal),
            "horizon": spec.rr.doa.horizon,
        }
    if spec.dd_success is not None:
        block["dd_success"] = _region_cells(spec.dd_success)
    if spec.dd_failure is not None:
        block["dd_failure"] = _region_cells(spec.dd_failure)
    return block


def library_document(lib: ActionConditionLibrary, root: Optional[str] = None) -> dict:
    actions = []
    for aid in lib.action_ids():
        entry = _leaf_entry(lib.actions[aid].leaf)
        entry.pop("kind")
        entry["preconditions"] = list(lib.actions[aid].preconditions)
        actions.append(entry)
    conditions = []
    for cid in lib.condition_ids():
        entry = _leaf_entry(lib.conditions[cid].leaf)
        entry.pop("kind")
        entry["achievers"] = list(lib.conditions[cid].achievers)
        conditions.append(entry)
    block: dict[str, Any] = {"actions": actions, "conditions": conditions}
    if root is not None:
        block["root"] = root
    return {
        "format": FORMAT,
        "universe": _world_block(lib.world),
        "library": block,
    }


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
