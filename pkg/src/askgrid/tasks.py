"""Procedural scenes, the 25 sub-goal task types, expert plans, dataset folds.

A task instance couples a concrete start state with a goal and a verified
shortest expert plan. Tasks come in 11 single-action types, 9 movement
variants, and 5 composites; each is defined here by a macro (a sequence of
navigation and manipulation primitives over bound object classes), a goal
builder, and start-state adjustments.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from askgrid.world import (
    CLASS_CATALOG,
    COLORS,
    HEADING_VECTORS,
    MATERIALS,
    Affordance,
    AgentPose,
    AskgridError,
    Heading,
    ObjectInstance,
    PhysicalAction,
    Pitch,
    WorldState,
    effective_height,
    required_pitch,
    step,
)

if TYPE_CHECKING:
    from askgrid.dialogue import Instruction


class SceneConfigError(AskgridError):
    """Raised for scene configurations that cannot host the task catalog."""


class SceneGenerationError(AskgridError):
    """Raised when no valid scene emerges within the retry budget."""


class NotInstantiable(AskgridError):
    """Raised when a task type has no witness in the given scene."""


class PlanningFailure(AskgridError):
    """Raised when no expert plan reaches the goal (a generator bug if the
    scene came from generate_scene)."""


class FoldError(AskgridError):
    """Raised for invalid fold configurations or corrupt fold manifests."""


# ==================== task catalog ====================


class TaskType(str, Enum):
    CLEAN = "clean"
    CLOSE = "close"
    COOL = "cool"
    HEAT = "heat"
    MOVE = "move"
    OPEN = "open"
    PICK = "pick"
    PUT = "put"
    SLICE = "slice"
    TURN_ON = "turn_on"
    TURN_OFF = "turn_off"
    MOVE_CLEAN = "move_clean"
    MOVE_CLOSE = "move_close"
    MOVE_COOL = "move_cool"
    MOVE_HEAT = "move_heat"
    MOVE_OPEN = "move_open"
    MOVE_PICK = "move_pick"
    MOVE_PUT = "move_put"
    MOVE_SLICE = "move_slice"
    MOVE_TURN_ON = "move_turn_on"
    OPEN_PICK_CLOSE = "open_pick_close"
    OPEN_PUT_CLOSE = "open_put_close"
    PICK_MOVE = "pick_move"
    PICK_MOVE_PUT = "pick_move_put"
    PICK_MOVE_SLICE = "pick_move_slice"


ALL_TASK_TYPES: tuple[TaskType, ...] = tuple(TaskType)

# Macro steps are (verb, slot). "goto" compiles to navigation; other verbs are
# manipulation primitives. Slots "obj"/"dest"/"recep" come from bindings;
# any other slot name is a fixed class.
_CLEAN_TAIL = [("Put", "sinkbasin"), ("ToggleOn", "faucet"), ("ToggleOff", "faucet"), ("Pickup", "obj")]
_COOL_TAIL = [
    ("Open", "fridge"),
    ("Put", "fridge"),
    ("Close", "fridge"),
    ("Open", "fridge"),
    ("Pickup", "obj"),
    ("Close", "fridge"),
]
_HEAT_TAIL = [
    ("Open", "microwave"),
    ("Put", "microwave"),
    ("Close", "microwave"),
    ("ToggleOn", "microwave"),
    ("ToggleOff", "microwave"),
    ("Open", "microwave"),
    ("Pickup", "obj"),
    ("Close", "microwave"),
]

MACROS: dict[TaskType, list[tuple[str, str]]] = {
    TaskType.CLEAN: list(_CLEAN_TAIL),
    TaskType.CLOSE: [("Close", "recep")],
    TaskType.COOL: list(_COOL_TAIL),
    TaskType.HEAT: list(_HEAT_TAIL),
    TaskType.MOVE: [("goto", "dest")],
    TaskType.OPEN: [("Open", "recep")],
    TaskType.PICK: [("Pickup", "obj")],
    TaskType.PUT: [("Put", "dest")],
    TaskType.SLICE: [("Slice", "obj")],
    TaskType.TURN_ON: [("ToggleOn", "obj")],
    TaskType.TURN_OFF: [("ToggleOff", "obj")],
    TaskType.MOVE_CLEAN: [("goto", "sinkbasin")] + _CLEAN_TAIL,
    TaskType.MOVE_CLOSE: [("goto", "recep"), ("Close", "recep")],
    TaskType.MOVE_COOL: [("goto", "fridge")] + _COOL_TAIL,
    TaskType.MOVE_HEAT: [("goto", "microwave")] + _HEAT_TAIL,
    TaskType.MOVE_OPEN: [("goto", "recep"), ("Open", "recep")],
    TaskType.MOVE_PICK: [("goto", "obj"), ("Pickup", "obj")],
    TaskType.MOVE_PUT: [("goto", "dest"), ("Put", "dest")],
    TaskType.MOVE_SLICE: [("goto", "obj"), ("Slice", "obj")],
    TaskType.MOVE_TURN_ON: [("goto", "obj"), ("ToggleOn", "obj")],
    TaskType.OPEN_PICK_CLOSE: [("Open", "recep"), ("Pickup", "obj"), ("Close", "recep")],
    TaskType.OPEN_PUT_CLOSE: [("Open", "recep"), ("Put", "recep"), ("Close", "recep")],
    TaskType.PICK_MOVE: [("Pickup", "obj"), ("goto", "dest")],
    TaskType.PICK_MOVE_PUT: [("Pickup", "obj"), ("goto", "dest"), ("Put", "dest")],
    TaskType.PICK_MOVE_SLICE: [("Pickup", "knife"), ("goto", "obj"), ("Slice", "obj")],
}

# Types whose start pose already faces the first manipulation target; the
# rest start far away (their macro begins with goto).
FAR_START_TYPES = frozenset(t for t in ALL_TASK_TYPES if MACROS[t][0][0] == "goto")

# Slot whose bound object starts in the agent's hand.
HELD_AT_INIT: dict[TaskType, str] = {
    TaskType.CLEAN: "obj",
    TaskType.MOVE_CLEAN: "obj",
    TaskType.COOL: "obj",
    TaskType.MOVE_COOL: "obj",
    TaskType.HEAT: "obj",
    TaskType.MOVE_HEAT: "obj",
    TaskType.PUT: "obj",
    TaskType.MOVE_PUT: "obj",
    TaskType.OPEN_PUT_CLOSE: "obj",
    TaskType.SLICE: "knife",
    TaskType.MOVE_SLICE: "knife",
}

# Flag forcing at init: (slot, flag, value).
INIT_FLAGS: dict[TaskType, list[tuple[str, str, bool]]] = {
    TaskType.CLEAN: [("faucet", "is_on", False)],
    TaskType.MOVE_CLEAN: [("faucet", "is_on", False)],
    TaskType.CLOSE: [("recep", "is_open", True)],
    TaskType.MOVE_CLOSE: [("recep", "is_open", True)],
    TaskType.COOL: [("fridge", "is_open", False)],
    TaskType.MOVE_COOL: [("fridge", "is_open", False)],
    TaskType.HEAT: [("microwave", "is_open", False), ("microwave", "is_on", False)],
    TaskType.MOVE_HEAT: [("microwave", "is_open", False), ("microwave", "is_on", False)],
    TaskType.OPEN: [("recep", "is_open", False)],
    TaskType.MOVE_OPEN: [("recep", "is_open", False)],
    TaskType.TURN_ON: [("obj", "is_on", False)],
    TaskType.MOVE_TURN_ON: [("obj", "is_on", False)],
    TaskType.TURN_OFF: [("obj", "is_on", True)],
    TaskType.OPEN_PICK_CLOSE: [("recep", "is_open", False)],
    TaskType.OPEN_PUT_CLOSE: [("recep", "is_open", False)],
}

FOODS = ("bread", "apple", "potato", "tomato", "lettuce", "egg")
HEATABLE = FOODS + ("mug", "cup")
COOLABLE = FOODS + ("mug", "cup", "pot", "plate")
CLEANABLE = FOODS + ("mug", "cup", "pot", "plate", "fork", "ladle", "knife")
SLICEABLE = tuple(c for c in CLASS_CATALOG if Affordance.SLICEABLE in CLASS_CATALOG[c].affordances)
OPENABLE_RECEPTACLES = ("fridge", "microwave", "drawer", "safe")
PUT_DESTINATIONS = ("sinkbasin", "countertop", "sidetable", "armchair", "sofa", "cart")
MOVE_DESTINATIONS = tuple(sorted(c for c in CLASS_CATALOG if CLASS_CATALOG[c].blocks))
PICKUP_POOL = (
    "knife",
    "bread",
    "apple",
    "potato",
    "tomato",
    "lettuce",
    "egg",
    "mug",
    "cup",
    "plate",
    "pot",
    "fork",
    "ladle",
    "keychain",
)


# ==================== goals ====================


@dataclass(frozen=True)
class GoalAtom:
    """One conjunct of a goal.

    kinds: "holding" (args: class or None for empty hand), "state"
    (class, flag, value), "in" (object class, receptacle class, direct
    containment), "agent_at" (agent faces a cell holding the class).
    """

    kind: str
    args: tuple

    def to_json(self) -> list:
        return [self.kind, list(self.args)]

    @staticmethod
    def from_json(d: list) -> "GoalAtom":
        return GoalAtom(d[0], tuple(d[1]))


@dataclass(frozen=True)
class GoalSpec:
    atoms: tuple[GoalAtom, ...]

    def to_json(self) -> list:
        return [a.to_json() for a in self.atoms]

    @staticmethod
    def from_json(d: list) -> "GoalSpec":
        return GoalSpec(tuple(GoalAtom.from_json(a) for a in d))


def _atom_holds(state: WorldState, atom: GoalAtom) -> bool:
    if atom.kind == "holding":
        (cls,) = atom.args
        held = state.held_object()
        return held is None if cls is None else (held is not None and held.object_class == cls)
    if atom.kind == "state":
        cls, flag, value = atom.args
        return any(getattr(o, flag) == value for o in state.instances_of(cls))
    if atom.kind == "in":
        obj_cls, recep_cls = atom.args
        for o in state.instances_of(obj_cls):
            if o.contained_in is not None and state.objects[o.contained_in].object_class == recep_cls:
                return True
        return False
    if atom.kind == "agent_at":
        (cls,) = atom.args
        faced = state.faced_cell()
        return any(o.cell == faced for o in state.instances_of(cls))
    raise AskgridError(f"unknown goal atom kind: {atom.kind!r}")


def build_goal(task_type: TaskType, bindings: dict[str, str]) -> GoalSpec:
    b = bindings
    t = TaskType(task_type)
    if t in (TaskType.CLEAN, TaskType.MOVE_CLEAN):
        atoms = [GoalAtom("holding", (b["obj"],)), GoalAtom("state", (b["obj"], "is_clean", True))]
    elif t in (TaskType.CLOSE, TaskType.MOVE_CLOSE):
        atoms = [GoalAtom("state", (b["recep"], "is_open", False))]
    elif t in (TaskType.COOL, TaskType.MOVE_COOL):
        atoms = [GoalAtom("holding", (b["obj"],)), GoalAtom("state", (b["obj"], "is_cold", True))]
    elif t in (TaskType.HEAT, TaskType.MOVE_HEAT):
        atoms = [GoalAtom("holding", (b["obj"],)), GoalAtom("state", (b["obj"], "is_hot", True))]
    elif t is TaskType.MOVE:
        atoms = [GoalAtom("agent_at", (b["dest"],))]
    elif t in (TaskType.OPEN, TaskType.MOVE_OPEN):
        atoms = [GoalAtom("state", (b["recep"], "is_open", True))]
    elif t in (TaskType.PICK, TaskType.MOVE_PICK):
        atoms = [GoalAtom("holding", (b["obj"],))]
    elif t in (TaskType.PUT, TaskType.MOVE_PUT):
        atoms = [GoalAtom("in", (b["obj"], b["dest"])), GoalAtom("holding", (None,))]
    elif t in (TaskType.SLICE, TaskType.MOVE_SLICE, TaskType.PICK_MOVE_SLICE):
        atoms = [GoalAtom("state", (b["obj"], "is_sliced", True))]
    elif t in (TaskType.TURN_ON, TaskType.MOVE_TURN_ON):
        atoms = [GoalAtom("state", (b["obj"], "is_on", True))]
    elif t is TaskType.TURN_OFF:
        atoms = [GoalAtom("state", (b["obj"], "is_on", False))]
    elif t is TaskType.OPEN_PICK_CLOSE:
        atoms = [GoalAtom("holding", (b["obj"],)), GoalAtom("state", (b["recep"], "is_open", False))]
    elif t is TaskType.OPEN_PUT_CLOSE:
        atoms = [
            GoalAtom("in", (b["obj"], b["recep"])),
            GoalAtom("holding", (None,)),
            GoalAtom("state", (b["recep"], "is_open", False)),
        ]
    elif t is TaskType.PICK_MOVE:
        atoms = [GoalAtom("holding", (b["obj"],)), GoalAtom("agent_at", (b["dest"],))]
    elif t is TaskType.PICK_MOVE_PUT:
        atoms = [GoalAtom("in", (b["obj"], b["dest"])), GoalAtom("holding", (None,))]
    else:
        raise AskgridError(f"no goal builder for {task_type}")
    return GoalSpec(tuple(atoms))


@dataclass
class TaskInstance:
    task_type: TaskType
    scene_seed: int
    initial: WorldState
    bindings: dict[str, str]
    goal: GoalSpec
    expert: tuple[PhysicalAction, ...]
    expert_end_pose: AgentPose
    task_seed: int | None = None
    instruction: "Instruction | None" = None

    @property
    def target_objects(self) -> tuple[str, ...]:
        """Bound classes, primary object first, destinations/receptacles after."""
        ordered = []
        for slot in ("obj", "dest", "recep"):
            if slot in self.bindings:
                ordered.append(self.bindings[slot])
        return tuple(ordered)


def goal_satisfied(state: WorldState, task: TaskInstance) -> bool:
    """Pure check of the task's goal conjunction against a state."""
    return all(_atom_holds(state, atom) for atom in task.goal.atoms)


# ==================== navigation planning ====================


_NAV_ORDER = ("MoveAhead", "RotateLeft", "RotateRight")


def _goal_poses(state: WorldState, target_cell: tuple[int, int]) -> list[tuple[tuple[int, int], Heading]]:
    poses = []
    for heading, (dx, dy) in HEADING_VECTORS.items():
        cell = (target_cell[0] - dx, target_cell[1] - dy)
        if state.is_free(cell):
            poses.append((cell, heading))
    return sorted(poses, key=lambda p: (p[0], p[1].value))


def nav_distances(state: WorldState, target_cell: tuple[int, int]) -> dict[tuple[tuple[int, int], Heading], int]:
    """Shortest action counts from every pose to some pose facing target_cell.

    BFS over (cell, heading) on reversed edges; MoveAhead, RotateLeft and
    RotateRight all cost 1.
    """
    goals = _goal_poses(state, target_cell)
    dist: dict[tuple[tuple[int, int], Heading], int] = {p: 0 for p in goals}
    queue = deque(goals)
    while queue:
        pose = queue.popleft()
        cell, heading = pose
        d = dist[pose]
        # Reverse MoveAhead: predecessor stood one cell behind, same heading.
        dx, dy = HEADING_VECTORS[heading]
        back = (cell[0] - dx, cell[1] - dy)
        preds = []
        if state.is_free(back):
            preds.append((back, heading))
        order = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST]
        i = order.index(heading)
        preds.append((cell, order[(i + 1) % 4]))  # RotateLeft predecessor
        preds.append((cell, order[(i - 1) % 4]))  # RotateRight predecessor
        for p in preds:
            if p not in dist:
                dist[p] = d + 1
                queue.append(p)
    return dist


def _advance(pose: tuple[tuple[int, int], Heading], action: str, state: WorldState):
    cell, heading = pose
    order = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST]
    if action == "MoveAhead":
        dx, dy = HEADING_VECTORS[heading]
        nxt = (cell[0] + dx, cell[1] + dy)
        return (nxt, heading) if state.is_free(nxt) else None
    i = order.index(heading)
    if action == "RotateLeft":
        return (cell, order[(i - 1) % 4])
    if action == "RotateRight":
        return (cell, order[(i + 1) % 4])
    raise AskgridError(f"not a navigation action: {action}")


def navigate(state: WorldState, target_cell: tuple[int, int]) -> list[PhysicalAction]:
    """Shortest action sequence until the agent faces target_cell.

    Deterministic tie-breaking: at equal remaining distance the planner
    prefers MoveAhead, then RotateLeft, then RotateRight.
    """
    dist = nav_distances(state, target_cell)
    pose = (state.agent.cell, state.agent.heading)
    if pose not in dist:
        raise PlanningFailure(f"no route to face {target_cell}")
    actions: list[PhysicalAction] = []
    while dist[pose] > 0:
        for name in _NAV_ORDER:
            nxt = _advance(pose, name, state)
            if nxt is not None and dist.get(nxt) == dist[pose] - 1:
                actions.append(PhysicalAction(name))
                pose = nxt
                break
        else:
            raise PlanningFailure("distance field inconsistent")
    return actions


def _pitch_plan(current: Pitch, needed: Pitch | None) -> list[PhysicalAction]:
    if needed is None or current == needed:
        return []
    ladder = [Pitch.DOWN, Pitch.LEVEL, Pitch.UP]
    i, j = ladder.index(current), ladder.index(needed)
    name = "LookUp" if j > i else "LookDown"
    return [PhysicalAction(name)] * abs(j - i)


# ==================== expert planning ====================


def _resolve_slot(slot: str, bindings: dict[str, str]) -> str:
    return bindings.get(slot, slot)


def _bound_instance(state: WorldState, cls: str) -> ObjectInstance:
    candidates = [o for o in state.instances_of(cls) if o.object_id != state.held]
    if not candidates:
        raise PlanningFailure(f"no instance of {cls!r} in scene")
    ax, ay = state.agent.cell
    return min(candidates, key=lambda o: (abs(o.cell[0] - ax) + abs(o.cell[1] - ay), o.object_id))


def plan_expert(initial: WorldState, task_type: TaskType, bindings: dict[str, str]) -> tuple[
    list[PhysicalAction], WorldState
]:
    """Compile the task macro into primitive actions and verify by execution.

    Returns the plan plus the state after running it. Raises PlanningFailure
    if any leg is unreachable or a primitive fails.
    """
    state = initial.clone()
    plan: list[PhysicalAction] = []

    def run(action: PhysicalAction) -> None:
        nonlocal state
        state, outcome = step(state, action)
        if not outcome.success:
            raise PlanningFailure(f"expert primitive failed: {action.encode()} ({outcome.failure_reason})")
        plan.append(action)

    for verb, slot in MACROS[TaskType(task_type)]:
        cls = _resolve_slot(slot, bindings)
        target = _bound_instance(state, cls)
        if verb == "goto":
            for a in navigate(state, target.cell):
                run(a)
            continue
        if state.faced_cell() != target.cell:
            for a in navigate(state, target.cell):
                run(a)
        for a in _pitch_plan(state.agent.pitch, required_pitch(effective_height(state, target))):
            run(a)
        run(PhysicalAction(verb, cls))
    return plan, state


def expert_plan(task: TaskInstance) -> list[PhysicalAction]:
    """Recompute the expert plan for a task instance from scratch."""
    plan, _ = plan_expert(task.initial, task.task_type, task.bindings)
    return plan


# ==================== scene generation ====================


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for procedural scene generation. Ranges are inclusive."""

    width: tuple[int, int] = (9, 9)
    height: tuple[int, int] = (9, 9)
    room_templates: int = 4
    required_fixtures: tuple[str, ...] = ("fridge", "microwave", "sinkbasin", "countertop", "drawer")
    optional_fixtures: tuple[str, ...] = ("safe", "sidetable", "armchair", "sofa", "cart")
    n_optional_fixtures: tuple[int, int] = (2, 4)
    n_pickupables: tuple[int, int] = (6, 9)
    desklamp_prob: float = 0.8
    laptop_prob: float = 0.5
    floor_prob: float = 0.25
    max_attempts: int = 60

    def to_json(self) -> dict:
        return {
            "width": list(self.width),
            "height": list(self.height),
            "room_templates": self.room_templates,
            "required_fixtures": list(self.required_fixtures),
            "optional_fixtures": list(self.optional_fixtures),
            "n_optional_fixtures": list(self.n_optional_fixtures),
            "n_pickupables": list(self.n_pickupables),
            "desklamp_prob": self.desklamp_prob,
            "laptop_prob": self.laptop_prob,
            "floor_prob": self.floor_prob,
            "max_attempts": self.max_attempts,
        }

    @staticmethod
    def from_json(d: dict) -> "SceneConfig":
        return SceneConfig(
            width=tuple(d["width"]),
            height=tuple(d["height"]),
            room_templates=d["room_templates"],
            required_fixtures=tuple(d["required_fixtures"]),
            optional_fixtures=tuple(d["optional_fixtures"]),
            n_optional_fixtures=tuple(d["n_optional_fixtures"]),
            n_pickupables=tuple(d["n_pickupables"]),
            desklamp_prob=d["desklamp_prob"],
            laptop_prob=d["laptop_prob"],
            floor_prob=d["floor_prob"],
            max_attempts=d["max_attempts"],
        )


def validate_scene_config(config: SceneConfig) -> None:
    for lo, hi, label in [
        (*config.width, "width"),
        (*config.height, "height"),
        (*config.n_optional_fixtures, "n_optional_fixtures"),
        (*config.n_pickupables, "n_pickupables"),
    ]:
        if lo > hi or lo < 0:
            raise SceneConfigError(f"bad {label} range: ({lo}, {hi})")
    for cls in config.required_fixtures + config.optional_fixtures:
        if cls not in CLASS_CATALOG:
            raise SceneConfigError(f"unknown fixture class {cls!r}")
        if not CLASS_CATALOG[cls].blocks:
            raise SceneConfigError(f"{cls!r} is not a fixture")
    receptacles = [
        c for c in config.required_fixtures + config.optional_fixtures
        if Affordance.RECEPTACLE in CLASS_CATALOG[c].affordances
    ]
    if not receptacles:
        raise SceneConfigError("config admits no receptacles")
    for needed in ("fridge", "microwave", "sinkbasin"):
        if needed not in config.required_fixtures:
            raise SceneConfigError(f"required fixture {needed!r} missing; task catalog needs it")
    if config.width[0] < 7 or config.height[0] < 7:
        raise SceneConfigError("grid too small to host required fixtures")
    max_fixtures = len(config.required_fixtures) + config.n_optional_fixtures[1]
    interior = (config.width[0] - 2) * (config.height[0] - 2)
    if interior < 2 * max_fixtures + 6:
        raise SceneConfigError("grid too small to host required fixtures")
    if config.room_templates < 1:
        raise SceneConfigError("room_templates must be >= 1")
    for p in (config.desklamp_prob, config.laptop_prob, config.floor_prob):
        if not 0.0 <= p <= 1.0:
            raise SceneConfigError("probabilities must lie in [0, 1]")
    if config.n_pickupables[1] > len(PICKUP_POOL):
        raise SceneConfigError(f"at most {len(PICKUP_POOL)} distinct pickupable classes available")
    if config.n_pickupables[0] < 3:
        raise SceneConfigError("need at least 3 pickupables (knife, a stored item, a loose sliceable)")


def _border_walls(width: int, height: int) -> set[tuple[int, int]]:
    walls = set()
    for x in range(width):
        walls.add((x, 0))
        walls.add((x, height - 1))
    for y in range(height):
        walls.add((0, y))
        walls.add((width - 1, y))
    return walls


def _interior_walls(rng: np.random.Generator, width: int, height: int, template: int) -> set[tuple[int, int]]:
    # Template 0 is an open room; 1 horizontal stub, 2 vertical stub, 3 an L.
    walls: set[tuple[int, int]] = set()
    t = template % 4
    if t == 0:
        return walls
    if t in (1, 3):
        y = int(rng.integers(3, height - 3))
        length = max(2, (width - 2) // 3)
        x0 = int(rng.integers(1, width - 1 - length))
        walls.update((x0 + i, y) for i in range(length))
    if t in (2, 3):
        x = int(rng.integers(3, width - 3))
        length = max(2, (height - 2) // 3)
        y0 = int(rng.integers(1, height - 1 - length))
        walls.update((x, y0 + i) for i in range(length))
    return walls


def _connected_free_cells(state: WorldState) -> bool:
    free = [c for c in ((x, y) for x in range(state.width) for y in range(state.height)) if state.is_free(c)]
    if not free:
        return False
    seen = {free[0]}
    queue = deque([free[0]])
    free_set = set(free)
    while queue:
        x, y = queue.popleft()
        for nxt in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if nxt in free_set and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(free_set)


def _place_pickupable(
    state: WorldState,
    rng: np.random.Generator,
    cls: str,
    next_id: int,
    occupied_receptacles: set[int],
    floor_prob: float,
) -> ObjectInstance | None:
    """Place one pickupable on a compatible empty receptacle or the floor."""
    spots = sorted(
        (
            o
            for o in state.objects.values()
            if o.object_class in CLASS_CATALOG[cls].placements and o.object_id not in occupied_receptacles
        ),
        key=lambda o: o.object_id,
    )
    use_floor = not spots or rng.random() < floor_prob
    obj = ObjectInstance(
        next_id, cls, (0, 0), str(rng.choice(COLORS)), str(rng.choice(MATERIALS))
    )
    if use_floor:
        taken = {o.cell for o in state.objects.values()} | {state.agent.cell}
        floor = sorted(
            c
            for c in ((x, y) for x in range(state.width) for y in range(state.height))
            if state.is_free(c) and c not in taken
        )
        if not floor:
            return None
        obj.cell = floor[int(rng.integers(len(floor)))]
    else:
        spot = spots[int(rng.integers(len(spots)))]
        obj.cell = spot.cell
        obj.contained_in = spot.object_id
        occupied_receptacles.add(spot.object_id)
    state.objects[next_id] = obj
    return obj


def _try_generate(rng: np.random.Generator, config: SceneConfig) -> WorldState | None:
    width = int(rng.integers(config.width[0], config.width[1] + 1))
    height = int(rng.integers(config.height[0], config.height[1] + 1))
    template = int(rng.integers(config.room_templates))
    walls = _border_walls(width, height) | _interior_walls(rng, width, height, template)

    state = WorldState(
        width=width,
        height=height,
        walls=frozenset(walls),
        objects={},
        agent=AgentPose((1, 1), Heading.EAST),
    )

    n_opt = int(rng.integers(config.n_optional_fixtures[0], config.n_optional_fixtures[1] + 1))
    optional = list(config.optional_fixtures)
    rng.shuffle(optional)
    fixtures = list(config.required_fixtures) + optional[:n_opt]

    interior = [
        (x, y)
        for x in range(1, width - 1)
        for y in range(1, height - 1)
        if (x, y) not in walls
    ]
    rng.shuffle(interior)
    next_id = 1
    for cls in fixtures:
        placed = False
        while interior:
            cell = interior.pop()
            neighbors = [(cell[0] + dx, cell[1] + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))]
            if not any(state.is_free(n) for n in neighbors):
                continue
            state.objects[next_id] = ObjectInstance(
                next_id, cls, cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS))
            )
            if not all(any(state.is_free(n2) for n2 in _neighbors(o.cell)) for o in state.objects.values()):
                del state.objects[next_id]
                continue
            next_id += 1
            placed = True
            break
        if not placed:
            return None

    by_class = {o.object_class: o for o in state.objects.values()}

    sink = by_class["sinkbasin"]
    faucet = ObjectInstance(next_id, "faucet", sink.cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS)))
    faucet.contained_in = sink.object_id
    state.objects[next_id] = faucet
    next_id += 1

    occupied: set[int] = set()
    if rng.random() < config.desklamp_prob:
        stand = by_class.get("sidetable") or by_class.get("countertop")
        if stand is not None:
            lamp = ObjectInstance(next_id, "desklamp", stand.cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS)))
            lamp.contained_in = stand.object_id
            state.objects[next_id] = lamp
            next_id += 1
    if rng.random() < config.laptop_prob:
        seats = [by_class[c] for c in ("sofa", "armchair", "sidetable") if c in by_class]
        if seats:
            seat = seats[int(rng.integers(len(seats)))]
            laptop = ObjectInstance(next_id, "laptop", seat.cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS)))
            laptop.contained_in = seat.object_id
            state.objects[next_id] = laptop
            occupied.add(seat.object_id)  # laptop counts against the one-pickupable cap
            next_id += 1

    n_pick = int(rng.integers(config.n_pickupables[0], config.n_pickupables[1] + 1))

    # Knife first, never inside an openable (a knife behind a closed door would
    # make slicing tasks unreachable for the expert macro).
    knife_spots = sorted(
        (o for o in state.objects.values() if o.object_class in CLASS_CATALOG["knife"].placements and o.object_id not in occupied),
        key=lambda o: o.object_id,
    )
    if not knife_spots:
        return None
    spot = knife_spots[int(rng.integers(len(knife_spots)))]
    knife = ObjectInstance(next_id, "knife", spot.cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS)))
    knife.contained_in = spot.object_id
    occupied.add(spot.object_id)
    state.objects[next_id] = knife
    next_id += 1

    # One stored food inside the fridge (or sometimes the microwave) so the
    # open-retrieve-close composite always has a witness.
    foods = list(FOODS)
    rng.shuffle(foods)
    stored_cls = foods.pop()
    container = by_class["microwave"] if rng.random() < 0.3 else by_class["fridge"]
    stored = ObjectInstance(next_id, stored_cls, container.cell, str(rng.choice(COLORS)), str(rng.choice(MATERIALS)))
    stored.contained_in = container.object_id
    occupied.add(container.object_id)
    state.objects[next_id] = stored
    next_id += 1

    remaining_pool = [c for c in PICKUP_POOL if c not in ("knife", stored_cls)]
    rng.shuffle(remaining_pool)
    placed_classes = {"knife", stored_cls}
    # A loose sliceable must exist for the slicing types.
    loose_sliceables = [c for c in remaining_pool if c in SLICEABLE]
    if not loose_sliceables:
        return None
    first_sliceable = loose_sliceables[0]
    order = [first_sliceable] + [c for c in remaining_pool if c != first_sliceable]
    for cls in order:
        if len(placed_classes) >= n_pick:
            break
        # The first sliceable must stay out of openables so slicing tasks
        # always have a visible target.
        exclude = occupied | (_openable_receptacle_ids(state) if cls == first_sliceable else set())
        obj = _place_pickupable(state, rng, cls, next_id, exclude, config.floor_prob)
        if obj is None:
            continue
        placed_classes.add(cls)
        next_id += 1

    if len(placed_classes) < max(3, config.n_pickupables[0]):
        return None

    free = sorted(
        c
        for c in ((x, y) for x in range(width) for y in range(height))
        if state.is_free(c)
    )
    if not free:
        return None
    agent_cell = free[int(rng.integers(len(free)))]
    heading = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST][int(rng.integers(4))]
    state.agent = AgentPose(agent_cell, heading, Pitch.LEVEL)

    if not _connected_free_cells(state):
        return None
    for o in state.objects.values():
        if o.spec.blocks and not any(state.is_free(n) for n in _neighbors(o.cell)):
            return None
    return state


def _neighbors(cell: tuple[int, int]) -> list[tuple[int, int]]:
    x, y = cell
    return [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]


def _openable_receptacle_ids(state: WorldState) -> set[int]:
    return {
        o.object_id
        for o in state.objects.values()
        if Affordance.OPENABLE in o.affordances and Affordance.RECEPTACLE in o.affordances
    }


def generate_scene(seed: int, config: SceneConfig | None = None) -> WorldState:
    """Generate a deterministic scene in which all 25 task types have a witness."""
    config = config or SceneConfig()
    validate_scene_config(config)
    rng = np.random.default_rng(seed)
    for _ in range(config.max_attempts):
        state = _try_generate(rng, config)
        if state is None:
            continue
        if all(eligible_bindings(state, t) for t in ALL_TASK_TYPES):
            state.scene_seed = seed
            return state
    raise SceneGenerationError(f"no valid scene for seed {seed} within {config.max_attempts} attempts")


# ==================== task sampling ====================


def _inside_openable(state: WorldState, obj: ObjectInstance) -> bool:
    return any(Affordance.OPENABLE in c.affordances for c in state.container_chain(obj))


def eligible_bindings(state: WorldState, task_type: TaskType) -> list[dict[str, str]]:
    """All slot bindings that make the task type witnessable in this scene."""
    t = TaskType(task_type)
    present = sorted({o.object_class for o in state.objects.values()})
    has = lambda cls: cls in present

    def classes(pool) -> list[str]:
        return [c for c in sorted(pool) if has(c)]

    pickupables = sorted(
        {o.object_class for o in state.objects.values() if Affordance.PICKUPABLE in o.affordances}
    )
    loose = sorted(
        {
            o.object_class
            for o in state.objects.values()
            if Affordance.PICKUPABLE in o.affordances and not _inside_openable(state, o)
        }
    )
    openables = sorted({o.object_class for o in state.objects.values() if Affordance.OPENABLE in o.affordances})
    toggleables = sorted({o.object_class for o in state.objects.values() if Affordance.TOGGLEABLE in o.affordances})

    if t in (TaskType.CLEAN, TaskType.MOVE_CLEAN):
        if not (has("sinkbasin") and has("faucet")):
            return []
        return [{"obj": c} for c in classes(CLEANABLE) if c in pickupables]
    if t in (TaskType.CLOSE, TaskType.MOVE_CLOSE, TaskType.OPEN, TaskType.MOVE_OPEN):
        return [{"recep": c} for c in openables]
    if t in (TaskType.COOL, TaskType.MOVE_COOL):
        if not has("fridge"):
            return []
        return [{"obj": c} for c in classes(COOLABLE) if c in pickupables]
    if t in (TaskType.HEAT, TaskType.MOVE_HEAT):
        if not has("microwave"):
            return []
        return [{"obj": c} for c in classes(HEATABLE) if c in pickupables]
    if t is TaskType.MOVE:
        return [{"dest": c} for c in classes(MOVE_DESTINATIONS)]
    if t in (TaskType.PICK, TaskType.MOVE_PICK):
        return [{"obj": c} for c in loose]
    if t in (TaskType.PUT, TaskType.MOVE_PUT):
        return [
            {"obj": o, "dest": d}
            for o in pickupables
            for d in classes(PUT_DESTINATIONS)
        ]
    if t in (TaskType.SLICE, TaskType.MOVE_SLICE):
        if not has("knife"):
            return []
        return [
            {"obj": o.object_class}
            for o in sorted(state.objects.values(), key=lambda o: o.object_class)
            if Affordance.SLICEABLE in o.affordances and not o.is_sliced and not _inside_openable(state, o)
        ]
    if t in (TaskType.TURN_ON, TaskType.MOVE_TURN_ON, TaskType.TURN_OFF):
        return [{"obj": c} for c in toggleables]
    if t is TaskType.OPEN_PICK_CLOSE:
        out = []
        for o in sorted(state.objects.values(), key=lambda o: (o.object_class, o.object_id)):
            if Affordance.PICKUPABLE not in o.affordances or o.contained_in is None:
                continue
            container = state.objects[o.contained_in]
            if Affordance.OPENABLE in container.affordances and Affordance.RECEPTACLE in container.affordances:
                out.append({"obj": o.object_class, "recep": container.object_class})
        return out
    if t is TaskType.OPEN_PUT_CLOSE:
        return [
            {"obj": o, "recep": r}
            for o in pickupables
            for r in classes(OPENABLE_RECEPTACLES)
            if o != r
        ]
    if t in (TaskType.PICK_MOVE, TaskType.PICK_MOVE_PUT):
        dests = classes(MOVE_DESTINATIONS if t is TaskType.PICK_MOVE else PUT_DESTINATIONS)
        return [{"obj": o, "dest": d} for o in loose for d in dests if o != d]
    if t is TaskType.PICK_MOVE_SLICE:
        knives = [o for o in state.instances_of("knife") if not _inside_openable(state, o)]
        if not knives:
            return []
        return [
            {"obj": o.object_class}
            for o in sorted(state.objects.values(), key=lambda o: o.object_class)
            if Affordance.SLICEABLE in o.affordances
            and not o.is_sliced
            and not _inside_openable(state, o)
            and o.object_class != "knife"
        ]
    raise AskgridError(f"no binding rule for {task_type}")


def _facing_poses(state: WorldState, target_cell: tuple[int, int]) -> list[AgentPose]:
    return [AgentPose(cell, heading, Pitch.LEVEL) for cell, heading in _goal_poses(state, target_cell)]


MIN_FAR_START_ACTIONS = 4


def _apply_init(state: WorldState, task_type: TaskType, bindings: dict[str, str], rng: np.random.Generator) -> (
    WorldState | None
):
    """Adjust flags, the held object and the start pose. None if no pose fits."""
    s = state.clone()
    s.steps_taken = 0
    s.failed_actions = 0

    for slot, flag, value in INIT_FLAGS.get(TaskType(task_type), []):
        cls = _resolve_slot(slot, bindings)
        for o in s.instances_of(cls):
            setattr(o, flag, value)

    held_slot = HELD_AT_INIT.get(TaskType(task_type))
    if held_slot is not None:
        cls = _resolve_slot(held_slot, bindings)
        instances = sorted(s.instances_of(cls), key=lambda o: o.object_id)
        if not instances:
            return None
        held = instances[0]
        held.contained_in = None
        s.held = held.object_id

    first_verb, first_slot = MACROS[TaskType(task_type)][0]
    target_cls = _resolve_slot(first_slot, bindings)
    instances = [o for o in s.instances_of(target_cls) if o.object_id != s.held]
    if not instances:
        return None
    target = min(instances, key=lambda o: o.object_id)

    if TaskType(task_type) in FAR_START_TYPES:
        dist = nav_distances(s, target.cell)
        poses = sorted(
            ((cell, heading) for (cell, heading), d in dist.items() if d >= MIN_FAR_START_ACTIONS),
            key=lambda p: (p[0], p[1].value),
        )
        if not poses:
            poses = sorted(
                ((cell, heading) for (cell, heading), d in dist.items() if d >= 1),
                key=lambda p: (p[0], p[1].value),
            )
        if not poses:
            return None
        cell, heading = poses[int(rng.integers(len(poses)))]
        s.agent = AgentPose(cell, heading, Pitch.LEVEL)
    else:
        poses = _facing_poses(s, target.cell)
        if not poses:
            return None
        s.agent = poses[int(rng.integers(len(poses)))]

    held_obj = s.held_object()
    if held_obj is not None:
        held_obj.cell = s.agent.cell
    return s


def sample_task(world_state: WorldState, task_type: TaskType, rng: np.random.Generator) -> TaskInstance:
    """Instantiate a task of the given type in the scene.

    Draws a binding and a start pose, builds the goal, plans the expert and
    verifies it by replay (success, zero failed actions, goal not already
    satisfied at start). Raises NotInstantiable when the scene offers no
    witness.
    """
    bindings_list = eligible_bindings(world_state, task_type)
    if not bindings_list:
        raise NotInstantiable(f"{task_type} has no witness in scene {world_state.scene_seed}")
    order = list(rng.permutation(len(bindings_list)))
    for idx in order:
        bindings = bindings_list[int(idx)]
        initial = _apply_init(world_state, task_type, bindings, rng)
        if initial is None:
            continue
        goal = build_goal(task_type, bindings)
        task = TaskInstance(
            task_type=TaskType(task_type),
            scene_seed=world_state.scene_seed if world_state.scene_seed is not None else -1,
            initial=initial,
            bindings=bindings,
            goal=goal,
            expert=(),
            expert_end_pose=initial.agent,
        )
        if goal_satisfied(initial, task):
            continue
        try:
            plan, end_state = plan_expert(initial, task_type, bindings)
        except PlanningFailure:
            continue
        if not goal_satisfied(end_state, task) or end_state.failed_actions != 0:
            raise PlanningFailure(
                f"expert plan for {task_type} did not reach its goal (scene {world_state.scene_seed})"
            )
        task.expert = tuple(plan)
        task.expert_end_pose = end_state.agent
        return task
    raise NotInstantiable(f"no feasible binding for {task_type} in scene {world_state.scene_seed}")


# ==================== dataset folds ====================


@dataclass(frozen=True)
class FoldConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    train_scenes: int = 12
    unseen_scenes: int = 4
    n_train: int = 4000
    n_valid_seen: int = 300
    n_valid_unseen: int = 300
    variant_major_prob: float = 0.5
    master_seed: int = 0

    def to_json(self) -> dict:
        return {
            "scene": self.scene.to_json(),
            "train_scenes": self.train_scenes,
            "unseen_scenes": self.unseen_scenes,
            "n_train": self.n_train,
            "n_valid_seen": self.n_valid_seen,
            "n_valid_unseen": self.n_valid_unseen,
            "variant_major_prob": self.variant_major_prob,
            "master_seed": self.master_seed,
        }

    @staticmethod
    def from_json(d: dict) -> "FoldConfig":
        return FoldConfig(
            scene=SceneConfig.from_json(d["scene"]),
            train_scenes=d["train_scenes"],
            unseen_scenes=d["unseen_scenes"],
            n_train=d["n_train"],
            n_valid_seen=d["n_valid_seen"],
            n_valid_unseen=d["n_valid_unseen"],
            variant_major_prob=d["variant_major_prob"],
            master_seed=d["master_seed"],
        )


def validate_fold_config(config: FoldConfig) -> None:
    validate_scene_config(config.scene)
    if config.train_scenes < 1 or config.unseen_scenes < 1:
        raise FoldError("need at least one train scene and one unseen scene")
    for n, label in [
        (config.n_train, "n_train"),
        (config.n_valid_seen, "n_valid_seen"),
        (config.n_valid_unseen, "n_valid_unseen"),
    ]:
        if n < len(ALL_TASK_TYPES):
            raise FoldError(f"{label} must be >= {len(ALL_TASK_TYPES)} so each fold covers every task type")
    if not 0.0 <= config.variant_major_prob <= 1.0:
        raise FoldError("variant_major_prob must lie in [0, 1]")


@dataclass
class DatasetFolds:
    config: FoldConfig
    train: list[TaskInstance]
    valid_seen: list[TaskInstance]
    valid_unseen: list[TaskInstance]
    train_scene_seeds: list[int]
    unseen_scene_seeds: list[int]

    def fold(self, name: str) -> list[TaskInstance]:
        try:
            return {"train": self.train, "valid_seen": self.valid_seen, "valid_unseen": self.valid_unseen}[name]
        except KeyError:
            raise FoldError(f"unknown fold {name!r}") from None


def _scene_seed_stream(master_seed: int, unseen: bool) -> int:
    return master_seed * 1_000_000 + (500_000 if unseen else 100_000)


def _task_seed_stream(master_seed: int, fold_index: int) -> int:
    return master_seed * 1_000_000 + 10_000_000 * (fold_index + 1)


def _identity_key(task: TaskInstance, variant: str, instruction_tokens: tuple[str, ...]) -> tuple:
    return (
        task.scene_seed,
        task.task_type.value,
        tuple(sorted(task.bindings.items())),
        task.initial.agent.cell,
        task.initial.agent.heading.value,
        variant,
        instruction_tokens,
    )


def _build_fold(
    name: str,
    n: int,
    scenes: dict[int, WorldState],
    scene_seeds: list[int],
    task_seed_base: int,
    fold_rng: np.random.Generator,
    variant_major_prob: float,
) -> list[TaskInstance]:
    from askgrid.dialogue import Variant, generate_instruction  # deferred: dialogue imports tasks

    tasks: list[TaskInstance] = []
    seen_keys: set[tuple] = set()
    first_types = list(fold_rng.permutation(len(ALL_TASK_TYPES)))
    attempts = 0
    budget = max(200, n * 60)
    while len(tasks) < n:
        attempts += 1
        if attempts > budget:
            raise FoldError(f"fold {name!r} could not reach {n} unique tasks within {budget} attempts")
        if len(tasks) < len(ALL_TASK_TYPES):
            ttype = ALL_TASK_TYPES[int(first_types[len(tasks)])]
        else:
            ttype = ALL_TASK_TYPES[int(fold_rng.integers(len(ALL_TASK_TYPES)))]
        scene_seed = scene_seeds[int(fold_rng.integers(len(scene_seeds)))]
        variant = Variant.MAJOR if fold_rng.random() < variant_major_prob else Variant.STEP_BY_STEP
        task_seed = task_seed_base + attempts
        try:
            task = sample_task(scenes[scene_seed], ttype, np.random.default_rng(task_seed))
        except NotInstantiable:
            continue
        task.task_seed = task_seed
        task.instruction = generate_instruction(task, variant, np.random.default_rng(task_seed + 7))
        key = _identity_key(task, variant.value, tuple(task.instruction.tokens))
        if key in seen_keys:
            continue
        seen_keys.add(key)
        tasks.append(task)
    return tasks


def build_folds(config: FoldConfig | None = None) -> DatasetFolds:
    """Generate the train/valid_seen/valid_unseen splits.

    Seen folds share scenes with train; the unseen fold uses scenes from a
    disjoint seed range. Every fold covers all 25 task types and task
    identities never repeat within a fold.
    """
    config = config or FoldConfig()
    validate_fold_config(config)

    train_base = _scene_seed_stream(config.master_seed, unseen=False)
    unseen_base = _scene_seed_stream(config.master_seed, unseen=True)
    train_scene_seeds = [train_base + i for i in range(config.train_scenes)]
    unseen_scene_seeds = [unseen_base + i for i in range(config.unseen_scenes)]

    scenes = {s: generate_scene(s, config.scene) for s in train_scene_seeds + unseen_scene_seeds}

    folds = []
    for i, (name, n, pool) in enumerate(
        [
            ("train", config.n_train, train_scene_seeds),
            ("valid_seen", config.n_valid_seen, train_scene_seeds),
            ("valid_unseen", config.n_valid_unseen, unseen_scene_seeds),
        ]
    ):
        fold_rng = np.random.default_rng(config.master_seed * 1_000 + 97 * (i + 1))
        folds.append(
            _build_fold(name, n, scenes, pool, _task_seed_stream(config.master_seed, i), fold_rng, config.variant_major_prob)
        )

    out = DatasetFolds(config, folds[0], folds[1], folds[2], train_scene_seeds, unseen_scene_seeds)
    for name in ("train", "valid_seen", "valid_unseen"):
        types = {t.task_type for t in out.fold(name)}
        if types != set(ALL_TASK_TYPES):
            raise FoldError(f"fold {name!r} is missing task types: {set(ALL_TASK_TYPES) - types}")
    return out


# ==================== fold manifests ====================


FOLDS_SCHEMA = "askgrid.folds/1"


def folds_to_lines(folds: DatasetFolds) -> list[str]:
    header = {
        "schema": FOLDS_SCHEMA,
        "config": folds.config.to_json(),
        "train_scene_seeds": folds.train_scene_seeds,
        "unseen_scene_seeds": folds.unseen_scene_seeds,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for name in ("train", "valid_seen", "valid_unseen"):
        for task in folds.fold(name):
            assert task.instruction is not None
            lines.append(
                json.dumps(
                    {
                        "fold": name,
                        "scene_seed": task.scene_seed,
                        "task_seed": task.task_seed,
                        "type": task.task_type.value,
                        "bindings": task.bindings,
                        "variant": task.instruction.variant.value,
                        "instruction": task.instruction.tokens,
                        "expert": [a.encode() for a in task.expert],
                    },
                    sort_keys=True,
                )
            )
    return lines


def folds_from_lines(lines: list[str]) -> DatasetFolds:
    """Rebuild folds from a manifest, re-deriving and verifying every task."""
    from askgrid.dialogue import Variant, generate_instruction

    if not lines:
        raise FoldError("empty fold manifest")
    header = json.loads(lines[0])
    if header.get("schema") != FOLDS_SCHEMA:
        raise FoldError(f"unsupported folds schema: {header.get('schema')!r}")
    config = FoldConfig.from_json(header["config"])
    scenes: dict[int, WorldState] = {}
    out = DatasetFolds(config, [], [], [], header["train_scene_seeds"], header["unseen_scene_seeds"])
    for line in lines[1:]:
        if not line.strip():
            continue
        row = json.loads(line)
        seed = row["scene_seed"]
        if seed not in scenes:
            scenes[seed] = generate_scene(seed, config.scene)
        task = sample_task(scenes[seed], TaskType(row["type"]), np.random.default_rng(row["task_seed"]))
        task.task_seed = row["task_seed"]
        task.instruction = generate_instruction(
            task, Variant(row["variant"]), np.random.default_rng(row["task_seed"] + 7)
        )
        if task.bindings != row["bindings"] or [a.encode() for a in task.expert] != row["expert"]:
            raise FoldError(f"manifest row does not replay identically (task_seed {row['task_seed']})")
        if list(task.instruction.tokens) != row["instruction"]:
            raise FoldError(f"instruction drift for task_seed {row['task_seed']}")
        out.fold(row["fold"]).append(task)
    return out
