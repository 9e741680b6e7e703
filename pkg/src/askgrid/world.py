"""Deterministic 2-D grid household simulator.

The world is a rectangular grid of cells. Cells are either floor or wall.
Objects occupy cells; some (fixtures) block movement, the rest can share a
cell with the agent. The agent has a position, a cardinal heading and a
camera pitch. All dynamics are synchronous and pure: ``step`` maps an input
state and one action to a fresh output state plus an outcome, never mutating
its argument.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator


class AskgridError(Exception):
    """Base class for contract violations raised by this package."""


class SceneFormatError(AskgridError):
    """Raised when a serialized scene fails schema or integrity checks."""


# ==================== directions, pitch, heights ====================


class Heading(str, Enum):
    NORTH = "north"
    EAST = "east"
    SOUTH = "south"
    WEST = "west"


# y grows downward; north decreases y.
HEADING_VECTORS: dict[Heading, tuple[int, int]] = {
    Heading.NORTH: (0, -1),
    Heading.EAST: (1, 0),
    Heading.SOUTH: (0, 1),
    Heading.WEST: (-1, 0),
}

_HEADING_ORDER = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST]


def rotate_heading(heading: Heading, clockwise: bool) -> Heading:
    i = _HEADING_ORDER.index(heading)
    return _HEADING_ORDER[(i + 1) % 4] if clockwise else _HEADING_ORDER[(i - 1) % 4]


class Pitch(str, Enum):
    DOWN = "down"
    LEVEL = "level"
    UP = "up"


class Height(str, Enum):
    LOW = "low"
    MID = "mid"
    HIGH = "high"


# Pitch required to see an object at a given height. MID is visible at any pitch.
_PITCH_FOR_HEIGHT = {Height.LOW: Pitch.DOWN, Height.HIGH: Pitch.UP}


class Affordance(str, Enum):
    PICKUPABLE = "pickupable"
    RECEPTACLE = "receptacle"
    OPENABLE = "openable"
    TOGGLEABLE = "toggleable"
    SLICEABLE = "sliceable"


class FailureReason(str, Enum):
    BLOCKED = "blocked"
    OUT_OF_REACH = "out_of_reach"
    NOT_VISIBLE = "not_visible"
    PRECONDITION_VIOLATED = "precondition_violated"
    HANDS_FULL = "hands_full"
    HANDS_EMPTY = "hands_empty"


# ==================== object class catalog ====================


@dataclass(frozen=True)
class ClassSpec:
    """Static properties shared by every instance of an object class."""

    name: str
    affordances: frozenset[Affordance]
    height: Height = Height.MID
    blocks: bool = False
    # Preposition used when this class acts as a container ("in" or "on").
    preposition: str = "in"
    # Receptacle classes an instance may start inside at scene generation.
    placements: tuple[str, ...] = ()


def _spec(
    name: str,
    *affordances: Affordance,
    height: Height = Height.MID,
    blocks: bool = False,
    preposition: str = "in",
    placements: tuple[str, ...] = (),
) -> ClassSpec:
    return ClassSpec(name, frozenset(affordances), height, blocks, preposition, placements)


_P = Affordance.PICKUPABLE
_R = Affordance.RECEPTACLE
_O = Affordance.OPENABLE
_T = Affordance.TOGGLEABLE
_S = Affordance.SLICEABLE

_FOOD_PLACEMENTS = ("fridge", "microwave", "countertop", "sinkbasin", "cart", "sidetable", "plate")
_TOOL_PLACEMENTS = ("countertop", "sinkbasin", "cart", "sidetable", "drawer")

CLASS_CATALOG: dict[str, ClassSpec] = {
    spec.name: spec
    for spec in [
        # Blocking fixtures.
        _spec("fridge", _R, _O, blocks=True),
        _spec("microwave", _R, _O, _T, blocks=True),
        _spec("sinkbasin", _R, blocks=True),
        _spec("countertop", _R, blocks=True, preposition="on"),
        _spec("drawer", _R, _O, height=Height.LOW, blocks=True),
        _spec("safe", _R, _O, height=Height.LOW, blocks=True),
        _spec("sidetable", _R, blocks=True, preposition="on"),
        _spec("armchair", _R, blocks=True, preposition="on"),
        _spec("sofa", _R, blocks=True, preposition="on"),
        _spec("cart", _R, blocks=True, preposition="on"),
        # Non-blocking installed items.
        _spec("faucet", _T, placements=("sinkbasin",)),
        _spec("desklamp", _T, height=Height.HIGH, placements=("sidetable", "countertop")),
        _spec("laptop", _P, _O, placements=("sofa", "armchair", "sidetable", "countertop")),
        # Sliceable foods.
        _spec("bread", _P, _S, placements=_FOOD_PLACEMENTS),
        _spec("apple", _P, _S, placements=_FOOD_PLACEMENTS),
        _spec("potato", _P, _S, placements=_FOOD_PLACEMENTS),
        _spec("tomato", _P, _S, placements=_FOOD_PLACEMENTS),
        _spec("lettuce", _P, _S, placements=_FOOD_PLACEMENTS),
        _spec("egg", _P, placements=_FOOD_PLACEMENTS),
        # Tools and tableware.
        _spec("knife", _P, placements=("countertop", "sinkbasin", "cart", "sidetable")),
        _spec("fork", _P, placements=_TOOL_PLACEMENTS),
        _spec("ladle", _P, placements=_TOOL_PLACEMENTS),
        _spec("pot", _P, placements=("countertop", "sinkbasin", "cart")),
        _spec("mug", _P, placements=("countertop", "sidetable", "cart", "fridge", "microwave")),
        _spec("cup", _P, placements=("countertop", "sidetable", "cart", "fridge", "microwave")),
        _spec("plate", _P, _R, preposition="on", placements=("countertop", "sidetable", "cart", "sinkbasin")),
        _spec("keychain", _P, height=Height.LOW, placements=("drawer", "safe", "armchair", "sofa", "sidetable")),
    ]
}

COLORS = ("red", "green", "blue", "yellow", "white", "black", "silver", "brown")
MATERIALS = ("metal", "plastic", "wood", "ceramic", "glass", "fabric")

STATE_FLAGS = ("is_open", "is_on", "is_sliced", "is_clean", "is_hot", "is_cold")


# ==================== actions ====================


NAVIGATION_ACTIONS = ("MoveAhead", "RotateLeft", "RotateRight", "LookUp", "LookDown")
MANIPULATION_ACTIONS = ("Pickup", "Put", "Open", "Close", "ToggleOn", "ToggleOff", "Slice")
PHYSICAL_ACTIONS = NAVIGATION_ACTIONS + MANIPULATION_ACTIONS

# Affordance a manipulation verb requires of its target class.
_VERB_AFFORDANCE = {
    "Pickup": Affordance.PICKUPABLE,
    "Put": Affordance.RECEPTACLE,
    "Open": Affordance.OPENABLE,
    "Close": Affordance.OPENABLE,
    "ToggleOn": Affordance.TOGGLEABLE,
    "ToggleOff": Affordance.TOGGLEABLE,
    "Slice": Affordance.SLICEABLE,
}


@dataclass(frozen=True)
class PhysicalAction:
    """One of the 12 executable actions.

    Navigation actions take no target. Manipulation actions are parameterized
    by an object class name; a ``None`` target on a manipulation action always
    fails with not_visible (nothing to bind to).
    """

    name: str
    target: str | None = None

    def __post_init__(self) -> None:
        if self.name not in PHYSICAL_ACTIONS:
            raise ValueError(f"unknown action name: {self.name!r}")
        if self.name in NAVIGATION_ACTIONS and self.target is not None:
            raise ValueError(f"{self.name} takes no target")

    def encode(self) -> str:
        return self.name if self.target is None else f"{self.name}:{self.target}"

    @staticmethod
    def decode(text: str) -> "PhysicalAction":
        name, _, target = text.partition(":")
        return PhysicalAction(name, target or None)


@dataclass(frozen=True)
class ActionOutcome:
    success: bool
    failure_reason: FailureReason | None = None


# ==================== state ====================


@dataclass
class ObjectInstance:
    """A single object in the scene.

    ``contained_in`` holds the id of the receptacle this object sits in/on,
    or None for objects resting on the floor (or held). A contained object
    always occupies its container's cell.
    """

    object_id: int
    object_class: str
    cell: tuple[int, int]
    color: str
    material: str
    is_open: bool = False
    is_on: bool = False
    is_sliced: bool = False
    is_clean: bool = False
    is_hot: bool = False
    is_cold: bool = False
    contained_in: int | None = None

    @property
    def spec(self) -> ClassSpec:
        return CLASS_CATALOG[self.object_class]

    @property
    def affordances(self) -> frozenset[Affordance]:
        return self.spec.affordances

    @property
    def height(self) -> Height:
        return self.spec.height

    def flags(self) -> dict[str, bool]:
        return {name: getattr(self, name) for name in STATE_FLAGS}

    def to_json(self) -> dict:
        d = {
            "id": self.object_id,
            "class": self.object_class,
            "cell": list(self.cell),
            "color": self.color,
            "material": self.material,
            "contained_in": self.contained_in,
        }
        d.update(self.flags())
        return d

    @staticmethod
    def from_json(d: dict) -> "ObjectInstance":
        if d["class"] not in CLASS_CATALOG:
            raise SceneFormatError(f"unknown object class: {d['class']!r}")
        return ObjectInstance(
            object_id=d["id"],
            object_class=d["class"],
            cell=tuple(d["cell"]),
            color=d["color"],
            material=d["material"],
            contained_in=d["contained_in"],
            **{name: d[name] for name in STATE_FLAGS},
        )


@dataclass(frozen=True)
class AgentPose:
    cell: tuple[int, int]
    heading: Heading
    pitch: Pitch = Pitch.LEVEL

    def to_json(self) -> dict:
        return {"cell": list(self.cell), "heading": self.heading.value, "pitch": self.pitch.value}

    @staticmethod
    def from_json(d: dict) -> "AgentPose":
        return AgentPose(tuple(d["cell"]), Heading(d["heading"]), Pitch(d["pitch"]))


@dataclass
class WorldState:
    """Full simulator state. Value-like: ``step`` never mutates its input."""

    width: int
    height: int
    walls: frozenset[tuple[int, int]]
    objects: dict[int, ObjectInstance]
    agent: AgentPose
    held: int | None = None
    steps_taken: int = 0
    failed_actions: int = 0
    scene_seed: int | None = None

    def clone(self) -> "WorldState":
        return WorldState(
            width=self.width,
            height=self.height,
            walls=self.walls,
            objects={i: copy.copy(o) for i, o in self.objects.items()},
            agent=self.agent,
            held=self.held,
            steps_taken=self.steps_taken,
            failed_actions=self.failed_actions,
            scene_seed=self.scene_seed,
        )

    # ---- geometry helpers ----

    def in_bounds(self, cell: tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_wall(self, cell: tuple[int, int]) -> bool:
        return cell in self.walls

    def blocking_cells(self) -> frozenset[tuple[int, int]]:
        return frozenset(o.cell for o in self.objects.values() if o.spec.blocks)

    def is_free(self, cell: tuple[int, int]) -> bool:
        """True if the agent could stand on this cell."""
        return self.in_bounds(cell) and not self.is_wall(cell) and cell not in self.blocking_cells()

    def faced_cell(self) -> tuple[int, int]:
        dx, dy = HEADING_VECTORS[self.agent.heading]
        x, y = self.agent.cell
        return (x + dx, y + dy)

    # ---- object helpers ----

    def instances_of(self, object_class: str) -> list[ObjectInstance]:
        return [o for o in self.objects.values() if o.object_class == object_class]

    def contents_of(self, receptacle_id: int) -> list[ObjectInstance]:
        return [o for o in self.objects.values() if o.contained_in == receptacle_id]

    def container_chain(self, obj: ObjectInstance) -> list[ObjectInstance]:
        chain = []
        cur = obj
        while cur.contained_in is not None:
            cur = self.objects[cur.contained_in]
            chain.append(cur)
        return chain

    def held_object(self) -> ObjectInstance | None:
        return None if self.held is None else self.objects[self.held]


# ==================== observation ====================


VIEW_DEPTH = 3
VIEW_HALF_WIDTH = 1


@dataclass(frozen=True)
class VisibleObject:
    object_class: str
    color: str
    material: str
    flags: tuple[tuple[str, bool], ...]
    relative_direction: str  # "left" | "front" | "right"
    distance: int
    object_id: int

    def flag(self, name: str) -> bool:
        return dict(self.flags)[name]


@dataclass(frozen=True)
class Observation:
    visible: tuple[VisibleObject, ...]
    pitch: Pitch
    heading: Heading  # compass reading; bearings in answers are egocentric
    held_class: str | None

    def classes(self) -> set[str]:
        return {v.object_class for v in self.visible}


def _right_vector(heading: Heading) -> tuple[int, int]:
    dx, dy = HEADING_VECTORS[heading]
    return (-dy, dx)


def _cone_cells(state: WorldState) -> dict[tuple[int, int], tuple[int, int]]:
    """Map visible cone cell -> (distance, lateral offset), wall occlusion applied.

    Walls block everything behind them within the same lateral column. Blocking
    fixtures do not occlude.
    """
    fx, fy = HEADING_VECTORS[state.agent.heading]
    rx, ry = _right_vector(state.agent.heading)
    ax, ay = state.agent.cell
    out: dict[tuple[int, int], tuple[int, int]] = {}
    for lat in range(-VIEW_HALF_WIDTH, VIEW_HALF_WIDTH + 1):
        for dist in range(1, VIEW_DEPTH + 1):
            cell = (ax + fx * dist + rx * lat, ay + fy * dist + ry * lat)
            if not state.in_bounds(cell) or state.is_wall(cell):
                break  # occludes the rest of this column
            out[cell] = (dist, lat)
    return out


def _pitch_allows(pitch: Pitch, height: Height) -> bool:
    required = _PITCH_FOR_HEIGHT.get(height)
    return required is None or required == pitch


def effective_height(state: WorldState, obj: ObjectInstance) -> Height:
    """Height used for pitch gating: items inside an openable receptacle sit
    at the receptacle's height (contents of a low drawer are low)."""
    for container in state.container_chain(obj):
        if Affordance.OPENABLE in container.affordances and Affordance.RECEPTACLE in container.affordances:
            return container.spec.height
    return obj.height


def required_pitch(height: Height) -> Pitch | None:
    """Pitch needed to see objects at this height, None if any pitch works."""
    return _PITCH_FOR_HEIGHT.get(height)


def _visible_ids(state: WorldState) -> dict[int, tuple[int, int]]:
    """Ids of currently visible objects -> (distance, lateral offset)."""
    cone = _cone_cells(state)
    out: dict[int, tuple[int, int]] = {}
    for obj in state.objects.values():
        if obj.object_id == state.held:
            continue  # in hand, reported separately
        pos = cone.get(obj.cell)
        if pos is None:
            continue
        if not _pitch_allows(state.agent.pitch, effective_height(state, obj)):
            continue
        # Anything inside a closed openable container (at any depth) is hidden.
        if any(Affordance.OPENABLE in c.affordances and not c.is_open for c in state.container_chain(obj)):
            continue
        out[obj.object_id] = pos
    return out


def observe(state: WorldState) -> Observation:
    """Egocentric symbolic view of the forward cone.

    Deterministic: entries are ordered by (distance, lateral offset, id) and
    each visible object appears exactly once.
    """
    vis = _visible_ids(state)
    entries = []
    for object_id, (dist, lat) in sorted(vis.items(), key=lambda kv: (kv[1][0], kv[1][1], kv[0])):
        obj = state.objects[object_id]
        rel = "front" if lat == 0 else ("left" if lat < 0 else "right")
        entries.append(
            VisibleObject(
                object_class=obj.object_class,
                color=obj.color,
                material=obj.material,
                flags=tuple(obj.flags().items()),
                relative_direction=rel,
                distance=dist,
                object_id=object_id,
            )
        )
    held = state.held_object()
    return Observation(
        tuple(entries), state.agent.pitch, state.agent.heading, held.object_class if held else None
    )


# ==================== step ====================


_PITCH_UP_NEXT = {Pitch.DOWN: Pitch.LEVEL, Pitch.LEVEL: Pitch.UP}
_PITCH_DOWN_NEXT = {Pitch.UP: Pitch.LEVEL, Pitch.LEVEL: Pitch.DOWN}


def _resolve_target(state: WorldState, action: PhysicalAction) -> tuple[ObjectInstance | None, FailureReason | None]:
    """Bind a manipulation action to an instance and check reach preconditions.

    Check order pins the failure reason: class presence and visibility first
    (not_visible), then adjacency (out_of_reach). Ties between instances of
    the target class break by Manhattan distance, then lowest id. The held
    object is never a candidate.
    """
    if action.target is None or action.target not in CLASS_CATALOG:
        return None, FailureReason.NOT_VISIBLE
    candidates = [o for o in state.instances_of(action.target) if o.object_id != state.held]
    if not candidates:
        return None, FailureReason.NOT_VISIBLE
    ax, ay = state.agent.cell
    obj = min(candidates, key=lambda o: (abs(o.cell[0] - ax) + abs(o.cell[1] - ay), o.object_id))
    if obj.object_id not in _visible_ids(state):
        return None, FailureReason.NOT_VISIBLE
    if obj.cell != state.faced_cell():
        return None, FailureReason.OUT_OF_REACH
    return obj, None


def _check_manipulation(state: WorldState, action: PhysicalAction) -> tuple[FailureReason | None, ObjectInstance | None]:
    obj, reason = _resolve_target(state, action)
    if reason is not None:
        return reason, None
    assert obj is not None
    name = action.name
    if _VERB_AFFORDANCE[name] not in obj.affordances:
        return FailureReason.PRECONDITION_VIOLATED, None

    if name == "Pickup":
        if state.held is not None:
            return FailureReason.HANDS_FULL, None
        if Affordance.RECEPTACLE in obj.affordances and state.contents_of(obj.object_id):
            return FailureReason.PRECONDITION_VIOLATED, None  # can't lift a loaded receptacle
    elif name == "Put":
        if state.held is None:
            return FailureReason.HANDS_EMPTY, None
        if Affordance.OPENABLE in obj.affordances and not obj.is_open:
            return FailureReason.PRECONDITION_VIOLATED, None
    elif name == "Open":
        if obj.is_open:
            return FailureReason.PRECONDITION_VIOLATED, None
    elif name == "Close":
        if not obj.is_open:
            return FailureReason.PRECONDITION_VIOLATED, None
    elif name == "ToggleOn":
        if obj.is_on:
            return FailureReason.PRECONDITION_VIOLATED, None
    elif name == "ToggleOff":
        if not obj.is_on:
            return FailureReason.PRECONDITION_VIOLATED, None
    elif name == "Slice":
        if state.held is None:
            return FailureReason.HANDS_EMPTY, None
        held = state.held_object()
        assert held is not None
        if held.object_class != "knife":
            return FailureReason.PRECONDITION_VIOLATED, None
        if obj.is_sliced:
            return FailureReason.PRECONDITION_VIOLATED, None
    return None, obj


def _apply_latches_on_toggle(state: WorldState, obj: ObjectInstance) -> None:
    # Latched flags only ever flip false -> true.
    if obj.object_class == "microwave":
        for item in state.contents_of(obj.object_id):
            item.is_hot = True
    elif obj.object_class == "faucet":
        basin = obj.contained_in
        if basin is not None:
            for item in state.contents_of(basin):
                if item.object_id != obj.object_id:
                    item.is_clean = True


def _apply_latches_on_put(state: WorldState, item: ObjectInstance, recep: ObjectInstance) -> None:
    if recep.object_class == "fridge":
        item.is_cold = True
    elif recep.object_class == "microwave" and recep.is_on:
        item.is_hot = True
    elif recep.object_class == "sinkbasin":
        faucets = [o for o in state.contents_of(recep.object_id) if o.object_class == "faucet"]
        if any(f.is_on for f in faucets):
            item.is_clean = True


def step(state: WorldState, action: PhysicalAction) -> tuple[WorldState, ActionOutcome]:
    """Execute one action.

    Returns a fresh state. Failed actions are strict no-ops apart from the
    steps_taken and failed_actions counters.
    """
    s = state.clone()
    s.steps_taken += 1
    reason = _attempt(s, action)
    if reason is not None:
        s = state.clone()
        s.steps_taken += 1
        s.failed_actions += 1
        return s, ActionOutcome(False, reason)
    return s, ActionOutcome(True, None)


def _attempt(s: WorldState, action: PhysicalAction) -> FailureReason | None:
    """Validate and apply the action to ``s`` in place; return failure reason."""
    name = action.name

    if name == "MoveAhead":
        dst = s.faced_cell()
        if not s.is_free(dst):
            return FailureReason.BLOCKED
        s.agent = replace(s.agent, cell=dst)
        held = s.held_object()
        if held is not None:
            held.cell = dst
        return None
    if name == "RotateLeft":
        s.agent = replace(s.agent, heading=rotate_heading(s.agent.heading, clockwise=False))
        return None
    if name == "RotateRight":
        s.agent = replace(s.agent, heading=rotate_heading(s.agent.heading, clockwise=True))
        return None
    if name == "LookUp":
        nxt = _PITCH_UP_NEXT.get(s.agent.pitch)
        if nxt is None:
            return FailureReason.PRECONDITION_VIOLATED
        s.agent = replace(s.agent, pitch=nxt)
        return None
    if name == "LookDown":
        nxt = _PITCH_DOWN_NEXT.get(s.agent.pitch)
        if nxt is None:
            return FailureReason.PRECONDITION_VIOLATED
        s.agent = replace(s.agent, pitch=nxt)
        return None

    reason, obj = _check_manipulation(s, action)
    if reason is not None:
        return reason
    assert obj is not None

    if name == "Pickup":
        obj.contained_in = None
        obj.cell = s.agent.cell
        s.held = obj.object_id
    elif name == "Put":
        held = s.held_object()
        assert held is not None
        held.contained_in = obj.object_id
        held.cell = obj.cell
        s.held = None
        _apply_latches_on_put(s, held, obj)
    elif name == "Open":
        obj.is_open = True
    elif name == "Close":
        obj.is_open = False
    elif name == "ToggleOn":
        obj.is_on = True
        _apply_latches_on_toggle(s, obj)
    elif name == "ToggleOff":
        obj.is_on = False
    elif name == "Slice":
        obj.is_sliced = True
    return None


def bind_verb(state: WorldState, verb: str) -> PhysicalAction:
    """Turn a bare manipulation verb into a class-parameterized action.

    Policies choose among 12 verbs only; the target class is bound to the
    lowest-id visible object at the faced cell whose affordances admit the
    verb. With no candidate the returned action carries no target and will
    fail with not_visible.
    """
    if verb in NAVIGATION_ACTIONS:
        return PhysicalAction(verb)
    needed = _VERB_AFFORDANCE[verb]
    faced = state.faced_cell()
    vis = _visible_ids(state)
    candidates = [
        o
        for o in state.objects.values()
        if o.cell == faced and o.object_id in vis and needed in o.affordances and o.object_id != state.held
    ]
    if not candidates:
        return PhysicalAction(verb, None)
    target = min(candidates, key=lambda o: o.object_id)
    return PhysicalAction(verb, target.object_class)


# ==================== scene serialization ====================


SCENE_SCHEMA = "askgrid.scene/1"


def scene_to_lines(state: WorldState) -> list[str]:
    """Serialize a world state as JSON lines (header line + one per object)."""
    header = {
        "schema": SCENE_SCHEMA,
        "width": state.width,
        "height": state.height,
        "walls": sorted(list(w) for w in state.walls),
        "agent": state.agent.to_json(),
        "held": state.held,
        "steps_taken": state.steps_taken,
        "failed_actions": state.failed_actions,
        "scene_seed": state.scene_seed,
    }
    lines = [json.dumps(header, sort_keys=True)]
    for object_id in sorted(state.objects):
        lines.append(json.dumps(state.objects[object_id].to_json(), sort_keys=True))
    return lines


def scene_from_lines(lines: Iterable[str]) -> WorldState:
    it: Iterator[str] = iter(lines)
    try:
        header = json.loads(next(it))
    except StopIteration:
        raise SceneFormatError("empty scene document") from None
    if header.get("schema") != SCENE_SCHEMA:
        raise SceneFormatError(f"unsupported scene schema: {header.get('schema')!r}")
    objects: dict[int, ObjectInstance] = {}
    for line in it:
        if not line.strip():
            continue
        obj = ObjectInstance.from_json(json.loads(line))
        if obj.object_id in objects:
            raise SceneFormatError(f"duplicate object id {obj.object_id}")
        objects[obj.object_id] = obj
    state = WorldState(
        width=header["width"],
        height=header["height"],
        walls=frozenset(tuple(w) for w in header["walls"]),
        objects=objects,
        agent=AgentPose.from_json(header["agent"]),
        held=header["held"],
        steps_taken=header["steps_taken"],
        failed_actions=header["failed_actions"],
        scene_seed=header.get("scene_seed"),
    )
    _validate_scene(state)
    return state


def _validate_scene(state: WorldState) -> None:
    for obj in state.objects.values():
        if not state.in_bounds(obj.cell):
            raise SceneFormatError(f"object {obj.object_id} out of bounds at {obj.cell}")
        if obj.contained_in is not None:
            container = state.objects.get(obj.contained_in)
            if container is None:
                raise SceneFormatError(f"object {obj.object_id} contained in missing id {obj.contained_in}")
            if Affordance.RECEPTACLE not in container.affordances:
                raise SceneFormatError(f"container {container.object_id} is not a receptacle")
            if container.cell != obj.cell:
                raise SceneFormatError(f"object {obj.object_id} not co-located with its container")
    if state.held is not None and state.held not in state.objects:
        raise SceneFormatError(f"held id {state.held} not in scene")
    if not state.in_bounds(state.agent.cell) or state.is_wall(state.agent.cell):
        raise SceneFormatError("agent standing in a wall or out of bounds")
