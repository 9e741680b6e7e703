"""Instructions, questions and the ground-truth oracle.

All surface text is lowercase, pre-tokenized (space-separated, punctuation
as its own token) and rendered from the versioned template file shipped with
the package. The oracle answers from full world state: object locations as
egocentric bearings, appearance as color and material, and direction as the
turn that points the agent toward where the expert plan ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources

import numpy as np

from askgrid.world import (
    CLASS_CATALOG,
    HEADING_VECTORS,
    AskgridError,
    Heading,
    ObjectInstance,
    WorldState,
)
from askgrid.tasks import TaskInstance, TaskType


class TemplateError(AskgridError):
    """Raised when the template file is missing pieces or versioned wrong."""


TEMPLATES_VERSION = 1


@lru_cache(maxsize=1)
def load_templates() -> dict:
    text = resources.files("askgrid").joinpath("templates.json").read_text(encoding="utf-8")
    data = json.loads(text)
    if data.get("version") != TEMPLATES_VERSION:
        raise TemplateError(f"unsupported template version: {data.get('version')!r}")
    for section in ("questions", "answers", "actions", "major"):
        if section not in data:
            raise TemplateError(f"template file lacks section {section!r}")
    return data


def tokenize(text: str) -> tuple[str, ...]:
    return tuple(text.lower().split())


def _fill(template: str, **slots: str) -> tuple[str, ...]:
    return tokenize(template.format(**slots))


# ==================== instructions ====================


class Variant(str, Enum):
    STEP_BY_STEP = "step_by_step"
    MAJOR = "major"


@dataclass(frozen=True)
class Instruction:
    tokens: tuple[str, ...]
    variant: Variant
    nouns: tuple[str, ...]

    def text(self) -> str:
        return " ".join(self.tokens)


def extract_nouns(tokens: tuple[str, ...] | list[str]) -> tuple[str, ...]:
    """Object classes mentioned in the text, in first-appearance order."""
    seen: list[str] = []
    for tok in tokens:
        if tok in CLASS_CATALOG and tok not in seen:
            seen.append(tok)
    return tuple(seen)


_VERB_TEMPLATE_KEY = {
    "goto": "goto",
    "Pickup": "pickup",
    "Put": "put",
    "Open": "open",
    "Close": "close",
    "ToggleOn": "toggleon",
    "ToggleOff": "toggleoff",
    "Slice": "slice",
}

# Major-action template key and the binding slots that fill it.
_MAJOR_KEY: dict[TaskType, tuple[str, str]] = {
    TaskType.CLEAN: ("clean", "obj"),
    TaskType.MOVE_CLEAN: ("clean", "obj"),
    TaskType.CLOSE: ("close", "recep"),
    TaskType.MOVE_CLOSE: ("close", "recep"),
    TaskType.COOL: ("cool", "obj"),
    TaskType.MOVE_COOL: ("cool", "obj"),
    TaskType.HEAT: ("heat", "obj"),
    TaskType.MOVE_HEAT: ("heat", "obj"),
    TaskType.MOVE: ("move", "dest"),
    TaskType.OPEN: ("open", "recep"),
    TaskType.MOVE_OPEN: ("open", "recep"),
    TaskType.PICK: ("pick", "obj"),
    TaskType.MOVE_PICK: ("pick", "obj"),
    TaskType.OPEN_PICK_CLOSE: ("pick", "obj"),
    TaskType.PUT: ("put", "dest"),
    TaskType.MOVE_PUT: ("put", "dest"),
    TaskType.OPEN_PUT_CLOSE: ("put", "recep"),
    TaskType.SLICE: ("slice", "obj"),
    TaskType.MOVE_SLICE: ("slice", "obj"),
    TaskType.TURN_ON: ("turnon", "obj"),
    TaskType.MOVE_TURN_ON: ("turnon", "obj"),
    TaskType.TURN_OFF: ("turnoff", "obj"),
    TaskType.PICK_MOVE: ("take_to", "obj"),
    TaskType.PICK_MOVE_PUT: ("put_on", "obj"),
    TaskType.PICK_MOVE_SLICE: ("slice_with", "obj"),
}

_TWO_SLOT_KEYS = {"take_to", "put_on"}


def _pick_template(bank: list[str], rng: np.random.Generator) -> str:
    return bank[int(rng.integers(len(bank)))]


def generate_instruction(task: TaskInstance, variant: Variant, rng: np.random.Generator) -> Instruction:
    """Render the task as text: one sentence per macro step, or one major
    sentence naming the decisive action."""
    from askgrid.tasks import MACROS, _resolve_slot  # shared macro table

    templates = load_templates()
    variant = Variant(variant)
    tokens: list[str] = []
    if variant is Variant.STEP_BY_STEP:
        for verb, slot in MACROS[task.task_type]:
            cls = _resolve_slot(slot, task.bindings)
            bank = templates["actions"][_VERB_TEMPLATE_KEY[verb]]
            template = _pick_template(bank, rng)
            tokens.extend(_fill(template, obj=cls, prep=CLASS_CATALOG[cls].preposition))
    else:
        key, slot = _MAJOR_KEY[task.task_type]
        bank = templates["major"][key]
        template = _pick_template(bank, rng)
        cls = task.bindings[slot]
        if key in _TWO_SLOT_KEYS:
            dest = task.bindings["dest"]
            tokens.extend(_fill(template, obj=cls, dest=dest, prep=CLASS_CATALOG[dest].preposition))
        else:
            tokens.extend(_fill(template, obj=cls, prep=CLASS_CATALOG[cls].preposition))
    toks = tuple(tokens)
    return Instruction(tokens=toks, variant=variant, nouns=extract_nouns(toks))


# ==================== questions ====================


class QuestionType(str, Enum):
    LOCATION = "location"
    APPEARANCE = "appearance"
    DIRECTION = "direction"


@dataclass(frozen=True)
class Question:
    qtype: QuestionType
    object_class: str | None = None  # None for direction questions

    def __post_init__(self) -> None:
        if self.qtype is QuestionType.DIRECTION:
            if self.object_class is not None:
                raise AskgridError("direction questions take no object")
        elif self.object_class is None:
            raise AskgridError(f"{self.qtype.value} questions need an object")

    def tokens(self) -> tuple[str, ...]:
        templates = load_templates()
        if self.qtype is QuestionType.DIRECTION:
            return tokenize(templates["questions"]["direction"])
        return _fill(templates["questions"][self.qtype.value], obj=self.object_class)

    def encode(self) -> str:
        return self.qtype.value if self.object_class is None else f"{self.qtype.value}:{self.object_class}"

    @staticmethod
    def decode(text: str) -> "Question":
        qtype, _, obj = text.partition(":")
        return Question(QuestionType(qtype), obj or None)


def candidate_questions(instruction: Instruction) -> list[Question]:
    """The 2n+1 askable questions for an instruction with n nouns."""
    out = [Question(QuestionType.LOCATION, n) for n in instruction.nouns]
    out += [Question(QuestionType.APPEARANCE, n) for n in instruction.nouns]
    out.append(Question(QuestionType.DIRECTION))
    return out


# ==================== oracle ====================


@dataclass(frozen=True)
class Answer:
    tokens: tuple[str, ...]
    valid: bool

    def text(self) -> str:
        return " ".join(self.tokens)


def _invalid_answer() -> Answer:
    return Answer(tokenize(load_templates()["answers"]["invalid"]), valid=False)


def _bearing_sector(agent_cell: tuple[int, int], heading: Heading, cell: tuple[int, int]) -> str:
    """45-degree sectors; ties resolve front over left/right over behind."""
    dx = cell[0] - agent_cell[0]
    dy = cell[1] - agent_cell[1]
    fx, fy = HEADING_VECTORS[heading]
    f = dx * fx + dy * fy
    r = dx * -fy + dy * fx  # right-hand vector is forward rotated clockwise
    if f >= abs(r):
        return "front"
    if -r >= abs(f):
        return "left"
    if r >= abs(f):
        return "right"
    return "behind"


def _oracle_instance(state: WorldState, object_class: str) -> ObjectInstance:
    instances = state.instances_of(object_class)
    ax, ay = state.agent.cell
    return min(instances, key=lambda o: (abs(o.cell[0] - ax) + abs(o.cell[1] - ay), o.object_id))


def _question_is_valid(question: Question, state: WorldState, task: TaskInstance) -> bool:
    if question.qtype is QuestionType.DIRECTION:
        return True
    cls = question.object_class
    if cls is None or not state.instances_of(cls):
        return False
    nouns = task.instruction.nouns if task.instruction is not None else ()
    return cls in nouns or cls in task.target_objects


_TURN_BY_OFFSET = {1: "right", 2: "around", 3: "left"}


def oracle_answer(question: Question, state: WorldState, task: TaskInstance) -> Answer:
    """Ground-truth answer from full state.

    Location: egocentric bearing plus the container, if any. Appearance:
    color and material. Direction: the turn aligning the agent with the
    expert plan's end pose ("you don't need to move" when already on course).
    Questions about absent or irrelevant classes get an invalid answer.
    """
    templates = load_templates()["answers"]
    if not _question_is_valid(question, state, task):
        return _invalid_answer()

    if question.qtype is QuestionType.DIRECTION:
        end = task.expert_end_pose
        if end.cell == state.agent.cell:
            order = [Heading.NORTH, Heading.EAST, Heading.SOUTH, Heading.WEST]
            offset = (order.index(end.heading) - order.index(state.agent.heading)) % 4
            if offset == 0:
                return Answer(tokenize(templates["direction_stay"]), valid=True)
            return Answer(_fill(templates["direction_turn"], dir=_TURN_BY_OFFSET[offset]), valid=True)
        sector = _bearing_sector(state.agent.cell, state.agent.heading, end.cell)
        if sector == "front":
            return Answer(tokenize(templates["direction_stay"]), valid=True)
        turn = {"left": "left", "right": "right", "behind": "around"}[sector]
        return Answer(_fill(templates["direction_turn"], dir=turn), valid=True)

    assert question.object_class is not None
    obj = _oracle_instance(state, question.object_class)

    if question.qtype is QuestionType.APPEARANCE:
        return Answer(
            _fill(templates["appearance"], obj=obj.object_class, color=obj.color, material=obj.material),
            valid=True,
        )

    # Location.
    if obj.object_id == state.held:
        return Answer(_fill(templates["location_held"], obj=obj.object_class), valid=True)
    sector = _bearing_sector(state.agent.cell, state.agent.heading, obj.cell)
    direction = {"front": "front", "left": "left", "right": "right", "behind": "behind"}[sector]
    if obj.contained_in is not None:
        container = state.objects[obj.contained_in]
        return Answer(
            _fill(
                templates["location_contained"],
                obj=obj.object_class,
                dir=direction,
                prep=container.spec.preposition,
                container=container.object_class,
            ),
            valid=True,
        )
    return Answer(_fill(templates["location_plain"], obj=obj.object_class, dir=direction), valid=True)


# ==================== perturbation ====================


@dataclass(frozen=True)
class PerturbationConfig:
    """Per-type probability of the oracle failing to answer."""

    drop_probability: tuple[tuple[QuestionType, float], ...] = ()

    def __post_init__(self) -> None:
        for qtype, p in self.drop_probability:
            QuestionType(qtype)
            if not 0.0 <= p <= 1.0:
                raise AskgridError(f"drop probability for {qtype} out of range: {p}")

    def probability(self, qtype: QuestionType) -> float:
        for q, p in self.drop_probability:
            if q is qtype or q == qtype:
                return p
        return 0.0

    @staticmethod
    def single(qtype: QuestionType, p: float) -> "PerturbationConfig":
        return PerturbationConfig(((QuestionType(qtype), p),))

    def to_json(self) -> dict:
        return {q.value: p for q, p in self.drop_probability}

    @staticmethod
    def from_json(d: dict) -> "PerturbationConfig":
        return PerturbationConfig(tuple((QuestionType(k), v) for k, v in sorted(d.items())))


def perturbed_oracle_answer(
    question: Question,
    state: WorldState,
    task: TaskInstance,
    config: PerturbationConfig,
    rng: np.random.Generator,
) -> Answer:
    """Oracle with simulated answer failures.

    With probability drop_probability[qtype] the answer is replaced by the
    invalid marker regardless of content; otherwise it matches oracle_answer
    exactly. Draws exactly one random number per call.
    """
    p = config.probability(question.qtype)
    if rng.random() < p:
        return _invalid_answer()
    return oracle_answer(question, state, task)
