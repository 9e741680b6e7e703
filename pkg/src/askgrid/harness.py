"""Running episodes end to end: ask policies, execution loop, and metrics.

An episode pairs a frozen instruction-following performer with an optional
question policy. Timing decides *when* a question turn is granted (never, at
the start, every K steps, or whenever the performer's action distribution
looks confused); the chooser decides *what* to ask at a granted turn. Answers
come from the ground-truth oracle, optionally perturbed, and are appended to
the performer's context before it commits to an action.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from askgrid.agent.encoding import ACTION_NAMES, START_ID, STOP_ID, ContextEncoding, Vocab
from askgrid.agent.performer import PerformerModel, performer_step
from askgrid.agent.questioner import (
    CONFUSION_EPS,
    NO_QUESTION_SLOT,
    QState,
    QuestionerModel,
    build_qstate,
    is_confused,
    question_to_slot,
    select_question,
    slot_to_question,
)
from askgrid.dialogue import (
    Answer,
    PerturbationConfig,
    Question,
    QuestionType,
    candidate_questions,
    oracle_answer,
    perturbed_oracle_answer,
)
from askgrid.tasks import TaskInstance, goal_satisfied
from askgrid.world import AskgridError, PhysicalAction, bind_verb, observe, step

STEP_LIMIT = 1000
FAILURE_CAP = 10

# ==================== ask policies ====================


@dataclass(frozen=True)
class TimingSpec:
    """When question turns are granted during an episode."""

    mode: str  # "never" | "begin" | "fixed" | "confusion"
    interval: int = 0
    eps: float = CONFUSION_EPS

    def __post_init__(self) -> None:
        if self.mode not in ("never", "begin", "fixed", "confusion"):
            raise AskgridError(f"unknown timing mode: {self.mode!r}")
        if self.mode == "fixed" and self.interval < 1:
            raise AskgridError("fixed timing needs interval >= 1")

    def grants_turn(self, step_index: int, dist) -> bool:
        if self.mode == "never":
            return False
        if self.mode == "begin":
            return step_index == 0
        if self.mode == "fixed":
            return step_index % self.interval == 0
        return is_confused([dist], self.eps)

    def label(self) -> str:
        return f"fixed{self.interval}" if self.mode == "fixed" else self.mode


class RandomChooser:
    """Uniform over {location, appearance, direction, nothing}; noun uniform."""

    def choose(self, state: QState, rng: np.random.Generator) -> tuple[int, Question | None]:
        roll = rng.integers(4)
        if roll == 3:
            return NO_QUESTION_SLOT, None
        if roll == 2:
            question = Question(QuestionType.DIRECTION)
        else:
            noun = state.nouns[int(rng.integers(len(state.nouns)))]
            qtype = QuestionType.LOCATION if roll == 0 else QuestionType.APPEARANCE
            question = Question(qtype, noun)
        return question_to_slot(question, state.nouns), question


class TrainedChooser:
    """Wraps a questioner model; samples by default, argmax on request."""

    def __init__(self, model: QuestionerModel, mode: str = "sample"):
        self.model = model
        self.mode = mode

    def choose(self, state: QState, rng: np.random.Generator) -> tuple[int, Question | None]:
        dist = self.model.distribution(state)
        return select_question(dist, mode=self.mode, rng=rng)


# ==================== episode records ====================

EPISODES_SCHEMA = "askgrid.episodes/1"


def observation_digest(obs) -> str:
    """Short stable fingerprint of an observation, for replay checking."""
    payload = [
        obs.pitch.value,
        obs.heading.value,
        obs.held_class,
        [
            [v.object_class, v.color, v.material, list(map(list, v.flags)), v.relative_direction, v.distance]
            for v in obs.visible
        ],
    ]
    return hashlib.sha256(json.dumps(payload).encode()).hexdigest()[:12]


@dataclass
class StepEntry:
    """One attempted physical action: what was seen, tried, and whether it worked."""

    action: str  # encoded PhysicalAction, target class included
    ok: bool
    obs: str  # observation digest at decision time

    def to_json(self) -> list:
        return [self.action, self.ok, self.obs]

    @staticmethod
    def from_json(data: list) -> "StepEntry":
        return StepEntry(action=data[0], ok=bool(data[1]), obs=data[2])


@dataclass
class QATurn:
    """One granted question turn (the chosen slot may be ask-nothing)."""

    step_index: int
    slot: int
    question: str | None  # encoded question, None when nothing was asked
    answer: str | None  # delivered answer surface text
    oracle_valid: bool | None  # genuine answerability, pre-perturbation

    def to_json(self) -> dict:
        return {
            "step_index": self.step_index,
            "slot": self.slot,
            "question": self.question,
            "answer": self.answer,
            "oracle_valid": self.oracle_valid,
        }

    @staticmethod
    def from_json(data: dict) -> "QATurn":
        return QATurn(
            step_index=data["step_index"],
            slot=data["slot"],
            question=data["question"],
            answer=data["answer"],
            oracle_valid=data["oracle_valid"],
        )

    @property
    def asked(self) -> bool:
        return self.question is not None

    def qtype(self) -> str | None:
        return None if self.question is None else Question.decode(self.question).qtype.value


@dataclass
class EpisodeRecord:
    task_type: str
    scene_seed: int
    task_seed: int | None
    success: bool
    n_steps: int  # physical actions attempted (Stop excluded)
    n_failed: int
    n_questions: int
    n_invalid: int  # asked questions the oracle genuinely could not answer
    expert_len: int
    end_reason: str  # "goal" | "stop" | "step_limit" | "failure_cap"
    turns: list[QATurn] = field(default_factory=list)
    steps: list[StepEntry] = field(default_factory=list)
    # RL-only payload, populated when collect_qstates is set; never serialized.
    qstates: list[QState] | None = None

    def path_weighted_success(self) -> float:
        if not self.success:
            return 0.0
        return self.expert_len / max(self.expert_len, self.n_steps)

    def to_json(self) -> dict:
        return {
            "task_type": self.task_type,
            "scene_seed": self.scene_seed,
            "task_seed": self.task_seed,
            "success": self.success,
            "n_steps": self.n_steps,
            "n_failed": self.n_failed,
            "n_questions": self.n_questions,
            "n_invalid": self.n_invalid,
            "expert_len": self.expert_len,
            "end_reason": self.end_reason,
            "turns": [t.to_json() for t in self.turns],
            "steps": [s.to_json() for s in self.steps],
        }

    @staticmethod
    def from_json(data: dict) -> "EpisodeRecord":
        return EpisodeRecord(
            task_type=data["task_type"],
            scene_seed=data["scene_seed"],
            task_seed=data["task_seed"],
            success=data["success"],
            n_steps=data["n_steps"],
            n_failed=data["n_failed"],
            n_questions=data["n_questions"],
            n_invalid=data["n_invalid"],
            expert_len=data["expert_len"],
            end_reason=data["end_reason"],
            turns=[QATurn.from_json(t) for t in data["turns"]],
            steps=[StepEntry.from_json(s) for s in data.get("steps", [])],
        )


def records_to_lines(records: list[EpisodeRecord]) -> list[str]:
    header = json.dumps({"schema": EPISODES_SCHEMA, "count": len(records)}, sort_keys=True)
    return [header] + [json.dumps(r.to_json(), sort_keys=True) for r in records]


def records_from_lines(lines) -> list[EpisodeRecord]:
    rows = [json.loads(line) for line in lines if line.strip()]
    if not rows or rows[0].get("schema") != EPISODES_SCHEMA:
        raise AskgridError(f"expected episode log schema {EPISODES_SCHEMA!r}")
    records = [EpisodeRecord.from_json(r) for r in rows[1:]]
    if len(records) != rows[0]["count"]:
        raise AskgridError("episode log count mismatch")
    return records


# ==================== episode execution ====================


def _deliver_answer(
    question: Question,
    state,
    task: TaskInstance,
    perturb: PerturbationConfig | None,
    rng: np.random.Generator,
) -> tuple[Answer, bool]:
    """Returns (delivered answer, genuine validity)."""
    genuine = oracle_answer(question, state, task)
    if perturb is None:
        return genuine, genuine.valid
    return perturbed_oracle_answer(question, state, task, perturb, rng), genuine.valid


def run_episode(
    task: TaskInstance,
    performer: PerformerModel,
    vocab: Vocab,
    timing: TimingSpec,
    chooser=None,
    *,
    preseed_all: bool = False,
    perturb: PerturbationConfig | None = None,
    rng: np.random.Generator | None = None,
    collect_qstates: bool = False,
    step_limit: int = STEP_LIMIT,
    failure_cap: int = FAILURE_CAP,
) -> EpisodeRecord:
    """Executes one episode; the performer always acts greedily."""
    if task.instruction is None:
        raise AskgridError("task carries no instruction")
    if timing.mode != "never" and not preseed_all and chooser is None:
        raise AskgridError(f"timing {timing.mode!r} needs a chooser")
    if rng is None:
        rng = np.random.default_rng(0)
    instruction = task.instruction

    state = task.initial.clone()
    ctx = ContextEncoding(vocab)
    ctx.add_text(instruction.tokens, available_from=0)

    turns: list[QATurn] = []
    qstates: list[QState] | None = [] if collect_qstates else None
    n_questions = n_invalid = 0

    if preseed_all:
        for question in candidate_questions(instruction):
            answer, valid = _deliver_answer(question, state, task, perturb, rng)
            ctx.add_text(question.tokens(), available_from=0)
            ctx.add_text(answer.tokens, available_from=0)
            n_questions += 1
            n_invalid += 0 if valid else 1
            turns.append(
                QATurn(0, question_to_slot(question, instruction.nouns), question.encode(), answer.text(), valid)
            )

    prev = START_ID
    step_index = 0
    n_failed = 0
    end_reason = "step_limit"
    steps: list[StepEntry] = []
    while step_index < step_limit:
        obs = observe(state)
        ctx.add_step(obs, prev)
        dist = performer_step(performer, ctx)

        if chooser is not None and timing.grants_turn(step_index, dist):
            qstate = build_qstate(vocab, instruction, obs, step_index, step_limit, n_questions)
            slot, question = chooser.choose(qstate, rng)
            if qstates is not None:
                qstates.append(qstate)
            if question is None:
                turns.append(QATurn(step_index, slot, None, None, None))
            else:
                answer, valid = _deliver_answer(question, state, task, perturb, rng)
                ctx.add_text(question.tokens(), available_from=step_index)
                ctx.add_text(answer.tokens, available_from=step_index)
                n_questions += 1
                n_invalid += 0 if valid else 1
                turns.append(QATurn(step_index, slot, question.encode(), answer.text(), valid))
                dist = performer_step(performer, ctx)  # re-decide with the new text

        action_id = dist.argmax()
        if action_id == STOP_ID:
            end_reason = "stop"
            break
        action = bind_verb(state, ACTION_NAMES[action_id])
        state, outcome = step(state, action)
        steps.append(StepEntry(action.encode(), outcome.success, observation_digest(obs)))
        step_index += 1
        prev = action_id
        if not outcome.success:
            n_failed += 1
        if goal_satisfied(state, task):
            end_reason = "goal"
            break
        if n_failed >= failure_cap:
            end_reason = "failure_cap"
            break

    return EpisodeRecord(
        task_type=task.task_type.value,
        scene_seed=task.scene_seed,
        task_seed=task.task_seed,
        success=goal_satisfied(state, task),
        n_steps=step_index,
        n_failed=n_failed,
        n_questions=n_questions,
        n_invalid=n_invalid,
        expert_len=len(task.expert),
        end_reason=end_reason,
        turns=turns,
        steps=steps,
        qstates=qstates,
    )


def replay_episode(task: TaskInstance, record: EpisodeRecord) -> None:
    """Re-executes a record's actions from the task's initial state.

    Raises on any divergence: observation digests, per-action outcomes, the
    step count, or the final success flag. A clean return certifies the log
    as a faithful transcript of the simulator.
    """
    if record.n_steps != len(record.steps):
        raise AskgridError("record step count disagrees with its step entries")
    state = task.initial.clone()
    for i, entry in enumerate(record.steps):
        digest = observation_digest(observe(state))
        if digest != entry.obs:
            raise AskgridError(f"step {i}: observation digest mismatch ({digest} != {entry.obs})")
        state, outcome = step(state, PhysicalAction.decode(entry.action))
        if outcome.success != entry.ok:
            raise AskgridError(f"step {i}: outcome mismatch for {entry.action}")
    if goal_satisfied(state, task) != record.success:
        raise AskgridError("final goal state disagrees with the recorded success flag")


# ==================== baselines ====================

BASELINES = ("instruction_only", "all_qas", "random_qa", "random_mc", "rl_begin", "rl_anytime")


@dataclass(frozen=True)
class BaselineSpec:
    name: str
    timing: TimingSpec
    chooser_kind: str  # "none" | "random" | "trained"
    preseed_all: bool = False


def baseline_spec(name: str) -> BaselineSpec:
    specs = {
        "instruction_only": BaselineSpec(name, TimingSpec("never"), "none"),
        "all_qas": BaselineSpec(name, TimingSpec("never"), "none", preseed_all=True),
        "random_qa": BaselineSpec(name, TimingSpec("begin"), "random"),
        "random_mc": BaselineSpec(name, TimingSpec("confusion"), "random"),
        "rl_begin": BaselineSpec(name, TimingSpec("begin"), "trained"),
        "rl_anytime": BaselineSpec(name, TimingSpec("confusion"), "trained"),
    }
    try:
        return specs[name]
    except KeyError:
        raise AskgridError(f"unknown baseline {name!r}; expected one of {BASELINES}") from None


def _make_chooser(spec: BaselineSpec, questioner: QuestionerModel | None):
    if spec.chooser_kind == "none":
        return None
    if spec.chooser_kind == "random":
        return RandomChooser()
    if questioner is None:
        raise AskgridError(f"baseline {spec.name!r} needs a trained questioner")
    return TrainedChooser(questioner, mode="sample")


# ==================== metrics ====================


@dataclass(frozen=True)
class Metrics:
    n_episodes: int
    success_rate: float
    path_weighted_sr: float
    mean_questions: float
    mean_steps: float
    mean_invalid: float
    qtype_mix: tuple[float, float, float]  # location, appearance, direction shares

    def to_json(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "success_rate": self.success_rate,
            "path_weighted_sr": self.path_weighted_sr,
            "mean_questions": self.mean_questions,
            "mean_steps": self.mean_steps,
            "mean_invalid": self.mean_invalid,
            "qtype_mix": list(self.qtype_mix),
        }


def compute_metrics(records: list[EpisodeRecord]) -> Metrics:
    if not records:
        raise AskgridError("no episodes to aggregate")
    n = len(records)
    asked = [Question.decode(t.question).qtype for r in records for t in r.turns if t.question]
    total_asked = len(asked)
    mix = tuple(
        (sum(1 for q in asked if q is qt) / total_asked) if total_asked else 0.0
        for qt in (QuestionType.LOCATION, QuestionType.APPEARANCE, QuestionType.DIRECTION)
    )
    return Metrics(
        n_episodes=n,
        success_rate=sum(r.success for r in records) / n,
        path_weighted_sr=sum(r.path_weighted_success() for r in records) / n,
        mean_questions=sum(r.n_questions for r in records) / n,
        mean_steps=sum(r.n_steps for r in records) / n,
        mean_invalid=sum(r.n_invalid for r in records) / n,
        qtype_mix=mix,
    )


# ==================== evaluation ====================


def episode_rng(seed: int, task: TaskInstance, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index, task.task_seed or 0, task.scene_seed])


# Worker-pool plumbing: each forked worker gets the evaluation context once via
# the initializer, then maps (index, task) pairs. Episodes are index-seeded, so
# results are identical whatever the pool width or scheduling order.
_POOL_CTX: dict = {}


def _pool_init(ctx: dict) -> None:
    _POOL_CTX.update(ctx)


def _pool_episode(item: tuple[int, TaskInstance]) -> EpisodeRecord:
    i, task = item
    c = _POOL_CTX
    return run_episode(
        task,
        c["performer"],
        c["vocab"],
        c["timing"],
        c["chooser"],
        preseed_all=c["preseed_all"],
        perturb=c["perturb"],
        rng=episode_rng(c["seed"], task, i),
        step_limit=c["step_limit"],
        failure_cap=c["failure_cap"],
    )


def evaluate_policy(
    performer: PerformerModel,
    tasks: list[TaskInstance],
    vocab: Vocab,
    timing: TimingSpec,
    chooser=None,
    *,
    preseed_all: bool = False,
    seed: int = 0,
    perturb: PerturbationConfig | None = None,
    step_limit: int = STEP_LIMIT,
    failure_cap: int = FAILURE_CAP,
    workers: int = 1,
) -> tuple[Metrics, list[EpisodeRecord]]:
    """Runs every task once under an explicit timing/chooser pair."""
    ctx = {
        "performer": performer,
        "vocab": vocab,
        "timing": timing,
        "chooser": chooser,
        "preseed_all": preseed_all,
        "perturb": perturb,
        "seed": seed,
        "step_limit": step_limit,
        "failure_cap": failure_cap,
    }
    items = list(enumerate(tasks))
    if workers > 1:
        with multiprocessing.Pool(workers, initializer=_pool_init, initargs=(ctx,)) as pool:
            records = pool.map(_pool_episode, items)
    else:
        records = [
            run_episode(
                task,
                performer,
                vocab,
                timing,
                chooser,
                preseed_all=preseed_all,
                perturb=perturb,
                rng=episode_rng(seed, task, i),
                step_limit=step_limit,
                failure_cap=failure_cap,
            )
            for i, task in items
        ]
    return compute_metrics(records), records


def evaluate(
    performer: PerformerModel,
    tasks: list[TaskInstance],
    baseline: str,
    vocab: Vocab,
    *,
    questioner: QuestionerModel | None = None,
    seed: int = 0,
    perturb: PerturbationConfig | None = None,
    step_limit: int = STEP_LIMIT,
    failure_cap: int = FAILURE_CAP,
    workers: int = 1,
) -> tuple[Metrics, list[EpisodeRecord]]:
    """Runs every task once under the named baseline; fully deterministic."""
    spec = baseline_spec(baseline)
    chooser = _make_chooser(spec, questioner)
    return evaluate_policy(
        performer,
        tasks,
        vocab,
        spec.timing,
        chooser,
        preseed_all=spec.preseed_all,
        seed=seed,
        perturb=perturb,
        step_limit=step_limit,
        failure_cap=failure_cap,
        workers=workers,
    )
