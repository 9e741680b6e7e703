"""Training: imitation for the performer, pretraining and RL for the questioner.

The performer is trained teacher-forced on expert trajectories, with QA text
mixed into the context and optional recovery examples whose first few steps
are random walk (excluded from the loss) followed by a replanned expert
suffix. The questioner is first pushed toward an asking profile by supervised
sampling, then fine-tuned with advantage actor-critic on episode rewards
while the performer stays frozen.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from askgrid.agent import nn
from askgrid.agent.encoding import (
    ACTION_TO_ID,
    OBS_DIM,
    START_ID,
    STOP_ID,
    ContextEncoding,
    Vocab,
    build_performer_batch,
)
from askgrid.agent.performer import PerformerConfig, PerformerModel
from askgrid.agent.questioner import (
    DIRECTION_SLOT,
    MAX_NOUN_SLOTS,
    NO_QUESTION_SLOT,
    QState,
    QuestionerConfig,
    QuestionerModel,
    build_qstate,
    masked_softmax,
    qstate_dim,
    slot_to_question,
)
from askgrid.checkpoint import params_digest
from askgrid.dialogue import (
    PerturbationConfig,
    Question,
    QuestionType,
    candidate_questions,
    oracle_answer,
)
from askgrid.harness import (
    FAILURE_CAP,
    STEP_LIMIT,
    EpisodeRecord,
    TimingSpec,
    TrainedChooser,
    run_episode,
)
from askgrid.tasks import FAR_START_TYPES, TaskInstance, plan_expert
from askgrid.world import AskgridError, PhysicalAction, bind_verb, observe, step

# ==================== rewards ====================


@dataclass(frozen=True)
class RewardConfig:
    """Episode reward terms: one bonus, three penalties."""

    success: float = 1.0
    step: float = -0.01
    question: float = -0.05
    invalid: float = -0.1

    def __post_init__(self) -> None:
        if self.success <= 0:
            raise AskgridError("success reward must be positive")
        for name in ("step", "question", "invalid"):
            if getattr(self, name) > 0:
                raise AskgridError(f"{name} reward must be a penalty (<= 0)")

    @staticmethod
    def promote_asking() -> "RewardConfig":
        """Softened penalties that make frequent asking nearly free."""
        return RewardConfig(question=-0.002, invalid=-0.01)

    def to_json(self) -> dict:
        return {"success": self.success, "step": self.step, "question": self.question, "invalid": self.invalid}

    @staticmethod
    def from_json(d: dict) -> "RewardConfig":
        return RewardConfig(**d)


def episode_reward(record: EpisodeRecord, rc: RewardConfig) -> float:
    """Total scalar reward for a finished episode."""
    total = rc.success if record.success else 0.0
    total += rc.step * record.n_steps
    total += rc.question * record.n_questions
    total += rc.invalid * record.n_invalid
    return total


def turn_rewards(record: EpisodeRecord, rc: RewardConfig) -> list[float]:
    """Per-turn reward decomposition; sums exactly to episode_reward.

    Each granted turn is charged its asking costs plus the step penalties
    accrued until the next turn; the first turn also absorbs any steps taken
    before it, and the last carries the terminal success bonus.
    """
    turns = record.turns
    if not turns:
        return []
    rewards = []
    for j, turn in enumerate(turns):
        r = 0.0
        if turn.question is not None:
            r += rc.question
            if turn.oracle_valid is False:
                r += rc.invalid
        until = turns[j + 1].step_index if j + 1 < len(turns) else record.n_steps
        r += rc.step * (until - turn.step_index)
        if j == 0:
            r += rc.step * turn.step_index
        if j == len(turns) - 1 and record.success:
            r += rc.success
        rewards.append(r)
    return rewards


def discounted_returns(rewards: list[float], gamma: float) -> list[float]:
    out = [0.0] * len(rewards)
    acc = 0.0
    for i in reversed(range(len(rewards))):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


# ==================== imitation data ====================

_RANDOM_NAV = ("MoveAhead", "RotateLeft", "RotateRight", "LookUp", "LookDown")
_RANDOM_MANIP = ("Open", "Close", "ToggleOn", "ToggleOff", "Pickup", "Put", "Slice")


def _plan_suffix(probe, task: TaskInstance) -> list[PhysicalAction] | None:
    """Replanned continuation from ``probe``, verified to execute cleanly.

    Returns None when the planner cannot produce a plan from this state or
    when the plan fails on replay (possible after a detour that altered
    object state in a way the task macros do not anticipate).
    """
    try:
        suffix, _ = plan_expert(probe, task.task_type, task.bindings)
    except AskgridError:
        return None
    check = probe.clone()
    for action in suffix:
        check, outcome = step(check, action)
        if not outcome.success:
            return None
    return suffix


def _qa_text(ctx: ContextEncoding, question: Question, state, task: TaskInstance, available_from: int) -> None:
    answer = oracle_answer(question, state, task)
    ctx.add_text(question.tokens(), available_from=available_from)
    ctx.add_text(answer.tokens, available_from=available_from)


def build_imitation_example(
    task: TaskInstance,
    vocab: Vocab,
    qa_regime: str,
    rng: np.random.Generator,
    recovery: bool = False,
) -> tuple[ContextEncoding, list[int]]:
    """One teacher-forced training example: context plus per-slot targets.

    qa_regime "none" adds no QA text, "all" preseeds every candidate question
    answered on the initial state, "mid" injects a single question at a random
    point of the trajectory (biased toward direction questions, whose answers
    label the expert's next turn), "all_mid" does both, and "mix" draws among
    the four. With recovery=True the trajectory starts with 1-3 random
    navigation actions, sometimes capped by one spurious manipulation, all
    excluded from the loss; the expert suffix is replanned from the resulting
    state. Recovery examples keep whatever QA the regime adds: answers
    preseeded on the initial state go stale once the prefix moves the agent,
    which is exactly the condition a deployed policy faces after it drifts
    off the answered bearing, and the replanned suffix labels the way back.
    The spurious manipulation teaches that a manipulation in the context
    window (typically a failed one) does not mean the episode is finished.
    """
    if task.instruction is None:
        raise AskgridError("task carries no instruction")
    if qa_regime not in ("none", "all", "mid", "all_mid", "mix"):
        raise AskgridError(f"unknown qa regime {qa_regime!r}")
    instruction = task.instruction

    ctx = ContextEncoding(vocab)
    ctx.add_text(instruction.tokens, available_from=0)

    mode = qa_regime
    if qa_regime == "mix":
        roll = rng.random()
        if roll < 0.2:
            mode = "none"
        elif roll < 0.55:
            mode = "all"
        elif roll < 0.8:
            mode = "mid"
        else:
            mode = "all_mid"
    if mode in ("all", "all_mid"):
        for question in candidate_questions(instruction):
            _qa_text(ctx, question, task.initial, task, available_from=0)

    state = task.initial.clone()
    plan: list[PhysicalAction] = []
    targets: list[int] = []
    prefix: list[PhysicalAction] = []
    if recovery:
        for _ in range(int(rng.integers(1, 4))):
            prefix.append(PhysicalAction(_RANDOM_NAV[int(rng.integers(len(_RANDOM_NAV)))]))
        probe = state
        for action in prefix:
            probe, _ = step(probe, action)  # failures are no-ops, keep them
        suffix = None
        if rng.random() < 0.5:
            detour = bind_verb(probe, _RANDOM_MANIP[int(rng.integers(len(_RANDOM_MANIP)))])
            after, _ = step(probe, detour)
            suffix = _plan_suffix(after, task)
            if suffix is not None:
                prefix.append(detour)
                probe = after
        if suffix is None:
            suffix = _plan_suffix(probe, task)
        if suffix is None:
            raise AskgridError("recovery suffix failed to replan from a navigation prefix")
        plan = prefix + suffix
        targets = [-1] * len(prefix) + [ACTION_TO_ID[a.name] for a in suffix]
    else:
        plan = list(task.expert)
        targets = [ACTION_TO_ID[a.name] for a in plan]

    question = None
    inject_at = -1
    if mode in ("mid", "all_mid"):
        inject_at = int(rng.integers(len(plan) + 1))
        if mode == "all_mid" or rng.random() < 0.5:
            question = Question(QuestionType.DIRECTION)
        else:
            cands = candidate_questions(instruction)
            question = cands[int(rng.integers(len(cands)))]

    prev = START_ID
    for i, action in enumerate(plan):
        if i == inject_at and question is not None:
            _qa_text(ctx, question, state, task, available_from=i)
        ctx.add_step(observe(state), prev)
        state, outcome = step(state, action)
        if not recovery and not outcome.success:
            raise AskgridError(f"expert action failed during replay: {action.encode()}")
        prev = ACTION_TO_ID[action.name]
    if inject_at == len(plan) and question is not None:
        _qa_text(ctx, question, state, task, available_from=len(plan))
    ctx.add_step(observe(state), prev)
    targets.append(STOP_ID)
    return ctx, targets


# ==================== performer training ====================


@dataclass(frozen=True)
class ImitationConfig:
    epochs: int = 8
    batch_size: int = 16
    lr: float = 1e-3
    clip: float = 5.0
    qa_regime: str = "mix"
    recovery_frac: float = 0.5  # extra recovery examples per task
    # Expected extra fully-preseeded examples per task whose plan opens with
    # navigation; those are the episodes where answers carry the most signal.
    far_oversample: float = 2.0
    heldout_frac: float = 0.05
    seed: int = 0


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_accuracy: list[float] = field(default_factory=list)
    heldout_accuracy: list[float] = field(default_factory=list)
    n_examples: int = 0
    diverged: bool = False
    wall_seconds: float = 0.0

    def to_json(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "epoch_accuracy": self.epoch_accuracy,
            "heldout_accuracy": self.heldout_accuracy,
            "n_examples": self.n_examples,
            "diverged": self.diverged,
            "wall_seconds": self.wall_seconds,
        }


def train_performer(
    tasks: list[TaskInstance],
    vocab: Vocab,
    config: ImitationConfig,
    model: PerformerModel | None = None,
) -> tuple[PerformerModel, TrainReport]:
    """Teacher-forced imitation over expert trajectories."""
    if not tasks:
        raise AskgridError("no tasks to train on")
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = PerformerModel(
            PerformerConfig(vocab_size=vocab.size, obs_dim=OBS_DIM), rng=rng
        )

    started = time.monotonic()
    examples = []
    for task in tasks:
        examples.append(build_imitation_example(task, vocab, config.qa_regime, rng))
        if rng.random() < config.recovery_frac:
            examples.append(build_imitation_example(task, vocab, config.qa_regime, rng, recovery=True))
        if task.task_type in FAR_START_TYPES:
            extra = int(config.far_oversample)
            if rng.random() < config.far_oversample - extra:
                extra += 1
            for _ in range(extra):
                examples.append(build_imitation_example(task, vocab, "all", rng))
    order = rng.permutation(len(examples))
    n_held = max(1, int(len(examples) * config.heldout_frac)) if config.heldout_frac > 0 else 0
    held = [examples[i] for i in order[:n_held]]
    train = [examples[i] for i in order[n_held:]]

    report = TrainReport(n_examples=len(examples))
    opt = nn.Adam(model.params, lr=config.lr)
    cap = model.config.context_cap
    decay_at = {int(config.epochs * 0.6), int(config.epochs * 0.85)}
    for epoch in range(config.epochs):
        if epoch in decay_at:
            opt.lr *= 0.5
        perm = rng.permutation(len(train))
        losses, accs = [], []
        for lo in range(0, len(perm), config.batch_size):
            chunk = [train[i] for i in perm[lo : lo + config.batch_size]]
            batch = build_performer_batch([c for c, _ in chunk], [t for _, t in chunk], cap=cap)
            loss, grads, acc = model.loss_and_grads(batch)
            if not np.isfinite(loss):
                report.diverged = True
                report.wall_seconds = time.monotonic() - started
                return model, report
            nn.clip_gradients(grads, config.clip)
            opt.step(model.params, grads)
            losses.append(loss)
            accs.append(acc)
        report.epoch_losses.append(float(np.mean(losses)))
        report.epoch_accuracy.append(float(np.mean(accs)))
        report.heldout_accuracy.append(teacher_forced_accuracy(model, held) if held else float("nan"))
    report.wall_seconds = time.monotonic() - started
    return model, report


def teacher_forced_accuracy(
    model: PerformerModel, examples: list[tuple[ContextEncoding, list[int]]], batch_size: int = 16
) -> float:
    """Top-1 accuracy over every supervised slot, without updating the model."""
    if not examples:
        raise AskgridError("no examples to score")
    correct = total = 0
    for lo in range(0, len(examples), batch_size):
        chunk = examples[lo : lo + batch_size]
        batch = build_performer_batch(
            [c for c, _ in chunk], [t for _, t in chunk], cap=model.config.context_cap
        )
        logits, _ = model.forward(batch)
        hits = (logits.argmax(axis=-1) == batch.targets) & batch.target_valid
        correct += int(hits.sum())
        total += int(batch.target_valid.sum())
    return correct / max(1, total)


# ==================== questioner pretraining ====================


@dataclass(frozen=True)
class HumanProfile:
    """Target asking behaviour for supervised pretraining."""

    ask_rate: float = 0.66
    type_mix: tuple[float, float, float] = (0.72, 0.22, 0.06)  # location, appearance, direction

    def __post_init__(self) -> None:
        if not 0.0 <= self.ask_rate <= 1.0:
            raise AskgridError("ask_rate must lie in [0, 1]")
        if min(self.type_mix) < 0 or abs(sum(self.type_mix) - 1.0) > 1e-9:
            raise AskgridError("type_mix must be a distribution over the three question types")


@dataclass(frozen=True)
class QPretrainConfig:
    epochs: int = 12
    batch_size: int = 64
    lr: float = 1e-3
    clip: float = 5.0
    states_per_task: int = 2
    seed: int = 0


def collect_decision_states(
    tasks: list[TaskInstance], vocab: Vocab, rng: np.random.Generator, per_task: int = 2
) -> list[QState]:
    """QStates sampled along expert trajectories (always including step 0)."""
    states: list[QState] = []
    for task in tasks:
        if task.instruction is None:
            raise AskgridError("task carries no instruction")
        picks = {0}
        while len(picks) < min(per_task, len(task.expert) + 1):
            picks.add(int(rng.integers(len(task.expert) + 1)))
        world = task.initial.clone()
        for i in range(max(picks) + 1):
            if i in picks:
                states.append(
                    build_qstate(vocab, task.instruction, observe(world), i, STEP_LIMIT, 0)
                )
            if i < len(task.expert):
                world, _ = step(world, task.expert[i])
    return states


def _sample_profile_slot(state: QState, profile: HumanProfile, rng: np.random.Generator) -> int:
    if rng.random() >= profile.ask_rate:
        return NO_QUESTION_SLOT
    roll = rng.random()
    n = min(len(state.nouns), MAX_NOUN_SLOTS)
    loc, app, _ = profile.type_mix
    if roll < loc:
        return int(rng.integers(n))
    if roll < loc + app:
        return MAX_NOUN_SLOTS + int(rng.integers(n))
    return DIRECTION_SLOT


def policy_summary(model: QuestionerModel, states: list[QState]) -> dict:
    """Mean ask probability and conditional type mix over the given states."""
    if not states:
        raise AskgridError("no states to summarize")
    feats = np.stack([s.features for s in states])
    masks = np.stack([s.mask for s in states])
    logits, _, _ = model.forward(feats)
    probs = masked_softmax(logits, masks)
    p_loc = probs[:, :MAX_NOUN_SLOTS].sum(axis=1).mean()
    p_app = probs[:, MAX_NOUN_SLOTS:DIRECTION_SLOT].sum(axis=1).mean()
    p_dir = probs[:, DIRECTION_SLOT].mean()
    p_ask = p_loc + p_app + p_dir
    mix = (p_loc / p_ask, p_app / p_ask, p_dir / p_ask) if p_ask > 0 else (0.0, 0.0, 0.0)
    return {"ask_rate": float(p_ask), "type_mix": tuple(float(m) for m in mix)}


def pretrain_questioner(
    tasks: list[TaskInstance],
    vocab: Vocab,
    profile: HumanProfile,
    config: QPretrainConfig,
    model: QuestionerModel | None = None,
) -> tuple[QuestionerModel, dict]:
    """Supervised pretraining toward the asking profile; returns a summary."""
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = QuestionerModel(QuestionerConfig(input_dim=qstate_dim(vocab)), rng=rng)
    states = collect_decision_states(tasks, vocab, rng, per_task=config.states_per_task)
    targets = np.array([_sample_profile_slot(s, profile, rng) for s in states], dtype=np.int64)
    feats = np.stack([s.features for s in states])
    masks = np.stack([s.mask for s in states])

    opt = nn.Adam(model.params, lr=config.lr)
    losses = []
    for _ in range(config.epochs):
        perm = rng.permutation(len(states))
        epoch = []
        for lo in range(0, len(perm), config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            logits, _, cache = model.forward(feats[idx])
            probs = masked_softmax(logits, masks[idx])
            rows = np.arange(len(idx))
            picked = np.maximum(probs[rows, targets[idx]], 1e-300)
            loss = float(-np.log(picked).mean())
            dlogits = probs.copy()
            dlogits[rows, targets[idx]] -= 1.0
            dlogits /= len(idx)
            grads = model.backward(dlogits, np.zeros(len(idx)), cache)
            nn.clip_gradients(grads, config.clip)
            opt.step(model.params, grads)
            epoch.append(loss)
        losses.append(float(np.mean(epoch)))
    summary = policy_summary(model, states)
    summary["epoch_losses"] = losses
    return model, summary


# ==================== actor-critic ====================


def a2c_loss_and_grads(
    model: QuestionerModel,
    feats: np.ndarray,
    masks: np.ndarray,
    slots: np.ndarray,
    returns: np.ndarray,
    advantages: np.ndarray,
    entropy_coef: float,
    value_coef: float,
) -> tuple[float, nn.Params, dict]:
    """Policy gradient + value regression + entropy bonus, averaged over turns.

    Advantages enter as constants so the loss is a plain function of the
    parameters (which keeps it honest under finite-difference checking).
    """
    b = feats.shape[0]
    logits, values, cache = model.forward(feats)
    probs = masked_softmax(logits, masks)
    logp = np.where(masks, np.log(np.maximum(probs, 1e-300)), 0.0)
    rows = np.arange(b)
    chosen_logp = logp[rows, slots]
    entropy = -(probs * logp).sum(axis=1)
    verr = values - returns

    policy_loss = float(-(chosen_logp * advantages).mean())
    entropy_loss = float(-entropy_coef * entropy.mean())
    value_loss = float(value_coef * (verr**2).mean())
    loss = policy_loss + entropy_loss + value_loss

    dlogits = probs.copy()
    dlogits[rows, slots] -= 1.0
    dlogits *= advantages[:, None] / b
    dlogits += entropy_coef / b * probs * (logp + entropy[:, None])
    dvalues = 2.0 * value_coef * verr / b
    grads = model.backward(dlogits, dvalues, cache)
    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": float(entropy.mean()),
    }
    return loss, grads, stats


# ==================== RL fine-tuning ====================


@dataclass(frozen=True)
class RLConfig:
    iterations: int = 60
    episodes_per_iter: int = 32
    lr: float = 3e-4
    gamma: float = 0.99
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    clip: float = 5.0
    seed: int = 0
    reward: RewardConfig = field(default_factory=RewardConfig)
    timing: TimingSpec = field(default_factory=lambda: TimingSpec("begin"))
    perturb: PerturbationConfig | None = None
    step_limit: int = STEP_LIMIT
    failure_cap: int = FAILURE_CAP


@dataclass
class RLReport:
    iterations: list[dict] = field(default_factory=list)
    performer_digest: str = ""
    wall_seconds: float = 0.0

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "performer_digest": self.performer_digest,
            "wall_seconds": self.wall_seconds,
        }


class _ForcedChooser:
    """Always picks a predetermined slot (used for cached begin-timing rollouts)."""

    def __init__(self, slot: int):
        self.slot = slot

    def choose(self, state: QState, rng: np.random.Generator):
        return self.slot, slot_to_question(self.slot, state.nouns)


def _begin_episode_cached(
    task: TaskInstance,
    performer: PerformerModel,
    vocab: Vocab,
    slot: int,
    dropped: bool,
    config: RLConfig,
    cache: dict,
) -> EpisodeRecord:
    """Deterministic outcome of a begin-timing episode with a forced question.

    When the perturbation coin says the answer is dropped, delivery is forced
    to the invalid marker via a probability-one config, so the whole episode
    stays deterministic and cacheable.
    """
    key = (task.scene_seed, task.task_seed, slot, dropped)
    if key in cache:
        return cache[key]
    question = slot_to_question(slot, task.instruction.nouns)
    perturb = None
    if dropped and question is not None:
        perturb = PerturbationConfig.single(question.qtype, 1.0)
    record = run_episode(
        task,
        performer,
        vocab,
        TimingSpec("begin"),
        _ForcedChooser(slot),
        perturb=perturb,
        rng=np.random.default_rng(0),
        step_limit=config.step_limit,
        failure_cap=config.failure_cap,
    )
    record.qstates = None
    cache[key] = record
    return record


def rl_finetune(
    questioner: QuestionerModel,
    performer: PerformerModel,
    tasks: list[TaskInstance],
    vocab: Vocab,
    config: RLConfig,
) -> RLReport:
    """Advantage actor-critic over question turns; the performer never moves.

    Begin-timing runs use a per-(task, slot) episode cache because everything
    after the single question choice is deterministic; other timings roll out
    full episodes.
    """
    if not tasks:
        raise AskgridError("no tasks to fine-tune on")
    for task in tasks:
        if task.instruction is None:
            raise AskgridError("task carries no instruction")
    digest_before = params_digest(performer.params)
    started = time.monotonic()
    report = RLReport(performer_digest=digest_before)
    opt = nn.Adam(questioner.params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    episode_cache: dict = {}
    qstate_cache: dict = {}
    fast_begin = config.timing.mode == "begin"

    for it in range(config.iterations):
        feats, masks, slots, returns = [], [], [], []
        ep_rewards, ep_questions, ep_success = [], [], []
        for e in range(config.episodes_per_iter):
            ti = int(rng.integers(len(tasks)))
            task = tasks[ti]
            if fast_begin:
                if ti not in qstate_cache:
                    qstate_cache[ti] = build_qstate(
                        vocab, task.instruction, observe(task.initial), 0, config.step_limit, 0
                    )
                qstate = qstate_cache[ti]
                dist = questioner.distribution(qstate)
                slot = dist.sample(rng)
                question = slot_to_question(slot, qstate.nouns)
                dropped = False
                if question is not None and config.perturb is not None:
                    dropped = rng.random() < config.perturb.probability(question.qtype)
                record = _begin_episode_cached(task, performer, vocab, slot, dropped, config, episode_cache)
                turn_rs = turn_rewards(record, config.reward)
                feats.append(qstate.features)
                masks.append(qstate.mask)
                slots.append(slot)
                returns.append(turn_rs[0])
                total = turn_rs[0]
            else:
                record = run_episode(
                    task,
                    performer,
                    vocab,
                    config.timing,
                    TrainedChooser(questioner, mode="sample"),
                    perturb=config.perturb,
                    rng=np.random.default_rng([config.seed, it, e]),
                    collect_qstates=True,
                    step_limit=config.step_limit,
                    failure_cap=config.failure_cap,
                )
                turn_rs = turn_rewards(record, config.reward)
                gs = discounted_returns(turn_rs, config.gamma)
                for qstate, turn, g in zip(record.qstates or [], record.turns, gs):
                    feats.append(qstate.features)
                    masks.append(qstate.mask)
                    slots.append(turn.slot)
                    returns.append(g)
                total = episode_reward(record, config.reward)
            ep_rewards.append(total)
            ep_questions.append(record.n_questions)
            ep_success.append(1.0 if record.success else 0.0)

        row = {
            "iteration": it,
            "mean_reward": float(np.mean(ep_rewards)),
            "mean_questions": float(np.mean(ep_questions)),
            "success_rate": float(np.mean(ep_success)),
        }
        if feats:
            f = np.stack(feats)
            m = np.stack(masks)
            a = np.asarray(slots, dtype=np.int64)
            g = np.asarray(returns, dtype=np.float64)
            _, values, _ = questioner.forward(f)
            advantages = g - values
            loss, grads, stats = a2c_loss_and_grads(
                questioner, f, m, a, g, advantages, config.entropy_coef, config.value_coef
            )
            nn.clip_gradients(grads, config.clip)
            opt.step(questioner.params, grads)
            row.update(stats)
            row["loss"] = loss
            row["n_turns"] = int(len(a))
        report.iterations.append(row)

    if params_digest(performer.params) != digest_before:
        raise AskgridError("performer parameters changed during questioner fine-tuning")
    report.wall_seconds = time.monotonic() - started
    return report


__all__ = [
    "RewardConfig",
    "episode_reward",
    "turn_rewards",
    "discounted_returns",
    "build_imitation_example",
    "ImitationConfig",
    "TrainReport",
    "train_performer",
    "teacher_forced_accuracy",
    "HumanProfile",
    "QPretrainConfig",
    "collect_decision_states",
    "policy_summary",
    "pretrain_questioner",
    "a2c_loss_and_grads",
    "RLConfig",
    "RLReport",
    "rl_finetune",
]
