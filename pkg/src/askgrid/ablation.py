"""Comparative studies: oracle-perturbation adaptation and question timing.

Both studies take a frozen performer plus a pretrained questioner, fine-tune
questioner copies under the varied condition, and evaluate everything on a
common fold. They return labelled metrics rows ready for the report writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from askgrid.agent.encoding import Vocab
from askgrid.agent.performer import PerformerModel
from askgrid.agent.questioner import QuestionerModel
from askgrid.dialogue import PerturbationConfig, QuestionType
from askgrid.harness import (
    FAILURE_CAP,
    STEP_LIMIT,
    Metrics,
    RandomChooser,
    TimingSpec,
    TrainedChooser,
    evaluate_policy,
)
from askgrid.tasks import TaskInstance
from askgrid.training import RewardConfig, RLConfig, rl_finetune
from askgrid.world import AskgridError

MetricsTable = list[tuple[str, Metrics]]


@dataclass(frozen=True)
class PerturbAblationConfig:
    """Drop one question type's answers and see whether retuning shifts away."""

    qtype: QuestionType = QuestionType.LOCATION
    drop: float = 0.5
    rl: RLConfig = field(default_factory=RLConfig)
    eval_seed: int = 0
    step_limit: int = STEP_LIMIT
    failure_cap: int = FAILURE_CAP
    include_random: bool = True


def perturbation_ablation(
    performer: PerformerModel,
    questioner: QuestionerModel,
    train_tasks: list[TaskInstance],
    eval_tasks: list[TaskInstance],
    vocab: Vocab,
    config: PerturbAblationConfig | None = None,
) -> tuple[MetricsTable, QuestionerModel]:
    """Rows for tuned/retuned/random policies under a clean and a lossy oracle.

    Returns the table and the retuned questioner. The random rows pin the
    control: a policy that ignores answers keeps its type mix no matter what
    the oracle drops.
    """
    config = config or PerturbAblationConfig()
    if not 0.0 < config.drop <= 1.0:
        raise AskgridError("drop rate must lie in (0, 1]")
    perturb = PerturbationConfig.single(config.qtype, config.drop)
    timing = config.rl.timing
    common = dict(seed=config.eval_seed, step_limit=config.step_limit, failure_cap=config.failure_cap)

    rows: MetricsTable = []
    m, _ = evaluate_policy(performer, eval_tasks, vocab, timing, TrainedChooser(questioner), **common)
    rows.append(("tuned/clean", m))
    m, _ = evaluate_policy(
        performer, eval_tasks, vocab, timing, TrainedChooser(questioner), perturb=perturb, **common
    )
    rows.append(("tuned/perturbed", m))

    retuned = questioner.clone()
    rl_finetune(retuned, performer, train_tasks, vocab, replace(config.rl, perturb=perturb))
    m, _ = evaluate_policy(
        performer, eval_tasks, vocab, timing, TrainedChooser(retuned), perturb=perturb, **common
    )
    rows.append(("retuned/perturbed", m))

    if config.include_random:
        m, _ = evaluate_policy(performer, eval_tasks, vocab, timing, RandomChooser(), **common)
        rows.append(("random/clean", m))
        m, _ = evaluate_policy(
            performer, eval_tasks, vocab, timing, RandomChooser(), perturb=perturb, **common
        )
        rows.append(("random/perturbed", m))
    return rows, retuned


@dataclass(frozen=True)
class TimingAblationConfig:
    """Sweep how often question turns are granted."""

    fixed_intervals: tuple[int, ...] = (1, 5, 10)
    promote_interval: int = 1  # intervals <= this fine-tune under promote-asking rewards
    include_confusion: bool = True
    rl: RLConfig = field(default_factory=RLConfig)
    eval_seed: int = 0
    step_limit: int = STEP_LIMIT
    failure_cap: int = FAILURE_CAP


def timing_ablation(
    performer: PerformerModel,
    questioner: QuestionerModel,
    train_tasks: list[TaskInstance],
    eval_tasks: list[TaskInstance],
    vocab: Vocab,
    config: TimingAblationConfig | None = None,
) -> tuple[MetricsTable, dict[str, QuestionerModel]]:
    """Fine-tunes one questioner copy per timing policy and evaluates each.

    Dense granting (every step) is paired with softened asking penalties so
    the tuned policy actually uses the extra turns; sparse granting keeps the
    standard costs. Returns the table plus the tuned models keyed by label.
    """
    config = config or TimingAblationConfig()
    if not config.fixed_intervals and not config.include_confusion:
        raise AskgridError("timing ablation needs at least one variant")
    variants = [TimingSpec("fixed", interval=k) for k in config.fixed_intervals]
    if config.include_confusion:
        variants.append(TimingSpec("confusion"))

    rows: MetricsTable = []
    tuned: dict[str, QuestionerModel] = {}
    for timing in variants:
        reward = (
            RewardConfig.promote_asking()
            if timing.mode == "fixed" and timing.interval <= config.promote_interval
            else RewardConfig()
        )
        q = questioner.clone()
        rl_finetune(q, performer, train_tasks, vocab, replace(config.rl, timing=timing, reward=reward))
        m, _ = evaluate_policy(
            performer,
            eval_tasks,
            vocab,
            timing,
            TrainedChooser(q),
            seed=config.eval_seed,
            step_limit=config.step_limit,
            failure_cap=config.failure_cap,
        )
        rows.append((timing.label(), m))
        tuned[timing.label()] = q
    return rows, tuned


__all__ = [
    "MetricsTable",
    "PerturbAblationConfig",
    "perturbation_ablation",
    "TimingAblationConfig",
    "timing_ablation",
]
