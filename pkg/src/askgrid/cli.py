"""Command-line interface: dataset generation, training, evaluation, reports.

Every command is deterministic given its flags. Outputs are line-delimited
episode logs, tab-separated metrics tables with companion figures, and
versioned model checkpoints. Contract violations exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from askgrid.ablation import (
    PerturbAblationConfig,
    TimingAblationConfig,
    perturbation_ablation,
    timing_ablation,
)
from askgrid.agent import (
    OBS_DIM,
    PerformerConfig,
    PerformerModel,
    QuestionerConfig,
    QuestionerModel,
    build_vocab,
    qstate_dim,
)
from askgrid.checkpoint import load_performer, load_questioner, save_performer, save_questioner
from askgrid.dialogue import PerturbationConfig, QuestionType
from askgrid.harness import (
    BASELINES,
    FAILURE_CAP,
    STEP_LIMIT,
    TimingSpec,
    evaluate,
    records_from_lines,
    records_to_lines,
    replay_episode,
)
from askgrid.report import (
    metrics_row,
    render_report,
    rl_curves_figure,
    training_curves_figure,
    write_table,
)
from askgrid.tasks import FoldConfig, build_folds, folds_from_lines, folds_to_lines
from askgrid.training import (
    HumanProfile,
    ImitationConfig,
    QPretrainConfig,
    RewardConfig,
    RLConfig,
    pretrain_questioner,
    rl_finetune,
    train_performer,
)
from askgrid.world import AskgridError


def _load_folds(path: str):
    return folds_from_lines(Path(path).read_text().splitlines())


def _parse_timing(text: str) -> TimingSpec:
    if text.startswith("fixed:"):
        return TimingSpec("fixed", interval=int(text.split(":", 1)[1]))
    return TimingSpec(text)


def _parse_perturb(text: str | None) -> PerturbationConfig | None:
    if text is None:
        return None
    qtype, _, prob = text.partition(":")
    if not prob:
        raise AskgridError("perturbation must look like location:0.5")
    return PerturbationConfig.single(QuestionType(qtype), float(prob))


# ==================== commands ====================


def cmd_gen(args) -> int:
    config = FoldConfig(
        train_scenes=args.train_scenes,
        unseen_scenes=args.unseen_scenes,
        n_train=args.n_train,
        n_valid_seen=args.n_valid_seen,
        n_valid_unseen=args.n_valid_unseen,
        variant_major_prob=args.variant_major_prob,
        master_seed=args.seed,
    )
    folds = build_folds(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(folds_to_lines(folds)) + "\n")
    print(f"wrote {out}: train={len(folds.train)} valid_seen={len(folds.valid_seen)} valid_unseen={len(folds.valid_unseen)}")
    return 0


def cmd_train_performer(args) -> int:
    folds = _load_folds(args.folds)
    vocab = build_vocab()
    config = ImitationConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        qa_regime=args.qa_regime,
        recovery_frac=args.recovery_frac,
        far_oversample=args.far_oversample,
        heldout_frac=args.heldout_frac,
        seed=args.seed,
    )
    model, report = train_performer(folds.train, vocab, config)
    if report.diverged:
        raise AskgridError("imitation training diverged (non-finite loss)")
    save_performer(args.out, model, extra={"train_report": report.to_json()})
    if args.curves:
        training_curves_figure(report.to_json(), args.curves)
    held = report.heldout_accuracy[-1]
    print(
        f"trained on {report.n_examples} examples in {report.wall_seconds:.0f}s; "
        f"final loss {report.epoch_losses[-1]:.4f}, held-out accuracy {held:.4f}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_pretrain_questioner(args) -> int:
    folds = _load_folds(args.folds)
    vocab = build_vocab()
    profile = HumanProfile(ask_rate=args.ask_rate, type_mix=tuple(args.type_mix))
    config = QPretrainConfig(
        epochs=args.epochs, states_per_task=args.states_per_task, lr=args.lr, seed=args.seed
    )
    model, summary = pretrain_questioner(folds.train, vocab, profile, config)
    save_questioner(args.out, model, extra={"pretrain_summary": summary})
    mix = ", ".join(f"{m:.3f}" for m in summary["type_mix"])
    print(f"ask rate {summary['ask_rate']:.3f}, type mix ({mix})")
    print(f"wrote {args.out}")
    return 0


def cmd_finetune(args) -> int:
    folds = _load_folds(args.folds)
    vocab = build_vocab()
    performer, _ = load_performer(args.performer)
    if args.questioner:
        questioner, _ = load_questioner(args.questioner)
    else:
        questioner = QuestionerModel(
            QuestionerConfig(input_dim=qstate_dim(vocab)), rng=np.random.default_rng(args.seed)
        )
    reward = RewardConfig.promote_asking() if args.promote_asking else RewardConfig()
    config = RLConfig(
        iterations=args.iterations,
        episodes_per_iter=args.episodes_per_iter,
        lr=args.lr,
        seed=args.seed,
        reward=reward,
        timing=_parse_timing(args.timing),
        perturb=_parse_perturb(args.perturb),
        step_limit=args.step_limit,
        failure_cap=args.failure_cap,
    )
    report = rl_finetune(questioner, performer, folds.fold(args.fold), vocab, config)
    save_questioner(args.out, questioner, extra={"rl_report": report.to_json()})
    if args.curves:
        rl_curves_figure(report.to_json(), args.curves)
    last = report.iterations[-1]
    print(
        f"{config.timing.label()} fine-tune, {len(report.iterations)} iterations in "
        f"{report.wall_seconds:.0f}s; final reward {last['mean_reward']:.3f}, "
        f"questions {last['mean_questions']:.2f}, success {last['success_rate']:.3f}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args) -> int:
    folds = _load_folds(args.folds)
    vocab = build_vocab()
    performer, _ = load_performer(args.performer)
    questioner = None
    if args.questioner:
        questioner, _ = load_questioner(args.questioner)
    metrics, records = evaluate(
        performer,
        folds.fold(args.fold),
        args.baseline,
        vocab,
        questioner=questioner,
        seed=args.seed,
        perturb=_parse_perturb(args.perturb),
        step_limit=args.step_limit,
        failure_cap=args.failure_cap,
        workers=args.workers,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "episodes.jsonl").write_text("\n".join(records_to_lines(records)) + "\n")
    rows = [metrics_row(args.baseline, args.fold, metrics)]
    paths = render_report(out, rows)
    print(json.dumps(metrics.to_json(), sort_keys=True))
    print(f"wrote {paths['table']} and {len(paths) - 1} figures")
    return 0


def cmd_ablate(args) -> int:
    folds = _load_folds(args.folds)
    vocab = build_vocab()
    performer, _ = load_performer(args.performer)
    questioner, _ = load_questioner(args.questioner)
    rl = RLConfig(
        iterations=args.iterations,
        episodes_per_iter=args.episodes_per_iter,
        seed=args.seed,
        step_limit=args.step_limit,
        failure_cap=args.failure_cap,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_tasks = folds.train
    eval_tasks = folds.fold(args.fold)
    if args.kind == "perturb":
        config = PerturbAblationConfig(
            qtype=QuestionType(args.qtype),
            drop=args.drop,
            rl=rl,
            eval_seed=args.seed,
            step_limit=args.step_limit,
            failure_cap=args.failure_cap,
        )
        table, retuned = perturbation_ablation(
            performer, questioner, train_tasks, eval_tasks, vocab, config
        )
        save_questioner(out / "questioner_retuned.ckpt", retuned)
    else:
        config = TimingAblationConfig(
            rl=rl, eval_seed=args.seed, step_limit=args.step_limit, failure_cap=args.failure_cap
        )
        table, tuned = timing_ablation(performer, questioner, train_tasks, eval_tasks, vocab, config)
        for label, model in tuned.items():
            save_questioner(out / f"questioner_{label}.ckpt", model)
    rows = [metrics_row(label, args.fold, m) for label, m in table]
    paths = render_report(out, rows, stem=f"ablation_{args.kind}")
    for row in rows:
        print(f"{row['setting']}: sr={row['sr']:.3f} nq={row['nq']:.2f}")
    print(f"wrote {paths['table']} and {len(paths) - 1} figures")
    return 0


def cmd_replay(args) -> int:
    folds = _load_folds(args.folds)
    records = records_from_lines(Path(args.episodes).read_text().splitlines())
    by_key = {
        (t.task_seed, t.scene_seed, t.task_type.value): t
        for fold in ("train", "valid_seen", "valid_unseen")
        for t in folds.fold(fold)
    }
    checked = 0
    for record in records:
        key = (record.task_seed, record.scene_seed, record.task_type)
        task = by_key.get(key)
        if task is None:
            raise AskgridError(f"episode references a task not in the folds file: {key}")
        replay_episode(task, record)
        checked += 1
    print(f"replayed {checked} episodes: all transcripts faithful")
    return 0


# ==================== parser ====================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="askgrid", description="Grid-household instruction following with question asking."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate scenes and dataset folds")
    p.add_argument("--out", required=True, help="folds file to write (jsonl)")
    p.add_argument("--train-scenes", type=int, default=12)
    p.add_argument("--unseen-scenes", type=int, default=4)
    p.add_argument("--n-train", type=int, default=4000)
    p.add_argument("--n-valid-seen", type=int, default=300)
    p.add_argument("--n-valid-unseen", type=int, default=300)
    p.add_argument("--variant-major-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-performer", help="imitation-train the instruction follower")
    p.add_argument("--folds", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curves", help="optional PNG of training curves")
    p.add_argument("--epochs", type=int, default=ImitationConfig.epochs)
    p.add_argument("--batch-size", type=int, default=ImitationConfig.batch_size)
    p.add_argument("--lr", type=float, default=ImitationConfig.lr)
    p.add_argument("--qa-regime", default=ImitationConfig.qa_regime,
                   choices=("none", "all", "mid", "all_mid", "mix"))
    p.add_argument("--recovery-frac", type=float, default=ImitationConfig.recovery_frac)
    p.add_argument("--far-oversample", type=float, default=ImitationConfig.far_oversample)
    p.add_argument("--heldout-frac", type=float, default=ImitationConfig.heldout_frac)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_performer)

    p = sub.add_parser("pretrain-questioner", help="supervised pretraining toward an asking profile")
    p.add_argument("--folds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ask-rate", type=float, default=HumanProfile.ask_rate)
    p.add_argument("--type-mix", type=float, nargs=3, default=list(HumanProfile.type_mix),
                   metavar=("LOC", "APP", "DIR"))
    p.add_argument("--epochs", type=int, default=QPretrainConfig.epochs)
    p.add_argument("--states-per-task", type=int, default=QPretrainConfig.states_per_task)
    p.add_argument("--lr", type=float, default=QPretrainConfig.lr)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_pretrain_questioner)

    p = sub.add_parser("finetune", help="actor-critic fine-tuning of the questioner")
    p.add_argument("--folds", required=True)
    p.add_argument("--performer", required=True)
    p.add_argument("--questioner", help="pretrained checkpoint; omit to start fresh")
    p.add_argument("--out", required=True)
    p.add_argument("--curves", help="optional PNG of fine-tuning traces")
    p.add_argument("--fold", default="train", choices=("train", "valid_seen", "valid_unseen"))
    p.add_argument("--timing", default="begin", help="begin | fixed:K | confusion")
    p.add_argument("--iterations", type=int, default=RLConfig.iterations)
    p.add_argument("--episodes-per-iter", type=int, default=RLConfig.episodes_per_iter)
    p.add_argument("--lr", type=float, default=RLConfig.lr)
    p.add_argument("--promote-asking", action="store_true",
                   help="soften question/invalid penalties during tuning")
    p.add_argument("--perturb", help="drop answers, e.g. location:0.5")
    p.add_argument("--step-limit", type=int, default=STEP_LIMIT)
    p.add_argument("--failure-cap", type=int, default=FAILURE_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="run a baseline over a fold; write logs, table, figures")
    p.add_argument("--folds", required=True)
    p.add_argument("--performer", required=True)
    p.add_argument("--questioner")
    p.add_argument("--baseline", required=True, choices=BASELINES)
    p.add_argument("--fold", default="valid_unseen", choices=("train", "valid_seen", "valid_unseen"))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--perturb", help="drop answers, e.g. location:0.5")
    p.add_argument("--step-limit", type=int, default=STEP_LIMIT)
    p.add_argument("--failure-cap", type=int, default=FAILURE_CAP)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="perturbation or timing study")
    p.add_argument("--kind", required=True, choices=("perturb", "timing"))
    p.add_argument("--folds", required=True)
    p.add_argument("--performer", required=True)
    p.add_argument("--questioner", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fold", default="valid_unseen", choices=("train", "valid_seen", "valid_unseen"))
    p.add_argument("--qtype", default="location", choices=[t.value for t in QuestionType])
    p.add_argument("--drop", type=float, default=0.5)
    p.add_argument("--iterations", type=int, default=RLConfig.iterations)
    p.add_argument("--episodes-per-iter", type=int, default=RLConfig.episodes_per_iter)
    p.add_argument("--step-limit", type=int, default=STEP_LIMIT)
    p.add_argument("--failure-cap", type=int, default=FAILURE_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("replay", help="verify an episode log against the simulator")
    p.add_argument("--folds", required=True)
    p.add_argument("--episodes", required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AskgridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
