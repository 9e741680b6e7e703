"""Reward arithmetic, imitation data/training, questioner pretraining, and RL."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from askgrid.agent import (
    OBS_DIM,
    STOP_ID,
    PerformerConfig,
    PerformerModel,
    QuestionerConfig,
    QuestionerModel,
    build_vocab,
    masked_softmax,
    qstate_dim,
)
from askgrid.agent import nn
from askgrid.agent.nn import gradient_check
from askgrid.checkpoint import params_digest
from askgrid.harness import STEP_LIMIT, EpisodeRecord, QATurn, TimingSpec
from askgrid.tasks import FoldConfig, TaskType, build_folds, generate_scene, sample_task
from askgrid.training import (
    HumanProfile,
    ImitationConfig,
    QPretrainConfig,
    RewardConfig,
    RLConfig,
    a2c_loss_and_grads,
    build_imitation_example,
    collect_decision_states,
    discounted_returns,
    episode_reward,
    policy_summary,
    pretrain_questioner,
    rl_finetune,
    teacher_forced_accuracy,
    train_performer,
    turn_rewards,
)
from askgrid.world import AskgridError

VOCAB = build_vocab()
FOLDS = build_folds(
    FoldConfig(train_scenes=3, unseen_scenes=2, n_train=40, n_valid_seen=25, n_valid_unseen=25, master_seed=9)
)


# ==================== rewards ====================


def test_reward_config_defaults_and_promote():
    rc = RewardConfig()
    assert (rc.success, rc.step, rc.question, rc.invalid) == (1.0, -0.01, -0.05, -0.1)
    soft = RewardConfig.promote_asking()
    assert (soft.question, soft.invalid) == (-0.002, -0.01)
    assert (soft.success, soft.step) == (rc.success, rc.step)
    assert RewardConfig.from_json(rc.to_json()) == rc


def test_reward_config_validation():
    with pytest.raises(AskgridError, match="success"):
        RewardConfig(success=0.0)
    with pytest.raises(AskgridError, match="penalty"):
        RewardConfig(question=0.05)


def _record(success, n_steps, turns, expert_len=5):
    asked = [t for t in turns if t.question is not None]
    return EpisodeRecord(
        task_type="heat",
        scene_seed=0,
        task_seed=0,
        success=success,
        n_steps=n_steps,
        n_failed=0,
        n_questions=len(asked),
        n_invalid=sum(1 for t in asked if t.oracle_valid is False),
        expert_len=expert_len,
        end_reason="goal" if success else "stop",
        turns=turns,
    )


def test_episode_reward_exact():
    rec = _record(
        True,
        7,
        [
            QATurn(0, 0, "location:mug", "ans", True),
            QATurn(3, 12, "direction", "ans", False),
        ],
    )
    rc = RewardConfig()
    # 1.0 success - 7*0.01 steps - 2*0.05 questions - 1*0.1 invalid
    assert episode_reward(rec, rc) == pytest.approx(1.0 - 0.07 - 0.10 - 0.10)
    assert episode_reward(_record(False, 3, []), rc) == pytest.approx(-0.03)


def test_turn_rewards_decomposition_pinned():
    rc = RewardConfig()
    rec = _record(
        True,
        10,
        [
            QATurn(2, 0, "location:mug", "ans", True),
            QATurn(5, 13, None, None, None),
            QATurn(8, 12, "direction", "ans", False),
        ],
    )
    rs = turn_rewards(rec, rc)
    # turn 0: question cost + steps 2..4 + the 2 pre-turn steps
    assert rs[0] == pytest.approx(-0.05 - 0.03 - 0.02)
    # turn 1: asked nothing, steps 5..7
    assert rs[1] == pytest.approx(-0.03)
    # turn 2: question + invalid + steps 8..9 + success bonus
    assert rs[2] == pytest.approx(-0.05 - 0.10 - 0.02 + 1.0)
    assert sum(rs) == pytest.approx(episode_reward(rec, rc))


def test_turn_rewards_empty_without_turns():
    assert turn_rewards(_record(False, 4, []), RewardConfig()) == []


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_turn_rewards_sum_matches_episode_reward(data):
    n_steps = data.draw(st.integers(0, 25))
    n_turns = data.draw(st.integers(1, 6))
    indices = sorted(data.draw(st.lists(st.integers(0, n_steps), min_size=n_turns, max_size=n_turns)))
    turns = []
    for i, idx in enumerate(indices):
        if data.draw(st.booleans()):
            valid = data.draw(st.booleans())
            turns.append(QATurn(idx, 0, "location:mug", "ans", valid))
        else:
            turns.append(QATurn(idx, 13, None, None, None))
    success = data.draw(st.booleans())
    rec = _record(success, n_steps, turns)
    rc = RewardConfig()
    assert sum(turn_rewards(rec, rc)) == pytest.approx(episode_reward(rec, rc), rel=1e-12, abs=1e-12)


def test_discounted_returns():
    assert discounted_returns([1.0, 2.0, 3.0], 0.5) == pytest.approx([2.75, 3.5, 3.0])
    assert discounted_returns([], 0.9) == []
    assert discounted_returns([2.0], 0.0) == [2.0]


# ==================== imitation examples ====================


def test_imitation_example_plain_regime():
    task = FOLDS.train[0]
    rng = np.random.default_rng(0)
    ctx, targets = build_imitation_example(task, VOCAB, "none", rng)
    assert ctx.n_steps == len(task.expert) + 1  # one trailing slot for Stop
    assert len(targets) == ctx.n_steps
    assert targets[-1] == STOP_ID
    assert all(t >= 0 for t in targets)
    instruction_len = len(VOCAB.encode(task.instruction.tokens))
    assert ctx.n_text == instruction_len


def test_imitation_example_all_regime_adds_qa_text():
    task = FOLDS.train[0]
    plain, _ = build_imitation_example(task, VOCAB, "none", np.random.default_rng(0))
    full, targets = build_imitation_example(task, VOCAB, "all", np.random.default_rng(0))
    assert full.n_text > plain.n_text
    assert all(a == 0 for a in full.token_avail)  # preseeded text visible from step 0
    assert targets == [t for t in targets]  # same targets either way
    assert full.n_steps == plain.n_steps


def test_imitation_example_recovery_masks_prefix():
    task = FOLDS.train[1]
    ctx, targets = build_imitation_example(task, VOCAB, "none", np.random.default_rng(4), recovery=True)
    n_masked = sum(1 for t in targets if t == -1)
    assert 1 <= n_masked <= 4  # 1-3 navigation moves, possibly one detour verb
    assert all(t == -1 for t in targets[:n_masked])
    assert all(t >= 0 for t in targets[n_masked:])
    assert targets[-1] == STOP_ID
    # regime "none" adds no QA text even for recovery examples
    assert ctx.n_text == len(VOCAB.encode(task.instruction.tokens))


def test_imitation_example_recovery_keeps_preseeded_qa():
    task = FOLDS.train[1]
    rng = np.random.default_rng(4)
    plain, _ = build_imitation_example(task, VOCAB, "none", rng, recovery=True)
    full, _ = build_imitation_example(task, VOCAB, "all", rng, recovery=True)
    assert full.n_text > plain.n_text  # stale-but-present answers stay in context


def test_imitation_example_rejects_bad_inputs():
    with pytest.raises(AskgridError, match="qa regime"):
        build_imitation_example(FOLDS.train[0], VOCAB, "sometimes", np.random.default_rng(0))
    bare = sample_task(generate_scene(2), TaskType.HEAT, np.random.default_rng(0))
    with pytest.raises(AskgridError, match="no instruction"):
        build_imitation_example(bare, VOCAB, "none", np.random.default_rng(0))


def test_mix_regime_produces_varied_examples():
    task = FOLDS.train[2]
    rng = np.random.default_rng(0)
    text_lens = {build_imitation_example(task, VOCAB, "mix", rng)[0].n_text for _ in range(12)}
    assert len(text_lens) > 1  # some draws add QA text, some do not


# ==================== performer training ====================


def test_train_performer_memorizes_small_set():
    tasks = FOLDS.train[:6]
    config = ImitationConfig(
        epochs=60, batch_size=8, qa_regime="none", recovery_frac=0.0, far_oversample=0.0,
        heldout_frac=0.0, seed=0,
    )
    model, report = train_performer(tasks, VOCAB, config)
    assert not report.diverged
    assert report.n_examples == 6
    assert report.epoch_losses[-1] < report.epoch_losses[0]
    rng = np.random.default_rng(0)
    examples = [build_imitation_example(t, VOCAB, "none", rng) for t in tasks]
    assert teacher_forced_accuracy(model, examples) > 0.9


def test_train_performer_requires_tasks():
    with pytest.raises(AskgridError, match="no tasks"):
        train_performer([], VOCAB, ImitationConfig())


def test_teacher_forced_accuracy_requires_examples():
    model = PerformerModel(PerformerConfig(vocab_size=VOCAB.size, obs_dim=OBS_DIM))
    with pytest.raises(AskgridError, match="no examples"):
        teacher_forced_accuracy(model, [])


# ==================== questioner pretraining ====================


def test_human_profile_validation():
    HumanProfile()  # defaults are legal
    with pytest.raises(AskgridError, match="ask_rate"):
        HumanProfile(ask_rate=1.2)
    with pytest.raises(AskgridError, match="distribution"):
        HumanProfile(type_mix=(0.5, 0.4, 0.2))


def test_collect_decision_states_includes_step_zero():
    rng = np.random.default_rng(0)
    states = collect_decision_states(FOLDS.train[:5], VOCAB, rng, per_task=2)
    assert len(states) == 10
    assert all(s.features.shape == (qstate_dim(VOCAB),) for s in states)


def test_pretrain_questioner_matches_profile():
    profile = HumanProfile()
    model, summary = pretrain_questioner(
        FOLDS.train, VOCAB, profile, QPretrainConfig(epochs=15, states_per_task=6, seed=0)
    )
    assert summary["ask_rate"] == pytest.approx(profile.ask_rate, abs=0.08)
    for got, want in zip(summary["type_mix"], profile.type_mix):
        assert got == pytest.approx(want, abs=0.08)
    assert summary["epoch_losses"][-1] < summary["epoch_losses"][0]


def test_policy_summary_requires_states():
    model = QuestionerModel(QuestionerConfig(input_dim=8))
    with pytest.raises(AskgridError, match="no states"):
        policy_summary(model, [])


# ==================== actor-critic ====================


def _bandit_batch(rng, n=6, dim=10):
    feats = rng.normal(size=(n, dim))
    masks = np.zeros((n, 14), dtype=bool)
    masks[:, [0, 1, 6, 7, 12, 13]] = True  # two nouns askable
    slots = np.array([0, 1, 6, 7, 12, 13])[rng.integers(6, size=n)]
    returns = rng.normal(size=n)
    return feats, masks, slots, returns


def test_a2c_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    model = QuestionerModel(QuestionerConfig(input_dim=10, hidden=16), rng=rng)
    for name in model.params:  # perturb zero-init tensors so every path carries gradient
        model.params[name] = model.params[name] + rng.normal(scale=0.1, size=model.params[name].shape)
    feats, masks, slots, returns = _bandit_batch(rng)
    _, values, _ = model.forward(feats)
    advantages = returns - values  # frozen: constants wrt the parameters

    def loss_and_grads():
        loss, grads, _ = a2c_loss_and_grads(model, feats, masks, slots, returns, advantages, 0.01, 0.5)
        return loss, grads

    worst = gradient_check(loss_and_grads, model.params, np.random.default_rng(1), n_checks=60)
    assert worst < 1e-3


def test_a2c_concentrates_on_rewarded_slot():
    rng = np.random.default_rng(0)
    model = QuestionerModel(QuestionerConfig(input_dim=4, hidden=16), rng=rng)
    feats = np.ones((16, 4))
    masks = np.zeros((16, 14), dtype=bool)
    masks[:, [0, 6, 12, 13]] = True
    opt = nn.Adam(model.params, lr=3e-3)
    for _ in range(150):
        logits, values, _ = model.forward(feats)
        probs = masked_softmax(logits, masks)
        slots = np.array([rng.choice(14, p=p) for p in probs])
        returns = (slots == 6).astype(np.float64)  # only appearance on noun 0 pays
        advantages = returns - values
        _, grads, _ = a2c_loss_and_grads(model, feats, masks, slots, returns, advantages, 0.01, 0.5)
        nn.clip_gradients(grads, 5.0)
        opt.step(model.params, grads)
    logits, values, _ = model.forward(feats[:1])
    probs = masked_softmax(logits, masks[:1])[0]
    assert probs[6] > 0.8
    assert values[0] == pytest.approx(1.0, abs=0.15)


# ==================== RL fine-tuning ====================


def _fresh_models():
    performer = PerformerModel(
        PerformerConfig(vocab_size=VOCAB.size, obs_dim=OBS_DIM), rng=np.random.default_rng(0)
    )
    questioner = QuestionerModel(
        QuestionerConfig(input_dim=qstate_dim(VOCAB)), rng=np.random.default_rng(1)
    )
    return performer, questioner


def test_rl_finetune_keeps_performer_frozen():
    performer, questioner = _fresh_models()
    digest = params_digest(performer.params)
    config = RLConfig(iterations=3, episodes_per_iter=6, seed=0, step_limit=40)
    report = rl_finetune(questioner, performer, FOLDS.train[:8], VOCAB, config)
    assert params_digest(performer.params) == digest
    assert report.performer_digest == digest
    assert len(report.iterations) == 3
    for row in report.iterations:
        assert {"mean_reward", "mean_questions", "success_rate", "loss", "n_turns"} <= set(row)


def test_rl_finetune_is_deterministic():
    rewards = []
    for _ in range(2):
        performer, questioner = _fresh_models()
        config = RLConfig(iterations=3, episodes_per_iter=6, seed=7, step_limit=40)
        report = rl_finetune(questioner, performer, FOLDS.train[:8], VOCAB, config)
        rewards.append([row["mean_reward"] for row in report.iterations])
    assert rewards[0] == rewards[1]


def test_rl_finetune_full_rollout_path():
    performer, questioner = _fresh_models()
    config = RLConfig(
        iterations=2, episodes_per_iter=4, seed=0, step_limit=30,
        timing=TimingSpec("fixed", interval=5),
    )
    report = rl_finetune(questioner, performer, FOLDS.train[:6], VOCAB, config)
    assert len(report.iterations) == 2
    assert all(row["n_turns"] >= row["mean_questions"] for row in report.iterations)


def test_rl_finetune_requires_instructions():
    performer, questioner = _fresh_models()
    bare = sample_task(generate_scene(2), TaskType.HEAT, np.random.default_rng(0))
    with pytest.raises(AskgridError, match="no instruction"):
        rl_finetune(questioner, performer, [bare], VOCAB, RLConfig(iterations=1))
    with pytest.raises(AskgridError, match="no tasks"):
        rl_finetune(questioner, performer, [], VOCAB, RLConfig(iterations=1))
