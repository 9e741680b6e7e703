"""When and what to ask: confusion detection plus a small actor-critic.

The questioner sees the instruction (bag of words), the current observation,
progress counters, and the instruction's noun slots. Its action space is one
slot per (question type, noun) pair plus a direction question and an explicit
"ask nothing" slot; slots for missing nouns are masked out. The policy/value
net is a single-hidden-layer MLP with hand-written backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from askgrid.agent import nn
from askgrid.agent.encoding import OBJECT_CLASSES, OBS_DIM, Vocab, encode_observation
from askgrid.agent.performer import ActionDistribution
from askgrid.dialogue import Instruction, Question, QuestionType
from askgrid.world import AskgridError, Observation

# ==================== confusion ====================

CONFUSION_EPS = 0.5


def is_confused(dists: list[ActionDistribution], eps: float = CONFUSION_EPS) -> bool:
    """True when any recent action distribution has a small top-two gap.

    The trigger looks at the smallest gap across the supplied window, so one
    uncertain step inside the window is enough.
    """
    if not dists:
        raise AskgridError("confusion check needs at least one distribution")
    return min(d.top_two_gap() for d in dists) < eps


# ==================== question slots ====================

MAX_NOUN_SLOTS = 6
DIRECTION_SLOT = 2 * MAX_NOUN_SLOTS
NO_QUESTION_SLOT = DIRECTION_SLOT + 1
N_QUESTION_SLOTS = NO_QUESTION_SLOT + 1


def question_mask(nouns: tuple[str, ...]) -> np.ndarray:
    """Boolean validity over the slot layout for this noun list."""
    mask = np.zeros(N_QUESTION_SLOTS, dtype=bool)
    n = min(len(nouns), MAX_NOUN_SLOTS)
    mask[:n] = True
    mask[MAX_NOUN_SLOTS : MAX_NOUN_SLOTS + n] = True
    mask[DIRECTION_SLOT] = True
    mask[NO_QUESTION_SLOT] = True
    return mask


def slot_to_question(slot: int, nouns: tuple[str, ...]) -> Question | None:
    """Maps a policy slot back to a question; None for the ask-nothing slot."""
    if slot == NO_QUESTION_SLOT:
        return None
    if slot == DIRECTION_SLOT:
        return Question(QuestionType.DIRECTION)
    if slot < MAX_NOUN_SLOTS:
        qtype, idx = QuestionType.LOCATION, slot
    else:
        qtype, idx = QuestionType.APPEARANCE, slot - MAX_NOUN_SLOTS
    if idx >= len(nouns):
        raise AskgridError(f"slot {slot} has no noun bound")
    return Question(qtype, nouns[idx])


def question_to_slot(question: Question | None, nouns: tuple[str, ...]) -> int:
    if question is None:
        return NO_QUESTION_SLOT
    if question.qtype is QuestionType.DIRECTION:
        return DIRECTION_SLOT
    idx = nouns.index(question.object_class)
    return idx if question.qtype is QuestionType.LOCATION else MAX_NOUN_SLOTS + idx


# ==================== state featurization ====================

QSTATE_DIM_EXTRA = 2  # progress fraction, questions-asked fraction


def qstate_dim(vocab: Vocab) -> int:
    return vocab.size + OBS_DIM + QSTATE_DIM_EXTRA + MAX_NOUN_SLOTS * len(OBJECT_CLASSES)


@dataclass(frozen=True)
class QState:
    """Featurized questioner input at one decision point."""

    features: np.ndarray
    mask: np.ndarray
    nouns: tuple[str, ...]


def build_qstate(
    vocab: Vocab,
    instruction: Instruction,
    obs: Observation,
    steps_taken: int,
    step_limit: int,
    questions_asked: int,
) -> QState:
    feats = np.zeros(qstate_dim(vocab), dtype=np.float64)
    for tid in vocab.encode(instruction.tokens):
        feats[tid] = 1.0
    base = vocab.size
    feats[base : base + OBS_DIM] = encode_observation(obs)
    base += OBS_DIM
    feats[base] = steps_taken / max(1, step_limit)
    feats[base + 1] = min(questions_asked, 10) / 10.0
    base += QSTATE_DIM_EXTRA
    class_index = {name: i for i, name in enumerate(OBJECT_CLASSES)}
    for i, noun in enumerate(instruction.nouns[:MAX_NOUN_SLOTS]):
        feats[base + i * len(OBJECT_CLASSES) + class_index[noun]] = 1.0
    return QState(features=feats, mask=question_mask(instruction.nouns), nouns=instruction.nouns)


# ==================== model ====================


@dataclass(frozen=True)
class QuestionerConfig:
    input_dim: int
    hidden: int = 64
    n_slots: int = N_QUESTION_SLOTS

    def to_json(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden, "n_slots": self.n_slots}

    @staticmethod
    def from_json(data: dict) -> "QuestionerConfig":
        return QuestionerConfig(**data)


@dataclass(frozen=True)
class QuestionDistribution:
    """Masked policy over question slots plus the critic's value estimate."""

    probs: np.ndarray
    value: float
    nouns: tuple[str, ...]

    def argmax(self) -> int:
        return int(np.argmax(self.probs))

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.probs.shape[0], p=self.probs))


_NEG = -1e9


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return nn.softmax(np.where(mask, logits, _NEG), axis=-1)


class QuestionerModel:
    """Shared tanh trunk with a masked policy head and a value head."""

    def __init__(self, config: QuestionerConfig, rng: np.random.Generator | None = None):
        self.config = config

        def w(shape):
            return nn.normal_init(rng, shape, scale=0.1) if rng is not None else nn.zeros(shape)

        self.params: nn.Params = {
            "w1": w((config.input_dim, config.hidden)),
            "b1": nn.zeros((config.hidden,)),
            "wp": nn.zeros((config.hidden, config.n_slots)),  # uniform initial policy
            "bp": nn.zeros((config.n_slots,)),
            "wv": w((config.hidden, 1)),
            "bv": nn.zeros((1,)),
        }

    def forward(self, feats: np.ndarray):
        """feats (B, D) -> (logits (B, A), values (B,), cache)."""
        p = self.params
        pre = feats @ p["w1"] + p["b1"]
        h = np.tanh(pre)
        logits = h @ p["wp"] + p["bp"]
        values = (h @ p["wv"] + p["bv"])[:, 0]
        return logits, values, (feats, h)

    def backward(self, dlogits: np.ndarray, dvalues: np.ndarray, cache) -> nn.Params:
        feats, h = cache
        p = self.params
        grads: nn.Params = {}
        dh_p, grads["wp"], grads["bp"] = nn.linear_backward(dlogits, h, p["wp"])
        dh_v, grads["wv"], grads["bv"] = nn.linear_backward(dvalues[:, None], h, p["wv"])
        dpre = (dh_p + dh_v) * (1.0 - h * h)
        _, grads["w1"], grads["b1"] = nn.linear_backward(dpre, feats, p["w1"])
        return grads

    def distribution(self, state: QState) -> QuestionDistribution:
        logits, values, _ = self.forward(state.features[None, :])
        probs = masked_softmax(logits, state.mask[None, :])[0]
        return QuestionDistribution(probs=probs, value=float(values[0]), nouns=state.nouns)

    def clone(self) -> "QuestionerModel":
        other = QuestionerModel(self.config)
        other.params = {name: arr.copy() for name, arr in self.params.items()}
        return other


def select_question(
    dist: QuestionDistribution, mode: str = "sample", rng: np.random.Generator | None = None
) -> tuple[int, Question | None]:
    """Picks a slot by the given mode and decodes it to a question."""
    if mode == "argmax":
        slot = dist.argmax()
    elif mode == "sample":
        if rng is None:
            raise AskgridError("sampling needs an rng")
        slot = dist.sample(rng)
    else:
        raise AskgridError(f"unknown selection mode: {mode!r}")
    return slot, slot_to_question(slot, dist.nouns)
