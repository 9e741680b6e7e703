"""Learned components: shared numeric primitives, encodings, and both policies."""

from askgrid.agent.encoding import (
    ACTION_NAMES,
    ACTION_TO_ID,
    N_ACTIONS,
    OBS_DIM,
    PAD_ID,
    START_ID,
    STOP_ID,
    ContextEncoding,
    PerformerBatch,
    Vocab,
    build_performer_batch,
    build_vocab,
    encode_observation,
)
from askgrid.agent.performer import ActionDistribution, PerformerConfig, PerformerModel, performer_step
from askgrid.agent.questioner import (
    CONFUSION_EPS,
    DIRECTION_SLOT,
    MAX_NOUN_SLOTS,
    N_QUESTION_SLOTS,
    NO_QUESTION_SLOT,
    QState,
    QuestionDistribution,
    QuestionerConfig,
    QuestionerModel,
    build_qstate,
    is_confused,
    masked_softmax,
    qstate_dim,
    question_mask,
    question_to_slot,
    select_question,
    slot_to_question,
)

__all__ = [
    "ACTION_NAMES",
    "ACTION_TO_ID",
    "N_ACTIONS",
    "OBS_DIM",
    "PAD_ID",
    "START_ID",
    "STOP_ID",
    "ContextEncoding",
    "PerformerBatch",
    "Vocab",
    "build_performer_batch",
    "build_vocab",
    "encode_observation",
    "ActionDistribution",
    "PerformerConfig",
    "PerformerModel",
    "performer_step",
    "CONFUSION_EPS",
    "DIRECTION_SLOT",
    "MAX_NOUN_SLOTS",
    "N_QUESTION_SLOTS",
    "NO_QUESTION_SLOT",
    "QState",
    "QuestionDistribution",
    "QuestionerConfig",
    "QuestionerModel",
    "build_qstate",
    "is_confused",
    "masked_softmax",
    "qstate_dim",
    "question_mask",
    "question_to_slot",
    "select_question",
    "slot_to_question",
]
