"""Turning episodes into arrays: vocabulary, observation features, contexts.

The performer consumes a growing context of two kinds of entries: text tokens
(instruction words and QA exchanges, each tagged with the step at which it
became available) and step slots (one per physical action taken, carrying the
observation features and the previous action id). This module owns the
deterministic vocabulary, the fixed-width observation feature layout, and the
batching logic that pads contexts and builds the availability attention mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from askgrid.dialogue import load_templates, tokenize
from askgrid.world import (
    CLASS_CATALOG,
    COLORS,
    MATERIALS,
    PHYSICAL_ACTIONS,
    STATE_FLAGS,
    VIEW_DEPTH,
    AskgridError,
    Heading,
    Observation,
    Pitch,
)

# ==================== actions ====================

# The action head is a fixed 13-way categorical: the physical verbs plus Stop.
ACTION_NAMES: tuple[str, ...] = PHYSICAL_ACTIONS + ("Stop",)
ACTION_TO_ID: dict[str, int] = {name: i for i, name in enumerate(ACTION_NAMES)}
STOP_ID: int = ACTION_TO_ID["Stop"]
# Sentinel "previous action" for the first step slot of an episode.
START_ID: int = len(ACTION_NAMES)
N_ACTIONS: int = len(ACTION_NAMES)


# ==================== vocabulary ====================

PAD_TOKEN = "<pad>"
PAD_ID = 0

_DIRECTION_WORDS = ("left", "right", "front", "behind", "around")
_PREPOSITIONS = ("in", "on")


def _template_strings(node) -> list[str]:
    if isinstance(node, str):
        return [node]
    if isinstance(node, list):
        return [s for item in node for s in _template_strings(item)]
    if isinstance(node, dict):
        return [s for value in node.values() for s in _template_strings(value)]
    return []


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def encode(self, tokens) -> list[int]:
        try:
            return [self.token_to_id[t] for t in tokens]
        except KeyError as exc:
            raise AskgridError(f"token not in vocabulary: {exc.args[0]!r}") from None

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id


@lru_cache(maxsize=1)
def build_vocab() -> Vocab:
    """Every surface token the templates and catalog can produce, sorted."""
    words: set[str] = set()
    for text in _template_strings(load_templates()):
        for tok in tokenize(text):
            if "{" not in tok:
                words.add(tok)
    words.update(CLASS_CATALOG)
    words.update(COLORS)
    words.update(MATERIALS)
    words.update(_DIRECTION_WORDS)
    words.update(_PREPOSITIONS)
    tokens = (PAD_TOKEN, *sorted(words))
    return Vocab(tokens=tokens, token_to_id={t: i for i, t in enumerate(tokens)})


# ==================== observation features ====================

OBJECT_CLASSES: tuple[str, ...] = tuple(sorted(CLASS_CATALOG))
_CLASS_INDEX = {name: i for i, name in enumerate(OBJECT_CLASSES)}
_DIR_INDEX = {"left": 0, "front": 1, "right": 2}
_PITCH_INDEX = {Pitch.DOWN: 0, Pitch.LEVEL: 1, Pitch.UP: 2}
_HEADING_INDEX = {Heading.NORTH: 0, Heading.EAST: 1, Heading.SOUTH: 2, Heading.WEST: 3}

# Per-class block: visible, 3 direction flags, proximity, 6 state flags.
_PER_CLASS = 5 + len(STATE_FLAGS)
OBS_DIM: int = len(OBJECT_CLASSES) * _PER_CLASS + 3 + 4 + (len(OBJECT_CLASSES) + 1)


def encode_observation(obs: Observation) -> np.ndarray:
    """Fixed-width float64 features for one egocentric observation."""
    feats = np.zeros(OBS_DIM, dtype=np.float64)
    seen: set[str] = set()
    for item in obs.visible:
        if item.object_class in seen:  # nearest instance wins
            continue
        seen.add(item.object_class)
        base = _CLASS_INDEX[item.object_class] * _PER_CLASS
        feats[base] = 1.0
        feats[base + 1 + _DIR_INDEX[item.relative_direction]] = 1.0
        feats[base + 4] = (VIEW_DEPTH + 1 - item.distance) / VIEW_DEPTH
        for k, (_, value) in enumerate(item.flags):
            if value:
                feats[base + 5 + k] = 1.0
    pitch_base = len(OBJECT_CLASSES) * _PER_CLASS
    feats[pitch_base + _PITCH_INDEX[obs.pitch]] = 1.0
    feats[pitch_base + 3 + _HEADING_INDEX[obs.heading]] = 1.0
    held_base = pitch_base + 3 + 4
    if obs.held_class is None:
        feats[held_base] = 1.0
    else:
        feats[held_base + 1 + _CLASS_INDEX[obs.held_class]] = 1.0
    return feats


# ==================== episode context ====================


@dataclass
class ContextEncoding:
    """A performer context under construction: text entries plus step slots.

    Text tokens carry the step index at which they became available (0 for
    the instruction, the asking step for QA exchanges). Step slot ``s`` may
    attend text available at or before ``s`` and step slots up to ``s``.
    """

    vocab: Vocab
    token_ids: list[int] = field(default_factory=list)
    token_avail: list[int] = field(default_factory=list)
    obs_feats: list[np.ndarray] = field(default_factory=list)
    prev_actions: list[int] = field(default_factory=list)

    def add_text(self, tokens, available_from: int) -> None:
        ids = self.vocab.encode(tokens)
        self.token_ids.extend(ids)
        self.token_avail.extend([available_from] * len(ids))

    def add_step(self, obs: Observation, prev_action_id: int) -> None:
        self.obs_feats.append(encode_observation(obs))
        self.prev_actions.append(prev_action_id)

    @property
    def n_text(self) -> int:
        return len(self.token_ids)

    @property
    def n_steps(self) -> int:
        return len(self.obs_feats)


@dataclass
class PerformerBatch:
    """Padded arrays for a batch of contexts, plus the attention mask."""

    tok_ids: np.ndarray  # (B, Lt) int64
    tok_mask: np.ndarray  # (B, Lt) float64
    obs: np.ndarray  # (B, Ls, F) float64
    prev_act: np.ndarray  # (B, Ls) int64
    step_mask: np.ndarray  # (B, Ls) float64
    attn_mask: np.ndarray  # (B, 1, L, L) float64 additive
    last_step: np.ndarray  # (B,) int64, index of the newest real step slot
    targets: np.ndarray | None = None  # (B, Ls) int64
    target_valid: np.ndarray | None = None  # (B, Ls) bool

    @property
    def n_text(self) -> int:
        return self.tok_ids.shape[1]


_NEG = -1e9


def _kept_window(ctx: ContextEncoding, cap: int) -> tuple[int, int]:
    """(text_start, step_start) after enforcing the context cap.

    Oldest step slots are dropped first; text is trimmed from the front only
    if it alone would exceed the cap (always keeping the newest step slot).
    """
    keep_steps = min(ctx.n_steps, max(1, cap - ctx.n_text)) if ctx.n_steps else 0
    keep_text = min(ctx.n_text, cap - keep_steps)
    return ctx.n_text - keep_text, ctx.n_steps - keep_steps


def build_performer_batch(
    contexts: list[ContextEncoding],
    targets: list[list[int]] | None = None,
    cap: int = 256,
) -> PerformerBatch:
    if not contexts:
        raise AskgridError("cannot batch zero contexts")
    if any(ctx.n_steps == 0 for ctx in contexts):
        raise AskgridError("every context needs at least one step slot")
    windows = [_kept_window(ctx, cap) for ctx in contexts]
    b = len(contexts)
    lt = max(ctx.n_text - w[0] for ctx, w in zip(contexts, windows))
    ls = max(ctx.n_steps - w[1] for ctx, w in zip(contexts, windows))
    feat_dim = contexts[0].obs_feats[0].shape[0]

    tok_ids = np.zeros((b, lt), dtype=np.int64)
    tok_mask = np.zeros((b, lt), dtype=np.float64)
    obs = np.zeros((b, ls, feat_dim), dtype=np.float64)
    prev_act = np.zeros((b, ls), dtype=np.int64)
    step_mask = np.zeros((b, ls), dtype=np.float64)
    attn = np.full((b, 1, lt + ls, lt + ls), _NEG, dtype=np.float64)
    last_step = np.zeros(b, dtype=np.int64)
    tgt = np.zeros((b, ls), dtype=np.int64) if targets is not None else None
    tgt_valid = np.zeros((b, ls), dtype=bool) if targets is not None else None

    for i, (ctx, (t0, s0)) in enumerate(zip(contexts, windows)):
        nt = ctx.n_text - t0
        ns = ctx.n_steps - s0
        tok_ids[i, :nt] = ctx.token_ids[t0:]
        tok_mask[i, :nt] = 1.0
        obs[i, :ns] = np.stack(ctx.obs_feats[s0:]) if ns else 0.0
        prev_act[i, :ns] = ctx.prev_actions[s0:]
        step_mask[i, :ns] = 1.0
        last_step[i] = ns - 1
        if targets is not None:
            if len(targets[i]) != ctx.n_steps:
                raise AskgridError("targets must align with step slots")
            row = np.asarray(targets[i][s0:], dtype=np.int64)
            # A -1 target marks a context-only slot excluded from the loss.
            tgt[i, :ns] = np.maximum(row, 0)
            tgt_valid[i, :ns] = row >= 0

        avail = np.array(ctx.token_avail[t0:], dtype=np.int64)
        # Global step indices of the kept slots drive availability checks.
        sidx = np.arange(s0, ctx.n_steps, dtype=np.int64)
        allowed = np.zeros((lt + ls, lt + ls), dtype=bool)
        if nt:
            allowed[:nt, :nt] = avail[None, :] <= avail[:, None]
            if ns:
                allowed[lt : lt + ns, :nt] = avail[None, :] <= sidx[:, None]
        if ns:
            allowed[lt : lt + ns, lt : lt + ns] = sidx[None, :] <= sidx[:, None]
        np.fill_diagonal(allowed, True)  # pad rows self-attend to stay finite
        attn[i, 0][allowed] = 0.0

    return PerformerBatch(
        tok_ids=tok_ids,
        tok_mask=tok_mask,
        obs=obs,
        prev_act=prev_act,
        step_mask=step_mask,
        attn_mask=attn,
        last_step=last_step,
        targets=tgt,
        target_valid=tgt_valid,
    )
