"""The instruction-following policy: a small pre-LN transformer over contexts.

Text tokens and step slots share one residual stream; attention is restricted
by the availability mask built in encoding.py. Logits are read off the step
slots through a 13-way action head. Forward and backward are written by hand
over the primitives in nn.py so the analytic gradients can be checked against
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from askgrid.agent import nn
from askgrid.agent.encoding import (
    N_ACTIONS,
    START_ID,
    ContextEncoding,
    PerformerBatch,
    build_performer_batch,
)
from askgrid.world import AskgridError


@dataclass(frozen=True)
class PerformerConfig:
    vocab_size: int
    obs_dim: int
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 128
    context_cap: int = 256
    n_actions: int = N_ACTIONS

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise AskgridError("d_model must divide evenly across heads")

    def to_json(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "obs_dim": self.obs_dim,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "d_ff": self.d_ff,
            "context_cap": self.context_cap,
            "n_actions": self.n_actions,
        }

    @staticmethod
    def from_json(data: dict) -> "PerformerConfig":
        return PerformerConfig(**data)


@dataclass(frozen=True)
class ActionDistribution:
    """Probabilities over the 13 actions for one decision point."""

    probs: np.ndarray

    def argmax(self) -> int:
        return int(np.argmax(self.probs))  # ties resolve to the lowest id

    def top_two_gap(self) -> float:
        top = np.sort(self.probs)[::-1]
        return float(top[0] - top[1])


class PerformerModel:
    """Parameter container plus hand-written forward/backward."""

    def __init__(self, config: PerformerConfig, rng: np.random.Generator | None = None):
        self.config = config
        d, ff = config.d_model, config.d_ff
        cap = config.context_cap

        def w(shape):
            return nn.normal_init(rng, shape) if rng is not None else nn.zeros(shape)

        p: nn.Params = {
            "tok_emb": w((config.vocab_size, d)),
            "text_pos": w((cap, d)),
            "obs_w": w((config.obs_dim, d)),
            "obs_b": nn.zeros((d,)),
            "act_emb": w((START_ID + 1, d)),
            "step_pos": w((cap, d)),
        }
        for i in range(config.n_layers):
            gain = nn.ones if rng is not None else nn.zeros
            p[f"l{i}.ln1_g"] = gain((d,))
            p[f"l{i}.ln1_b"] = nn.zeros((d,))
            for name in ("wq", "wk", "wv", "wo"):
                p[f"l{i}.{name}"] = w((d, d))
                p[f"l{i}.{name[1]}b"] = nn.zeros((d,))
            p[f"l{i}.ln2_g"] = gain((d,))
            p[f"l{i}.ln2_b"] = nn.zeros((d,))
            p[f"l{i}.w1"] = w((d, ff))
            p[f"l{i}.b1"] = nn.zeros((ff,))
            p[f"l{i}.w2"] = w((ff, d))
            p[f"l{i}.b2"] = nn.zeros((d,))
        p["lnf_g"] = (nn.ones if rng is not None else nn.zeros)((d,))
        p["lnf_b"] = nn.zeros((d,))
        # Zero action head: a fresh model emits the uniform distribution.
        p["out_w"] = nn.zeros((d, config.n_actions))
        p["out_b"] = nn.zeros((config.n_actions,))
        self.params = p

    # ---------- forward ----------

    def _split_heads(self, x: np.ndarray) -> np.ndarray:
        b, l, d = x.shape
        h = self.config.n_heads
        return x.reshape(b, l, h, d // h).transpose(0, 2, 1, 3)

    def _merge_heads(self, x: np.ndarray) -> np.ndarray:
        b, h, l, dh = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, l, h * dh)

    def forward(self, batch: PerformerBatch):
        """Returns (logits over step slots (B, Ls, A), cache for backward)."""
        p = self.params
        b, lt = batch.tok_ids.shape
        ls = batch.obs.shape[1]

        text = (p["tok_emb"][batch.tok_ids] + p["text_pos"][:lt][None]) * batch.tok_mask[..., None]
        obs_proj = batch.obs @ p["obs_w"] + p["obs_b"]
        steps = (obs_proj + p["act_emb"][batch.prev_act] + p["step_pos"][:ls][None]) * batch.step_mask[..., None]
        x = np.concatenate([text, steps], axis=1)

        layers = []
        for i in range(self.config.n_layers):
            x_in = x
            h1, ln1 = nn.layer_norm(x, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = self._split_heads(h1 @ p[f"l{i}.wq"] + p[f"l{i}.qb"])
            k = self._split_heads(h1 @ p[f"l{i}.wk"] + p[f"l{i}.kb"])
            v = self._split_heads(h1 @ p[f"l{i}.wv"] + p[f"l{i}.vb"])
            att, att_cache = nn.attention(q, k, v, batch.attn_mask)
            merged = self._merge_heads(att)
            x = x_in + (merged @ p[f"l{i}.wo"] + p[f"l{i}.ob"])

            x_mid = x
            h2, ln2 = nn.layer_norm(x, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            a1 = h2 @ p[f"l{i}.w1"] + p[f"l{i}.b1"]
            r = nn.relu(a1)
            x = x_mid + (r @ p[f"l{i}.w2"] + p[f"l{i}.b2"])
            layers.append({"x_in": x_in, "h1": h1, "ln1": ln1, "att": att_cache, "merged": merged,
                           "x_mid": x_mid, "h2": h2, "ln2": ln2, "a1": a1, "r": r})

        xf, lnf = nn.layer_norm(x, p["lnf_g"], p["lnf_b"])
        xf_steps = xf[:, lt:, :]
        logits = xf_steps @ p["out_w"] + p["out_b"]
        cache = {"batch": batch, "layers": layers, "lnf": lnf, "xf_steps": xf_steps, "lt": lt}
        return logits, cache

    # ---------- backward ----------

    def backward(self, dlogits: np.ndarray, cache) -> nn.Params:
        p = self.params
        batch: PerformerBatch = cache["batch"]
        lt = cache["lt"]
        b, ls = batch.obs.shape[:2]
        grads: nn.Params = {k: np.zeros_like(v) for k, v in p.items()}

        dxf_steps, grads["out_w"], grads["out_b"] = nn.linear_backward(
            dlogits, cache["xf_steps"], p["out_w"]
        )
        dxf = np.zeros((b, lt + ls, self.config.d_model))
        dxf[:, lt:, :] = dxf_steps
        dx, grads["lnf_g"], grads["lnf_b"] = nn.layer_norm_backward(dxf, cache["lnf"], p["lnf_g"])

        for i in reversed(range(self.config.n_layers)):
            c = cache["layers"][i]
            # FFN block.
            dr, grads[f"l{i}.w2"], grads[f"l{i}.b2"] = nn.linear_backward(dx, c["r"], p[f"l{i}.w2"])
            da1 = nn.relu_backward(dr, c["a1"])
            dh2, grads[f"l{i}.w1"], grads[f"l{i}.b1"] = nn.linear_backward(da1, c["h2"], p[f"l{i}.w1"])
            dmid, grads[f"l{i}.ln2_g"], grads[f"l{i}.ln2_b"] = nn.layer_norm_backward(
                dh2, c["ln2"], p[f"l{i}.ln2_g"]
            )
            dx = dx + dmid
            # Attention block.
            dmerged, grads[f"l{i}.wo"], grads[f"l{i}.ob"] = nn.linear_backward(dx, c["merged"], p[f"l{i}.wo"])
            dq, dk, dv = nn.attention_backward(self._split_heads(dmerged), c["att"])
            dh1 = np.zeros_like(c["h1"])
            for dhead, wname, bname in ((dq, "wq", "qb"), (dk, "wk", "kb"), (dv, "wv", "vb")):
                dpart, grads[f"l{i}.{wname}"], grads[f"l{i}.{bname}"] = nn.linear_backward(
                    self._merge_heads(dhead), c["h1"], p[f"l{i}.{wname}"]
                )
                dh1 += dpart
            din, grads[f"l{i}.ln1_g"], grads[f"l{i}.ln1_b"] = nn.layer_norm_backward(
                dh1, c["ln1"], p[f"l{i}.ln1_g"]
            )
            dx = dx + din

        dtext = dx[:, :lt, :] * batch.tok_mask[..., None]
        dsteps = dx[:, lt:, :] * batch.step_mask[..., None]
        d = self.config.d_model
        np.add.at(grads["tok_emb"], batch.tok_ids.reshape(-1), dtext.reshape(-1, d))
        grads["text_pos"][:lt] = dtext.sum(axis=0)
        grads["obs_w"] = batch.obs.reshape(-1, batch.obs.shape[-1]).T @ dsteps.reshape(-1, d)
        grads["obs_b"] = dsteps.sum(axis=(0, 1))
        np.add.at(grads["act_emb"], batch.prev_act.reshape(-1), dsteps.reshape(-1, d))
        grads["step_pos"][:ls] = dsteps.sum(axis=0)
        return grads

    # ---------- training and inference entry points ----------

    def loss_and_grads(self, batch: PerformerBatch) -> tuple[float, nn.Params, float]:
        """Teacher-forced cross-entropy over valid step slots."""
        if batch.targets is None or batch.target_valid is None:
            raise AskgridError("batch carries no targets")
        logits, cache = self.forward(batch)
        loss, dlogits, acc = nn.cross_entropy(logits, batch.targets, batch.target_valid)
        return float(loss), self.backward(dlogits, cache), acc

    def action_probs(self, batch: PerformerBatch) -> np.ndarray:
        """(B, A) action distribution at each sample's newest step slot."""
        logits, _ = self.forward(batch)
        rows = logits[np.arange(logits.shape[0]), batch.last_step]
        return nn.softmax(rows)


def performer_step(model: PerformerModel, ctx: ContextEncoding) -> ActionDistribution:
    """Action distribution for the newest step slot of one live context."""
    batch = build_performer_batch([ctx], cap=model.config.context_cap)
    return ActionDistribution(probs=model.action_probs(batch)[0])
