"""Minimal float64 neural-net primitives with hand-derived backward passes.

Everything here is a pure function over numpy arrays plus an explicit cache;
models compose these and implement their own backward in terms of them. Kept
deliberately small: linear, layer norm, relu, softmax, scaled dot-product
attention, cross-entropy, gradient clipping, Adam, and a central-difference
checker used to validate the analytic gradients.
"""

from __future__ import annotations

import numpy as np

Params = dict[str, np.ndarray]


# ==================== initialization ====================


def normal_init(rng: np.random.Generator, shape: tuple[int, ...], scale: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, scale, size=shape).astype(np.float64)


def zeros(shape: tuple[int, ...]) -> np.ndarray:
    return np.zeros(shape, dtype=np.float64)


def ones(shape: tuple[int, ...]) -> np.ndarray:
    return np.ones(shape, dtype=np.float64)


# ==================== primitives ====================


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns (dx, dw, db); works for any leading batch shape."""
    din, dout_dim = w.shape
    x2 = x.reshape(-1, din)
    d2 = dout.reshape(-1, dout_dim)
    dw = x2.T @ d2
    db = d2.sum(axis=0)
    dx = dout @ w.T
    return dx, dw, db


_LN_EPS = 1e-5


def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv_std
    return g * xhat + b, (xhat, inv_std)


def layer_norm_backward(dout: np.ndarray, cache, g: np.ndarray):
    xhat, inv_std = cache
    dg = (dout * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dout.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dout * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv_std * (dxhat - m1 - xhat * m2)
    return dx, dg, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0.0)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dout: np.ndarray, probs: np.ndarray, axis: int = -1) -> np.ndarray:
    inner = (dout * probs).sum(axis=axis, keepdims=True)
    return probs * (dout - inner)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray):
    """Scaled dot-product attention over (..., L, dh) with an additive mask."""
    dh = q.shape[-1]
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(dh) + mask
    probs = softmax(scores)
    out = probs @ v
    return out, (q, k, v, probs)


def attention_backward(dout: np.ndarray, cache):
    q, k, v, probs = cache
    dh = q.shape[-1]
    dprobs = dout @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(probs, -1, -2) @ dout
    dscores = softmax_backward(dprobs, probs)
    dq = dscores @ k / np.sqrt(dh)
    dk = np.swapaxes(dscores, -1, -2) @ q / np.sqrt(dh)
    return dq, dk, dv


def cross_entropy(logits: np.ndarray, targets: np.ndarray, valid: np.ndarray):
    """Mean token-level CE over valid positions.

    logits (..., K), targets integer ids of the same leading shape, valid
    boolean mask. Returns (loss, dlogits, accuracy).
    """
    probs = softmax(logits)
    flat_p = probs.reshape(-1, logits.shape[-1])
    flat_t = targets.reshape(-1)
    flat_v = valid.reshape(-1)
    n = max(1, int(flat_v.sum()))
    idx = np.arange(flat_t.shape[0])
    safe_t = np.where(flat_v, flat_t, 0)
    picked = flat_p[idx, safe_t]
    loss = -np.sum(np.log(np.maximum(picked, 1e-300)) * flat_v) / n
    dflat = flat_p.copy()
    dflat[idx, safe_t] -= 1.0
    dflat *= (flat_v / n)[:, None]
    acc = float(np.sum((flat_p.argmax(axis=-1) == safe_t) * flat_v) / n)
    return loss, dflat.reshape(logits.shape), acc


# ==================== optimization ====================


def global_grad_norm(grads: Params) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(grads: Params, max_norm: float) -> float:
    """Scales grads in place to the given global norm; returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class Adam:
    """Plain Adam over a named parameter dict, updating in place."""

    def __init__(self, params: Params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            p = params[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# ==================== gradient checking ====================


def numeric_gradient(loss_fn, params: Params, name: str, flat_index: int, h: float = 1e-5) -> float:
    """Central-difference derivative of loss_fn() w.r.t. one parameter entry."""
    flat = params[name].reshape(-1)
    orig = flat[flat_index]
    flat[flat_index] = orig + h
    up = loss_fn()
    flat[flat_index] = orig - h
    down = loss_fn()
    flat[flat_index] = orig
    return (up - down) / (2.0 * h)


def gradient_check(
    loss_and_grads_fn,
    params: Params,
    rng: np.random.Generator,
    n_checks: int = 100,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and numeric gradients.

    loss_and_grads_fn() must return (loss, grads) for the current params and
    be deterministic. Checks n_checks parameter entries sampled across all
    tensors.
    """
    _, grads = loss_and_grads_fn()
    names = sorted(params.keys())
    sizes = np.array([params[n].size for n in names], dtype=np.float64)
    probs = sizes / sizes.sum()
    worst = 0.0
    for _ in range(n_checks):
        name = names[int(rng.choice(len(names), p=probs))]
        idx = int(rng.integers(params[name].size))
        numeric = numeric_gradient(lambda: loss_and_grads_fn()[0], params, name, idx, h)
        analytic = float(grads[name].reshape(-1)[idx])
        denom = max(abs(numeric) + abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
