"""Small tanh MLPs with hand-written backprop, Adam, and the Gaussian /
safety-masked categorical distribution heads."""

import math
from dataclasses import dataclass

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


class ShapeError(ValueError):
    pass


class InvalidMask(ValueError):
    pass


class Mlp:
    """input -> tanh hidden layers -> linear output."""

    def __init__(self, sizes, rng, out_scale=1.0):
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = (out_scale if i == len(sizes) - 2 else 1.0) / math.sqrt(d_in)
            self.weights.append(rng.normal(0.0, scale, size=(d_in, d_out)))
            self.biases.append(np.zeros(d_out))

    def forward(self, x):
        out, _ = self.forward_cache(x)
        return out

    def forward_cache(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ShapeError(f"expected input dim {self.sizes[0]}, got {x.shape[1]}")
        acts = [x]
        h = x
        n_layers = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            h = z if i == n_layers - 1 else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(self, acts, dout):
        """Gradients of sum(dout * output) wrt parameters and input."""
        dout = np.atleast_2d(np.asarray(dout, dtype=float))
        dW = [None] * len(self.weights)
        db = [None] * len(self.biases)
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            dW[i] = acts[i].T @ delta
            db[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)  # tanh'
        return dW, db, delta

    # flat-vector plumbing (checkpoints, finite-difference checks)
    def param_arrays(self):
        return self.weights + self.biases

    def get_flat(self):
        return np.concatenate([a.ravel() for a in self.param_arrays()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        total = sum(a.size for a in self.param_arrays())
        if flat.size != total:
            raise ShapeError(f"flat vector size {flat.size}, expected {total}")
        i = 0
        for a in self.param_arrays():
            a[...] = flat[i:i + a.size].reshape(a.shape)
            i += a.size


class Adam:
    def __init__(self, arrays, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# ---------------------------------------------------------------------------
# Gaussian head (state-independent log std)


def clamp_log_std(log_std):
    return np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_logprob(mean, log_std, action):
    ls = clamp_log_std(log_std)
    z = (action - mean) / np.exp(ls)
    return -0.5 * z * z - ls - 0.5 * LOG_2PI


def gaussian_dlogprob(mean, log_std, action):
    """d logprob wrt (mean, log_std); log_std gradient is 0 where clamped."""
    ls = clamp_log_std(log_std)
    inv_var = np.exp(-2.0 * ls)
    d_mean = (action - mean) * inv_var
    d_ls = (action - mean) ** 2 * inv_var - 1.0
    active = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
    return d_mean, d_ls * active


def gaussian_sample(mean, log_std, rng):
    return mean + np.exp(clamp_log_std(log_std)) * rng.standard_normal(np.shape(mean))


def gaussian_entropy(log_std):
    return float(np.sum(clamp_log_std(log_std) + 0.5 * (1.0 + LOG_2PI)))


# ---------------------------------------------------------------------------
# safety-masked categorical


def masked_probs(logits, mask):
    """pi(k) = mask_k * softmax(logits)_k, renormalized; batched or single."""
    logits = np.asarray(logits, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if np.any(np.all(mask <= 0.0, axis=-1)):
        raise InvalidMask("no option with nonzero safety probability")
    with np.errstate(divide="ignore"):
        w = logits + np.log(mask)
    w = w - w.max(axis=-1, keepdims=True)
    e = np.exp(w)
    return e / e.sum(axis=-1, keepdims=True)


def masked_logprob(logits, mask, k):
    q = masked_probs(logits, mask)
    if q.ndim == 1:
        return float(np.log(q[k])) if q[k] > 0.0 else -np.inf
    pk = q[np.arange(q.shape[0]), k]
    with np.errstate(divide="ignore"):
        return np.log(pk)


def masked_dlogprob(logits, mask, k):
    """d logprob(k) / d logits = onehot_k - probs (mask held constant)."""
    q = masked_probs(logits, mask)
    g = -q
    if q.ndim == 1:
        g[k] += 1.0
    else:
        g[np.arange(q.shape[0]), k] += 1.0
    return g


def masked_sample(logits, mask, rng):
    q = masked_probs(logits, mask)
    return int(rng.choice(len(q), p=q))


def masked_entropy(logits, mask):
    q = masked_probs(logits, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(q > 0.0, q * np.log(q), 0.0)
    return -t.sum(axis=-1)


def masked_dentropy(logits, mask):
    q = masked_probs(logits, mask)
    with np.errstate(divide="ignore", invalid="ignore"):
        logq = np.where(q > 0.0, np.log(q), 0.0)
    h = masked_entropy(logits, mask)
    if q.ndim == 1:
        return -q * (logq + h)
    return -q * (logq + h[:, None])
