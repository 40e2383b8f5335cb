"""Dense numeric substrate: activations, losses, optimizer steps, seeded
initialization, and a finite-difference gradient verifier.

Matrices are plain 2-D numpy arrays (row-major). Training defaults to
float32; verification (gradient checks) requires float64 because central
differences drown in float32 rounding noise.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import NumericError, ShapeError, UsageError

LOG_EPS = 1e-12  # clamp under the log so a confident-wrong model stays finite
DEFAULT_CLIP_NORM = 5.0


class Rng:
    """Deterministic random source: PCG64 seeded with a 64-bit integer.

    The same seed yields the same draw sequence on every platform numpy
    supports. Stage-local streams come from derive(), which hashes a name
    into the seed so stages cannot steal each other's draws.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, name: str) -> "Rng":
        digest = hashlib.sha256(f"{self.seed}:{name}".encode("utf-8")).digest()
        return Rng(int.from_bytes(digest[:8], "little"))

    def uniform(self, low, high, shape, dtype=np.float32):
        return self._gen.uniform(low, high, shape).astype(dtype)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def geometric(self, p: float) -> int:
        return int(self._gen.geometric(p))

    def choice_index(self, n: int) -> int:
        return int(self._gen.integers(0, n))

    def hex_id(self, nbytes: int = 16) -> str:
        return self._gen.bytes(nbytes).hex()


def init_uniform(rng: Rng, rows: int, cols: int, fan_in: int | None = None,
                 dtype=np.float32) -> np.ndarray:
    """Weight matrix drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if fan_in is None:
        fan_in = rows
    limit = 1.0 / np.sqrt(float(fan_in))
    return rng.uniform(-limit, limit, (rows, cols), dtype=dtype)


def _require_2d(name: str, a: np.ndarray) -> None:
    if not isinstance(a, np.ndarray) or a.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array, got "
                         f"{getattr(a, 'shape', type(a))}")


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """x @ w with an optional broadcast bias row."""
    _require_2d("x", x)
    _require_2d("w", w)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"affine: inner dimensions disagree, x is {x.shape} "
                         f"and w is {w.shape}")
    out = x @ w
    if b is not None:
        b = np.asarray(b)
        if b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ShapeError(f"affine: bias shape {b.shape} does not match "
                             f"output width {w.shape[1]}")
        out = out + b
    return out


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Element-wise logistic function, stable for large |x|."""
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x: np.ndarray) -> np.ndarray:
    """Element-wise hyperbolic tangent."""
    return np.tanh(np.asarray(x))


def softmax(x) -> np.ndarray:
    """Probability vector from a 1-D score vector, max-subtracted for
    stability."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise UsageError("softmax expects a non-empty 1-D vector")
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def row_softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis of a 2-D array, in the array's dtype."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def row_log_softmax64(x: np.ndarray) -> np.ndarray:
    """Float64 log-softmax over the last axis; used for loss evaluation so
    perplexity anchors hold to 1e-6."""
    z = np.asarray(x, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(pred, target_index: int) -> float:
    """-ln(pred[target]) with the probability clamped below at LOG_EPS."""
    p = np.asarray(pred, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise UsageError("cross_entropy expects a non-empty probability vector")
    if not 0 <= int(target_index) < p.size:
        raise UsageError(f"cross_entropy: target index {target_index} out of "
                         f"range for {p.size} classes")
    return float(-np.log(max(float(p[int(target_index)]), LOG_EPS)))


def global_grad_norm(grads) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def sgd_step(params, grads, lr: float, clip_norm: float | None = None):
    """In-place p <- p - lr*g with optional global gradient-norm clipping.

    Returns the (mutated) parameter list.
    """
    if len(params) != len(grads):
        raise ShapeError(f"sgd_step: {len(params)} params vs {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"sgd_step: param shape {p.shape} vs grad shape "
                             f"{g.shape}")
    scale = 1.0
    if clip_norm is not None:
        norm = global_grad_norm(grads)
        if norm > clip_norm:
            scale = clip_norm / norm
    for p, g in zip(params, grads):
        p -= (lr * scale) * g.astype(p.dtype, copy=False)
    return params


class SgdOptimizer:
    def __init__(self, lr: float, clip_norm: float | None = DEFAULT_CLIP_NORM):
        self.lr = lr
        self.clip_norm = clip_norm

    def step(self, params, grads):
        sgd_step(params, grads, self.lr, self.clip_norm)


class AdamOptimizer:
    """Adaptive-moment optimizer, available behind the `optimizer` config key.

    Applies the same global-norm clip as SGD before the moment update.
    """

    def __init__(self, lr: float, clip_norm: float | None = DEFAULT_CLIP_NORM,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.clip_norm = clip_norm
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = None
        self._v = None
        self._t = 0

    def step(self, params, grads):
        if len(params) != len(grads):
            raise ShapeError(f"adam: {len(params)} params vs {len(grads)} grads")
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        scale = 1.0
        if self.clip_norm is not None:
            norm = global_grad_norm(grads)
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self._t
        bias2 = 1.0 - b2 ** self._t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            if p.shape != g.shape:
                raise ShapeError(f"adam: param shape {p.shape} vs grad shape "
                                 f"{g.shape}")
            gs = (scale * g).astype(p.dtype, copy=False)
            m *= b1
            m += (1 - b1) * gs
            v *= b2
            v += (1 - b2) * gs * gs
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def make_optimizer(name: str, lr: float,
                   clip_norm: float | None = DEFAULT_CLIP_NORM):
    if name == "sgd":
        return SgdOptimizer(lr, clip_norm)
    if name == "adam":
        return AdamOptimizer(lr, clip_norm)
    raise UsageError(f"unknown optimizer {name!r} (expected sgd or adam)")


def gradient_check(loss_and_grads, params, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    loss_and_grads() -> (loss, grads) evaluates the loss at the current
    parameter values and its analytic gradients, in the same order as
    `params`, which it must read through (the check perturbs them in place).
    Only meaningful in float64: float32 params are rejected.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise UsageError(f"gradient_check: epsilon {epsilon} outside [1e-6, 1e-3]")
    for p in params:
        if p.dtype != np.float64:
            raise UsageError("gradient_check requires float64 parameters, got "
                             f"{p.dtype}")
    loss0, grads = loss_and_grads()
    if not np.isfinite(loss0):
        raise NumericError(f"gradient_check: non-finite loss {loss0}")
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]
    if len(grads) != len(params):
        raise ShapeError(f"gradient_check: {len(params)} params vs "
                         f"{len(grads)} grads")
    max_err = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + epsilon
            loss_plus, _ = loss_and_grads()
            flat_p[i] = orig - epsilon
            loss_minus, _ = loss_and_grads()
            flat_p[i] = orig
            if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
                raise NumericError("gradient_check: non-finite loss during "
                                   "perturbation")
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = flat_g[i]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if err > max_err:
                max_err = err
    return max_err
