"""Frozen-embedding MLP classifier: the supervised baseline and the
backend of the Predict* tools.

Architecture is fixed: one hidden layer of 256 ReLU units feeding a single
sigmoid output. Training minimizes binary cross-entropy with Adam over a
fixed number of epochs; everything is seeded and bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import POSITIVE
from .errors import DegenerateData, DimensionMismatch, DivergedLoss, NonFiniteParams

HIDDEN_UNITS = 256

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# largest/smallest probabilities the sigmoid output may take, keeping the
# contract "strictly inside (0, 1)" even for saturated logits
_P_CEIL = float(np.nextafter(1.0, 0.0))
_P_FLOOR = float(np.nextafter(0.0, 1.0))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass(frozen=True)
class MlpParams:
    """Weights of the 2-layer classifier: hidden (w1, b1) and output (w2, b2)."""

    w1: np.ndarray  # hidden x d
    b1: np.ndarray  # hidden
    w2: np.ndarray  # hidden
    b2: float

    def __post_init__(self):
        hidden, d = self.w1.shape
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden,):
            raise DimensionMismatch(
                f"inconsistent shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, w2 {self.w2.shape}"
            )
        if d < 1 or hidden < 1:
            raise DimensionMismatch("weight matrices must be non-empty")
        for arr in (self.w1, self.b1, self.w2, np.asarray(self.b2)):
            if not np.all(np.isfinite(arr)):
                raise NonFiniteParams("parameters contain non-finite values")

    @property
    def dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1


def _sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def mlp_logit(params: MlpParams, e) -> float:
    vec = np.asarray(e, dtype=np.float64)
    if vec.shape != (params.dim,):
        raise DimensionMismatch(f"input dimension {vec.shape} != probe dimension {params.dim}")
    hidden = np.maximum(params.w1 @ vec + params.b1, 0.0)
    return float(params.w2 @ hidden + params.b2)


def mlp_forward(params: MlpParams, e) -> float:
    """Probability of the positive class, strictly inside (0, 1)."""
    p = _sigmoid(mlp_logit(params, e))
    return min(max(p, _P_FLOOR), _P_CEIL)


def glorot_init(d: int, seed: int, hidden: int = HIDDEN_UNITS) -> MlpParams:
    """Seeded Glorot-uniform weights with zero biases."""
    rng = np.random.default_rng(seed)
    limit1 = math.sqrt(6.0 / (d + hidden))
    limit2 = math.sqrt(6.0 / (hidden + 1))
    w1 = rng.uniform(-limit1, limit1, size=(hidden, d))
    w2 = rng.uniform(-limit2, limit2, size=hidden)
    return MlpParams(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0)


def _softplus(u: np.ndarray) -> np.ndarray:
    return np.log1p(np.exp(-np.abs(u))) + np.maximum(u, 0.0)


def _sigmoid_vec(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _prepare(pairs) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise DegenerateData("no training pairs")
    vectors, labels = zip(*pairs)
    x = np.stack([np.asarray(v, dtype=np.float64) for v in vectors])
    y = np.asarray(labels, dtype=np.int64)
    if not set(np.unique(y)) <= {-1, 1}:
        raise ValueError("labels must be +1 or -1")
    if len(set(y.tolist())) < 2:
        raise DegenerateData("training data contains a single class")
    targets = (y == POSITIVE).astype(np.float64)  # {-1 -> 0, +1 -> 1}
    return x, targets


def _batch_grads(params: MlpParams, x: np.ndarray, t: np.ndarray):
    """Mean BCE loss and gradients over a batch (logit formulation)."""
    z = x @ params.w1.T + params.b1  # batch x hidden
    h = np.maximum(z, 0.0)
    u = h @ params.w2 + params.b2  # batch
    loss = float(np.mean(_softplus(u) - t * u))

    g_u = (_sigmoid_vec(u) - t) / x.shape[0]  # batch
    g_w2 = h.T @ g_u
    g_b2 = float(g_u.sum())
    g_h = np.outer(g_u, params.w2)
    g_z = g_h * (z > 0)
    g_w1 = g_z.T @ x
    g_b1 = g_z.sum(axis=0)
    return loss, (g_w1, g_b1, g_w2, g_b2)


def dataset_loss(params: MlpParams, pairs) -> float:
    """Mean binary cross-entropy of the probe over a labeled set."""
    x, t = _prepare(pairs)
    loss, _ = _batch_grads(params, x, t)
    return loss


def train_mlp(pairs, config: TrainConfig, on_epoch=None) -> MlpParams:
    """Train the classifier on (embedding, label) pairs.

    Runs exactly ``config.epochs`` epochs of Adam on shuffled mini-batches
    (the final partial batch is kept) and returns the final-epoch weights.
    ``on_epoch(epoch, mean_loss)`` is invoked after each epoch when given.
    Deterministic for a fixed config.
    """
    x, t = _prepare(pairs)
    d = x.shape[1]
    params = glorot_init(d, config.seed)
    w1, b1, w2, b2 = params.w1.copy(), params.b1.copy(), params.w2.copy(), params.b2

    m = [np.zeros_like(w1), np.zeros_like(b1), np.zeros_like(w2), 0.0]
    v = [np.zeros_like(w1), np.zeros_like(b1), np.zeros_like(w2), 0.0]
    step = 0
    shuffle_rng = np.random.default_rng(config.seed + 1)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(x.shape[0])
        epoch_losses = []
        for start in range(0, x.shape[0], config.batch_size):
            batch = order[start : start + config.batch_size]
            current = MlpParams(w1=w1, b1=b1, w2=w2, b2=b2)
            loss, grads = _batch_grads(current, x[batch], t[batch])
            if not math.isfinite(loss):
                raise DivergedLoss(f"non-finite loss at epoch {epoch}, step {step}")
            epoch_losses.append(loss)

            step += 1
            bias1 = 1.0 - ADAM_BETA1**step
            bias2 = 1.0 - ADAM_BETA2**step
            updated = []
            for i, (theta, g) in enumerate(zip((w1, b1, w2, b2), grads)):
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * (g * g)
                m_hat = m[i] / bias1
                v_hat = v[i] / bias2
                if i < 3:
                    updated.append(theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS))
                else:
                    updated.append(theta - config.learning_rate * m_hat / (math.sqrt(v_hat) + ADAM_EPS))
            w1, b1, w2, b2 = updated
        if on_epoch is not None:
            on_epoch(epoch, float(np.mean(epoch_losses)))

    return MlpParams(w1=w1, b1=b1, w2=w2, b2=float(b2))


def train_accuracy(params: MlpParams, pairs) -> float:
    x, t = _prepare(pairs)
    probs = np.array([mlp_forward(params, row) for row in x])
    return float(np.mean((probs > 0.5) == (t == 1.0)))


def _flat_views(params: MlpParams):
    """(name, array, flat index count) triples covering every parameter."""
    return [
        ("w1", params.w1, params.w1.size),
        ("b1", params.b1, params.b1.size),
        ("w2", params.w2, params.w2.size),
        ("b2", np.asarray([params.b2]), 1),
    ]


def _perturbed(params: MlpParams, block: str, flat_index: int, delta: float) -> MlpParams:
    w1, b1, w2, b2 = params.w1.copy(), params.b1.copy(), params.w2.copy(), params.b2
    if block == "w1":
        w1.flat[flat_index] += delta
    elif block == "b1":
        b1.flat[flat_index] += delta
    elif block == "w2":
        w2.flat[flat_index] += delta
    else:
        b2 += delta
    return MlpParams(w1=w1, b1=b1, w2=w2, b2=b2)


def _loss_and_pattern(params: MlpParams, x: np.ndarray, t: np.ndarray):
    z = x @ params.w1.T + params.b1
    u = np.maximum(z, 0.0) @ params.w2 + params.b2
    loss = float(np.mean(_softplus(u) - t * u))
    return loss, z > 0


def gradient_check(
    params: MlpParams, e, label: int, h: float = 1e-5, n_samples: int = 60, seed: int = 0
) -> float:
    """Max relative error of analytic vs central-difference BCE gradients.

    A random subset of at least 50 parameters is checked on the single
    example (e, label). Parameters whose +/-h perturbation flips a ReLU
    activation are skipped: the loss is not differentiable there.
    """
    vec = np.asarray(e, dtype=np.float64)
    x = vec[None, :]
    t = np.asarray([1.0 if label == POSITIVE else 0.0])
    _, grads = _batch_grads(params, x, t)
    analytic = {"w1": grads[0], "b1": grads[1], "w2": grads[2], "b2": np.asarray([grads[3]])}

    _, base_pattern = _loss_and_pattern(params, x, t)
    total = params.n_params()
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(total, max(50, n_samples)), replace=False)

    offsets = {}
    cursor = 0
    for name, _, size in _flat_views(params):
        offsets[name] = (cursor, cursor + size)
        cursor += size

    max_rel = 0.0
    for pick in sorted(picks.tolist()):
        block = next(n for n, (lo, hi) in offsets.items() if lo <= pick < hi)
        flat = pick - offsets[block][0]
        plus = _perturbed(params, block, flat, +h)
        minus = _perturbed(params, block, flat, -h)
        loss_plus, pat_plus = _loss_and_pattern(plus, x, t)
        loss_minus, pat_minus = _loss_and_pattern(minus, x, t)
        if not (np.array_equal(pat_plus, base_pattern) and np.array_equal(pat_minus, base_pattern)):
            continue  # perturbation crosses a ReLU kink
        numeric = (loss_plus - loss_minus) / (2.0 * h)
        exact = float(analytic[block].flat[flat])
        scale = max(abs(numeric), abs(exact), 1e-8)
        max_rel = max(max_rel, abs(numeric - exact) / scale)
    return max_rel


# --- serialization ---


def save_params(params: MlpParams, path: Path | str, train_config: TrainConfig | None = None):
    doc = {
        "d": params.dim,
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2,
        "train_config": asdict(train_config) if train_config else None,
    }
    Path(path).write_text(json.dumps(doc))


def load_params(path: Path | str) -> MlpParams:
    doc = json.loads(Path(path).read_text())
    return MlpParams(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        b2=float(doc["b2"]),
    )
