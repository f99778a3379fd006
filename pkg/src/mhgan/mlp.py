"""Small fully connected binary classifier with hand-written backprop.

Used as a learned discriminator: ReLU hidden layers, one sigmoid output,
trained on binary cross-entropy with real points labelled 1 and generated
points labelled 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .mixtures import as_points
from .models import Discriminator, open_unit

__all__ = [
    "MLPNet",
    "TrainConfig",
    "TrainingError",
    "MLPDiscriminator",
    "init_mlp",
    "mlp_logit",
    "mlp_forward",
    "mlp_loss",
    "mlp_gradients",
    "mlp_train",
    "grad_check",
    "net_to_json",
    "net_from_json",
]

log = logging.getLogger(__name__)

_CHUNK = 65536


GRAD_CHECK_FLOOR = 1e-8
TIGHT_CHECK = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass
class MLPNet:
    """Layer weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``."""

    weights: list
    biases: list
    train_loss: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {l}: bad shapes {W.shape}, {b.shape}")
            if l and W.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f"layer {l}: fan-in does not match previous layer")
        if self.weights[-1].shape[1] != 1:
            raise ValueError("output layer must have width 1")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_shapes(self) -> list:
        return [list(W.shape) for W in self.weights]

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self, dtype=None) -> "MLPNet":
        return MLPNet([W.astype(dtype or W.dtype) for W in self.weights],
                      [b.astype(dtype or b.dtype) for b in self.biases],
                      list(self.train_loss))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 128
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dtype: str = "float64"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")


def init_mlp(input_dim: int, hidden=(100, 100, 100, 100),
             rng: np.random.Generator | None = None) -> MLPNet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation."""
    rng = np.random.default_rng() if rng is None else rng
    widths = [input_dim, *hidden, 1]
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return MLPNet(weights, biases)


def _forward(net: MLPNet, x: np.ndarray):
    """Return the output logits plus the per-layer cache for backprop."""
    acts, pre = [x], []
    h = x
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        pre.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        acts.append(h)
    return h[:, 0], (acts, pre)


def mlp_logit(net: MLPNet, x) -> np.ndarray:
    """Output-layer pre-activations, computed in the net's own dtype."""
    pts, _ = as_points(x, net.input_dim)
    pts = pts.astype(net.weights[0].dtype, copy=False)
    out = np.empty(len(pts))
    for i in range(0, len(pts), _CHUNK):
        out[i:i + _CHUNK] = _forward(net, pts[i:i + _CHUNK])[0]
    return out


def mlp_forward(net: MLPNet, x) -> np.ndarray:
    """Probability that each point is real; always strictly inside (0, 1)."""
    return open_unit(expit(mlp_logit(net, x)))


def mlp_loss(net: MLPNet, x, y) -> float:
    """Mean binary cross-entropy, computed from logits."""
    z = mlp_logit(net, x)
    y = np.asarray(y, dtype=float)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def mlp_gradients(net: MLPNet, x, y):
    """Loss and its gradient for every parameter, in :meth:`MLPNet.params`
    order."""
    x, _ = as_points(x, net.input_dim)
    return _loss_and_grads(net, x, np.asarray(y, dtype=float))


def _loss_and_grads(net, x, y):
    z, (acts, pre) = _forward(net, x)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    delta = ((expit(z) - y) / len(y))[:, None].astype(z.dtype, copy=False)
    grads = []
    for l in range(len(net.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(acts[l].T @ delta)
        if l:
            # ReLU derivative taken as 0 at exactly 0
            delta = (delta @ net.weights[l].T) * (pre[l - 1] > 0)
    grads.reverse()
    return loss, grads


def mlp_train(net: MLPNet, real, fake, cfg: TrainConfig) -> MLPNet:
    """Train a copy of ``net`` to tell ``real`` (1) from ``fake`` (0).

    The returned net records the full-data loss after every epoch in
    ``train_loss``.
    """
    real, _ = as_points(real, net.input_dim)
    fake, _ = as_points(fake, net.input_dim)
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("need non-empty real and fake training sets")
    x = np.concatenate([real, fake]).astype(cfg.dtype)
    y = np.concatenate([np.ones(len(real)), np.zeros(len(fake))]).astype(cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    net = net.copy(cfg.dtype)
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(x), cfg.batch_size):
            idx = order[i:i + cfg.batch_size]
            loss, grads = _loss_and_grads(net, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            step += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                if cfg.optimizer == "sgd":
                    p -= cfg.lr * g
                    continue
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                m_hat = mi / (1 - cfg.beta1**step)
                v_hat = vi / (1 - cfg.beta2**step)
                p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        loss = mlp_loss(net, x, y)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        net.train_loss.append(loss)
        log.debug("epoch %d loss %.6f", epoch, loss)
    log.info("trained MLP for %d epochs, final loss %.6f", cfg.epochs, loss)
    return net


def _forward_from(net: MLPNet, h, start: int):
    """Logits and hidden ReLU masks of layers ``start`` onward, given the
    input ``h`` to layer ``start``."""
    masks = []
    last = len(net.weights) - 1
    for l in range(start, last + 1):
        h = h @ net.weights[l] + net.biases[l]
        if l < last:
            masks.append(h > 0)
            h = np.maximum(h, 0.0)
    return h[:, 0], masks


def grad_check(net: MLPNet, x, y, step: float = 1e-5,
               floor: float = GRAD_CHECK_FLOOR) -> float:
    """Largest relative error between backprop and central differences.

    Every parameter is perturbed by +-``step``.  Perturbations that flip any
    hidden ReLU between active and inactive straddle a kink, where the
    derivative does not exist, and are left out of the comparison.
    Relative error is ``|a - n| / max(|a| + |n|, floor)``.

    Difference quotients are formed in double precision first; entries
    whose error exceeds ``TIGHT_CHECK`` are re-evaluated with the forward
    pass in extended precision, since double round-off in the loss
    (about ``eps * loss / step``, roughly 1e-11) is then no longer
    negligible.
    """
    x, _ = as_points(x, net.input_dim)
    y = np.asarray(y, dtype=float)
    if len(x) == 0:
        raise ValueError("need a non-empty batch")
    nets, acts, bases = {}, {}, {}
    for dt in (np.float64, np.longdouble):
        nets[dt] = net.copy(dt)
        acts[dt] = _forward(nets[dt], x.astype(dt))[1][0]
        bases[dt] = _forward_from(nets[dt], acts[dt][0], 0)[1]
    _, grads = mlp_gradients(nets[np.float64], x, y)
    y_ld = y.astype(np.longdouble)

    def quotient(dt, idx, i):
        layer = idx // 2
        flat = nets[dt].params()[idx].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        z_up, m_up = _forward_from(nets[dt], acts[dt][layer], layer)
        flat[i] = orig - step
        z_down, m_down = _forward_from(nets[dt], acts[dt][layer], layer)
        flat[i] = orig
        if any((a != b).any() or (a != c).any()
               for a, b, c in zip(bases[dt][layer:], m_up, m_down)):
            return None
        yy = y_ld if dt is np.longdouble else y
        up = np.mean(np.logaddexp(0, z_up) - yy * z_up)
        down = np.mean(np.logaddexp(0, z_down) - yy * z_down)
        return float((up - down) / (2 * step))

    def rel_error(a, num):
        return abs(a - num) / max(abs(a) + abs(num), floor)

    worst = 0.0
    for idx, g in enumerate(grads):
        gflat = g.reshape(-1)
        for i in range(gflat.size):
            num = quotient(np.float64, idx, i)
            if num is None:
                continue
            rel = rel_error(gflat[i], num)
            if rel > TIGHT_CHECK:
                num = quotient(np.longdouble, idx, i)
                if num is None:
                    continue
                rel = rel_error(gflat[i], num)
            worst = max(worst, rel)
    return worst


class MLPDiscriminator(Discriminator):
    is_probability = True

    def __init__(self, net: MLPNet):
        self.net = net
        self.dim = net.input_dim

    def log_odds(self, x) -> np.ndarray:
        return mlp_logit(self.net, x)

    def score(self, x) -> np.ndarray:
        return mlp_forward(self.net, x)


def net_to_json(net: MLPNet) -> str:
    """Flat parameter array (W row-major, then b, per layer) with a shape
    header."""
    flat = np.concatenate([p.ravel() for p in net.params()])
    return json.dumps({"layer_shapes": net.layer_shapes, "dtype": str(flat.dtype),
                       "params": flat.tolist()})


def net_from_json(text: str) -> MLPNet:
    spec = json.loads(text)
    flat = np.asarray(spec["params"], dtype=spec.get("dtype", "float64"))
    weights, biases, pos = [], [], 0
    for fan_in, fan_out in spec["layer_shapes"]:
        weights.append(flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out))
        pos += fan_in * fan_out
        biases.append(flat[pos:pos + fan_out].copy())
        pos += fan_out
    if pos != flat.size:
        raise ValueError("parameter count does not match layer shapes")
    return MLPNet(weights, biases)
