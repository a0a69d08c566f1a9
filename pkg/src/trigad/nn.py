"""Dense training kernels: parameters, activations, layers, losses, Adam,
finite-difference gradient checking, and the binary checkpoint format.

Everything is float64 and deterministic for a fixed seed. Backward passes are
written per layer with the explicit chain rule; there is no autodiff tape.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit


class Param:
    """A 2-D float64 weight with a gradient buffer and a frozen flag.

    Frozen parameters accumulate no gradient and are never moved by the
    optimizer.
    """

    __slots__ = ("name", "value", "grad", "frozen")

    def __init__(self, value, name: str = "", frozen: bool = False):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        if self.value.ndim != 2:
            raise ValueError(f"params must be 2-D, got shape {self.value.shape}")
        self.grad = np.zeros_like(self.value)
        self.name = name
        self.frozen = frozen

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def accumulate(self, g: np.ndarray) -> None:
        if not self.frozen:
            self.grad += g

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Param({self.name!r}, shape={self.value.shape}, frozen={self.frozen})"


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def glorot(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    fan_in, fan_out = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(shape: tuple[int, int], seed: int,
                scheme: str = "glorot_uniform", name: str = "") -> Param:
    """Deterministically initialized Param; glorot_uniform or zeros."""
    if min(shape) < 1:
        raise ValueError(f"dimensions must be positive, got {shape}")
    if scheme == "glorot_uniform":
        value = glorot(np.random.default_rng(seed), shape)
    elif scheme == "zeros":
        value = np.zeros(shape)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return Param(value, name=name)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _identity(x):
    return x


_ACT_FORWARD: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": _identity,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def act_grad_from_pre(act: str, pre: np.ndarray) -> np.ndarray:
    """d(act)/d(pre) evaluated at the pre-activation."""
    if act == "identity":
        return np.ones_like(pre)
    if act == "relu":
        return (pre > 0.0).astype(np.float64)
    if act == "tanh":
        t = np.tanh(pre)
        return 1.0 - t * t
    if act == "sigmoid":
        s = expit(pre)
        return s * (1.0 - s)
    raise ValueError(f"unknown activation {act!r}")


def apply_activation(act: str, pre: np.ndarray) -> np.ndarray:
    try:
        return _ACT_FORWARD[act](pre)
    except KeyError:
        raise ValueError(f"unknown activation {act!r}") from None


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def linear_forward(x: np.ndarray, w: Param, b: Param | None = None) -> np.ndarray:
    y = matmul(x, w.value)
    if b is not None:
        y = y + b.value  # b is 1 x cols, broadcast over rows
    return y


def linear_backward(x: np.ndarray, w: Param, b: Param | None,
                    dy: np.ndarray) -> np.ndarray:
    """Accumulate dL/dw (and dL/db) for y = x w + b; returns dL/dx."""
    w.accumulate(x.T @ dy)
    if b is not None:
        b.accumulate(dy.sum(axis=0, keepdims=True))
    return dy @ w.value.T


def gcn_forward(lap, h: np.ndarray, w: Param, act: str = "relu") -> np.ndarray:
    """act(lap @ h @ w) for a sparse propagation matrix lap."""
    if lap.shape[1] != h.shape[0]:
        raise ValueError(f"gcn shape mismatch: lap {lap.shape} vs h {h.shape}")
    return apply_activation(act, lap @ matmul(h, w.value))


def gcn_backward(lap, h: np.ndarray, w: Param, dout: np.ndarray,
                 act: str = "relu") -> np.ndarray:
    """Accumulate dL/dw for gcn_forward and return dL/dh.

    Recomputes the pre-activation; fine for the small fixed architectures
    this kernel serves.
    """
    pre = lap @ matmul(h, w.value)
    dpre = dout * act_grad_from_pre(act, pre)
    dm = lap.T @ dpre  # gradient w.r.t. (h @ w)
    w.accumulate(h.T @ dm)
    return dm @ w.value.T


def frobenius_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of squared differences and its gradient 2*(pred - target)."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float((diff * diff).sum()), 2.0 * diff


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Standard Adam over a fixed parameter list.

    step() skips frozen parameters entirely (values and moments untouched)
    and zeroes every gradient buffer afterwards.
    """

    def __init__(self, params: Sequence[Param], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.frozen:
                p.grad[:] = 0.0
                continue
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.grad[:] = 0.0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def adam_step(state: Adam) -> None:
    state.step()


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(loss_fn: Callable[[], float], params: Sequence[Param],
               eps: float = 1e-5, max_entries: int = 25, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn must zero gradients, run forward+backward, and return the scalar
    loss. Up to max_entries entries are probed per parameter; the relative
    error is |analytic - fd| / max(1, |analytic|).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps out of range: {eps}")
    rng = np.random.default_rng(seed)
    base = loss_fn()
    if not np.isfinite(base):
        raise ValueError("loss is not finite")
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, saved in zip(params, analytic):
        flat = p.value.reshape(-1)
        total = flat.size
        if total <= max_entries:
            picks = np.arange(total)
        else:
            picks = rng.choice(total, size=max_entries, replace=False)
        gflat = saved.reshape(-1)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + eps
            lp = loss_fn()
            flat[k] = orig - eps
            lm = loss_fn()
            flat[k] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise ValueError("loss is not finite during perturbation")
            fd = (lp - lm) / (2.0 * eps)
            rel = abs(gflat[k] - fd) / max(1.0, abs(gflat[k]))
            worst = max(worst, rel)
    for p in params:
        p.zero_grad()
    return worst


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = struct.Struct("<I")


def save_checkpoint(path, params: Sequence[Param], seed: int) -> None:
    """Binary container: uint32 header length, JSON header (seed + entry
    names/shapes), then the little-endian float64 matrices back to back."""
    names = [p.name for p in params]
    if len(set(names)) != len(names) or "" in names:
        raise ValueError("checkpoint params need unique non-empty names")
    header = {
        "seed": int(seed),
        "entries": [
            {"name": p.name, "rows": int(p.value.shape[0]),
             "cols": int(p.value.shape[1])}
            for p in params
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC.pack(len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], int]:
    """Inverse of save_checkpoint: (name -> matrix, seed)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    (hlen,) = _MAGIC.unpack_from(raw, 0)
    header = json.loads(raw[4:4 + hlen].decode("utf-8"))
    offset = 4 + hlen
    out: dict[str, np.ndarray] = {}
    for entry in header["entries"]:
        rows, cols = entry["rows"], entry["cols"]
        count = rows * cols
        mat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        out[entry["name"]] = mat.reshape(rows, cols).astype(np.float64)
        offset += count * 8
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return out, int(header["seed"])
