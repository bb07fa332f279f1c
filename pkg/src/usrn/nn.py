"""Dense-layer network engine: MLP forward/backward, Adam, LR schedule, FD check.

Everything runs in float64.  Gradients accumulate with += so several
decoders can deposit into a shared encoder within one step; callers zero
gradients at the start of each optimization step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "snake", "sine")


@dataclass
class ParamTensor:
    """A learnable array plus its gradient accumulator."""

    name: str
    values: np.ndarray
    grads: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.grads is None:
            self.grads = np.zeros_like(self.values)
        else:
            self.grads = np.asarray(self.grads, dtype=np.float64)
        if self.grads.shape != self.values.shape:
            raise ValueError(
                f"{self.name}: grads shape {self.grads.shape} != values shape "
                f"{self.values.shape}"
            )

    @property
    def size(self) -> int:
        return self.values.size


def zero_grads(params) -> None:
    for p in params:
        p.grads[...] = 0.0


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "snake":
        return z + np.sin(z) ** 2
    if name == "sine":
        return np.sin(z)
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "snake":
        return 1.0 + np.sin(2.0 * z)
    if name == "sine":
        return np.cos(z)
    raise ValueError(f"unknown activation {name!r}")


class MLP:
    """Fully connected net; hidden activation applied between layers,
    identity output.  Dropout (inverted, train mode only) zeroes hidden
    units with probability `dropout_p` and rescales survivors by 1/(1-p).
    """

    def __init__(
        self,
        in_dim: int,
        hidden_dims,
        out_dim: int,
        activation: str = "relu",
        dropout_p: float = 0.0,
        rng: np.random.Generator | None = None,
        name: str = "mlp",
    ):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not 0.0 <= dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {dropout_p}")
        if rng is None:
            rng = np.random.default_rng()
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        self.hidden_dims = tuple(int(h) for h in hidden_dims)
        self.activation = activation
        self.dropout_p = float(dropout_p)
        self.name = name
        self.weights: list[ParamTensor] = []
        self.biases: list[ParamTensor] = []
        dims = (self.in_dim, *self.hidden_dims, self.out_dim)
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            lim = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(
                ParamTensor(f"{name}.w{i}", rng.uniform(-lim, lim, (fan_out, fan_in)))
            )
            self.biases.append(ParamTensor(f"{name}.b{i}", np.zeros(fan_out)))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[ParamTensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray, mode: str = "infer", rng=None):
        """Returns (y, cache); cache feeds `backward`."""
        if mode not in ("train", "infer"):
            raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(
                f"{self.name}: input must be (B, {self.in_dim}), got {x.shape}"
            )
        use_dropout = mode == "train" and self.dropout_p > 0.0
        if use_dropout and rng is None:
            raise ValueError("train-mode dropout requires an rng")
        layers = []
        a = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.values.T + b.values
            if i == last:
                layers.append((a, z, None))
                a = z
            else:
                h = _act(self.activation, z)
                mask = None
                if use_dropout:
                    keep = rng.random(h.shape) >= self.dropout_p
                    mask = keep / (1.0 - self.dropout_p)
                    h = h * mask
                layers.append((a, z, mask))
                a = h
        return a, layers

    def backward(self, cache, dL_dy: np.ndarray) -> np.ndarray:
        """Accumulates parameter gradients; returns dL/dx for the encoder."""
        if len(cache) != self.n_layers:
            raise ValueError(f"{self.name}: cache does not match layer count")
        d = np.asarray(dL_dy, dtype=np.float64)
        for i in range(self.n_layers - 1, -1, -1):
            x_in, z, mask = cache[i]
            if d.shape != z.shape:
                raise ValueError(f"{self.name}: stale cache at layer {i}")
            if i == self.n_layers - 1:
                dz = d
            else:
                if mask is not None:
                    d = d * mask
                dz = d * _act_grad(self.activation, z)
            self.weights[i].grads += dz.T @ x_in
            self.biases[i].grads += dz.sum(axis=0)
            d = dz @ self.weights[i].values
        return d


def mlp_forward(m: MLP, x, mode: str = "infer", rng=None):
    return m.forward(x, mode, rng)


def mlp_backward(m: MLP, cache, dL_dy):
    return m.backward(cache, dL_dy)


@dataclass
class AdamState:
    """Per-parameter first/second moments, shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.values) for p in params],
            v=[np.zeros_like(p.values) for p in params],
        )


def adam_step(params, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place; gradients are left untouched."""
    if len(params) != len(state.m):
        raise ValueError("optimizer state does not match parameter list")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grads
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LRSchedule:
    """Cosine annealing from eta0 down to eta_min over t_max steps."""

    eta0: float
    eta_min: float
    t_max: int

    def __post_init__(self):
        if not self.eta0 > self.eta_min >= 0.0:
            raise ValueError(
                f"need eta0 > eta_min >= 0, got {self.eta0}, {self.eta_min}"
            )
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")


def cosine_lr_at(s: LRSchedule, t: int) -> float:
    if not 0 <= t <= s.t_max:
        raise ValueError(f"step {t} outside [0, {s.t_max}]")
    return s.eta_min + 0.5 * (s.eta0 - s.eta_min) * (1.0 + math.cos(math.pi * t / s.t_max))


def finite_difference_check(loss_fn, params, h: float = 1e-4) -> float:
    """Worst relative error between analytic and central-difference gradients.

    `loss_fn()` must return the scalar loss for the parameters' current
    values and be deterministic (frozen batches and dropout masks).  The
    analytic gradient is read from each parameter's `grads`, so the caller
    runs its backward pass before calling this.  Per-coordinate steps are
    scaled as h * max(1, |theta|); relative error uses denominator
    max(|analytic|, |numeric|, 1e-12).
    """
    worst = 0.0
    for p in params:
        flat_v = p.values.reshape(-1)
        flat_g = p.grads.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            step = h * max(1.0, abs(orig))
            flat_v[i] = orig + step
            up = loss_fn()
            flat_v[i] = orig - step
            down = loss_fn()
            flat_v[i] = orig
            numeric = (up - down) / (2.0 * step)
            analytic = flat_g[i]
            denom = max(abs(analytic), abs(numeric), 1e-12)
            worst = max(worst, abs(numeric - analytic) / denom)
    return worst
