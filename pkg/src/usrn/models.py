"""Uncertainty-aware scene representation models and their training loops.

The central model family shares one feature-grid encoder across M
independent MLP decoders; the spread of the decoder outputs is the
uncertainty estimate.  The regularized variant adds a KL penalty that
pulls the batch-normalized variance distribution toward the (constant,
non-differentiated) batch-normalized squared-error distribution.  DE, PV
and MCD baselines live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoders import EncoderSpec, build_encoder
from .nn import (
    MLP,
    AdamState,
    LRSchedule,
    ParamTensor,
    adam_step,
    cosine_lr_at,
    zero_grads,
)
from .volume import VolumeGrid, TrainingBatch, field_to_3d, sample_training_batch, vertex_coordinates

MODEL_KINDS = ("mdsrn", "rmdsrn", "de", "pv", "mcd")

DENSITY_EPS = 1e-12

DEFAULT_LR = 5e-3
DEFAULT_LR_PV = 5e-4
DEFAULT_HIDDEN = (64, 64)
DEFAULT_HIDDEN_DEEP = (128, 128, 128)  # PV / MCD decoders


class TrainingDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, step: int, lam: float, detail: str):
        super().__init__(
            f"training diverged at step {step} (lambda={lam:g}): {detail}"
        )
        self.step = step
        self.lam = lam


class UnsupportedModelError(TypeError):
    """Raised when an operation needs per-member predictions the model lacks."""


# ---------------------------------------------------------------------------
# ensemble statistics and losses


@dataclass(frozen=True)
class PredictionStats:
    """Per-coordinate ensemble mean, sample variance, and raw members (M, B)."""

    mean: np.ndarray
    variance: np.ndarray
    members: np.ndarray


def ensemble_stats(preds: np.ndarray) -> PredictionStats:
    """Mean and unbiased sample variance across the member axis."""
    preds = np.asarray(preds, dtype=np.float64)
    if preds.ndim != 2 or preds.shape[0] < 2:
        raise ValueError(f"need an (M >= 2, B) prediction matrix, got {preds.shape}")
    mean = preds.mean(axis=0)
    variance = ((preds - mean) ** 2).sum(axis=0) / (preds.shape[0] - 1)
    return PredictionStats(mean=mean, variance=variance, members=preds)


def member_loss(preds: np.ndarray, targets: np.ndarray) -> float:
    """Squared error summed over members, averaged over the batch."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    return float(((preds - targets[None, :]) ** 2).sum() / targets.size)


def member_loss_grad(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return 2.0 * (preds - targets[None, :]) / targets.size


def density_normalize(values: np.ndarray) -> np.ndarray:
    """Batch values -> discrete density: divide by (sum + eps), floor at eps,
    renormalize.  An all-zero batch becomes the uniform density."""
    values = np.asarray(values, dtype=np.float64)
    d = values / (values.sum() + DENSITY_EPS)
    d = np.maximum(d, DENSITY_EPS)
    return d / d.sum()


def density_normalize_vjp(values: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of density_normalize at `values` applied to `upstream`."""
    values = np.asarray(values, dtype=np.float64)
    s = float(values.sum()) + DENSITY_EPS
    a = values / s
    b = np.maximum(a, DENSITY_EPS)
    t = float(b.sum())
    d_b = upstream / t - float((upstream * b).sum()) / (t * t)
    d_a = np.where(a > DENSITY_EPS, d_b, 0.0)
    return d_a / s - float((d_a * values).sum()) / (s * s)


def variance_regularization_loss(variances: np.ndarray, sq_errors: np.ndarray) -> float:
    """KL(error density || variance density) / B, natural log.

    Only the variance side carries gradient; the error densities are
    treated as constants (see variance_regularization_grad).
    """
    f_err = density_normalize(sq_errors)
    f_var = density_normalize(variances)
    return float((f_err * (np.log(f_err) - np.log(f_var))).sum() / f_err.size)


def variance_regularization_grad(
    variances: np.ndarray, sq_errors: np.ndarray
) -> np.ndarray:
    """d(variance_regularization_loss)/d(variances); the squared errors
    contribute no gradient path."""
    f_err = density_normalize(sq_errors)
    f_var = density_normalize(variances)
    d_fvar = -(f_err / f_var) / f_err.size
    return density_normalize_vjp(variances, d_fvar)


# ---------------------------------------------------------------------------
# regularization weight schedule


@dataclass(frozen=True)
class LambdaSchedule:
    """Exponential ramp of the regularization weight over training steps."""

    lam_min: float = 0.0
    lam_max: float = 10.0
    growth: float = 500.0
    t_max: int = 50000

    def __post_init__(self):
        if not 0.0 <= self.lam_min <= self.lam_max:
            raise ValueError(
                f"need 0 <= lam_min <= lam_max, got {self.lam_min}, {self.lam_max}"
            )
        if self.growth <= 1.0:
            raise ValueError(f"growth must be > 1, got {self.growth}")
        if self.t_max < 2:
            raise ValueError(f"t_max must be >= 2, got {self.t_max}")


def lambda_at(s: LambdaSchedule, t: int) -> float:
    """Weight at step t in 1..t_max; lam_min at t=1 rising to lam_max."""
    if not 1 <= t <= s.t_max:
        raise ValueError(f"step {t} outside [1, {s.t_max}]")
    frac = (s.growth ** ((t - 1) / (s.t_max - 1)) - 1.0) / (s.growth - 1.0)
    return s.lam_min + (s.lam_max - s.lam_min) * frac


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrainConfig:
    """Everything a training run needs besides the volume itself.

    `lr` and `decoder_hidden` default to per-kind values when None:
    lr 5e-3 (5e-4 for pv), decoders (64, 64) for the ensemble kinds and
    (128, 128, 128) for pv/mcd.
    """

    kind: str = "rmdsrn"
    steps: int = 50000
    batch_size: int = 131072
    lr: float | None = None
    lr_min: float = 1e-7
    seed: int = 0
    members: int = 5
    decoder_hidden: tuple | None = None
    activation: str = "relu"
    dropout_p: float = 0.1
    mcd_passes: int = 5
    pv_var_floor: float = 1e-6
    lambda_min: float = 0.0
    lambda_max: float = 10.0
    growth: float = 500.0
    encoder: EncoderSpec = EncoderSpec()

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("steps and batch_size must be >= 1")
        if self.members < 2:
            raise ValueError("members must be >= 2")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.mcd_passes < 2:
            raise ValueError("mcd_passes must be >= 2")
        if self.pv_var_floor <= 0.0:
            raise ValueError("pv_var_floor must be > 0")
        if not 0.0 <= self.lambda_min <= self.lambda_max:
            raise ValueError("need 0 <= lambda_min <= lambda_max")
        if self.growth <= 1.0:
            raise ValueError("growth must be > 1")
        if self.decoder_hidden is not None:
            object.__setattr__(
                self, "decoder_hidden", tuple(int(h) for h in self.decoder_hidden)
            )

    def resolved_lr(self) -> float:
        if self.lr is not None:
            return float(self.lr)
        return DEFAULT_LR_PV if self.kind == "pv" else DEFAULT_LR

    def resolved_hidden(self) -> tuple:
        if self.decoder_hidden is not None:
            return self.decoder_hidden
        return DEFAULT_HIDDEN_DEEP if self.kind in ("pv", "mcd") else DEFAULT_HIDDEN

    def lambda_schedule(self) -> LambdaSchedule:
        t_max = max(self.steps, 2)
        if self.kind == "rmdsrn":
            return LambdaSchedule(self.lambda_min, self.lambda_max, self.growth, t_max)
        # every other kind trains without the variance regularizer
        return LambdaSchedule(0.0, 0.0, self.growth, t_max)


@dataclass(frozen=True)
class LossReport:
    step: int
    lr: float
    lam: float
    member: float
    var: float
    total: float


# ---------------------------------------------------------------------------
# model classes


class _SingleNet:
    """One encoder feeding one decoder; building block for DE / PV / MCD."""

    def __init__(
        self,
        encoder_spec: EncoderSpec,
        hidden,
        outputs: int,
        activation: str,
        dropout_p: float,
        rng: np.random.Generator,
        prefix: str = "",
    ):
        self.encoder_spec = encoder_spec
        self.encoder = build_encoder(encoder_spec, rng)
        for p in self.encoder.params():
            p.name = prefix + p.name
        self.decoder = MLP(
            self.encoder.out_dim,
            hidden,
            outputs,
            activation,
            dropout_p,
            rng,
            name=f"{prefix}decoder",
        )

    def params(self) -> list[ParamTensor]:
        return self.encoder.params() + self.decoder.params()

    def forward(self, coords, mode: str = "infer", rng=None):
        feats, enc_cache = self.encoder.encode(coords)
        y, dec_cache = self.decoder.forward(feats, mode, rng)
        return y, (enc_cache, dec_cache)

    def backward(self, cache, dL_dy) -> None:
        enc_cache, dec_cache = cache
        dfeat = self.decoder.backward(dec_cache, dL_dy)
        self.encoder.backward(enc_cache, dfeat)


class MDSRNModel:
    """Shared feature-grid encoder with M independent scalar decoders."""

    def __init__(
        self,
        encoder_spec: EncoderSpec,
        decoder_hidden=DEFAULT_HIDDEN,
        members: int = 5,
        activation: str = "relu",
        rng: np.random.Generator | None = None,
        kind: str = "mdsrn",
    ):
        if members < 2:
            raise ValueError(f"need at least 2 decoders, got {members}")
        if kind not in ("mdsrn", "rmdsrn"):
            raise ValueError(f"kind must be mdsrn or rmdsrn, got {kind!r}")
        if rng is None:
            rng = np.random.default_rng()
        self.kind = kind
        self.encoder_spec = encoder_spec
        self.decoder_hidden = tuple(decoder_hidden)
        self.activation = activation
        self.members = int(members)
        self.encoder = build_encoder(encoder_spec, rng)
        self.decoders = [
            MLP(
                self.encoder.out_dim,
                decoder_hidden,
                1,
                activation,
                0.0,
                rng,
                name=f"decoder{i}",
            )
            for i in range(members)
        ]

    def params(self) -> list[ParamTensor]:
        out = self.encoder.params()
        for dec in self.decoders:
            out.extend(dec.params())
        return out

    def forward_members(self, coords, mode: str = "infer", rng=None):
        """All member predictions (M, B) plus the backward cache."""
        feats, enc_cache = self.encoder.encode(coords)
        preds = np.empty((self.members, feats.shape[0]))
        dec_caches = []
        for i, dec in enumerate(self.decoders):
            y, c = dec.forward(feats, mode, rng)
            preds[i] = y[:, 0]
            dec_caches.append(c)
        return preds, (enc_cache, dec_caches)

    def backward_members(self, cache, dL_dpreds) -> None:
        """Deposit gradients for all decoders, then once into the encoder."""
        enc_cache, dec_caches = cache
        dfeat_total = None
        for i, dec in enumerate(self.decoders):
            dfeat = dec.backward(dec_caches[i], dL_dpreds[i][:, None])
            dfeat_total = dfeat if dfeat_total is None else dfeat_total + dfeat
        self.encoder.backward(enc_cache, dfeat_total)

    def predict_members(self, coords, mode: str = "infer", rng=None) -> np.ndarray:
        return self.forward_members(coords, mode, rng)[0]

    def member_predictions(self, coords, rng=None) -> np.ndarray:
        return self.predict_members(coords)

    def predict_stats(self, coords, rng=None) -> PredictionStats:
        return ensemble_stats(self.predict_members(coords))

    def arch(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": self.encoder_spec.to_dict(),
            "decoder_hidden": list(self.decoder_hidden),
            "members": self.members,
            "activation": self.activation,
        }


class DeepEnsembleModel:
    """M fully independent encoder+decoder networks."""

    kind = "de"

    def __init__(self, nets: list):
        if len(nets) < 2:
            raise ValueError("deep ensemble needs at least 2 members")
        self.nets = nets
        self.members = len(nets)
        self.encoder_spec = nets[0].encoder_spec
        self.decoder_hidden = tuple(nets[0].decoder.hidden_dims)
        self.activation = nets[0].decoder.activation

    def params(self) -> list[ParamTensor]:
        out = []
        for net in self.nets:
            out.extend(net.params())
        return out

    def member_predictions(self, coords, rng=None) -> np.ndarray:
        return np.stack([net.forward(coords)[0][:, 0] for net in self.nets])

    def predict_stats(self, coords, rng=None) -> PredictionStats:
        return ensemble_stats(self.member_predictions(coords))

    def arch(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": self.encoder_spec.to_dict(),
            "decoder_hidden": list(self.decoder_hidden),
            "members": self.members,
            "activation": self.activation,
        }


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def pv_nll(targets: np.ndarray, mean: np.ndarray, variance: np.ndarray) -> float:
    """Gaussian negative log-likelihood averaged over the batch."""
    per = 0.5 * np.log(2.0 * np.pi * variance) + (targets - mean) ** 2 / (2.0 * variance)
    return float(per.mean())


class PVModel:
    """Single decoder with two outputs: mean and (pre-softplus) variance."""

    kind = "pv"

    def __init__(
        self,
        encoder_spec: EncoderSpec,
        decoder_hidden=DEFAULT_HIDDEN_DEEP,
        activation: str = "relu",
        var_floor: float = 1e-6,
        rng: np.random.Generator | None = None,
    ):
        if var_floor <= 0:
            raise ValueError("var_floor must be > 0")
        if rng is None:
            rng = np.random.default_rng()
        self.encoder_spec = encoder_spec
        self.decoder_hidden = tuple(decoder_hidden)
        self.activation = activation
        self.var_floor = float(var_floor)
        self.net = _SingleNet(encoder_spec, decoder_hidden, 2, activation, 0.0, rng)

    def params(self) -> list[ParamTensor]:
        return self.net.params()

    def split_outputs(self, y: np.ndarray):
        return y[:, 0], softplus(y[:, 1]) + self.var_floor

    def predict_stats(self, coords, rng=None) -> PredictionStats:
        y, _ = self.net.forward(coords)
        mean, variance = self.split_outputs(y)
        return PredictionStats(mean=mean, variance=variance, members=mean[None, :])

    def member_predictions(self, coords, rng=None) -> np.ndarray:
        raise UnsupportedModelError(
            "a variance-head model has no member predictions; statistical "
            "rendering needs an ensemble-style model"
        )

    def arch(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": self.encoder_spec.to_dict(),
            "decoder_hidden": list(self.decoder_hidden),
            "activation": self.activation,
            "pv_var_floor": self.var_floor,
        }


def pv_forward_and_loss(model: PVModel, batch: TrainingBatch):
    """(mean, variance, NLL loss) of a variance-head model on a batch."""
    y, _ = model.net.forward(batch.coords)
    mean, variance = model.split_outputs(y)
    return mean, variance, pv_nll(batch.targets, mean, variance)


class MCDModel:
    """Single decoder with dropout kept active at inference."""

    kind = "mcd"

    def __init__(
        self,
        encoder_spec: EncoderSpec,
        decoder_hidden=DEFAULT_HIDDEN_DEEP,
        activation: str = "relu",
        dropout_p: float = 0.1,
        passes: int = 5,
        inference_seed: int = 0,
        rng: np.random.Generator | None = None,
    ):
        if rng is None:
            rng = np.random.default_rng()
        self.encoder_spec = encoder_spec
        self.decoder_hidden = tuple(decoder_hidden)
        self.activation = activation
        self.dropout_p = float(dropout_p)
        self.passes = int(passes)
        self.inference_seed = int(inference_seed)
        self.net = _SingleNet(
            encoder_spec, decoder_hidden, 1, activation, dropout_p, rng
        )

    def params(self) -> list[ParamTensor]:
        return self.net.params()

    def member_predictions(self, coords, rng=None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(self.inference_seed)
        return np.stack(
            [
                self.net.forward(coords, "train", rng)[0][:, 0]
                for _ in range(self.passes)
            ]
        )

    def predict_stats(self, coords, rng=None) -> PredictionStats:
        return mcd_predict_stats(self, coords, self.passes, rng)

    def arch(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": self.encoder_spec.to_dict(),
            "decoder_hidden": list(self.decoder_hidden),
            "activation": self.activation,
            "dropout_p": self.dropout_p,
            "mcd_passes": self.passes,
            "inference_seed": self.inference_seed,
        }


def mcd_predict_stats(model: MCDModel, coords, passes: int, rng=None) -> PredictionStats:
    """Stats over `passes` stochastic forward passes with dropout active."""
    if passes < 2:
        raise ValueError(f"need at least 2 stochastic passes, got {passes}")
    if rng is None:
        rng = np.random.default_rng(model.inference_seed)
    rows = np.stack(
        [model.net.forward(coords, "train", rng)[0][:, 0] for _ in range(passes)]
    )
    return ensemble_stats(rows)


# ---------------------------------------------------------------------------
# training loops


def _require_normalized(volume: VolumeGrid) -> None:
    if not volume.normalized:
        raise ValueError("training requires a normalized volume")


def _check_finite(step: int, lam: float, **scalars) -> None:
    bad = {k: v for k, v in scalars.items() if not math.isfinite(v)}
    if bad:
        raise TrainingDivergedError(step, lam, f"non-finite {bad}")


def train_rmdsrn(volume: VolumeGrid, cfg: TrainConfig):
    """Train a multi-decoder model; lambda_max = 0 (or kind mdsrn) recovers
    plain member-loss training exactly."""
    if cfg.kind not in ("mdsrn", "rmdsrn"):
        raise ValueError(f"train_rmdsrn handles mdsrn/rmdsrn, got {cfg.kind!r}")
    _require_normalized(volume)
    rng = np.random.default_rng(cfg.seed)
    model = MDSRNModel(
        cfg.encoder,
        cfg.resolved_hidden(),
        cfg.members,
        cfg.activation,
        rng,
        kind=cfg.kind,
    )
    params = model.params()
    state = AdamState.for_params(params)
    lr_sched = LRSchedule(cfg.resolved_lr(), cfg.lr_min, cfg.steps)
    lam_sched = cfg.lambda_schedule()
    history: list[LossReport] = []
    m = model.members
    for t in range(1, cfg.steps + 1):
        batch = sample_training_batch(volume, cfg.batch_size, rng)
        zero_grads(params)
        preds, cache = model.forward_members(batch.coords, "train", rng)
        stats = ensemble_stats(preds)
        lm = member_loss(preds, batch.targets)
        sq_err = (stats.mean - batch.targets) ** 2
        lv = variance_regularization_loss(stats.variance, sq_err)
        lam = lambda_at(lam_sched, t)
        total = lm + lam * lv
        _check_finite(t, lam, member=lm, var=lv, total=total)
        d = member_loss_grad(preds, batch.targets)
        if lam != 0.0:
            dvar = variance_regularization_grad(stats.variance, sq_err)
            d = d + (2.0 * lam / (m - 1)) * dvar[None, :] * (preds - stats.mean[None, :])
        model.backward_members(cache, d)
        lr = cosine_lr_at(lr_sched, t)
        adam_step(params, state, lr)
        history.append(LossReport(t, lr, lam, lm, lv, total))
    return model, history


def _train_mse_net(volume: VolumeGrid, cfg: TrainConfig, net: _SingleNet, rng):
    """Plain MSE training of a single encoder+decoder net."""
    params = net.params()
    state = AdamState.for_params(params)
    lr_sched = LRSchedule(cfg.resolved_lr(), cfg.lr_min, cfg.steps)
    history: list[LossReport] = []
    for t in range(1, cfg.steps + 1):
        batch = sample_training_batch(volume, cfg.batch_size, rng)
        zero_grads(params)
        y, cache = net.forward(batch.coords, "train", rng)
        resid = y[:, 0] - batch.targets
        loss = float((resid**2).mean())
        _check_finite(t, 0.0, loss=loss)
        dy = np.zeros_like(y)
        dy[:, 0] = 2.0 * resid / batch.size
        net.backward(cache, dy)
        lr = cosine_lr_at(lr_sched, t)
        adam_step(params, state, lr)
        history.append(LossReport(t, lr, 0.0, loss, 0.0, loss))
    return history


def train_deep_ensemble(volume: VolumeGrid, cfg: TrainConfig):
    """Independently train cfg.members full networks; member i uses seed
    cfg.seed + i for both initialization and batch sampling."""
    if cfg.kind != "de":
        raise ValueError(f"train_deep_ensemble requires kind 'de', got {cfg.kind!r}")
    if cfg.members < 2:
        raise ValueError("deep ensemble needs members >= 2")
    _require_normalized(volume)
    nets = []
    history: list[LossReport] = []
    for i in range(cfg.members):
        rng = np.random.default_rng(cfg.seed + i)
        net = _SingleNet(
            cfg.encoder,
            cfg.resolved_hidden(),
            1,
            cfg.activation,
            0.0,
            rng,
            prefix=f"member{i}.",
        )
        history.extend(_train_mse_net(volume, cfg, net, rng))
        nets.append(net)
    return DeepEnsembleModel(nets), history


def train_pv(volume: VolumeGrid, cfg: TrainConfig):
    """Train a variance-head model with the Gaussian NLL loss."""
    if cfg.kind != "pv":
        raise ValueError(f"train_pv requires kind 'pv', got {cfg.kind!r}")
    _require_normalized(volume)
    rng = np.random.default_rng(cfg.seed)
    model = PVModel(
        cfg.encoder, cfg.resolved_hidden(), cfg.activation, cfg.pv_var_floor, rng
    )
    params = model.params()
    state = AdamState.for_params(params)
    lr_sched = LRSchedule(cfg.resolved_lr(), cfg.lr_min, cfg.steps)
    history: list[LossReport] = []
    for t in range(1, cfg.steps + 1):
        batch = sample_training_batch(volume, cfg.batch_size, rng)
        zero_grads(params)
        y, cache = model.net.forward(batch.coords, "train", rng)
        mean, variance = model.split_outputs(y)
        resid = mean - batch.targets
        loss = pv_nll(batch.targets, mean, variance)
        _check_finite(t, 0.0, loss=loss)
        b = batch.size
        dy = np.empty_like(y)
        dy[:, 0] = resid / variance / b
        dy[:, 1] = (
            (0.5 / variance - resid**2 / (2.0 * variance**2)) * _sigmoid(y[:, 1]) / b
        )
        model.net.backward(cache, dy)
        lr = cosine_lr_at(lr_sched, t)
        adam_step(params, state, lr)
        history.append(LossReport(t, lr, 0.0, loss, 0.0, loss))
    return model, history


def train_mcd(volume: VolumeGrid, cfg: TrainConfig):
    """Train a dropout model with MSE; dropout stays on for inference."""
    if cfg.kind != "mcd":
        raise ValueError(f"train_mcd requires kind 'mcd', got {cfg.kind!r}")
    _require_normalized(volume)
    rng = np.random.default_rng(cfg.seed)
    model = MCDModel(
        cfg.encoder,
        cfg.resolved_hidden(),
        cfg.activation,
        cfg.dropout_p,
        cfg.mcd_passes,
        inference_seed=cfg.seed,
        rng=rng,
    )
    history = _train_mse_net(volume, cfg, model.net, rng)
    return model, history


def train_model(volume: VolumeGrid, cfg: TrainConfig):
    """Dispatch to the kind-appropriate trainer; returns (model, history)."""
    if cfg.kind in ("mdsrn", "rmdsrn"):
        return train_rmdsrn(volume, cfg)
    if cfg.kind == "de":
        return train_deep_ensemble(volume, cfg)
    if cfg.kind == "pv":
        return train_pv(volume, cfg)
    if cfg.kind == "mcd":
        return train_mcd(volume, cfg)
    raise ValueError(f"unknown model kind {cfg.kind!r}")


def build_model(
    kind: str,
    encoder: EncoderSpec | dict,
    decoder_hidden,
    members: int = 5,
    activation: str = "relu",
    dropout_p: float = 0.1,
    mcd_passes: int = 5,
    pv_var_floor: float = 1e-6,
    inference_seed: int = 0,
    rng: np.random.Generator | None = None,
):
    """Construct an untrained model of the given architecture (used when
    restoring checkpoints; parameter values get overwritten afterwards)."""
    if isinstance(encoder, dict):
        encoder = EncoderSpec.from_dict(encoder)
    if rng is None:
        rng = np.random.default_rng(0)
    if kind in ("mdsrn", "rmdsrn"):
        return MDSRNModel(encoder, decoder_hidden, members, activation, rng, kind=kind)
    if kind == "de":
        nets = [
            _SingleNet(
                encoder, decoder_hidden, 1, activation, 0.0, rng, prefix=f"member{i}."
            )
            for i in range(members)
        ]
        return DeepEnsembleModel(nets)
    if kind == "pv":
        return PVModel(encoder, decoder_hidden, activation, pv_var_floor, rng)
    if kind == "mcd":
        return MCDModel(
            encoder,
            decoder_hidden,
            activation,
            dropout_p,
            mcd_passes,
            inference_seed,
            rng,
        )
    raise ValueError(f"unknown model kind {kind!r}")


def reconstruct_fields(model, dims, chunk: int = 65536, rng=None):
    """Evaluate mean and variance at every vertex, streaming in chunks.

    Returns two (nx, ny, nz) arrays.  For MCD models pass an rng (or rely
    on the model's inference seed) to make the stochastic passes explicit.
    """
    coords = vertex_coordinates(dims)
    n = coords.shape[0]
    if rng is None and getattr(model, "kind", "") == "mcd":
        rng = np.random.default_rng(model.inference_seed)
    mean = np.empty(n)
    var = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        stats = model.predict_stats(coords[lo:hi], rng=rng)
        mean[lo:hi] = stats.mean
        var[lo:hi] = stats.variance
    return field_to_3d(mean, dims), field_to_3d(var, dims)
