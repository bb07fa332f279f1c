"""TOML run configuration.

One file with sections `volume`, `train`, `schedule`, `encoder`, `render`,
`metrics`; every key has a default and can be overridden on the command
line with `--set section.key=value`.  Unknown sections or keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from . import _toml
from .encoders import EncoderSpec
from .models import TrainConfig
from .render import Camera, RenderConfig, TransferFunction, default_transfer_function
from .volume import SyntheticSpec, VolumeGrid, load_raw_volume, make_synthetic_volume, normalize_volume


class InvalidConfigError(ValueError):
    """An unknown section/key or an unusable value in the run config."""


_KNOWN = {
    "volume": {
        "path",
        "kind",
        "dims",
        "seed",
        "num_components",
        "centers",
        "widths",
        "amplitudes",
        "center",
        "radius",
        "thickness",
        "value",
        "axis",
    },
    "train": {
        "kind",
        "steps",
        "batch_size",
        "lr",
        "lr_min",
        "seed",
        "members",
        "decoder_hidden",
        "activation",
        "dropout_p",
        "mcd_passes",
        "pv_var_floor",
    },
    "schedule": {"lambda_min", "lambda_max", "growth"},
    "encoder": {
        "kind",
        "resolution",
        "feature_dim",
        "n_min",
        "n_max",
        "levels",
        "log2_table_size",
        "num_freqs",
    },
    "render": {
        "width",
        "height",
        "step",
        "ref_step",
        "threshold",
        "background",
        "var_floor",
        "eye",
        "look_at",
        "up",
        "fov",
        "tf",
        "overlay_fraction",
        "max_steps",
    },
    "metrics": {"top_fractions", "radius", "nll_floor", "chunk"},
}


@dataclass(frozen=True)
class RenderSettings:
    width: int = 512
    height: int = 512
    step: float | None = None
    ref_step: float | None = None
    threshold: float = 0.99
    background: tuple = (0.0, 0.0, 0.0, 1.0)
    var_floor: float = 1e-6
    eye: tuple = (2.2, 1.6, 2.8)
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov: float = 40.0
    tf: str | None = None
    overlay_fraction: float = 0.05
    max_steps: int = 100000

    def camera(self) -> Camera:
        return Camera(
            eye=self.eye,
            look_at=self.look_at,
            up=self.up,
            fov_deg=self.fov,
            width=self.width,
            height=self.height,
        )

    def render_config(self) -> RenderConfig:
        return RenderConfig(
            step=self.step,
            ref_step=self.ref_step,
            threshold=self.threshold,
            background=self.background,
            var_floor=self.var_floor,
            max_steps=self.max_steps,
        )

    def transfer_function(self) -> TransferFunction:
        if self.tf is None:
            return default_transfer_function()
        return TransferFunction.from_file(self.tf)


@dataclass(frozen=True)
class MetricSettings:
    top_fractions: tuple = (0.01, 0.05)
    radius: int = 1
    nll_floor: float = 1e-6
    chunk: int = 65536


@dataclass(frozen=True)
class RunConfig:
    volume_path: str | None
    synthetic: SyntheticSpec | None
    train: TrainConfig
    render: RenderSettings
    metrics: MetricSettings
    raw: dict


def _check_keys(data: dict) -> None:
    for section, content in data.items():
        if section not in _KNOWN:
            raise InvalidConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise InvalidConfigError(f"[{section}] must be a table of keys")
        for key in content:
            if key not in _KNOWN[section]:
                raise InvalidConfigError(f"unknown config key: {section}.{key}")


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def config_from_dict(data: dict) -> RunConfig:
    """Validate a merged config dict and build the typed RunConfig."""
    _check_keys(data)
    vol = dict(data.get("volume", {}))
    volume_path = vol.pop("path", None)
    synthetic = None
    if volume_path is not None and vol:
        raise InvalidConfigError(
            "volume.path does not combine with synthetic keys: "
            + ", ".join(sorted(vol))
        )
    if "kind" in vol:
        try:
            synthetic = SyntheticSpec(
                **{k: _tupled(v) for k, v in vol.items()}
            )
        except (TypeError, ValueError) as exc:
            raise InvalidConfigError(f"bad synthetic volume spec: {exc}") from exc
    elif volume_path is None and vol:
        raise InvalidConfigError(
            "volume section needs either path or a synthetic kind"
        )

    enc = {k: _tupled(v) for k, v in data.get("encoder", {}).items()}
    sched = data.get("schedule", {})
    train_kw = {k: _tupled(v) for k, v in data.get("train", {}).items()}
    try:
        encoder = EncoderSpec(**enc)
        train = TrainConfig(
            encoder=encoder,
            lambda_min=sched.get("lambda_min", 0.0),
            lambda_max=sched.get("lambda_max", 10.0),
            growth=sched.get("growth", 500.0),
            **train_kw,
        )
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"bad training config: {exc}") from exc

    rnd = {k: _tupled(v) for k, v in data.get("render", {}).items()}
    met = {k: _tupled(v) for k, v in data.get("metrics", {}).items()}
    try:
        render = RenderSettings(**rnd)
        metrics = MetricSettings(**met)
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"bad render/metrics config: {exc}") from exc
    return RunConfig(
        volume_path=volume_path,
        synthetic=synthetic,
        train=train,
        render=render,
        metrics=metrics,
        raw=data,
    )


def parse_override(text: str):
    """Parse one `section.key=value` override; values use TOML syntax,
    falling back to a plain string."""
    if "=" not in text:
        raise InvalidConfigError(f"override {text!r} is not section.key=value")
    target, value = text.split("=", 1)
    if "." not in target:
        raise InvalidConfigError(f"override target {target!r} lacks a section")
    section, key = target.split(".", 1)
    section, key, value = section.strip(), key.strip(), value.strip()
    try:
        parsed = _toml.loads(f"v = {value}")["v"]
    except _toml.TOMLDecodeError:
        parsed = value
    return section, key, parsed


def load_run_config(path, overrides=()) -> RunConfig:
    """Read a TOML config file and apply command line overrides."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            data = _toml.load(fh)
        except _toml.TOMLDecodeError as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
    for text in overrides:
        section, key, value = parse_override(text)
        data.setdefault(section, {})[key] = value
    return config_from_dict(data)


def load_volume_from_config(rc: RunConfig) -> VolumeGrid:
    """Materialize the configured volume, normalized and ready to train on."""
    if rc.volume_path is not None:
        grid = load_raw_volume(rc.volume_path)
        return grid if grid.normalized else normalize_volume(grid)
    if rc.synthetic is not None:
        return make_synthetic_volume(rc.synthetic)
    raise InvalidConfigError("config declares no volume (path or synthetic kind)")
