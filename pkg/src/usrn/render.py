"""Raymarching direct volume rendering.

Mean-field rendering, uncertainty-aware statistical rendering (transfer
function classification averaged over ensemble members, weighted by their
Gaussian probability), and top-fraction scalar overlays.  Rays march in
fixed world-space segments with a shortened final segment, so a
homogeneous medium composites to the exact closed form regardless of step
size; opacity is corrected per segment against a reference step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metrics import top_fraction_indices
from .volume import VolumeGrid, sample_trilinear
from . import _toml

_SEG_EPS = 1e-12


@dataclass(frozen=True)
class TransferFunction:
    """Piecewise-linear map from scalar in [0,1] to RGBA; control points
    must start at 0, end at 1, and be strictly increasing."""

    points: tuple

    def __post_init__(self):
        pts = []
        for entry in self.points:
            s, rgba = entry
            rgba = tuple(float(c) for c in rgba)
            if len(rgba) != 4 or min(rgba) < 0.0 or max(rgba) > 1.0:
                raise ValueError(f"rgba components must be in [0,1], got {rgba}")
            pts.append((float(s), rgba))
        if len(pts) < 2:
            raise ValueError("transfer function needs at least 2 control points")
        svals = [s for s, _ in pts]
        if svals[0] != 0.0 or svals[-1] != 1.0:
            raise ValueError("control points must start at 0 and end at 1")
        if any(b <= a for a, b in zip(svals[:-1], svals[1:])):
            raise ValueError("control point scalars must strictly increase")
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "_s", np.array(svals))
        object.__setattr__(
            self, "_rgba", np.array([rgba for _, rgba in pts], dtype=np.float64)
        )

    def lookup(self, values: np.ndarray) -> np.ndarray:
        """Vectorized rgba lookup, values clamped into [0, 1]; (B, 4)."""
        s = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        out = np.empty((s.size, 4))
        for c in range(4):
            out[:, c] = np.interp(s, self._s, self._rgba[:, c])
        return out

    @classmethod
    def from_file(cls, path) -> "TransferFunction":
        """Read a TOML file with `points = [[s, r, g, b, a], ...]`."""
        with open(path, "rb") as fh:
            data = _toml.load(fh)
        if "points" not in data:
            raise ValueError(f"transfer function file {path} lacks a 'points' list")
        return cls(tuple((row[0], tuple(row[1:])) for row in data["points"]))


def tf_lookup(tf: TransferFunction, s: float) -> tuple:
    """Single-scalar convenience wrapper around TransferFunction.lookup."""
    return tuple(tf.lookup(np.array([s]))[0])


def default_transfer_function() -> TransferFunction:
    """Cool-to-warm ramp with opacity growing toward high values."""
    return TransferFunction(
        (
            (0.0, (0.0, 0.0, 0.0, 0.0)),
            (0.35, (0.2, 0.35, 0.85, 0.04)),
            (0.7, (0.15, 0.8, 0.45, 0.3)),
            (1.0, (0.95, 0.4, 0.1, 0.9)),
        )
    )


@dataclass(frozen=True)
class Camera:
    """Pinhole camera looking at the volume."""

    eye: tuple
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 1.0, 0.0)
    fov_deg: float = 40.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        eye = np.asarray(self.eye, dtype=np.float64)
        look = np.asarray(self.look_at, dtype=np.float64)
        up = np.asarray(self.up, dtype=np.float64)
        if eye.shape != (3,) or look.shape != (3,) or up.shape != (3,):
            raise ValueError("eye, look_at and up must be 3-vectors")
        fwd = look - eye
        if np.linalg.norm(fwd) == 0.0:
            raise ValueError("eye and look_at coincide")
        if np.linalg.norm(np.cross(fwd, up)) < 1e-12:
            raise ValueError("up vector is parallel to the view direction")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError(f"fov must be in (0, 180), got {self.fov_deg}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        object.__setattr__(self, "eye", tuple(float(v) for v in eye))
        object.__setattr__(self, "look_at", tuple(float(v) for v in look))
        object.__setattr__(self, "up", tuple(float(v) for v in up))

    def rays(self):
        """Ray origins and unit directions, one per pixel, row-major from
        the top-left pixel; shapes (W*H, 3)."""
        eye = np.asarray(self.eye)
        fwd = np.asarray(self.look_at) - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        half_h = math.tan(math.radians(self.fov_deg) / 2.0)
        half_w = half_h * self.width / self.height
        cols = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        rows = 1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0
        u, v = np.meshgrid(cols, rows)  # (H, W)
        dirs = (
            fwd[None, :]
            + (u.reshape(-1, 1) * half_w) * right[None, :]
            + (v.reshape(-1, 1) * half_h) * true_up[None, :]
        )
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(eye, dirs.shape).copy()
        return origins, dirs


@dataclass(frozen=True)
class RenderConfig:
    """Marching parameters; `step`/`ref_step` of None derive a default of
    half a voxel diagonal from the volume dimensions (0.02 if unknown)."""

    step: float | None = None
    ref_step: float | None = None
    threshold: float = 0.99
    background: tuple = (0.0, 0.0, 0.0, 1.0)
    var_floor: float = 1e-6
    max_steps: int = 100000

    def __post_init__(self):
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be > 0")
        if self.ref_step is not None and self.ref_step <= 0:
            raise ValueError("ref_step must be > 0")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        bg = tuple(float(c) for c in self.background)
        if len(bg) != 4:
            raise ValueError("background must be rgba")
        object.__setattr__(self, "background", bg)


@dataclass(frozen=True)
class RenderedImage:
    width: int
    height: int
    pixels: np.ndarray  # (H, W, 4) float in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.height, self.width, 4):
            raise ValueError(
                f"pixels shape {px.shape} does not match "
                f"{self.height}x{self.width} rgba"
            )
        object.__setattr__(self, "pixels", px)

    def to_png(self, path) -> None:
        from PIL import Image

        arr = (np.clip(self.pixels, 0.0, 1.0) * 255.0).round().astype(np.uint8)
        Image.fromarray(arr, "RGBA").save(path)


def default_step(dims) -> float:
    """Half of one voxel diagonal for a volume of the given dimensions."""
    spacing = [2.0 / (n - 1) for n in dims]
    return 0.5 * math.sqrt(sum(s * s for s in spacing))


def _resolve_steps(cfg: RenderConfig, dims):
    step = cfg.step if cfg.step is not None else (
        default_step(dims) if dims is not None else 0.02
    )
    ref = cfg.ref_step if cfg.ref_step is not None else step
    return step, ref


def ray_box_intersection(origins: np.ndarray, dirs: np.ndarray):
    """Slab intersection with [-1, 1]^3; returns (t_enter, t_exit, hit)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        ta = (-1.0 - origins) * inv
        tb = (1.0 - origins) * inv
    tmin = np.fmin(ta, tb)
    tmax = np.fmax(ta, tb)
    t0 = np.maximum(tmin.max(axis=1), 0.0)
    t1 = tmax.min(axis=1)
    return t0, t1, t1 > t0


def _march(classify, cam: Camera, cfg: RenderConfig, dims=None) -> RenderedImage:
    """Front-to-back compositing engine.

    `classify(points) -> (n, 4)` maps sample positions to rgba.  Per
    segment of length L the opacity is corrected as 1 - (1-a)^(L/ref) and
    composited front to back with early termination.
    """
    step, ref = _resolve_steps(cfg, dims)
    origins, dirs = cam.rays()
    n = origins.shape[0]
    t0, t1, hit = ray_box_intersection(origins, dirs)
    color = np.zeros((n, 3))
    alpha = np.zeros(n)
    valid = hit
    for k in range(cfg.max_steps):
        seg_start = t0 + k * step
        live = valid & (seg_start < t1 - _SEG_EPS) & (alpha < cfg.threshold)
        if not live.any():
            break
        start = seg_start[live]
        end = np.minimum(start + step, t1[live])
        mid = 0.5 * (start + end)
        pts = origins[live] + mid[:, None] * dirs[live]
        np.clip(pts, -1.0, 1.0, out=pts)
        rgba = classify(pts)
        a = np.clip(rgba[:, 3], 0.0, 1.0)
        corr = 1.0 - (1.0 - a) ** ((end - start) / ref)
        trans = 1.0 - alpha[live]
        color[live] += (trans * corr)[:, None] * rgba[:, :3]
        alpha[live] += trans * corr
    bg = cfg.background
    out = np.empty((n, 4))
    out[:, :3] = color + ((1.0 - alpha) * bg[3])[:, None] * np.asarray(bg[:3])
    out[:, 3] = alpha + (1.0 - alpha) * bg[3]
    return RenderedImage(
        width=cam.width,
        height=cam.height,
        pixels=out.reshape(cam.height, cam.width, 4),
    )


def _as_scalar_field(source):
    """Adapt a VolumeGrid, model, or callable to (field_fn, dims)."""
    if isinstance(source, VolumeGrid):
        return (lambda pts: sample_trilinear(source, pts)), source.dims
    if hasattr(source, "predict_stats"):
        return (lambda pts: source.predict_stats(pts).mean), None
    if callable(source):
        return source, None
    raise TypeError(f"cannot render from {type(source).__name__}")


def raymarch_mean(source, cam: Camera, tf: TransferFunction, cfg: RenderConfig) -> RenderedImage:
    """Render the scalar field (volume, model mean, or callable) directly."""
    field, dims = _as_scalar_field(source)
    return _march(lambda pts: tf.lookup(field(pts)), cam, cfg, dims)


def statistical_rgba(preds: np.ndarray, tf: TransferFunction, var_floor: float) -> np.ndarray:
    """Expected rgba over ensemble members.

    Members are weighted by their probability under the Gaussian fitted to
    the member spread; the normalizer cancels the density prefactor, so
    weights come from a softmax over exponent differences.  Points whose
    variance sits below `var_floor` classify the mean directly.
    """
    preds = np.asarray(preds, dtype=np.float64)
    m, n = preds.shape
    if m < 2:
        raise ValueError("statistical classification needs at least 2 members")
    mean = preds.mean(axis=0)
    var = ((preds - mean) ** 2).sum(axis=0) / (m - 1)
    out = np.empty((n, 4))
    low = var < var_floor
    if low.any():
        out[low] = tf.lookup(mean[low])
    hi = ~low
    if hi.any():
        f = preds[:, hi]
        expo = -((f - mean[hi]) ** 2) / (2.0 * var[hi])
        expo -= expo.max(axis=0)
        w = np.exp(expo)
        w /= w.sum(axis=0)
        member_rgba = tf.lookup(f.reshape(-1)).reshape(m, -1, 4)
        out[hi] = (w[:, :, None] * member_rgba).sum(axis=0)
    return out


def raymarch_statistical(model, cam: Camera, tf: TransferFunction, cfg: RenderConfig) -> RenderedImage:
    """Uncertainty-aware rendering from an ensemble-style model."""
    if not hasattr(model, "member_predictions"):
        raise TypeError("statistical rendering needs a model with member predictions")

    def classify(pts):
        return statistical_rgba(model.member_predictions(pts), tf, cfg.var_floor)

    return _march(classify, cam, cfg, None)


def render_scalar_overlay(
    grid: VolumeGrid,
    top_fraction: float,
    cam: Camera,
    tf: TransferFunction,
    cfg: RenderConfig,
) -> RenderedImage:
    """Render only the top-`top_fraction` voxels of a scalar field.

    Voxels outside the top set (ranked with the deterministic value/index
    tie-break) become fully transparent; membership is resolved at the
    nearest voxel of each sample point.
    """
    keep = np.zeros(grid.n_voxels, dtype=bool)
    keep[top_fraction_indices(grid.values, top_fraction)] = True
    nx, ny, nz = grid.dims

    def classify(pts):
        rgba = tf.lookup(sample_trilinear(grid, pts))
        ix = np.clip(np.rint((pts[:, 0] + 1.0) * 0.5 * (nx - 1)), 0, nx - 1)
        iy = np.clip(np.rint((pts[:, 1] + 1.0) * 0.5 * (ny - 1)), 0, ny - 1)
        iz = np.clip(np.rint((pts[:, 2] + 1.0) * 0.5 * (nz - 1)), 0, nz - 1)
        flat = (ix + nx * (iy + ny * iz)).astype(np.int64)
        rgba[:, 3] *= keep[flat]
        return rgba

    return _march(classify, cam, cfg, grid.dims)
