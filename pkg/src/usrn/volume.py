"""Scalar volumes: raw I/O, normalization, trilinear sampling, batches, synthesis.

Conventions used throughout the package:

* The volume occupies the normalized domain [-1, 1]^3.  Vertex i of an
  n-point axis sits at -1 + 2i/(n-1).
* Flat value arrays are x-fastest: flat index = ix + nx*(iy + ny*iz).
* All in-memory math is float64; the on-disk raw format is little-endian
  float32 with a TOML sidecar describing the dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _toml, kernels

RAW_DTYPE = "f32le"

SYNTHETIC_KINDS = ("gaussian-mixture", "shell", "linear-ramp", "constant")

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class VolumeGrid:
    """Immutable discretized scalar field.

    `values` is the flat x-fastest array; `raw_range` keeps the (min, max)
    of the data the grid was derived from so normalization can be inverted.
    """

    dims: tuple[int, int, int]
    values: np.ndarray
    raw_range: tuple[float, float]
    normalized: bool = False
    name: str = "volume"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise ValueError(f"dims must be three integers >= 2, got {self.dims}")
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"expected {dims[0] * dims[1] * dims[2]} values for dims {dims}, "
                f"got {values.size}"
            )
        if not np.isfinite(values).all():
            raise ValueError("volume contains non-finite values")
        if self.normalized and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("normalized volume has values outside [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)
        object.__setattr__(
            self, "raw_range", (float(self.raw_range[0]), float(self.raw_range[1]))
        )

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def to_3d(self) -> np.ndarray:
        """Values as an (nx, ny, nz) array indexed [ix, iy, iz]."""
        nx, ny, nz = self.dims
        return self.values.reshape(nz, ny, nx).transpose(2, 1, 0)


@dataclass(frozen=True)
class TrainingBatch:
    """Coordinate/target pairs; coordinates always sit on voxel vertices."""

    coords: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must be (B, 3), got {coords.shape}")
        if coords.shape[0] != targets.size or targets.size < 1:
            raise ValueError("coords and targets must have equal count B >= 1")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "targets", targets)

    @property
    def size(self) -> int:
        return self.targets.size


def _axis_coords(n: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def vertex_coordinates(dims) -> np.ndarray:
    """Normalized coordinates of every vertex, x-fastest order, shape (N, 3)."""
    nx, ny, nz = dims
    zz, yy, xx = np.meshgrid(
        _axis_coords(nz), _axis_coords(ny), _axis_coords(nx), indexing="ij"
    )
    return np.stack([xx.reshape(-1), yy.reshape(-1), zz.reshape(-1)], axis=1)


def field_to_3d(flat: np.ndarray, dims) -> np.ndarray:
    """Reshape an x-fastest flat field to (nx, ny, nz)."""
    nx, ny, nz = dims
    return np.asarray(flat).reshape(nz, ny, nx).transpose(2, 1, 0)


def _read_sidecar(path: Path) -> dict:
    with open(path, "rb") as fh:
        return _toml.load(fh)


def load_raw_volume(path, meta=None) -> VolumeGrid:
    """Read a little-endian float32 raw volume.

    `meta` may be a dict with keys `dims`/`dtype`/`name`, a path to a TOML
    sidecar with those keys, or None to use `<path stem>.toml` next to the
    raw file.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"raw volume not found: {path}")
    if meta is None:
        meta = path.with_suffix(".toml")
    if not isinstance(meta, dict):
        meta_path = Path(meta)
        if not meta_path.is_file():
            raise FileNotFoundError(f"volume metadata not found: {meta_path}")
        meta = _read_sidecar(meta_path)
    try:
        dims = tuple(int(d) for d in meta["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"metadata must declare integer dims: {exc}") from exc
    dtype = meta.get("dtype", RAW_DTYPE)
    if dtype != RAW_DTYPE:
        raise ValueError(f"unsupported raw dtype {dtype!r}; only {RAW_DTYPE!r}")
    if len(dims) != 3:
        raise ValueError(f"dims must have three entries, got {dims}")
    expected = dims[0] * dims[1] * dims[2] * 4
    actual = path.stat().st_size
    if actual != expected:
        raise ValueError(
            f"raw file size mismatch: dims {dims} need {expected} bytes, "
            f"file has {actual}"
        )
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    if not np.isfinite(raw).all():
        raise ValueError(f"raw volume {path} contains non-finite values")
    return VolumeGrid(
        dims=dims,
        values=raw,
        raw_range=(float(raw.min()), float(raw.max())),
        normalized=False,
        name=str(meta.get("name", path.stem)),
    )


def save_raw_volume(path, grid: VolumeGrid) -> None:
    """Write `<path>` as little-endian float32 plus a TOML sidecar."""
    path = Path(path)
    grid.values.astype("<f4").tofile(path)
    nx, ny, nz = grid.dims
    sidecar = path.with_suffix(".toml")
    sidecar.write_text(
        f"dims = [{nx}, {ny}, {nz}]\n"
        f'dtype = "{RAW_DTYPE}"\n'
        f'name = "{grid.name}"\n'
    )


def normalize_volume(v: VolumeGrid) -> VolumeGrid:
    """Min-max scale values to [0, 1], recording the source range."""
    lo = float(v.values.min())
    hi = float(v.values.max())
    if hi == lo:
        raise ValueError(f"cannot normalize constant volume (value {lo})")
    return VolumeGrid(
        dims=v.dims,
        values=(v.values - lo) / (hi - lo),
        raw_range=(lo, hi),
        normalized=True,
        name=v.name,
    )


def sample_trilinear(v: VolumeGrid, coords):
    """Trilinear interpolation of the volume at coordinates in [-1, 1]^3.

    Accepts one coordinate (3,) and returns a float, or a batch (B, 3) and
    returns (B,).
    """
    pts = np.asarray(coords, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    nx, ny, nz = v.dims
    idx, w = kernels.trilinear_corners(nx, ny, nz, pts)
    out = kernels.weighted_gather(v.values[:, None], idx, w)[:, 0]
    return float(out[0]) if single else out


def sample_training_batch(
    v: VolumeGrid, batch_size: int, rng: np.random.Generator
) -> TrainingBatch:
    """Uniformly sample `batch_size` voxel vertices with replacement."""
    if not v.normalized:
        raise ValueError("training batches require a normalized volume")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    nx, ny, nz = v.dims
    flat = rng.integers(0, v.n_voxels, size=batch_size)
    ix = flat % nx
    iy = (flat // nx) % ny
    iz = flat // (nx * ny)
    coords = np.stack(
        [_axis_coords(nx)[ix], _axis_coords(ny)[iy], _axis_coords(nz)[iz]], axis=1
    )
    return TrainingBatch(coords=coords, targets=v.values[flat])


@dataclass(frozen=True)
class SyntheticSpec:
    """Description of an analytic test field.

    Kinds: gaussian-mixture (sum of isotropic gaussian blobs; explicit
    centers/widths/amplitudes, or drawn from `seed` when centers is None),
    shell (gaussian profile around a sphere of given radius), linear-ramp
    (field equals one coordinate), constant.
    """

    kind: str = "gaussian-mixture"
    dims: tuple[int, int, int] = (32, 32, 32)
    centers: tuple | None = None
    widths: tuple | None = None
    amplitudes: tuple | None = None
    seed: int = 0
    num_components: int = 4
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.6
    thickness: float = 0.15
    value: float = 0.5
    axis: str = "x"

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or min(dims) < 2:
            raise ValueError(f"dims must be three integers >= 2, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {sorted(_AXES)}, got {self.axis!r}")
        if self.radius <= 0 or self.thickness <= 0:
            raise ValueError("radius and thickness must be strictly positive")
        if self.num_components < 1:
            raise ValueError("num_components must be >= 1")
        if self.centers is not None and self.widths is not None:
            if len(self.widths) != len(self.centers):
                raise ValueError("widths and centers must have equal length")
        if self.widths is not None and min(self.widths) <= 0:
            raise ValueError("widths must be strictly positive")


def _mixture_params(spec: SyntheticSpec):
    if spec.centers is not None:
        centers = np.asarray(spec.centers, dtype=np.float64).reshape(-1, 3)
        k = centers.shape[0]
        widths = (
            np.full(k, 0.25)
            if spec.widths is None
            else np.asarray(spec.widths, dtype=np.float64)
        )
        amps = (
            np.ones(k)
            if spec.amplitudes is None
            else np.asarray(spec.amplitudes, dtype=np.float64)
        )
        if widths.size != k or amps.size != k:
            raise ValueError("centers, widths and amplitudes must have equal length")
        return centers, widths, amps
    rng = np.random.default_rng(spec.seed)
    k = spec.num_components
    centers = rng.uniform(-0.6, 0.6, size=(k, 3))
    widths = rng.uniform(0.15, 0.35, size=k)
    amps = rng.uniform(0.5, 1.0, size=k)
    return centers, widths, amps


def synthetic_field(spec: SyntheticSpec, coords: np.ndarray) -> np.ndarray:
    """Raw (unnormalized) analytic field evaluated at (B, 3) coordinates."""
    pts = np.asarray(coords, dtype=np.float64)
    if spec.kind == "gaussian-mixture":
        centers, widths, amps = _mixture_params(spec)
        out = np.zeros(pts.shape[0])
        for c, w, a in zip(centers, widths, amps):
            d2 = ((pts - c) ** 2).sum(axis=1)
            out += a * np.exp(-d2 / (2.0 * w * w))
        return out
    if spec.kind == "shell":
        dist = np.sqrt(((pts - np.asarray(spec.center, dtype=np.float64)) ** 2).sum(axis=1))
        return np.exp(-((dist - spec.radius) ** 2) / (2.0 * spec.thickness**2))
    if spec.kind == "linear-ramp":
        return pts[:, _AXES[spec.axis]].copy()
    if spec.kind == "constant":
        return np.full(pts.shape[0], float(spec.value))
    raise ValueError(f"unknown synthetic kind {spec.kind!r}")


def make_synthetic_volume(spec: SyntheticSpec) -> VolumeGrid:
    """Evaluate the analytic field at every vertex and min-max normalize.

    A constant field cannot be normalized and raises, like any other
    degenerate-range volume.
    """
    values = synthetic_field(spec, vertex_coordinates(spec.dims))
    raw = VolumeGrid(
        dims=spec.dims,
        values=values,
        raw_range=(float(values.min()), float(values.max())),
        normalized=False,
        name=spec.kind,
    )
    return normalize_volume(raw)
