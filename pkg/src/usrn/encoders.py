"""Coordinate encoders: dense feature grid, multiresolution hash grid,
Fourier features, and the dense+fourier composite.

All encoders map (B, 3) coordinates in [-1, 1]^3 to (B, out_dim) features
and share a small duck-typed contract: `out_dim`, `params()`,
`encode(coords) -> (features, cache)`, `backward(cache, dL_dfeatures)`.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import kernels
from .nn import ParamTensor

ENCODER_KINDS = ("dense", "hash", "dense+fourier")

GRID_INIT = 1e-4  # grid/table entries start uniform in +-GRID_INIT


@dataclass(frozen=True)
class EncoderSpec:
    """Serializable description of an encoder architecture."""

    kind: str = "dense"
    resolution: tuple[int, int, int] = (16, 16, 16)
    feature_dim: int = 8
    n_min: int = 4
    n_max: int = 32
    levels: int = 4
    log2_table_size: int = 14
    num_freqs: int = 2

    def __post_init__(self):
        if self.kind not in ENCODER_KINDS:
            raise ValueError(f"encoder kind must be one of {ENCODER_KINDS}")
        res = tuple(int(r) for r in self.resolution)
        if len(res) != 3 or min(res) < 2:
            raise ValueError(f"resolution must be three integers >= 2, got {res}")
        object.__setattr__(self, "resolution", res)
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.kind == "hash":
            if not 1 <= self.n_min <= self.n_max:
                raise ValueError("need 1 <= n_min <= n_max")
            if self.levels < 1:
                raise ValueError("levels must be >= 1")
            if self.levels > 1 and self.n_min == self.n_max:
                raise ValueError("n_min == n_max only makes sense with one level")
            if not 1 <= self.log2_table_size <= 32:
                raise ValueError("log2_table_size must be in [1, 32]")
        if self.kind == "dense+fourier" and self.num_freqs < 0:
            raise ValueError("num_freqs must be >= 0")

    @property
    def out_dim(self) -> int:
        if self.kind == "dense":
            return self.feature_dim
        if self.kind == "hash":
            return self.levels * self.feature_dim
        return self.feature_dim + 6 * self.num_freqs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolution"] = list(self.resolution)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSpec":
        d = dict(d)
        if "resolution" in d:
            d["resolution"] = tuple(d["resolution"])
        return cls(**d)


def hash_level_resolutions(n_min: int, n_max: int, levels: int) -> list[int]:
    """Geometric level resolutions from n_min to n_max inclusive."""
    if levels == 1:
        return [int(n_max)]
    b = (n_max / n_min) ** (1.0 / (levels - 1))
    res = [int(round(n_min * b**l)) for l in range(levels)]
    for lo, hi in zip(res[:-1], res[1:]):
        if hi <= lo:
            raise ValueError(
                f"level resolutions must strictly increase, got {res} "
                f"from (n_min={n_min}, n_max={n_max}, levels={levels})"
            )
    return res


class DenseGridEncoder:
    """Learnable feature vector on every vertex of a dense grid,
    queried by trilinear interpolation."""

    def __init__(self, resolution, feature_dim: int, rng: np.random.Generator):
        self.resolution = tuple(int(r) for r in resolution)
        gx, gy, gz = self.resolution
        self.feature_dim = int(feature_dim)
        self.table = ParamTensor(
            "encoder.grid",
            rng.uniform(-GRID_INIT, GRID_INIT, (gx * gy * gz, self.feature_dim)),
        )

    @property
    def out_dim(self) -> int:
        return self.feature_dim

    def params(self) -> list[ParamTensor]:
        return [self.table]

    def encode(self, coords: np.ndarray):
        gx, gy, gz = self.resolution
        idx, w = kernels.trilinear_corners(gx, gy, gz, coords)
        return kernels.weighted_gather(self.table.values, idx, w), (idx, w)

    def backward(self, cache, dL_dfeat: np.ndarray) -> None:
        idx, w = cache
        kernels.weighted_scatter_add(self.table.grads, idx, w, dL_dfeat)


class HashGridEncoder:
    """NGP-style multiresolution hash grid; level outputs are concatenated."""

    def __init__(
        self,
        n_min: int,
        n_max: int,
        levels: int,
        log2_table_size: int,
        feature_dim: int,
        rng: np.random.Generator,
    ):
        self.level_resolutions = hash_level_resolutions(n_min, n_max, levels)
        self.log2_table_size = int(log2_table_size)
        self.feature_dim = int(feature_dim)
        size = 1 << self.log2_table_size
        self.tables = [
            ParamTensor(
                f"encoder.level{l}",
                rng.uniform(-GRID_INIT, GRID_INIT, (size, self.feature_dim)),
            )
            for l in range(levels)
        ]

    @property
    def out_dim(self) -> int:
        return len(self.tables) * self.feature_dim

    def params(self) -> list[ParamTensor]:
        return list(self.tables)

    def encode(self, coords: np.ndarray):
        blocks = []
        cache = []
        for res, table in zip(self.level_resolutions, self.tables):
            idx, w = kernels.hash_corners(res, self.log2_table_size, coords)
            blocks.append(kernels.weighted_gather(table.values, idx, w))
            cache.append((idx, w))
        return np.concatenate(blocks, axis=1), cache

    def backward(self, cache, dL_dfeat: np.ndarray) -> None:
        f = self.feature_dim
        for l, (table, (idx, w)) in enumerate(zip(self.tables, cache)):
            kernels.weighted_scatter_add(
                table.grads, idx, w, dL_dfeat[:, l * f : (l + 1) * f]
            )


class FourierEncoder:
    """sin/cos features at frequencies 2^k * pi per axis, k < num_freqs.

    Layout is axis-major: for each axis the 2*num_freqs columns alternate
    sin(2^k pi x), cos(2^k pi x) with k ascending.  No learnable state.
    """

    def __init__(self, num_freqs: int):
        if num_freqs < 0:
            raise ValueError("num_freqs must be >= 0")
        self.num_freqs = int(num_freqs)

    @property
    def out_dim(self) -> int:
        return 6 * self.num_freqs

    def params(self) -> list[ParamTensor]:
        return []

    def encode(self, coords: np.ndarray):
        pts = np.asarray(coords, dtype=np.float64)
        k = self.num_freqs
        out = np.empty((pts.shape[0], 6 * k))
        for axis in range(3):
            base = axis * 2 * k
            for f in range(k):
                arg = (2.0**f) * np.pi * pts[:, axis]
                out[:, base + 2 * f] = np.sin(arg)
                out[:, base + 2 * f + 1] = np.cos(arg)
        return out, None

    def backward(self, cache, dL_dfeat: np.ndarray) -> None:
        pass  # no learnable parameters; coordinate gradients are not needed


class CompositeEncoder:
    """Concatenation of a dense grid encoder and Fourier features,
    grid features first."""

    def __init__(self, dense: DenseGridEncoder, fourier: FourierEncoder):
        self.dense = dense
        self.fourier = fourier

    @property
    def out_dim(self) -> int:
        return self.dense.out_dim + self.fourier.out_dim

    def params(self) -> list[ParamTensor]:
        return self.dense.params()

    def encode(self, coords: np.ndarray):
        grid_feat, grid_cache = self.dense.encode(coords)
        four_feat, _ = self.fourier.encode(coords)
        return np.concatenate([grid_feat, four_feat], axis=1), grid_cache

    def backward(self, cache, dL_dfeat: np.ndarray) -> None:
        self.dense.backward(cache, dL_dfeat[:, : self.dense.out_dim])


def build_encoder(spec: EncoderSpec, rng: np.random.Generator):
    """Construct the encoder an EncoderSpec describes."""
    if spec.kind == "dense":
        enc = DenseGridEncoder(spec.resolution, spec.feature_dim, rng)
    elif spec.kind == "hash":
        enc = HashGridEncoder(
            spec.n_min,
            spec.n_max,
            spec.levels,
            spec.log2_table_size,
            spec.feature_dim,
            rng,
        )
    else:
        enc = CompositeEncoder(
            DenseGridEncoder(spec.resolution, spec.feature_dim, rng),
            FourierEncoder(spec.num_freqs),
        )
    if enc.out_dim != spec.out_dim:
        raise ValueError(
            f"encoder width {enc.out_dim} does not match spec width {spec.out_dim}"
        )
    return enc


def dense_grid_encode(g: DenseGridEncoder, coords):
    return g.encode(coords)


def hash_grid_encode(h: HashGridEncoder, coords):
    return h.encode(coords)


def fourier_encode(f: FourierEncoder, coords):
    return f.encode(coords)[0]


def composite_encode(spec: EncoderSpec, encoder, coords):
    """Encode and check the result width against EncoderSpec.out_dim."""
    feats, cache = encoder.encode(coords)
    if feats.shape[1] != spec.out_dim:
        raise ValueError(
            f"encoded width {feats.shape[1]} does not match declared "
            f"out_dim {spec.out_dim}"
        )
    return feats, cache
