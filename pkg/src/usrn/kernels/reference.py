"""Pure-numpy interpolation kernels.

The compiled extension (``usrn.kernels._fastcore``) mirrors these four
functions exactly; accumulation happens in the same corner order, so both
backends produce bit-identical output.  Keep the two in sync.
"""

from __future__ import annotations

import numpy as np

DOMAIN_EPS = 1e-9

# Spatial hash primes for y and z (x is mixed in unmultiplied).
HASH_PRIME_Y = 2654435761
HASH_PRIME_Z = 805459861

# Corner offsets in x-fastest order: dx flips fastest, dz slowest.
_OFFSETS = np.array(
    [[dx, dy, dz] for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)],
    dtype=np.int64,
)


def _check_domain(coords: np.ndarray) -> np.ndarray:
    """Validate (B, 3) coordinates against [-1, 1]^3 and clamp boundary fuzz."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"coords must have shape (B, 3), got {coords.shape}")
    bad = np.abs(coords) > 1.0 + DOMAIN_EPS
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise ValueError(
            f"coordinate outside [-1,1]^3 at row {row}: {coords[row].tolist()}"
        )
    return np.clip(coords, -1.0, 1.0)


def _corner_weights(frac: np.ndarray) -> np.ndarray:
    """Trilinear weights (B, 8) from per-axis fractional offsets (B, 3)."""
    one = 1.0 - frac
    parts = np.where(_OFFSETS[None, :, :] == 1, frac[:, None, :], one[:, None, :])
    return parts[:, :, 0] * parts[:, :, 1] * parts[:, :, 2]


def trilinear_corners(
    nx: int, ny: int, nz: int, coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Corner indices and weights on a vertex grid of (nx, ny, nz) points.

    Returns flat vertex indices (B, 8) in x-fastest layout and matching
    trilinear weights (B, 8).  Coordinates live in [-1, 1]^3 with vertex i
    of an n-point axis at -1 + 2i/(n-1).
    """
    if min(nx, ny, nz) < 2:
        raise ValueError(f"grid needs >= 2 vertices per axis, got {(nx, ny, nz)}")
    coords = _check_domain(coords)
    dims = np.array([nx, ny, nz], dtype=np.float64)
    u = (coords + 1.0) * 0.5 * (dims - 1.0)
    i0 = np.clip(np.floor(u).astype(np.int64), 0, (dims - 2.0).astype(np.int64))
    frac = u - i0
    corner = i0[:, None, :] + _OFFSETS[None, :, :]
    idx = corner[:, :, 0] + nx * (corner[:, :, 1] + ny * corner[:, :, 2])
    return idx, _corner_weights(frac)


def hash_corners(
    resolution: int, log2_table_size: int, coords: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Corner table indices and weights for one hash-grid level.

    The level has ``resolution`` cells per axis (resolution + 1 vertices).
    When the full vertex lattice fits in the table the mapping is a direct
    x-fastest index (collision-free); otherwise a spatial hash of the
    integer corner, masked to the table size.
    """
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    coords = _check_domain(coords)
    table_size = 1 << log2_table_size
    verts = resolution + 1
    u = (coords + 1.0) * 0.5 * resolution
    i0 = np.clip(np.floor(u).astype(np.int64), 0, resolution - 1)
    frac = u - i0
    corner = (i0[:, None, :] + _OFFSETS[None, :, :]).astype(np.uint64)
    if verts**3 <= table_size:
        idx = corner[:, :, 0] + verts * (corner[:, :, 1] + verts * corner[:, :, 2])
    else:
        # uint64 product/xor then mask; identical to 32-bit wraparound
        # arithmetic for table sizes up to 2^32.
        idx = (
            corner[:, :, 0]
            ^ (corner[:, :, 1] * np.uint64(HASH_PRIME_Y))
            ^ (corner[:, :, 2] * np.uint64(HASH_PRIME_Z))
        ) & np.uint64(table_size - 1)
    return idx.astype(np.int64), _corner_weights(frac)


def weighted_gather(table: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Blend rows of ``table`` (V, F) at indices (B, 8) with weights (B, 8)."""
    table = np.asarray(table, dtype=np.float64)
    rows = table[idx]  # (B, 8, F)
    out = np.zeros((idx.shape[0], table.shape[1]), dtype=np.float64)
    # Accumulate corner by corner so the compiled backend can match bitwise.
    for k in range(8):
        out += w[:, k : k + 1] * rows[:, k, :]
    return out


def weighted_scatter_add(
    out: np.ndarray, idx: np.ndarray, w: np.ndarray, upstream: np.ndarray
) -> None:
    """Accumulate weighted upstream gradients (B, F) into ``out`` (V, F) rows.

    Transpose of :func:`weighted_gather`: out[idx[b,k]] += w[b,k] * upstream[b].
    Modifies ``out`` in place.
    """
    contrib = w[:, :, None] * upstream[:, None, :]  # (B, 8, F)
    np.add.at(out, idx.reshape(-1), contrib.reshape(-1, out.shape[1]))
