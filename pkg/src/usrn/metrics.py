"""Field-level evaluation: PSNR, Pearson correlation, Jaccard index with
spatial tolerance, and Gaussian negative log-likelihood.

Fields are numpy arrays; the spatially aware metric expects 3D arrays.
Ranked voxel sets use a fully deterministic tie-break: value descending,
then flat (C-order) index ascending.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

NLL_VAR_FLOOR = 1e-6


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")


def psnr(pred: np.ndarray, gt: np.ndarray, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; identical fields return +inf."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_same_shape(pred, gt)
    if peak <= 0:
        raise ValueError(f"peak must be > 0, got {peak}")
    mse = float(((pred - gt) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def pearson_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Sample correlation of the flattened fields."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    _check_same_shape(a, b)
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt((da * da).sum()))
    nb = float(np.sqrt((db * db).sum()))
    if na == 0.0 or nb == 0.0:
        raise ValueError("correlation undefined for a constant field")
    return float((da * db).sum() / (na * nb))


def top_fraction_indices(field: np.ndarray, p: float) -> np.ndarray:
    """Flat indices of the top-ceil(p*N) values.

    Ties break deterministically: larger value first, then smaller flat
    index.  Returned in selection order.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"top fraction must be in (0, 1], got {p}")
    flat = np.asarray(field, dtype=np.float64).reshape(-1)
    k = math.ceil(p * flat.size)
    order = np.argsort(-flat, kind="stable")
    return order[:k]


def _dilate_indices(indices: np.ndarray, shape, radius: int) -> set:
    """Chebyshev-ball dilation of a flat-index set on a 3D lattice
    (radius 1 = the 26-connected neighborhood plus the voxel itself)."""
    if radius == 0:
        return set(int(i) for i in indices)
    coords = np.stack(np.unravel_index(indices, shape), axis=1)
    out: set = set()
    offsets = list(product(range(-radius, radius + 1), repeat=3))
    dims = np.asarray(shape)
    for off in offsets:
        shifted = coords + np.asarray(off)
        ok = ((shifted >= 0) & (shifted < dims)).all(axis=1)
        kept = shifted[ok]
        out.update(
            np.ravel_multi_index((kept[:, 0], kept[:, 1], kept[:, 2]), shape).tolist()
        )
    return out


def jaccard_spatial_tolerance(
    var: np.ndarray, err: np.ndarray, p: float, radius: int = 1
) -> float:
    """Overlap of the top-p variance and error voxel sets, tolerating
    spatial offsets of up to `radius` voxels.

    The error set is dilated with a Chebyshev ball before intersection;
    the union stays undilated, so radius 0 is the classical Jaccard index.
    """
    var = np.asarray(var, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    _check_same_shape(var, err)
    if var.ndim != 3:
        raise ValueError(f"expected 3D fields, got shape {var.shape}")
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    a = set(int(i) for i in top_fraction_indices(var, p))
    b_idx = top_fraction_indices(err, p)
    b = set(int(i) for i in b_idx)
    b_dilated = _dilate_indices(b_idx, var.shape, radius)
    union = a | b
    return len(a & b_dilated) / len(union)


def gaussian_nll(
    mean: np.ndarray,
    var: np.ndarray,
    gt: np.ndarray,
    floor: float = NLL_VAR_FLOOR,
) -> float:
    """Mean Gaussian negative log-likelihood with a variance floor."""
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_same_shape(mean, gt)
    _check_same_shape(var, gt)
    v = np.maximum(var, floor)
    per = 0.5 * np.log(2.0 * np.pi * v) + (gt - mean) ** 2 / (2.0 * v)
    return float(per.mean())
