"""Acceptance gate: nine go/no-go checks covering gradient correctness,
formula oracles, the desk-scale directional study, rendering degeneracy,
and serialization fidelity.

Each check prints one `[criterion N] PASS/FAIL — ...` line directly to the
terminal (bypassing pytest capture) and then asserts, so a plain pytest run
shows the scoreboard.
"""

import itertools
import math
import sys
import time

import numpy as np
import pytest

from usrn.checkpoint import load_checkpoint, save_checkpoint
from usrn.encoders import EncoderSpec, build_encoder
from usrn.metrics import (
    gaussian_nll,
    jaccard_spatial_tolerance,
    pearson_correlation,
    psnr,
    top_fraction_indices,
)
from usrn.models import (
    LambdaSchedule,
    MDSRNModel,
    TrainConfig,
    build_model,
    ensemble_stats,
    lambda_at,
    member_loss,
    member_loss_grad,
    pv_nll,
    reconstruct_fields,
    train_model,
    variance_regularization_grad,
    variance_regularization_loss,
)
from usrn.nn import finite_difference_check, zero_grads
from usrn.render import (
    Camera,
    RenderConfig,
    default_transfer_function,
    raymarch_mean,
    raymarch_statistical,
)
from usrn.volume import (
    SyntheticSpec,
    VolumeGrid,
    sample_trilinear,
    synthetic_field,
    vertex_coordinates,
)


SCOREBOARD = []


def _report(n: int, ok: bool, detail: str) -> None:
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'} — {detail}"
    SCOREBOARD.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


# ---------------------------------------------------------------------------
# shared desk-scale fixture: 64^3 gaussian-mixture + shell volume carrying a
# band-limited texture the study encoder cannot represent


def _study_volume() -> VolumeGrid:
    # The texture's per-axis frequencies (14-24 cycles per domain) sit above
    # the study encoder's per-axis Nyquist (24 grid vertices -> ~11.5 cycles)
    # but below the volume's own (~31.5), so both trained models share one
    # representational floor near 20*log10(1/eps) and their errors there are
    # structured rather than a converged-fit noise floor. That makes the
    # PSNR comparison a capacity question instead of an optimization-noise
    # question, which is the regime the directional claims describe.
    dims = (64, 64, 64)
    coords = vertex_coordinates(dims)
    rng = np.random.default_rng(9)
    k = 40
    mixture = SyntheticSpec(
        kind="gaussian-mixture",
        dims=dims,
        centers=tuple(tuple(c) for c in rng.uniform(-0.85, 0.85, (k, 3))),
        widths=tuple(rng.uniform(0.08, 0.20, k).tolist()),
        amplitudes=tuple(rng.uniform(0.4, 1.0, k).tolist()),
    )
    shell = SyntheticSpec(kind="shell", dims=dims, radius=0.6, thickness=0.08)
    raw = synthetic_field(mixture, coords) + synthetic_field(shell, coords)
    raw = (raw - raw.min()) / (raw.max() - raw.min())

    waves = 30
    eps = 0.0126
    kvec = np.pi * rng.uniform(14.0, 24.0, (waves, 3))
    kvec *= rng.choice([-1.0, 1.0], size=(waves, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, waves)
    hf = np.zeros(raw.shape)
    for w in range(waves):
        hf += np.sin(coords @ kvec[w] + phase[w])
    hf /= np.sqrt(np.mean(hf**2))

    vals = raw + eps * hf
    vals = (vals - vals.min()) / (vals.max() - vals.min())
    return VolumeGrid(
        dims=dims,
        values=vals,
        raw_range=(0.0, 1.0),
        normalized=True,
        name="textured mixture+shell",
    )


@pytest.fixture(scope="module")
def study_volume():
    return _study_volume()


@pytest.fixture(scope="module")
def study_results(study_volume):
    """Train the regularized and unregularized ensembles and collect the
    field metrics; shared by the directional criteria."""
    encoder = EncoderSpec(kind="dense", resolution=(24, 24, 24), feature_dim=8)
    gt3d = study_volume.to_3d()
    out = {}
    t0 = time.perf_counter()
    for kind, lam_max in (("mdsrn", 0.0), ("rmdsrn", 10.0)):
        cfg = TrainConfig(
            kind=kind,
            steps=3000,
            batch_size=4096,
            members=5,
            decoder_hidden=(64, 64),
            seed=0,
            encoder=encoder,
            lambda_max=lam_max,
            growth=500.0,
        )
        model, _ = train_model(study_volume, cfg)
        mean3d, var3d = reconstruct_fields(model, study_volume.dims)
        err3d = (mean3d - gt3d) ** 2
        out[kind] = {
            "psnr": psnr(mean3d, gt3d),
            "corr": pearson_correlation(var3d, err3d),
            "nll": gaussian_nll(mean3d, var3d, gt3d),
        }
    out["seconds"] = time.perf_counter() - t0
    return out


# ---------------------------------------------------------------------------
# criterion 1: analytic gradients on the toy regularized ensemble


def test_criterion_1_gradient_correctness():
    # fixture conditioning: the smooth snake activation avoids relu-kink
    # crossings that make central differences meaningless at any h, and the
    # encoder table is rescaled because the default 1e-4 init leaves the
    # ensemble variance ~1e-13, far outside the KL term's linear regime.
    # The seed is chosen so no parameter's true gradient sits near the FD
    # roundoff floor (~5e-11 here), where the relative metric saturates.
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    model = MDSRNModel(
        EncoderSpec(kind="dense", resolution=(4, 4, 4), feature_dim=2),
        decoder_hidden=(8, 8),
        members=2,
        activation="snake",
        rng=rng,
        kind="rmdsrn",
    )
    model.encoder.table.values[:] = rng.uniform(
        -0.5, 0.5, model.encoder.table.values.shape
    )
    coords = np.random.default_rng(101).uniform(-0.9, 0.9, (16, 3))
    targets = np.random.default_rng(201).uniform(0.0, 1.0, 16)
    lam = 1.0
    m = 2

    preds0, _ = model.forward_members(coords)
    frozen_sq_err = (ensemble_stats(preds0).mean - targets) ** 2

    def loss():
        preds, _ = model.forward_members(coords)
        stats = ensemble_stats(preds)
        lm = member_loss(preds, targets)
        lv = variance_regularization_loss(stats.variance, frozen_sq_err)
        return lm + lam * lv

    zero_grads(model.params())
    preds, cache = model.forward_members(coords)
    stats = ensemble_stats(preds)
    d = member_loss_grad(preds, targets)
    dvar = variance_regularization_grad(stats.variance, frozen_sq_err)
    d = d + (2.0 * lam / (m - 1)) * dvar[None, :] * (preds - stats.mean[None, :])
    model.backward_members(cache, d)

    rel = finite_difference_check(loss, model.params(), h=1e-6)
    elapsed = time.perf_counter() - t0
    _report(
        1,
        rel < 1e-4 and elapsed < 30.0,
        f"max relative gradient error {rel:.3e} (< 1e-4) in {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# criterion 2: schedule endpoint exactness and monotonicity


def test_criterion_2_scheduler_exactness():
    rng = np.random.default_rng(7)
    endpoint_failures = 0
    monotone_failures = 0
    for _ in range(100):
        lam_min = float(rng.uniform(0.0, 5.0))
        lam_max = lam_min + float(rng.uniform(0.0, 15.0))
        growth = float(rng.uniform(1.5, 1000.0))
        t_max = int(rng.integers(2, 20000))
        s = LambdaSchedule(lam_min, lam_max, growth, t_max)
        if lambda_at(s, 1) != lam_min or lambda_at(s, t_max) != lam_max:
            endpoint_failures += 1
        ts = np.unique(np.linspace(1, t_max, min(t_max, 512)).astype(int))
        vals = [lambda_at(s, int(t)) for t in ts]
        if any(b < a for a, b in zip(vals, vals[1:])):
            monotone_failures += 1

    s = LambdaSchedule(0.25, 10.0, 500.0, 5000)
    dense = [lambda_at(s, t) for t in range(1, 5001)]
    dense_ok = all(b >= a for a, b in zip(dense, dense[1:]))

    _report(
        2,
        endpoint_failures == 0 and monotone_failures == 0 and dense_ok,
        f"100 random tuples: {endpoint_failures} endpoint and "
        f"{monotone_failures} monotonicity failures; dense 5000-step sweep "
        f"monotone={dense_ok}",
    )


# ---------------------------------------------------------------------------
# criterion 3: loss formulas vs brute-force oracles


def _bf_density(values, eps=1e-12):
    total = sum(values)
    d = [v / (total + eps) for v in values]
    d = [max(x, eps) for x in d]
    t = sum(d)
    return [x / t for x in d]


def test_criterion_3_loss_formula_oracles():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(2, 6))
        b = int(rng.integers(1, 9))
        preds = rng.uniform(-1.0, 1.0, (m, b))
        targets = rng.uniform(-1.0, 1.0, b)

        want = sum(
            (preds[i, j] - targets[j]) ** 2 for i in range(m) for j in range(b)
        ) / b
        worst = max(worst, abs(member_loss(preds, targets) - want))

        stats = ensemble_stats(preds)
        for j in range(b):
            mu = sum(preds[i, j] for i in range(m)) / m
            var = sum((preds[i, j] - mu) ** 2 for i in range(m)) / (m - 1)
            worst = max(worst, abs(stats.mean[j] - mu), abs(stats.variance[j] - var))

        variances = rng.uniform(0.0, 1.0, b)
        sq_errors = rng.uniform(0.0, 1.0, b)
        if rng.uniform() < 0.1:
            sq_errors = np.zeros(b)  # exercises the uniform-density fallback
        f_err = _bf_density(sq_errors.tolist())
        f_var = _bf_density(variances.tolist())
        want = sum(
            f_err[j] * math.log(f_err[j] / f_var[j]) for j in range(b)
        ) / b
        got = variance_regularization_loss(variances, sq_errors)
        worst = max(worst, abs(got - want))

        mean = rng.uniform(0.0, 1.0, b)
        var = rng.uniform(0.0, 1.0, b)
        if rng.uniform() < 0.1:
            var = rng.uniform(0.0, 2e-6, b)  # exercises the variance floor
        gt = rng.uniform(0.0, 1.0, b)
        want = sum(
            0.5 * math.log(2.0 * math.pi * max(var[j], 1e-6))
            + (gt[j] - mean[j]) ** 2 / (2.0 * max(var[j], 1e-6))
            for j in range(b)
        ) / b
        worst = max(worst, abs(gaussian_nll(mean, var, gt) - want))

    _report(3, worst <= 1e-9, f"worst |formula - brute force| = {worst:.3e} (<= 1e-9)")


# ---------------------------------------------------------------------------
# criterion 4: desk-scale directional study


def test_criterion_4_directional_study(study_results):
    m = study_results["mdsrn"]
    r = study_results["rmdsrn"]
    secs = study_results["seconds"]
    corr_gap = r["corr"] - m["corr"]
    psnr_diff = abs(r["psnr"] - m["psnr"])
    ok = (
        corr_gap >= 0.05
        and psnr_diff <= 1.5
        and m["psnr"] >= 32.0
        and r["nll"] < m["nll"]
        and secs < 900.0
    )
    _report(
        4,
        ok,
        f"corr {m['corr']:.3f}->{r['corr']:.3f} (gap {corr_gap:+.3f} >= 0.05), "
        f"psnr {m['psnr']:.2f}->{r['psnr']:.2f} dB (|diff| {psnr_diff:.2f} <= 1.5, "
        f"baseline >= 32), nll {m['nll']:.2f}->{r['nll']:.2f} (regularized lower), "
        f"{secs:.0f}s < 900s",
    )


# ---------------------------------------------------------------------------
# criterion 5: statistical rendering degenerates to mean rendering


def test_criterion_5_statistical_render_degeneracy(study_volume):
    encoder = EncoderSpec(kind="dense", resolution=(8, 8, 8), feature_dim=4)
    cfg = TrainConfig(
        kind="mdsrn",
        steps=60,
        batch_size=1024,
        members=3,
        decoder_hidden=(16, 16),
        seed=0,
        encoder=encoder,
    )
    model, _ = train_model(study_volume, cfg)
    for dec in model.decoders[1:]:
        for src, dst in zip(model.decoders[0].params(), dec.params()):
            dst.values[...] = src.values

    cam = Camera(eye=(2.2, 1.6, 2.8), width=128, height=128)
    rcfg = RenderConfig(step=0.05, ref_step=0.05)
    tf = default_transfer_function()
    stat = raymarch_statistical(model, cam, tf, rcfg)
    mean = raymarch_mean(model, cam, tf, rcfg)
    diff = float(np.max(np.abs(stat.pixels - mean.pixels)))
    _report(5, diff < 1e-6, f"max per-channel difference {diff:.3e} (< 1e-6) at 128^2")


# ---------------------------------------------------------------------------
# criterion 6: spatially tolerant Jaccard vs brute-force sets


def _bf_jist(var, err, p, radius):
    n = var.size
    k = math.ceil(p * n)

    def top_set(f):
        flat = f.ravel()
        order = sorted(range(n), key=lambda i: (-flat[i], i))
        return set(order[:k])

    a = top_set(var)
    b = top_set(err)
    shape = var.shape
    dilated = set()
    for flat_idx in b:
        x, y, z = np.unravel_index(flat_idx, shape)
        for dx, dy, dz in itertools.product(range(-radius, radius + 1), repeat=3):
            cx, cy, cz = x + dx, y + dy, z + dz
            if 0 <= cx < shape[0] and 0 <= cy < shape[1] and 0 <= cz < shape[2]:
                dilated.add(int(np.ravel_multi_index((cx, cy, cz), shape)))
    return len(a & dilated) / len(a | b)


def test_criterion_6_jaccard_oracle():
    rng = np.random.default_rng(31)
    mismatches = 0
    for _ in range(10):
        var = rng.uniform(0.0, 1.0, (8, 8, 8))
        err = rng.uniform(0.0, 1.0, (8, 8, 8))
        for p in (0.01, 0.05, 0.25):
            if jaccard_spatial_tolerance(var, err, p, radius=1) != _bf_jist(var, err, p, 1):
                mismatches += 1

    f = rng.uniform(0.0, 1.0, (8, 8, 8))
    identical_ok = all(
        jaccard_spatial_tolerance(f, f, p, radius=1) == 1.0 for p in (0.01, 0.05, 0.25)
    )

    var = rng.uniform(0.0, 1.0, (8, 8, 8))
    err = rng.uniform(0.0, 1.0, (8, 8, 8))
    classical_ok = True
    for p in (0.05, 0.25):
        a = set(top_fraction_indices(var, p).tolist())
        b = set(top_fraction_indices(err, p).tolist())
        if jaccard_spatial_tolerance(var, err, p, radius=0) != len(a & b) / len(a | b):
            classical_ok = False

    _report(
        6,
        mismatches == 0 and identical_ok and classical_ok,
        f"{mismatches} brute-force mismatches over 30 field/fraction pairs; "
        f"identical fields -> 1.0: {identical_ok}; radius 0 == classical: {classical_ok}",
    )


# ---------------------------------------------------------------------------
# criterion 7: checkpoint round trips are bit-exact for every model kind


def test_criterion_7_checkpoint_fidelity(tmp_path):
    rng = np.random.default_rng(2)
    coords = rng.uniform(-1.0, 1.0, (1024, 3))
    encoder = EncoderSpec(kind="dense", resolution=(4, 4, 4), feature_dim=2)
    bad = []
    for kind in ("mdsrn", "rmdsrn", "de", "pv", "mcd"):
        model = build_model(
            kind, encoder, (4, 8), members=2, mcd_passes=3,
            rng=np.random.default_rng(8),
        )
        path = tmp_path / f"{kind}.usrn"
        save_checkpoint(model, path)
        restored, _ = load_checkpoint(path)
        want = model.predict_stats(coords)
        got = restored.predict_stats(coords)
        if not (
            np.array_equal(want.mean, got.mean)
            and np.array_equal(want.variance, got.variance)
        ):
            bad.append(kind)
    _report(
        7,
        not bad,
        "bit-identical predictions on 1024 coordinates for kinds "
        f"mdsrn/rmdsrn/de/pv/mcd{'; FAILED: ' + ','.join(bad) if bad else ''}",
    )


# ---------------------------------------------------------------------------
# criterion 8: baseline models behave


def test_criterion_8_baseline_sanity():
    y = np.linspace(0.1, 0.9, 32)
    nll = pv_nll(y, y, np.ones(32))
    pv_ok = abs(nll - 0.5 * math.log(2.0 * math.pi)) <= 1e-9

    encoder = EncoderSpec(kind="dense", resolution=(4, 4, 4), feature_dim=2)
    mcd = build_model(
        "mcd", encoder, (8, 8), dropout_p=0.0, mcd_passes=4,
        rng=np.random.default_rng(3),
    )
    var = mcd.predict_stats(np.random.default_rng(4).uniform(-1, 1, (64, 3))).variance
    mcd_ok = float(np.max(np.abs(var))) == 0.0

    dims = (6, 6, 6)
    constant = VolumeGrid(
        dims=dims,
        values=np.full(216, 0.5),
        raw_range=(0.5, 0.5),
        normalized=True,
        name="constant",
    )
    cfg = TrainConfig(
        kind="de",
        steps=200,
        batch_size=256,
        members=2,
        decoder_hidden=(16, 16),
        seed=0,
        encoder=encoder,
    )
    model, _ = train_model(constant, cfg)
    preds = model.member_predictions(vertex_coordinates(dims))
    member_mse = float(((preds - 0.5) ** 2).mean(axis=1).max())
    de_ok = member_mse < 1e-4

    _report(
        8,
        pv_ok and mcd_ok and de_ok,
        f"variance-head NLL at (mean=target, var=1): {nll:.12f} vs 0.5*ln(2*pi); "
        f"dropout p=0 max |variance| {float(np.max(np.abs(var))):.1e}; "
        f"2-member ensemble MSE on constant volume {member_mse:.2e} (< 1e-4)",
    )


# ---------------------------------------------------------------------------
# criterion 9: trilinear interpolation reproduces linear fields


def test_criterion_9_trilinear_exactness():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.999, 0.999, (1000, 3))

    def lin(p):
        return 0.5 + 0.15 * p[:, 0] - 0.1 * p[:, 1] + 0.2 * p[:, 2]

    dims = (9, 9, 9)
    vals = lin(vertex_coordinates(dims))
    grid = VolumeGrid(
        dims=dims,
        values=vals,
        raw_range=(float(vals.min()), float(vals.max())),
        normalized=True,
        name="linear",
    )
    vol_err = float(np.max(np.abs(sample_trilinear(grid, pts) - lin(pts))))

    spec = EncoderSpec(kind="dense", resolution=(6, 6, 6), feature_dim=2)
    enc = build_encoder(spec, rng)
    verts = vertex_coordinates((6, 6, 6))
    enc.table.values[:, 0] = lin(verts)
    enc.table.values[:, 1] = 0.2 - 0.3 * verts[:, 2]
    feats, _ = enc.encode(pts)
    enc_err = float(
        max(
            np.max(np.abs(feats[:, 0] - lin(pts))),
            np.max(np.abs(feats[:, 1] - (0.2 - 0.3 * pts[:, 2]))),
        )
    )

    worst = max(vol_err, enc_err)
    _report(
        9,
        worst <= 1e-6,
        f"max |interpolated - analytic| = {worst:.3e} (<= 1e-6) at 1000 interior "
        f"points (volume sampling {vol_err:.1e}, grid encoding {enc_err:.1e})",
    )
