"""Acceptance gates for the synthesis library.

Each test checks one shipping criterion at its stated tolerance and prints
one PASS/FAIL line; run ``pytest tests/test_acceptance.py -v -s`` to see
the lines, or execute this file directly.  The tolerances and fixture
scales are part of the contract; changing them is a breaking change.
"""

import sys
import time

import numpy as np
from scipy.ndimage import gaussian_filter

from test_style import match_patch_direct

from sketchsynth import style
from sketchsynth.ablation import run_ablation
from sketchsynth.config import Rect, SynthesisConfig, apply_preset
from sketchsynth.content import ContentNetConfig, train
from sketchsynth.lbfgs import lbfgs_minimize
from sketchsynth.losses import SketchObjective
from sketchsynth.ops import (
    ConvLayerParams,
    RunningStats,
    avgpool2x2,
    avgpool2x2_backward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    conv2d_input_grad,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
)
from sketchsynth.pipeline import synthesize
from sketchsynth.style import build_exemplar_set, crop_column, grid_cells, target_grams
from sketchsynth.tensorfile import read_tensorfile, write_tensorfile
from sketchsynth.vgg import (
    STRIDES,
    extract,
    first_tap,
    fold_gray,
    load_vgg_weights,
    random_vgg_weights,
)

FIXTURE_PATH = "tests/fixtures/vgg_fixture.tf"


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} [{name}] {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def _numeric_grad(f, x: np.ndarray, coords, h: float):
    """Central differences of f() while mutating x in place at flat coords."""
    flat = x.reshape(-1)
    out = np.empty(len(coords))
    for i, idx in enumerate(coords):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f()
        flat[idx] = orig - h
        fm = f()
        flat[idx] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out


def _worst_rel(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)))


def _kernel_fixture_errors(n_fixtures: int = 20):
    """Worst relative FD error per backward kernel over fresh random draws."""
    worst = {"conv": 0.0, "maxpool": 0.0, "avgpool": 0.0, "relu": 0.0, "batchnorm": 0.0}
    for i in range(n_fixtures):
        rng = np.random.default_rng(100 + i)
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        h_img, w_img = int(rng.integers(5, 9)), int(rng.integers(5, 9))

        params = ConvLayerParams(
            rng.normal(0, 0.5, (cout, cin, 3, 3)), rng.normal(0, 0.1, cout), 1, "zero"
        )
        x = rng.normal(0, 1, (1, cin, h_img, w_img))
        probe = rng.normal(0, 1, (1, cout, h_img, w_img))
        _, cache = conv2d_forward(x, params, want_cache=True)
        dx, dw, db = conv2d_backward(cache, probe)
        coords = rng.choice(x.size, 4, replace=False)
        num = _numeric_grad(lambda: float(np.sum(probe * conv2d_forward(x, params))), x, coords, 1e-6)
        worst["conv"] = max(worst["conv"], _worst_rel(dx.ravel()[coords], num))
        assert np.allclose(dx, conv2d_input_grad(params, probe, x.shape))
        wcoords = rng.choice(params.weights.size, 4, replace=False)
        num = _numeric_grad(
            lambda: float(np.sum(probe * conv2d_forward(x, params))), params.weights, wcoords, 1e-6
        )
        worst["conv"] = max(worst["conv"], _worst_rel(dw.ravel()[wcoords], num))
        num = _numeric_grad(
            lambda: float(np.sum(probe * conv2d_forward(x, params))), params.bias, [0], 1e-6
        )
        worst["conv"] = max(worst["conv"], _worst_rel(db[:1], num))

        # Distinct, well-separated values keep the argmax stable under FD steps.
        xm = (rng.permutation(np.arange(2 * 6 * 6, dtype=np.float64)) * 0.05).reshape(1, 2, 6, 6)
        probe_p = rng.normal(0, 1, (1, 2, 3, 3))

        def f_max():
            return float(np.sum(probe_p * maxpool2x2(xm)[0]))

        _, idx = maxpool2x2(xm)
        dxm = maxpool2x2_backward(probe_p, idx, xm.shape)
        coords = rng.choice(xm.size, 4, replace=False)
        worst["maxpool"] = max(
            worst["maxpool"], _worst_rel(dxm.ravel()[coords], _numeric_grad(f_max, xm, coords, 1e-6))
        )

        xa = rng.normal(0, 1, (1, 2, 6, 6))
        dxa = avgpool2x2_backward(probe_p, xa.shape)

        def f_avg():
            return float(np.sum(probe_p * avgpool2x2(xa)))

        coords = rng.choice(xa.size, 4, replace=False)
        worst["avgpool"] = max(
            worst["avgpool"], _worst_rel(dxa.ravel()[coords], _numeric_grad(f_avg, xa, coords, 1e-6))
        )

        xr = rng.choice([-1.0, 1.0], (1, 2, 5, 5)) * rng.uniform(0.3, 1.0, (1, 2, 5, 5))
        probe_r = rng.normal(0, 1, xr.shape)
        dxr = relu_backward(xr, probe_r)

        def f_relu():
            return float(np.sum(probe_r * relu(xr)))

        coords = rng.choice(xr.size, 4, replace=False)
        worst["relu"] = max(
            worst["relu"], _worst_rel(dxr.ravel()[coords], _numeric_grad(f_relu, xr, coords, 1e-6))
        )

        xb = rng.normal(0, 1, (2, 3, 4, 4))
        gamma, beta = rng.uniform(0.5, 1.5, 3), rng.normal(0, 0.3, 3)
        running = RunningStats(np.zeros(3), np.ones(3))
        probe_b = rng.normal(0, 1, xb.shape)

        def f_bn():
            y, _, _ = batchnorm_forward(xb, gamma, beta, running, train=True)
            return float(np.sum(probe_b * y))

        _, cache, _ = batchnorm_forward(xb, gamma, beta, running, train=True)
        dxb, dgamma, dbeta = batchnorm_backward(cache, probe_b)
        coords = rng.choice(xb.size, 4, replace=False)
        worst["batchnorm"] = max(
            worst["batchnorm"], _worst_rel(dxb.ravel()[coords], _numeric_grad(f_bn, xb, coords, 1e-6))
        )
        worst["batchnorm"] = max(
            worst["batchnorm"], _worst_rel(dgamma, _numeric_grad(f_bn, gamma, range(3), 1e-6))
        )
        worst["batchnorm"] = max(
            worst["batchnorm"], _worst_rel(dbeta, _numeric_grad(f_bn, beta, range(3), 1e-6))
        )
    return worst


def _loss_fixture_errors(n_fixtures: int = 20):
    """Worst image-space FD error per loss term over fresh random draws."""
    cfg = SynthesisConfig(
        canvas=32, region=Rect(0, 16, 16, 16), left_eye=(8.0, 16.0), right_eye=(24.0, 16.0)
    ).validate()
    kinds = {
        "content": (0.004, 0.0, 0.0),
        "style": (0.0, 1.0, 0.0),
        "component": (0.0, 0.0, 0.1),
        "composite": (0.004, 1.0, 0.1),
    }
    worst = {k: 0.0 for k in kinds}
    for i in range(n_fixtures):
        rng = np.random.default_rng(300 + i)
        weights = random_vgg_weights((2, 2, 3, 3, 3), seed=1000 + i)
        grams = target_grams(extract(rng.uniform(0, 1, (32, 32)), weights), region=cfg.region)
        content = rng.uniform(0.2, 0.8, (32, 32))
        x = rng.uniform(0.2, 0.8, 32 * 32)
        coords = rng.choice(x.size, 4, replace=False)
        for kind, (alpha, beta1, beta2) in kinds.items():
            objective = SketchObjective(
                content, grams, weights, alpha=alpha, beta1=beta1, beta2=beta2
            )
            _, grad = objective(x)
            num = _numeric_grad(lambda: objective(x)[0], x, coords, 1e-5)
            worst[kind] = max(worst[kind], _worst_rel(grad[coords], num))
    return worst


def test_01_gradient_suite():
    t0 = time.monotonic()
    worst = _kernel_fixture_errors(20)
    worst.update(_loss_fixture_errors(20))
    elapsed = time.monotonic() - t0
    peak = max(worst.values())
    ok = peak < 1e-4 and elapsed < 120.0
    detail = (
        f"20 fixtures each, worst rel err {peak:.2e} "
        f"({max(worst, key=worst.get)}), {elapsed:.1f}s (limits 1e-4, 120s)"
    )
    report("gradient-suite", ok, detail)


def test_02_fold_equivalence():
    worst = 0.0
    for i in range(10):
        rng = np.random.default_rng(500 + i)
        rgb = ConvLayerParams(
            rng.normal(0, 0.4, (4, 3, 3, 3)), rng.normal(0, 0.1, 4), 1, "zero"
        )
        img = rng.uniform(0, 1, (1, 1, 12, 12))
        out_rgb = conv2d_forward(np.repeat(img, 3, axis=1), rgb)
        out_gray = conv2d_forward(img, fold_gray(rgb))
        worst = max(worst, float(np.max(np.abs(out_rgb - out_gray))))
    ok = worst < 1e-10
    report("fold-equivalence", ok, f"10 draws, max abs diff {worst:.2e} (limit 1e-10)")


def test_03_pyramid_geometry():
    weights = load_vgg_weights(FIXTURE_PATH)
    image = np.random.default_rng(7).uniform(0, 1, (288, 288))
    pyramid = extract(image, weights)
    cells = grid_cells(288, 16)
    bad = 0
    for r, c in cells:
        column = crop_column(pyramid, 16 * r, 16 * c)
        for name, stride in STRIDES.items():
            size = 16 // stride
            crop = column.crops[name]
            fmap = pyramid.layer(name)
            r0, c0 = 16 * r // stride, 16 * c // stride
            if crop.shape[2:] != (size, size) or not np.array_equal(
                crop, fmap[:, :, r0 : r0 + size, c0 : c0 + size]
            ):
                bad += 1
    ok = len(cells) == 324 and bad == 0
    report(
        "pyramid-geometry",
        ok,
        f"{len(cells)} cells x 5 layers, crop sizes 16/8/4/2/1, {bad} mismatches",
    )


def test_04_patch_match_oracle():
    mismatches = 0
    for i in range(100):
        rng = np.random.default_rng(2024 + i)
        pairs = 2 + i % 2
        photos = [rng.uniform(0, 1, (48, 48)) for _ in range(pairs)]
        if i % 2:
            # Few distinct levels make exact MSE ties common.
            photos = [np.round(p * 2) / 2 for p in photos]
        if i % 5 == 0:
            photos[-1] = photos[0].copy()  # guaranteed cross-pair ties
        sketches = [rng.uniform(0, 1, (48, 48)) for _ in range(pairs)]
        exemplars = style.ExemplarSet(photos, sketches)
        photo = rng.uniform(0, 1, (48, 48))
        if i % 3 == 0:
            photo = np.round(photo * 2) / 2
        cfg = SynthesisConfig(
            canvas=48,
            region=Rect(0, 0, 16, 16),
            left_eye=(12.0, 16.0),
            right_eye=(36.0, 16.0),
            window=int(rng.choice([0, 8, 16, 32])),
            step=int(rng.choice([8, 16])),
        )
        r, c = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        got = style.match_patch(photo, r, c, exemplars, cfg)
        expect = match_patch_direct(photo, r, c, photos, cfg.window, cfg.step, cfg.patch, 48)
        if (got.cost, got.pair, got.row, got.col) != expect:
            mismatches += 1
    ok = mismatches == 0
    report("patch-match-oracle", ok, f"100 randomized instances incl. ties, {mismatches} mismatches")


def test_05_self_reconstruction_fixed_point():
    weights = load_vgg_weights(FIXTURE_PATH)
    rng = np.random.default_rng(11)
    sketch = gaussian_filter(rng.uniform(0, 1, (96, 96)), 3.0, mode="mirror")
    sketch = 0.1 + 0.8 * (sketch - sketch.min()) / (sketch.max() - sketch.min())
    cfg = SynthesisConfig(
        canvas=96,
        window=0,
        region=Rect(16, 32, 48, 48),
        left_eye=(16.0, 32.0),
        right_eye=(64.0, 32.0),
    )
    exemplars = build_exemplar_set([sketch], [sketch], weights)
    t0 = time.monotonic()
    result = synthesize(
        sketch, (16.0, 32.0), (64.0, 32.0), cfg,
        weights=weights, exemplars=exemplars, content_image=sketch,
    )
    elapsed = time.monotonic() - t0
    initial = result.loss_rows[0][1]
    move = float(np.max(np.abs(result.canvas - sketch)))
    totals = [row[1] for row in result.loss_rows]
    monotone = all(b <= a for a, b in zip(totals, totals[1:]))
    ok = initial < 1e-10 and move <= 1e-6 and elapsed < 60.0 and monotone
    report(
        "self-reconstruction-fixed-point",
        ok,
        f"initial loss {initial:.1e}, max move {move:.1e}, {elapsed:.1f}s "
        "(limits 1e-10, 1e-6, 60s)",
    )


def test_06_optimizer_conformance():
    rng = np.random.default_rng(5)
    a = rng.normal(0, 1, 10_000)

    def quadratic(x):
        d = x - a
        return float(d @ d), 2.0 * d

    state_q = lbfgs_minimize(quadratic, np.zeros_like(a), max_iters=25, grad_tol=1e-12)
    err_q = float(np.max(np.abs(state_q.x - a)))

    def rosenbrock(v):
        x, y = v
        f = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
        g = np.array([-2 * (1 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)])
        return float(f), g

    state_r = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]), max_iters=200, grad_tol=1e-12)

    # A regular styled synthesis run; the loss history must never rise.
    weights = random_vgg_weights((2, 3, 4, 4, 4), seed=2)
    rng2 = np.random.default_rng(8)
    exemplars = build_exemplar_set(
        [rng2.uniform(0, 1, (32, 32)) for _ in range(2)],
        [rng2.uniform(0, 1, (32, 32)) for _ in range(2)],
        weights,
    )
    cfg = SynthesisConfig(
        canvas=32, region=Rect(0, 16, 16, 16),
        left_eye=(8.0, 16.0), right_eye=(24.0, 16.0), max_iters=8,
    )
    result = synthesize(
        rng2.uniform(0.1, 0.9, (32, 32)), (8, 16), (24, 16), cfg,
        weights=weights, exemplars=exemplars,
    )
    histories = [state_q.loss_history, state_r.loss_history, result.state.loss_history,
                 [row[1] for row in result.loss_rows]]
    monotone = all(all(b <= a for a, b in zip(h, h[1:])) for h in histories)

    ok = err_q < 1e-8 and state_q.iterations <= 25 and state_r.loss < 1e-10 and monotone
    report(
        "optimizer-conformance",
        ok,
        f"quadratic |x-a| {err_q:.1e} in {state_q.iterations} iters, "
        f"rosenbrock f {state_r.loss:.1e}, histories non-increasing {monotone}",
    )


def test_07_toy_content_net_overfit():
    gx, gy = np.meshgrid(np.linspace(0, 1, 16), np.linspace(0, 1, 16))
    photos = [0.3 + 0.4 * gx, 0.7 - 0.4 * gy]
    sketches = [1.0 - p for p in photos]
    cfg = ContentNetConfig(branch_channels=4, integrate_channels=(8, 4), recon_channels=4)
    t0 = time.monotonic()
    net, _ = train(photos, sketches, cfg, epochs=2000, batch_size=2, seed=0, val_fraction=0.0)
    elapsed = time.monotonic() - t0
    errs = [float(np.mean(np.abs(net.predict(p) - s))) for p, s in zip(photos, sketches)]
    net2, _ = train(photos, sketches, cfg, epochs=2000, batch_size=2, seed=0, val_fraction=0.0)
    deterministic = all(np.array_equal(net.params[k], net2.params[k]) for k in net.params)
    ok = max(errs) < 0.02 and deterministic and elapsed < 600.0
    report(
        "toy-content-net-overfit",
        ok,
        f"2 pairs, 2000 epochs, mean abs {max(errs):.4f} (limit 0.02), "
        f"deterministic {deterministic}, {elapsed:.0f}s (limit 600s)",
    )


def test_08_degenerate_weight_conformance():
    weights = load_vgg_weights(FIXTURE_PATH)
    cfg = SynthesisConfig(
        canvas=32, region=Rect(0, 16, 16, 16),
        left_eye=(8.0, 16.0), right_eye=(24.0, 16.0),
        beta1=0.0, beta2=0.0,
    )
    photo = np.random.default_rng(13).uniform(0.1, 0.9, (32, 32))
    result = synthesize(photo, (8, 16), (24, 16), cfg, weights=weights)
    bitwise = np.array_equal(result.canvas, result.content)
    wild = apply_preset(SynthesisConfig(), "wild")
    preset_ok = (wild.alpha, wild.beta1, wild.beta2) == (0.004, 1.0, 0.0)
    ok = bitwise and result.state.iterations == 0 and preset_ok
    report(
        "degenerate-weight-conformance",
        ok,
        f"content returned bitwise {bitwise} in {result.state.iterations} iters; "
        f"wild preset -> ({wild.alpha}, {wild.beta1}, {wild.beta2})",
    )


def test_09_blocky_appearance_ablation():
    report_obj = run_ablation(canvas=96, max_iters=40)
    ratios = [row.ratio for row in report_obj.rows]
    ok = all(r > 1.2 for r in ratios)
    report(
        "blocky-appearance-ablation",
        ok,
        "pixel/feature boundary-TV ratios "
        + ", ".join(f"{r:.2f}" for r in ratios)
        + " (each must exceed 1.2)",
    )


def test_10_tensorfile_contract(tmp_path="/tmp"):
    data = read_tensorfile(FIXTURE_PATH)
    copy_path = f"{tmp_path}/fixture_copy.tf"
    write_tensorfile(copy_path, data.records, means=data.means, scale=data.scale)
    with open(FIXTURE_PATH, "rb") as fh:
        original = fh.read()
    with open(copy_path, "rb") as fh:
        copied = fh.read()
    round_trip = original == copied

    weights = load_vgg_weights(FIXTURE_PATH)
    activation = first_tap(data.records["test.image"], weights)
    diff = float(np.max(np.abs(activation - data.records["test.conv1_1"])))
    ok = round_trip and diff < 1e-6
    report(
        "tensorfile-contract",
        ok,
        f"round-trip byte-identical {round_trip}, frozen first-layer activation "
        f"max abs diff {diff:.1e} (limit 1e-6)",
    )


CRITERIA = (
    test_01_gradient_suite,
    test_02_fold_equivalence,
    test_03_pyramid_geometry,
    test_04_patch_match_oracle,
    test_05_self_reconstruction_fixed_point,
    test_06_optimizer_conformance,
    test_07_toy_content_net_overfit,
    test_08_degenerate_weight_conformance,
    test_09_blocky_appearance_ablation,
    test_10_tensorfile_contract,
)


if __name__ == "__main__":
    failures = 0
    for criterion in CRITERIA:
        try:
            criterion()
        except AssertionError:
            failures += 1
        except Exception as exc:  # a crashed criterion is a failed criterion
            failures += 1
            print(f"FAIL [{criterion.__name__}] raised {type(exc).__name__}: {exc}", flush=True)
    sys.exit(1 if failures else 0)
