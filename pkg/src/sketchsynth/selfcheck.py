"""Built-in correctness checks: gradients against finite differences,
optimizer conformance on known minima, and the grayscale fold identity.

These are the fast subset of the test suite that ships inside the package
so an installation can be validated without a source checkout.  Each check
is independent; :func:`run_selfcheck` runs them all and reports one line
per check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, TextIO

import numpy as np

from sketchsynth.config import Rect, SynthesisConfig
from sketchsynth.content import ContentNet, ContentNetConfig
from sketchsynth.lbfgs import lbfgs_minimize
from sketchsynth.losses import SketchObjective
from sketchsynth.ops import (
    ConvLayerParams,
    RunningStats,
    avgpool2x2,
    avgpool2x2_backward,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_forward,
    conv2d_input_grad,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
)
from sketchsynth.style import target_grams
from sketchsynth.vgg import extract, fold_gray, random_vgg_weights


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray, coords, h: float = 1e-6):
    """Central differences of a scalar function at selected flat indices."""
    out = np.empty(len(coords))
    flat = x.ravel()
    for i, idx in enumerate(coords):
        orig = flat[idx]
        flat[idx] = orig + h
        fp = f(x)
        flat[idx] = orig - h
        fm = f(x)
        flat[idx] = orig
        out[i] = (fp - fm) / (2.0 * h)
    return out


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _grad_check(f_and_grad, x: np.ndarray, n_coords: int, rng, h: float = 1e-6) -> float:
    """Max relative error between analytic and numeric gradient samples."""
    _, grad = f_and_grad(x)
    coords = rng.choice(x.size, size=min(n_coords, x.size), replace=False)
    numeric = _numeric_grad(lambda v: f_and_grad(v)[0], x.copy(), coords, h=h)
    return _rel_err(grad.ravel()[coords], numeric)


def _check(name: str, err: float, tol: float = 1e-4) -> CheckResult:
    return CheckResult(name, err < tol, f"max rel err {err:.2e} (tol {tol:g})")


def check_conv_input_gradient() -> CheckResult:
    rng = np.random.default_rng(11)
    params = ConvLayerParams(rng.normal(0, 0.5, (3, 2, 3, 3)), rng.normal(0, 0.1, 3), 1, "zero")
    probe = rng.normal(0, 1, (1, 3, 6, 6))

    def f_and_grad(x):
        y = conv2d_forward(x, params)
        return float(np.sum(probe * y)), conv2d_input_grad(params, probe, x.shape)

    err = _grad_check(f_and_grad, rng.normal(0, 1, (1, 2, 6, 6)), 12, rng)
    return _check("conv input gradient", err)


def check_maxpool_gradient() -> CheckResult:
    rng = np.random.default_rng(12)
    # Well-separated values keep the argmax stable under the probe step.
    x = rng.permutation(np.arange(2 * 6 * 6, dtype=np.float64)).reshape(1, 2, 6, 6) * 0.1
    probe = rng.normal(0, 1, (1, 2, 3, 3))

    def f_and_grad(v):
        pooled, idx = maxpool2x2(v)
        return float(np.sum(probe * pooled)), maxpool2x2_backward(probe, idx, v.shape)

    err = _grad_check(f_and_grad, x, 12, rng)
    return _check("max pool gradient", err)


def check_avgpool_gradient() -> CheckResult:
    rng = np.random.default_rng(13)
    probe = rng.normal(0, 1, (1, 2, 3, 3))

    def f_and_grad(v):
        return float(np.sum(probe * avgpool2x2(v))), avgpool2x2_backward(probe, v.shape)

    err = _grad_check(f_and_grad, rng.normal(0, 1, (1, 2, 6, 6)), 12, rng)
    return _check("avg pool gradient", err)


def check_relu_gradient() -> CheckResult:
    rng = np.random.default_rng(14)
    # Inputs kept away from the kink where the derivative is undefined.
    x = rng.choice([-1.0, 1.0], (1, 2, 5, 5)) * rng.uniform(0.3, 1.0, (1, 2, 5, 5))
    probe = rng.normal(0, 1, x.shape)

    def f_and_grad(v):
        return float(np.sum(probe * relu(v))), relu_backward(v, probe)

    err = _grad_check(f_and_grad, x, 12, rng)
    return _check("relu gradient", err)


def check_batchnorm_gradient() -> CheckResult:
    rng = np.random.default_rng(15)
    gamma, beta = rng.uniform(0.5, 1.5, 3), rng.normal(0, 0.3, 3)
    running = RunningStats(np.zeros(3), np.ones(3))
    probe = rng.normal(0, 1, (2, 3, 4, 4))

    def f_and_grad(v):
        y, cache, _ = batchnorm_forward(v, gamma, beta, running, train=True)
        dx, _, _ = batchnorm_backward(cache, probe)
        return float(np.sum(probe * y)), dx

    err = _grad_check(f_and_grad, rng.normal(0, 1, (2, 3, 4, 4)), 12, rng)
    return _check("batch norm gradient", err)


def _objective_config() -> SynthesisConfig:
    return SynthesisConfig(
        canvas=32,
        region=Rect(0, 16, 16, 16),
        left_eye=(8.0, 16.0),
        right_eye=(24.0, 16.0),
    ).validate()


def _objective_check(name: str, alpha: float, beta1: float, beta2: float) -> CheckResult:
    rng = np.random.default_rng(16)
    cfg = _objective_config()
    weights = random_vgg_weights((2, 3, 4, 4, 4), seed=5)
    target = extract(rng.uniform(0, 1, (32, 32)), weights)
    grams = target_grams(target, region=cfg.region)
    content = rng.uniform(0.2, 0.8, (32, 32))
    objective = SketchObjective(content, grams, weights, alpha=alpha, beta1=beta1, beta2=beta2)
    x = rng.uniform(0.2, 0.8, 32 * 32)
    err = _grad_check(objective, x, 10, rng)
    return _check(name, err)


def check_content_loss_gradient() -> CheckResult:
    return _objective_check("content loss gradient", 0.004, 0.0, 0.0)


def check_style_loss_gradient() -> CheckResult:
    return _objective_check("style loss gradient", 0.0, 1.0, 0.0)


def check_component_loss_gradient() -> CheckResult:
    return _objective_check("component loss gradient", 0.0, 0.0, 0.1)


def check_total_loss_gradient() -> CheckResult:
    return _objective_check("total loss gradient", 0.004, 1.0, 0.1)


def check_content_net_gradients() -> CheckResult:
    rng = np.random.default_rng(17)
    cfg = ContentNetConfig(branch_channels=2, integrate_channels=(3, 2), recon_channels=2)
    net = ContentNet.initialize(cfg, seed=3)
    # Damped output conv keeps predictions near the 0.5 bias, clear of the
    # clamp corners and the L1 kink.
    net.params["out.weight"] = net.params["out.weight"] * 0.02
    x = rng.uniform(0.1, 0.9, (1, cfg.in_channels, 8, 8))
    target = np.zeros((1, 1, 8, 8))
    worst = 0.0
    for key in ("inc1.b3.weight", "int1.gamma", "rec1.beta", "out.weight", "out.bias"):
        theta = net.params[key]

        def f_and_grad(v):
            net.params[key] = v
            y, caches, _ = net._forward(x, train=True)
            diff = y - target
            n = y.size
            loss = float(np.abs(diff).sum() / n)
            grads, _ = net.backward(caches, np.sign(diff) / n)
            return loss, grads[key]

        worst = max(worst, _grad_check(f_and_grad, theta.copy(), 6, rng, h=1e-5))
        net.params[key] = theta
    return _check("content net parameter gradients", worst, tol=1e-3)


def check_fold_equivalence() -> CheckResult:
    rng = np.random.default_rng(18)
    rgb = ConvLayerParams(rng.normal(0, 0.3, (4, 3, 3, 3)), rng.normal(0, 0.1, 4), 1, "zero")
    gray = fold_gray(rgb)
    img = rng.uniform(0, 1, (1, 1, 9, 9))
    replicated = np.repeat(img, 3, axis=1)
    diff = float(np.max(np.abs(conv2d_forward(replicated, rgb) - conv2d_forward(img, gray))))
    return CheckResult("grayscale fold equivalence", diff < 1e-10, f"max abs diff {diff:.2e} (tol 1e-10)")


def check_quadratic_minimum() -> CheckResult:
    rng = np.random.default_rng(19)
    a = rng.normal(0, 1, 10_000)

    def f(x):
        d = x - a
        return float(d @ d), 2.0 * d

    state = lbfgs_minimize(f, np.zeros_like(a), max_iters=25, grad_tol=1e-10)
    err = float(np.max(np.abs(state.x - a)))
    return CheckResult(
        "quadratic minimum",
        err < 1e-8 and state.iterations <= 25,
        f"|x-a| {err:.2e} in {state.iterations} iters",
    )


def check_rosenbrock_minimum() -> CheckResult:
    def f(v):
        x, y = v
        fx = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
        g = np.array([-2 * (1 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)])
        return float(fx), g

    state = lbfgs_minimize(f, np.array([-1.2, 1.0]), max_iters=200, grad_tol=1e-12)
    return CheckResult("rosenbrock minimum", state.loss < 1e-10, f"f {state.loss:.2e} (tol 1e-10)")


ALL_CHECKS = (
    check_conv_input_gradient,
    check_maxpool_gradient,
    check_avgpool_gradient,
    check_relu_gradient,
    check_batchnorm_gradient,
    check_content_loss_gradient,
    check_style_loss_gradient,
    check_component_loss_gradient,
    check_total_loss_gradient,
    check_content_net_gradients,
    check_fold_equivalence,
    check_quadratic_minimum,
    check_rosenbrock_minimum,
)


def run_selfcheck(stream: Optional[TextIO] = None) -> List[CheckResult]:
    """Run every check, optionally printing one status line per check."""
    results = []
    for fn in ALL_CHECKS:
        try:
            res = fn()
        except Exception as exc:
            res = CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        results.append(res)
        if stream is not None:
            mark = "ok  " if res.ok else "FAIL"
            print(f"{mark} {res.name}: {res.detail}", file=stream)
    return results


def all_ok(results: List[CheckResult]) -> bool:
    return all(r.ok for r in results)
