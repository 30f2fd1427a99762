"""Limited-memory quasi-Newton minimizer with a strong Wolfe line search.

The search direction comes from the standard two-loop recursion over the
last few (step, gradient-change) pairs, seeded with the gamma = s.y / y.y
diagonal scaling.  The very first direction (and any reset) is the steepest
descent direction normalized to unit length, which makes the whole iterate
sequence invariant to a positive rescaling of the objective.

The line search brackets and zooms with quadratic interpolation, so a
quadratic objective is minimized exactly along the line in one extra
evaluation.  Accepted steps never increase the loss: Wolfe's sufficient
decrease guarantees it unprojected, and an optional projection (such as a
box clamp) is followed by step halving until the projected point is no
worse than the current one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

_CURVATURE_FLOOR = 1e-10


@dataclass
class OptimState:
    """Result of a minimization run."""

    x: np.ndarray
    loss: float
    grad: np.ndarray
    iterations: int
    n_evals: int
    stop_reason: str
    loss_history: List[float] = field(default_factory=list)


def _quad_min(t_lo: float, f_lo: float, d_lo: float, t_hi: float, f_hi: float) -> Optional[float]:
    """Minimizer of the quadratic through (t_lo, f_lo) with slope d_lo and (t_hi, f_hi)."""
    span = t_hi - t_lo
    if span == 0.0:
        return None
    q = (f_hi - f_lo - d_lo * span) / (span * span)
    if not np.isfinite(q) or q <= 0.0:
        return None
    t = t_lo - d_lo / (2.0 * q)
    return t if np.isfinite(t) else None


def _strong_wolfe(
    phi: Callable[[float], Tuple[float, float, object]],
    f0: float,
    d0: float,
    c1: float = 1e-4,
    c2: float = 0.9,
    t_init: float = 1.0,
    max_evals: int = 30,
):
    """Find t with phi(t) <= phi(0) + c1 t phi'(0) and |phi'(t)| <= -c2 phi'(0).

    phi maps a step length to (value, directional derivative, payload); the
    payload of the accepted evaluation is returned so callers can reuse the
    full gradient.  Falls back to the best sufficient-decrease point when
    the curvature condition cannot be met within the budget; returns None
    only if no evaluated point achieved sufficient decrease.
    """
    if d0 >= 0:
        raise ValueError("line search needs a descent direction")
    evals = 0
    best = None  # (t, f, dphi, payload) with the smallest f among Armijo points

    def ev(t: float):
        nonlocal evals, best
        f, dphi, payload = phi(t)
        evals += 1
        if np.isfinite(f) and f <= f0 + c1 * t * d0 and (best is None or f < best[1]):
            best = (t, f, dphi, payload)
        return f, dphi, payload

    def zoom(t_lo, f_lo, d_lo, t_hi, f_hi):
        nonlocal evals
        while evals < max_evals:
            bounds = sorted((t_lo, t_hi))
            t = _quad_min(t_lo, f_lo, d_lo, t_hi, f_hi)
            margin = 1e-10 * (bounds[1] - bounds[0])
            if t is None or not (bounds[0] + margin < t < bounds[1] - margin):
                t = 0.5 * (t_lo + t_hi)
            f_t, d_t, p_t = ev(t)
            if not np.isfinite(f_t) or f_t > f0 + c1 * t * d0 or f_t >= f_lo:
                t_hi, f_hi = t, f_t
            else:
                if abs(d_t) <= -c2 * d0:
                    return t, f_t, p_t
                if d_t * (t_hi - t_lo) >= 0:
                    t_hi, f_hi = t_lo, f_lo
                t_lo, f_lo, d_lo = t, f_t, d_t
        return None

    t_prev, f_prev, d_prev = 0.0, f0, d0
    t = t_init
    first = True
    while evals < max_evals:
        f_t, d_t, p_t = ev(t)
        if not np.isfinite(f_t) or f_t > f0 + c1 * t * d0 or (not first and f_t >= f_prev):
            result = zoom(t_prev, f_prev, d_prev, t, f_t)
            break
        if abs(d_t) <= -c2 * d0:
            return t, f_t, p_t, evals
        if d_t >= 0:
            result = zoom(t, f_t, d_t, t_prev, f_prev)
            break
        t_prev, f_prev, d_prev = t, f_t, d_t
        t *= 2.0
        first = False
    else:
        result = None
    if result is not None:
        return result[0], result[1], result[2], evals
    if best is not None:
        return best[0], best[1], best[3], evals
    return None


def _two_loop(grad: np.ndarray, memory) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * np.dot(s, q)
        alphas.append(a)
        q -= a * y
    s, y, _ = memory[-1]
    gamma = np.dot(s, y) / np.dot(y, y)
    r = gamma * q
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * np.dot(y, r)
        r += (a - b) * s
    return -r


def lbfgs_minimize(
    f_and_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    max_iters: int = 300,
    grad_tol: float = 1e-6,
    memory: int = 10,
    plateau_tol: float = 1e-8,
    plateau_window: int = 5,
    c1: float = 1e-4,
    c2: float = 0.9,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    callback: Optional[Callable[[int, np.ndarray, float, np.ndarray], None]] = None,
) -> OptimState:
    """Minimize a smooth function of a flat float64 vector.

    Stops when the gradient's max-norm falls below grad_tol, when the
    relative loss decrease over plateau_window accepted iterations drops
    below plateau_tol, when the line search cannot find any decrease, or at
    max_iters.  The loss history over accepted iterates never increases.

    project, if given, maps a candidate iterate to its feasible version
    (e.g. a [0, 1] clamp); a projected step that would raise the loss is
    halved until it does not.
    """
    x = np.asarray(x0, dtype=np.float64).ravel().copy()
    f, g = f_and_grad(x)
    g = np.asarray(g, dtype=np.float64).ravel().copy()
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise ValueError("objective is not finite at the starting point")
    n_evals = 1
    history = [float(f)]
    pairs = deque(maxlen=memory)
    stop = "max_iters"
    it = 0

    while it < max_iters:
        gnorm = np.max(np.abs(g))
        # A literally zero gradient is stationary no matter the tolerance.
        if gnorm < grad_tol or gnorm == 0.0:
            stop = "gradient"
            break
        if len(history) > plateau_window:
            old, new = history[-1 - plateau_window], history[-1]
            if (old - new) <= plateau_tol * max(abs(old), 1e-12):
                stop = "loss_plateau"
                break

        if pairs:
            d = _two_loop(g, pairs)
            if np.dot(d, g) >= 0 or not np.all(np.isfinite(d)):
                pairs.clear()
                d = -g / np.linalg.norm(g)
        else:
            # Unit-length steepest descent: rescaling the objective rescales
            # g but not d, so the iterate sequence is scale-invariant.
            d = -g / np.linalg.norm(g)
        dg = float(np.dot(d, g))

        def phi(t: float):
            ft, gt = f_and_grad(x + t * d)
            gt = np.asarray(gt, dtype=np.float64).ravel()
            return float(ft), float(np.dot(d, gt)), gt

        found = _strong_wolfe(phi, f, dg, c1=c1, c2=c2)
        if found is None:
            stop = "line_search"
            break
        t, f_new, g_new, evals = found
        n_evals += evals
        x_new = x + t * d

        if project is not None:
            x_proj = project(x_new)
            if not np.array_equal(x_proj, x_new):
                f_new, g_new = f_and_grad(x_proj)
                g_new = np.asarray(g_new, dtype=np.float64).ravel()
                n_evals += 1
                halvings = 0
                # Projection can undo the line search's decrease; shrink the
                # step until the projected point is no worse than x.
                while (not np.isfinite(f_new) or f_new > f) and halvings < 30:
                    t *= 0.5
                    x_proj = project(x + t * d)
                    f_new, g_new = f_and_grad(x_proj)
                    g_new = np.asarray(g_new, dtype=np.float64).ravel()
                    n_evals += 1
                    halvings += 1
                if not np.isfinite(f_new) or f_new > f:
                    stop = "projection_stall"
                    break
                x_new = x_proj

        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            stop = "non_finite"
            break

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > _CURVATURE_FLOOR * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, float(f_new), g_new
        history.append(f)
        it += 1
        if callback is not None:
            callback(it, x, f, g)

    return OptimState(
        x=x,
        loss=f,
        grad=g,
        iterations=it,
        n_evals=n_evals,
        stop_reason=stop,
        loss_history=history,
    )
