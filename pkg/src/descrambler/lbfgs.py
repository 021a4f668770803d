"""Limited-memory BFGS with a strong Wolfe line search.

Two-loop recursion for the search direction; bracketing plus cubic
interpolation ("zoom") for the step length. Every accepted step strictly
decreases the objective. All thresholds are relative so that scaling the
objective by a power of two reproduces the iterates bit for bit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

ValueGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    status: str = ""
    evaluations: int = 0


class LineSearchFailure(Exception):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimiser of the cubic interpolating (a, fa, ga) and (b, fb, gb)."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _interpolate(lo, hi):
    a, fa, ga = lo
    b, fb, gb = hi
    left, right = min(a, b), max(a, b)
    width = right - left
    t = _cubic_min(a, fa, ga, b, fb, gb)
    # safeguard: stay clear of the bracket ends, fall back to bisection
    if t is None or not math.isfinite(t) or t <= left + 0.1 * width or t >= right - 0.1 * width:
        t = 0.5 * (a + b)
    return t


def strong_wolfe(
    fun: ValueGrad,
    x: np.ndarray,
    f0: float,
    g0: np.ndarray,
    p: np.ndarray,
    step: float = 1.0,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_zoom: int = 50,
    max_expand: int = 30,
):
    """Return (alpha, f, g, n_evals) satisfying the strong Wolfe conditions.

    Raises LineSearchFailure if no acceptable step is found within
    ``max_zoom`` interval reductions.
    """
    dg0 = float(g0 @ p)
    if not dg0 < 0:
        raise LineSearchFailure("not a descent direction")
    evals = 0
    prev = (0.0, f0, dg0)
    prev_g = g0
    alpha = step
    for i in range(max_expand):
        f, g = fun(x + alpha * p)
        evals += 1
        dg = float(g @ p)
        cur = (alpha, f, dg)
        if not math.isfinite(f) or f > f0 + c1 * alpha * dg0 or (i > 0 and f >= prev[1]):
            return _zoom(fun, x, f0, dg0, p, prev, prev_g, cur, g, c1, c2, max_zoom, evals)
        if abs(dg) <= -c2 * dg0:
            return alpha, f, g, evals
        if dg >= 0:
            return _zoom(fun, x, f0, dg0, p, cur, g, prev, prev_g, c1, c2, max_zoom, evals)
        prev, prev_g = cur, g
        alpha *= 2.0
    raise LineSearchFailure("step expansion did not bracket a minimum")


def _zoom(fun, x, f0, dg0, p, lo, g_lo, hi, g_hi, c1, c2, max_zoom, evals):
    for _ in range(max_zoom):
        alpha = _interpolate(lo, hi)
        if alpha == lo[0] or alpha == hi[0]:
            break
        f, g = fun(x + alpha * p)
        evals += 1
        dg = float(g @ p)
        if not math.isfinite(f) or f > f0 + c1 * alpha * dg0 or f >= lo[1]:
            hi, g_hi = (alpha, f, dg), g
        else:
            if abs(dg) <= -c2 * dg0:
                return alpha, f, g, evals
            if dg * (hi[0] - lo[0]) >= 0:
                hi, g_hi = lo, g_lo
            lo, g_lo = (alpha, f, dg), g
    # the low end always satisfies sufficient decrease; accept it if it moved
    if lo[0] > 0 and lo[1] < f0:
        return lo[0], lo[1], g_lo, evals
    raise LineSearchFailure(f"no acceptable step after {max_zoom} reductions")


def minimize(
    fun: ValueGrad,
    x0: np.ndarray,
    memory: int = 10,
    grad_tol: float = 1e-8,
    max_iters: int = 5000,
    c1: float = 1e-4,
    c2: float = 0.9,
    abs_tol: float = 0.0,
    callback: Callable[[int, np.ndarray, float], None] | None = None,
) -> LbfgsResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0``.

    Converged means ||g||_inf <= grad_tol * ||g0||_inf. A start with
    ||g0||_inf <= abs_tol is stationary; that check counts as one iteration.
    """
    if memory < 1:
        raise ValueError("memory must be >= 1")
    if not 0 < c1 < c2 < 1:
        raise ValueError("need 0 < c1 < c2 < 1")
    x = np.array(x0, dtype=np.float64, copy=True).ravel()
    f, g = fun(x)
    evals = 1
    trace = [f]
    g0_norm = float(np.max(np.abs(g))) if g.size else 0.0
    if g0_norm <= abs_tol:
        return LbfgsResult(x, f, g, trace, 1, True, "stationary start", evals)
    tol = grad_tol * g0_norm
    S: deque[np.ndarray] = deque(maxlen=memory)
    Y: deque[np.ndarray] = deque(maxlen=memory)
    RHO: deque[float] = deque(maxlen=memory)

    status = "max iterations"
    converged = False
    it = 0
    while it < max_iters:
        # two-loop recursion
        qv = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = rho * float(s @ qv)
            alphas.append(a)
            qv -= a * y
        if S:
            gamma = float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
            r = gamma * qv
        else:
            # first step: unit length in parameter space
            r = qv / float(np.linalg.norm(qv))
        for (s, y, rho), a in zip(zip(S, Y, RHO), reversed(alphas)):
            b = rho * float(y @ r)
            r += (a - b) * s
        p = -r
        if not float(g @ p) < 0:
            # lost descent from a stale pair: restart from steepest descent
            S.clear(); Y.clear(); RHO.clear()
            p = -g / float(np.linalg.norm(g))
        try:
            alpha, f_new, g_new, n = strong_wolfe(fun, x, f, g, p, 1.0, c1, c2)
        except LineSearchFailure as exc:
            status = f"line search failed: {exc}"
            break
        evals += n
        if not f_new < f:
            status = "line search failed: no decrease"
            break
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        x = x + s
        f, g = f_new, g_new
        it += 1
        trace.append(f)
        if callback is not None:
            callback(it, x, f)
        if sy > np.finfo(float).eps * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            S.append(s)
            Y.append(y)
            RHO.append(1.0 / sy)
        if float(np.max(np.abs(g))) <= tol:
            converged = True
            status = "gradient tolerance reached"
            break
    return LbfgsResult(x, f, g, trace, it, converged, status, evals)
