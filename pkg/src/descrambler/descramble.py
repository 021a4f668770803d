"""Wiretap problem assembly and the descrambling optimiser."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cayley, lbfgs
from .cayley import DescramblingProblem
from .core import ConfigError, FeedForwardNet, ShapeError, as_matrix
from .netlab import activate
from .spectral import DiffMatrix

PRE = "pre"
POST = "post"


@dataclass(frozen=True)
class WiretapSpec:
    """Where to insert P^-1 P: before (``pre``) or after (``post``) F_k.

    ``layer`` is 1-based. ``alpha`` > 0 adds smoothness of the next layer's
    weights along the link dimension to the objective.
    """

    layer: int
    position: str = PRE
    alpha: float = 0.0

    def __post_init__(self):
        if self.position not in (PRE, POST):
            raise ConfigError(f"position must be 'pre' or 'post', got {self.position!r}")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be finite and >= 0, got {self.alpha}")

    def check(self, net: FeedForwardNet) -> None:
        if not 1 <= self.layer <= net.depth:
            raise ConfigError(f"layer {self.layer} out of range 1..{net.depth}")
        if self.alpha > 0 and self.layer == net.depth:
            raise ConfigError("link smoothing (alpha > 0) needs a following layer")


@dataclass
class OptimizerConfig:
    memory: int = 10
    grad_tol: float = 1e-8
    max_iters: int = 5000
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    init: str = "zero"  # or "random"
    init_sigma: float = 0.01
    seed: int = 0

    def validate(self) -> None:
        if self.memory < 1:
            raise ConfigError("memory must be >= 1")
        if not 0 < self.wolfe_c1 < self.wolfe_c2 < 1:
            raise ConfigError("need 0 < c1 < c2 < 1")
        if self.init not in ("zero", "random"):
            raise ConfigError(f"init must be 'zero' or 'random', got {self.init!r}")
        if self.max_iters < 0 or not self.grad_tol > 0:
            raise ConfigError("max_iters must be >= 0 and grad_tol > 0")


@dataclass
class DescrambleResult:
    p: np.ndarray
    q: np.ndarray
    objective_trace: list[float]
    converged: bool
    iterations: int
    status: str = ""
    functional: str = ""

    @property
    def value(self) -> float:
        return self.objective_trace[-1]

    def report(self) -> dict:
        return {
            "functional": self.functional,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "final_value": self.value,
            "objective_trace": list(self.objective_trace),
        }


def wiretap_signal(net: FeedForwardNet, x: np.ndarray, spec: WiretapSpec) -> np.ndarray:
    """Signal array at the wiretap: W_k F_{k-1} ... F_1 W_1 X, or F_k of that."""
    spec.check(net)
    x = as_matrix(x, "x")
    if x.shape[0] != net.input_dim:
        raise ShapeError(f"x has {x.shape[0]} rows, network expects {net.input_dim}")
    s = x
    for layer in net.layers[: spec.layer - 1]:
        s = activate(layer.weights @ s, layer.activation)
    layer = net.layers[spec.layer - 1]
    s = layer.weights @ s
    if spec.position == POST:
        s = activate(s, layer.activation)
    return s


def assemble_problem(
    net: FeedForwardNet, x: np.ndarray, spec: WiretapSpec, d: DiffMatrix | np.ndarray
) -> DescramblingProblem:
    """Tikhonov descrambling problem for the signal at ``spec``.

    With alpha > 0 the columns sqrt(alpha) W_{k+1}^T are appended to the
    signal: ||D P W_{k+1}^T||_F^2 is the second-derivative norm of the
    conjugate view W_{k+1} P^T along its link dimension.
    """
    s = wiretap_signal(net, x, spec)
    if spec.alpha > 0:
        w_next = net.layers[spec.layer].weights
        s = np.hstack([s, np.sqrt(spec.alpha) * w_next.T])
    return cayley.tikhonov_problem(s, d)


def optimize(prob: DescramblingProblem, cfg: OptimizerConfig | None = None) -> DescrambleResult:
    """Find the descrambler. Maximisation problems run as minimisation of -eta."""
    cfg = cfg or OptimizerConfig()
    cfg.validate()
    sign = 1.0 if prob.sense == "min" else -1.0
    if cfg.init == "zero":
        q0 = np.zeros(prob.n_params)
    else:
        q0 = np.random.default_rng(cfg.seed).normal(0.0, cfg.init_sigma, prob.n_params)

    def fun(q):
        f, g = prob.value_and_grad(q)
        return sign * f, sign * g

    # gradients at the roundoff level of the problem count as zero
    abs_tol = 64 * np.finfo(float).eps * prob.grad_scale
    res = lbfgs.minimize(
        fun,
        q0,
        memory=cfg.memory,
        grad_tol=cfg.grad_tol,
        max_iters=cfg.max_iters,
        c1=cfg.wolfe_c1,
        c2=cfg.wolfe_c2,
        abs_tol=abs_tol,
    )
    return DescrambleResult(
        p=cayley.cayley_map(res.x, prob.dim),
        q=res.x,
        objective_trace=[sign * f for f in res.trace],
        converged=res.converged,
        iterations=res.iterations,
        status=res.status,
        functional=prob.functional,
    )


@dataclass(frozen=True)
class DescrambledView:
    weights: np.ndarray  # P W_k
    next_weights: np.ndarray | None = None  # W_{k+1} P^T, post-activation only


def apply_descrambler(net: FeedForwardNet, spec: WiretapSpec, p: np.ndarray) -> DescrambledView:
    """Descrambled weight matrices; the network itself is left untouched."""
    spec.check(net)
    p = np.asarray(p, dtype=np.float64)
    w = net.layers[spec.layer - 1].weights
    if p.shape != (w.shape[0], w.shape[0]):
        raise ShapeError(f"P is {p.shape}, layer {spec.layer} needs {(w.shape[0], w.shape[0])}")
    next_w = None
    if spec.position == POST and spec.layer < net.depth:
        next_w = net.layers[spec.layer].weights @ p.T
    return DescrambledView(p @ w, next_w)


def forward_with_wiretap(net: FeedForwardNet, spec: WiretapSpec, p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the network with P^-1 P inserted at the wiretap (P^-1 = P^T)."""
    spec.check(net)
    p = np.asarray(p, dtype=np.float64)
    s = as_matrix(x, "x")
    for i, layer in enumerate(net.layers, start=1):
        w = layer.weights
        if i == spec.layer:
            z = p.T @ (p @ (w @ s)) if spec.position == PRE else w @ s
            s = activate(z, layer.activation)
            if spec.position == POST:
                s = p @ s
            continue
        if i == spec.layer + 1 and spec.position == POST:
            w = w @ p.T
        s = activate(w @ s, layer.activation)
    if spec.position == POST and spec.layer == net.depth:
        s = p.T @ s
    return s
