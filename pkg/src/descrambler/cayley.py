"""Cayley parameterisation of SO(n) and the descrambling functionals.

A rotation is parameterised by the strict upper triangle ``q`` of an
antisymmetric matrix Q, and P = (I + Q)^-1 (I - Q). Gradients with respect to
a full P are pulled back to ``q`` through

    d eta / dQ = -(I + Q)^-T (d eta / dP) (I + P)^T

followed by the antisymmetric projection g_ij = G_ij - G_ji (i < j), which is
the exact chain rule since Q_ji = -Q_ij.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ShapeError, as_matrix
from .spectral import DiffMatrix

TIKHONOV = "tikhonov"
MDS = "mds"
MDNS = "mdns"
FUNCTIONALS = (TIKHONOV, MDS, MDNS)


def n_params(n: int) -> int:
    return n * (n - 1) // 2


def dim_from_params(m: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * m)) / 2))
    if n_params(n) != m:
        raise ShapeError(f"{m} is not a triangular number n(n-1)/2")
    return n


def antisym(q: np.ndarray, n: int | None = None) -> np.ndarray:
    """Materialise Q from its strict upper triangle (row-major)."""
    q = np.asarray(q, dtype=np.float64).ravel()
    if n is None:
        n = dim_from_params(q.size)
    elif q.size != n_params(n):
        raise ShapeError(f"dimension {n} needs {n_params(n)} parameters, got {q.size}")
    iu = np.triu_indices(n, k=1)
    Q = np.zeros((n, n))
    Q[iu] = q
    Q[(iu[1], iu[0])] = -q
    return Q


def upper(G: np.ndarray) -> np.ndarray:
    """Project a full-matrix gradient onto the upper-triangle parameters."""
    n = G.shape[0]
    iu = np.triu_indices(n, k=1)
    return G[iu] - G.T[iu]


def cayley_map(q: np.ndarray, n: int | None = None) -> np.ndarray:
    """P = (I + Q)^-1 (I - Q); always in SO(n)."""
    return _factor(q, n)[1]


def _factor(q, n):
    Q = antisym(q, n)
    eye = np.eye(Q.shape[0])
    lu = scipy.linalg.lu_factor(eye + Q)
    P = scipy.linalg.lu_solve(lu, eye - Q)
    return lu, P


def _pullback(lu, P, dP):
    # (I+Q)^-T dP (I+P)^T: one transposed LU solve
    eye = np.eye(P.shape[0])
    G = -scipy.linalg.lu_solve(lu, dP @ (eye + P).T, trans=1)
    return upper(G)


def cayley_pullback(dEta_dP: np.ndarray, q: np.ndarray, p: np.ndarray | None = None) -> np.ndarray:
    """Chain rule from a P-gradient to the upper-triangle parameters of Q."""
    dEta_dP = np.asarray(dEta_dP, dtype=np.float64)
    Q = antisym(q)
    n = Q.shape[0]
    if dEta_dP.shape != (n, n):
        raise ShapeError(f"dEta/dP is {dEta_dP.shape}, expected {(n, n)}")
    eye = np.eye(n)
    if p is None:
        p = scipy.linalg.solve(eye + Q, eye - Q)
    elif np.shape(p) != (n, n):
        raise ShapeError(f"P is {np.shape(p)}, expected {(n, n)}")
    G = -np.linalg.solve((eye + Q).T, dEta_dP @ (eye + np.asarray(p)).T)
    return upper(G)


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class DescramblingProblem:
    """A frozen descrambling objective.

    For ``tikhonov`` only ``dtd`` = D^T D and ``sst`` = S S^T are kept; the
    signal array itself is not needed once those are formed.
    """

    functional: str
    dim: int
    dtd: np.ndarray | None = None
    sst: np.ndarray | None = None
    weight: np.ndarray | None = None

    @property
    def sense(self) -> str:
        return "min" if self.functional == TIKHONOV else "max"

    @property
    def n_params(self) -> int:
        return n_params(self.dim)

    @property
    def grad_scale(self) -> float:
        """Size of the gradient's roundoff floor, up to a factor of eps."""
        if self.functional == TIKHONOV:
            return 2.0 * float(np.linalg.norm(self.dtd) * np.linalg.norm(self.sst))
        w = float(np.linalg.norm(self.weight))
        return w if self.functional == MDS else 2.0 * w * w

    def value(self, q: np.ndarray) -> float:
        return _EVAL[self.functional](q, self)

    def gradient(self, q: np.ndarray) -> np.ndarray:
        return _GRAD[self.functional](q, self)

    def value_and_grad(self, q: np.ndarray) -> tuple[float, np.ndarray]:
        return _VALUE_AND_GRAD[self.functional](q, self)


def accumulate_sst(signal: np.ndarray, block: int = 4096) -> np.ndarray:
    """S S^T summed over column blocks in a fixed left-to-right order."""
    S = np.asarray(signal, dtype=np.float64)
    out = np.zeros((S.shape[0], S.shape[0]))
    for start in range(0, S.shape[1], block):
        blk = S[:, start : start + block]
        out += blk @ blk.T
    return 0.5 * (out + out.T)


def tikhonov_problem(signal: np.ndarray, d: DiffMatrix | np.ndarray, block: int = 4096) -> DescramblingProblem:
    S = as_matrix(signal, "signal")
    D = d.d if isinstance(d, DiffMatrix) else as_matrix(d, "D")
    if D.shape[1] != S.shape[0]:
        raise ShapeError(f"D is {D.shape} but signal has {S.shape[0]} rows")
    dtd = D.T @ D
    dtd = 0.5 * (dtd + dtd.T)
    return DescramblingProblem(TIKHONOV, S.shape[0], dtd=dtd, sst=accumulate_sst(S, block))


def mds_problem(weight: np.ndarray) -> DescramblingProblem:
    W = as_matrix(weight, "weight")
    return DescramblingProblem(MDS, W.shape[0], weight=W)


def mdns_problem(weight: np.ndarray) -> DescramblingProblem:
    W = as_matrix(weight, "weight")
    return DescramblingProblem(MDNS, W.shape[0], weight=W)


def _check(q, prob, kind):
    if prob.functional != kind:
        raise ValueError(f"problem is {prob.functional!r}, not {kind!r}")
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.size != prob.n_params:
        raise ShapeError(f"problem of dimension {prob.dim} needs {prob.n_params} parameters, got {q.size}")
    return q


# tikhonov: eta = Tr[P^T DtD P SSt], d eta / dP = 2 DtD P SSt


def eval_tikhonov(q, prob: DescramblingProblem) -> float:
    q = _check(q, prob, TIKHONOV)
    P = cayley_map(q, prob.dim)
    return max(float(np.sum((prob.dtd @ P) * (P @ prob.sst))), 0.0)


def _tikhonov_vg(q, prob):
    q = _check(q, prob, TIKHONOV)
    lu, P = _factor(q, prob.dim)
    A = prob.dtd @ P
    B = P @ prob.sst
    eta = max(float(np.sum(A * B)), 0.0)
    return eta, _pullback(lu, P, 2.0 * A @ prob.sst)


def grad_tikhonov(q, prob: DescramblingProblem) -> np.ndarray:
    return _tikhonov_vg(q, prob)[1]


# mds / mdns on the leading min(n, c) diagonal of P W


def _diag_grad_mask(prob, scale_rows):
    W = prob.weight
    n, c = W.shape
    m = min(n, c)
    dP = np.zeros((n, n))
    # (d eta / dP)_lk = s_l W_kl for l < m
    dP[:m, :] = scale_rows[:, None] * W[:, :m].T
    return dP


def eval_mds(q, prob: DescramblingProblem) -> float:
    q = _check(q, prob, MDS)
    P = cayley_map(q, prob.dim)
    return float(np.trace(P @ prob.weight))


def _mds_vg(q, prob):
    q = _check(q, prob, MDS)
    lu, P = _factor(q, prob.dim)
    eta = float(np.trace(P @ prob.weight))
    m = min(prob.weight.shape)
    return eta, _pullback(lu, P, _diag_grad_mask(prob, np.ones(m)))


def grad_mds(q, prob: DescramblingProblem) -> np.ndarray:
    return _mds_vg(q, prob)[1]


def eval_mdns(q, prob: DescramblingProblem) -> float:
    q = _check(q, prob, MDNS)
    P = cayley_map(q, prob.dim)
    diag = np.diagonal(P @ prob.weight)
    return float(diag @ diag)


def _mdns_vg(q, prob):
    q = _check(q, prob, MDNS)
    lu, P = _factor(q, prob.dim)
    diag = np.diagonal(P @ prob.weight).copy()
    eta = float(diag @ diag)
    return eta, _pullback(lu, P, _diag_grad_mask(prob, 2.0 * diag))


def grad_mdns(q, prob: DescramblingProblem) -> np.ndarray:
    return _mdns_vg(q, prob)[1]


_EVAL = {TIKHONOV: eval_tikhonov, MDS: eval_mds, MDNS: eval_mdns}
_GRAD = {TIKHONOV: grad_tikhonov, MDS: grad_mds, MDNS: grad_mdns}
_VALUE_AND_GRAD = {TIKHONOV: _tikhonov_vg, MDS: _mds_vg, MDNS: _mdns_vg}
