"""Rational DSP replica of a two-layer DEER network.

A low-pass FIR removes noise, a high-pass FIR with a notch at zero frequency
removes the baseline, and a ridge-regularised linear map T takes the filtered
time trace to a distance distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .core import DescramblerError, ShapeError, SizeError, as_matrix, load_matrix, save_matrix

LOWPASS = "lowpass"
NOTCH = "notch"
FIR_KINDS = (LOWPASS, NOTCH)
RESPONSE_POINTS = 1024


class DesignError(DescramblerError, ValueError):
    def __init__(self, message: str, min_order: int | None = None):
        self.min_order = min_order
        super().__init__(message)


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    kind: str
    passband_edge: float
    stopband_edge: float
    stopband_attenuation_db: float = float("nan")
    passband_ripple_db: float = float("nan")

    @property
    def order(self) -> int:
        return self.taps.size - 1

    @property
    def dc_gain(self) -> float:
        return float(self.taps.sum())

    def spec(self) -> dict:
        return {
            "kind": self.kind,
            "order": self.order,
            "passband_edge": self.passband_edge,
            "stopband_edge": self.stopband_edge,
            "window": "hamming",
            "cutoff": 0.5 * (self.passband_edge + self.stopband_edge),
            "dc_gain": self.dc_gain,
            "stopband_attenuation_db": self.stopband_attenuation_db,
            "passband_ripple_db": self.passband_ripple_db,
        }


def frequency_response(taps: np.ndarray, freqs) -> np.ndarray:
    """Complex response at ``freqs`` in cycles per sample."""
    taps = np.asarray(taps, dtype=np.float64)
    f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    n = np.arange(taps.size)
    return np.exp(-2j * np.pi * np.outer(f, n)) @ taps


def _windowed_sinc(order: int, cutoff: float) -> np.ndarray:
    n = np.arange(order + 1) - order / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n)
    h *= np.hamming(order + 1)
    return h / h.sum()


def _band_metrics(taps, kind, f_pass, f_stop):
    grid = np.linspace(0.0, 0.5, RESPONSE_POINTS)
    mag = np.abs(frequency_response(taps, grid))
    if kind == LOWPASS:
        pb, sb = grid <= f_pass, grid >= f_stop
    else:
        pb, sb = grid >= f_pass, grid <= f_stop
    with np.errstate(divide="ignore"):
        atten = -20 * np.log10(np.max(mag[sb])) if np.any(sb) else math.inf
        ripple = 20 * np.log10(np.max(mag[pb]) / np.min(mag[pb])) if np.any(pb) else 0.0
    return float(atten), float(ripple)


def design_fir(kind: str, order: int, passband_edge: float, stopband_edge: float) -> FirFilter:
    """Hamming-windowed sinc FIR with the cutoff midway between the edges.

    Edges are in cycles per sample. ``lowpass`` needs passband < stopband;
    ``notch`` is a high-pass (stopband at zero frequency) made by spectral
    inversion of the matching low-pass, so its DC gain is exactly zero.
    """
    if kind not in FIR_KINDS:
        raise DesignError(f"unknown filter kind {kind!r}; expected one of {FIR_KINDS}")
    if order < 4 or order % 2:
        raise DesignError(f"order must be even and >= 4, got {order}")
    for edge in (passband_edge, stopband_edge):
        if not 0 < edge < 0.5:
            raise DesignError(f"band edges must lie in (0, 0.5), got {edge}")
    if kind == LOWPASS and not passband_edge < stopband_edge:
        raise DesignError("low-pass needs passband edge below stopband edge")
    if kind == NOTCH and not stopband_edge < passband_edge:
        raise DesignError("notch needs stopband edge below passband edge")
    width = abs(stopband_edge - passband_edge)
    # an order-N filter cannot resolve a transition narrower than 1/N
    min_order = 2 * math.ceil(0.5 / width)
    if order < min_order:
        raise DesignError(
            f"transition band {width:g} too narrow for order {order}; need order >= {min_order}", min_order
        )
    cutoff = 0.5 * (passband_edge + stopband_edge)
    h = _windowed_sinc(order, cutoff)
    if kind == NOTCH:
        h = -h
        h[order // 2] += 1.0
    atten, ripple = _band_metrics(h, kind, passband_edge, stopband_edge)
    h.setflags(write=False)
    return FirFilter(h, kind, float(passband_edge), float(stopband_edge), atten, ripple)


def apply_fir(f: FirFilter, signal) -> np.ndarray:
    """Zero-phase (forward then backward) filtering with reflection padding."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("apply_fir filters one vector at a time")
    if x.size < f.taps.size:
        raise SizeError(f"signal of length {x.size} is shorter than the {f.taps.size} filter taps")
    pad = f.order
    xp = np.pad(x, pad, mode="reflect")
    # taps are symmetric, so 'same' convolution is already centred
    y = np.convolve(xp, f.taps, mode="same")
    y = np.convolve(y[::-1], f.taps, mode="same")[::-1]
    return y[pad:-pad]


def apply_fir_columns(f: FirFilter, signals: np.ndarray) -> np.ndarray:
    signals = np.asarray(signals, dtype=np.float64)
    return np.column_stack([apply_fir(f, col) for col in signals.T])


# ---------------------------------------------------------------------------
# regularised time-to-distance transform


class LCurvePoint(NamedTuple):
    lam: float
    residual_norm: float
    solution_norm: float


@dataclass(frozen=True)
class RegularizedTransform:
    t: np.ndarray
    lam: float
    lcurve: list[LCurvePoint] = field(default_factory=list)
    curvature: np.ndarray | None = None
    normal_residuals: list[float] = field(default_factory=list)

    def __call__(self, f: np.ndarray) -> np.ndarray:
        return self.t @ f


def default_lambda_grid(F: np.ndarray, points: int = 40) -> np.ndarray:
    scale = np.einsum("ij,ij->", F, F) / F.shape[0]  # tr(F F^T) / n_t
    return np.logspace(-8, 2, points) * scale


def ridge_solve(FFt: np.ndarray, FPt: np.ndarray, lam: float) -> np.ndarray:
    """T^T = (F F^T + lam I)^-1 F P^T."""
    A = FFt + lam * np.eye(FFt.shape[0])
    return scipy.linalg.solve(A, FPt, assume_a="pos")


def lcurve_curvature(residual_norms, solution_norms, lams) -> np.ndarray:
    """Signed curvature of (log residual, log solution norm), parameter log lambda."""
    x = np.log(np.asarray(residual_norms))
    y = np.log(np.asarray(solution_norms))
    s = np.log(np.asarray(lams))
    dx, dy = np.gradient(x, s), np.gradient(y, s)
    ddx, ddy = np.gradient(dx, s), np.gradient(dy, s)
    denom = (dx * dx + dy * dy) ** 1.5
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (dx * ddy - ddx * dy) / denom
    return np.where(np.isfinite(k), k, -np.inf)


def fit_transform(f_solutions: np.ndarray, p_targets: np.ndarray, lambda_grid: Sequence[float] | None = None) -> RegularizedTransform:
    """Ridge fit of T with T F ~ P; lambda picked at the L-curve corner.

    ``f_solutions`` is n_t x n (one trace per column), ``p_targets`` n_r x n.
    """
    F = as_matrix(f_solutions, "f_solutions")
    P = as_matrix(p_targets, "p_targets")
    if F.shape[1] != P.shape[1]:
        raise ShapeError(f"{F.shape[1]} traces but {P.shape[1]} targets")
    lams = default_lambda_grid(F) if lambda_grid is None else np.asarray(lambda_grid, dtype=np.float64).ravel()
    if lams.size < 1 or np.any(~(lams > 0)) or not np.all(np.isfinite(lams)):
        raise ValueError("lambda grid must be finite and strictly positive")
    lams = np.sort(lams)
    FFt = F @ F.T
    FFt = 0.5 * (FFt + FFt.T)
    FPt = F @ P.T
    points, solutions, normal_res = [], [], []
    for lam in lams:
        Tt = ridge_solve(FFt, FPt, lam)
        A = FFt + lam * np.eye(FFt.shape[0])
        normal_res.append(float(np.linalg.norm(A @ Tt - FPt)))
        points.append(LCurvePoint(float(lam), float(np.linalg.norm(Tt.T @ F - P)), float(np.linalg.norm(Tt))))
        solutions.append(Tt.T)
    if lams.size >= 3:
        curv = lcurve_curvature([p.residual_norm for p in points], [p.solution_norm for p in points], lams)
        interior = curv[1:-1]
        best = 1 + int(np.argmax(interior))
    else:
        curv = None
        best = 0
    return RegularizedTransform(solutions[best], float(lams[best]), points, curv, normal_res)


# ---------------------------------------------------------------------------
# pipeline


class ReplicaOutput(NamedTuple):
    p: np.ndarray
    filtered: np.ndarray
    degenerate: bool


def replica_pipeline(trace, lowpass: FirFilter, notch: FirFilter, transform: RegularizedTransform | np.ndarray) -> ReplicaOutput:
    """Low-pass, then notch, then T; negatives clipped and the result
    normalised to unit sum. An all-zero result is returned as zeros with
    ``degenerate`` set."""
    x = np.asarray(trace, dtype=np.float64).ravel()
    T = transform.t if isinstance(transform, RegularizedTransform) else np.asarray(transform)
    if T.shape[1] != x.size:
        raise ShapeError(f"transform expects {T.shape[1]} time points, trace has {x.size}")
    filtered = apply_fir(notch, apply_fir(lowpass, x))
    p = np.clip(T @ filtered, 0.0, None)
    total = p.sum()
    if not total > 0:
        return ReplicaOutput(np.zeros(T.shape[0]), filtered, True)
    return ReplicaOutput(p / total, filtered, False)


def save_filter(f: FirFilter, path) -> None:
    """Taps as a .dmat column plus a JSON echo of the design at ``<path>.json``."""
    path = Path(path)
    save_matrix(f.taps[:, None], path)
    Path(str(path) + ".json").write_text(json.dumps(f.spec(), indent=2) + "\n")


def load_filter(path) -> FirFilter:
    path = Path(path)
    spec = json.loads(Path(str(path) + ".json").read_text())
    taps = load_matrix(path).ravel()
    atten, ripple = _band_metrics(taps, spec["kind"], spec["passband_edge"], spec["stopband_edge"])
    taps.setflags(write=False)
    return FirFilter(taps, spec["kind"], spec["passband_edge"], spec["stopband_edge"], atten, ripple)
