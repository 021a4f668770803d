"""Post-descrambling inspection: spectra, SVD, autocorrelation, determinants."""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .core import ShapeError, SizeError, as_matrix
from .netlab import svd_truncate
from .spectral import build_dft_pair


def fourier_conjugate(w: np.ndarray) -> np.ndarray:
    """F+ W F-: maps the input frequency spectrum to the output spectrum.

    Rows and columns are in DFT order (zero frequency first). Take
    ``np.abs`` of the result for the magnitude view.
    """
    w = as_matrix(w)
    left = build_dft_pair(w.shape[0]).f_plus if w.shape[0] > 1 else np.ones((1, 1))
    right = build_dft_pair(w.shape[1]).f_minus if w.shape[1] > 1 else np.ones((1, 1))
    return left @ w @ right


class SVD(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def svd_inspect(w: np.ndarray) -> SVD:
    """Thin SVD, W = U diag(S) V^T, S descending.

    Signs are fixed so that the largest-magnitude entry of every column of V
    is positive (the matching column of U flips with it).
    """
    w = as_matrix(w)
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    v = vt.T.copy()
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return SVD(u * signs, s, v * signs)


def row_autocorrelation(w: np.ndarray) -> np.ndarray:
    """Row-averaged biased autocorrelation of mean-removed rows, lag 0 .. cols-1.

    Each row is normalised by its own lag-0 value; constant rows contribute
    zeros.
    """
    w = as_matrix(w)
    n = w.shape[1]
    if n < 2:
        raise SizeError("autocorrelation needs at least 2 columns")
    x = w - w.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(x, nfft, axis=1)
    acf = np.fft.irfft(fx * fx.conj(), nfft, axis=1)[:, :n]
    lag0 = acf[:, :1]
    # rows that are constant up to rounding count as zero
    floor = n * (1e-12 * np.max(np.abs(w), axis=1)) ** 2
    live = lag0[:, 0] > np.maximum(floor, np.finfo(float).tiny)
    out = np.zeros_like(acf)
    out[live] = acf[live] / lag0[live]
    return out.mean(axis=0)


def block_average(w: np.ndarray, block_cols: int, sv_keep: int) -> np.ndarray:
    """Average the consecutive column blocks of width ``block_cols``, then keep
    the leading ``sv_keep`` singular values.

    A trailing partial block is dropped with a ``RuntimeWarning``.
    """
    w = as_matrix(w)
    if block_cols < 1 or block_cols > w.shape[1]:
        raise SizeError(f"block width {block_cols} does not fit {w.shape[1]} columns")
    n_blocks, rest = divmod(w.shape[1], block_cols)
    if rest:
        warnings.warn(f"dropping trailing partial block of {rest} columns", RuntimeWarning, stacklevel=2)
    blocks = w[:, : n_blocks * block_cols].reshape(w.shape[0], n_blocks, block_cols)
    avg = blocks.mean(axis=1)
    if not np.any(avg):
        return avg
    return svd_truncate(avg, min(sv_keep, min(avg.shape)))


def det_sign(w: np.ndarray) -> int:
    """Sign of det(W) from an LU factorisation with partial pivoting."""
    w = as_matrix(w)
    if w.shape[0] != w.shape[1]:
        raise ShapeError(f"determinant needs a square matrix, got {w.shape}")
    with warnings.catch_warnings():
        # singular input is an expected case here, reported as 0
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(w, check_finite=False)
    diag = np.diagonal(lu)
    if np.any(np.abs(diag) < 1e-300):
        return 0
    swaps = int(np.count_nonzero(piv != np.arange(piv.size)))
    sign = -1 if swaps % 2 else 1
    if np.count_nonzero(diag < 0) % 2:
        sign = -sign
    return sign


def frequency_profile(magnitude: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean magnitude per frequency bin along ``axis`` (plot data)."""
    return np.asarray(magnitude).mean(axis=1 - axis)


def _abs_bins(n: int) -> np.ndarray:
    j = np.arange(n)
    return np.minimum(j, n - j)


def band_medians(magnitude: np.ndarray) -> dict:
    """Median magnitudes of a DFT-ordered conjugated matrix in three regions.

    ``zero``: the zero-frequency row and column. ``passband``: both bins in
    1 .. n/4. ``high``: either bin above 3n/8 (the top quarter of 0 .. n/2).
    """
    mag = np.abs(np.asarray(magnitude))
    kr = _abs_bins(mag.shape[0])[:, None]
    kc = _abs_bins(mag.shape[1])[None, :]
    zero = (kr == 0) | (kc == 0)
    passband = (kr >= 1) & (kr <= mag.shape[0] / 4) & (kc >= 1) & (kc <= mag.shape[1] / 4)
    high = (kr > 3 * mag.shape[0] / 8) | (kc > 3 * mag.shape[1] / 8)
    zero, passband, high = np.broadcast_arrays(zero, passband, high)
    return {
        "zero": float(np.median(mag[zero])),
        "passband": float(np.median(mag[passband])),
        "high": float(np.median(mag[high])),
    }
