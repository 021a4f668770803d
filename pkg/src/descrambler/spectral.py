"""Second-derivative and DFT matrices.

Complex matrices are ordinary ``complex128`` arrays; callers that need to
persist them write the real and imaginary parts separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SizeError, as_matrix

FOURIER = "fourier"
FINITE_DIFFERENCE = "finite-difference"
DIFF_KINDS = (FOURIER, FINITE_DIFFERENCE)


@dataclass(frozen=True)
class DiffMatrix:
    d: np.ndarray
    kind: str
    grid_points: int
    grid_spacing: float


@dataclass(frozen=True)
class DftPair:
    f_plus: np.ndarray
    f_minus: np.ndarray


def wavenumbers(n: int, spacing: float = 1.0) -> np.ndarray:
    """Angular wavenumbers of an n-point periodic grid in DFT order."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)


def build_dft_pair(n: int) -> DftPair:
    """Unitary forward/backward DFT matrices (1/sqrt(n) on both)."""
    if n < 2:
        raise SizeError(f"DFT needs n >= 2, got {n}")
    j = np.arange(n)
    # reduce jk mod n before the exponential to keep the phase exact
    phase = -2.0 * np.pi * (np.outer(j, j) % n) / n
    f_plus = np.exp(1j * phase) / np.sqrt(n)
    return DftPair(f_plus=f_plus, f_minus=f_plus.conj().T.copy())


def build_second_derivative(n: int, spacing: float = 1.0, kind: str = FOURIER) -> DiffMatrix:
    """Second-derivative matrix on an n-point grid.

    ``fourier``: periodic spectral differentiation, F^-1 diag(-k^2) F.
    ``finite-difference``: 3-point stencil, first and last rows zero.
    """
    if n < 4:
        raise SizeError(f"second-derivative matrix needs n >= 4, got {n}")
    if not spacing > 0:
        raise SizeError(f"grid spacing must be positive, got {spacing}")
    if kind == FOURIER:
        if n % 2:
            raise SizeError(f"Fourier spectral differentiation needs even n, got {n}")
        pair = build_dft_pair(n)
        k = wavenumbers(n, spacing)
        # Nyquist mode: -k^2 is real and well defined, keep it
        full = pair.f_minus @ (-(k**2)[:, None] * pair.f_plus)
        imag = np.max(np.abs(full.imag))
        scale = max(1.0, np.max(np.abs(full.real)))
        assert imag <= 1e-12 * scale * n, imag
        d = full.real
        d = 0.5 * (d + d.T)
        # constants are annihilated exactly: diagonal from the off-diagonal row sums
        np.fill_diagonal(d, 0.0)
        np.fill_diagonal(d, -d.sum(axis=1))
    elif kind == FINITE_DIFFERENCE:
        d = np.zeros((n, n))
        i = np.arange(1, n - 1)
        d[i, i - 1] = 1.0
        d[i, i] = -2.0
        d[i, i + 1] = 1.0
        d /= spacing**2
    else:
        raise ValueError(f"unknown derivative kind {kind!r}; expected one of {DIFF_KINDS}")
    return DiffMatrix(d=as_matrix(d), kind=kind, grid_points=n, grid_spacing=float(spacing))


def spectrum2d(w: np.ndarray) -> np.ndarray:
    """Magnitude of the 2-D DFT with the zero-frequency bin centred."""
    w = as_matrix(w)
    return np.abs(np.fft.fftshift(np.fft.fft2(w)))
