"""DEER forward model: Fresnel integrals, the dipolar kernel, synthetic data.

Units: time in microseconds, distance in nanometres, dipolar frequency in
rad/us.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import constants

from .core import ConfigError, DeerDataset, DomainError

# mu0 * gamma_e^2 * hbar / (4 pi), free-electron gyromagnetic ratio, in rad/us * nm^3
DIPOLAR_CONSTANT = (
    constants.mu_0
    * constants.physical_constants["electron gyromag. ratio"][0] ** 2
    * constants.hbar
    / (4.0 * np.pi)
    / 1e-27  # m^3 -> nm^3
    / 1e6  # rad/s -> rad/us
)
DIPOLAR_CONSTANT_MHZ = DIPOLAR_CONSTANT / (2.0 * np.pi)  # ~52.04 MHz nm^3

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@lru_cache(maxsize=8)
def _panels(xmax: float) -> np.ndarray:
    # unit panels up to 1, then a quarter of the local period pi/t (uniform in t^2)
    edges = [np.linspace(0.0, min(xmax, 1.0), 5)]
    if xmax > 1.0:
        m = int(np.ceil((xmax * xmax - 1.0) / (np.pi / 4.0))) + 1
        edges.append(np.sqrt(np.linspace(1.0, xmax * xmax, m + 1))[1:])
    return np.concatenate(edges)


def _fresnel(x, fn):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("Fresnel argument must be finite")
    ax = np.abs(x).ravel()
    out = np.zeros_like(ax)
    if ax.size == 0 or ax.max() == 0.0:
        return out.reshape(x.shape)
    xmax = float(ax.max())
    edges = np.unique(np.concatenate([_panels(xmax), ax]))
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    seg = half * (fn(t * t) @ _GL_WEIGHTS)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    out = cum[np.searchsorted(edges, ax)]
    return (np.sign(x).ravel() * out).reshape(x.shape)


def fresnel_c(x):
    """C(x) = integral_0^x cos(t^2) dt (odd in x)."""
    return _fresnel(x, np.cos)


def fresnel_s(x):
    """S(x) = integral_0^x sin(t^2) dt (odd in x)."""
    return _fresnel(x, np.sin)


def dipolar_frequency(r):
    """D(r) in rad/us for r in nm."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r <= 0):
        raise DomainError("distance must be positive")
    return DIPOLAR_CONSTANT / r**3


def kernel_from_phase(w):
    """Orientation-averaged dipolar signal as a function of w = D t.

    Equals integral_0^1 cos(w (1 - 3u^2)) du, written with the Fresnel
    integrals of argument sqrt(3 w).
    """
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0):
        raise DomainError("D t must be non-negative")
    out = np.ones_like(w)
    big = w >= 1e-6
    wb = w[big]
    z = np.sqrt(3.0 * wb)
    out[big] = (np.cos(wb) * fresnel_c(z) + np.sin(wb) * fresnel_s(z)) / z
    # small-w branch: 1 - (2/5) w^2 + O(w^4); keep the leading correction
    ws = w[~big]
    out[~big] = 1.0 - 0.4 * ws * ws
    return out


def deer_kernel(r, t):
    """gamma(r, t); broadcasts over r and t."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    return kernel_from_phase(dipolar_frequency(r) * t)


def kernel_matrix(time_grid, dist_grid) -> np.ndarray:
    """K[i, j] = gamma(r_j, t_i); every column starts at 1 when t_0 = 0."""
    t = np.asarray(time_grid, dtype=np.float64)
    r = np.asarray(dist_grid, dtype=np.float64)
    return deer_kernel(r[None, :], t[:, None])


def fredholm_forward(p, kernel: np.ndarray) -> np.ndarray:
    """Gamma(t) = sum_r p(r) gamma(r, t) for p summing to one."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise DomainError("distance distribution must be non-negative")
    return kernel @ p


@dataclass
class DeerGridConfig:
    time_points: int = 64
    t_max: float = 2.0
    dist_points: int = 64
    r_min: float = 2.5
    r_max: float = 6.0
    noise_sigma_range: tuple[float, float] = (0.0, 0.1)
    modulation_depth_range: tuple[float, float] = (0.2, 0.6)
    background_rate_range: tuple[float, float] = (0.0, 0.2)
    n_gaussians_max: int = 3
    seed: int = 0

    def validate(self) -> None:
        if self.time_points < 2 or self.dist_points < 2:
            raise ConfigError("grids need at least 2 points")
        if not self.t_max > 0:
            raise ConfigError("t_max must be positive")
        if not 0 < self.r_min < self.r_max:
            raise ConfigError("need 0 < r_min < r_max")
        for name in ("noise_sigma_range", "modulation_depth_range", "background_rate_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 <= lo <= hi):
                raise ConfigError(f"{name} must be an ordered non-negative pair")
        if self.modulation_depth_range[1] > 1:
            raise ConfigError("modulation depth cannot exceed 1")
        if self.n_gaussians_max < 1:
            raise ConfigError("n_gaussians_max must be >= 1")

    @property
    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.time_points)

    @property
    def dist_grid(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.dist_points)


def trace_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trace, so traces do not depend on generation order."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def random_distribution(r: np.ndarray, cfg: DeerGridConfig, rng: np.random.Generator) -> np.ndarray:
    span = cfg.r_max - cfg.r_min
    k = int(rng.integers(1, cfg.n_gaussians_max + 1))
    means = rng.uniform(cfg.r_min + 0.1 * span, cfg.r_max - 0.1 * span, k)
    widths = rng.uniform(0.02 * span, 0.1 * span, k)
    amps = rng.uniform(0.2, 1.0, k)
    p = np.zeros_like(r)
    for a, mu, s in zip(amps, means, widths):
        p += a * np.exp(-0.5 * ((r - mu) / s) ** 2)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


@dataclass(frozen=True)
class Trace:
    """One synthetic trace with its ground truth pieces."""

    p: np.ndarray
    form_factor: np.ndarray  # Gamma(t)
    clean: np.ndarray  # background * (1 - lambda + lambda Gamma)
    noisy: np.ndarray
    depth: float
    rate: float
    sigma: float


def simulate_trace(cfg: DeerGridConfig, kernel: np.ndarray, index: int) -> Trace:
    rng = trace_rng(cfg.seed, index)
    t = cfg.time_grid
    p = random_distribution(cfg.dist_grid, cfg, rng)
    lam = rng.uniform(*cfg.modulation_depth_range)
    k = rng.uniform(*cfg.background_rate_range)
    sigma = rng.uniform(*cfg.noise_sigma_range)
    gamma = fredholm_forward(p, kernel)
    clean = np.exp(-k * t) * (1.0 - lam + lam * gamma)
    noisy = clean + sigma * rng.standard_normal(t.size)
    return Trace(p, gamma, clean, noisy, float(lam), float(k), float(sigma))


def generate_traces(cfg: DeerGridConfig, n_traces: int, start: int = 0) -> list[Trace]:
    cfg.validate()
    K = kernel_matrix(cfg.time_grid, cfg.dist_grid)
    return [simulate_trace(cfg, K, i) for i in range(start, start + n_traces)]


def generate_dataset(cfg: DeerGridConfig, n_traces: int) -> DeerDataset:
    """Synthetic DEER traces (inputs) and distance distributions (targets)."""
    if n_traces < 1:
        raise ConfigError("n_traces must be >= 1")
    traces = generate_traces(cfg, n_traces)
    meta = {
        "generator": "deer.generate_dataset",
        "config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()},
        "n_traces": n_traces,
        "dipolar_constant_rad_per_us_nm3": DIPOLAR_CONSTANT,
        "dipolar_constant_mhz_nm3": DIPOLAR_CONSTANT_MHZ,
    }
    return DeerDataset(
        time_grid=cfg.time_grid,
        dist_grid=cfg.dist_grid,
        inputs=np.column_stack([tr.noisy for tr in traces]),
        targets=np.column_stack([tr.p for tr in traces]),
        seed=cfg.seed,
        meta=meta,
    )
