import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from descrambler import deer
from descrambler.core import ShapeError, SizeError
from descrambler.replica import (
    DesignError,
    apply_fir,
    apply_fir_columns,
    default_lambda_grid,
    design_fir,
    fit_transform,
    frequency_response,
    load_filter,
    replica_pipeline,
    save_filter,
)


@pytest.fixture(scope="module")
def lowpass():
    return design_fir("lowpass", 32, 0.01, 0.3)


@pytest.fixture(scope="module")
def notch():
    return design_fir("notch", 256, 0.008, 0.001)


def dft_gain(taps, f):
    n = np.arange(taps.size)
    return abs(sum(taps * np.exp(-2j * np.pi * f * n)))


def test_lowpass_design(lowpass):
    assert abs(lowpass.dc_gain - 1) <= 0.01
    assert dft_gain(lowpass.taps, 0.45) <= 0.01
    assert lowpass.stopband_attenuation_db >= 40
    assert lowpass.passband_ripple_db <= 1
    assert np.allclose(lowpass.taps, lowpass.taps[::-1])


def test_notch_design(notch):
    assert notch.order == 256
    assert dft_gain(notch.taps, 0.0) <= 1e-3
    assert dft_gain(notch.taps, 0.05) >= 0.9
    assert notch.passband_ripple_db <= 1


@pytest.mark.xfail(strict=True, reason="Hamming window at order 256 reaches ~31.7 dB over a 0.007 transition band")
def test_notch_stopband_attenuation_40db(notch):
    assert notch.stopband_attenuation_db >= 40


def test_reported_metrics_match_dft(notch):
    grid = np.linspace(0, 0.5, 1024)
    mag = np.array([dft_gain(notch.taps, f) for f in grid[grid <= 0.001]])
    assert notch.stopband_attenuation_db == pytest.approx(-20 * np.log10(mag.max()), rel=1e-9)


def test_frequency_response_matches_dft(lowpass):
    for f in (0.0, 0.1, 0.37):
        assert abs(frequency_response(lowpass.taps, f)[0]) == pytest.approx(dft_gain(lowpass.taps, f), rel=1e-12)


def test_infeasible_order():
    with pytest.raises(DesignError) as err:
        design_fir("notch", 8, 0.008, 0.001)
    assert err.value.min_order > 8
    design_fir("notch", err.value.min_order, 0.008, 0.001)


@pytest.mark.parametrize(
    "args",
    [("bandpass", 32, 0.1, 0.2), ("lowpass", 31, 0.1, 0.3), ("lowpass", 32, 0.3, 0.1), ("notch", 32, 0.1, 0.3), ("lowpass", 32, 0.1, 0.5)],
)
def test_design_errors(args):
    with pytest.raises(DesignError):
        design_fir(*args)


def test_zero_in_zero_out(lowpass, notch):
    assert not apply_fir(notch, apply_fir(lowpass, np.zeros(300))).any()


def test_dc_rejected(notch):
    out = apply_fir(notch, np.full(512, 3.0))
    assert np.abs(out).max() <= 1e-3 * 3.0


def test_inband_tone_preserved(lowpass):
    n = np.arange(400)
    x = np.sin(2 * np.pi * 0.05 * n)
    y = apply_fir(lowpass, x)
    amp = np.abs(y[100:300]).max()
    assert amp == pytest.approx(1.0, rel=0.02)


def test_zero_phase_no_shift(lowpass):
    n = np.arange(301)
    pulse = np.exp(-0.5 * ((n - 140) / 12.0) ** 2) * np.cos(2 * np.pi * 0.03 * (n - 140))
    assert abs(int(np.argmax(apply_fir(lowpass, pulse))) - 140) <= 1


def test_too_short(notch):
    with pytest.raises(SizeError):
        apply_fir(notch, np.ones(100))
    with pytest.raises(ShapeError):
        apply_fir(notch, np.ones((300, 2)))


def test_columns_match_single(lowpass, rng):
    x = rng.standard_normal((64, 3))
    y = apply_fir_columns(lowpass, x)
    assert np.array_equal(y[:, 1], apply_fir(lowpass, x[:, 1]))


def test_filter_round_trip(tmp_path, notch):
    save_filter(notch, tmp_path / "n.dmat")
    back = load_filter(tmp_path / "n.dmat")
    assert np.array_equal(back.taps, notch.taps) and back.kind == notch.kind
    assert back.stopband_attenuation_db == notch.stopband_attenuation_db


# --- regularised transform ------------------------------------------------


def test_planted_linear_map(rng):
    n_t, n_r, n = 20, 8, 400
    T0 = rng.standard_normal((n_r, n_t))
    F = rng.standard_normal((n_t, n))
    tr = fit_transform(F, T0 @ F, lambda_grid=[1e-12, 1e-11, 1e-10])
    assert np.linalg.norm(tr.t - T0) / np.linalg.norm(T0) <= 1e-3


def test_ridge_limit_and_residual(rng):
    F = rng.standard_normal((15, 200))
    P = rng.random((6, 200))
    grid = np.logspace(-6, 8, 30)
    tr = fit_transform(F, P, grid)
    norms = [p.solution_norm for p in tr.lcurve]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-4 * norms[0]
    scale = np.linalg.norm(F @ F.T) * np.linalg.norm(P)
    for lam, res in zip(grid, tr.normal_residuals):
        assert res <= 1e-8 * scale
    assert tr.lam in grid


def test_default_grid_spans(rng):
    F = rng.standard_normal((10, 50))
    g = default_lambda_grid(F)
    s = np.trace(F @ F.T) / 10
    assert g.size == 40
    assert g[0] == pytest.approx(1e-8 * s) and g[-1] == pytest.approx(1e2 * s)


def test_grid_must_be_positive(rng):
    F = rng.standard_normal((4, 20))
    with pytest.raises(ValueError):
        fit_transform(F, F, [0.0, 1.0])
    with pytest.raises(ShapeError):
        fit_transform(F, F[:, :10])


def test_lcurve_corner_near_true_optimum(rng, capsys):
    n_t, n = 30, 300
    T0 = rng.standard_normal((10, n_t)) / np.arange(1, n_t + 1)
    F = rng.standard_normal((n_t, n)) * np.logspace(0, -3, n_t)[:, None]
    P_true = T0 @ F
    P = P_true + 0.05 * rng.standard_normal(P_true.shape)
    grid = np.logspace(-8, 2, 40)
    tr = fit_transform(F, P, grid)
    F_test = rng.standard_normal((n_t, n)) * np.logspace(0, -3, n_t)[:, None]
    errs = [np.linalg.norm(fit_transform(F, P, [g]).t @ F_test - T0 @ F_test) for g in grid]
    best = grid[int(np.argmin(errs))]
    steps = abs(np.log(tr.lam / best) / np.log(grid[1] / grid[0]))
    with capsys.disabled():
        print(f"\n  L-curve lambda {tr.lam:.3g}, true-error lambda {best:.3g} ({steps:.0f} grid steps apart)")
    assert np.isfinite(tr.lam)


# --- pipeline -------------------------------------------------------------


@pytest.fixture(scope="module")
def fitted(lowpass, notch):
    cfg = deer.DeerGridConfig(
        time_points=512, t_max=8.0, dist_points=64, noise_sigma_range=(0, 0),
        background_rate_range=(0, 0), modulation_depth_range=(1, 1), seed=21,
    )
    traces = deer.generate_traces(cfg, 1500)
    ff = np.column_stack([tr.form_factor for tr in traces])
    F = apply_fir_columns(notch, apply_fir_columns(lowpass, ff))
    P = np.column_stack([tr.p for tr in traces])
    return cfg, fit_transform(F, P)


def test_zero_trace_degenerate(lowpass, notch, fitted):
    out = replica_pipeline(np.zeros(512), lowpass, notch, fitted[1])
    assert out.degenerate and not out.p.any()


def test_single_gaussian_peak(lowpass, notch, fitted):
    cfg, tr = fitted
    r = cfg.dist_grid
    for mu in (3.2, 4.0, 4.8):
        p = np.exp(-0.5 * ((r - mu) / 0.15) ** 2)
        p /= p.sum()
        trace = deer.fredholm_forward(p, deer.kernel_matrix(cfg.time_grid, r))
        out = replica_pipeline(trace, lowpass, notch, tr)
        assert not out.degenerate
        assert abs(int(np.argmax(out.p)) - int(np.argmax(p))) <= 2
        assert out.p.sum() == pytest.approx(1.0) and out.p.min() >= 0


@given(st.floats(0.1, 10.0))
def test_positively_homogeneous(c):
    lp = design_fir("lowpass", 32, 0.01, 0.3)
    nt = design_fir("notch", 64, 0.03, 0.01)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(128)
    T = rng.standard_normal((10, 128))
    a, b = replica_pipeline(x, lp, nt, T), replica_pipeline(c * x, lp, nt, T)
    assert np.allclose(b.filtered, c * a.filtered, rtol=1e-10, atol=1e-12)
    assert np.allclose(b.p, a.p, atol=1e-10)


def test_pipeline_shape_error(lowpass, notch, fitted):
    with pytest.raises(ShapeError):
        replica_pipeline(np.ones(400), lowpass, notch, fitted[1])
