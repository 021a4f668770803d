import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from descrambler import cayley
from descrambler.cayley import cayley_map, n_params
from descrambler.core import ConfigError, FeedForwardNet, ShapeError
from descrambler.descramble import (
    POST,
    PRE,
    OptimizerConfig,
    WiretapSpec,
    apply_descrambler,
    assemble_problem,
    forward_with_wiretap,
    optimize,
    wiretap_signal,
)
from descrambler.netlab import forward
from descrambler.spectral import build_second_derivative

from conftest import random_rotation


def two_layer(rng, n_in=5, hidden=4, n_out=3):
    return FeedForwardNet.from_weights(
        [rng.standard_normal((hidden, n_in)), rng.standard_normal((n_out, hidden))], ["tanh", "logsig"]
    )


def test_single_layer_pre_signal(rng):
    net = FeedForwardNet.from_weights([rng.standard_normal((4, 5))], ["tanh"])
    x = rng.standard_normal((5, 7))
    prob = assemble_problem(net, x, WiretapSpec(1, PRE), build_second_derivative(4))
    S = net.weights[0] @ x
    assert np.array_equal(wiretap_signal(net, x, WiretapSpec(1, PRE)), S)
    assert np.allclose(prob.sst, S @ S.T, rtol=1e-13)


def test_post_signal_matches_forward(rng):
    net = two_layer(rng)
    x = rng.standard_normal((5, 6))
    s = wiretap_signal(net, x, WiretapSpec(1, POST))
    oracle = np.array([[np.tanh(sum(net.weights[0][i, k] * x[k, j] for k in range(5))) for j in range(6)] for i in range(4)])
    assert np.allclose(s, oracle, atol=1e-14)


def test_alpha_augmentation(rng):
    net = two_layer(rng)
    x = rng.standard_normal((5, 6))
    spec = WiretapSpec(1, POST, alpha=1.0)
    S = np.hstack([wiretap_signal(net, x, spec), net.weights[1].T])
    assert S.shape[1] == 6 + 3
    prob = assemble_problem(net, x, spec, build_second_derivative(4))
    assert np.allclose(prob.sst, S @ S.T, rtol=1e-13)


def test_wiretap_position_errors(rng):
    net = two_layer(rng)
    with pytest.raises(ConfigError):
        WiretapSpec(3).check(net)
    with pytest.raises(ConfigError):
        WiretapSpec(2, alpha=0.5).check(net)
    with pytest.raises(ConfigError):
        WiretapSpec(1, "middle")
    with pytest.raises(ConfigError):
        WiretapSpec(1, alpha=-1.0)
    with pytest.raises(ShapeError):
        wiretap_signal(net, rng.standard_normal((4, 2)), WiretapSpec(1))


def test_config_validation():
    with pytest.raises(ConfigError):
        optimize(cayley.mds_problem(np.eye(3)), OptimizerConfig(memory=0))
    with pytest.raises(ConfigError):
        optimize(cayley.mds_problem(np.eye(3)), OptimizerConfig(wolfe_c1=0.95))
    with pytest.raises(ConfigError):
        optimize(cayley.mds_problem(np.eye(3)), OptimizerConfig(init="gaussian"))


def test_constant_signal_stationary():
    prob = cayley.tikhonov_problem(np.full((8, 20), 0.3), build_second_derivative(8))
    res = optimize(prob)
    assert res.converged and res.iterations <= 1
    assert res.value <= 1e-12
    assert np.array_equal(res.p, np.eye(8))


def test_mds_recovers_trace_bound(rng):
    R = random_rotation(6, rng)
    res = optimize(cayley.mds_problem(R.T))
    assert res.value >= 6 - 1e-6
    assert np.allclose(res.p, R, atol=1e-4)


def test_mdns_planted_three(rng):
    R = random_rotation(3, rng)
    res = optimize(cayley.mdns_problem(R.T @ np.diag([3.0, 2.0, 1.0])))
    assert res.value == pytest.approx(14.0, abs=1e-6)


@pytest.mark.parametrize("name", cayley.FUNCTIONALS)
def test_trace_monotone_in_user_sense(rng, name):
    n = 6
    if name == cayley.TIKHONOV:
        prob = cayley.tikhonov_problem(rng.standard_normal((n, 30)), build_second_derivative(n))
    else:
        prob = getattr(cayley, f"{name}_problem")(rng.standard_normal((n, n)))
    res = optimize(prob, OptimizerConfig(max_iters=200))
    t = res.objective_trace
    if prob.sense == "min":
        assert all(b < a for a, b in zip(t, t[1:]))
    else:
        assert all(b > a for a, b in zip(t, t[1:]))
    assert res.value == pytest.approx(prob.value(res.q), rel=1e-12)


def test_deterministic(rng):
    S = rng.standard_normal((8, 40))
    prob = cayley.tikhonov_problem(S, build_second_derivative(8))
    cfg = OptimizerConfig(init="random", seed=4, max_iters=300)
    a, b = optimize(prob, cfg), optimize(prob, cfg)
    assert np.array_equal(a.q, b.q) and a.objective_trace == b.objective_trace


def test_scale_equivariance_identical_q(rng):
    S = rng.standard_normal((8, 40))
    d = build_second_derivative(8)
    a = optimize(cayley.tikhonov_problem(S, d), OptimizerConfig(max_iters=300))
    b = optimize(cayley.tikhonov_problem(2 * S, d), OptimizerConfig(max_iters=300))
    assert np.array_equal(a.q, b.q)


@given(st.integers(0, 2**31 - 1), st.integers(-6, 6))
def test_scale_equivariance_property(seed, k):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((6, 15))
    d = build_second_derivative(6)
    cfg = OptimizerConfig(max_iters=150)
    a = optimize(cayley.tikhonov_problem(S, d), cfg)
    b = optimize(cayley.tikhonov_problem(2.0**k * S, d), cfg)
    assert np.array_equal(a.q, b.q)
    assert b.value == 4.0**k * a.value


def test_apply_identity_and_inverse(rng):
    net = two_layer(rng)
    view = apply_descrambler(net, WiretapSpec(1), np.eye(4))
    assert np.array_equal(view.weights, net.weights[0])
    p = cayley_map(rng.standard_normal(n_params(4)), 4)
    view = apply_descrambler(net, WiretapSpec(1), p)
    assert np.allclose(p.T @ view.weights, net.weights[0], atol=1e-10)
    with pytest.raises(ShapeError):
        apply_descrambler(net, WiretapSpec(1), np.eye(3))


def test_post_view_conjugate(rng):
    net = two_layer(rng)
    p = cayley_map(rng.standard_normal(n_params(4)), 4)
    view = apply_descrambler(net, WiretapSpec(1, POST), p)
    x = rng.standard_normal(5)
    lhs = view.next_weights @ (p @ np.tanh(net.weights[0] @ x))
    assert np.allclose(lhs, net.weights[1] @ np.tanh(net.weights[0] @ x), atol=1e-10)


@given(st.integers(0, 2**31 - 1), st.sampled_from([PRE, POST]), st.integers(1, 2))
def test_output_invariance(seed, position, layer):
    rng = np.random.default_rng(seed)
    net = two_layer(rng)
    spec = WiretapSpec(layer, position)
    dim = net.weights[layer - 1].shape[0]
    p = cayley_map(rng.standard_normal(n_params(dim)), dim)
    x = rng.standard_normal((5, 8))
    y, y_p = forward(net, x), forward_with_wiretap(net, spec, p, x)
    assert np.linalg.norm(y_p - y) <= 1e-10 * np.linalg.norm(y)
