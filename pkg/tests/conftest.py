import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_rotation(n, rng):
    """Haar-ish rotation from QR, with det forced to +1."""
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture(scope="session")
def small_deer_net():
    """A quickly trained 2-layer net on a small dataset (shared across modules)."""
    from descrambler import deer, netlab

    cfg = deer.DeerGridConfig(time_points=16, dist_points=16, seed=3)
    ds = deer.generate_dataset(cfg, 200)
    net, _ = netlab.train([(12, "tanh"), (16, "logsig")], ds, netlab.TrainConfig(epochs=15, seed=1))
    return net, ds
