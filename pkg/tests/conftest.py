import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rotation(phi):
    return np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def eval_panel(dim):
    """A fixed mix of rectangles, norm exceedances and half-line products."""
    from itertools import product

    from tailinv.measures import HalfLineProduct, NormExceed, Rect

    panel = [NormExceed(r) for r in (0.5, 1.0, 3.0)]
    for signs in product((-1, 0, 1), repeat=dim):
        if any(signs):
            panel.append(HalfLineProduct(signs, [0.7 if s else 0.0 for s in signs]))
    for k in range(1, 5):
        lo = np.full(dim, -np.inf)
        hi = np.full(dim, np.inf)
        lo[0], hi[0] = 0.4 * k, 0.4 * k + 1.5
        panel.append(Rect(lo, hi))
        panel.append(Rect(-hi, -lo))
    return panel


def assert_same_on_panel(m1, m2, dim, rtol=1e-12, atol=1e-14):
    from tailinv.measures import tail_eval

    for A in eval_panel(dim):
        a, b = tail_eval(m1, A), tail_eval(m2, A)
        assert abs(a - b) <= atol + rtol * max(abs(a), abs(b)), (A, a, b)
