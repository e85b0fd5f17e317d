import numpy as np
import pytest

from sempcyc.network import init_model
from sempcyc.objective import Batch


def tiny_state(seed=0, *, M=3, k=4, n_seen=3, d_feat=5, d_hidden=4, select=True,
               shared=False, dtype=np.float64):
    kw = dict(d_feat=d_feat, d_hidden=d_hidden, select_side_info=select,
              shared_classifier=shared, dtype=dtype)
    return init_model(M if select else k, k, n_seen, seed, **kw)


def tiny_batch(state, seed=0, n=4):
    rng = np.random.default_rng(seed)
    d, k, C = state.d_feat, state.k, state.n_seen
    labels = rng.integers(0, C, n)
    side = rng.uniform(0.05, 0.95, (C, k))
    return Batch(rng.uniform(0, 1, (n, d)), rng.uniform(0, 1, (n, d)), labels, side[labels])


def perturb_biases(state, seed=0, scale=0.3):
    """Non-zero biases so every parameter tensor has a generic gradient."""
    rng = np.random.default_rng(seed + 1000)
    for name, a in list(state.named_arrays()):
        if name.split(".")[1].startswith("b"):
            state.set(name, rng.normal(0, scale, a.shape))
    return state


def numeric_grad(f, state, name, h=1e-6):
    a = state.get(name).copy()
    g = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        orig = a[idx]
        a[idx] = orig + h
        state.set(name, a.copy())
        fp = f(state)
        a[idx] = orig - h
        state.set(name, a.copy())
        fm = f(state)
        a[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    state.set(name, a)
    return g


def rel_error(analytic, numeric):
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-7)
    return float(np.abs(analytic - numeric).max() / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
