import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=30, derandomize=True)
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def loop_conv2d(x, w, stride=1, pad=0):
    """Quadruple-loop cross-correlation, used as an independent oracle."""
    C, H, W = x.shape
    O, _, kh, kw = w.shape
    xp = np.zeros((C, H + 2 * pad, W + 2 * pad))
    xp[:, pad:pad + H, pad:pad + W] = x
    OH = (H + 2 * pad - kh) // stride + 1
    OW = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((O, OH, OW))
    for o in range(O):
        for i in range(OH):
            for j in range(OW):
                acc = 0.0
                for c in range(C):
                    for a in range(kh):
                        for b in range(kw):
                            acc += w[o, c, a, b] * xp[c, i * stride + a, j * stride + b]
                out[o, i, j] = acc
    return out


def loop_dct2(x):
    """Unnormalised 2D DCT-II straight from the double-sum definition."""
    H, W = x.shape
    f = np.zeros((H, W))
    for h in range(H):
        for w in range(W):
            acc = 0.0
            for i in range(H):
                for j in range(W):
                    acc += (x[i, j] * np.cos(np.pi * h / H * (i + 0.5))
                            * np.cos(np.pi * w / W * (j + 0.5)))
            f[h, w] = acc
    return f
