import numpy as np
import pytest

from dctrack import sim


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def suite():
    return [sim.generate_sequence(c) for c in sim.fixture_suite()]


def brute_conv(data, weight, bias):
    C, H, W = data.shape
    O, _, KH, KW = weight.shape
    out = np.zeros((O, H, W))
    for o in range(O):
        for y in range(H):
            for x in range(W):
                acc = bias[o]
                for c in range(C):
                    for dy in range(KH):
                        for dx in range(KW):
                            yy, xx = y + dy - KH // 2, x + dx - KW // 2
                            if 0 <= yy < H and 0 <= xx < W:
                                acc += weight[o, c, dy, dx] * data[c, yy, xx]
                out[o, y, x] = acc
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
