import numpy as np
import pytest

from cabinfront.dsp import AudioBuffer

FS = 16000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def mono(x, fs=FS):
    return AudioBuffer(np.asarray(x, dtype=float)[None, :], fs)


# acceptance verdicts, printed once at the end of the run
VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
