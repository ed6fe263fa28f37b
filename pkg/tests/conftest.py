from pathlib import Path

import numpy as np
import pytest

from multispike.core import NeuronParams, SpikeTrain
from multispike.forward import EngineConfig

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "mnist"


def have_mnist() -> bool:
    return (DATA_DIR / "train-images-idx3-ubyte.gz").exists() or (DATA_DIR / "train-images-idx3-ubyte").exists()


needs_mnist = pytest.mark.skipif(not have_mnist(), reason="MNIST IDX files not present in data/mnist")


@pytest.fixture
def unit_params():
    return NeuronParams(tau_i=1.0)


@pytest.fixture
def unit_engine(unit_params):
    return EngineConfig.from_time(1.0, unit_params)


def single_input(t, params, n=1, source=0):
    return SpikeTrain.from_times(np.atleast_1d(t), np.atleast_1d(source), params, n)


# acceptance criteria print PASS/FAIL lines that must survive output capture
ACCEPTANCE_LINES = []
_terminal = {}


def pytest_configure(config):
    _terminal["config"] = config


def emit(line: str):
    """Write a line to the terminal now and repeat it in the session summary."""
    ACCEPTANCE_LINES.append(line)
    config = _terminal.get("config")
    reporter = config.pluginmanager.get_plugin("terminalreporter") if config else None
    if reporter is None:
        print(line, flush=True)
    else:
        reporter.write_line(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            if line.startswith("criterion"):
                terminalreporter.write_line(line)
