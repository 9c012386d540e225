from pathlib import Path

import numpy as np
import pytest

from securenet.fixedpoint import quantize_model
from securenet.ir.modelio import load_model

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "assets"


@pytest.fixture(scope="session")
def lenet():
    prog, fm = load_model(ASSETS / "lenet_small.json", ASSETS / "lenet_small.weights")
    return prog, fm


@pytest.fixture(scope="session")
def lenet_fixed(lenet):
    return quantize_model(lenet[1], 16)


@pytest.fixture(scope="session")
def mnist_test():
    with np.load(ASSETS / "mnist_test.npz") as d:
        return np.asarray(d["images"], np.float32), np.asarray(d["labels"])


@pytest.fixture(scope="session")
def mnist_val():
    with np.load(ASSETS / "mnist_val.npz") as d:
        return np.asarray(d["images"], np.float32), np.asarray(d["labels"])



def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
