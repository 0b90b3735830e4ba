import numpy as np
import pytest

from curetime.data import Dataset
from curetime.lifetable import constant_lifetable, synthetic_lifetable


@pytest.fixture(scope="session")
def lt():
    return synthetic_lifetable()


@pytest.fixture(scope="session")
def lt_const():
    return constant_lifetable(0.01)


def make_dataset(z, delta, x=None, age=60, sex=0, year=2000):
    z = np.asarray(z, float)
    n = z.size
    x = np.ones((n, 1)) if x is None else np.asarray(x, float)
    names = ["intercept"] + [f"x{j}" for j in range(1, x.shape[1])]
    return Dataset(z=z, delta=np.asarray(delta), x=x, diag_year=np.full(n, year),
                   age=np.broadcast_to(age, n), sex=np.broadcast_to(sex, n), covariate_names=names)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-8)))


# one line per acceptance criterion, printed after the run whatever the capture mode
ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
