import contextlib

import numpy as np
import pytest
import torch

from ugda_seg.data import write_synthetic_dataset

_CRITERIA: list[tuple[str, bool, str]] = []


@contextlib.contextmanager
def criterion(name: str):
    """Record a pass/fail line for the acceptance summary."""
    try:
        yield
    except BaseException as exc:
        _CRITERIA.append((name, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"))
        raise
    _CRITERIA.append((name, True, ""))


@pytest.fixture
def acceptance():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    write_synthetic_dataset(root, 8, side=64, seed=3)
    return root
