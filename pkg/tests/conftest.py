import random

import numpy as np
import pytest

from seq2grid.tasks import Vocabulary, build_vocab
from seq2grid.tasks.base import Example


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run the scaled training checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def pyrng():
    return random.Random(0)


@pytest.fixture
def digit_vocab():
    """Reserved tokens plus the characters of a small arithmetic task."""
    examples = [Example(input_tokens=list("0123456789+- "),
                        target=list("0$"), difficulty={})]
    return build_vocab(examples)
