import os

import numpy as np
import pytest

os.environ.setdefault("NERV_DETERMINISTIC", "1")

from nerv.io import synthetic_video
from nerv.model import NervConfig


@pytest.fixture
def tiny_config():
    return NervConfig(
        target_resolution=(16, 16),
        upscale_factors=(2, 2),
        stem_channels=4,
        block_channels=8,
        mlp_hidden=16,
        embed_length=4,
    )


@pytest.fixture
def tiny_video():
    return synthetic_video("texture", frames=4, height=16, width=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_report import RESULTS, lines

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in lines():
            terminalreporter.write_line(line)
