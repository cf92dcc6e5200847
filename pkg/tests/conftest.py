import os
import random

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--model-seed",
        type=int,
        default=None,
        help="seed for randomized model generation (overrides BTCONVERGE_TEST_SEED)",
    )


@pytest.fixture(scope="session")
def model_seed(request) -> int:
    flag = request.config.getoption("--model-seed")
    if flag is not None:
        return flag
    return int(os.environ.get("BTCONVERGE_TEST_SEED", "20260808"))


@pytest.fixture()
def rng(model_seed) -> random.Random:
    return random.Random(model_seed)
