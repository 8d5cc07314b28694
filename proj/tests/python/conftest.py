import os
from pathlib import Path

import pytest

HERE = Path(__file__).resolve().parent


@pytest.fixture(scope="session")
def data_dir():
    return Path(os.environ.get("PDEGNN_TEST_DATA", HERE.parent / "data"))


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("PDEGNN_CLI")
    if not path:
        pytest.skip("PDEGNN_CLI not set")
    return path
