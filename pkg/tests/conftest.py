import pathlib

import pytest

from timerq.core import QueueConfig

REPO = pathlib.Path(__file__).resolve().parent.parent
CORPORA = REPO / "corpora"


@pytest.fixture
def small_config():
    return QueueConfig(id_width=5, data_width=9, timeout_width=7, capacity=16)


def make_config(data_width=9, capacity=16, id_width=8, timeout_width=None):
    if timeout_width is None:
        timeout_width = data_width - 2
    return QueueConfig(id_width=id_width, data_width=data_width,
                       timeout_width=timeout_width, capacity=capacity)
