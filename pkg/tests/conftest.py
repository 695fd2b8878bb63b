from pathlib import Path

import pytest

from anyspace.netio import parse_network, parse_order

NETWORKS = Path(__file__).resolve().parent.parent / "networks"


def load(name):
    net = parse_network((NETWORKS / f"{name}.net").read_text())
    order = parse_order((NETWORKS / f"{name}.order").read_text(), net)
    return net, order


@pytest.fixture
def twovar():
    return load("twovar")


@pytest.fixture
def fivevar():
    return load("fivevar")


@pytest.fixture
def networks_dir():
    return NETWORKS
