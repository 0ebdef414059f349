from importlib import resources

import pytest

from p4mr.topology import load_topology

SUM3_PROGRAM = """\
A := store<uint_64>("ip_h1:path_A");
B := store<uint_64>("ip_h2:path_B");
C := store<uint_64>("ip_h3:path_C");
D := SUM(A, B);
E := SUM(C, D);
"""


def data_path(name):
    return resources.files("p4mr") / "data" / name


@pytest.fixture
def sum3_program():
    return SUM3_PROGRAM


@pytest.fixture
def ring6():
    return load_topology(data_path("ring6.json").read_text())
