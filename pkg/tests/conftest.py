import pytest

from gridsec.model import load_bundled_case

TC_LINES = ("17-43", "18-42", "24-68", "38-46", "43-44", "47-48", "47-53", "54-55")
CSC_LINES = ("18-49", "21-22", "30-61", "36-61", "40-41", "40-48", "41-42", "67-68")
CSC_LINES_9BUS = ("4-5", "7-8", "6-9")


@pytest.fixture(scope="session")
def case2():
    return load_bundled_case("case2")


@pytest.fixture(scope="session")
def case9():
    return load_bundled_case("case9")


@pytest.fixture(scope="session")
def case68():
    return load_bundled_case("case68")
