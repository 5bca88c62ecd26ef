import pytest
from hypothesis import settings

from cosseg import synthgen
from helpers import ACCEPTANCE_LINES

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def corpus():
    """Built-in profiles, 3000 packets each, seed 0."""
    return synthgen.generate_corpus(n_packets=3000, seed=0)
