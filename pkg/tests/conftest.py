import pathlib

import pytest

from crowdexpress.io import read_trajectories
from crowdexpress.network import build_network, reference_paths

FIXTURE_CSV = pathlib.Path(__file__).resolve().parents[1] / "src" / "crowdexpress" / "data" / "trips_fixture.csv"


@pytest.fixture(scope="session")
def fixture_world():
    """The bundled three-day trip file and the network built from it."""
    records = read_trajectories(FIXTURE_CSV)
    net = build_network(records)
    return records, net, reference_paths(net)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(verdicts):
        terminalreporter.write_line(verdicts[n])
