import contextlib
import ipaddress
import socket
import time

import pytest

from floorplan_nav.floorplan import load_plan
from floorplan_nav.graph import NavTask, build_connectivity

_real_connect = socket.socket.connect
_real_connect_ex = socket.socket.connect_ex
NETWORK_ATTEMPTS = []


def _is_local(address) -> bool:
    if isinstance(address, (str, bytes)):  # AF_UNIX path
        return True
    host = address[0]
    if host in ("localhost", ""):
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def _guarded(real):
    def connect(self, address):
        if not _is_local(address):
            NETWORK_ATTEMPTS.append(address)
            raise OSError(f"network access blocked in tests: {address!r}")
        return real(self, address)

    return connect


@pytest.fixture(autouse=True)
def no_network(request, monkeypatch):
    """Every test runs offline unless it is marked live."""
    if request.node.get_closest_marker("live"):
        yield
        return
    monkeypatch.setattr(socket.socket, "connect", _guarded(_real_connect))
    monkeypatch.setattr(socket.socket, "connect_ex", _guarded(_real_connect_ex))
    yield


@pytest.fixture(scope="session")
def map1():
    return load_plan("builtin:map1")


@pytest.fixture(scope="session")
def graph1(map1):
    return build_connectivity(map1)


@pytest.fixture(scope="session")
def two_room():
    return load_plan("builtin:two_room")


@pytest.fixture
def terrace_task():
    return NavTask("map1", "Terrasse Couverte", "Chambre 1", "hard")


_ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context-manager factory that records one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_LINES, [])

    @contextlib.contextmanager
    def check(number: int, title: str, limit_s: float | None = None):
        start = time.perf_counter()
        status, note = "FAIL", ""
        try:
            yield
            elapsed = time.perf_counter() - start
            if limit_s is not None and elapsed >= limit_s:
                note = f" over the {limit_s:g}s budget"
                raise AssertionError(f"criterion {number} took {elapsed:.1f}s, budget {limit_s:g}s")
            status = "PASS"
        finally:
            elapsed = time.perf_counter() - start
            line = f"criterion {number} {status}: {title} [{elapsed:.2f}s]{note}"
            print(line)
            lines.append(line)

    return check


def pytest_sessionfinish(session, exitstatus):
    # a blocked connection attempt anywhere in the run fails the whole session
    if NETWORK_ATTEMPTS and exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if NETWORK_ATTEMPTS:
        terminalreporter.section("network")
        terminalreporter.write_line(f"blocked outbound connection attempts: {NETWORK_ATTEMPTS!r}")
    lines = config.stash.get(_ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
