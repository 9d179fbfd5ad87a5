import socket

import pytest

ACCEPTANCE_LINES: list[str] = []
_LOCAL_HOSTS = {"127.0.0.1", "::1", "localhost"}
_real_connect = socket.socket.connect
network_attempts: list = []


def _guarded_connect(self, address):
    host = address[0] if isinstance(address, tuple) else address
    if host not in _LOCAL_HOSTS:
        network_attempts.append(address)
        raise OSError(f"test suite blocked a network connection to {address!r}")
    return _real_connect(self, address)


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Only loopback connections are allowed while tests run."""
    monkeypatch.setattr(socket.socket, "connect", _guarded_connect)
    yield


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
