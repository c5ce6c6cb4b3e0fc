"""Inbound Host/Origin allow-list of the Streamable HTTP transport.

A page on the operator's network can resolve its own hostname to this server
and talk to it from the browser (DNS rebinding); only the Host check stops
that. The wrong-port case is the one that tells a port-exact allow-list apart
from a loopback-only fallback.
"""

from __future__ import annotations

import pytest
from starlette.testclient import TestClient

from savanna_coexistence import cli, server

_INIT = {
    "jsonrpc": "2.0",
    "id": 1,
    "method": "initialize",
    "params": {
        "protocolVersion": "2025-11-25",
        "capabilities": {},
        "clientInfo": {"name": "test", "version": "1"},
    },
}
_HEADERS = {
    "Content-Type": "application/json",
    "Accept": "application/json, text/event-stream",
}
_PUBLIC = "savanna.example.org:8000"


@pytest.fixture(autouse=True)
def _no_inherited_allowlist(monkeypatch):
    monkeypatch.delenv("MCP_ALLOWED_HOSTS", raising=False)


@pytest.fixture
def captured_run(monkeypatch) -> dict:
    captured: dict = {}
    monkeypatch.setattr(server.mcp, "run", lambda **kw: captured.update(kw))
    return captured


# ─── Allow-list resolution ────────────────────────────────────────────────────


def test_allowed_hosts_default_is_empty():
    assert server._resolve_allowed_hosts(env={}) == []


def test_allowed_hosts_parsed_comma_separated_and_stripped():
    env = {"MCP_ALLOWED_HOSTS": f" {_PUBLIC} , lab.example.org , "}
    assert server._resolve_allowed_hosts(env=env) == [_PUBLIC, "lab.example.org"]


def test_allowed_hosts_reads_the_real_environment(monkeypatch):
    monkeypatch.setenv("MCP_ALLOWED_HOSTS", _PUBLIC)
    assert server._resolve_allowed_hosts() == [_PUBLIC]


@pytest.mark.parametrize("host", ["127.0.0.1", "localhost", "::1"])
def test_loopback_bind_gets_an_explicit_allowlist(host):
    sec = server._build_transport_security(host, 8000, env={})
    assert sec is not None
    assert sec.enable_dns_rebinding_protection is True
    assert "127.0.0.1:8000" in sec.allowed_hosts
    assert "http://127.0.0.1:8000" in sec.allowed_origins


def test_non_loopback_bind_without_allowlist_stays_off():
    assert server._build_transport_security("0.0.0.0", 8000, env={}) is None


def test_non_loopback_bind_with_allowlist_keeps_loopback():
    sec = server._build_transport_security("0.0.0.0", 8000, env={"MCP_ALLOWED_HOSTS": _PUBLIC})
    assert sec is not None
    assert _PUBLIC in sec.allowed_hosts
    assert "127.0.0.1:8000" in sec.allowed_hosts


def test_the_allowlist_names_the_port_actually_served():
    sec = server._build_transport_security("127.0.0.1", 9101, env={})
    assert sec is not None
    assert "127.0.0.1:9101" in sec.allowed_hosts
    assert "127.0.0.1:8000" not in sec.allowed_hosts


# ─── Through the ASGI stack ───────────────────────────────────────────────────


def _post_init(app, host_header: str) -> int:
    """Status of an initialize request sent under ``host_header``.

    TestClient runs the app lifespan, which starts the session manager.
    """
    with TestClient(app, raise_server_exceptions=False) as client:
        return client.post(
            "/mcp", headers={**_HEADERS, "Host": host_header}, json=_INIT
        ).status_code


def _app(host: str, port: int, env: dict[str, str] | None = None):
    return server.mcp.streamable_http_app(
        host=host,
        transport_security=server._build_transport_security(host, port, env=env or {}),
    )


@pytest.mark.parametrize(
    "host_header, status",
    [(_PUBLIC, 200), ("evil.invalid", 421), ("savanna.example.org:9999", 421)],
)
def test_allowlisted_public_bind(host_header, status):
    app = _app("0.0.0.0", 8000, {"MCP_ALLOWED_HOSTS": _PUBLIC})
    assert _post_init(app, host_header) == status


def test_public_bind_without_allowlist_serves_any_host():
    assert _post_init(_app("0.0.0.0", 8000), _PUBLIC) == 200


def test_a_loopback_bind_rejects_a_foreign_host():
    assert _post_init(_app("127.0.0.1", 8000), "evil.invalid") == 421


# ─── CLI wiring ───────────────────────────────────────────────────────────────


def test_host_defaults_to_loopback():
    assert server._parse_args([]).host == "127.0.0.1"
    assert server._parse_args(["--http"]).host == "127.0.0.1"
    assert server._parse_args(["--http", "--host", "0.0.0.0"]).host == "0.0.0.0"


def test_port_range_is_checked():
    with pytest.raises(SystemExit):
        server._parse_args(["--http", "--port", "0"])


def test_main_forwards_host_port_and_security(monkeypatch, captured_run):
    monkeypatch.setattr(
        "sys.argv", ["savanna-coexistence-mcp", "--http", "--host", "127.0.0.1", "--port", "9001"]
    )
    server.main()
    assert captured_run["transport"] == "streamable-http"
    assert captured_run["host"] == "127.0.0.1"
    assert captured_run["port"] == 9001
    assert "127.0.0.1:9001" in captured_run["transport_security"].allowed_hosts


def test_wide_bind_without_allowlist_warns(monkeypatch, captured_run, caplog):
    monkeypatch.setattr(
        "sys.argv", ["savanna-coexistence-mcp", "--http", "--host", "0.0.0.0", "--port", "9002"]
    )
    with caplog.at_level("WARNING"):
        server.main()
    assert captured_run["transport_security"] is None
    assert any("MCP_ALLOWED_HOSTS" in r.getMessage() for r in caplog.records)


def test_wide_bind_with_allowlist_is_quiet(monkeypatch, captured_run, caplog):
    monkeypatch.setenv("MCP_ALLOWED_HOSTS", "savanna.example.org:9003")
    monkeypatch.setattr(
        "sys.argv", ["savanna-coexistence-mcp", "--http", "--host", "0.0.0.0", "--port", "9003"]
    )
    with caplog.at_level("WARNING"):
        server.main()
    assert "savanna.example.org:9003" in captured_run["transport_security"].allowed_hosts
    assert not any("MCP_ALLOWED_HOSTS" in r.getMessage() for r in caplog.records)


def test_stdio_takes_no_transport_kwargs(monkeypatch):
    monkeypatch.setattr("sys.argv", ["savanna-coexistence-mcp"])
    calls: list = []
    monkeypatch.setattr(server.mcp, "run", lambda *a, **kw: calls.append((a, kw)))
    server.main()
    assert calls == [((), {})]


def test_batch_cli_serve_subcommand(captured_run):
    """``savanna-coexistence serve --http`` goes through the same transport setup."""
    assert cli.main(["serve", "--http", "--port", "9004"]) == cli.EXIT_OK
    assert captured_run["port"] == 9004
    assert "127.0.0.1:9004" in captured_run["transport_security"].allowed_hosts


# ─── Auditor boot commands ────────────────────────────────────────────────────


def test_auditor_boot_commands_are_declared():
    """The transport is chosen by flag, so the boot commands are spelled out."""
    import tomllib
    from pathlib import Path

    cfg = tomllib.loads(Path("pyproject.toml").read_text(encoding="utf-8"))
    commands = cfg["tool"]["mcp_auditor"]["boot"]["commands"]
    assert commands["stdio"] == ["savanna-coexistence-mcp"]
    assert commands["streamable-http"] == ["savanna-coexistence-mcp", "--http", "--port", "{port}"]
    assert "savanna-coexistence-mcp" in cfg["project"]["scripts"]
