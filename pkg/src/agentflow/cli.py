"""Command-line front end.

The CLI is a thin HTTP client: with ``AGENTFLOW_URL`` (or ``--url``) set it
talks to a running service, otherwise it mounts the service in-process and
speaks to it over the same request/response schemas. Output files are
written client-side, atomically, under ``--out`` / ``AGENTFLOW_OUT``
(default ``./agentflow-out``).

Exit codes: 0 success, 2 config or input error, 3 invariant violation,
4 partial sweep failure.
"""

from __future__ import annotations

import csv
import io
import json
import os
import sys
from pathlib import Path

import click
import httpx

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_PARTIAL = 4


def make_client(url: str | None):
    url = url or os.environ.get("AGENTFLOW_URL")
    if url:
        return httpx.Client(base_url=url, timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def out_dir(option: str | None) -> Path:
    return Path(option or os.environ.get("AGENTFLOW_OUT") or "agentflow-out")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_scenario(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise click.ClickException(f"scenario file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise click.ClickException(f"scenario is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise click.ClickException("scenario must be a JSON object")
    return doc


def _fail(message: str, details: list[str], code: int) -> None:
    click.echo(f"error: {message}", err=True)
    for item in details:
        click.echo(f"  - {item}", err=True)
    sys.exit(code)


def _handle_error_response(resp: httpx.Response) -> None:
    try:
        body = resp.json()
    except ValueError:
        body = {}
    message = body.get("message", f"service returned HTTP {resp.status_code}")
    details = body.get("details", [])
    status = body.get("status", "")
    if resp.status_code == 409 or status == "invariant_violation":
        _fail(message, details, EXIT_INVARIANT)
    _fail(message, details, EXIT_CONFIG)


def _rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row.get(col, "") for col in columns])
    return buf.getvalue()


@click.group()
def main() -> None:
    """Swarm coordination experiments: run scenarios, sweeps, and log audits."""


@main.command("run")
@click.argument("scenario_file", type=str)
@click.argument("overrides", nargs=-1)
@click.option("--out", "out_option", default=None, help="Output directory (default AGENTFLOW_OUT or ./agentflow-out).")
@click.option("--log/--no-log", "with_log", default=False, help="Also write the event log (events.jsonl).")
@click.option("--url", default=None, help="Remote service URL (default AGENTFLOW_URL or in-process).")
def cmd_run(scenario_file: str, overrides: tuple[str, ...], out_option: str | None, with_log: bool, url: str | None) -> None:
    """Run one scenario; writes metrics.json and metrics.csv."""
    try:
        doc = _read_scenario(scenario_file)
    except click.ClickException as exc:
        _fail(exc.message, [], EXIT_CONFIG)
    payload = {"scenario": doc, "overrides": list(overrides), "include_log": with_log}
    with make_client(url) as client:
        resp = client.post("/run", json=payload)
        if resp.status_code != 200:
            _handle_error_response(resp)
        body = resp.json()
    metrics = body["metrics"]
    target = out_dir(out_option)
    write_atomic(target / "metrics.json", json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    write_atomic(target / "metrics.csv", _rows_to_csv([metrics], list(metrics.keys())))
    if with_log and body.get("log") is not None:
        write_atomic(target / "events.jsonl", body["log"])
    click.echo(
        f"run ok: {metrics['tasks_generated']} tasks, success {metrics['success_rate_pct']:.1f}%, "
        f"mean latency {metrics['mean_assignment_latency_ms']:.1f} ms -> {target}"
    )
    sys.exit(EXIT_OK)


@main.command("sweep")
@click.argument("scenario_file", type=str)
@click.option("--out", "out_option", default=None, help="Output directory.")
@click.option("--url", default=None, help="Remote service URL.")
def cmd_sweep(scenario_file: str, out_option: str | None, url: str | None) -> None:
    """Run a sweep; writes sweep_long.csv and sweep_aggregate.csv."""
    try:
        doc = _read_scenario(scenario_file)
    except click.ClickException as exc:
        _fail(exc.message, [], EXIT_CONFIG)
    with make_client(url) as client:
        resp = client.post("/sweep", json={"scenario": doc})
        if resp.status_code != 200:
            _handle_error_response(resp)
        body = resp.json()
    rows = body["rows"]
    aggregate = body["aggregate"]
    target = out_dir(out_option)
    if rows:
        write_atomic(target / "sweep_long.csv", _rows_to_csv(rows, list(rows[0].keys())))
    if aggregate:
        write_atomic(target / "sweep_aggregate.csv", _rows_to_csv(aggregate, list(aggregate[0].keys())))
    failures = body.get("failures", [])
    click.echo(f"sweep {body['parameter']}: {len(rows)} points ok, {len(failures)} failed -> {target}")
    for failure in failures:
        click.echo(f"  failed: value={failure['value']} seed={failure['seed']}: {failure['error']}", err=True)
    sys.exit(EXIT_PARTIAL if failures else EXIT_OK)


@main.command("replay")
@click.argument("log_file", type=str)
@click.option("--assert", "assertions", multiple=True, help="Audit names to run (default: all).")
@click.option("--latency-lo", type=int, default=None, help="Lower delivery-latency bound to assert.")
@click.option("--latency-hi", type=int, default=None, help="Upper delivery-latency bound to assert.")
@click.option("--url", default=None, help="Remote service URL.")
def cmd_replay(log_file: str, assertions: tuple[str, ...], latency_lo: int | None, latency_hi: int | None, url: str | None) -> None:
    """Audit a previously written event log without re-running."""
    path = Path(log_file)
    if not path.is_file():
        _fail(f"log file not found: {log_file}", [], EXIT_CONFIG)
    payload = {
        "log": path.read_text(encoding="utf-8"),
        "assertions": list(assertions),
        "latency_lo_ticks": latency_lo,
        "latency_hi_ticks": latency_hi,
    }
    with make_client(url) as client:
        resp = client.post("/replay", json=payload)
        if resp.status_code != 200:
            _handle_error_response(resp)
        body = resp.json()
    for name in sorted(body["audits"]):
        violations = body["audits"][name]
        click.echo(f"{'PASS' if not violations else 'FAIL'} {name}")
        for violation in violations:
            click.echo(f"    {violation}", err=True)
    sys.exit(EXIT_OK if body["passed"] else EXIT_INVARIANT)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8000, type=int)
def cmd_serve(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
