"""Command-line interface over directory-backed sessions.

    qspgraph ingest model.m --session ./work
    qspgraph validate --session ./work
    qspgraph edit add_tmdd.edits --session ./work
    qspgraph resolve q1 --accept-default --session ./work
    qspgraph confirm --session ./work
    qspgraph simulate --session ./work
    qspgraph export --version v1.1 --session ./work
    qspgraph diff v1.0 v1.1 --session ./work
    qspgraph serve --port 8400
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import QspError
from .priors import default_kb, load_kb
from .session import Session
from .validation import validate


def _session(ctx) -> Session:
    kb = load_kb(ctx.obj["kb"]) if ctx.obj.get("kb") else default_kb()
    return Session(ctx.obj["session"], kb=kb)


def _emit(ctx, payload: dict, text: str | None = None) -> None:
    if ctx.obj.get("json") or text is None:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(text)


def _fail(exc: QspError) -> None:
    payload = exc.payload()
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report.to_json()
    click.echo(json.dumps(payload, indent=2, sort_keys=True), err=True)
    sys.exit(1)


@click.group()
@click.option("--session", default="./qsp_session", show_default=True, help="session directory")
@click.option("--kb", default=None, type=click.Path(exists=True), help="priors KB file (frozen JSON)")
@click.option("--json", "as_json", is_flag=True, help="machine-readable output")
@click.pass_context
def main(ctx, session, kb, as_json):
    """Deterministic QSP model workbench."""
    ctx.ensure_object(dict)
    ctx.obj.update({"session": session, "kb": kb, "json": as_json})


@main.command()
@click.argument("script", type=click.Path(exists=True))
@click.pass_context
def ingest(ctx, script):
    """Understanding phase: learn a model from a SimBiology-style script."""
    try:
        s = _session(ctx)
        state = s.start_understanding(Path(script).read_text(encoding="utf-8"))
    except QspError as exc:
        _fail(exc)
        return
    _emit(ctx, state.to_json(), f"ingested; phase={state.phase} version={state.version_tag}")


@main.command()
@click.pass_context
def validate_cmd(ctx):
    """Run the predicate suite on the current graph."""
    try:
        s = _session(ctx)
        report = validate(s.graph(), s.kb)
    except QspError as exc:
        _fail(exc)
        return
    _emit(ctx, report.to_json(), report.to_text())


main.add_command(validate_cmd, name="validate")


@main.command()
@click.argument("edit_file", type=click.Path(exists=True))
@click.pass_context
def edit(ctx, edit_file):
    """Submit an edit script; returns clarifications or a preview."""
    try:
        s = _session(ctx)
        out = s.submit_edit(Path(edit_file).read_text(encoding="utf-8"))
    except QspError as exc:
        _fail(exc)
        return
    if out["status"] == "clarifications":
        lines = ["clarifications required:"]
        for item in out["items"]:
            default = f" [default: {item['default']}]" if item.get("default") else ""
            lines.append(f"  {item['id']}: {item['question']}{default}")
        _emit(ctx, out, "\n".join(lines))
    else:
        added = len(out["delta"]["added_vertices"])
        removed = len(out["delta"]["removed_vertices"])
        _emit(ctx, out, f"preview ready: +{added} -{removed} vertices; run `confirm` to commit")


@main.command()
@click.argument("item_id")
@click.argument("value", required=False)
@click.argument("unit", required=False)
@click.option("--accept-default", is_flag=True)
@click.pass_context
def resolve(ctx, item_id, value, unit, accept_default):
    """Answer a clarification item (value [unit] or --accept-default)."""
    try:
        s = _session(ctx)
        state = s.resolve(item_id, value=value, unit=unit, accept_default=accept_default)
    except QspError as exc:
        _fail(exc)
        return
    open_items = [i.id for i in state.items if i.status == "open"]
    _emit(ctx, state.to_json(), f"resolved {item_id}; open items: {open_items or 'none'} (phase={state.phase})")


@main.command()
@click.pass_context
def confirm(ctx):
    """Commit the pending edit: validate, emit, simulate, diagnose."""
    try:
        s = _session(ctx)
        result = s.confirm()
    except QspError as exc:
        _fail(exc)
        return
    _emit(
        ctx,
        result,
        f"committed {result['version']}; epsilon={result['report']['epsilon']} "
        f"diagnostics={'pass' if result['diagnostics']['ok'] else 'FAIL'}",
    )


@main.command()
@click.option("--rel-tol", default=1e-8, show_default=True)
@click.option("--abs-tol", default=1e-10, show_default=True)
@click.pass_context
def simulate(ctx, rel_tol, abs_tol):
    """Simulate the current version; writes trajectory.csv and diagnostics."""
    try:
        s = _session(ctx)
        result = s.simulate_current(rel_tol, abs_tol)
    except QspError as exc:
        _fail(exc)
        return
    _emit(
        ctx,
        result,
        f"simulated {result['version']}: {result['points']} points, "
        f"diagnostics={'pass' if result['diagnostics']['ok'] else 'FAIL'}",
    )


@main.command()
@click.option("--version", "tag", required=True)
@click.option("--out", default=None, type=click.Path(), help="write artifacts to this directory")
@click.pass_context
def export(ctx, tag, out):
    """Copy a committed version's artifacts out of the session store."""
    try:
        s = _session(ctx)
        vdir = s.version_dir(tag)
        if not vdir.exists():
            raise QspError(f"unknown version {tag}")
        target = Path(out) if out else Path(f"./export_{tag}")
        target.mkdir(parents=True, exist_ok=True)
        names = []
        for path in sorted(vdir.iterdir()):
            (target / path.name).write_bytes(path.read_bytes())
            names.append(path.name)
    except QspError as exc:
        _fail(exc)
        return
    _emit(ctx, {"version": tag, "files": names, "dir": str(target)}, f"exported {tag} -> {target}")


@main.command()
@click.argument("tag_a")
@click.argument("tag_b")
@click.pass_context
def diff(ctx, tag_a, tag_b):
    """Structural graph delta between two committed versions."""
    try:
        s = _session(ctx)
        delta = s.diff(tag_a, tag_b)
    except QspError as exc:
        _fail(exc)
        return
    summary = (
        f"+{len(delta['added_vertices'])} vertices, -{len(delta['removed_vertices'])} vertices, "
        f"~{len(delta['modified_vertices'])} modified, "
        f"+{len(delta['added_edges'])}/-{len(delta['removed_edges'])} edges"
    )
    _emit(ctx, delta, summary)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True)
@click.option("--root", default="./qsp_sessions", show_default=True, help="directory for server-side sessions")
@click.pass_context
def serve(ctx, host, port, root):
    """Run the HTTP service (used by the browser workbench)."""
    import uvicorn

    from .server import create_app

    kb = load_kb(ctx.obj["kb"]) if ctx.obj.get("kb") else default_kb()
    uvicorn.run(create_app(root, kb), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
