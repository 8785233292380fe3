"""Command-line interface: evaluate, metrics, serve, chat, record."""
from __future__ import annotations

import json
import sys
import uuid
from pathlib import Path

import click

from .arxiv import ArxivClient
from .checklist import load_registry
from .copilot import CopilotError, respond, start_session
from .ingest import IngestError, ParsedDocument, ingest_structured, ingest_text
from .metrics import MetricError, benchmark, load_scores, write_plot_data
from .orchestrator import RunConfig, execute_run
from .provider import (
    LiveProvider,
    OfflineProvider,
    ProviderConfig,
    RecordingProvider,
    ReplayProvider,
    ReplayStore,
)
from .store import RunStore

EXIT_CODES = {
    "file_not_found": 2,
    "malformed_input": 3,
    "run_failed": 4,
    "metric_error": 5,
    "not_ready": 6,
}


def _fail(code: str, message: str):
    click.echo(f"error [{code}]: {message}", err=True)
    sys.exit(EXIT_CODES.get(code, 1))


def _ingest_file(path: Path) -> ParsedDocument:
    if not path.exists():
        _fail("file_not_found", f"{path} does not exist")
    try:
        if path.suffix.lower() == ".json":
            return ingest_structured(path)
        return ingest_text(path.read_text("utf-8"))
    except (IngestError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        _fail("malformed_input", str(exc))
    raise AssertionError("unreachable")


def _make_provider(mode: str, replay_log: Path | None, record_log: Path | None):
    if mode == "replay":
        assert replay_log is not None
        if not replay_log.exists():
            _fail("file_not_found", f"replay log {replay_log} does not exist")
        return ReplayProvider(ReplayStore(replay_log))
    if mode == "live":
        provider = LiveProvider(ProviderConfig())
    else:
        provider = OfflineProvider()
    if record_log is not None:
        return RecordingProvider(provider, ReplayStore(record_log))
    return provider


def _print_report(report_dict: dict) -> None:
    click.echo(f"run {report_dict['run_id']}  overall mean: {report_dict['overall']}")
    click.echo(f"{'society':<18}{'mean':>8}{'scored':>8}{'failed':>8}")
    for agg in report_dict["societies"]:
        mean = f"{agg['mean']:.2f}" if agg["mean"] is not None else "n/a"
        click.echo(f"{agg['name']:<18}{mean:>8}{agg['scored']:>8}{agg['failed']:>8}")
    click.echo()
    for item in report_dict["items"]:
        score = item["score"] if item["score"] is not None else "-"
        click.echo(f"  item {item['id']:>2} [{item['status']}] score={score} "
                   f"attempts={item['attempts']}")


@click.group()
def main() -> None:
    """Multi-agent PRISMA evaluation of systematic literature reviews."""


@main.command()
@click.argument("file", type=click.Path(path_type=Path))
@click.option("--offline", "mode", flag_value="offline", default=True,
              help="Deterministic offline provider (default).")
@click.option("--live", "mode", flag_value="live", help="Live chat-completions provider.")
@click.option("--replay", "replay_log", type=click.Path(path_type=Path),
              help="Replay a recorded provider log.")
@click.option("--store", "store_root", type=click.Path(path_type=Path),
              default=Path("runs"), show_default=True)
@click.option("--run-id", default=None, help="Fixed run id (default: random).")
def evaluate(file: Path, mode: str, replay_log: Path | None, store_root: Path,
             run_id: str | None) -> None:
    """Evaluate an SLR document against the PRISMA checklist."""
    if replay_log is not None:
        mode = "replay"
    doc = _ingest_file(file)
    registry = load_registry()
    provider = _make_provider(mode, replay_log, None)
    store = RunStore(store_root)
    rid = run_id or uuid.uuid4().hex[:12]
    run, report = execute_run(
        doc, registry, provider, toolkit=None, run_id=rid,
        progress_sink=lambda ev: store.append_event(rid, ev),
    )
    store.save_document(rid, doc.to_dict())
    store.save_run(rid, run.to_dict())
    if report is None:
        _fail("run_failed", run.error or "run failed")
    report_dict = report.to_dict(registry)
    store.save_report(rid, report_dict)
    _print_report(report_dict)
    click.echo(f"\nreport: {store.run_dir(rid) / 'report.json'}")


@main.command()
@click.argument("file", type=click.Path(path_type=Path))
@click.option("--out", "out_log", required=True, type=click.Path(path_type=Path),
              help="Replay log to write.")
@click.option("--live", "mode", flag_value="live",
              help="Record the live provider instead of the offline one.")
@click.option("--store", "store_root", type=click.Path(path_type=Path), default=Path("runs"))
@click.option("--run-id", default=None)
def record(file: Path, out_log: Path, mode: str | None, store_root: Path,
           run_id: str | None) -> None:
    """Run an evaluation while capturing a replay log."""
    doc = _ingest_file(file)
    registry = load_registry()
    provider = _make_provider(mode or "offline", None, out_log)
    store = RunStore(store_root)
    rid = run_id or uuid.uuid4().hex[:12]
    run, report = execute_run(doc, registry, provider, toolkit=None, run_id=rid)
    store.save_document(rid, doc.to_dict())
    store.save_run(rid, run.to_dict())
    if report is None:
        _fail("run_failed", run.error or "run failed")
    store.save_report(rid, report.to_dict(registry))
    click.echo(f"recorded {rid} -> {out_log}")


@main.command("metrics")
@click.argument("scores_csv", type=click.Path(path_type=Path))
@click.option("--agent-rater", default="agent", show_default=True)
@click.option("--aggregation", type=click.Choice(["mean", "median"]), default="mean")
@click.option("--plot-data", "plot_dir", type=click.Path(path_type=Path), default=None,
              help="Directory for plot-ready CSV series.")
@click.option("--json", "as_json", is_flag=True, help="Emit the full report as JSON.")
def metrics_cmd(scores_csv: Path, agent_rater: str, aggregation: str,
                plot_dir: Path | None, as_json: bool) -> None:
    """Compute the benchmark report from a paper,rater,item,score CSV."""
    if not scores_csv.exists():
        _fail("file_not_found", f"{scores_csv} does not exist")
    registry = load_registry()
    try:
        matrix = load_scores(scores_csv)
        report = benchmark(matrix, registry, agent_rater, aggregation)
    except MetricError as exc:
        _fail("metric_error", str(exc))
        return
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(f"overall MAE:        {report.overall_mae:.4f}")
        click.echo(f"overall agreement:  {report.overall_agreement_pct:.2f}%")
        click.echo("\nper society:")
        for name, g in report.per_society.items():
            click.echo(f"  {name:<18} mae={g.mae:.4f} agreement={g.agreement_pct:.2f}%")
        click.echo("\nper paper:")
        for name, g in sorted(report.per_paper.items()):
            click.echo(f"  {name:<18} mae={g.mae:.4f} agreement={g.agreement_pct:.2f}%")
        click.echo("\nreliability (human raters only):")
        click.echo(f"  {json.dumps(report.reliability, indent=2)}")
    if plot_dir is not None:
        for path in write_plot_data(report, plot_dir):
            click.echo(f"wrote {path}")


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", "store_root", type=click.Path(path_type=Path), default=Path("runs"))
@click.option("--live", "mode", flag_value="live")
@click.option("--static-dir", type=click.Path(path_type=Path), default=None,
              help="Serve a built frontend bundle at /.")
def serve(port: int, host: str, store_root: Path, mode: str | None,
          static_dir: Path | None) -> None:
    """Host the HTTP API."""
    import uvicorn

    from .service import AppState, create_app

    provider = _make_provider(mode or "offline", None, None)
    state = AppState(store=RunStore(store_root), provider=provider)
    app = create_app(state)
    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("run_id")
@click.option("--store", "store_root", type=click.Path(path_type=Path), default=Path("runs"))
@click.option("--live", "mode", flag_value="live")
def chat(run_id: str, store_root: Path, mode: str | None) -> None:
    """Interactive terminal session against a completed run."""
    store = RunStore(store_root)
    provider = _make_provider(mode or "offline", None, None)
    try:
        session = start_session(run_id, store)
    except CopilotError as exc:
        _fail("not_ready", str(exc))
        return
    doc = None
    try:
        doc = ParsedDocument.from_dict(store.load_document(run_id))
    except Exception:
        pass
    click.echo(f"session {session.session_id} (empty line to quit)")
    while True:
        try:
            line = input("> ").strip()
        except (EOFError, KeyboardInterrupt):
            break
        if not line:
            break
        reply = respond(session, line, provider, None, store, doc=doc)
        click.echo(reply)


if __name__ == "__main__":
    main()
