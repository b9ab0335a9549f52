"""Command-line entry points: analytics, chat server, cohort simulator."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import analytics as A
from . import session as S
from .iff import parse_iff, validate_iff

_DEFAULT_IFF = Path(__file__).parent / "configs" / "loan_approval.iff.json"


def _load_records(logs: str):
    records = S.load_all_records(logs)
    if not records:
        raise click.ClickException(f"no session records under {logs}")
    return records


@click.group()
def analytics():
    """Analyses over recorded session logs."""


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--estimated-minutes", default=15.0, show_default=True, type=float)
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json"]))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def flag(logs, estimated_minutes, fmt, out):
    """Accept/reject sessions on total interaction time."""
    flags = A.flag_sessions(_load_records(logs), estimated_minutes)
    if out:
        A.export(flags, fmt, out)
    for f in flags:
        click.echo(f"{f.session_id}\t{f.verdict}\t{f.total_minutes:.2f}")


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json"]))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
@click.option("--raw-followups", is_flag=True,
              help="Keep followup segments instead of merging them into explanations.")
def pathway(logs, fmt, out, raw_followups):
    """Per-session labelled time segments."""
    segments = []
    for record in _load_records(logs):
        segments.extend(A.pathway(record, merge_followups=not raw_followups))
    if out:
        A.export(segments, fmt, out)
    for seg in segments:
        click.echo(f"{seg.session_id}\t{seg.index}\t{seg.label}\t"
                   f"{seg.duration_ms}\t{seg.fraction:.4f}")


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", default="json", type=click.Choice(["csv", "json"]))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def coverage(logs, fmt, out):
    """Intent engagement counts and intents-per-session distribution."""
    result = A.intent_coverage(_load_records(logs))
    if out:
        A.export(result, fmt, out)
    for intent, count in result[0].items():
        click.echo(f"{intent}\t{count}")
    for n, count in result[1].items():
        click.echo(f"sessions_with_{n}_intents\t{count}")


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "json"]))
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def likert(logs, fmt, out):
    """Per-level questionnaire count differences, group B minus group A."""
    records = _load_records(logs)
    finished = [r for r in records if r.questionnaire is not None]
    diff = A.likert_diff([r for r in finished if r.group == "A"],
                         [r for r in finished if r.group == "B"])
    if out:
        A.export(diff, fmt, out)
    for item in diff.item_ids:
        levels = "\t".join(str(diff.diff[item][level]) for level in range(1, 6))
        click.echo(f"{item}\t{levels}")


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--raw-followups", is_flag=True)
def render(logs, out, raw_followups):
    """Deterministic SVG of conversational pathways, one bar per session."""
    by_session = {}
    for record in _load_records(logs):
        by_session[record.session_id] = A.pathway(record,
                                                  merge_followups=not raw_followups)
    Path(out).write_text(A.render_pathways(by_session))
    click.echo(f"wrote {out}")


@analytics.command()
@click.option("--logs", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--estimated-minutes", default=15.0, show_default=True, type=float)
def report(logs, out_dir, estimated_minutes):
    """Full report: CSV tables plus rendered figures (SVG and PNG)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = _load_records(logs)
    flags = A.flag_sessions(records, estimated_minutes)
    A.export(flags, "csv", out / "flags.csv")
    segments = []
    by_session = {}
    for record in records:
        segs = A.pathway(record)
        segments.extend(segs)
        by_session[record.session_id] = segs
    A.export(segments, "csv", out / "pathways.csv")
    A.export(A.intent_coverage(records), "csv", out / "coverage.csv")
    (out / "pathways.svg").write_text(A.render_pathways(by_session))
    A.figure_pathways(by_session, out / "pathways.png")
    finished = [r for r in records if r.questionnaire is not None]
    groups = {g: [r for r in finished if r.group == g] for g in ("A", "B")}
    if groups["A"] and groups["B"]:
        diff = A.likert_diff(groups["A"], groups["B"])
        A.export(diff, "csv", out / "likert_diff.csv")
        A.figure_likert(diff, out / "likert_diff.png")
    click.echo(f"report written to {out}")


@click.command()
@click.option("--iff", "iff_path", default=str(_DEFAULT_IFF), show_default=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--group", default="random", type=click.Choice(["a", "b", "random"]))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--estimated-minutes", default=15.0, show_default=True, type=float)
def server(iff_path, data_dir, bind, group, seed, estimated_minutes):
    """Serve conversations over a WebSocket."""
    import uvicorn

    from .server import build_manager, create_app

    graph = parse_iff(Path(iff_path).read_text())
    report_doc = validate_iff(graph)
    if not report_doc.ok:
        for finding in report_doc.findings:
            click.echo(f"{finding.severity.value}: {finding.code} at {finding.location}",
                       err=True)
        sys.exit(1)
    manager = build_manager(iff_path, data_dir, group=group, seed=seed,
                            estimated_minutes=estimated_minutes)
    app = create_app(manager)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


@click.command()
@click.option("--iff", "iff_path", default=str(_DEFAULT_IFF), show_default=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--n-per-group", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def simulate(iff_path, data_dir, n_per_group, seed):
    """Generate a paired synthetic cohort of A and B sessions."""
    from .simulate import simulate_cohort

    graph = parse_iff(Path(iff_path).read_text())
    records_a, records_b = simulate_cohort(graph, data_dir,
                                           n_per_group=n_per_group, seed=seed)
    summary = {"group_a": len(records_a), "group_b": len(records_b),
               "data_dir": str(data_dir)}
    click.echo(json.dumps(summary))
