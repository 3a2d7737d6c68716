"""Operator command line: ingestion, training, querying, evaluation, serving.

Every subcommand is a thin mapping onto engine operations against a state
file (a snapshot). Exit codes: 0 success, 1 user error (bad flags, bad
input, domain validation), 2 internal error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import ApiConfig, load_config
from .engine import LegalEngine
from .errors import LexragError
from .evalmetrics import EvalTask, Metric

DEFAULT_STATE = "lexrag-state.json"


def _load_engine(ctx: click.Context) -> LegalEngine:
    state = ctx.obj["state"]
    if Path(state).exists():
        return LegalEngine.load(state)
    return LegalEngine(ctx.obj["config"].engine)


def _save_engine(ctx: click.Context, engine: LegalEngine) -> None:
    engine.save(ctx.obj["state"])


def _emit(ctx: click.Context, payload: dict, human: str) -> None:
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    elif not ctx.obj["quiet"]:
        click.echo(human)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON config file.")
@click.option("--state", default=DEFAULT_STATE, show_default=True, help="Engine state file.")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable JSON output.")
@click.option("--quiet", is_flag=True, help="Suppress non-essential output.")
@click.pass_context
def cli(ctx, config_path, state, json_out, quiet):
    """Legal retrieval-and-routing engine."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = load_config(config_path) if config_path else ApiConfig()
    ctx.obj["state"] = state
    ctx.obj["json"] = json_out
    ctx.obj["quiet"] = quiet


@cli.command("ingest-docs")
@click.argument("path", type=click.Path(exists=True))
@click.pass_context
def ingest_docs(ctx, path):
    """Index documents from a JSONL file ({id, title, text, tags})."""
    engine = _load_engine(ctx)
    count = engine.ingest_documents(path)
    _save_engine(ctx, engine)
    _emit(ctx, {"ingested": count, "index_size": len(engine.index)}, f"ingested {count} documents")


@cli.command("ingest-triples")
@click.argument("path", type=click.Path(exists=True))
@click.pass_context
def ingest_triples(ctx, path):
    """Ingest knowledge triples from a TSV file (head, relation, tail)."""
    engine = _load_engine(ctx)
    count = engine.ingest_triples(path)
    _save_engine(ctx, engine)
    _emit(ctx, {"ingested": count, "graph_size": len(engine.graph)}, f"ingested {count} new triples")


@cli.command("train-kg")
@click.pass_context
def train_kg(ctx):
    """Train graph embeddings offline (manual refresh)."""
    engine = _load_engine(ctx)
    stats = engine.train_kg()
    _save_engine(ctx, engine)
    _emit(
        ctx,
        stats,
        f"trained embeddings for {stats['entities']} entities / {stats['relations']} relations",
    )


@cli.command("train-gate")
@click.option("--force", is_flag=True, help="Update even below the batch threshold.")
@click.pass_context
def train_gate(ctx, force):
    """Apply a policy update from buffered feedback trajectories."""
    engine = _load_engine(ctx)
    result = engine.update_policy(force=force)
    _save_engine(ctx, engine)
    if result["updated"]:
        human = f"policy updated to version {result['policy_version']}"
    else:
        human = f"no update: {result.get('reason', 'unknown')}"
    _emit(ctx, result, human)


@cli.command("query")
@click.argument("text")
@click.pass_context
def query(ctx, text):
    """Answer a query through the full pipeline; the case awaits review."""
    engine = _load_engine(ctx)
    reply = engine.answer_query(text)
    _save_engine(ctx, engine)
    if ctx.obj["json"]:
        _emit(ctx, reply, "")
        return
    if ctx.obj["quiet"]:
        return
    if reply["abstained"]:
        click.echo(f"[{reply['case_id']}] no document clears the similarity threshold; abstaining")
    else:
        click.echo(f"[{reply['case_id']}] {reply['answer']}")
        if reply["citations"]:
            cited = ", ".join(sorted({doc for _, _, doc in reply["citations"]}))
            click.echo(f"sources: {cited}")
    for entry in reply["gate"]["questions"]:
        gates = ", ".join(f"{g:.3f}" for g in entry["g"])
        click.echo(f"gate q{entry['index'] + 1}: active={entry['active']} g=[{gates}]")


@cli.command("eval")
@click.option("--task", "task_name", required=True, help="Task label, e.g. 'Question Answering'.")
@click.option("--metric", default=None, help="Metric override (accuracy, rouge_l, f1, bleu).")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--top-m", default=1, show_default=True, help="Sentences per extractive answer.")
@click.pass_context
def eval_cmd(ctx, task_name, metric, data_path, out_path, top_m):
    """Score the configured pipeline on a JSONL dataset."""
    from .evalmetrics import TASK_METRICS

    engine = _load_engine(ctx)
    if metric is None:
        allowed = TASK_METRICS.get(task_name)
        if not allowed:
            raise LexragError(f"unknown task {task_name!r}")
        metric_value = sorted(allowed, key=lambda m: m.value)[0]
    else:
        metric_value = Metric(metric)
    task = EvalTask(task_name, metric_value, data_path)
    report = engine.run_eval(task, out_path=out_path, top_m=top_m)
    score = "n/a" if report.score is None else f"{report.score:.4f}"
    _emit(
        ctx,
        report.to_dict(),
        f"{task_name} [{report.metric.value}] score={score} "
        f"abstention={report.abstention_rate:.2f} n={report.n}",
    )


@cli.command("serve")
@click.option("--host", default=None, help="Override bind host.")
@click.option("--port", default=None, type=int, help="Override bind port.")
@click.pass_context
def serve_cmd(ctx, host, port):
    """Run the HTTP service (loads the state file when it exists)."""
    from .api import serve

    config: ApiConfig = ctx.obj["config"]
    if host:
        config.host = host
    if port:
        config.port = port
    if not config.snapshot_path:
        config.snapshot_path = ctx.obj["state"]
    serve(config)


@cli.group("snapshot")
def snapshot_group():
    """Save or load engine snapshots."""


@snapshot_group.command("save")
@click.argument("dest", type=click.Path())
@click.pass_context
def snapshot_save(ctx, dest):
    """Export the current state to DEST."""
    engine = _load_engine(ctx)
    checksum = engine.save(dest)
    _emit(ctx, {"path": dest, "checksum": checksum}, f"saved snapshot to {dest}")


@snapshot_group.command("load")
@click.argument("src", type=click.Path(exists=True))
@click.pass_context
def snapshot_load(ctx, src):
    """Validate SRC and adopt it as the working state."""
    engine = LegalEngine.load(src)
    _save_engine(ctx, engine)
    _emit(
        ctx,
        {"path": src, "documents": len(engine.index), "cases": len(engine.workflow.store.all())},
        f"loaded snapshot from {src}",
    )


def main(argv: list[str] | None = None) -> int:
    """Entry point with the exit-code contract applied."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except LexragError as exc:
        click.echo(f"error [{exc.code}]: {exc.message}", err=True)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
