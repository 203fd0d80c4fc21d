"""Operator command line: validate, plan, simulate, serve, export.

Exit codes are stable across subcommands: 0 success, 1 validation or
semantic failure, 2 I/O or usage error.

Sink arguments accept either a path to a sink-config JSON file, a bare
``*.ndjson`` path (shorthand for a file sink), or the literal ``memory``.
"""

from __future__ import annotations

import json
import sys
from datetime import timedelta
from pathlib import Path
from typing import Any

import click

from .clock import ManualClock, parse_timestamp
from .compiler import (
    ActiveItemSet,
    MultiSelectGridStep,
    SummaryStep,
    SingleChoiceImageStep,
    TaskPlan,
    active_set_from_dict,
    compile_full_task,
    compile_pam_task,
    compile_spot_task,
    derive_active_items,
    plan_to_dict,
)
from .definition import StudyDefinition, StudyParseError, parse_study_definition, validate_study
from .sessions import AnswerMismatch, SurveySession, start_session
from .sinks import ResultSink, SinkConfigError, encode_record, export_results, sink_from_config

EXIT_OK = 0
EXIT_SEMANTIC = 1
EXIT_IO = 2

DEFAULT_SIM_START = "2016-09-01T09:00:00Z"
DEFAULT_PAM_PROMPT = "Which image best captures how you feel right now?"


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_study(path: str) -> StudyDefinition:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read {path}: {exc}")
    try:
        return parse_study_definition(blob)
    except StudyParseError as exc:
        _fail(EXIT_IO, f"cannot parse {path}: {exc}")


def _load_sink(spec: str) -> ResultSink:
    try:
        if spec == "memory":
            return sink_from_config({"kind": "memory"})
        path = Path(spec)
        if spec.endswith(".json"):
            config = json.loads(path.read_text(encoding="utf-8"))
            return sink_from_config(config, base_dir=path.parent)
        return sink_from_config({"kind": "file", "path": spec})
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read sink config {spec}: {exc}")
    except (SinkConfigError, json.JSONDecodeError) as exc:
        _fail(EXIT_IO, f"bad sink config {spec}: {exc}")


@click.group(name="visurvey")
def main() -> None:
    """Engine tooling for visual self-report survey studies."""


# ---------------------------------------------------------------------------
# validate

@main.command()
@click.argument("path", type=click.Path())
@click.option("--assets", "assets_dir", type=click.Path(), default=None,
              help="Directory whose file stems form the asset manifest.")
@click.option("--format", "fmt", type=click.Choice(["human", "json"]), default="human",
              show_default=True, help="Report format.")
def validate(path: str, assets_dir: str | None, fmt: str) -> None:
    """Check a study document; exit 0 only if it has no errors."""
    study = _load_study(path)
    manifest = None
    if assets_dir is not None:
        base = Path(assets_dir)
        if not base.is_dir():
            _fail(EXIT_IO, f"assets directory {assets_dir} does not exist")
        manifest = {p.stem for p in base.iterdir() if p.is_file()}
    report = validate_study(study, assets=manifest)

    if fmt == "json":
        click.echo(json.dumps(report.as_dict(), indent=2, ensure_ascii=False))
    else:
        for diag in report.diagnostics:
            click.echo(f"{diag.severity}: {diag.code} at {diag.path}: {diag.message}")
        verdict = "valid" if report.ok else "invalid"
        click.echo(f"{verdict}: {len(report.errors)} error(s), {len(report.warnings)} warning(s)")
    sys.exit(EXIT_OK if report.ok else EXIT_SEMANTIC)


# ---------------------------------------------------------------------------
# plan

def _plan_lines(plan: TaskPlan) -> list[str]:
    lines = []
    total = len(plan.steps)
    for i, step in enumerate(plan.steps, start=1):
        if isinstance(step, SingleChoiceImageStep):
            values = "|".join(c.value for c in step.choices)
            lines.append(f"{i}/{total} single_choice_image {step.step_id} "
                         f"item={step.item.identifier} choices={values}")
        elif isinstance(step, MultiSelectGridStep):
            ids = ",".join(item.identifier for item in step.items)
            per_row = step.options.items_per_row if step.options else "-"
            lines.append(f"{i}/{total} image_grid {step.step_id} mode={step.select_mode} "
                         f"itemsPerRow={per_row} items={ids}")
        elif isinstance(step, SummaryStep):
            lines.append(f"{i}/{total} summary {step.step_id} title={step.summary.title}")
    return lines


def _compile_selected(study: StudyDefinition, task: str,
                      active: ActiveItemSet | None, prompt: str) -> TaskPlan:
    pair = study.assessments[0]
    if task == "full":
        return compile_full_task(pair, study.items, study_id=study.study_id)
    if task == "spot":
        if active is None:
            active = ActiveItemSet(item_ids=study.item_ids(), derived_from="",
                                   derived_at=parse_timestamp(DEFAULT_SIM_START))
        return compile_spot_task(pair, active, study.items, study_id=study.study_id)
    return compile_pam_task(study.items, prompt, study_id=study.study_id)


@main.command()
@click.argument("path", type=click.Path())
@click.option("--task", type=click.Choice(["full", "spot", "pam"]), required=True,
              help="Which task to compile.")
@click.option("--active-items", "active_path", type=click.Path(), default=None,
              help="Active-item-set JSON for spot plans (defaults to the whole pool).")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text",
              show_default=True, help="Output format.")
@click.option("--prompt", default=DEFAULT_PAM_PROMPT, show_default=False,
              help="Prompt for mood (pam) plans.")
def plan(path: str, task: str, active_path: str | None, fmt: str, prompt: str) -> None:
    """Print the compiled step sequence for one task."""
    study = _load_study(path)
    report = validate_study(study)
    if not report.ok:
        _fail(EXIT_SEMANTIC, f"study has {len(report.errors)} validation error(s); run validate")

    active = None
    if active_path is not None:
        try:
            active = active_set_from_dict(json.loads(Path(active_path).read_text(encoding="utf-8")))
        except OSError as exc:
            _fail(EXIT_IO, f"cannot read active items {active_path}: {exc}")
        except (KeyError, ValueError) as exc:
            _fail(EXIT_IO, f"bad active items file {active_path}: {exc}")

    try:
        compiled = _compile_selected(study, task, active, prompt)
    except ValueError as exc:
        _fail(EXIT_SEMANTIC, str(exc))

    if fmt == "json":
        click.echo(json.dumps(plan_to_dict(compiled), indent=2, ensure_ascii=False))
    else:
        for line in _plan_lines(compiled):
            click.echo(line)


# ---------------------------------------------------------------------------
# simulate

def _script_answers(script: Any, plan: TaskPlan) -> list:
    """Resolve the full-section of a script to one answer per item step.

    Entries are bare answers (positional) or {"step": <index-or-stepId>,
    "answer": ...} objects.
    """
    item_steps = [s for s in plan.steps if not isinstance(s, SummaryStep)]
    answers: list = [None] * len(item_steps)
    positional = 0
    index_by_id = {s.step_id: i for i, s in enumerate(item_steps)}
    for entry in script:
        if isinstance(entry, dict):
            ref = entry.get("step")
            if isinstance(ref, int):
                if not 0 <= ref < len(item_steps):
                    raise ValueError(f"script step index {ref} out of range")
                idx = ref
            elif ref in index_by_id:
                idx = index_by_id[ref]
            else:
                raise ValueError(f"script references unknown step {ref!r}")
            answers[idx] = entry.get("answer")
        else:
            if positional >= len(item_steps):
                raise ValueError("script has more answers than the plan has steps")
            answers[positional] = entry
            positional += 1
    missing = [item_steps[i].step_id for i, a in enumerate(answers) if a is None]
    if missing:
        raise ValueError(f"script misses answers for steps: {', '.join(missing)}")
    return answers


def _run_plan(plan: TaskPlan, answers: list, participant: str, clock: ManualClock,
              session_id: str):
    session = start_session(plan, participant, clock=clock, session_id=session_id)
    index = 0
    for step in plan.steps:
        clock.advance(timedelta(seconds=1))
        if isinstance(step, SummaryStep):
            session.submit_answer(None)
        else:
            try:
                session.submit_answer(answers[index])
            except AnswerMismatch as exc:
                raise ValueError(f"script mismatch at step {step.step_id!r}: {exc}") from exc
            index += 1
    return session.finalize()


@main.command()
@click.argument("path", type=click.Path())
@click.option("--script", "script_path", type=click.Path(), required=True,
              help="Answer script JSON: {\"full\": [...], \"spot\": [...]}.")
@click.option("--sink", "sink_spec", required=True,
              help="Sink: config JSON path, .ndjson file path, or 'memory'.")
@click.option("--participant", default="sim", show_default=True)
@click.option("--start", default=DEFAULT_SIM_START, show_default=True,
              help="Simulated clock start (UTC).")
def simulate(path: str, script_path: str, sink_spec: str, participant: str, start: str) -> None:
    """Run the full-to-spot pipeline headlessly and persist both envelopes."""
    study = _load_study(path)
    report = validate_study(study)
    if not report.ok:
        _fail(EXIT_SEMANTIC, f"study has {len(report.errors)} validation error(s); run validate")
    try:
        script = json.loads(Path(script_path).read_text(encoding="utf-8"))
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read script {script_path}: {exc}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_IO, f"bad script JSON: {exc}")
    if not isinstance(script, dict) or "full" not in script:
        _fail(EXIT_IO, "script must be an object with a 'full' answers array")

    sink = _load_sink(sink_spec)
    try:
        clock = ManualClock(parse_timestamp(start))
    except ValueError as exc:
        _fail(EXIT_IO, f"bad --start timestamp: {exc}")

    pair = study.assessments[0]
    full_plan = compile_full_task(pair, study.items, study_id=study.study_id)
    try:
        answers = _script_answers(script["full"], full_plan)
        full_envelope = _run_plan(full_plan, answers, participant, clock,
                                  session_id=f"{participant}-full")
    except ValueError as exc:
        _fail(EXIT_SEMANTIC, str(exc))
    sink.append(full_envelope)

    active = derive_active_items(full_envelope, pair.activation, study.items)
    click.echo("active: " + (", ".join(active.item_ids) if active.item_ids else "(none)"))

    spot_plan = compile_spot_task(pair, active, study.items, study_id=study.study_id)
    grid_steps = [s for s in spot_plan.steps if isinstance(s, MultiSelectGridStep)]
    if grid_steps:
        selection = script.get("spot", [])
        try:
            spot_envelope = _run_plan(spot_plan, [selection], participant, clock,
                                      session_id=f"{participant}-spot")
        except ValueError as exc:
            _fail(EXIT_SEMANTIC, str(exc))
    else:
        click.echo("spot: no items to measure (summary only)")
        spot_envelope = _run_plan(spot_plan, [], participant, clock,
                                  session_id=f"{participant}-spot")
    sink.append(spot_envelope)

    click.echo(f"wrote 2 envelopes ({full_envelope.envelope_id}, {spot_envelope.envelope_id})")


# ---------------------------------------------------------------------------
# serve

@main.command()
@click.option("--config", "config_path", type=click.Path(), required=True,
              help="Server config JSON.")
@click.option("--host", default=None, help="Override bind host.")
@click.option("--port", type=int, default=None, help="Override bind port.")
def serve(config_path: str, host: str | None, port: int | None) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import build_state, create_app, load_server_config

    try:
        config = load_server_config(config_path)
        app = create_app(build_state(config))
    except OSError as exc:
        _fail(EXIT_IO, f"cannot read config: {exc}")
    except (ValueError, KeyError) as exc:
        _fail(EXIT_SEMANTIC, f"bad configuration: {exc}")
    uvicorn.run(app, host=host or config.bind_host, port=port or config.bind_port,
                log_level="warning")


# ---------------------------------------------------------------------------
# export

@main.command()
@click.option("--sink", "sink_spec", required=True,
              help="Sink: config JSON path, .ndjson file path, or 'memory'.")
@click.option("--study", "study_id", default=None, help="Filter by study id.")
@click.option("--participant", "participant_id", default=None, help="Filter by participant id.")
@click.option("--since", default=None, help="Completed-at lower bound (inclusive, UTC).")
@click.option("--until", default=None, help="Completed-at upper bound (exclusive, UTC).")
def export(sink_spec: str, study_id: str | None, participant_id: str | None,
           since: str | None, until: str | None) -> None:
    """Stream matching envelopes to stdout as canonical ND-JSON records."""
    from .sinks import ExportFilter, UnreadableSinkError

    sink = _load_sink(sink_spec)
    try:
        flt = ExportFilter(
            study_id=study_id, participant_id=participant_id,
            since=parse_timestamp(since) if since else None,
            until=parse_timestamp(until) if until else None)
    except ValueError as exc:
        _fail(EXIT_IO, f"bad time filter: {exc}")
    try:
        envelopes = export_results(sink, flt)
    except UnreadableSinkError as exc:
        _fail(EXIT_SEMANTIC, str(exc))
    for envelope in envelopes:
        click.echo(encode_record(envelope))


if __name__ == "__main__":
    main()
