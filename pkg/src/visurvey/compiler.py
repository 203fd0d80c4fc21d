"""Compiles assessment pairs into presentable task plans.

The two-phase protocol: a *full* plan walks the whole item pool one
single-choice image screen at a time; its answers, filtered through the
pair's activation rule, select the subset a recurring *spot* plan shows as
one multi-select grid. A *mood* plan is a single-select grid over an image
pool. Every plan ends with exactly one summary step.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import TYPE_CHECKING, Literal, Sequence, Union

from .definition import (
    ActivationRule,
    AssessmentPair,
    ChoiceDef,
    ItemDef,
    SpotOptionsDef,
    SummaryDef,
)

if TYPE_CHECKING:
    from .sessions import ResultEnvelope

__all__ = [
    "ActiveItemSet",
    "MultiSelectGridStep",
    "SingleChoiceImageStep",
    "Step",
    "SummaryStep",
    "TaskPlan",
    "compile_full_task",
    "compile_pam_task",
    "compile_spot_task",
    "derive_active_items",
]

TaskKind = Literal["full", "spot", "pam"]


@dataclass(frozen=True)
class SingleChoiceImageStep:
    step_id: str
    item: ItemDef
    prompt: str
    choices: tuple[ChoiceDef, ...]


@dataclass(frozen=True)
class MultiSelectGridStep:
    step_id: str
    items: tuple[ItemDef, ...]
    prompt: str
    options: SpotOptionsDef | None
    select_mode: Literal["multi", "single"] = "multi"


@dataclass(frozen=True)
class SummaryStep:
    step_id: str
    summary: SummaryDef


Step = Union[SingleChoiceImageStep, MultiSelectGridStep, SummaryStep]


@dataclass(frozen=True)
class TaskPlan:
    plan_id: str
    task_kind: TaskKind
    steps: tuple[Step, ...]
    study_id: str = ""

    def step_ids(self) -> tuple[str, ...]:
        return tuple(step.step_id for step in self.steps)


@dataclass(frozen=True)
class ActiveItemSet:
    """Items a full assessment activated for subsequent spot assessments."""

    item_ids: tuple[str, ...]
    derived_from: str          # session id of the source full run ("" if none yet)
    derived_at: datetime

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.item_ids


def compile_full_task(pair: AssessmentPair, items: Sequence[ItemDef], *,
                      study_id: str = "") -> TaskPlan:
    """One single-choice image step per item, in authored order, then a summary."""
    if not items:
        raise ValueError("cannot compile a full task over an empty item list")
    full = pair.full
    steps: list[Step] = [
        SingleChoiceImageStep(
            step_id=f"{full.identifier}.{item.identifier}",
            item=item,
            prompt=full.prompt,
            choices=full.choices,
        )
        for item in items
    ]
    steps.append(SummaryStep(step_id=f"{full.identifier}.summary", summary=full.summary))
    return TaskPlan(plan_id=full.identifier, task_kind="full", steps=tuple(steps),
                    study_id=study_id)


def derive_active_items(full_results: ResultEnvelope, rule: ActivationRule,
                        items: Sequence[ItemDef]) -> ActiveItemSet:
    """Filter the pool by the completed full run's answers.

    An item is active iff its answered choice value is in the rule's
    activating set. Output order is the study item order. Raises
    ``ValueError`` when the envelope references an unknown item or misses
    an answer for one.
    """
    known = {item.identifier for item in items}
    answers: dict[str, str] = {}
    for result in full_results.results:
        if result.item_id is None:
            continue
        if result.item_id not in known:
            raise ValueError(f"result references unknown item {result.item_id!r}")
        answers[result.item_id] = result.answer  # type: ignore[assignment]

    active: list[str] = []
    for item in items:
        if item.identifier not in answers:
            raise ValueError(f"incomplete envelope: no answer for item {item.identifier!r}")
        if rule.activates(answers[item.identifier]):
            active.append(item.identifier)
    return ActiveItemSet(item_ids=tuple(active),
                         derived_from=full_results.session_id,
                         derived_at=full_results.completed_at)


def compile_spot_task(pair: AssessmentPair, active: ActiveItemSet,
                      items: Sequence[ItemDef], *, study_id: str = "") -> TaskPlan:
    """Grid over the active items plus a summary; empty set compiles to the
    no-items summary alone."""
    spot = pair.spot
    known = {item.identifier for item in items}
    unknown = [iid for iid in active.item_ids if iid not in known]
    if unknown:
        raise ValueError(f"active set references unknown items: {', '.join(unknown)}")

    if not active.item_ids:
        steps: tuple[Step, ...] = (
            SummaryStep(step_id=f"{spot.identifier}.summary", summary=spot.no_items_summary),
        )
    else:
        wanted = set(active.item_ids)
        grid_items = tuple(item for item in items if item.identifier in wanted)
        steps = (
            MultiSelectGridStep(step_id=f"{spot.identifier}.grid", items=grid_items,
                                prompt=spot.prompt, options=spot.options),
            SummaryStep(step_id=f"{spot.identifier}.summary", summary=spot.summary),
        )
    return TaskPlan(plan_id=spot.identifier, task_kind="spot", steps=steps,
                    study_id=study_id)


_DEFAULT_PAM_SUMMARY = SummaryDef(
    identifier="pam.summary",
    title="Thanks",
    text="Thank you for reporting how you feel",
)


def compile_pam_task(items: Sequence[ItemDef], prompt: str, *,
                     summary: SummaryDef | None = None,
                     identifier: str = "pam", study_id: str = "") -> TaskPlan:
    """Single-select image grid (pick exactly one), then a summary."""
    if not items:
        raise ValueError("cannot compile a mood task over an empty item list")
    steps: tuple[Step, ...] = (
        MultiSelectGridStep(step_id=f"{identifier}.grid", items=tuple(items),
                            prompt=prompt, options=None, select_mode="single"),
        SummaryStep(step_id=f"{identifier}.summary", summary=summary or _DEFAULT_PAM_SUMMARY),
    )
    return TaskPlan(plan_id=identifier, task_kind="pam", steps=steps, study_id=study_id)


# ---------------------------------------------------------------------------
# Wire forms (shared by the HTTP service and the CLI; clients render these
# payloads verbatim, so presentation values pass through untouched).

def _choice_to_dict(choice: ChoiceDef) -> dict:
    return {"text": choice.text, "value": choice.value, "color": choice.color}


def _item_to_dict(item: ItemDef) -> dict:
    return {"identifier": item.identifier, "description": item.description,
            "imageTitle": item.image_title}


def _options_to_dict(options: SpotOptionsDef | None) -> dict | None:
    if options is None:
        return None
    return {
        "somethingSelectedButtonColor": options.something_selected_button_color,
        "nothingSelectedButtonColor": options.nothing_selected_button_color,
        "itemCellSelectedColor": options.item_cell_selected_color,
        "itemCellSelectedOverlayImageTitle": options.item_cell_selected_overlay_image_title,
        "itemCollectionViewBackgroundColor": options.item_collection_view_background_color,
        "itemsPerRow": options.items_per_row,
        "itemMinSpacing": options.item_min_spacing,
    }


def step_to_dict(step: Step, index: int, total: int) -> dict:
    if isinstance(step, SingleChoiceImageStep):
        return {"stepId": step.step_id, "kind": "single_choice_image",
                "index": index, "total": total, "prompt": step.prompt,
                "item": _item_to_dict(step.item),
                "choices": [_choice_to_dict(c) for c in step.choices]}
    if isinstance(step, MultiSelectGridStep):
        return {"stepId": step.step_id, "kind": "image_grid",
                "index": index, "total": total, "prompt": step.prompt,
                "selectMode": step.select_mode,
                "items": [_item_to_dict(i) for i in step.items],
                "options": _options_to_dict(step.options)}
    if isinstance(step, SummaryStep):
        return {"stepId": step.step_id, "kind": "summary",
                "index": index, "total": total,
                "summary": {"identifier": step.summary.identifier,
                            "title": step.summary.title, "text": step.summary.text}}
    raise TypeError(f"unrenderable step {step!r}")


def plan_to_dict(plan: TaskPlan) -> dict:
    total = len(plan.steps)
    return {"planId": plan.plan_id, "taskKind": plan.task_kind,
            "studyId": plan.study_id,
            "steps": [step_to_dict(s, i, total) for i, s in enumerate(plan.steps)]}


def active_set_to_dict(active: ActiveItemSet) -> dict:
    from .clock import format_timestamp
    return {"itemIds": list(active.item_ids),
            "derivedFrom": active.derived_from,
            "derivedAt": format_timestamp(active.derived_at)}


def active_set_from_dict(data: dict) -> ActiveItemSet:
    from .clock import parse_timestamp
    return ActiveItemSet(item_ids=tuple(data["itemIds"]),
                         derived_from=data.get("derivedFrom", ""),
                         derived_at=parse_timestamp(data["derivedAt"]))
