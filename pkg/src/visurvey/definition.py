"""Study-definition documents: data model, parsing, validation, canonical form.

A study document is a UTF-8 JSON file with a single top-level study object
(its key becomes the study id) holding a ``full``/``spot`` assessment pair
and an ``activities`` item pool:

    {
      "schemaVersion": 1,            // optional, defaults to 1 with a warning
      "MyStudy": {
        "full":   { ... },
        "spot":   { ... },
        "activation": { "activatingValues": ["moderate", "hard"] },  // optional
        "activities": [ ... ]
      }
    }

Unknown fields anywhere in the document are retained on the model (so the
canonical form re-emits them) and surfaced as warnings by the validator;
they are never silently dropped. Canonical serialization writes 2-space
indented JSON with a fixed key order per object, uppercase ``#RRGGBB``
colors, arrays in authored order, and a trailing newline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Collection, Iterable, Iterator, Literal, Mapping

__all__ = [
    "ActivationRule",
    "AssessmentPair",
    "ChoiceDef",
    "Diagnostic",
    "FullAssessmentDef",
    "ItemDef",
    "SpotAssessmentDef",
    "SpotOptionsDef",
    "StudyDefinition",
    "StudyParseError",
    "SummaryDef",
    "ValidationReport",
    "canonical_color",
    "canonical_serialize",
    "is_valid_color",
    "parse_study_definition",
    "validate_study",
]

_COLOR_RE = re.compile(r"#[0-9a-fA-F]{6}\Z")

Severity = Literal["error", "warning"]

# Diagnostic codes, stable across releases.
DUP_IDENTIFIER = "DUP_IDENTIFIER"
DUP_CHOICE_VALUE = "DUP_CHOICE_VALUE"
EMPTY_CHOICES = "EMPTY_CHOICES"
TOO_FEW_CHOICES = "TOO_FEW_CHOICES"
BAD_COLOR = "BAD_COLOR"
BAD_ITEMS_PER_ROW = "BAD_ITEMS_PER_ROW"
BAD_ITEM_SPACING = "BAD_ITEM_SPACING"
BAD_SCHEMA_VERSION = "BAD_SCHEMA_VERSION"
MISSING_SCHEMA_VERSION = "MISSING_SCHEMA_VERSION"
NO_ITEMS = "NO_ITEMS"
UNKNOWN_FIELD = "UNKNOWN_FIELD"
UNKNOWN_ACTIVATION_VALUE = "UNKNOWN_ACTIVATION_VALUE"
MISSING_ASSET = "MISSING_ASSET"


class StudyParseError(ValueError):
    """Raised when a document cannot be materialized into a StudyDefinition."""

    def __init__(self, message: str, *, path: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.path = path
        self.line = line
        self.column = column
        location = ""
        if path:
            location = f" at {path}"
        elif line is not None:
            location = f" at line {line}, column {column}"
        super().__init__(f"{message}{location}")


def canonical_color(raw: str) -> str:
    """Uppercase a ``#RRGGBB`` color; non-matching input is returned as-is."""
    return raw.upper() if _COLOR_RE.match(raw) else raw


def is_valid_color(value: str) -> bool:
    return _COLOR_RE.match(value) is not None


@dataclass(frozen=True)
class SummaryDef:
    identifier: str
    title: str
    text: str
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ChoiceDef:
    text: str
    value: str
    color: str
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ItemDef:
    identifier: str
    description: str
    image_title: str
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SpotOptionsDef:
    something_selected_button_color: str
    nothing_selected_button_color: str
    item_cell_selected_color: str
    item_cell_selected_overlay_image_title: str
    item_collection_view_background_color: str
    items_per_row: int
    item_min_spacing: float
    extra: dict[str, Any] = field(default_factory=dict)

    def colors(self) -> Iterator[tuple[str, str]]:
        """(document key, value) pairs for every color field."""
        yield "somethingSelectedButtonColor", self.something_selected_button_color
        yield "nothingSelectedButtonColor", self.nothing_selected_button_color
        yield "itemCellSelectedColor", self.item_cell_selected_color
        yield "itemCollectionViewBackgroundColor", self.item_collection_view_background_color


@dataclass(frozen=True)
class FullAssessmentDef:
    identifier: str
    prompt: str
    summary: SummaryDef
    choices: tuple[ChoiceDef, ...]
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SpotAssessmentDef:
    identifier: str
    prompt: str
    summary: SummaryDef
    no_items_summary: SummaryDef
    options: SpotOptionsDef
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ActivationRule:
    """Which full-assessment choice values put an item into the spot subset."""

    activating_values: tuple[str, ...]

    @classmethod
    def default_for(cls, choices: Iterable[ChoiceDef]) -> "ActivationRule":
        """Every choice value except the first; the first is the baseline."""
        values = tuple(c.value for c in choices)
        return cls(activating_values=values[1:])

    def activates(self, value: str) -> bool:
        return value in self.activating_values


@dataclass(frozen=True)
class AssessmentPair:
    full: FullAssessmentDef
    spot: SpotAssessmentDef
    activation: ActivationRule
    # True when the document spelled out the activation object itself.
    activation_authored: bool = field(default=True, compare=False)


@dataclass(frozen=True)
class StudyDefinition:
    study_id: str
    assessments: tuple[AssessmentPair, ...]
    items: tuple[ItemDef, ...]
    schema_version: int = 1
    extra: dict[str, Any] = field(default_factory=dict)        # inside the study object
    root_extra: dict[str, Any] = field(default_factory=dict)   # top-level siblings
    schema_version_authored: bool = field(default=True, compare=False)

    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.identifier for item in self.items)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: Severity
    path: str
    message: str

    def as_dict(self) -> dict[str, str]:
        return {"code": self.code, "severity": self.severity,
                "path": self.path, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...]

    @property
    def errors(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "error")

    @property
    def warnings(self) -> tuple[Diagnostic, ...]:
        return tuple(d for d in self.diagnostics if d.severity == "warning")

    @property
    def ok(self) -> bool:
        """Valid exactly when no error-severity diagnostics exist."""
        return not self.errors

    def as_dict(self) -> dict[str, Any]:
        return {"valid": self.ok,
                "diagnostics": [d.as_dict() for d in self.diagnostics]}


# ---------------------------------------------------------------------------
# Parsing

_SUMMARY_KEYS = ("identifier", "title", "text")
_CHOICE_KEYS = ("text", "value", "color")
_ITEM_KEYS = ("imageTitle", "description", "identifier")
_OPTIONS_KEYS = (
    "somethingSelectedButtonColor",
    "nothingSelectedButtonColor",
    "itemCellSelectedColor",
    "itemCellSelectedOverlayImageTitle",
    "itemCollectionViewBackgroundColor",
    "itemsPerRow",
    "itemMinSpacing",
)
_FULL_KEYS = ("identifier", "prompt", "summary", "choices")
_SPOT_KEYS = ("identifier", "prompt", "summary", "noItemsSummary", "options")
_STUDY_KEYS = ("full", "spot", "activation", "activities")
_ACTIVATION_KEYS = ("activatingValues",)


def _require(obj: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in obj:
        raise StudyParseError(f"missing required field {key!r}", path=f"{path}.{key}" if path else key)
    return obj[key]


def _as_object(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, dict):
        raise StudyParseError(f"expected object, got {_type_name(value)}", path=path)
    return value


def _as_array(value: Any, path: str) -> list[Any]:
    if not isinstance(value, list):
        raise StudyParseError(f"expected array, got {_type_name(value)}", path=path)
    return value


def _as_string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise StudyParseError(f"expected string, got {_type_name(value)}", path=path)
    return value


def _as_int(value: Any, path: str) -> int:
    # bool is an int subclass; reject it explicitly.
    if isinstance(value, bool) or not isinstance(value, int):
        raise StudyParseError(f"expected integer, got {_type_name(value)}", path=path)
    return value


def _as_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise StudyParseError(f"expected number, got {_type_name(value)}", path=path)
    return float(value)


def _type_name(value: Any) -> str:
    return {dict: "object", list: "array", str: "string", bool: "boolean",
            int: "number", float: "number", type(None): "null"}.get(type(value), type(value).__name__)


def _extras(obj: Mapping[str, Any], known: tuple[str, ...]) -> dict[str, Any]:
    return {k: v for k, v in obj.items() if k not in known}


def _parse_summary(obj: Any, path: str) -> SummaryDef:
    data = _as_object(obj, path)
    return SummaryDef(
        identifier=_as_string(_require(data, "identifier", path), f"{path}.identifier"),
        title=_as_string(_require(data, "title", path), f"{path}.title"),
        text=_as_string(_require(data, "text", path), f"{path}.text"),
        extra=_extras(data, _SUMMARY_KEYS),
    )


def _parse_choice(obj: Any, path: str) -> ChoiceDef:
    data = _as_object(obj, path)
    return ChoiceDef(
        text=_as_string(_require(data, "text", path), f"{path}.text"),
        value=_as_string(_require(data, "value", path), f"{path}.value"),
        color=canonical_color(_as_string(_require(data, "color", path), f"{path}.color")),
        extra=_extras(data, _CHOICE_KEYS),
    )


def _parse_item(obj: Any, path: str) -> ItemDef:
    data = _as_object(obj, path)
    return ItemDef(
        identifier=_as_string(_require(data, "identifier", path), f"{path}.identifier"),
        description=_as_string(_require(data, "description", path), f"{path}.description"),
        image_title=_as_string(_require(data, "imageTitle", path), f"{path}.imageTitle"),
        extra=_extras(data, _ITEM_KEYS),
    )


def _parse_options(obj: Any, path: str) -> SpotOptionsDef:
    data = _as_object(obj, path)

    def color_at(key: str) -> str:
        return canonical_color(_as_string(_require(data, key, path), f"{path}.{key}"))

    return SpotOptionsDef(
        something_selected_button_color=color_at("somethingSelectedButtonColor"),
        nothing_selected_button_color=color_at("nothingSelectedButtonColor"),
        item_cell_selected_color=color_at("itemCellSelectedColor"),
        item_cell_selected_overlay_image_title=_as_string(
            _require(data, "itemCellSelectedOverlayImageTitle", path),
            f"{path}.itemCellSelectedOverlayImageTitle"),
        item_collection_view_background_color=color_at("itemCollectionViewBackgroundColor"),
        items_per_row=_as_int(_require(data, "itemsPerRow", path), f"{path}.itemsPerRow"),
        item_min_spacing=_as_number(_require(data, "itemMinSpacing", path), f"{path}.itemMinSpacing"),
        extra=_extras(data, _OPTIONS_KEYS),
    )


def _parse_full(obj: Any, path: str) -> FullAssessmentDef:
    data = _as_object(obj, path)
    raw_choices = _as_array(_require(data, "choices", path), f"{path}.choices")
    choices = tuple(_parse_choice(c, f"{path}.choices[{i}]") for i, c in enumerate(raw_choices))
    return FullAssessmentDef(
        identifier=_as_string(_require(data, "identifier", path), f"{path}.identifier"),
        prompt=_as_string(_require(data, "prompt", path), f"{path}.prompt"),
        summary=_parse_summary(_require(data, "summary", path), f"{path}.summary"),
        choices=choices,
        extra=_extras(data, _FULL_KEYS),
    )


def _parse_spot(obj: Any, path: str) -> SpotAssessmentDef:
    data = _as_object(obj, path)
    return SpotAssessmentDef(
        identifier=_as_string(_require(data, "identifier", path), f"{path}.identifier"),
        prompt=_as_string(_require(data, "prompt", path), f"{path}.prompt"),
        summary=_parse_summary(_require(data, "summary", path), f"{path}.summary"),
        no_items_summary=_parse_summary(_require(data, "noItemsSummary", path), f"{path}.noItemsSummary"),
        options=_parse_options(_require(data, "options", path), f"{path}.options"),
        extra=_extras(data, _SPOT_KEYS),
    )


def _parse_activation(obj: Any, path: str) -> ActivationRule:
    data = _as_object(obj, path)
    raw = _as_array(_require(data, "activatingValues", path), f"{path}.activatingValues")
    values = tuple(_as_string(v, f"{path}.activatingValues[{i}]") for i, v in enumerate(raw))
    return ActivationRule(activating_values=values)


def parse_study_definition(document: bytes | str) -> StudyDefinition:
    """Materialize a study document, preserving authored order everywhere.

    Raises :class:`StudyParseError` for malformed JSON (with line/column),
    a wrong type at a path, or a missing required field. Structural
    soundness beyond that (identifier uniqueness, color grammar, layout
    bounds) is the validator's job, not the parser's.
    """
    if isinstance(document, bytes):
        try:
            text = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StudyParseError(f"document is not valid UTF-8: {exc}") from exc
    else:
        text = document

    try:
        root = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StudyParseError(f"malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc

    root = _as_object(root, "$")

    schema_version = 1
    schema_version_authored = "schemaVersion" in root
    if schema_version_authored:
        schema_version = _as_int(root["schemaVersion"], "schemaVersion")

    # The study object is the unique top-level object carrying full + spot.
    candidates = [k for k, v in root.items()
                  if k != "schemaVersion" and isinstance(v, dict)
                  and "full" in v and "spot" in v]
    if not candidates:
        raise StudyParseError("missing study object (no top-level object with full and spot assessments)")
    if len(candidates) > 1:
        raise StudyParseError(f"multiple study objects: {', '.join(sorted(candidates))}")
    study_id = candidates[0]
    root_extra = {k: v for k, v in root.items() if k not in (study_id, "schemaVersion")}

    study_obj = _as_object(root[study_id], study_id)
    full = _parse_full(_require(study_obj, "full", study_id), f"{study_id}.full")
    spot = _parse_spot(_require(study_obj, "spot", study_id), f"{study_id}.spot")

    if "activation" in study_obj:
        activation = _parse_activation(study_obj["activation"], f"{study_id}.activation")
        activation_authored = True
    else:
        activation = ActivationRule.default_for(full.choices)
        activation_authored = False

    raw_items = _as_array(_require(study_obj, "activities", study_id), f"{study_id}.activities")
    items = tuple(_parse_item(item, f"{study_id}.activities[{i}]") for i, item in enumerate(raw_items))

    pair = AssessmentPair(full=full, spot=spot, activation=activation,
                          activation_authored=activation_authored)
    return StudyDefinition(
        study_id=study_id,
        assessments=(pair,),
        items=items,
        schema_version=schema_version,
        extra=_extras(study_obj, _STUDY_KEYS),
        root_extra=root_extra,
        schema_version_authored=schema_version_authored,
    )


# ---------------------------------------------------------------------------
# Validation

_PATH_SEGMENT_RE = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def _path_sort_key(path: str) -> tuple:
    """Componentwise key so ``x[2]`` sorts before ``x[10]``."""
    key: list[tuple[int, Any]] = []
    for name, index in _PATH_SEGMENT_RE.findall(path):
        key.append((1, int(index)) if index else (0, name))
    return tuple(key)


class _Collector:
    def __init__(self) -> None:
        self.diagnostics: list[Diagnostic] = []

    def error(self, code: str, path: str, message: str) -> None:
        self.diagnostics.append(Diagnostic(code, "error", path, message))

    def warning(self, code: str, path: str, message: str) -> None:
        self.diagnostics.append(Diagnostic(code, "warning", path, message))

    def report(self) -> ValidationReport:
        ordered = sorted(self.diagnostics, key=lambda d: (_path_sort_key(d.path), d.code))
        return ValidationReport(diagnostics=tuple(ordered))


def _check_color(out: _Collector, value: str, path: str) -> None:
    if not is_valid_color(value):
        out.error(BAD_COLOR, path, f"color {value!r} does not match #RRGGBB")


def _warn_extras(out: _Collector, extra: Mapping[str, Any], base: str) -> None:
    for key in extra:
        path = f"{base}.{key}" if base else key
        out.warning(UNKNOWN_FIELD, path, f"unknown field {key!r} retained but not interpreted")


def validate_study(definition: StudyDefinition,
                   assets: Collection[str] | None = None) -> ValidationReport:
    """Deterministic diagnostics for a parsed study, ordered by document path.

    ``assets`` is an optional manifest of resolvable media keys; when given,
    every image reference must appear in it. Problems are diagnostics, never
    exceptions.
    """
    out = _Collector()
    sid = definition.study_id

    if definition.schema_version < 1:
        out.error(BAD_SCHEMA_VERSION, "schemaVersion",
                  f"schemaVersion must be >= 1, got {definition.schema_version}")
    if not definition.schema_version_authored:
        out.warning(MISSING_SCHEMA_VERSION, "schemaVersion",
                    "schemaVersion absent; defaulting to 1")

    _warn_extras(out, definition.root_extra, "")
    _warn_extras(out, definition.extra, sid)

    seen_ids: dict[str, str] = {}

    def claim(identifier: str, path: str) -> None:
        if identifier in seen_ids:
            out.error(DUP_IDENTIFIER, path,
                      f"identifier {identifier!r} already used at {seen_ids[identifier]}")
        else:
            seen_ids[identifier] = path

    claim(sid, sid)

    for pair in definition.assessments:
        full, spot = pair.full, pair.spot
        fp, sp = f"{sid}.full", f"{sid}.spot"

        claim(full.identifier, f"{fp}.identifier")
        claim(full.summary.identifier, f"{fp}.summary.identifier")
        _warn_extras(out, full.extra, fp)
        _warn_extras(out, full.summary.extra, f"{fp}.summary")

        if len(full.choices) == 0:
            out.error(EMPTY_CHOICES, f"{fp}.choices", "choices must not be empty")
        elif len(full.choices) == 1:
            out.error(TOO_FEW_CHOICES, f"{fp}.choices", "at least 2 choices required")
        seen_values: dict[str, int] = {}
        for i, choice in enumerate(full.choices):
            cp = f"{fp}.choices[{i}]"
            _check_color(out, choice.color, f"{cp}.color")
            _warn_extras(out, choice.extra, cp)
            if choice.value in seen_values:
                out.error(DUP_CHOICE_VALUE, f"{cp}.value",
                          f"choice value {choice.value!r} already used at choices[{seen_values[choice.value]}]")
            else:
                seen_values[choice.value] = i

        claim(spot.identifier, f"{sp}.identifier")
        claim(spot.summary.identifier, f"{sp}.summary.identifier")
        claim(spot.no_items_summary.identifier, f"{sp}.noItemsSummary.identifier")
        _warn_extras(out, spot.extra, sp)
        _warn_extras(out, spot.summary.extra, f"{sp}.summary")
        _warn_extras(out, spot.no_items_summary.extra, f"{sp}.noItemsSummary")

        options = spot.options
        op = f"{sp}.options"
        for key, value in options.colors():
            _check_color(out, value, f"{op}.{key}")
        if options.items_per_row < 1:
            out.error(BAD_ITEMS_PER_ROW, f"{op}.itemsPerRow",
                      f"itemsPerRow must be >= 1, got {options.items_per_row}")
        if options.item_min_spacing < 0:
            out.error(BAD_ITEM_SPACING, f"{op}.itemMinSpacing",
                      f"itemMinSpacing must be >= 0, got {options.item_min_spacing}")
        _warn_extras(out, options.extra, op)

        if pair.activation_authored:
            known_values = {c.value for c in full.choices}
            for i, value in enumerate(pair.activation.activating_values):
                if value not in known_values:
                    out.error(UNKNOWN_ACTIVATION_VALUE, f"{sid}.activation.activatingValues[{i}]",
                              f"activating value {value!r} is not a choice value")

    if definition.assessments and not definition.items:
        out.error(NO_ITEMS, f"{sid}.activities",
                  "a study with assessments needs a non-empty item pool")

    for i, item in enumerate(definition.items):
        ip = f"{sid}.activities[{i}]"
        claim(item.identifier, f"{ip}.identifier")
        _warn_extras(out, item.extra, ip)
        if assets is not None and item.image_title not in assets:
            out.error(MISSING_ASSET, f"{ip}.imageTitle",
                      f"image {item.image_title!r} not found in asset manifest")

    if assets is not None:
        for pair in definition.assessments:
            overlay = pair.spot.options.item_cell_selected_overlay_image_title
            if overlay not in assets:
                out.error(MISSING_ASSET, f"{sid}.spot.options.itemCellSelectedOverlayImageTitle",
                          f"image {overlay!r} not found in asset manifest")

    return out.report()


# ---------------------------------------------------------------------------
# Canonical serialization

def _ordered(known: list[tuple[str, Any]], extra: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(known)
    merged.update(extra)
    return merged


def _summary_doc(s: SummaryDef) -> dict[str, Any]:
    return _ordered([("identifier", s.identifier), ("title", s.title), ("text", s.text)], s.extra)


def _choice_doc(c: ChoiceDef) -> dict[str, Any]:
    return _ordered([("text", c.text), ("value", c.value), ("color", canonical_color(c.color))], c.extra)


def _item_doc(i: ItemDef) -> dict[str, Any]:
    return _ordered([("imageTitle", i.image_title), ("description", i.description),
                     ("identifier", i.identifier)], i.extra)


def _options_doc(o: SpotOptionsDef) -> dict[str, Any]:
    return _ordered([
        ("somethingSelectedButtonColor", canonical_color(o.something_selected_button_color)),
        ("nothingSelectedButtonColor", canonical_color(o.nothing_selected_button_color)),
        ("itemCellSelectedColor", canonical_color(o.item_cell_selected_color)),
        ("itemCellSelectedOverlayImageTitle", o.item_cell_selected_overlay_image_title),
        ("itemCollectionViewBackgroundColor", canonical_color(o.item_collection_view_background_color)),
        ("itemsPerRow", o.items_per_row),
        ("itemMinSpacing", o.item_min_spacing),
    ], o.extra)


def study_document(definition: StudyDefinition) -> dict[str, Any]:
    """The canonical JSON object form (key order matters; see module doc)."""
    pair = definition.assessments[0]
    full_doc = _ordered([
        ("identifier", pair.full.identifier),
        ("prompt", pair.full.prompt),
        ("summary", _summary_doc(pair.full.summary)),
        ("choices", [_choice_doc(c) for c in pair.full.choices]),
    ], pair.full.extra)
    spot_doc = _ordered([
        ("identifier", pair.spot.identifier),
        ("prompt", pair.spot.prompt),
        ("summary", _summary_doc(pair.spot.summary)),
        ("noItemsSummary", _summary_doc(pair.spot.no_items_summary)),
        ("options", _options_doc(pair.spot.options)),
    ], pair.spot.extra)
    study_obj = _ordered([
        ("full", full_doc),
        ("spot", spot_doc),
        ("activation", {"activatingValues": list(pair.activation.activating_values)}),
        ("activities", [_item_doc(i) for i in definition.items]),
    ], definition.extra)
    return _ordered([
        ("schemaVersion", definition.schema_version),
        (definition.study_id, study_obj),
    ], definition.root_extra)


def canonical_serialize(definition: StudyDefinition) -> bytes:
    """Deterministic canonical bytes; ``parse . serialize`` is the identity.

    Only single-pair definitions have a document form; the canonical form
    always spells out ``schemaVersion`` and the ``activation`` object.
    """
    if len(definition.assessments) != 1:
        raise ValueError(
            f"canonical document form holds exactly one assessment pair, got {len(definition.assessments)}")
    text = json.dumps(study_document(definition), indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")
