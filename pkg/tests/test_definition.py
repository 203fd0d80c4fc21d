"""Study-document parsing, validation, and canonical-form behavior."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visurvey import definition as d
from visurvey.definition import (
    ActivationRule,
    AssessmentPair,
    ChoiceDef,
    FullAssessmentDef,
    ItemDef,
    SpotAssessmentDef,
    SpotOptionsDef,
    StudyDefinition,
    StudyParseError,
    SummaryDef,
    canonical_serialize,
    parse_study_definition,
    validate_study,
)

from conftest import FIXTURES


def mutate(study_bytes: bytes, fn) -> bytes:
    """Load the fixture as raw JSON, apply fn(root), dump back."""
    root = json.loads(study_bytes)
    fn(root)
    return json.dumps(root).encode()


class TestParse:
    def test_fixture_shape(self, study):
        assert study.study_id == "YADL"
        assert len(study.assessments) == 1
        pair = study.assessments[0]
        assert [c.value for c in pair.full.choices] == ["easy", "moderate", "hard"]
        ids = study.item_ids()
        assert len(ids) >= 4
        assert "Bathing" in ids and "WalkingUpStairs" in ids

    def test_item_order_preserved(self, study):
        assert study.item_ids() == ("Bathing", "BedToChair", "Toilet", "WalkingUpStairs")

    def test_empty_document_rejected(self):
        with pytest.raises(StudyParseError, match="missing study object"):
            parse_study_definition(b"{}")

    def test_items_per_row_string_is_type_error(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["spot"]["options"].update(itemsPerRow="3"))
        with pytest.raises(StudyParseError) as err:
            parse_study_definition(doc)
        assert err.value.path == "YADL.spot.options.itemsPerRow"

    def test_malformed_json_reports_location(self):
        with pytest.raises(StudyParseError) as err:
            parse_study_definition(b'{\n  "YADL": }')
        assert err.value.line == 2
        assert err.value.column is not None

    def test_missing_required_field_reports_path(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["full"].pop("prompt"))
        with pytest.raises(StudyParseError) as err:
            parse_study_definition(doc)
        assert err.value.path == "YADL.full.prompt"

    def test_multiple_study_objects_rejected(self, study_bytes):
        root = json.loads(study_bytes)
        root["Other"] = root["YADL"]
        with pytest.raises(StudyParseError, match="multiple study objects"):
            parse_study_definition(json.dumps(root).encode())

    def test_unknown_fields_retained(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"].update(customNote={"a": 1}))
        study = parse_study_definition(doc)
        assert study.extra == {"customNote": {"a": 1}}

    def test_schema_version_default(self, study):
        assert study.schema_version == 1
        assert study.schema_version_authored is False

    def test_authored_schema_version(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r.update(schemaVersion=3))
        study = parse_study_definition(doc)
        assert study.schema_version == 3
        assert study.schema_version_authored is True

    def test_default_activation_rule_skips_first_choice(self, study):
        pair = study.assessments[0]
        assert pair.activation.activating_values == ("moderate", "hard")
        assert pair.activation_authored is False

    def test_authored_activation_rule(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"].update(activation={"activatingValues": ["hard"]}))
        pair = parse_study_definition(doc).assessments[0]
        assert pair.activation.activating_values == ("hard",)
        assert pair.activation_authored is True

    def test_lowercase_color_canonicalized(self, study):
        options = study.assessments[0].spot.options
        assert options.something_selected_button_color == "#0080FF"


class TestValidate:
    def test_fixture_has_zero_errors(self, study):
        report = validate_study(study)
        assert report.ok
        assert report.errors == ()
        # schemaVersion was not authored in the fixture, so a warning remains.
        assert any(diag.code == d.MISSING_SCHEMA_VERSION for diag in report.warnings)

    def test_duplicate_item_identifier(self, study_bytes):
        def dup(root):
            acts = root["YADL"]["activities"]
            acts[1] = dict(acts[0])
        report = validate_study(parse_study_definition(mutate(study_bytes, dup)))
        hits = [diag for diag in report.errors if diag.code == d.DUP_IDENTIFIER]
        assert len(hits) == 1
        assert hits[0].path == "YADL.activities[1].identifier"

    def test_bad_color(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["full"]["choices"][0].update(color="#GGGGGG"))
        report = validate_study(parse_study_definition(doc))
        assert [diag.code for diag in report.errors] == [d.BAD_COLOR]
        assert report.errors[0].path == "YADL.full.choices[0].color"

    def test_duplicate_choice_value(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["full"]["choices"][2].update(value="easy"))
        report = validate_study(parse_study_definition(doc))
        assert [diag.code for diag in report.errors] == [d.DUP_CHOICE_VALUE]

    def test_too_few_choices(self, study_bytes):
        def shrink(root):
            root["YADL"]["full"]["choices"] = root["YADL"]["full"]["choices"][:1]
        report = validate_study(parse_study_definition(mutate(study_bytes, shrink)))
        assert d.TOO_FEW_CHOICES in [diag.code for diag in report.errors]

    def test_empty_choices(self, study_bytes):
        def clear(root):
            root["YADL"]["full"]["choices"] = []
        report = validate_study(parse_study_definition(mutate(study_bytes, clear)))
        assert d.EMPTY_CHOICES in [diag.code for diag in report.errors]

    def test_items_per_row_below_one(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["spot"]["options"].update(itemsPerRow=0))
        report = validate_study(parse_study_definition(doc))
        assert [diag.code for diag in report.errors] == [d.BAD_ITEMS_PER_ROW]

    def test_no_items(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"].update(activities=[]))
        report = validate_study(parse_study_definition(doc))
        assert [diag.code for diag in report.errors] == [d.NO_ITEMS]

    def test_unknown_activation_value(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"].update(activation={"activatingValues": ["severe"]}))
        report = validate_study(parse_study_definition(doc))
        assert [diag.code for diag in report.errors] == [d.UNKNOWN_ACTIVATION_VALUE]

    def test_unknown_field_warning_carries_path(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["full"].update(surprise=True))
        report = validate_study(parse_study_definition(doc))
        assert report.ok
        paths = [diag.path for diag in report.warnings if diag.code == d.UNKNOWN_FIELD]
        assert paths == ["YADL.full.surprise"]

    def test_asset_manifest_resolution(self, study):
        all_assets = {"Bathing", "BedToChair", "Toilet", "WalkingUpStairs", "first_tab"}
        assert validate_study(study, assets=all_assets).ok
        report = validate_study(study, assets=all_assets - {"Toilet"})
        missing = [diag for diag in report.errors if diag.code == d.MISSING_ASSET]
        assert len(missing) == 1
        assert missing[0].path == "YADL.activities[2].imageTitle"

    def test_overlay_asset_checked(self, study):
        report = validate_study(study, assets={"Bathing", "BedToChair", "Toilet", "WalkingUpStairs"})
        assert any(diag.code == d.MISSING_ASSET and "Overlay" in diag.path for diag in report.errors)

    def test_determinism_and_path_order(self, study_bytes):
        def wreck(root):
            root["YADL"]["spot"]["options"].update(itemsPerRow=0)
            root["YADL"]["full"]["choices"][1].update(color="nope")
            root["YADL"]["activities"][3] = dict(root["YADL"]["activities"][0])
        doc = mutate(study_bytes, wreck)
        first = validate_study(parse_study_definition(doc))
        second = validate_study(parse_study_definition(doc))
        assert first == second
        paths = [diag.path for diag in first.diagnostics]
        assert paths == sorted(paths, key=d._path_sort_key)

    def test_index_ordering_is_numeric(self):
        key = d._path_sort_key
        assert key("s.items[2]") < key("s.items[10]")


class TestCanonicalForm:
    def test_roundtrip_model_equal(self, study, study_bytes):
        blob = canonical_serialize(study)
        assert parse_study_definition(blob) == study

    def test_serialize_idempotent(self, study):
        once = canonical_serialize(study)
        twice = canonical_serialize(parse_study_definition(once))
        assert once == twice

    def test_serialize_deterministic(self, study):
        assert canonical_serialize(study) == canonical_serialize(study)

    def test_matches_pinned_canonical_fixture(self, study):
        pinned = (FIXTURES / "yadl_study.canonical.json").read_bytes()
        assert canonical_serialize(study) == pinned

    def test_lowercase_color_uppercased_in_output(self, study):
        assert b'"#0080FF"' in canonical_serialize(study)
        assert b'"#0080ff"' not in canonical_serialize(study)

    def test_unknown_fields_survive_roundtrip(self, study_bytes):
        doc = mutate(study_bytes, lambda r: r["YADL"]["full"]["choices"][0].update(weight=2))
        study = parse_study_definition(doc)
        again = parse_study_definition(canonical_serialize(study))
        assert again.assessments[0].full.choices[0].extra == {"weight": 2}
        assert again == study

    def test_key_order_fixed(self, study):
        doc = json.loads(canonical_serialize(study))
        assert list(doc) == ["schemaVersion", "YADL"]
        assert list(doc["YADL"]) == ["full", "spot", "activation", "activities"]
        assert list(doc["YADL"]["full"]) == ["identifier", "prompt", "summary", "choices"]
        assert list(doc["YADL"]["activities"][0]) == ["imageTitle", "description", "identifier"]


# ---------------------------------------------------------------------------
# Property tests over generated models

_IDENT = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-",
                 min_size=1, max_size=24)
_TEXT = st.text(min_size=0, max_size=40).filter(lambda s: "\x00" not in s)
_COLOR = st.from_regex(r"#[0-9A-F]{6}", fullmatch=True)


@st.composite
def study_definitions(draw) -> StudyDefinition:
    names = draw(st.lists(_IDENT, min_size=8, max_size=16, unique=True))
    study_id, full_id, full_sum, spot_id, spot_sum, spot_none, *item_ids = names

    choice_values = draw(st.lists(_IDENT, min_size=2, max_size=4, unique=True))
    choices = tuple(ChoiceDef(text=draw(_TEXT), value=v, color=draw(_COLOR)) for v in choice_values)
    summary = lambda ident: SummaryDef(identifier=ident, title=draw(_TEXT), text=draw(_TEXT))

    full = FullAssessmentDef(identifier=full_id, prompt=draw(_TEXT),
                             summary=summary(full_sum), choices=choices)
    options = SpotOptionsDef(
        something_selected_button_color=draw(_COLOR),
        nothing_selected_button_color=draw(_COLOR),
        item_cell_selected_color=draw(_COLOR),
        item_cell_selected_overlay_image_title=draw(_IDENT),
        item_collection_view_background_color=draw(_COLOR),
        items_per_row=draw(st.integers(min_value=1, max_value=8)),
        item_min_spacing=draw(st.floats(min_value=0, max_value=64, allow_nan=False)),
    )
    spot = SpotAssessmentDef(identifier=spot_id, prompt=draw(_TEXT),
                             summary=summary(spot_sum), no_items_summary=summary(spot_none),
                             options=options)
    activation = ActivationRule(activating_values=tuple(
        v for v in choice_values if draw(st.booleans())))
    items = tuple(ItemDef(identifier=iid, description=draw(_TEXT), image_title=draw(_IDENT))
                  for iid in item_ids[:draw(st.integers(min_value=1, max_value=len(item_ids)))])
    return StudyDefinition(
        study_id=study_id,
        assessments=(AssessmentPair(full=full, spot=spot, activation=activation),),
        items=items,
        schema_version=draw(st.integers(min_value=1, max_value=9)),
    )


@settings(max_examples=60, deadline=None)
@given(study_definitions())
def test_roundtrip_property(generated: StudyDefinition):
    blob = canonical_serialize(generated)
    reparsed = parse_study_definition(blob)
    assert reparsed == generated
    assert canonical_serialize(reparsed) == blob


@settings(max_examples=60, deadline=None)
@given(study_definitions())
def test_generated_models_validate_cleanly(generated: StudyDefinition):
    report = validate_study(generated)
    assert report.ok, report.diagnostics
