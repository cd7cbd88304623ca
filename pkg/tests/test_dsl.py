"""Definition grammar: parsing, strictness, round-trip, validation, overrides."""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from benchforge.dsl import (
    check_overrides,
    coerce_overrides,
    parse_definition,
    render_parameter_form,
    serialize_definition,
    validate,
)
from benchforge.errors import DefinitionError
from benchforge.registry import registry_for_definition

from conftest import write_cookbook

MINIMAL = """\
name: demo
provider:
  backend: local
cookbooks:
  cb:
    path: ./cb
groups:
  workers:
    size: 2
    recipes: [cb::setup]
"""


def _demo_cookbook(root: Path) -> Path:
    return write_cookbook(
        root,
        "cb",
        {
            "setup": {
                "phase": "setup",
                "params": [
                    {"key": "app.threads", "kind": "int", "default": 4, "min": 1, "max": 64},
                    {"key": "app.heap", "kind": "bytes", "default": "256MB"},
                    {"key": "app.mode", "kind": "string", "default": "fast", "choices": ["fast", "safe"]},
                ],
            },
            "bench": {
                "phase": "run",
                "deps": [{"recipe": "cb::setup", "scope": "same-machine"}],
                "params": [{"key": "bench.ratio", "kind": "float", "default": 0.5}],
            },
        },
        {
            "setup": "echo threads={{app.threads}} heap={{app.heap}} mode={{app.mode}}\n",
            "bench": "echo ratio={{bench.ratio}} on {{machine.id}}\n",
        },
    )


class TestParse:
    def test_minimal(self):
        d = parse_definition(MINIMAL)
        assert d.name == "demo"
        assert d.provider.backend == "local"
        assert [g.name for g in d.groups] == ["workers"]
        assert d.groups[0].size == 2
        assert d.groups[0].recipes == ("cb::setup",)
        assert d.machine_count() == 2

    def test_unknown_top_level_key(self):
        with pytest.raises(DefinitionError, match="unknown top-level key"):
            parse_definition(MINIMAL + "extra: 1\n")

    def test_duplicate_mapping_key_rejected(self):
        text = "name: a\nname: b\ncookbooks:\n  cb: {path: ./cb}\ngroups:\n  g: {recipes: [cb::r]}\n"
        with pytest.raises(DefinitionError, match="duplicate key"):
            parse_definition(text)

    def test_duplicate_nested_key_rejected(self):
        text = MINIMAL + "attrs:\n  x: 1\n  x: 2\n"
        with pytest.raises(DefinitionError, match="duplicate key"):
            parse_definition(text)

    def test_syntax_error_carries_position(self):
        try:
            parse_definition("name: [unclosed")
        except DefinitionError as exc:
            assert exc.line == 1
            assert exc.column is not None
        else:
            pytest.fail("expected DefinitionError")

    def test_non_mapping_document(self):
        with pytest.raises(DefinitionError, match="mapping"):
            parse_definition("- 1\n- 2\n")

    def test_missing_name(self):
        with pytest.raises(DefinitionError, match="'name'"):
            parse_definition("provider: {backend: local}\ngroups:\n  g: {size: 1}\n")

    def test_bad_backend(self):
        with pytest.raises(DefinitionError, match="backend"):
            parse_definition(MINIMAL.replace("backend: local", "backend: warp"))

    def test_group_size_bounds(self):
        with pytest.raises(DefinitionError, match="size"):
            parse_definition(MINIMAL.replace("size: 2", "size: 0"))
        with pytest.raises(DefinitionError, match="size"):
            parse_definition(MINIMAL.replace("size: 2", "size: many"))

    def test_malformed_recipe_ref(self):
        with pytest.raises(DefinitionError, match="malformed recipe reference"):
            parse_definition(MINIMAL.replace("cb::setup", "justname"))

    def test_undeclared_cookbook_in_ref(self):
        with pytest.raises(DefinitionError, match="undeclared cookbook"):
            parse_definition(MINIMAL.replace("cb::setup", "other::setup"))

    def test_duplicate_recipe_in_group(self):
        with pytest.raises(DefinitionError, match="duplicate recipe"):
            parse_definition(MINIMAL.replace("[cb::setup]", "[cb::setup, cb::setup]"))

    def test_spot_price_limit(self):
        d = parse_definition(
            MINIMAL.replace("backend: local", "backend: local\n  spot_price_limit: 0.75")
        )
        assert d.provider.spot_price_limit == 0.75
        with pytest.raises(DefinitionError):
            parse_definition(
                MINIMAL.replace("backend: local", "backend: local\n  spot_price_limit: -1")
            )

    def test_group_attrs(self):
        text = MINIMAL.replace(
            "recipes: [cb::setup]",
            "recipes: [cb::setup]\n    attrs:\n      app.threads: 8",
        )
        d = parse_definition(text)
        assert d.groups[0].attributes.get("app.threads") == 8


class TestRoundTrip:
    def test_serialize_parse_identity(self):
        text = MINIMAL + "attrs:\n  app.threads: 8\n  app.heap: 512MB\n"
        d1 = parse_definition(text)
        d2 = parse_definition(serialize_definition(d1))
        assert d1 == d2

    def test_serialized_form_is_strict_yaml(self):
        d = parse_definition(MINIMAL)
        out = serialize_definition(d)
        assert "name: demo" in out
        parse_definition(out)  # must not raise


class TestValidate:
    def test_clean_definition_is_runnable(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL)
        reg = registry_for_definition(d, tmp_path)
        report = validate(d, reg)
        assert report.is_runnable()
        assert report.errors == []

    def test_unknown_recipe_is_error(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL.replace("cb::setup", "cb::missing"))
        reg = registry_for_definition(d, tmp_path)
        report = validate(d, reg)
        assert not report.is_runnable()
        assert any("missing" in f.message for f in report.errors)

    def test_unknown_attr_key_is_warning(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL + "attrs:\n  no.such.key: 1\n")
        reg = registry_for_definition(d, tmp_path)
        report = validate(d, reg)
        assert report.is_runnable()
        assert any("no.such.key" in f.path or "no.such.key" in f.message for f in report.warnings)

    def test_constraint_violation_is_error(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL + "attrs:\n  app.threads: 9999\n")
        reg = registry_for_definition(d, tmp_path)
        report = validate(d, reg)
        assert not report.is_runnable()


class TestParameterForm:
    def test_fields_and_effective_values(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL + "attrs:\n  app.threads: 16\n")
        reg = registry_for_definition(d, tmp_path)
        form = render_parameter_form(d, reg)
        keys = [f.key for f in form.fields]
        assert "app.threads" in keys
        assert "app.heap" in keys
        threads = form.field("app.threads")
        assert threads.default == 4
        assert threads.effective == 16
        heap = form.field("app.heap")
        assert heap.effective == "256MB"

    def test_first_occurrence_dedupe(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {
                "a": {"phase": "setup", "params": [{"key": "shared.k", "kind": "int", "default": 1}]},
                "b": {"phase": "run", "params": [{"key": "shared.k", "kind": "int", "default": 1}]},
            },
            {"a": "echo {{shared.k}}\n", "b": "echo {{shared.k}}\n"},
        )
        d = parse_definition(MINIMAL.replace("[cb::setup]", "[cb::a, cb::b]"))
        reg = registry_for_definition(d, tmp_path)
        form = render_parameter_form(d, reg)
        assert [f.key for f in form.fields].count("shared.k") == 1


class TestOverrides:
    @pytest.fixture
    def form(self, tmp_path):
        _demo_cookbook(tmp_path)
        d = parse_definition(MINIMAL)
        reg = registry_for_definition(d, tmp_path)
        return render_parameter_form(d, reg)

    def test_typed_values_pass(self, form):
        assert check_overrides(form, {"app.threads": 8}) == []
        assert check_overrides(form, {"bench.ratio": 1}) == []  # int where float declared

    def test_string_values_coercible_pass(self, form):
        assert check_overrides(form, {"app.threads": "8"}) == []
        assert check_overrides(form, {"app.heap": "1GB"}) == []

    def test_bad_values_reported(self, form):
        assert check_overrides(form, {"app.threads": "eight"}) != []
        assert check_overrides(form, {"app.heap": "huge"}) != []
        assert check_overrides(form, {"app.threads": True}) != []

    def test_unknown_keys_pass(self, form):
        assert check_overrides(form, {"totally.new": "x"}) == []

    def test_constraint_violations_reported(self, form):
        assert check_overrides(form, {"app.threads": 1000}) != []
        assert check_overrides(form, {"app.threads": "0"}) != []  # below min after coercion
        assert check_overrides(form, {"app.mode": "reckless"}) != []
        assert check_overrides(form, {"app.threads": 64, "app.mode": "safe"}) == []

    def test_coerce_types(self, form):
        out = coerce_overrides(form, {"app.threads": "8", "bench.ratio": "0.25"})
        assert out["app.threads"] == 8
        assert out["bench.ratio"] == 0.25

    def test_coerce_bytes_adopts_declared_spelling(self, form):
        # declared default "256MB" is a string, so overrides stay strings
        out = coerce_overrides(form, {"app.heap": 1048576})
        assert isinstance(out["app.heap"], str)

    def test_coerce_unknown_key_literal(self, form):
        out = coerce_overrides(form, {"brand.new": "42"})
        assert out["brand.new"] == 42


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=300))
def test_parser_never_crashes_differently(text):
    """Arbitrary text either parses or raises DefinitionError, nothing else."""
    try:
        parse_definition(text)
    except DefinitionError:
        pass


@settings(max_examples=100, deadline=None)
@given(
    st.dictionaries(
        st.sampled_from(["name", "provider", "cookbooks", "groups", "attrs", "other"]),
        st.one_of(st.none(), st.integers(), st.text(max_size=10), st.lists(st.integers(), max_size=3)),
        max_size=6,
    )
)
def test_parser_rejects_malformed_documents_cleanly(doc):
    import yaml as _yaml

    try:
        parse_definition(_yaml.safe_dump(doc))
    except DefinitionError:
        pass
