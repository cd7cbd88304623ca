"""Cookbook loading, parameter declarations, dependency scopes, templating."""

from __future__ import annotations

import pytest

from benchforge.attrs import AttributeTree
from benchforge.dsl import parse_definition
from benchforge.errors import DependencyCycleError, RegistryError, SubstitutionError
from benchforge.registry import (
    PHASES,
    RUNTIME_KEYS,
    ParamDecl,
    RuntimeVars,
    load_cookbook,
    registry_for_definition,
    substitute_params,
)

from conftest import write_cookbook


class TestParamDecl:
    def test_kind_mismatch(self):
        d = ParamDecl(key="k", kind="int", default=1)
        assert d.check(5) is None
        assert d.check("five") is not None
        assert d.check(True) is not None  # bool is not an int here

    def test_min_max(self):
        d = ParamDecl(key="k", kind="int", default=5, minimum=1, maximum=10)
        assert d.check(1) is None
        assert d.check(10) is None
        assert d.check(0) is not None
        assert d.check(11) is not None

    def test_choices(self):
        d = ParamDecl(key="k", kind="string", default="a", choices=("a", "b"))
        assert d.check("b") is None
        assert d.check("c") is not None

    def test_bytes_accepts_both_spellings(self):
        d = ParamDecl(key="k", kind="bytes", default="64MB")
        assert d.check("128MB") is None
        assert d.check(1024) is None
        assert d.check("lots") is not None

    def test_float_accepts_int(self):
        d = ParamDecl(key="k", kind="float", default=0.5)
        assert d.check(1) is None
        assert d.check(0.25) is None


class TestLoadCookbook:
    def test_loads_recipes(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {
                "one": {"phase": "setup"},
                "two": {"phase": "run", "deps": ["cb::one"], "timeout_ms": 5000},
            },
            {"one": "echo one\n", "two": "echo two\n"},
        )
        name, version, recipes = load_cookbook(tmp_path / "cb")
        assert name == "cb"
        by_id = {r.id: r for r in recipes}
        assert set(by_id) == {"cb::one", "cb::two"}
        assert by_id["cb::two"].timeout_ms == 5000
        # bare-string dep defaults to any-machine scope
        assert by_id["cb::two"].deps[0].target == "cb::one"
        assert by_id["cb::two"].deps[0].scope == "any-machine"

    def test_missing_metadata(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(RegistryError):
            load_cookbook(tmp_path / "empty")

    def test_missing_script_file(self, tmp_path):
        cb = write_cookbook(tmp_path, "cb", {"one": {"phase": "setup"}}, {"one": "x\n"})
        (cb / "recipes" / "one.sh.tmpl").unlink()
        with pytest.raises(RegistryError, match="script"):
            load_cookbook(cb)

    def test_bad_phase(self, tmp_path):
        write_cookbook(tmp_path, "cb", {"one": {"phase": "warmup"}}, {"one": "x\n"})
        with pytest.raises(RegistryError, match="phase"):
            load_cookbook(tmp_path / "cb")

    def test_bad_scope(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {
                "a": {"phase": "setup"},
                "b": {"phase": "run", "deps": [{"recipe": "cb::a", "scope": "somewhere"}]},
            },
            {"a": "x\n", "b": "y\n"},
        )
        with pytest.raises(RegistryError, match="scope"):
            load_cookbook(tmp_path / "cb")

    def test_undeclared_placeholder_rejected(self, tmp_path):
        write_cookbook(tmp_path, "cb", {"one": {"phase": "setup"}}, {"one": "echo {{no.decl}}\n"})
        with pytest.raises(RegistryError, match="no.decl"):
            load_cookbook(tmp_path / "cb")

    def test_runtime_placeholders_allowed_without_decl(self, tmp_path):
        scripts = {"one": "echo " + " ".join("{{%s}}" % k for k in RUNTIME_KEYS) + "\n"}
        write_cookbook(tmp_path, "cb", {"one": {"phase": "setup"}}, scripts)
        _, _, recipes = load_cookbook(tmp_path / "cb")
        assert recipes[0].id == "cb::one"

    def test_default_must_satisfy_constraints(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {"one": {"phase": "setup", "params": [{"key": "k", "kind": "int", "default": 0, "min": 1}]}},
            {"one": "echo {{k}}\n"},
        )
        with pytest.raises(RegistryError):
            load_cookbook(tmp_path / "cb")

    def test_bad_timeout(self, tmp_path):
        write_cookbook(tmp_path, "cb", {"one": {"phase": "setup", "timeout_ms": 0}}, {"one": "x\n"})
        with pytest.raises(RegistryError, match="timeout"):
            load_cookbook(tmp_path / "cb")

    def test_all_phases_accepted(self, tmp_path):
        recipes = {p: {"phase": p} for p in PHASES}
        scripts = {p: f"echo {p}\n" for p in PHASES}
        write_cookbook(tmp_path, "cb", recipes, scripts)
        _, _, loaded = load_cookbook(tmp_path / "cb")
        assert sorted(r.phase for r in loaded) == sorted(PHASES)


class TestRegistryForDefinition:
    def test_resolves_relative_paths(self, tmp_path):
        write_cookbook(tmp_path, "cb", {"r": {"phase": "run"}}, {"r": "x\n"})
        d = parse_definition(
            "name: t\ncookbooks:\n  cb: {path: ./cb}\ngroups:\n  g: {size: 1, recipes: [cb::r]}\n"
        )
        reg = registry_for_definition(d, tmp_path)
        assert reg.get("cb::r") is not None

    def test_name_mismatch_rejected(self, tmp_path):
        write_cookbook(tmp_path, "actual", {"r": {"phase": "run"}}, {"r": "x\n"})
        d = parse_definition(
            "name: t\ncookbooks:\n  declared: {path: ./actual}\ngroups:\n  g: {size: 1, recipes: [declared::r]}\n"
        )
        with pytest.raises(RegistryError, match="name"):
            registry_for_definition(d, tmp_path)

    def test_recipe_level_cycle_detected(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {
                "a": {"phase": "run", "deps": ["cb::b"]},
                "b": {"phase": "run", "deps": ["cb::a"]},
            },
            {"a": "x\n", "b": "y\n"},
        )
        d = parse_definition(
            "name: t\ncookbooks:\n  cb: {path: ./cb}\ngroups:\n  g: {size: 1, recipes: [cb::a, cb::b]}\n"
        )
        with pytest.raises(DependencyCycleError) as err:
            registry_for_definition(d, tmp_path)
        assert "cb::a" in str(err.value) and "cb::b" in str(err.value)


class TestSubstitution:
    def _recipe(self, tmp_path, script, params=()):
        write_cookbook(
            tmp_path,
            "cb",
            {"r": {"phase": "run", "params": list(params)}},
            {"r": script},
        )
        _, _, recipes = load_cookbook(tmp_path / "cb")
        return recipes[0]

    def test_resolution_order_attr_over_default(self, tmp_path):
        r = self._recipe(
            tmp_path,
            "echo {{k}}\n",
            [{"key": "k", "kind": "int", "default": 1}],
        )
        out = substitute_params(r, AttributeTree.from_mapping({"k": 9}))
        assert out.text == "echo 9\n"
        out = substitute_params(r, AttributeTree.empty())
        assert out.text == "echo 1\n"

    def test_runtime_values(self, tmp_path):
        r = self._recipe(tmp_path, "echo {{machine.id}} {{machine.index}} {{run.id}}\n")
        rt = RuntimeVars(machine_id="m-0", machine_index=3, machine_group="g", run_id="r-1")
        out = substitute_params(r, AttributeTree.empty(), rt)
        assert out.text == "echo m-0 3 r-1\n"

    def test_bytes_rendered_as_plain_count(self, tmp_path):
        r = self._recipe(
            tmp_path,
            "echo {{mem}}\n",
            [{"key": "mem", "kind": "bytes", "default": "64MB"}],
        )
        out = substitute_params(r, AttributeTree.empty())
        assert out.text == f"echo {64 * 1024 * 1024}\n"
        out = substitute_params(r, AttributeTree.from_mapping({"mem": "1KB"}))
        assert out.text == "echo 1024\n"

    def test_bool_and_float_rendering(self, tmp_path):
        r = self._recipe(
            tmp_path,
            "echo {{flag}} {{ratio}}\n",
            [
                {"key": "flag", "kind": "bool", "default": True},
                {"key": "ratio", "kind": "float", "default": 0.1},
            ],
        )
        out = substitute_params(r, AttributeTree.empty())
        assert out.text == "echo true 0.1\n"
        out = substitute_params(r, AttributeTree.from_mapping({"flag": False, "ratio": 0.25}))
        assert out.text == "echo false 0.25\n"

    def test_constraint_enforced_at_substitution(self, tmp_path):
        r = self._recipe(
            tmp_path,
            "echo {{k}}\n",
            [{"key": "k", "kind": "int", "default": 5, "min": 1, "max": 10}],
        )
        with pytest.raises(SubstitutionError):
            substitute_params(r, AttributeTree.from_mapping({"k": 99}))

    def test_whitespace_inside_braces(self, tmp_path):
        r = self._recipe(
            tmp_path,
            "echo {{ k }}\n",
            [{"key": "k", "kind": "int", "default": 2}],
        )
        out = substitute_params(r, AttributeTree.empty())
        assert out.text == "echo 2\n"

    def test_timeout_carried_to_script(self, tmp_path):
        write_cookbook(
            tmp_path, "cb", {"r": {"phase": "run", "timeout_ms": 1234}}, {"r": "echo x\n"}
        )
        _, _, recipes = load_cookbook(tmp_path / "cb")
        out = substitute_params(recipes[0], AttributeTree.empty())
        assert out.timeout_ms == 1234
