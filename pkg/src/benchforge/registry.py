"""Recipe metadata: declared parameters, dependency rules, script templates.

A cookbook is a directory:

    <cookbook>/
      metadata.yaml            # name, version, recipe declarations
      recipes/<name>.sh.tmpl   # shell script template per recipe

Recipes are shell-script templates with ``{{key.path}}`` placeholders that
resolve from merged attributes, declared defaults, and runtime-injected
variables (machine id, run id). Dependencies reference recipe ids with a
scope (same-machine, any-machine, all-machines) and must form a DAG.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .attrs import AttributeTree, Scalar, parse_bytes, scalar_kind
from .errors import DependencyCycleError, RegistryError, SubstitutionError

PHASES = ("setup", "datagen", "run", "teardown")
SCOPES = ("same-machine", "any-machine", "all-machines")
KINDS = ("string", "int", "float", "bool", "bytes")

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z0-9_][A-Za-z0-9_.-]*)\s*\}\}")

RUNTIME_KEYS = ("machine.id", "machine.index", "machine.group", "run.id")


@dataclass(frozen=True)
class ParamDecl:
    key: str
    kind: str = "string"
    default: Scalar = ""
    minimum: float | None = None
    maximum: float | None = None
    choices: tuple[Scalar, ...] = ()

    def check(self, value: Scalar) -> str | None:
        """Return a problem description if value violates this declaration."""
        if self.kind == "bytes":
            try:
                number: float = parse_bytes(value)
            except ValueError as exc:
                return str(exc)
        elif self.kind == "float":
            if scalar_kind(value) not in ("float", "int"):
                return f"expected float, got {scalar_kind(value)} {value!r}"
            number = float(value)  # type: ignore[arg-type]
        elif self.kind in ("int", "bool", "string"):
            if scalar_kind(value) != self.kind:
                return f"expected {self.kind}, got {scalar_kind(value)} {value!r}"
            number = value if self.kind == "int" else 0  # type: ignore[assignment]
        else:
            return f"unknown kind {self.kind!r}"
        if self.choices and value not in self.choices:
            return f"value {value!r} not in {list(self.choices)}"
        if self.kind in ("int", "float", "bytes"):
            if self.minimum is not None and number < self.minimum:
                return f"value {value!r} below minimum {self.minimum}"
            if self.maximum is not None and number > self.maximum:
                return f"value {value!r} above maximum {self.maximum}"
        return None

    def constraint_text(self) -> str:
        parts = []
        if self.minimum is not None:
            parts.append(f"min {self.minimum:g}")
        if self.maximum is not None:
            parts.append(f"max {self.maximum:g}")
        if self.choices:
            parts.append("one of " + ", ".join(str(c) for c in self.choices))
        return "; ".join(parts)


@dataclass(frozen=True)
class DependencyRule:
    target: str  # recipe id "cookbook::name"
    scope: str = "any-machine"


@dataclass(frozen=True)
class Recipe:
    id: str
    phase: str = "run"
    params: tuple[ParamDecl, ...] = ()
    deps: tuple[DependencyRule, ...] = ()
    script: str = ""
    timeout_ms: int | None = None


@dataclass(frozen=True)
class ExecutableScript:
    recipe_id: str
    text: str
    timeout_ms: int | None = None


@dataclass(frozen=True)
class RuntimeVars:
    machine_id: str = ""
    machine_index: int = 0
    machine_group: str = ""
    run_id: str = ""

    def as_mapping(self) -> dict[str, Scalar]:
        return {
            "machine.id": self.machine_id,
            "machine.index": self.machine_index,
            "machine.group": self.machine_group,
            "run.id": self.run_id,
        }


@dataclass
class RecipeRegistry:
    recipes: dict[str, Recipe] = field(default_factory=dict)
    provenance: dict[str, dict[str, str]] = field(default_factory=dict)  # cookbook -> {path, version}

    def get(self, recipe_id: str) -> Recipe | None:
        return self.recipes.get(recipe_id)

    def require(self, recipe_id: str) -> Recipe:
        recipe = self.recipes.get(recipe_id)
        if recipe is None:
            raise RegistryError(f"unknown recipe {recipe_id!r}")
        return recipe

    def add_cookbook(self, name: str, recipes: list[Recipe], path: str = "", version: str = "") -> None:
        for recipe in recipes:
            if recipe.id in self.recipes:
                raise RegistryError(f"duplicate recipe id {recipe.id!r}")
            self.recipes[recipe.id] = recipe
        self.provenance[name] = {"path": path, "version": version}
        self.check_acyclic()

    def check_acyclic(self) -> None:
        """Raise DependencyCycleError (naming the cycle) if deps loop."""
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {rid: WHITE for rid in self.recipes}
        stack: list[str] = []

        def visit(rid: str) -> None:
            color[rid] = GRAY
            stack.append(rid)
            for rule in self.recipes[rid].deps:
                target = rule.target
                if target not in self.recipes:
                    continue  # dangling deps surface at validate/build time
                if color[target] == GRAY:
                    cycle = stack[stack.index(target):] + [target]
                    raise DependencyCycleError(cycle)
                if color[target] == WHITE:
                    visit(target)
            stack.pop()
            color[rid] = BLACK

        for rid in sorted(self.recipes):
            if color[rid] == WHITE:
                visit(rid)


def load_cookbook(path: str | Path) -> tuple[str, str, list[Recipe]]:
    """Load one cookbook directory; returns (name, version, recipes)."""
    root = Path(path)
    meta_path = root / "metadata.yaml"
    if not meta_path.is_file():
        raise RegistryError(f"{root}: missing metadata.yaml")
    try:
        meta = yaml.safe_load(meta_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise RegistryError(f"{meta_path}: malformed YAML: {exc}") from exc
    if not isinstance(meta, dict):
        raise RegistryError(f"{meta_path}: metadata must be a mapping")
    name = meta.get("name")
    if not isinstance(name, str) or not name:
        raise RegistryError(f"{meta_path}: 'name' is required")
    version = str(meta.get("version", ""))
    recipes_raw = meta.get("recipes") or {}
    if not isinstance(recipes_raw, dict):
        raise RegistryError(f"{meta_path}: 'recipes' must be a mapping")

    recipes = []
    for recipe_name, body in recipes_raw.items():
        recipes.append(_parse_recipe(root, name, recipe_name, body or {}))
    return name, version, recipes


def _parse_recipe(root: Path, cookbook: str, recipe_name: str, body) -> Recipe:
    rid = f"{cookbook}::{recipe_name}"
    where = f"{root / 'metadata.yaml'}: recipe {recipe_name!r}"
    if not isinstance(body, dict):
        raise RegistryError(f"{where}: expected a mapping")
    phase = body.get("phase", "run")
    if phase not in PHASES:
        raise RegistryError(f"{where}: phase must be one of {PHASES}, got {phase!r}")

    params = []
    for p in body.get("params") or []:
        if not isinstance(p, dict) or "key" not in p:
            raise RegistryError(f"{where}: each param needs a 'key'")
        kind = p.get("kind", "string")
        if kind not in KINDS:
            raise RegistryError(f"{where}: param {p['key']!r} has unknown kind {kind!r}")
        default = p.get("default", "")
        decl = ParamDecl(
            key=str(p["key"]),
            kind=kind,
            default=default,
            minimum=p.get("min"),
            maximum=p.get("max"),
            choices=tuple(p.get("choices") or ()),
        )
        problem = decl.check(default) if default != "" or kind == "string" else None
        if problem:
            raise RegistryError(f"{where}: default for {decl.key!r}: {problem}")
        params.append(decl)

    deps = []
    for d in body.get("deps") or []:
        if isinstance(d, str):
            d = {"recipe": d}
        if not isinstance(d, dict) or "recipe" not in d:
            raise RegistryError(f"{where}: each dep needs a 'recipe'")
        scope = d.get("scope", "any-machine")
        if scope not in SCOPES:
            raise RegistryError(f"{where}: dep scope must be one of {SCOPES}, got {scope!r}")
        target = str(d["recipe"])
        if "::" not in target:
            raise RegistryError(f"{where}: dep {target!r} must be a 'cookbook::recipe' id")
        deps.append(DependencyRule(target=target, scope=scope))

    timeout_ms = body.get("timeout_ms")
    if timeout_ms is not None and (isinstance(timeout_ms, bool) or not isinstance(timeout_ms, int) or timeout_ms <= 0):
        raise RegistryError(f"{where}: timeout_ms must be a positive integer")

    script_path = root / "recipes" / f"{recipe_name}.sh.tmpl"
    if not script_path.is_file():
        raise RegistryError(f"{where}: missing script {script_path}")
    script = script_path.read_text(encoding="utf-8")

    declared = {p.key for p in params} | set(RUNTIME_KEYS)
    for match in PLACEHOLDER_RE.finditer(script):
        if match.group(1) not in declared:
            raise RegistryError(
                f"{where}: script placeholder {{{{{match.group(1)}}}}} names no declared "
                "param or runtime variable"
            )

    return Recipe(
        id=rid,
        phase=phase,
        params=tuple(params),
        deps=tuple(deps),
        script=script,
        timeout_ms=timeout_ms,
    )


def load_registry(root: str | Path) -> RecipeRegistry:
    """Load every cookbook directory under root (deterministic order)."""
    registry = RecipeRegistry()
    base = Path(root)
    if not base.is_dir():
        raise RegistryError(f"{base}: not a directory")
    for entry in sorted(base.iterdir()):
        if entry.is_dir() and (entry / "metadata.yaml").is_file():
            name, version, recipes = load_cookbook(entry)
            registry.add_cookbook(name, recipes, path=str(entry), version=version)
    return registry


def registry_for_definition(definition, base_dir: str | Path) -> RecipeRegistry:
    """Load exactly the cookbooks a definition references.

    Cookbook paths resolve relative to base_dir (the definition file's
    directory). The metadata name must match the name declared in the
    definition; the declared version is recorded as provenance.
    """
    registry = RecipeRegistry()
    base = Path(base_dir)
    for ref in definition.cookbooks:
        path = Path(ref.path)
        if not path.is_absolute():
            path = base / path
        name, version, recipes = load_cookbook(path)
        if name != ref.name:
            raise RegistryError(
                f"cookbook at {path} declares name {name!r}, definition expects {ref.name!r}"
            )
        registry.add_cookbook(name, recipes, path=str(path), version=ref.version or version)
    return registry


def substitute_params(
    recipe: Recipe,
    attrs: AttributeTree,
    runtime: RuntimeVars | None = None,
) -> ExecutableScript:
    """Render a recipe's script template into an executable script.

    Resolution order per placeholder: attributes, then runtime variables,
    then the declared default. Values must satisfy declared constraints;
    bytes-kind parameters are rendered as plain byte counts.
    """
    runtime_map = (runtime or RuntimeVars()).as_mapping()
    decls = {p.key: p for p in recipe.params}

    def resolve(match: re.Match) -> str:
        key = match.group(1)
        decl = decls.get(key)
        value: Scalar | None = attrs.get(key)
        if value is None:
            value = runtime_map.get(key)
        if value is None and decl is not None:
            value = decl.default
        if value is None:
            raise SubstitutionError(f"{recipe.id}: unresolved placeholder {{{{{key}}}}}")
        if decl is not None:
            problem = decl.check(value)
            if problem:
                raise SubstitutionError(f"{recipe.id}: {key}: {problem}")
            if decl.kind == "bytes":
                return str(parse_bytes(value))
        return _render_scalar(value)

    text = PLACEHOLDER_RE.sub(resolve, recipe.script)
    return ExecutableScript(recipe_id=recipe.id, text=text, timeout_ms=recipe.timeout_ms)


def _render_scalar(value: Scalar) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
