"""Parse, validate, serialize, and interrogate experiment definitions.

A definition is a UTF-8 YAML document with the reserved top-level keys
``name``, ``provider``, ``cookbooks``, ``groups``, and ``attrs``:

    name: hadoop
    provider:
      backend: local
      instance_profile: m3.xlarge
    cookbooks:
      hadoop:
        path: ../cookbooks/hadoop
        version: "0.1"
    groups:
      namenodes:
        size: 1
        recipes: [hadoop::nn]
      datanodes:
        size: 2
        recipes: [hadoop::dn]
    attrs:
      teragen.records: 1000000

The grammar is a reconstruction from published excerpts of this style of
cluster definition; it is not compatible with any existing tool's format.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import yaml

from .attrs import (
    AttributeTree,
    Scalar,
    coerce_scalar,
    merge_attributes,
    parse_bytes,
    scalar_kind,
)
from .errors import DefinitionError

if TYPE_CHECKING:
    from .registry import RecipeRegistry

_TOP_LEVEL_KEYS = {"name", "provider", "cookbooks", "groups", "attrs"}
_GROUP_KEYS = {"size", "recipes", "attrs"}
_PROVIDER_KEYS = {"backend", "instance_profile", "spot_price_limit"}
_BACKENDS = ("local", "remote-shell")

RECIPE_REF_RE = re.compile(r"^[A-Za-z0-9_-]+::[A-Za-z0-9_-]+$")
_IDENT_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_-]*$")


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of last-wins."""


def _strict_mapping(loader: _StrictLoader, node: yaml.MappingNode, deep: bool = False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise DefinitionError(
                f"duplicate key {key!r}",
                line=key_node.start_mark.line + 1,
                column=key_node.start_mark.column + 1,
            )
        seen.add(key)
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _strict_mapping
)


@dataclass(frozen=True)
class ProviderSpec:
    backend: str = "local"
    instance_profile: str = "local"
    spot_price_limit: float | None = None


@dataclass(frozen=True)
class CookbookRef:
    name: str
    path: str
    version: str = ""


@dataclass(frozen=True)
class Group:
    name: str
    size: int
    recipes: tuple[str, ...]
    attributes: AttributeTree = field(default_factory=AttributeTree.empty)


@dataclass(frozen=True)
class ExperimentDefinition:
    name: str
    provider: ProviderSpec
    cookbooks: tuple[CookbookRef, ...]
    groups: tuple[Group, ...]
    global_attributes: AttributeTree = field(default_factory=AttributeTree.empty)

    def machine_count(self) -> int:
        return sum(g.size for g in self.groups)

    def group(self, name: str) -> Group:
        for g in self.groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def recipe_refs(self) -> list[str]:
        """All recipe references in group order, duplicates removed."""
        seen: dict[str, None] = {}
        for g in self.groups:
            for r in g.recipes:
                seen.setdefault(r)
        return list(seen)


@dataclass(frozen=True)
class Finding:
    severity: str  # "error" | "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity.upper()} {self.path} {self.message}"


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    @property
    def warnings(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "warning"]

    def is_runnable(self) -> bool:
        return not self.errors

    def add_error(self, path: str, message: str) -> None:
        self.findings.append(Finding("error", path, message))

    def add_warning(self, path: str, message: str) -> None:
        self.findings.append(Finding("warning", path, message))


@dataclass(frozen=True)
class FormField:
    key: str
    kind: str
    default: Scalar
    effective: Scalar
    recipe: str
    constraint: str = ""
    # the declaration behind the field, for range/choice checks; not part
    # of the serialized form
    decl: object | None = None


@dataclass(frozen=True)
class ParameterForm:
    fields: tuple[FormField, ...]

    def field(self, key: str) -> FormField | None:
        for f in self.fields:
            if f.key == key:
                return f
        return None


def parse_definition(text: str) -> ExperimentDefinition:
    """Parse a definition document; raises DefinitionError on any defect."""
    try:
        doc = yaml.load(text, Loader=_StrictLoader)
    except DefinitionError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise DefinitionError(
            f"syntax error: {exc.problem or exc}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        ) from exc
    except (yaml.YAMLError, RecursionError) as exc:
        raise DefinitionError(f"syntax error: {exc}") from exc

    if not isinstance(doc, dict):
        raise DefinitionError("document must be a mapping of definition keys")

    for key in doc:
        if key not in _TOP_LEVEL_KEYS:
            raise DefinitionError(f"unknown top-level key {key!r}")

    name = doc.get("name")
    if not isinstance(name, str) or not name.strip():
        raise DefinitionError("'name' is required and must be a nonempty string")

    provider = _parse_provider(doc.get("provider"))
    cookbooks = _parse_cookbooks(doc.get("cookbooks"))
    groups = _parse_groups(doc.get("groups"), {c.name for c in cookbooks})
    attrs_raw = doc.get("attrs") or {}
    global_attrs = AttributeTree.from_mapping(attrs_raw, "attrs")

    return ExperimentDefinition(
        name=name.strip(),
        provider=provider,
        cookbooks=tuple(cookbooks),
        groups=tuple(groups),
        global_attributes=global_attrs,
    )


def _parse_provider(raw) -> ProviderSpec:
    if raw is None:
        return ProviderSpec()
    if not isinstance(raw, dict):
        raise DefinitionError("'provider' must be a mapping")
    for key in raw:
        if key not in _PROVIDER_KEYS:
            raise DefinitionError(f"provider: unknown key {key!r}")
    backend = raw.get("backend", "local")
    if backend not in _BACKENDS:
        raise DefinitionError(f"provider.backend must be one of {_BACKENDS}, got {backend!r}")
    profile = raw.get("instance_profile", "local")
    if not isinstance(profile, str):
        raise DefinitionError("provider.instance_profile must be a string")
    spot = raw.get("spot_price_limit")
    if spot is not None:
        if isinstance(spot, bool) or not isinstance(spot, (int, float)):
            raise DefinitionError("provider.spot_price_limit must be a number")
        if spot <= 0:
            raise DefinitionError("provider.spot_price_limit must be > 0")
        spot = float(spot)
    return ProviderSpec(backend=backend, instance_profile=profile, spot_price_limit=spot)


def _parse_cookbooks(raw) -> list[CookbookRef]:
    if raw is None:
        return []
    if not isinstance(raw, dict):
        raise DefinitionError("'cookbooks' must be a mapping of name -> {path, version}")
    refs = []
    for name, body in raw.items():
        if not isinstance(name, str) or not _IDENT_RE.match(name):
            raise DefinitionError(f"cookbooks: invalid cookbook name {name!r}")
        if isinstance(body, str):
            body = {"path": body}
        if not isinstance(body, dict) or "path" not in body:
            raise DefinitionError(f"cookbooks.{name}: expected a mapping with a 'path'")
        path = body["path"]
        if not isinstance(path, str) or not path:
            raise DefinitionError(f"cookbooks.{name}.path must be a nonempty string")
        version = body.get("version", "")
        if not isinstance(version, str):
            version = str(version)
        refs.append(CookbookRef(name=name, path=path, version=version))
    return refs


def _parse_groups(raw, cookbook_names: set[str]) -> list[Group]:
    if not raw:
        raise DefinitionError("no groups declared")
    if not isinstance(raw, dict):
        raise DefinitionError("'groups' must be a mapping of group name -> spec")
    groups = []
    for name, body in raw.items():
        gpath = f"groups.{name}"
        if not isinstance(name, str) or not _IDENT_RE.match(name):
            raise DefinitionError(f"groups: invalid group name {name!r}")
        if not isinstance(body, dict):
            raise DefinitionError(f"{gpath}: expected a mapping")
        for key in body:
            if key not in _GROUP_KEYS:
                raise DefinitionError(f"{gpath}: unknown key {key!r}")
        size = body.get("size", 1)
        if isinstance(size, bool) or not isinstance(size, int):
            raise DefinitionError(f"{gpath}.size must be an integer")
        if size < 1:
            raise DefinitionError(f"{gpath}.size must be >= 1")
        recipes_raw = body.get("recipes", [])
        if not isinstance(recipes_raw, list):
            raise DefinitionError(f"{gpath}.recipes must be a list")
        recipes: list[str] = []
        for i, ref in enumerate(recipes_raw):
            if not isinstance(ref, str) or not RECIPE_REF_RE.match(ref):
                raise DefinitionError(
                    f"{gpath}.recipes[{i}]: malformed recipe reference {ref!r} "
                    "(expected 'cookbook::recipe')"
                )
            cookbook = ref.split("::", 1)[0]
            if cookbook not in cookbook_names:
                raise DefinitionError(
                    f"{gpath}.recipes[{i}]: recipe {ref!r} references undeclared cookbook {cookbook!r}"
                )
            if ref in recipes:
                raise DefinitionError(f"{gpath}.recipes[{i}]: duplicate recipe {ref!r} in group")
            recipes.append(ref)
        attrs = AttributeTree.from_mapping(body.get("attrs") or {}, f"{gpath}.attrs")
        groups.append(Group(name=name, size=size, recipes=tuple(recipes), attributes=attrs))
    return groups


def serialize_definition(definition: ExperimentDefinition) -> str:
    """Canonical YAML emission: keys in declaration order, round-trip safe."""
    doc: dict = {"name": definition.name}
    provider: dict = {
        "backend": definition.provider.backend,
        "instance_profile": definition.provider.instance_profile,
    }
    if definition.provider.spot_price_limit is not None:
        provider["spot_price_limit"] = definition.provider.spot_price_limit
    doc["provider"] = provider
    if definition.cookbooks:
        doc["cookbooks"] = {
            c.name: {"path": c.path, "version": c.version} for c in definition.cookbooks
        }
    doc["groups"] = {
        g.name: _group_doc(g) for g in definition.groups
    }
    if not definition.global_attributes.is_empty():
        doc["attrs"] = definition.global_attributes.as_nested()
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False)


def _group_doc(group: Group) -> dict:
    body: dict = {"size": group.size, "recipes": list(group.recipes)}
    if not group.attributes.is_empty():
        body["attrs"] = group.attributes.as_nested()
    return body


def validate(definition: ExperimentDefinition, registry: "RecipeRegistry") -> ValidationReport:
    """Check a parsed definition against a recipe registry.

    Findings are data, not failures: the report lists errors and warnings,
    and the definition is runnable iff there are no errors.
    """
    report = ValidationReport()
    declared_params: dict[str, object] = {}

    for gi, group in enumerate(definition.groups):
        for ri, ref in enumerate(group.recipes):
            path = f"groups.{group.name}.recipes[{ri}]"
            recipe = registry.get(ref)
            if recipe is None:
                report.add_error(path, f"unknown recipe {ref!r}")
                continue
            for param in recipe.params:
                declared_params.setdefault(param.key, param)

    # attribute values must satisfy the declared parameter types/constraints
    for scope_name, tree in _attr_scopes(definition):
        for key, value in tree.leaves():
            param = declared_params.get(key)
            path = f"{scope_name}.{key}"
            if param is None:
                report.add_warning(path, "unknown attribute key (no recipe declares it)")
                continue
            problem = param.check(value)  # type: ignore[attr-defined]
            if problem:
                report.add_error(path, problem)

    return report


def _attr_scopes(definition: ExperimentDefinition):
    yield "attrs", definition.global_attributes
    for group in definition.groups:
        yield f"groups.{group.name}.attrs", group.attributes


def effective_attributes(
    definition: ExperimentDefinition,
    group: Group,
    user: AttributeTree | None = None,
) -> AttributeTree:
    """Merged attribute tree for one group: user > group > global."""
    return merge_attributes(
        definition.global_attributes, group.attributes, user or AttributeTree.empty()
    )


def render_parameter_form(
    definition: ExperimentDefinition,
    registry: "RecipeRegistry",
    user: AttributeTree | None = None,
) -> ParameterForm:
    """Build the ordered parameter form the dashboard renders.

    One field per declared parameter of every recipe the definition uses,
    in group/recipe/parameter declaration order; a parameter declared by
    several recipes appears once, at its first occurrence. The effective
    value reflects the merge for the first group using the recipe.
    """
    fields: list[FormField] = []
    seen: set[str] = set()
    for group in definition.groups:
        merged = effective_attributes(definition, group, user)
        for ref in group.recipes:
            recipe = registry.get(ref)
            if recipe is None:
                continue
            for param in recipe.params:
                if param.key in seen:
                    continue
                seen.add(param.key)
                current = merged.get(param.key)
                effective = current if current is not None else param.default
                fields.append(
                    FormField(
                        key=param.key,
                        kind=param.kind,
                        default=param.default,
                        effective=effective,
                        recipe=ref,
                        constraint=param.constraint_text(),
                        decl=param,
                    )
                )
    return ParameterForm(fields=tuple(fields))


def _literal(text: str) -> Scalar:
    try:
        return int(text, 10)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def coerce_overrides(form: ParameterForm, raw: dict) -> dict[str, Scalar]:
    """Convert raw override values (CLI strings, JSON scalars) into the
    kinds the form declares, so the later attribute merge never sees a
    kind conflict the user could not predict.

    Byte quantities adopt the spelling of the current effective value
    (string like "64MB" vs plain int) since both are valid declarations.
    Unknown keys get a best-effort literal parse when textual.
    """
    out: dict[str, Scalar] = {}
    for key, value in raw.items():
        f = form.field(key)
        if f is None:
            out[key] = _literal(value) if isinstance(value, str) else value
            continue
        if f.kind == "bytes":
            if isinstance(f.effective, str):
                out[key] = str(value)
            else:
                out[key] = parse_bytes(value)
            continue
        if isinstance(value, str):
            out[key] = coerce_scalar(value, f.kind)
        elif f.kind == "float" and scalar_kind(value) == "int":
            out[key] = float(value)
        else:
            out[key] = value
    return out


def check_overrides(form: ParameterForm, overrides: dict[str, Scalar]) -> list[str]:
    """Type- and constraint-check user overrides against the form;
    returns problem messages.

    String values pass when they parse as the declared kind (CLI --set
    arrives as text).  Overrides for keys no recipe declares pass
    (forward-compatible), matching the warning-not-error treatment of
    unknown attribute keys.
    """
    problems = []
    for key, value in overrides.items():
        f = form.field(key)
        if f is None:
            continue
        checked = value
        if f.kind == "bytes":
            try:
                parse_bytes(value)
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
                continue
        elif isinstance(value, str) and f.kind != "string":
            try:
                checked = coerce_scalar(value, f.kind)
            except ValueError:
                problems.append(f"{key}: expected {f.kind}, got {value!r}")
                continue
        elif f.kind == "float" and scalar_kind(value) == "int":
            pass  # int literals are acceptable where floats are declared
        elif scalar_kind(value) != f.kind:
            problems.append(f"{key}: expected {f.kind}, got {scalar_kind(value)} {value!r}")
            continue
        range_check = getattr(f.decl, "check", None)
        if callable(range_check):
            problem = range_check(checked)
            if problem is not None:
                problems.append(f"{key}: {problem}")
    return problems
