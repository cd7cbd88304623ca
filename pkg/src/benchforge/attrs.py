"""Hierarchical attribute trees: dotted-key configuration with typed scalars.

Attribute trees hold the tunable parameters of an experiment (record counts,
heap sizes, event rates). Keys may be written either dotted (``a.b.c: 1``) or
as nested mappings (``a: {b: {c: 1}}``); both normalize to the same tree.
Merging is per-leaf with a fixed precedence chain.
"""

from __future__ import annotations

import re
from typing import Iterator, Union

from .errors import AttributeMergeError, DefinitionError

Scalar = Union[str, int, float, bool]

_BYTES_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(KB|MB|GB|TB|B)?\s*$", re.IGNORECASE)

_BYTES_FACTORS = {
    None: 1,
    "B": 1,
    "KB": 2**10,
    "MB": 2**20,
    "GB": 2**30,
    "TB": 2**40,
}


def scalar_kind(value: Scalar) -> str:
    # bool first: it is an int subclass
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    raise TypeError(f"not a scalar: {value!r} ({type(value).__name__})")


def parse_bytes(value: Scalar) -> int:
    """Parse a byte quantity with binary suffixes (KB/MB/GB = 2^10/2^20/2^30)."""
    if isinstance(value, bool):
        raise ValueError(f"not a byte quantity: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"byte quantity must be integral: {value!r}")
        return int(value)
    m = _BYTES_RE.match(value)
    if not m:
        raise ValueError(f"not a byte quantity: {value!r}")
    number, suffix = m.group(1), m.group(2)
    factor = _BYTES_FACTORS[suffix.upper() if suffix else None]
    result = float(number) * factor
    if not result.is_integer():
        raise ValueError(f"byte quantity is not a whole number of bytes: {value!r}")
    return int(result)


def coerce_scalar(text: str, kind: str) -> Scalar:
    """Parse a textual value (CLI --set, form input) into the declared kind."""
    if kind == "string":
        return text
    if kind == "int":
        try:
            return int(text, 10)
        except ValueError:
            raise ValueError(f"expected integer, got {text!r}") from None
    if kind == "float":
        try:
            return float(text)
        except ValueError:
            raise ValueError(f"expected number, got {text!r}") from None
    if kind == "bool":
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"expected boolean, got {text!r}")
    if kind == "bytes":
        parse_bytes(text)  # raises on bad input; keep the original spelling
        return text
    raise ValueError(f"unknown scalar kind {kind!r}")


class AttributeTree:
    """Immutable nested mapping from dotted keys to scalar values."""

    __slots__ = ("_root",)

    def __init__(self, root: dict | None = None):
        self._root = root or {}

    @classmethod
    def from_mapping(cls, mapping: dict, path: str = "attrs") -> "AttributeTree":
        """Normalize a raw mapping (dotted and/or nested keys) into a tree.

        Raises DefinitionError on non-scalar leaves, colliding keys, or a
        dotted key that lands both as a leaf and as a subtree.
        """
        root: dict = {}
        cls._fold(mapping, root, path)
        return cls(root)

    @staticmethod
    def _fold(mapping: dict, into: dict, path: str) -> None:
        if not isinstance(mapping, dict):
            raise DefinitionError(f"{path}: expected a mapping, got {type(mapping).__name__}")
        for raw_key, value in mapping.items():
            if not isinstance(raw_key, str) or not raw_key:
                raise DefinitionError(f"{path}: attribute keys must be nonempty strings, got {raw_key!r}")
            parts = raw_key.split(".")
            if any(not p for p in parts):
                raise DefinitionError(f"{path}: malformed dotted key {raw_key!r}")
            node = into
            for part in parts[:-1]:
                child = node.get(part)
                if child is None:
                    child = node[part] = {}
                elif not isinstance(child, dict):
                    raise DefinitionError(f"{path}: key {raw_key!r} collides with scalar at {part!r}")
                node = child
            leaf = parts[-1]
            full = f"{path}.{raw_key}"
            if isinstance(value, dict):
                existing = node.get(leaf)
                if existing is not None and not isinstance(existing, dict):
                    raise DefinitionError(f"{full}: subtree collides with existing scalar")
                AttributeTree._fold(value, node.setdefault(leaf, {}), full)
            else:
                if value is None or not isinstance(value, (str, int, float, bool)):
                    raise DefinitionError(f"{full}: attribute values must be scalars, got {value!r}")
                if leaf in node:
                    raise DefinitionError(f"{full}: duplicate attribute key")
                node[leaf] = value

    @classmethod
    def empty(cls) -> "AttributeTree":
        return cls({})

    def get(self, key: str, default: Scalar | None = None) -> Scalar | None:
        node = self._root
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.get(part) if isinstance(node, dict) else None
            if node is None:
                return default
        if not isinstance(node, dict):
            return default
        value = node.get(parts[-1], default)
        return default if isinstance(value, dict) else value

    def leaves(self) -> Iterator[tuple[str, Scalar]]:
        """Yield (dotted key, value) pairs in insertion order."""
        yield from self._walk(self._root, "")

    @staticmethod
    def _walk(node: dict, prefix: str) -> Iterator[tuple[str, Scalar]]:
        for key, value in node.items():
            dotted = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict):
                yield from AttributeTree._walk(value, dotted)
            else:
                yield dotted, value

    def as_flat_dict(self) -> dict[str, Scalar]:
        return dict(self.leaves())

    def as_nested(self) -> dict:
        """Deep copy of the underlying nested mapping (for serialization)."""
        return _deep_copy(self._root)

    def is_empty(self) -> bool:
        return not self._root

    def __contains__(self, key: str) -> bool:
        return self.get(key, _MISSING) is not _MISSING  # type: ignore[arg-type]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, AttributeTree) and self.as_flat_dict() == other.as_flat_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.leaves())))

    def __repr__(self) -> str:
        return f"AttributeTree({self._root!r})"


_MISSING = object()


def _deep_copy(node: dict) -> dict:
    return {k: _deep_copy(v) if isinstance(v, dict) else v for k, v in node.items()}


def merge_attributes(
    global_tree: AttributeTree,
    group_tree: AttributeTree,
    user_tree: AttributeTree,
) -> AttributeTree:
    """Merge three attribute trees with precedence user > group > global.

    The merge is per-leaf: a tree overrides only the exact keys it sets.
    A key set with different scalar kinds at different levels is a conflict
    and raises AttributeMergeError; so is a leaf/subtree shape mismatch.
    """
    result: dict = {}
    for tree in (global_tree, group_tree, user_tree):
        _overlay(result, tree._root, "")
    return AttributeTree(result)


def _overlay(dst: dict, src: dict, prefix: str) -> None:
    for key, value in src.items():
        dotted = f"{prefix}.{key}" if prefix else key
        existing = dst.get(key)
        if isinstance(value, dict):
            if existing is not None and not isinstance(existing, dict):
                raise AttributeMergeError(f"{dotted}: subtree overrides scalar")
            _overlay(dst.setdefault(key, {}), value, dotted)
        else:
            if isinstance(existing, dict):
                raise AttributeMergeError(f"{dotted}: scalar overrides subtree")
            if existing is not None and scalar_kind(existing) != scalar_kind(value):
                raise AttributeMergeError(
                    f"{dotted}: type conflict ({scalar_kind(existing)} vs {scalar_kind(value)})"
                )
            dst[key] = value
