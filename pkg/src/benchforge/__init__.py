"""benchforge: reproducible benchmark experiments from declarative definitions.

Parse a cluster/experiment definition, expand it into a per-machine task
DAG, execute it locally or over remote shells while sampling machine
metrics, run the built-in batch-sort and streaming benchmarks, and fold
everything into run records and comparison reports.
"""

from .attrs import AttributeTree, merge_attributes, parse_bytes
from .dsl import (
    ExperimentDefinition,
    parse_definition,
    render_parameter_form,
    serialize_definition,
    validate,
)
from .dag import build_dag, execute, plan_document, topological_plan
from .record import RunRecord, load_run_record, save_run_record
from .registry import RecipeRegistry, load_registry, registry_for_definition
from .runner import RunController, RunManager

__version__ = "0.1.0"

__all__ = [
    "AttributeTree",
    "ExperimentDefinition",
    "RecipeRegistry",
    "RunController",
    "RunManager",
    "RunRecord",
    "build_dag",
    "execute",
    "load_registry",
    "load_run_record",
    "merge_attributes",
    "parse_bytes",
    "parse_definition",
    "plan_document",
    "registry_for_definition",
    "render_parameter_form",
    "save_run_record",
    "serialize_definition",
    "topological_plan",
    "validate",
    "__version__",
]
