"""Task-DAG construction and scheduling.

The expansion oracle re-derives the expected node and edge sets from first
principles (groups x recipes, scope rules, datagen-before-run) without using
build_dag's own machinery, so the two implementations check each other.
"""

from __future__ import annotations

import random
import threading
import time

import pytest

from benchforge.attrs import AttributeTree
from benchforge.dag import (
    ExecutableScript,
    TaskDag,
    TaskNode,
    build_dag,
    execute,
    plan_document,
    topological_plan,
)
from benchforge.dsl import parse_definition
from benchforge.errors import DagError
from benchforge.registry import registry_for_definition

from conftest import FakeExecutor, write_cookbook


def expansion_oracle(groups, recipe_deps, recipe_phase):
    """Independently expand (group, size, recipes) rows into nodes and edges.

    groups: list of (group_name, size, [recipe_id]).
    recipe_deps: {recipe_id: [(target_recipe_id, scope)]}.
    recipe_phase: {recipe_id: phase}.
    Returns (node_ids, edge_set) using global machine indexing in row order.
    """
    machines = []  # (machine_id, [recipe ids]) in global index order
    for name, size, recipes in groups:
        for i in range(size):
            machines.append((f"{name}-{i}", list(recipes)))

    nodes = set()
    hosts_of = {}
    for mid, recipes in machines:
        for rid in recipes:
            nodes.add(f"{mid}/{rid}")
            hosts_of.setdefault(rid, []).append(mid)

    edges = set()
    for mid, recipes in machines:
        for rid in recipes:
            for target, scope in recipe_deps.get(rid, []):
                if scope == "same-machine":
                    edges.add((f"{mid}/{target}", f"{mid}/{rid}"))
                elif scope == "any-machine":
                    edges.add((f"{hosts_of[target][0]}/{target}", f"{mid}/{rid}"))
                elif scope == "all-machines":
                    for host in hosts_of[target]:
                        edges.add((f"{host}/{target}", f"{mid}/{rid}"))

    datagen = [n for n in nodes if recipe_phase[n.split("/", 1)[1]] == "datagen"]
    runs = [n for n in nodes if recipe_phase[n.split("/", 1)[1]] == "run"]
    for a in datagen:
        for b in runs:
            if a != b:
                edges.add((a, b))
    return nodes, edges


def has_cycle(nodes, edges) -> bool:
    """Kahn's algorithm on the oracle's edge set."""
    indeg = {n: 0 for n in nodes}
    out = {n: [] for n in nodes}
    for a, b in edges:
        indeg[b] += 1
        out[a].append(b)
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for c in out[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen != len(nodes)


def make_definition(tmp_path, groups, recipes):
    """groups: [(name, size, [recipe names])]; recipes: {name: (phase, deps)}."""
    meta = {}
    scripts = {}
    for rname, (phase, deps) in recipes.items():
        body = {"phase": phase}
        if deps:
            body["deps"] = [{"recipe": f"cb::{t}", "scope": s} for t, s in deps]
        meta[rname] = body
        scripts[rname] = f"echo {rname}\n"
    write_cookbook(tmp_path, "cb", meta, scripts)
    lines = ["name: t", "cookbooks:", "  cb: {path: ./cb}", "groups:"]
    for name, size, rnames in groups:
        refs = ", ".join(f"cb::{r}" for r in rnames)
        lines.append(f"  {name}: {{size: {size}, recipes: [{refs}]}}")
    d = parse_definition("\n".join(lines) + "\n")
    return d, registry_for_definition(d, tmp_path)


class TestBuildDag:
    def test_matches_expansion_oracle_for_scope_mix(self, tmp_path):
        recipes = {
            "seed": ("datagen", []),
            "master": ("setup", []),
            "worker": ("setup", [("master", "any-machine")]),
            "local": ("run", [("worker", "same-machine")]),
            "fanin": ("run", [("worker", "all-machines")]),
        }
        groups = [
            ("ctrl", 1, ["master", "seed"]),
            ("pool", 3, ["worker", "local", "fanin"]),
        ]
        d, reg = make_definition(tmp_path, groups, recipes)
        dag = build_dag(d, reg)

        deps = {r: ds for r, (p, ds) in recipes.items()}
        deps = {f"cb::{k}": [(f"cb::{t}", s) for t, s in v] for k, v in deps.items()}
        phases = {f"cb::{k}": p for k, (p, _) in recipes.items()}
        want_nodes, want_edges = expansion_oracle(
            [(n, s, [f"cb::{r}" for r in rs]) for n, s, rs in groups], deps, phases
        )
        assert set(dag.nodes) == want_nodes
        assert set(dag.edges) == want_edges

    def test_randomized_against_oracle(self, tmp_path):
        rng = random.Random(7)
        phases = ["setup", "datagen", "run", "teardown"]
        for trial in range(20):
            sub = tmp_path / f"t{trial}"
            sub.mkdir()
            n_recipes = rng.randint(1, 5)
            names = [f"r{i}" for i in range(n_recipes)]
            recipes = {}
            for i, name in enumerate(names):
                deps = []
                for j in range(i):  # edges only to earlier recipes: acyclic
                    if rng.random() < 0.4:
                        deps.append((names[j], rng.choice(["same-machine", "any-machine", "all-machines"])))
                recipes[name] = (rng.choice(phases), deps)
            groups = []
            for g in range(rng.randint(1, 3)):
                used = [n for n in names if rng.random() < 0.7] or [names[0]]
                # same-machine targets must be co-located: pull them in
                changed = True
                while changed:
                    changed = False
                    for r in list(used):
                        for t, s in recipes[r][1]:
                            if s == "same-machine" and t not in used:
                                used.append(t)
                                changed = True
                used.sort(key=names.index)
                groups.append((f"g{g}", rng.randint(1, 3), used))
            # every dep target must be hosted somewhere
            hosted = {r for _, _, rs in groups for r in rs}
            ok = all(
                t in hosted
                for r, (_, ds) in recipes.items()
                if r in hosted
                for t, _ in ds
            )
            if not ok:
                continue
            d, reg = make_definition(sub, groups, recipes)
            deps = {f"cb::{k}": [(f"cb::{t}", s) for t, s in v[1]] for k, v in recipes.items()}
            ph = {f"cb::{k}": p for k, (p, _) in recipes.items()}
            want_nodes, want_edges = expansion_oracle(
                [(n, s, [f"cb::{r}" for r in rs]) for n, s, rs in groups], deps, ph
            )
            try:
                dag = build_dag(d, reg)
            except DagError as exc:
                # builder may reject an induced cycle; the oracle must agree
                assert "cycle" in str(exc), f"trial {trial}: {exc}"
                assert has_cycle(want_nodes, want_edges), f"trial {trial}"
                continue
            assert not has_cycle(want_nodes, want_edges), f"trial {trial}"
            assert set(dag.nodes) == want_nodes, f"trial {trial}"
            assert set(dag.edges) == want_edges, f"trial {trial}"

    def test_same_machine_dep_missing_is_error(self, tmp_path):
        recipes = {"a": ("setup", []), "b": ("run", [("a", "same-machine")])}
        groups = [("left", 1, ["a"]), ("right", 1, ["b"])]
        d, reg = make_definition(tmp_path, groups, recipes)
        with pytest.raises(DagError, match="same-machine dependency"):
            build_dag(d, reg)

    def test_any_machine_picks_lowest_global_index(self, tmp_path):
        recipes = {"a": ("setup", []), "b": ("run", [("a", "any-machine")])}
        groups = [("first", 2, ["a"]), ("second", 2, ["a", "b"])]
        d, reg = make_definition(tmp_path, groups, recipes)
        dag = build_dag(d, reg)
        incoming = {b for a, b in dag.edges if a == "first-0/cb::a"}
        assert incoming == {"second-0/cb::b", "second-1/cb::b"}

    def test_scripts_are_rendered_per_machine(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {"r": {"phase": "run"}},
            {"r": "echo {{machine.id}}:{{machine.index}}\n"},
        )
        d = parse_definition(
            "name: t\ncookbooks:\n  cb: {path: ./cb}\ngroups:\n  g: {size: 2, recipes: [cb::r]}\n"
        )
        reg = registry_for_definition(d, tmp_path)
        dag = build_dag(d, reg, run_id="rx")
        assert dag.nodes["g-0/cb::r"].script.text == "echo g-0:0\n"
        assert dag.nodes["g-1/cb::r"].script.text == "echo g-1:1\n"

    def test_group_attrs_override_global(self, tmp_path):
        write_cookbook(
            tmp_path,
            "cb",
            {"r": {"phase": "run", "params": [{"key": "k", "kind": "int", "default": 0}]}},
            {"r": "echo {{k}}\n"},
        )
        d = parse_definition(
            "name: t\n"
            "cookbooks:\n  cb: {path: ./cb}\n"
            "groups:\n"
            "  plain: {size: 1, recipes: [cb::r]}\n"
            "  tuned:\n"
            "    size: 1\n"
            "    recipes: [cb::r]\n"
            "    attrs: {k: 2}\n"
            "attrs: {k: 1}\n"
        )
        reg = registry_for_definition(d, tmp_path)
        dag = build_dag(d, reg)
        assert dag.nodes["plain-0/cb::r"].script.text == "echo 1\n"
        assert dag.nodes["tuned-0/cb::r"].script.text == "echo 2\n"
        user = AttributeTree.from_mapping({"k": 9})
        dag = build_dag(d, reg, user_attrs=user)
        assert dag.nodes["plain-0/cb::r"].script.text == "echo 9\n"
        assert dag.nodes["tuned-0/cb::r"].script.text == "echo 9\n"


def make_raw_dag(node_ids, edges, run_id="t") -> TaskDag:
    nodes = {
        tid: TaskNode(
            id=tid,
            machine=tid.split("/", 1)[0],
            recipe=tid.split("/", 1)[1],
            script=ExecutableScript(recipe_id=tid.split("/", 1)[1], text=""),
            phase="run",
        )
        for tid in node_ids
    }
    return TaskDag(run_id=run_id, definition_hash="x", nodes=nodes, edges=sorted(set(edges)))


def random_dag(rng: random.Random, max_nodes: int = 50) -> TaskDag:
    n = rng.randint(1, max_nodes)
    ids = [f"m{i}/cb::r{i}" for i in range(n)]
    edges = []
    for j in range(n):
        for i in range(j):
            if rng.random() < min(0.15, 4.0 / max(j, 1)):
                edges.append((ids[i], ids[j]))
    return make_raw_dag(ids, edges)


class TestTopologicalPlan:
    def test_stage_is_longest_dependency_path(self):
        # diamond with a long tail: d's longest path runs through the b-c chain
        dag = make_raw_dag(
            ["m/cb::a", "m/cb::b", "m/cb::c", "m/cb::d"],
            [
                ("m/cb::a", "m/cb::b"),
                ("m/cb::b", "m/cb::c"),
                ("m/cb::a", "m/cb::d"),
                ("m/cb::c", "m/cb::d"),
            ],
        )
        plan = topological_plan(dag)
        assert plan == [["m/cb::a"], ["m/cb::b"], ["m/cb::c"], ["m/cb::d"]]

    def test_empty_dag(self):
        assert topological_plan(make_raw_dag([], [])) == []

    def test_plan_properties_random(self):
        rng = random.Random(21)
        for _ in range(50):
            dag = random_dag(rng, max_nodes=30)
            plan = topological_plan(dag)
            stage_of = {tid: k for k, stage in enumerate(plan) for tid in stage}
            assert sorted(stage_of) == sorted(dag.nodes)
            parents = {tid: [] for tid in dag.nodes}
            for a, b in dag.edges:
                assert stage_of[a] < stage_of[b]
                parents[b].append(a)
            for tid, k in stage_of.items():
                if k == 0:
                    assert not parents[tid]
                else:  # longest-path: some parent sits exactly one stage up
                    assert max(stage_of[p] for p in parents[tid]) == k - 1


class TestExecute:
    def test_respects_edges_and_parallelism(self):
        rng = random.Random(3)
        for parallelism in (1, 2, 8):
            dag = random_dag(rng, max_nodes=25)
            ex = FakeExecutor(delay_s=0.001)
            outcome = execute(dag, ex, parallelism=parallelism)
            assert outcome.succeeded
            order = {}
            for pos, (event, key) in enumerate(ex.events):
                order.setdefault((event, key), pos)
            for a, b in dag.edges:
                assert order[("finish", a)] < order[("start", b)], (a, b)
            assert ex.max_concurrent <= parallelism

    def test_failure_skips_transitive_dependents(self):
        ids = [f"m{i}/cb::r{i}" for i in range(5)]
        # 0 -> 1 -> 2, 0 -> 3, 4 independent; fail 1
        dag = make_raw_dag(ids, [(ids[0], ids[1]), (ids[1], ids[2]), (ids[0], ids[3])])
        ex = FakeExecutor(fail={"m1/cb::r1"})
        outcome = execute(dag, ex, parallelism=2)
        states = {tid: node.state for tid, node in dag.nodes.items()}
        assert states[ids[0]] == "succeeded"
        assert states[ids[1]] == "failed"
        assert states[ids[2]] == "skipped"
        assert states[ids[3]] == "succeeded"
        assert states[ids[4]] == "succeeded"
        assert not outcome.succeeded
        assert outcome.record.phase == "failed"

    def test_all_success_phase_done(self):
        dag = make_raw_dag(["a/cb::x", "b/cb::y"], [])
        outcome = execute(dag, FakeExecutor(), parallelism=2)
        assert outcome.record.phase == "done"
        assert outcome.record.all_succeeded()
        for snap in outcome.record.tasks:
            assert snap.exit_code == 0
            assert snap.started_ms is not None
            assert snap.finished_ms is not None
            assert snap.finished_ms >= snap.started_ms

    def test_abort_marks_pending_skipped(self):
        ids = [f"m{i}/cb::r{i}" for i in range(6)]
        chain = [(ids[i], ids[i + 1]) for i in range(5)]
        dag = make_raw_dag(ids, chain)
        abort = threading.Event()
        ex = FakeExecutor(delay_s=0.05)
        result = {}

        def run():
            result["outcome"] = execute(dag, ex, parallelism=1, abort_event=abort)

        t = threading.Thread(target=run)
        t.start()
        time.sleep(0.08)  # let the first task or two run
        abort.set()
        t.join(timeout=10)
        assert not t.is_alive()
        outcome = result["outcome"]
        assert outcome.record.phase == "aborted"
        assert ex.aborted
        states = [n.state for n in dag.nodes.values()]
        assert "skipped" in states
        assert all(s in ("succeeded", "failed", "skipped") for s in states)

    def test_executor_exception_counts_as_failure(self):
        class Broken(FakeExecutor):
            def run_task(self, machine, script, timeout_ms=None, env=None):
                raise RuntimeError("transport down")

        dag = make_raw_dag(["a/cb::x", "a/cb::y"], [("a/cb::x", "a/cb::y")])
        outcome = execute(dag, Broken(), parallelism=1)
        assert dag.nodes["a/cb::x"].state == "failed"
        assert dag.nodes["a/cb::x"].exit_code == -1
        assert dag.nodes["a/cb::y"].state == "skipped"
        assert not outcome.succeeded

    def test_task_env_passed_through(self):
        seen = {}

        class Capture(FakeExecutor):
            def run_task(self, machine, script, timeout_ms=None, env=None):
                seen.update(env or {})
                return super().run_task(machine, script, timeout_ms, env)

        dag = make_raw_dag(["a/cb::x"], [])
        execute(dag, Capture(), parallelism=1, task_env={"BF_RUN_ID": "r-9"})
        assert seen.get("BF_RUN_ID") == "r-9"

    def test_parallelism_must_be_positive(self):
        dag = make_raw_dag(["a/cb::x"], [])
        with pytest.raises(DagError):
            execute(dag, FakeExecutor(), parallelism=0)


class TestPlanDocument:
    def test_shape(self, tmp_path):
        recipes = {"a": ("setup", []), "b": ("run", [("a", "same-machine")])}
        d, reg = make_definition(tmp_path, [("g", 2, ["a", "b"])], recipes)
        doc = plan_document(d, reg)
        assert set(doc) == {"nodes", "edges", "stages"}
        ids = {n["id"] for n in doc["nodes"]}
        assert ids == {"g-0/cb::a", "g-0/cb::b", "g-1/cb::a", "g-1/cb::b"}
        stage_of = {n["id"]: n["stage"] for n in doc["nodes"]}
        for a, b in doc["edges"]:
            assert stage_of[a] < stage_of[b]
        assert doc["stages"][0] == sorted([t for t, s in stage_of.items() if s == 0])
