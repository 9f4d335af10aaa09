from __future__ import annotations

import csv
import itertools
import random

import networkx as nx
import pytest
from networkx.algorithms.isomorphism import categorical_node_match

from logprophet.analysis import (
    canonical_form,
    cluster_pgs,
    layer_breakdown,
    pg_stats,
    write_reports,
)
from logprophet.graph_builder import Edge, ProblemGraph, Vertex

TIERS = {"t1": "TOR", "t2": "TOR", "a1": "AGG", "c1": "CORE"}


def pg(id_, verts, edges, devices=None, times=None):
    devices = devices or {}
    times = times or {}
    vs = {}
    for v, count in verts.items():
        first, last = times.get(v, (0.0, 0.0))
        vs[v] = Vertex(v, tuple(devices.get(v, ("t1",))), count, first, last, ())
    return ProblemGraph(id_, (0.0, 0.0), vs, {e: Edge(1.0, ("WITHIN_DEVICE",)) for e in edges})


def relabel(g: ProblemGraph, mapping: dict, new_id: str) -> ProblemGraph:
    vs = {mapping[t]: Vertex(mapping[t], v.devices, v.count, v.first, v.last, v.events) for t, v in g.vertices.items()}
    es = {(mapping[u], mapping[v]): e for (u, v), e in g.edges.items()}
    return ProblemGraph(new_id, g.window, vs, es)


class Labels:
    """Dictionary stand-in: several template ids can share one label text."""

    def __init__(self, text):
        self.text = text

    def __contains__(self, tid):
        return tid in self.text

    def __getitem__(self, tid):
        from types import SimpleNamespace
        from logprophet.templates import StackLayer

        return SimpleNamespace(text=self.text[tid], stack_layer=StackLayer.PHY, signature=(self.text[tid],))


def test_edge_insertion_order_irrelevant():
    a = pg("a", {0: 1, 1: 1, 2: 1}, [(0, 1), (1, 2)])
    b = pg("b", {2: 1, 1: 1, 0: 1}, [(1, 2), (0, 1)])
    assert canonical_form(a) == canonical_form(b)


def test_swapped_labels_distinct():
    assert canonical_form(pg("a", {0: 1, 1: 1}, [(0, 1)])) != canonical_form(pg("b", {0: 1, 1: 1}, [(1, 0)]))


def test_identical_and_distinct_clusters():
    same = [pg(f"p{i}", {0: 1, 1: 1}, [(0, 1)]) for i in range(5)]
    assert len(cluster_pgs(same)) == 1 and cluster_pgs(same)[0].members == [f"p{i}" for i in range(5)]
    distinct = [pg(f"q{i}", {i: 1}, []) for i in range(6)]
    assert len(cluster_pgs(distinct)) == 6


def test_cluster_order_largest_first():
    pgs = [pg("x", {0: 1}, []), pg("y1", {1: 1}, []), pg("y2", {1: 1}, [])]
    classes = cluster_pgs(pgs)
    assert [len(c.members) for c in classes] == [2, 1] and classes[0].exemplar == "y1"


def test_vertices_compared_by_label():
    d = Labels({0: "A", 1: "B", 10: "A", 11: "B"})
    x = pg("x", {0: 1, 1: 1}, [(0, 1)])
    y = pg("y", {10: 1, 11: 1}, [(10, 11)])
    assert canonical_form(x) != canonical_form(y)
    assert canonical_form(x, d) == canonical_form(y, d)


def test_symmetric_graph_needs_permutation_search():
    # two same-label vertices that colour refinement cannot separate
    d = Labels({0: "X", 1: "X", 2: "X", 3: "X"})
    ring_a = pg("a", {0: 1, 1: 1, 2: 1, 3: 1}, [(0, 1), (1, 0), (2, 3), (3, 2)])
    ring_b = pg("b", {0: 1, 1: 1, 2: 1, 3: 1}, [(0, 2), (2, 0), (1, 3), (3, 1)])
    cycle = pg("c", {0: 1, 1: 1, 2: 1, 3: 1}, [(0, 1), (1, 2), (2, 3), (3, 0), (1, 0), (2, 1), (3, 2), (0, 3)])
    assert canonical_form(ring_a, d) == canonical_form(ring_b, d) != canonical_form(cycle, d)


def _nx(g, d):
    h = g.digraph()
    nx.set_node_attributes(h, {v: d[v].text for v in g.vertices}, "label")
    return h


def test_partition_matches_isomorphism_oracle():
    rng = random.Random(5)
    d = Labels({i: "ABC"[i % 3] for i in range(6)})
    pgs = []
    for k in range(60):
        n = rng.randint(1, 4)
        tids = rng.sample(range(6), n)
        edges = [(u, v) for u, v in itertools.product(tids, tids) if rng.random() < 0.3]
        pgs.append(pg(f"r{k}", {t: 1 for t in tids}, edges))
    classes = cluster_pgs(pgs, d, normalize=False)
    by_id = {p.id: p for p in pgs}
    cls_of = {m: i for i, c in enumerate(classes) for m in c.members}
    match = categorical_node_match("label", None)
    for a, b in itertools.combinations(pgs, 2):
        iso = nx.is_isomorphic(_nx(a, d), _nx(b, d), node_match=match)
        assert iso == (cls_of[a.id] == cls_of[b.id]), (a.id, b.id)
    assert sorted(m for c in classes for m in c.members) == sorted(by_id)


def test_cross_tier_counted_per_tier():
    g = pg("x", {0: 1, 1: 1}, [(0, 1)], devices={0: ("t1",), 1: ("a1",)})
    lb = layer_breakdown([g, pg("y", {0: 1}, [])], TIERS)
    assert lb.tiers["TOR"] == 2 and lb.tiers["AGG"] == 1 and lb.cross_tier == 1 and lb.total == 2
    assert lb.share("TOR") == 1.0 and lb.share("AGG") == 0.5


def test_unknown_device_tier():
    lb = layer_breakdown([pg("x", {0: 1}, [], devices={0: ("ghost",)})], TIERS)
    assert lb.tiers["UNKNOWN"] == 1


def test_empty_corpus_zeros():
    lb = layer_breakdown([], TIERS)
    assert lb.total == 0 and set(lb.tiers.values()) == {0} and lb.share("TOR") == 0.0
    assert cluster_pgs([]) == []


def test_pg_stats_examples():
    single = pg("s", {0: 1}, [], times={0: (5.0, 5.0)})
    assert (pg_stats(single).duration_seconds, pg_stats(single).message_count) == (0.0, 1)
    three = pg("t", {0: 1, 1: 1, 2: 1}, [(0, 1), (1, 2)], times={0: (0.0, 0.0), 1: (4.0, 4.0), 2: (12.0, 12.0)})
    three.roots = (0,)
    s = pg_stats(three)
    assert (s.duration_seconds, s.message_count, s.device_count, s.root_templates) == (12.0, 3, 1, (0,))
    dup = pg("d", {0: 50}, [(0, 0)], times={0: (0.0, 1.0)})
    s = pg_stats(dup)
    assert (s.duration_seconds, s.message_count) == (1.0, 50)


def test_reports_deterministic(tmp_path):
    from _pipeline import run_builtin
    from logprophet.causality import CausalityConfig, build_causality_matrix
    from logprophet.graph_builder import build_pgs

    run = run_builtin("default")
    M, _ = build_causality_matrix(run.events, run.model, CausalityConfig(), len(run.dictionary))
    pgs = build_pgs(run.events, M)
    s1 = write_reports(tmp_path / "a", pgs, run.dictionary, run.model)
    s2 = write_reports(tmp_path / "b", list(pgs), run.dictionary, run.model)
    assert s1 == s2 and s1["pgs"] == len(pgs)
    for name in ("tiers.csv", "layers.csv", "classes.csv", "class_stats.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = list(csv.DictReader((tmp_path / "a" / "classes.csv").open()))
    assert sum(int(r["members"]) for r in rows) == len(pgs)
    assert len(list((tmp_path / "a" / "exemplars").glob("*.dot"))) == len(rows)


def test_normalized_form_merges_vendor_dialects():
    from _pipeline import run_builtin
    from logprophet.templates import semantic_label

    d = run_builtin("default").dictionary
    by_label = {}
    for t in d.templates:
        by_label.setdefault(semantic_label(t), []).append(t.id)
    a0, a1 = by_label["HW:module_failure"]
    b0, b1 = by_label["L2:link_down"]
    x = pg("x", {a0: 1, b0: 1}, [(a0, b0)])
    y = pg("y", {a1: 1, b1: 1}, [(a1, b1)])
    assert canonical_form(x, d) != canonical_form(y, d)
    assert canonical_form(x, d, normalize=True) == canonical_form(y, d, normalize=True)
    assert len(cluster_pgs([x, y], d, normalize=True)) == 1
