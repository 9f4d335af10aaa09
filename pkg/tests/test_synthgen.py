from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import pytest

from logprophet.synthgen import (
    CATALOG,
    GroundTruth,
    ScenarioSpec,
    ScoreError,
    SpecError,
    build_topology,
    format_signature,
    generate,
    load_builtin,
    score,
    tier_counts,
)
from logprophet.templates import read_syslog

from _pipeline import run_builtin

ONE_VENDOR = [{"name": "acme", "ratio": 1.0, "os_versions": ["1"]}]


def spec(**kw) -> ScenarioSpec:
    base = {"seed": 3, "duration_days": 1, "vendors": ONE_VENDOR, "noise": {"rate_per_day": 0}}
    base.update(kw)
    return ScenarioSpec.from_dict(base)


@dataclass
class StubMatrix:
    """Minimal stand-in for an inferred matrix: just the edge sets."""

    n: int
    pairs: dict
    dictionary_fingerprint: str = ""

    def edges(self):
        return set(self.pairs)

    def channel_edge_set(self):
        return {(i, j, ch) for (i, j), ch in self.pairs.items()}


def test_zero_rules_zero_noise_empty_corpus():
    sc = generate(spec(rules=[]))
    assert sc.lines == [] and sc.truth.edges == [] and sc.truth.lineage == []


def test_probability_one_rule_pairs_every_cause():
    sc = generate(spec(
        granularity=0.001,
        topology={"k": 1, "devices": 8},
        rules=[{"name": "r", "cause": "module_failure", "effect": "link_down", "tier": "TOR",
                "rate_per_day": 80, "probability": 1.0, "lag": {"kind": "uniform", "min": 1, "bound": 4}}],
    ))
    recs = read_syslog(sc.lines)
    kinds = Counter(l["kind"] for l in sc.truth.lineage)
    assert kinds["cause"] == kinds["effect"] >= 100
    by_id = {l["id"]: l for l in sc.truth.lineage}
    for l in sc.truth.lineage:
        if l["kind"] == "effect":
            cause = by_id[l["parent"]]
            assert cause["device"] == l["device"]
            dt = recs[l["line"]].timestamp - recs[cause["line"]].timestamp
            assert 1 - 1e-3 <= dt <= 4 + 1e-3


def test_same_seed_same_bytes(tmp_path):
    s = load_builtin("default")
    a, b = generate(s), generate(load_builtin("default"))
    assert a.lines == b.lines
    pa, pb = a.write(tmp_path / "a"), b.write(tmp_path / "b")
    for rel in ("syslog.log", "truth.ndjson", "manifest.json", "scenario.json"):
        assert (pa / rel).read_bytes() == (pb / rel).read_bytes()
    s.seed += 1
    assert generate(s).lines != a.lines


@pytest.mark.parametrize("bad,match", [
    ({"topology": {"ratios": {"TOR": 0.5, "AGG": 0.2}}}, "sum to 1"),
    ({"vendors": [{"name": "a", "ratio": 0.4}]}, "vendor ratios"),
    ({"rules": [{"name": "r", "cause": "nope", "effect": "link_down", "tier": "TOR"}]}, "unknown event"),
    ({"rules": [{"name": "r", "cause": "crc_errors", "effect": "link_down", "tier": "TOR",
                 "lag": {"kind": "constant", "value": 100}}]}, "exceeds channel bound"),
    ({"rules": [{"name": "r", "cause": "crc_errors", "effect": "link_down", "tier": "TOR", "probability": 2}]},
     "probability"),
    ({"config_edits": 3}, "two days"),
])
def test_spec_errors(bad, match):
    with pytest.raises(SpecError, match=match):
        generate(spec(**bad))


def test_unknown_spec_key_rejected():
    with pytest.raises(SpecError):
        ScenarioSpec.from_dict({"seed": 1, "bogus": 2})


def test_tier_counts_default_topology():
    assert tier_counts(load_builtin("default").topology) == {"TOR": 52, "AGG": 8, "CORE": 2, "MB": 2}


def test_lineage_is_forest():
    lin = run_builtin("default").scenario.truth.lineage
    ids = {l["id"] for l in lin}
    for l in lin:
        seen = set()
        cur = l
        while cur["parent"] is not None:
            assert cur["parent"] in ids and cur["id"] not in seen
            seen.add(cur["id"])
            cur = next(x for x in lin if x["id"] == cur["parent"]) if len(seen) < 50 else None
            assert cur is not None


def test_catalog_signatures_separable():
    sigs = [format_signature(ev, d) for ev in CATALOG for d in (0, 1)]
    assert len(set(sigs)) == len(sigs)
    for a in sigs:
        for b in sigs:
            if a is not b and len(a) == len(b):
                agree = sum(x == y for x, y in zip(a, b)) / len(a)
                assert agree < 0.75, (a, b)


def test_truth_roundtrip(tmp_path):
    t = run_builtin("default").scenario.truth
    t.write(tmp_path / "t.ndjson")
    back = GroundTruth.read(tmp_path / "t.ndjson")
    assert back.edge_set() == t.edge_set()
    assert back.lineage == t.lineage and back.config_edits == t.config_edits
    assert [tuple(s) for s in back.expected_signatures] == [tuple(s) for s in t.expected_signatures]


def _truth_from_pairs(dictionary, pairs):
    sig = {t.id: list(t.signature) for t in dictionary.templates}
    edges = [{"cause": sig[i], "effect": sig[j], "channel": "WITHIN_DEVICE", "max_lag": 5.0, "rule": "x"}
             for i, j in pairs]
    return GroundTruth(edges=edges, expected_signatures=[])


def test_score_identity_and_partial():
    d = run_builtin("default").dictionary
    planted = [(k, k + 1) for k in range(0, 16, 2)]
    truth = _truth_from_pairs(d, planted)
    s = score(StubMatrix(len(d), {p: "WITHIN_DEVICE" for p in planted}), truth, d)
    assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
    s = score(StubMatrix(len(d), {p: "WITHIN_DEVICE" for p in planted[:7]}), truth, d)
    assert s.precision == 1.0 and s.recall == 7 / 8 and s.fn == 1
    assert s.f1 == pytest.approx(2 * (7 / 8) / (1 + 7 / 8))


def test_score_empty_conventions():
    d = run_builtin("default").dictionary
    s = score(StubMatrix(len(d), {}), _truth_from_pairs(d, [(0, 1)]), d)
    assert s.precision == 1.0 and s.precision_undefined and s.recall == 0.0 and s.f1 == 0.0
    s = score(StubMatrix(len(d), {(0, 1): "WITHIN_DEVICE"}), _truth_from_pairs(d, []), d)
    assert s.recall == 1.0 and s.recall_undefined and s.precision == 0.0


def test_score_rejects_mismatched_dictionary():
    d = run_builtin("default").dictionary
    with pytest.raises(ScoreError):
        score(StubMatrix(len(d) + 1, {}), _truth_from_pairs(d, []), d)
    with pytest.raises(ScoreError):
        score(StubMatrix(len(d), {}, "other"), _truth_from_pairs(d, []), d)
    missing = GroundTruth(expected_signatures=[("no", "such", "template")])
    with pytest.raises(ScoreError):
        score(StubMatrix(len(d), {}), missing, d)


def test_topology_is_connected_and_pods_hold_tors():
    devs = build_topology(load_builtin("default"))
    for d in devs.values():
        assert d.interfaces, d.name
    assert {d.tier for d in devs.values()} == {"TOR", "AGG", "CORE", "MB"}


def test_planted_edits_distinct_slots():
    t = generate(ScenarioSpec.from_dict({**load_builtin("default").to_dict(), "config_edits": 20})).truth
    slots = [(e["device"], e["date"]) for e in t.config_edits]
    assert len(slots) == len(set(slots)) == 20
