"""Clustering and longitudinal statistics over Problem Graphs."""

from __future__ import annotations

import csv
import hashlib
import itertools
import logging
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ._io import canonical_json
from .domain_model import DomainModel
from .graph_builder import ProblemGraph, to_dot
from .templates import TemplateDictionary, semantic_label

log = logging.getLogger(__name__)

TIER_ORDER = ("TOR", "AGG", "CORE", "MB", "UNKNOWN")
MAX_PERMUTATIONS = 40320  # 8! orderings inside one stubborn colour class


@dataclass(frozen=True)
class PgSignature:
    canonical_form: str
    layer_profile: tuple[tuple[str, int], ...]
    tier_profile: tuple[str, ...]

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical_form.encode()).hexdigest()[:16]


@dataclass
class PgClass:
    signature: PgSignature
    members: list[str]
    exemplar: str


@dataclass(frozen=True)
class PgStats:
    duration_seconds: float
    message_count: int
    device_count: int
    root_templates: tuple[int, ...]


def _tier_lookup(tiers: DomainModel | Mapping[str, str] | None) -> Mapping[str, str]:
    if tiers is None:
        return {}
    if isinstance(tiers, DomainModel):
        return {d: info["tier"] for d, info in tiers.devices.items()}
    return tiers


def vertex_label(tid: int, dictionary: TemplateDictionary | None, normalize: bool) -> str:
    if dictionary is None or tid not in dictionary:
        return f"t{tid}"
    tpl = dictionary[tid]
    return semantic_label(tpl) if normalize else tpl.text


def _refine(nodes: list[int], labels: dict[int, str], succ: dict, pred: dict) -> dict[int, str]:
    """Colour refinement (1-WL) seeded with vertex labels."""
    colour = dict(labels)
    n_classes = len(set(colour.values()))
    while True:
        sig = {
            v: canonical_json([colour[v], sorted(colour[w] for w in succ[v]), sorted(colour[w] for w in pred[v])])
            for v in nodes
        }
        palette = {s: i for i, s in enumerate(sorted(set(sig.values())))}
        # palette indices come from sorted signatures, so they are invariant
        # under relabelling and comparable across isomorphic graphs
        nxt = {v: f"{labels[v]}#{palette[sig[v]]:04d}" for v in nodes}
        if len(set(nxt.values())) == n_classes:
            return colour
        colour, n_classes = nxt, len(set(nxt.values()))


def canonical_form(
    pg: ProblemGraph,
    dictionary: TemplateDictionary | None = None,
    tiers: DomainModel | Mapping[str, str] | None = None,
    normalize: bool = False,
) -> PgSignature:
    """Order-independent encoding of the labelled digraph.

    Vertices are labelled by template signature (or by semantic label when
    *normalize* is set). Refinement splits most vertices apart; the remaining
    ties are broken by trying every ordering inside each colour class and
    keeping the smallest encoding, which makes the form exact.
    """
    nodes = sorted(pg.vertices)
    labels = {v: vertex_label(v, dictionary, normalize) for v in nodes}
    succ = {v: set() for v in nodes}
    pred = {v: set() for v in nodes}
    for u, v in pg.edges:
        succ[u].add(v)
        pred[v].add(u)
    colour = _refine(nodes, labels, succ, pred)
    classes: dict[str, list[int]] = {}
    for v in nodes:
        classes.setdefault(colour[v], []).append(v)
    keys = sorted(classes)
    total = math.prod(math.factorial(len(classes[k])) for k in keys)
    if total > MAX_PERMUTATIONS:
        log.warning("PG %s: %d orderings to try for canonical form", pg.id, total)
    best = None
    for perm in itertools.product(*(itertools.permutations(classes[k]) for k in keys)):
        order = [v for block in perm for v in block]
        pos = {v: i for i, v in enumerate(order)}
        enc = canonical_json([[labels[v] for v in order], sorted([pos[u], pos[v]] for u, v in pg.edges)])
        if best is None or enc < best:
            best = enc
    best = best if best is not None else canonical_json([[], []])

    layers: Counter = Counter()
    for v in nodes:
        if dictionary is not None and v in dictionary:
            layers[dictionary[v].stack_layer.value] += 1
    lookup = _tier_lookup(tiers)
    tier_set = sorted({lookup.get(d, "UNKNOWN") for d in pg.devices}) if lookup else []
    return PgSignature(best, tuple(sorted(layers.items())), tuple(tier_set))


def cluster_pgs(
    pgs: Sequence[ProblemGraph],
    dictionary: TemplateDictionary | None = None,
    normalize: bool = False,
    signatures: Sequence[PgSignature] | None = None,
) -> list[PgClass]:
    """Exact grouping by canonical form, largest class first."""
    if signatures is None:
        signatures = [canonical_form(pg, dictionary, normalize=normalize) for pg in pgs]
    groups: dict[str, tuple[PgSignature, list[str]]] = {}
    for pg, sig in zip(pgs, signatures):
        groups.setdefault(sig.canonical_form, (sig, []))[1].append(pg.id)
    classes = [PgClass(sig, members, members[0]) for sig, members in groups.values()]
    classes.sort(key=lambda c: (-len(c.members), c.signature.canonical_form.encode()))
    return classes


@dataclass
class LayerBreakdown:
    tiers: dict[str, int] = field(default_factory=lambda: {t: 0 for t in TIER_ORDER})
    cross_tier: int = 0
    layers: dict[str, int] = field(default_factory=dict)
    total: int = 0

    def share(self, tier: str) -> float:
        return self.tiers.get(tier, 0) / self.total if self.total else 0.0


def layer_breakdown(
    pgs: Iterable[ProblemGraph],
    tiers: DomainModel | Mapping[str, str],
    dictionary: TemplateDictionary | None = None,
) -> LayerBreakdown:
    """Count PGs per tier and per stack layer. A PG is attributed to every
    tier (and layer) it touches; multi-tier PGs are also counted as cross-tier."""
    lookup = _tier_lookup(tiers)
    out = LayerBreakdown()
    warned: set[str] = set()
    for pg in pgs:
        out.total += 1
        touched = set()
        for d in pg.devices:
            t = lookup.get(d)
            if t is None:
                if d not in warned:
                    log.warning("device %s not in the domain model", d)
                    warned.add(d)
                t = "UNKNOWN"
            touched.add(t)
        for t in touched:
            out.tiers[t] = out.tiers.get(t, 0) + 1
        if len(touched) > 1:
            out.cross_tier += 1
        if dictionary is not None:
            for layer in {dictionary[v].stack_layer.value for v in pg.vertices if v in dictionary}:
                out.layers[layer] = out.layers.get(layer, 0) + 1
    return out


def pg_stats(pg: ProblemGraph) -> PgStats:
    if not pg.vertices:
        return PgStats(0.0, 0, 0, ())
    first = min(v.first for v in pg.vertices.values())
    last = max(v.last for v in pg.vertices.values())
    return PgStats(last - first, pg.message_count, len(pg.devices), tuple(pg.roots))


# --------------------------------------------------------------------------
# reports


def _write_csv(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_reports(
    out_dir: str | Path,
    pgs: Sequence[ProblemGraph],
    dictionary: TemplateDictionary,
    tiers: DomainModel | Mapping[str, str],
) -> dict:
    """Write tier/layer/class tables, per-class stats and exemplar DOT files.
    Returns a summary dict."""
    out = Path(out_dir)
    (out / "exemplars").mkdir(parents=True, exist_ok=True)
    by_id = {pg.id: pg for pg in pgs}
    raw = cluster_pgs(pgs, dictionary)
    norm = cluster_pgs(pgs, dictionary, normalize=True)
    type_of = {m: i for i, c in enumerate(norm) for m in c.members}
    lb = layer_breakdown(pgs, tiers, dictionary)

    _write_csv(out / "tiers.csv", ["tier", "pgs", "share"],
               [[t, lb.tiers.get(t, 0), f"{lb.share(t):.6f}"] for t in TIER_ORDER] + [["CROSS_TIER", lb.cross_tier, ""]])
    _write_csv(out / "layers.csv", ["layer", "pgs"], sorted(lb.layers.items()))
    rows, stat_rows = [], []
    for i, c in enumerate(raw):
        st = [pg_stats(by_id[m]) for m in c.members]
        durs = [s.duration_seconds for s in st]
        lens = [s.message_count for s in st]
        rows.append([i, c.signature.digest, len(c.members), c.exemplar, type_of[c.exemplar]])
        stat_rows.append([
            i, min(durs), statistics.median(durs), max(durs), min(lens), statistics.median(lens), max(lens),
        ])
        (out / "exemplars" / f"class{i:04d}.dot").write_text(to_dot(by_id[c.exemplar], dictionary))
    _write_csv(out / "classes.csv", ["class", "digest", "members", "exemplar", "type"], rows)
    _write_csv(out / "class_stats.csv",
               ["class", "duration_min", "duration_median", "duration_max", "length_min", "length_median", "length_max"],
               stat_rows)
    return {"pgs": len(pgs), "classes": len(raw), "types": len(norm), "tor_share": lb.share("TOR")}
