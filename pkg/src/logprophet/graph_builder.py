"""Online stage: window the template-event stream and turn each window into
Problem Graphs (PGs) using the causality matrix M."""

from __future__ import annotations

import logging
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import networkx as nx

from ._io import canonical_json
from .causality import WITHIN_DEVICE, CausalityMatrix
from .errors import UnknownTemplate
from .templates import StackLayer, TemplateDictionary, TemplateEvent, semantic_label

log = logging.getLogger(__name__)

PG_SCHEMA_VERSION = 1
DUPLICATE = "DUPLICATE"

LAYER_COLORS = {
    StackLayer.HW.value: "firebrick",
    StackLayer.PHY.value: "darkorange",
    StackLayer.L2.value: "gold",
    StackLayer.L3.value: "forestgreen",
    StackLayer.L4.value: "steelblue",
    StackLayer.OTHER.value: "gray",
}


class Emission(str, Enum):
    TUMBLING = "TUMBLING"
    GAP_BASED = "GAP_BASED"


@dataclass(frozen=True)
class WindowConfig:
    """``delta`` is the tumbling width, and the longest a gap-based window may
    stay open on a stream that never goes quiet."""

    delta: float = 300.0
    emission: Emission = Emission.GAP_BASED
    gap: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "emission", Emission(self.emission))
        if self.delta <= 0 or self.gap <= 0:
            raise ValueError("delta and gap must be positive")


@dataclass
class Window:
    index: int
    start: float
    end: float
    events: list[TemplateEvent]


@dataclass(frozen=True)
class Vertex:
    template: int
    devices: tuple[str, ...]
    count: int
    first: float
    last: float
    events: tuple[int, ...]  # raw indices of the syslog lines folded in

    def to_dict(self) -> dict:
        return {
            "template": self.template, "devices": list(self.devices), "count": self.count,
            "first": self.first, "last": self.last, "events": list(self.events),
        }


@dataclass(frozen=True)
class Edge:
    lag: float  # smallest contributing event-pair lag
    channels: tuple[str, ...]
    support: int = 1


@dataclass
class ProblemGraph:
    id: str
    window: tuple[float, float]
    vertices: dict[int, Vertex]
    edges: dict[tuple[int, int], Edge] = field(default_factory=dict)
    roots: tuple[int, ...] = ()
    cyclic: bool = False
    ambiguous: bool = False

    @property
    def message_count(self) -> int:
        return sum(v.count for v in self.vertices.values())

    @property
    def devices(self) -> set[str]:
        return {d for v in self.vertices.values() for d in v.devices}

    @property
    def self_loops(self) -> set[int]:
        return {u for u, v in self.edges if u == v}

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.vertices)
        g.add_edges_from(self.edges)
        return g

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "schema_version": PG_SCHEMA_VERSION,
            "window": list(self.window),
            "vertices": [v.to_dict() for _, v in sorted(self.vertices.items())],
            "edges": [
                {"src": u, "dst": v, "lag": e.lag, "channels": list(e.channels), "support": e.support}
                for (u, v), e in sorted(self.edges.items())
            ],
            "roots": list(self.roots),
            "cyclic": self.cyclic,
            "ambiguous": self.ambiguous,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemGraph":
        verts = {}
        for v in d["vertices"]:
            verts[v["template"]] = Vertex(v["template"], tuple(v["devices"]), v["count"], v["first"], v["last"], tuple(v["events"]))
        edges = {(e["src"], e["dst"]): Edge(e["lag"], tuple(e["channels"]), e["support"]) for e in d["edges"]}
        return cls(d["id"], tuple(d["window"]), verts, edges, tuple(d["roots"]), d["cyclic"], d["ambiguous"])

    def dumps(self) -> str:
        return canonical_json(self.to_dict())


# --------------------------------------------------------------------------
# windows


def window_stream(events: Iterable[TemplateEvent], cfg: WindowConfig = WindowConfig()) -> Iterator[Window]:
    """Partition a time-sorted event stream into windows."""
    cur: list[TemplateEvent] = []
    start = 0.0
    idx = 0
    for ev in events:
        t = ev.timestamp
        if cur:
            if cfg.emission is Emission.TUMBLING:
                closes = t >= start + cfg.delta
            else:
                closes = t - cur[-1].timestamp > cfg.gap or t - start >= cfg.delta
            if closes:
                yield _close(idx, start, cur, cfg)
                idx += 1
                cur = []
        if not cur:
            start = (t // cfg.delta) * cfg.delta if cfg.emission is Emission.TUMBLING else t
        cur.append(ev)
    if cur:
        yield _close(idx, start, cur, cfg)


def _close(idx: int, start: float, evs: list[TemplateEvent], cfg: WindowConfig) -> Window:
    if cfg.emission is Emission.TUMBLING:
        end = start + cfg.delta
    else:
        end = evs[-1].timestamp
    return Window(idx, start, end, evs)


# --------------------------------------------------------------------------
# PG construction


def _predecessors(M: CausalityMatrix) -> dict[int, list[tuple[int, list[str], float]]]:
    """effect -> [(cause, channels, widest lag)] from M's entries."""
    out: dict[int, list] = {}
    for (i, j) in sorted(M.entries):
        rules = M.rules(i, j)
        chans = [ch for ch, _ in rules]
        widest = 0.0
        for ch, lag in rules:
            widest = max(widest, M.intra_lag if ch == WITHIN_DEVICE else lag)
        if M.channel_edges:
            for ch in chans:
                if ch != WITHIN_DEVICE:
                    widest = max(widest, max(M.channel_edges.get(ch, {}).values(), default=0.0))
        out.setdefault(j, []).append((i, chans, widest))
    return out


def build_pre_merge(
    events: Sequence[TemplateEvent],
    M: CausalityMatrix,
    window: tuple[float, float] = (0.0, 0.0),
    chain_duplicates: bool = True,
    dup_lag: float | None = None,
    on_unknown: str = "raise",
    preds: dict | None = None,
) -> tuple[ProblemGraph, int]:
    """One vertex per event; edges from nearest-preceding causes. Returns the
    graph and the number of events rejected as unknown templates."""
    if preds is None:
        preds = _predecessors(M)
    dup_lag = M.intra_lag if dup_lag is None else dup_lag
    kept: list[TemplateEvent] = []
    rejected = 0
    for ev in events:
        if not 0 <= ev.template_id < M.n:
            if on_unknown == "raise":
                raise UnknownTemplate(f"template {ev.template_id} not in the dictionary M was built on", template=ev.template_id)
            rejected += 1
            continue
        kept.append(ev)

    by_tid: dict[int, tuple[list[float], list[int]]] = {}
    for q, ev in enumerate(kept):
        ts, ps = by_tid.setdefault(ev.template_id, ([], []))
        ts.append(ev.timestamp)
        ps.append(q)

    verts = {
        q: Vertex(ev.template_id, (ev.device,), 1, ev.timestamp, ev.timestamp, (ev.raw_index,))
        for q, ev in enumerate(kept)
    }
    edges: dict[tuple[int, int], Edge] = {}
    last_same: dict[tuple[int, str], int] = {}
    for q, y in enumerate(kept):
        ty = y.timestamp
        for i, chans, widest in preds.get(y.template_id, ()):
            if i not in by_tid:
                continue
            ts, ps = by_tid[i]
            k = bisect_right(ts, ty) - 1
            while k >= 0:
                x = kept[ps[k]]
                dt = ty - x.timestamp
                if dt > widest:
                    break
                if ps[k] != q:
                    hit = [
                        ch for ch in chans
                        if (b := M.lag_bound(ch, x.device, y.device)) is not None
                        and dt <= b
                        and (ch != WITHIN_DEVICE or ps[k] < q)
                    ]
                    if hit:
                        edges[(ps[k], q)] = Edge(dt, tuple(hit))
                        break
                k -= 1
        if chain_duplicates:
            key = (y.template_id, y.device)
            p = last_same.get(key)
            if p is not None and ty - kept[p].timestamp <= dup_lag:
                edges[(p, q)] = Edge(ty - kept[p].timestamp, (DUPLICATE,))
            last_same[key] = q
    return ProblemGraph("pre", window, verts, edges), rejected


def merge_duplicates(g: ProblemGraph) -> ProblemGraph:
    """Collapse vertices sharing a template id; edges between collapsed
    same-template vertices become self-loops."""
    groups: dict[int, list[Vertex]] = {}
    owner: dict[int, int] = {}
    for vid, v in g.vertices.items():
        groups.setdefault(v.template, []).append(v)
        owner[vid] = v.template
    verts = {}
    for tid, vs in groups.items():
        verts[tid] = Vertex(
            tid,
            tuple(sorted({d for v in vs for d in v.devices})),
            sum(v.count for v in vs),
            min(v.first for v in vs),
            max(v.last for v in vs),
            tuple(sorted(e for v in vs for e in v.events)),
        )
    edges: dict[tuple[int, int], Edge] = {}
    for (a, b), e in g.edges.items():
        key = (owner[a], owner[b])
        prev = edges.get(key)
        if prev is None:
            edges[key] = e
        else:
            edges[key] = Edge(min(prev.lag, e.lag), tuple(sorted(set(prev.channels) | set(e.channels))), prev.support + e.support)
    out = ProblemGraph(g.id, g.window, verts, edges, cyclic=g.cyclic, ambiguous=g.ambiguous)
    return out


def resolve_direction(g: ProblemGraph) -> ProblemGraph:
    """Where both u->v and v->u exist keep the one with the smaller lag;
    on a tie keep both and flag the PG ambiguous."""
    edges = dict(g.edges)
    ambiguous = g.ambiguous
    for (u, v) in sorted(g.edges):
        if u >= v or (v, u) not in edges or (u, v) not in edges:
            continue
        a, b = edges[(u, v)].lag, edges[(v, u)].lag
        if a < b:
            del edges[(v, u)]
        elif b < a:
            del edges[(u, v)]
        else:
            ambiguous = True
    return ProblemGraph(g.id, g.window, g.vertices, edges, g.roots, g.cyclic, ambiguous)


def roots(pg: ProblemGraph) -> tuple[tuple[int, ...], bool]:
    """Root vertices and whether a non-self cycle forced the fallback.

    A vertex is a root when no other vertex points at it. A cycle with no
    incoming edges from outside contributes its earliest vertex instead."""
    g = pg.digraph()
    g.remove_edges_from(list(nx.selfloop_edges(g)))
    cond = nx.condensation(g)
    out, cyclic = [], False
    for c in cond.nodes:
        if cond.in_degree(c):
            continue
        members = cond.nodes[c]["members"]
        if len(members) == 1:
            out.append(next(iter(members)))
        else:
            cyclic = True
            out.append(min(members, key=lambda t: (pg.vertices[t].first, t)))
    return tuple(sorted(out)), cyclic


def split_components(pg: ProblemGraph) -> list[ProblemGraph]:
    g = pg.digraph()
    comps = sorted(
        (sorted(c) for c in nx.weakly_connected_components(g)),
        key=lambda c: (min(pg.vertices[t].first for t in c), c[0]),
    )
    out = []
    for k, comp in enumerate(comps):
        cs = set(comp)
        sub = ProblemGraph(
            f"{pg.id}.{k}",
            pg.window,
            {t: pg.vertices[t] for t in comp},
            {e: v for e, v in pg.edges.items() if e[0] in cs},
        )
        sub.ambiguous = any((v, u) in sub.edges for (u, v) in sub.edges if u != v)
        sub.roots, sub.cyclic = roots(sub)
        out.append(sub)
    return out


def build_pg(
    window: Window | Sequence[TemplateEvent],
    M: CausalityMatrix,
    chain_duplicates: bool = True,
    on_unknown: str = "raise",
    preds: dict | None = None,
) -> list[ProblemGraph]:
    """All PGs for one window: connect, merge, resolve direction, split."""
    if not isinstance(window, Window):
        evs = list(window)
        window = Window(0, evs[0].timestamp if evs else 0.0, evs[-1].timestamp if evs else 0.0, evs)
    pre, _ = build_pre_merge(
        window.events, M, (window.start, window.end), chain_duplicates, on_unknown=on_unknown, preds=preds
    )
    pre.id = f"w{window.index}"
    merged = resolve_direction(merge_duplicates(pre))
    return split_components(merged)


class StreamingBuilder:
    """Incremental PG construction: feed chunks of the event stream, collect
    PGs as their windows close."""

    def __init__(self, M: CausalityMatrix, cfg: WindowConfig = WindowConfig(), chain_duplicates: bool = True):
        self.M = M
        self.cfg = cfg
        self.chain_duplicates = chain_duplicates
        self.preds = _predecessors(M)
        self._pending: list[TemplateEvent] = []
        self._index = 0
        self.rejected = 0

    def _emit(self, windows: list[Window]) -> list[ProblemGraph]:
        out = []
        for w in windows:
            w.index = self._index
            self._index += 1
            pre, rej = build_pre_merge(
                w.events, self.M, (w.start, w.end), self.chain_duplicates, on_unknown="skip", preds=self.preds
            )
            self.rejected += rej
            pre.id = f"w{w.index}"
            out.extend(split_components(resolve_direction(merge_duplicates(pre))))
        return out

    def feed(self, events: Iterable[TemplateEvent]) -> list[ProblemGraph]:
        self._pending.extend(events)
        windows = list(window_stream(self._pending, self.cfg))
        if len(windows) <= 1:
            return []
        # the last window may still grow
        self._pending = windows[-1].events
        return self._emit(windows[:-1])

    def flush(self) -> list[ProblemGraph]:
        windows = list(window_stream(self._pending, self.cfg))
        self._pending = []
        return self._emit(windows)


def build_pgs(
    events: Iterable[TemplateEvent],
    M: CausalityMatrix,
    cfg: WindowConfig = WindowConfig(),
    workers: int = 1,
    chain_duplicates: bool = True,
    on_unknown: str = "skip",
) -> list[ProblemGraph]:
    """Batch PG construction over a whole stream. Windows are independent,
    so they may be built concurrently; output order follows the stream."""
    preds = _predecessors(M)
    windows = list(window_stream(events, cfg))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = pool.map(lambda w: build_pg(w, M, chain_duplicates, on_unknown, preds), windows)
        return [pg for part in parts for pg in part]


# --------------------------------------------------------------------------
# output


def to_dot(pg: ProblemGraph, dictionary: TemplateDictionary | None = None) -> str:
    lines = [f'digraph "{pg.id}" {{', "  node [style=filled, shape=box];"]
    for tid, v in sorted(pg.vertices.items()):
        if dictionary is not None and tid in dictionary:
            tpl = dictionary[tid]
            label = f"{tpl.text}\\n{semantic_label(tpl)} x{v.count}"
            color = LAYER_COLORS.get(tpl.stack_layer.value, "gray")
        else:
            label, color = f"t{tid} x{v.count}", "gray"
        label = label.replace('"', '\\"')
        shape = ", peripheries=2" if tid in pg.roots else ""
        lines.append(f'  t{tid} [label="{label}", fillcolor={color}{shape}];')
    for (u, v), e in sorted(pg.edges.items()):
        lines.append(f'  t{u} -> t{v} [label="{e.lag:g}s"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
