"""Offline causality engine: template event history + domain model -> matrix M.

Pipeline per candidate pair (cause template -> effect template on a channel,
within one device context class):

1. candidate generation from lag-bounded co-occurrence along the channel,
2. Spearman correlation of binned counts, gated at ``alpha``,
3. confounding set K: other templates correlated with the cause in the same
   context (vendor, OS, tier, pod),
4. a control template drawn uniformly from K,
5. one-sided two-proportion test (Fisher exact when any cell is below 5)
   comparing how often the effect follows the cause vs. the control, with
   trials matched by config epoch, then Benjamini-Hochberg across all tests.
"""

from __future__ import annotations

import logging
import math
import zlib
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import kernels
from ._io import canonical_json, content_hash, header
from .domain_model import DomainModel
from .errors import LogProphetError, VersionMismatch
from .templates import TemplateEvent

log = logging.getLogger(__name__)

MATRIX_SCHEMA_VERSION = 1
WITHIN_DEVICE = "WITHIN_DEVICE"
PHYSICAL = "PHYSICAL"


def protocol_channel(proto: str) -> str:
    return f"PROTOCOL:{proto}"


class InsufficientData(LogProphetError):
    code = "InsufficientData"


class Underpowered(LogProphetError):
    code = "Underpowered"


class _NoControl:
    def __repr__(self) -> str:
        return "NoControl"

    def __bool__(self) -> bool:
        return False


NoControl = _NoControl()


@dataclass(frozen=True)
class CausalityConfig:
    alpha: float = 0.5
    significance: float = 0.01
    min_support: int = 10
    min_trials: int = 20
    min_bins: int = 30
    intra_lag: float = 5.0
    physical_lag: float = 5.0
    bin_width: float = 10.0
    fdr: bool = True
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")  # execution detail, must not change outputs
        return d


@dataclass(frozen=True, order=True)
class ConfoundingKey:
    vendor: str = "UNKNOWN"
    os_version: str = "UNKNOWN"
    tier: str = "UNKNOWN"
    topology_class: str = "UNKNOWN"
    config_epoch: int = 0

    @property
    def context(self) -> tuple[str, str, str, str]:
        return (self.vendor, self.os_version, self.tier, self.topology_class)


@dataclass(frozen=True, order=True)
class CandidatePair:
    cause: int
    effect: int
    channel: str
    context: tuple[str, str, str, str]
    max_lag: float
    support: int = 0

    @property
    def key(self) -> tuple:
        return (self.cause, self.effect, self.channel, self.context)

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "effect": self.effect,
            "channel": self.channel,
            "context": list(self.context),
            "max_lag": self.max_lag,
            "support": self.support,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidatePair":
        return cls(d["cause"], d["effect"], d["channel"], tuple(d["context"]), d["max_lag"], d["support"])


@dataclass
class CausalTestResult:
    pair: CandidatePair
    correlation: float
    p_value: float
    treated_rate: float
    untreated_rate: float
    treated_trials: int
    untreated_trials: int
    untreated_template: int
    method: str
    accepted: bool = False
    q_value: float | None = None

    def to_dict(self) -> dict:
        return {
            "pair": self.pair.to_dict(),
            "correlation": _r(self.correlation),
            "p_value": _r(self.p_value),
            "q_value": None if self.q_value is None else _r(self.q_value),
            "treated_rate": _r(self.treated_rate),
            "untreated_rate": _r(self.untreated_rate),
            "treated_trials": self.treated_trials,
            "untreated_trials": self.untreated_trials,
            "untreated_template": self.untreated_template,
            "method": self.method,
            "accepted": self.accepted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalTestResult":
        return cls(
            CandidatePair.from_dict(d["pair"]), d["correlation"], d["p_value"], d["treated_rate"],
            d["untreated_rate"], d["treated_trials"], d["untreated_trials"], d["untreated_template"],
            d["method"], d["accepted"], d.get("q_value"),
        )


def _r(x: float) -> float:
    # fixed precision keeps serialization byte-stable across platforms
    return float(f"{x:.12g}")


@dataclass
class CausalityMatrix:
    """Sparse M: ``(i, j) -> accepted test results`` plus the adjacency each
    cross-device channel needs so the online stage can check edges without
    the full domain model."""

    n: int
    entries: dict[tuple[int, int], list[CausalTestResult]] = field(default_factory=dict)
    channel_edges: dict[str, dict[tuple[str, str], float]] = field(default_factory=dict)
    intra_lag: float = 5.0
    dictionary_fingerprint: str | None = None
    config: dict | None = None

    def has(self, i: int, j: int) -> bool:
        return (i, j) in self.entries

    def edges(self) -> set[tuple[int, int]]:
        return set(self.entries)

    def channel_edge_set(self) -> set[tuple[int, int, str]]:
        return {(i, j, r.pair.channel) for (i, j), rs in self.entries.items() for r in rs}

    def rules(self, i: int, j: int) -> list[tuple[str, float]]:
        """Distinct (channel, max_lag) under which ``i -> j`` was accepted."""
        out = {}
        for r in self.entries.get((i, j), ()):
            ch = r.pair.channel
            out[ch] = max(out.get(ch, 0.0), r.pair.max_lag)
        return sorted(out.items())

    def lag_bound(self, channel: str, a: str, b: str) -> float | None:
        """Bound for an event on *a* influencing one on *b*, or None if the
        channel does not connect them."""
        if channel == WITHIN_DEVICE:
            return self.intra_lag if a == b else None
        if a == b:
            return None
        edges = self.channel_edges.get(channel, {})
        return edges.get((a, b) if a <= b else (b, a))

    def add(self, result: CausalTestResult) -> None:
        p = result.pair
        self.entries.setdefault((p.cause, p.effect), []).append(result)

    def to_dict(self) -> dict:
        return {
            "meta": header("causality_matrix", MATRIX_SCHEMA_VERSION, self.config),
            "n": self.n,
            "dictionary_fingerprint": self.dictionary_fingerprint,
            "intra_lag": self.intra_lag,
            "entries": [
                {"cause": i, "effect": j, "tests": [r.to_dict() for r in sorted(rs, key=lambda r: r.pair)]}
                for (i, j), rs in sorted(self.entries.items())
            ],
            "channel_edges": {
                ch: [[a, b, _r(v)] for (a, b), v in sorted(e.items())]
                for ch, e in sorted(self.channel_edges.items())
            },
        }

    def dumps(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "CausalityMatrix":
        meta = doc.get("meta", {})
        if meta.get("kind") != "causality_matrix" or meta.get("schema_version") != MATRIX_SCHEMA_VERSION:
            raise VersionMismatch(f"not a v{MATRIX_SCHEMA_VERSION} causality matrix")
        m = cls(
            n=doc["n"],
            intra_lag=doc.get("intra_lag", 5.0),
            dictionary_fingerprint=doc.get("dictionary_fingerprint"),
            config=meta.get("config"),
        )
        for e in doc["entries"]:
            for t in e["tests"]:
                m.add(CausalTestResult.from_dict(t))
        m.channel_edges = {
            ch: {(a, b): float(v) for a, b, v in edges} for ch, edges in doc.get("channel_edges", {}).items()
        }
        return m

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple[int, int, str, float]],
        model: DomainModel | None = None,
        intra_lag: float = 5.0,
        physical_lag: float = 5.0,
        dictionary_fingerprint: str | None = None,
    ) -> "CausalityMatrix":
        """Build M directly from known ``(cause, effect, channel, max_lag)`` rules,
        e.g. a generator's planted truth."""
        m = cls(n=n, intra_lag=intra_lag, dictionary_fingerprint=dictionary_fingerprint)
        for i, j, ch, lag in edges:
            pair = CandidatePair(i, j, ch, ("*", "*", "*", "*"), float(lag))
            m.add(CausalTestResult(pair, 1.0, 0.0, 1.0, 0.0, 0, 0, -1, "given", True, 0.0))
        if model is not None:
            m.channel_edges = channel_edges(model, {ch for _, _, ch, _ in _iter_chan(m)}, physical_lag)
        return m


def _iter_chan(m: CausalityMatrix):
    for (i, j), rs in m.entries.items():
        for r in rs:
            yield i, j, r.pair.channel, r.pair.max_lag


def channel_edges(model: DomainModel, channels: Iterable[str], physical_lag: float) -> dict:
    out = {}
    for ch in sorted(set(channels)):
        if ch == WITHIN_DEVICE:
            continue
        g = model.channel_graph(ch)
        if g is None:
            continue
        e = {}
        for a, b in g.edges():
            a, b = (a, b) if a <= b else (b, a)
            if ch == PHYSICAL:
                e[(a, b)] = physical_lag
            else:
                e[(a, b)] = model.bound(ch.split(":", 1)[1], a, b)
        out[ch] = e
    return out


# --------------------------------------------------------------------------
# event index


class EventIndex:
    """Time-sorted per-device event arrays plus context/epoch lookups."""

    def __init__(self, events: Iterable[TemplateEvent], model: DomainModel, n_templates: int | None = None):
        evs = sorted(events, key=lambda e: (e.timestamp, e.raw_index))
        self.model = model
        self.n = n_templates if n_templates is not None else (max((e.template_id for e in evs), default=-1) + 1)
        self.t0 = evs[0].timestamp if evs else 0.0
        self.t1 = evs[-1].timestamp if evs else 0.0
        per: dict[str, list[TemplateEvent]] = {}
        for e in evs:
            per.setdefault(e.device, []).append(e)
        self.devices = sorted(per)
        self.arrays: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self.by_tid: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}
        for d, lst in per.items():
            tid = np.fromiter((e.template_id for e in lst), dtype=np.int64, count=len(lst))
            ts = np.fromiter((e.timestamp for e in lst), dtype=np.float64, count=len(lst))
            rk = np.fromiter((e.raw_index for e in lst), dtype=np.int64, count=len(lst))
            self.arrays[d] = (tid, ts, rk)
            order = np.argsort(tid, kind="stable")
            stid = tid[order]
            bounds = np.flatnonzero(np.diff(stid)) + 1
            for chunk in np.split(order, bounds):
                if len(chunk):
                    self.by_tid[(d, int(tid[chunk[0]]))] = (ts[chunk], rk[chunk])

        pods = model.pods()
        self.context: dict[str, tuple[str, str, str, str]] = {}
        for d in set(self.devices) | set(model.devices):
            info = model.devices.get(d)
            if info is None:
                self.context[d] = ("UNKNOWN",) * 4
            else:
                self.context[d] = (info["vendor"], info["os"], info["tier"], f"{info['tier']}/{pods.get(d, 'UNKNOWN')}")
        self.members: dict[tuple, list[str]] = {}
        for d in self.devices:
            self.members.setdefault(self.context[d], []).append(d)
        # context-level epochs split at every change of any member device
        change_ts: dict[tuple, list[float]] = {}
        dev_change_ts: dict[str, list[float]] = {}
        for c in model.changes:
            dev_change_ts.setdefault(c.device, []).append(c.effective_ts)
        for ctx in self.members:
            pts = set()
            for d in [d for d, c in self.context.items() if c == ctx]:
                pts.update(dev_change_ts.get(d, ()))
            change_ts[ctx] = sorted(pts)
        self.change_ts = change_ts
        self.dev_change_ts = {d: sorted(v) for d, v in dev_change_ts.items()}
        self._bins: dict = {}

    def times(self, device: str, tid: int) -> tuple[np.ndarray, np.ndarray]:
        hit = self.by_tid.get((device, tid))
        if hit is None:
            return np.empty(0), np.empty(0, dtype=np.int64)
        return hit

    def confounding_key(self, device: str, t: float) -> ConfoundingKey:
        v, o, tier, topo = self.context.get(device, ("UNKNOWN",) * 4)
        epoch = bisect_right(self.dev_change_ts.get(device, []), t)
        return ConfoundingKey(v, o, tier, topo, epoch)

    def epochs(self, ctx, times: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.change_ts.get(ctx, []), dtype=np.float64), times, side="right")

    def neighbours(self, channel: str, device: str) -> list[str]:
        g = self.model.channel_graph(channel)
        if g is None or device not in g:
            return []
        return sorted(g.neighbors(device))

    def edge_lag(self, channel: str, a: str, b: str, cfg: CausalityConfig) -> float:
        if channel == PHYSICAL:
            return cfg.physical_lag
        return self.model.bound(channel.split(":", 1)[1], a, b)

    def channels(self) -> list[str]:
        out = [PHYSICAL]
        out += [protocol_channel(p) for p, g in sorted(self.model.overlays.items()) if g.number_of_edges()]
        return out

    def binned(self, devices: Sequence[str], tid: int, width: float) -> np.ndarray:
        key = (tuple(devices), tid, width)
        hit = self._bins.get(key)
        if hit is not None:
            return hit
        nbins = int((self.t1 - self.t0) // width) + 1
        out = np.zeros(nbins, dtype=np.int64)
        for d in devices:
            ts, _ = self.times(d, tid)
            if len(ts):
                out += np.bincount(((ts - self.t0) // width).astype(np.int64), minlength=nbins)
        self._bins[key] = out
        return out


# --------------------------------------------------------------------------
# operations


def candidate_pairs(
    events: Iterable[TemplateEvent] | EventIndex,
    model: DomainModel | None = None,
    config: CausalityConfig = CausalityConfig(),
    n_templates: int | None = None,
) -> list[CandidatePair]:
    """Template pairs that co-occur in lag-bounded, channel-adjacent order at
    least ``min_support`` times (counted once per cause occurrence)."""
    idx = events if isinstance(events, EventIndex) else EventIndex(events, model, n_templates)
    n = idx.n
    if n == 0:
        return []
    counts: dict[tuple, int] = {}
    lags: dict[tuple, float] = {}

    def tally(keys: np.ndarray, channel: str, ctx, lag: float):
        if not len(keys):
            return
        uk, uc = np.unique(keys, return_counts=True)
        for k, c in zip(uk.tolist(), uc.tolist()):
            i, j = divmod(k, n)
            if i == j:
                continue
            key = (i, j, channel, ctx)
            counts[key] = counts.get(key, 0) + c
            lags[key] = max(lags.get(key, 0.0), lag)

    for d in idx.devices:
        tid, ts, rk = idx.arrays[d]
        keys = kernels.follow_pairs(tid, ts, rk, tid, ts, rk, config.intra_lag, n, True)
        tally(keys, WITHIN_DEVICE, idx.context[d], config.intra_lag)

    for ch in idx.channels():
        for d in idx.devices:
            tid, ts, rk = idx.arrays[d]
            for e in idx.neighbours(ch, d):
                if e not in idx.arrays:
                    continue
                lag = idx.edge_lag(ch, d, e, config)
                etid, ets, erk = idx.arrays[e]
                keys = kernels.follow_pairs(tid, ts, rk, etid, ets, erk, lag, n, False)
                tally(keys, ch, idx.context[d], lag)

    return sorted(
        CandidatePair(i, j, ch, ctx, lags[(i, j, ch, ctx)], c)
        for (i, j, ch, ctx), c in counts.items()
        if c >= config.min_support
    )


def _effect_devices(idx: EventIndex, pair: CandidatePair) -> list[str]:
    members = idx.members.get(pair.context, [])
    if pair.channel == WITHIN_DEVICE:
        return members
    out = set()
    for d in members:
        out.update(idx.neighbours(pair.channel, d))
    return sorted(out)


def correlate(pair: CandidatePair, events: EventIndex, config: CausalityConfig = CausalityConfig()) -> float:
    """Spearman rank correlation of binned cause/effect counts in the pair's
    device context. Raises :class:`InsufficientData` on too few active bins or
    a constant series."""
    idx = events
    x = idx.binned(idx.members.get(pair.context, []), pair.cause, config.bin_width)
    y = idx.binned(_effect_devices(idx, pair), pair.effect, config.bin_width)
    active = int(np.count_nonzero((x > 0) | (y > 0)))
    if active < config.min_bins:
        raise InsufficientData(f"{active} non-empty bins < {config.min_bins}")
    if x.min() == x.max() or y.min() == y.max():
        raise InsufficientData("constant series")
    rho = stats.spearmanr(x, y).statistic
    if not np.isfinite(rho):
        raise InsufficientData("undefined rank correlation")
    return float(rho)


def build_confounding_set(
    cause: int,
    context: tuple,
    correlations: dict[tuple, float],
    events: EventIndex,
    alpha: float,
) -> list[int]:
    """Templates correlated with *cause* above ``alpha`` that also occur in the
    same context class; the cause itself is excluded. Sorted ascending."""
    members = events.members.get(context, [])
    out = set()
    for (i, j, ctx), c in correlations.items():
        if ctx != context or not c > alpha:
            continue
        other = j if i == cause else i if j == cause else None
        if other is None or other == cause:
            continue
        if any((d, other) in events.by_tid for d in members):
            out.add(other)
    return sorted(out)


def pair_seed(seed: int, pair: CandidatePair) -> int:
    """Order-independent per-pair seed, so worker count cannot change draws."""
    return zlib.crc32(canonical_json([seed, pair.cause, pair.effect, pair.channel, list(pair.context)]).encode())


def select_untreated(K: Sequence[int], seed: int):
    """Uniform draw from *K* (taken in ascending order); ``NoControl`` if empty."""
    if not K:
        return NoControl
    ordered = sorted(K)
    if len(ordered) == 1:
        return ordered[0]
    return ordered[int(np.random.default_rng(seed).integers(len(ordered)))]


def _arm(idx: EventIndex, pair: CandidatePair, template: int, config: CausalityConfig):
    """Per-trial success flags and context epochs for one arm."""
    succ, epochs = [], []
    for d in idx.members.get(pair.context, []):
        ts, rk = idx.times(d, template)
        if not len(ts):
            continue
        if pair.channel == WITHIN_DEVICE:
            ets, erk = idx.times(d, pair.effect)
            hit = kernels.hit_mask(ts, rk, ets, erk, config.intra_lag, True)
        else:
            hit = np.zeros(len(ts), dtype=bool)
            for e in idx.neighbours(pair.channel, d):
                ets, erk = idx.times(e, pair.effect)
                if len(ets):
                    hit |= kernels.hit_mask(ts, rk, ets, erk, idx.edge_lag(pair.channel, d, e, config), False)
        succ.append(hit)
        epochs.append(idx.epochs(pair.context, ts))
    if not succ:
        return np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)
    return np.concatenate(succ), np.concatenate(epochs)


def two_proportion_test(s1: int, n1: int, s0: int, n0: int) -> tuple[float, str]:
    """One-sided p-value for rate1 > rate0.

    Pooled z-test; Fisher's exact test when any 2x2 cell is below 5."""
    cells = (s1, n1 - s1, s0, n0 - s0)
    if min(cells) < 5:
        res = stats.fisher_exact([[s1, n1 - s1], [s0, n0 - s0]], alternative="greater")
        return float(res.pvalue), "fisher"
    p = (s1 + s0) / (n1 + n0)
    se = math.sqrt(p * (1 - p) * (1 / n1 + 1 / n0))
    z = (s1 / n1 - s0 / n0) / se
    return float(stats.norm.sf(z)), "z"


def qed_test(
    pair: CandidatePair,
    untreated: int,
    events: EventIndex,
    significance: float = 0.01,
    config: CausalityConfig = CausalityConfig(),
    correlation: float = float("nan"),
) -> CausalTestResult:
    """Compare effect-follow rates after the cause vs. after the control.

    Trials are kept only in config epochs where both arms have trials.
    Raises :class:`Underpowered` if either arm has fewer than ``min_trials``.
    """
    s_t, e_t = _arm(events, pair, pair.cause, config)
    s_u, e_u = _arm(events, pair, untreated, config)
    shared = np.intersect1d(e_t, e_u)
    keep_t, keep_u = np.isin(e_t, shared), np.isin(e_u, shared)
    s_t, s_u = s_t[keep_t], s_u[keep_u]
    n1, n0 = len(s_t), len(s_u)
    if n1 < config.min_trials or n0 < config.min_trials:
        raise Underpowered(f"trials treated={n1} untreated={n0} < {config.min_trials}")
    k1, k0 = int(s_t.sum()), int(s_u.sum())
    r1, r0 = k1 / n1, k0 / n0
    pval, method = two_proportion_test(k1, n1, k0, n0)
    return CausalTestResult(
        pair, correlation, pval, r1, r0, n1, n0, int(untreated), method,
        accepted=bool(pval < significance and r1 > r0),
    )


def benjamini_hochberg(pvalues: Sequence[float]) -> np.ndarray:
    if not len(pvalues):
        return np.zeros(0)
    return stats.false_discovery_control(np.asarray(pvalues, dtype=np.float64), method="bh")


@dataclass
class Discard:
    pair: CandidatePair
    reason: str
    detail: str = ""
    result: CausalTestResult | None = None

    def to_dict(self) -> dict:
        d = {"pair": self.pair.to_dict(), "reason": self.reason, "detail": self.detail}
        if self.result is not None:
            d["result"] = self.result.to_dict()
        return d


def build_causality_matrix(
    events: Iterable[TemplateEvent],
    model: DomainModel,
    config: CausalityConfig = CausalityConfig(),
    n_templates: int | None = None,
    dictionary_fingerprint: str | None = None,
) -> tuple[CausalityMatrix, list[Discard]]:
    """Run the full QED pipeline. Returns M and the audit log of discarded pairs.

    Every candidate ends up either in M or in the audit log exactly once.
    """
    idx = EventIndex(events, model, n_templates)
    cands = candidate_pairs(idx, config=config)
    audit: list[Discard] = []

    def corr(p):
        try:
            return correlate(p, idx, config), None
        except InsufficientData as e:
            return None, str(e)

    # binning caches in idx are filled lazily; warm them serially so threads only read
    for p in cands:
        idx.binned(idx.members.get(p.context, []), p.cause, config.bin_width)
        idx.binned(_effect_devices(idx, p), p.effect, config.bin_width)
    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        corrs = list(pool.map(corr, cands))

    correlations: dict[tuple, float] = {}
    gated: list[tuple[CandidatePair, float]] = []
    for p, (c, err) in zip(cands, corrs):
        if c is None:
            audit.append(Discard(p, "insufficient_data", err))
            continue
        correlations[(p.cause, p.effect, p.context)] = max(c, correlations.get((p.cause, p.effect, p.context), -1.0))
        if c < config.alpha:
            audit.append(Discard(p, "below_alpha", f"rho={_r(c)}"))
            continue
        gated.append((p, c))

    def test(item):
        p, c = item
        K = build_confounding_set(p.cause, p.context, correlations, idx, config.alpha)
        tu = select_untreated(K, pair_seed(config.seed, p))
        if tu is NoControl:
            return Discard(p, "no_control", "empty confounding set")
        try:
            return qed_test(p, tu, idx, config.significance, config, c)
        except Underpowered as e:
            return Discard(p, "underpowered", str(e))

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        outcomes = list(pool.map(test, gated))

    tested = [o for o in outcomes if isinstance(o, CausalTestResult)]
    audit.extend(o for o in outcomes if isinstance(o, Discard))
    if config.fdr:
        q = benjamini_hochberg([r.p_value for r in tested])
    else:
        q = np.array([r.p_value for r in tested])
    M = CausalityMatrix(
        n=idx.n,
        intra_lag=config.intra_lag,
        dictionary_fingerprint=dictionary_fingerprint,
        config=config.to_dict(),
    )
    for r, qv in zip(tested, q.tolist()):
        r.q_value = float(qv)
        r.accepted = bool(r.p_value < config.significance and qv < config.significance
                          and r.treated_rate > r.untreated_rate)
        if r.accepted:
            M.add(r)
        else:
            audit.append(Discard(r.pair, "not_significant", f"p={_r(r.p_value)} q={_r(qv)}", r))
    M.channel_edges = channel_edges(model, {ch for _, _, ch in M.channel_edge_set()}, config.physical_lag)
    audit.sort(key=lambda d: d.pair)
    return M, audit
