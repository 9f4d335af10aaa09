"""Syslog ingestion, template extraction and online template matching.

Lines are tokenized with typed masking (IP, MAC, interface, number), then
grouped by token count and clustered by constant-token agreement. Each cluster
becomes one :class:`Template`; positions that vary inside a cluster are
replaced by the generic wildcard ``<*>``.
"""

from __future__ import annotations

import calendar
import ipaddress
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from ._io import canonical_json, content_hash, header
from .errors import EmptyCorpus, EmptyMessage, VersionMismatch

log = logging.getLogger(__name__)

DICTIONARY_SCHEMA_VERSION = 1

WILDCARD = "<*>"
IP, MAC, IFACE, NUM = "<IP>", "<MAC>", "<IFACE>", "<NUM>"
TYPED_WILDCARDS = frozenset({IP, MAC, IFACE, NUM})
ALL_WILDCARDS = TYPED_WILDCARDS | {WILDCARD}


class StackLayer(str, Enum):
    PHY = "PHY"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"
    HW = "HW"
    OTHER = "OTHER"


@dataclass(frozen=True, slots=True)
class SyslogRecord:
    timestamp: float
    device: str
    severity: int
    facility: str
    message: str
    raw_index: int = 0


@dataclass(frozen=True, slots=True)
class TemplateEvent:
    template_id: int
    timestamp: float
    device: str
    raw_index: int

    def to_dict(self) -> dict:
        return {"t": self.template_id, "ts": self.timestamp, "dev": self.device, "idx": self.raw_index}

    @classmethod
    def from_dict(cls, d: dict) -> "TemplateEvent":
        return cls(int(d["t"]), float(d["ts"]), d["dev"], int(d["idx"]))


class _NoMatch:
    """Sentinel returned by :func:`match_template` when no template fits."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NoMatch"

    def __bool__(self) -> bool:
        return False


NoMatch = _NoMatch()


# --------------------------------------------------------------------------
# tokenization

_IFACE_RE = re.compile(
    r"^(?:eth|ethernet|et|ge|gi|gigabitethernet|te|tengigabitethernet|xe|fa|fastethernet"
    r"|hundredgige|port-channel|po|ae|lo|loopback|mgmt|vlan|swp|bond)"
    r"\d+(?:/\d+)*(?:[.:]\d+)?$",
    re.IGNORECASE,
)
_MAC_RE = re.compile(
    r"^(?:[0-9a-f]{2}[:-]){5}[0-9a-f]{2}$|^(?:[0-9a-f]{4}\.){2}[0-9a-f]{4}$", re.IGNORECASE
)
_NUM_RE = re.compile(r"^(?:[+-]?\d+(?:\.\d+)?%?|0x[0-9a-f]+)$", re.IGNORECASE)
_EDGE_PUNCT = "\"'`,;:()[]{}<>!?=|%#"
_SPLIT_RE = re.compile(r"[^\w\-./%]+")


def _is_ip(tok: str) -> bool:
    if "." not in tok and ":" not in tok:
        return False
    addr = tok.split("/", 1)[0] if tok.count("/") == 1 else tok
    try:
        ipaddress.ip_address(addr)
    except ValueError:
        return False
    if "/" in tok:
        return tok.split("/", 1)[1].isdigit()
    return True


@lru_cache(maxsize=65536)
def _classify(tok: str) -> str | None:
    if _MAC_RE.match(tok):
        return MAC
    if _is_ip(tok):
        return IP
    if _IFACE_RE.match(tok):
        return IFACE
    if _NUM_RE.match(tok):
        return NUM
    return None


@lru_cache(maxsize=65536)
def _chunk_tokens(chunk: str) -> tuple[tuple[str, str], ...]:
    out: list[tuple[str, str]] = []
    stripped = chunk.strip(_EDGE_PUNCT)
    # trailing sentence period, but keep dotted addresses intact
    if stripped.endswith(".") and not _classify(stripped):
        stripped = stripped.rstrip(".")
    if not stripped:
        return ()
    kind = _classify(stripped)
    if kind:
        return ((kind, stripped),)
    for piece in _SPLIT_RE.split(stripped):
        piece = piece.strip(".")
        if not piece:
            continue
        kind = _classify(piece)
        out.append((kind, piece) if kind else (piece, piece))
    return tuple(out)


def _tokenize(message: str) -> list[tuple[str, str]]:
    return [t for chunk in message.split() for t in _chunk_tokens(chunk)]


def tokenize_line(message: str) -> list[str]:
    """Split *message* into tokens with variable fields masked.

    Raises :class:`EmptyMessage` when nothing but separators remain.
    """
    if not message or not message.strip():
        raise EmptyMessage("message is empty")
    toks = [t for t, _ in _tokenize(message)]
    if not toks:
        raise EmptyMessage(f"no tokens in {message!r}")
    return toks


def tokenize_with_values(message: str) -> tuple[list[str], list[str]]:
    """Masked tokens plus the original text at each position."""
    pairs = _tokenize(message)
    if not pairs:
        raise EmptyMessage(f"no tokens in {message!r}")
    return [t for t, _ in pairs], [v for _, v in pairs]


# --------------------------------------------------------------------------
# syslog line parsing

_MONTHS = {m.lower(): i for i, m in enumerate(calendar.month_abbr) if m}
_PRI_RE = re.compile(r"^([A-Za-z0-9_\-]+)\.([0-7])$")


def parse_timestamp(text: str) -> float:
    """ISO-8601 string to epoch seconds (naive values are taken as UTC)."""
    s = text.strip()
    if s.endswith("Z") or s.endswith("z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float, fractional: bool = False) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if fractional:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_syslog_line(line: str, raw_index: int = 0, year: int = 1970) -> SyslogRecord | None:
    """Parse ``<timestamp> <device> <facility>.<severity> <message>``.

    Returns None for lines that cannot be parsed. RFC-3164 timestamps
    (``Mar  3 12:00:01``) carry no year, so *year* supplies it.
    """
    parts = line.split()
    if len(parts) < 4:
        return None
    try:
        if parts[0].lower()[:3] in _MONTHS and len(parts) >= 6:
            month = _MONTHS[parts[0].lower()[:3]]
            day = int(parts[1])
            hms = parts[2].split(".", 1)
            hh, mm, ss = (int(x) for x in hms[0].split(":"))
            frac = float("0." + hms[1]) if len(hms) > 1 else 0.0
            ts = datetime(year, month, day, hh, mm, ss, tzinfo=timezone.utc).timestamp() + frac
            head = 3
        else:
            ts = parse_timestamp(parts[0])
            head = 1
    except (ValueError, KeyError):
        return None
    if ts != ts or ts in (float("inf"), float("-inf")):
        return None
    fields = line.split(None, head + 2)
    if len(fields) < head + 3:
        return None
    device, pri, message = fields[head], fields[head + 1], fields[head + 2].strip()
    m = _PRI_RE.match(pri)
    if not m or not device or not message:
        return None
    return SyslogRecord(ts, device, int(m.group(2)), m.group(1), message, raw_index)


@dataclass
class IngestStats:
    lines: int = 0
    dropped: int = 0


def read_syslog(lines: Iterable[str], year: int = 1970, stats: IngestStats | None = None) -> list[SyslogRecord]:
    """Parse and time-sort records; unparseable lines are dropped and counted.

    Sorting is stable on (timestamp, raw_index), so per-device order follows
    timestamps with ties kept in file order.
    """
    stats = stats if stats is not None else IngestStats()
    out = []
    for i, raw in enumerate(lines):
        if not raw.strip():
            continue
        stats.lines += 1
        rec = parse_syslog_line(raw.rstrip("\n"), i, year)
        if rec is None:
            stats.dropped += 1
            continue
        out.append(rec)
    if stats.dropped:
        log.warning("dropped %d of %d syslog lines", stats.dropped, stats.lines)
    out.sort(key=lambda r: (r.timestamp, r.raw_index))
    return out


def read_syslog_file(path: str | Path, year: int = 1970, stats: IngestStats | None = None) -> list[SyslogRecord]:
    with open(path) as fh:
        return read_syslog(fh, year=year, stats=stats)


# --------------------------------------------------------------------------
# stack layer keyword map


class KeywordMap:
    """Ordered regex rules mapping constant tokens to a layer and semantic label."""

    def __init__(self, rules: Sequence[dict], default_layer: str = "OTHER", version: int = 1):
        self.version = version
        self.default_layer = StackLayer(default_layer)
        self.rules = [
            (re.compile(r["pattern"]), StackLayer(r["layer"]), r.get("label")) for r in rules
        ]

    @classmethod
    def load(cls, path: str | Path | None = None) -> "KeywordMap":
        if path is None:
            text = resources.files("logprophet").joinpath("data/stack_layers.json").read_text()
        else:
            text = Path(path).read_text()
        doc = json.loads(text)
        return cls(doc["rules"], doc.get("default_layer", "OTHER"), doc.get("version", 1))

    def classify(self, constant_tokens: Sequence[str]) -> tuple[StackLayer, str | None]:
        text = " ".join(t.lower() for t in constant_tokens)
        for pat, layer, label in self.rules:
            if pat.search(text):
                return layer, label
        return self.default_layer, None


_DEFAULT_KEYWORDS: KeywordMap | None = None


def default_keyword_map() -> KeywordMap:
    global _DEFAULT_KEYWORDS
    if _DEFAULT_KEYWORDS is None:
        _DEFAULT_KEYWORDS = KeywordMap.load()
    return _DEFAULT_KEYWORDS


# --------------------------------------------------------------------------
# templates


@dataclass(frozen=True)
class Template:
    id: int
    signature: tuple[str, ...]
    vendor_tag: str | None = None
    stack_layer: StackLayer = StackLayer.OTHER

    @property
    def constant_tokens(self) -> tuple[str, ...]:
        return tuple(t for t in self.signature if t not in ALL_WILDCARDS)

    @property
    def text(self) -> str:
        return " ".join(self.signature)

    def matches(self, tokens: Sequence[str]) -> bool:
        if len(tokens) != len(self.signature):
            return False
        return all(s == WILDCARD or s == t for s, t in zip(self.signature, tokens))

    def variables(self, tokens: Sequence[str], values: Sequence[str]) -> list[str]:
        """Original text at every wildcard position of the signature."""
        return [v for s, v in zip(self.signature, values) if s in ALL_WILDCARDS]

    def fill(self, tokens: Sequence[str]) -> list[str]:
        """Substitute the line's tokens back into the generic wildcard slots."""
        return [t if s == WILDCARD else s for s, t in zip(self.signature, tokens)]


@dataclass
class TemplateDictionary:
    templates: list[Template]
    threshold: float = 0.75
    token_index: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.token_index:
            self._reindex()
        self._cache: dict[tuple[str, ...], int | None] = {}

    def _reindex(self) -> None:
        idx: dict[int, list[int]] = {}
        for t in self.templates:
            idx.setdefault(len(t.signature), []).append(t.id)
        self.token_index = idx
        self._by_id = {t.id: t for t in self.templates}

    def __len__(self) -> int:
        return len(self.templates)

    def __getitem__(self, tid: int) -> Template:
        return self._by_id[tid]

    def __contains__(self, tid: int) -> bool:
        return tid in self._by_id

    @property
    def signatures(self) -> set[tuple[str, ...]]:
        return {t.signature for t in self.templates}

    @property
    def fingerprint(self) -> str:
        return content_hash([[t.id, list(t.signature)] for t in self.templates])

    def lookup(self, tokens: Sequence[str]) -> int | None:
        key = tuple(tokens)
        hit = self._cache.get(key, -1)
        if hit != -1:
            return hit
        best: Template | None = None
        for tid in self.token_index.get(len(key), ()):
            t = self._by_id[tid]
            if not t.matches(key):
                continue
            if best is None or (len(t.constant_tokens), -t.id) > (len(best.constant_tokens), -best.id):
                best = t
        out = best.id if best is not None else None
        self._cache[key] = out
        return out

    def to_dict(self, config: dict | None = None) -> dict:
        return {
            "meta": header("template_dictionary", DICTIONARY_SCHEMA_VERSION, config),
            "threshold": self.threshold,
            "fingerprint": self.fingerprint,
            "templates": [
                {
                    "id": t.id,
                    "signature": list(t.signature),
                    "vendor_tag": t.vendor_tag,
                    "stack_layer": t.stack_layer.value,
                }
                for t in self.templates
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TemplateDictionary":
        meta = doc.get("meta", {})
        if meta.get("kind") != "template_dictionary" or meta.get("schema_version") != DICTIONARY_SCHEMA_VERSION:
            raise VersionMismatch(f"not a v{DICTIONARY_SCHEMA_VERSION} template dictionary")
        tpls = [
            Template(d["id"], tuple(d["signature"]), d.get("vendor_tag"), StackLayer(d["stack_layer"]))
            for d in doc["templates"]
        ]
        return cls(tpls, threshold=doc.get("threshold", 0.75))

    def dumps(self, config: dict | None = None) -> str:
        return canonical_json(self.to_dict(config))


def _agreement(sig: Sequence[str], toks: Sequence[str]) -> float:
    return sum(1 for s, t in zip(sig, toks) if s == t and s != WILDCARD) / len(toks)


def _has_constant(sig: Sequence[str]) -> bool:
    return any(s not in ALL_WILDCARDS for s in sig)


def extract_templates(
    corpus: Iterable[SyslogRecord],
    threshold: float = 0.75,
    keyword_map: KeywordMap | None = None,
    device_vendor: dict[str, str] | None = None,
) -> TemplateDictionary:
    """Learn a template dictionary from *corpus*.

    Lines are partitioned by token count. A line joins the earliest cluster
    with the highest constant-token agreement if that agreement reaches
    *threshold*; disagreeing positions become ``<*>``. Output is deterministic
    for a fixed corpus order.
    """
    kw = keyword_map or default_keyword_map()
    # per token count: list of [signature, vendors]
    parts: dict[int, list[list]] = {}
    order: list[tuple[int, int]] = []
    seen = False
    exact: dict[tuple[str, ...], tuple[int, int]] = {}
    for rec in corpus:
        seen = True
        try:
            toks = tuple(tokenize_line(rec.message))
        except EmptyMessage:
            continue
        vendor = device_vendor.get(rec.device) if device_vendor else None
        hit = exact.get(toks)
        if hit is not None:
            parts[hit[0]][hit[1]][1].add(vendor)
            continue
        bucket = parts.setdefault(len(toks), [])
        best_i, best_sim = -1, -1.0
        for i, (sig, _) in enumerate(bucket):
            sim = _agreement(sig, toks)
            if sim > best_sim:
                best_i, best_sim = i, sim
        merged = None
        if best_i >= 0 and best_sim >= threshold:
            sig = bucket[best_i][0]
            merged = [s if s == t else WILDCARD for s, t in zip(sig, toks)]
            if not _has_constant(merged):
                merged = None
        if merged is not None:
            bucket[best_i][0] = merged
            bucket[best_i][1].add(vendor)
            exact[toks] = (len(toks), best_i)
        else:
            bucket.append([list(toks), {vendor}])
            order.append((len(toks), len(bucket) - 1))
            exact[toks] = (len(toks), len(bucket) - 1)
    if not seen:
        raise EmptyCorpus("corpus is empty")

    templates: list[Template] = []
    seen_sigs: set[tuple[str, ...]] = set()
    for n, i in order:
        sig, vendors = parts[n][i]
        sig = tuple(sig)
        if sig in seen_sigs:
            continue
        seen_sigs.add(sig)
        layer, _ = kw.classify([t for t in sig if t not in ALL_WILDCARDS])
        vendors.discard(None)
        vtag = next(iter(vendors)) if len(vendors) == 1 else None
        templates.append(Template(len(templates), sig, vtag, layer))
    return TemplateDictionary(templates, threshold=threshold)


def match_template(dictionary: TemplateDictionary, line: SyslogRecord) -> TemplateEvent | _NoMatch:
    """Map one record to its template; returns ``NoMatch`` when none fits."""
    try:
        toks = tokenize_line(line.message)
    except EmptyMessage:
        return NoMatch
    tid = dictionary.lookup(toks)
    if tid is None:
        return NoMatch
    return TemplateEvent(tid, line.timestamp, line.device, line.raw_index)


@dataclass
class MatchStats:
    matched: int = 0
    no_match: int = 0

    @property
    def no_match_rate(self) -> float:
        total = self.matched + self.no_match
        return self.no_match / total if total else 0.0


def match_stream(
    dictionary: TemplateDictionary, records: Iterable[SyslogRecord], stats: MatchStats | None = None
) -> Iterator[TemplateEvent]:
    stats = stats if stats is not None else MatchStats()
    for rec in records:
        ev = match_template(dictionary, rec)
        if ev is NoMatch:
            stats.no_match += 1
            continue
        stats.matched += 1
        yield ev


def semantic_label(template: Template, keyword_map: KeywordMap | None = None) -> str:
    """Vendor-neutral label for *template*; falls back to its signature text."""
    kw = keyword_map or default_keyword_map()
    layer, label = kw.classify(template.constant_tokens)
    return f"{layer.value}:{label}" if label else template.text
