"""Device configs to physical and protocol adjacency graphs.

Config grammar (one file per device per day)::

    device <name> {
      vendor <v>; os <ver>; tier <TOR|AGG|CORE|MB>;
      interface <if> peer <dev>:<if>;
      <protocol> { peer <dev>; <timer> <seconds>; }
      vlan <id>;
    }

Anything else inside the device block is kept verbatim as an unknown
section so config diffs still see it. Snapshots live under
``configs/<YYYY-MM-DD>/<device>.cfg``.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping

import networkx as nx

from ._io import canonical_json, content_hash, header
from .errors import ParseError, VersionMismatch

log = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 1
TIERS = ("TOR", "AGG", "CORE", "MB")
PROTOCOLS = ("BGP", "OSPF", "VLAN")
# timer that bounds indirect propagation for each protocol
RELEVANT_TIMER = {"OSPF": "dead-interval", "BGP": "hold-time"}


@dataclass(frozen=True)
class ProtocolStanza:
    protocol: str
    peers: tuple[str, ...] = ()
    timers: tuple[tuple[str, float], ...] = ()

    @property
    def timer_map(self) -> dict[str, float]:
        return dict(self.timers)

    def relevant_timer(self) -> float | None:
        tm = self.timer_map
        name = RELEVANT_TIMER.get(self.protocol)
        if name in tm:
            return tm[name]
        return max(tm.values()) if tm else None


@dataclass(frozen=True)
class Interface:
    name: str
    peer_device: str | None = None
    peer_interface: str | None = None


@dataclass(frozen=True)
class DeviceModel:
    name: str
    vendor: str = "UNKNOWN"
    os_version: str = "UNKNOWN"
    tier: str = "TOR"
    interfaces: tuple[Interface, ...] = ()
    protocols: tuple[ProtocolStanza, ...] = ()
    vlans: tuple[int, ...] = ()
    sections: tuple[tuple[str, str], ...] = ()

    def section_map(self) -> dict[str, str]:
        return dict(self.sections)

    def stanza(self, protocol: str) -> ProtocolStanza | None:
        for p in self.protocols:
            if p.protocol == protocol:
                return p
        return None


@dataclass(frozen=True)
class ConfigChangeSet:
    device: str
    effective_date: str
    changed_sections: tuple[str, ...]

    def __post_init__(self):
        if not self.changed_sections:
            raise ValueError("ConfigChangeSet needs at least one changed section")

    @property
    def effective_ts(self) -> float:
        d = date.fromisoformat(self.effective_date)
        return datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp()

    def to_dict(self) -> dict:
        return {"device": self.device, "date": self.effective_date, "sections": list(self.changed_sections)}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigChangeSet":
        return cls(d["device"], d["date"], tuple(d["sections"]))


# --------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(r"[{};]|[^\s{};]+")


def _lex(text: str) -> list[tuple[str, int]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        raw = raw.split("#", 1)[0]
        out.extend((m.group(0), lineno) for m in _TOKEN_RE.finditer(raw))
    return out


class _Parser:
    def __init__(self, tokens, path):
        self.toks = tokens
        self.i = 0
        self.path = path

    def peek(self):
        return self.toks[self.i][0] if self.i < len(self.toks) else None

    def line(self):
        if self.i < len(self.toks):
            return self.toks[self.i][1]
        return self.toks[-1][1] if self.toks else 1

    def next(self, what="token"):
        if self.i >= len(self.toks):
            raise ParseError(f"unexpected end of input, expected {what}", self.line(), self.path)
        tok = self.toks[self.i][0]
        self.i += 1
        return tok

    def expect(self, tok):
        got = self.next(repr(tok))
        if got != tok:
            self.i -= 1
            raise ParseError(f"expected {tok!r}, got {got!r}", self.line(), self.path)

    def words_until_semicolon(self):
        words = []
        while self.peek() not in (";", "}", "{", None):
            words.append(self.next())
        if self.peek() == ";":
            self.next()
        elif self.peek() != "}":
            raise ParseError("expected ';'", self.line(), self.path)
        return words

    def block_text(self):
        """Consume a balanced ``{ ... }`` block and return it as normalized text."""
        self.expect("{")
        depth, parts = 1, ["{"]
        while depth:
            tok = self.next("'}'")
            depth += tok == "{"
            depth -= tok == "}"
            parts.append(tok)
        return " ".join(parts)


def _seconds(word: str, p: _Parser) -> float:
    try:
        v = float(word)
    except ValueError:
        raise ParseError(f"timer value {word!r} is not a number", p.line(), p.path) from None
    if not math.isfinite(v) or v <= 0:
        raise ParseError(f"timer value {word!r} must be positive and finite", p.line(), p.path)
    return v


def parse_config(snapshot: str, path: str | None = None) -> DeviceModel:
    """Parse one device config document."""
    p = _Parser(_lex(snapshot), path)
    if p.next("'device'") != "device":
        p.i -= 1
        raise ParseError("config must start with 'device <name> {'", p.line(), path)
    name = p.next("device name")
    p.expect("{")
    attrs = {"vendor": "UNKNOWN", "os": "UNKNOWN", "tier": None}
    interfaces: list[Interface] = []
    protocols: list[ProtocolStanza] = []
    vlans: list[int] = []
    sections: dict[str, list[str]] = {}

    def add_section(key, text):
        sections.setdefault(key, []).append(text)

    while p.peek() != "}":
        if p.peek() is None:
            raise ParseError("unterminated device block", p.line(), path)
        kw = p.next()
        low = kw.lower()
        if low in ("vendor", "os", "tier"):
            words = p.words_until_semicolon()
            if len(words) != 1:
                raise ParseError(f"'{kw}' takes exactly one value", p.line(), path)
            attrs[low] = words[0]
            add_section(low, words[0])
        elif low == "interface":
            words = p.words_until_semicolon()
            if not words:
                raise ParseError("interface needs a name", p.line(), path)
            ifname, peer_dev, peer_if = words[0], None, None
            if len(words) >= 2:
                if words[1] != "peer" or len(words) != 3:
                    raise ParseError("expected 'interface <if> peer <dev>:<if>'", p.line(), path)
                peer_dev, _, peer_if = words[2].partition(":")
                if not peer_dev:
                    raise ParseError("empty peer device", p.line(), path)
                peer_if = peer_if or None
            interfaces.append(Interface(ifname, peer_dev, peer_if))
            add_section("interfaces", " ".join(words))
        elif low == "vlan":
            words = p.words_until_semicolon()
            if len(words) != 1 or not words[0].isdigit():
                raise ParseError("expected 'vlan <id>'", p.line(), path)
            vlans.append(int(words[0]))
            add_section("vlan", words[0])
        elif low.upper() in ("BGP", "OSPF") and p.peek() == "{":
            p.expect("{")
            peers: list[str] = []
            timers: dict[str, float] = {}
            while p.peek() != "}":
                if p.peek() is None:
                    raise ParseError(f"unterminated {kw} block", p.line(), path)
                words = p.words_until_semicolon()
                if not words:
                    raise ParseError("empty statement", p.line(), path)
                if words[0] == "peer":
                    if len(words) != 2:
                        raise ParseError("expected 'peer <dev>'", p.line(), path)
                    peers.append(words[1])
                elif len(words) == 2:
                    timers[words[0]] = _seconds(words[1], p)
                else:
                    raise ParseError(f"cannot parse {' '.join(words)!r}", p.line(), path)
            p.expect("}")
            if p.peek() == ";":
                p.next()
            st = ProtocolStanza(low.upper(), tuple(peers), tuple(sorted(timers.items())))
            protocols.append(st)
            add_section(low, _stanza_text(st))
        else:
            # unknown section, preserved verbatim
            words = []
            while p.peek() not in (";", "{", "}", None):
                words.append(p.next())
            if p.peek() == "{":
                text = " ".join([kw, *words, p.block_text()])
                if p.peek() == ";":
                    p.next()
            elif p.peek() == ";":
                p.next()
                text = " ".join([kw, *words])
            else:
                raise ParseError(f"cannot parse statement starting with {kw!r}", p.line(), path)
            add_section(low, text)
    p.expect("}")
    if p.peek() is not None:
        raise ParseError("trailing content after device block", p.line(), path)
    tier = attrs["tier"]
    if tier is None or tier.upper() not in TIERS:
        raise ParseError(f"tier must be one of {'|'.join(TIERS)}, got {tier!r}", None, path)
    return DeviceModel(
        name=name,
        vendor=attrs["vendor"],
        os_version=attrs["os"],
        tier=tier.upper(),
        interfaces=tuple(interfaces),
        protocols=tuple(protocols),
        vlans=tuple(vlans),
        sections=tuple(sorted((k, "\n".join(sorted(v))) for k, v in sections.items())),
    )


_KNOWN_SECTIONS = {"vendor", "os", "tier", "interfaces", "vlan", "bgp", "ospf"}


def _stanza_text(st: ProtocolStanza) -> str:
    body = [f"peer {p};" for p in st.peers] + [f"{k} {_fmt_num(v)};" for k, v in st.timers]
    return "{ " + " ".join(body) + " }"


def render_config(dev: DeviceModel) -> str:
    """Inverse of :func:`parse_config` for the known sections."""
    lines = [f"device {dev.name} {{", f"  vendor {dev.vendor};", f"  os {dev.os_version};", f"  tier {dev.tier};"]
    for itf in dev.interfaces:
        if itf.peer_device:
            peer = f"{itf.peer_device}:{itf.peer_interface}" if itf.peer_interface else itf.peer_device
            lines.append(f"  interface {itf.name} peer {peer};")
        else:
            lines.append(f"  interface {itf.name};")
    for st in dev.protocols:
        lines.append(f"  {st.protocol.lower()} {_stanza_text(st)}")
    for v in dev.vlans:
        lines.append(f"  vlan {v};")
    for key, text in dev.sections:
        if key in _KNOWN_SECTIONS:
            continue
        for stmt in text.split("\n"):
            lines.append(f"  {stmt}" if stmt.endswith("}") else f"  {stmt};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(v)


def load_snapshot(directory: str | Path) -> dict[str, DeviceModel]:
    out = {}
    for f in sorted(Path(directory).glob("*.cfg")):
        dev = parse_config(f.read_text(), str(f))
        out[dev.name] = dev
    return out


def load_history(root: str | Path) -> dict[str, dict[str, DeviceModel]]:
    """All dated snapshots under *root* (``<root>/<YYYY-MM-DD>/*.cfg``), keyed by date."""
    hist = {}
    for d in sorted(Path(root).iterdir()):
        if d.is_dir() and re.fullmatch(r"\d{4}-\d{2}-\d{2}", d.name):
            hist[d.name] = load_snapshot(d)
    return hist


# --------------------------------------------------------------------------
# model


def _edge(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass
class DomainModel:
    devices: dict[str, dict]
    physical: nx.Graph
    overlays: dict[str, nx.Graph]
    delay_bound: dict[tuple[str, str, str], float]
    slack: float = 1.0
    warnings: list[str] = field(default_factory=list)
    reachability_violations: list[tuple[str, str, str]] = field(default_factory=list)
    changes: list[ConfigChangeSet] = field(default_factory=list)

    def __post_init__(self):
        self._pods = None

    @property
    def device_names(self) -> list[str]:
        return sorted(self.devices)

    def tier(self, device: str) -> str:
        info = self.devices.get(device)
        return info["tier"] if info else "UNKNOWN"

    def adjacent(self, channel: str, a: str, b: str) -> bool:
        """Order-independent adjacency on ``PHYSICAL`` or ``PROTOCOL:<p>``."""
        g = self.channel_graph(channel)
        return g is not None and g.has_edge(a, b)

    def channel_graph(self, channel: str) -> nx.Graph | None:
        if channel == "PHYSICAL":
            return self.physical
        if channel.startswith("PROTOCOL:"):
            return self.overlays.get(channel.split(":", 1)[1])
        return None

    def bound(self, protocol: str, a: str, b: str) -> float | None:
        return self.delay_bound.get((protocol, *_edge(a, b)))

    def pods(self) -> dict[str, str]:
        """Coarse location label per device: connected components of the
        physical graph once the core tier is removed."""
        if self._pods is None:
            g = self.physical.subgraph(n for n in self.physical if self.tier(n) != "CORE")
            pods = {}
            for comp in nx.connected_components(g):
                label = min(comp)
                for n in comp:
                    pods[n] = label
            for n in self.physical:
                pods.setdefault(n, "core")
            self._pods = pods
        return self._pods

    def to_dict(self, config: dict | None = None) -> dict:
        return {
            "meta": header("domain_model", MODEL_SCHEMA_VERSION, config),
            "slack": self.slack,
            "devices": {k: self.devices[k] for k in sorted(self.devices)},
            "physical": sorted(_edge(a, b) for a, b in self.physical.edges()),
            "overlays": {
                p: sorted(_edge(a, b) for a, b in g.edges()) for p, g in sorted(self.overlays.items())
            },
            "delay_bound": [[p, a, b, v] for (p, a, b), v in sorted(self.delay_bound.items())],
            "warnings": list(self.warnings),
            "reachability_violations": [list(v) for v in self.reachability_violations],
            "changes": [c.to_dict() for c in self.changes],
        }

    def dumps(self, config: dict | None = None) -> str:
        return canonical_json(self.to_dict(config))

    @property
    def fingerprint(self) -> str:
        d = self.to_dict()
        d.pop("meta")
        return content_hash(d)

    @classmethod
    def from_dict(cls, doc: dict) -> "DomainModel":
        meta = doc.get("meta", {})
        if meta.get("kind") != "domain_model" or meta.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise VersionMismatch(f"not a v{MODEL_SCHEMA_VERSION} domain model")
        phys = nx.Graph()
        phys.add_nodes_from(sorted(doc["devices"]))
        phys.add_edges_from(tuple(e) for e in doc["physical"])
        overlays = {}
        for p, edges in doc["overlays"].items():
            g = nx.Graph()
            g.add_nodes_from(sorted(doc["devices"]))
            g.add_edges_from(tuple(e) for e in edges)
            overlays[p] = g
        return cls(
            devices=doc["devices"],
            physical=phys,
            overlays=overlays,
            delay_bound={(p, a, b): float(v) for p, a, b, v in doc["delay_bound"]},
            slack=doc.get("slack", 1.0),
            warnings=list(doc.get("warnings", [])),
            reachability_violations=[tuple(v) for v in doc.get("reachability_violations", [])],
            changes=[ConfigChangeSet.from_dict(c) for c in doc.get("changes", [])],
        )


def build_domain_model(devices: Iterable[DeviceModel] | Mapping[str, DeviceModel], slack: float = 1.0) -> DomainModel:
    """Assemble physical/overlay graphs and per-edge delay bounds.

    A protocol edge's bound is the larger of the two endpoints' relevant
    timers plus *slack*; protocols without timers (direct propagation, e.g.
    VLAN) get *slack* alone.
    """
    devs = dict(devices) if isinstance(devices, Mapping) else {d.name: d for d in devices}
    if not devs:
        raise ValueError("build_domain_model needs at least one device")
    names = sorted(devs)
    warnings: list[str] = []

    phys = nx.Graph()
    phys.add_nodes_from(names)
    claims: dict[tuple[str, str], set[str]] = {}
    for n in names:
        for itf in devs[n].interfaces:
            if not itf.peer_device:
                continue
            if itf.peer_device not in devs:
                warnings.append(f"dangling: {n}:{itf.name} peers unknown device {itf.peer_device}")
                continue
            if itf.peer_device == n:
                continue
            claims.setdefault(_edge(n, itf.peer_device), set()).add(n)
    for (a, b), who in sorted(claims.items()):
        if len(who) == 1:
            warnings.append(f"one-sided: physical link {a}--{b} declared only by {next(iter(who))}")
        phys.add_edge(a, b)

    overlays: dict[str, nx.Graph] = {}
    delay: dict[tuple[str, str, str], float] = {}
    for proto in ("BGP", "OSPF"):
        g = nx.Graph()
        g.add_nodes_from(names)
        pclaims: dict[tuple[str, str], set[str]] = {}
        for n in names:
            st = devs[n].stanza(proto)
            if st is None:
                continue
            for peer in st.peers:
                if peer not in devs:
                    warnings.append(f"dangling: {n} {proto} peer unknown device {peer}")
                    continue
                if peer != n:
                    pclaims.setdefault(_edge(n, peer), set()).add(n)
        for (a, b), who in sorted(pclaims.items()):
            if len(who) == 1:
                warnings.append(f"one-sided: {proto} peering {a}--{b} declared only by {next(iter(who))}")
            g.add_edge(a, b)
            timers = [
                t for t in (
                    devs[a].stanza(proto).relevant_timer() if devs[a].stanza(proto) else None,
                    devs[b].stanza(proto).relevant_timer() if devs[b].stanza(proto) else None,
                ) if t is not None
            ]
            delay[(proto, a, b)] = (max(timers) if timers else 0.0) + slack
        overlays[proto] = g

    g = nx.Graph()
    g.add_nodes_from(names)
    members: dict[int, list[str]] = {}
    for n in names:
        for v in devs[n].vlans:
            members.setdefault(v, []).append(n)
    for v in sorted(members):
        ms = members[v]
        for i, a in enumerate(ms):
            for b in ms[i + 1:]:
                if not g.has_edge(a, b):
                    g.add_edge(a, b)
                    delay[("VLAN", a, b)] = slack
    overlays["VLAN"] = g

    comp = {}
    for k, c in enumerate(nx.connected_components(phys)):
        for n in c:
            comp[n] = k
    violations = []
    for proto, og in sorted(overlays.items()):
        for a, b in sorted(_edge(*e) for e in og.edges()):
            if comp[a] != comp[b]:
                violations.append((proto, a, b))
    for w in warnings:
        log.warning(w)
    for v in violations:
        log.warning("overlay edge outside physical reachability: %s %s--%s", *v)

    info = {
        n: {"vendor": devs[n].vendor, "os": devs[n].os_version, "tier": devs[n].tier} for n in names
    }
    return DomainModel(info, phys, overlays, delay, slack, warnings, violations)


def diff_configs(
    day_a: Mapping[str, DeviceModel] | Iterable[DeviceModel],
    day_b: Mapping[str, DeviceModel] | Iterable[DeviceModel],
    effective_date: str = "1970-01-01",
) -> list[ConfigChangeSet]:
    """Section-level differences per device between two snapshots."""
    a = dict(day_a) if isinstance(day_a, Mapping) else {d.name: d for d in day_a}
    b = dict(day_b) if isinstance(day_b, Mapping) else {d.name: d for d in day_b}
    out = []
    for name in sorted(set(a) | set(b)):
        if name not in a:
            out.append(ConfigChangeSet(name, effective_date, ("<added>",)))
            continue
        if name not in b:
            out.append(ConfigChangeSet(name, effective_date, ("<removed>",)))
            continue
        sa, sb = a[name].section_map(), b[name].section_map()
        changed = tuple(sorted(k for k in set(sa) | set(sb) if sa.get(k) != sb.get(k)))
        if changed:
            out.append(ConfigChangeSet(name, effective_date, changed))
    return out


def history_changes(history: Mapping[str, Mapping[str, DeviceModel]]) -> list[ConfigChangeSet]:
    """Change sets between consecutive dated snapshots."""
    days = sorted(history)
    out: list[ConfigChangeSet] = []
    for prev, cur in zip(days, days[1:]):
        out.extend(diff_configs(history[prev], history[cur], cur))
    return out


def model_from_history(history: Mapping[str, Mapping[str, DeviceModel]], slack: float = 1.0) -> DomainModel:
    """Model from the latest snapshot, annotated with every change set in the history."""
    if not history:
        raise ValueError("empty config history")
    model = build_domain_model(history[max(history)], slack=slack)
    model.changes = history_changes(history)
    return model
