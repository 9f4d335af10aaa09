"""Synthetic data-center scenarios with planted causal structure.

A scenario produces nightly config snapshots in the domain-model grammar, a
syslog file in the ingestion format, and a :class:`GroundTruth` recording
every planted causal edge, per-event lineage, config edits and burst labels.
The truth is computed from the generator's own bookkeeping, never by running
the pipeline, so it can serve as an independent oracle.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Any

import numpy as np

from ._io import canonical_json, header, read_ndjson, write_json, write_ndjson
from .errors import ScoreError, SpecError
from .templates import WILDCARD, format_timestamp, tokenize_line

SPEC_SCHEMA_VERSION = 1

# Device population shares by tier (TOR 93%, MB 2%, AGG 4%, CORE 0.07%), normalized.
POPULATION_SHARES = {"TOR": 93.0, "MB": 2.0, "AGG": 4.0, "CORE": 0.07}
POPULATION_RATIOS = {k: v / sum(POPULATION_SHARES.values()) for k, v in POPULATION_SHARES.items()}

# semantic event -> (severity, (dialect 0 phrasing, dialect 1 phrasing))
CATALOG: dict[str, tuple[int, tuple[str, str]]] = {
    "module_failure": (2, ("Module {num} failed with error code {hex}", "Linecard in slot {num} has failed")),
    "power_supply_fault": (2, ("Power supply {num} output voltage out of range", "PSU {num} fault detected input power lost")),
    "fan_failure": (3, ("Fan tray {num} failure detected", "Chassis fan {num} stopped spinning")),
    "memory_pressure": (4, ("Memory utilization {num} percent exceeds threshold", "Low memory warning free pages below {num}")),
    "cpu_pressure": (4, ("CPU usage {num} percent above limit", "Control plane cpu load high at {num}")),
    "temperature_alarm": (3, ("Temperature sensor {num} reading {num} above threshold", "Thermal alarm raised on sensor {num}")),
    "transceiver_removed": (3, ("Transceiver removed from {iface}", "Optic module pulled out of port {iface}")),
    "crc_errors": (4, ("CRC errors on {iface} exceeded {num} in interval", "Input CRC error count {num} on port {iface}")),
    "line_protocol_down": (3, ("Line protocol on Interface {iface} changed state to down", "LineProtocol {iface} went down")),
    "stp_change": (5, ("Spanning tree topology change detected on {iface} vlan {num}", "STP port {iface} role changed to blocking")),
    "mac_flap": (4, ("MAC address {mac} flapping between {iface} and {iface}", "Host mac {mac} is flapping between port {iface} and port {iface}")),
    "link_down": (3, ("Interface {iface} changed state to down", "Port {iface} link status is DOWN")),
    "link_up": (5, ("Interface {iface} is back in service", "Port {iface} has recovered carrier signal")),
    "ospf_adjacency_lost": (3, ("OSPF neighbor {ip} on {iface} state changed from FULL to DOWN", "ospf adjacency with {ip} lost dead timer expired")),
    "bgp_session_down": (3, ("BGP peer {ip} session closed hold timer expired", "bgp neighbor {ip} went from Established to Idle")),
    "route_withdrawn": (5, ("Route {ip} withdrawn from routing table", "Prefix {ip} removed from RIB by protocol")),
    "vip_migration": (4, ("VIP {ip} migrated to standby unit", "Virtual server {ip} failover to peer node")),
    "tcp_reset": (5, ("TCP connection to {ip} port {num} reset by peer", "tcp session with {ip} aborted by remote side")),
    "login_failure": (5, ("User {word} failed login from {ip}", "Authentication failure for user {word} from {ip}")),
    "config_commit": (6, ("Configuration committed by user {word}", "Running config saved by operator {word}")),
    "ntp_sync": (6, ("NTP synchronized to server {ip} stratum {num}", "Clock synced with time source {ip} level {num}")),
}

_WORDS = ("alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi")
_WORD_SENTINEL = "wordslotsentinel"
_SAMPLE = {"iface": "eth1", "ip": "10.0.0.1", "num": "7", "hex": "0x1f", "mac": "00:11:22:33:44:55", "word": _WORD_SENTINEL}
_EDIT_SECTIONS = ("snmp", "logging", "ntp")
CHANNELS_BASE = ("WITHIN_DEVICE", "PHYSICAL")


def format_signature(event: str, dialect: int, word: str | None = None) -> tuple[str, ...]:
    """Token signature a template extractor should learn for one phrasing.

    ``{word}`` slots become ``<*>`` unless *word* pins them to one value."""
    fmt = CATALOG[event][1][dialect]
    toks = tokenize_line(fmt.format(**_SAMPLE))
    return tuple((word if word is not None else WILDCARD) if t == _WORD_SENTINEL else t for t in toks)


# --------------------------------------------------------------------------
# spec


def _build(cls, d: Any, where: str):
    if isinstance(d, cls):
        return d
    if not isinstance(d, dict):
        raise SpecError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise SpecError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as e:
        raise SpecError(f"{where}: {e}") from None


@dataclass
class LagSpec:
    kind: str = "exponential"  # exponential | constant | uniform
    mean: float = 1.0
    min: float = 0.0
    bound: float = 4.0
    value: float = 0.0

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return self.value
        if self.kind == "uniform":
            return float(rng.uniform(self.min, self.bound))
        # truncated (resampled) exponential on [min, bound]
        span = self.bound - self.min
        while True:
            x = float(rng.exponential(self.mean))
            if x <= span:
                return self.min + x

    @property
    def upper(self) -> float:
        return self.value if self.kind == "constant" else self.bound


@dataclass
class TopologySpec:
    k: int = 4
    devices: int = 64
    ratios: dict = field(default_factory=lambda: dict(POPULATION_RATIOS))
    aggs_per_pod: int = 2
    min_core: int = 2
    min_mb: int = 2


@dataclass
class VendorSpec:
    name: str
    ratio: float = 1.0
    os_versions: list = field(default_factory=lambda: ["1.0"])
    dialect: int | None = None


@dataclass
class CausalRule:
    name: str
    cause: str
    effect: str
    channel: str = "WITHIN_DEVICE"
    tier: str = "TOR"
    vendor: str | None = None
    target_tier: str | None = None
    lag: LagSpec = field(default_factory=LagSpec)
    probability: float = 0.9
    rate_per_day: float = 10.0


@dataclass
class NoiseSpec:
    events: list | None = None
    rate_per_day: float = 2.0
    tiers: list | None = None
    background_effect_rate: float = 0.0


@dataclass
class ProblemType:
    name: str
    steps: list  # [{"event", "device": origin|peer, "count": [lo, hi]}]
    edges: list  # [{"src", "dst", "channel", "lag": LagSpec-dict}]
    tiers: list = field(default_factory=lambda: ["TOR", "AGG", "CORE", "MB"])
    peer_tiers: list | None = None
    weight: float = 1.0


@dataclass
class BurstSpec:
    count: int = 0
    spacing: float = 120.0
    dup_spacing: float = 1.0
    types: list = field(default_factory=list)


@dataclass
class ScenarioSpec:
    seed: int = 0
    version: int = SPEC_SCHEMA_VERSION
    topology: TopologySpec = field(default_factory=TopologySpec)
    vendors: list = field(default_factory=lambda: [VendorSpec("acme", 0.5, ["1.0"]), VendorSpec("zenith", 0.5, ["7.2"])])
    rules: list = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    duration_days: int = 2
    start: str = "2024-03-01"
    granularity: float = 1.0
    config_edits: int = 0
    timers: dict = field(default_factory=lambda: {"OSPF": {"dead-interval": [40, 30]}, "BGP": {"hold-time": [180, 90]}})
    bursts: BurstSpec = field(default_factory=BurstSpec)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if d.get("version", SPEC_SCHEMA_VERSION) != SPEC_SCHEMA_VERSION:
            raise SpecError(f"unsupported scenario version {d.get('version')}")
        if "topology" in d:
            d["topology"] = _build(TopologySpec, d["topology"], "topology")
        if "vendors" in d:
            d["vendors"] = [_build(VendorSpec, v, "vendors[]") for v in d["vendors"]]
        if "rules" in d:
            rules = []
            for r in d["rules"]:
                r = dict(r)
                if "lag" in r:
                    r["lag"] = _build(LagSpec, r["lag"], "rule.lag")
                rules.append(_build(CausalRule, r, "rules[]"))
            d["rules"] = rules
        if "noise" in d:
            d["noise"] = _build(NoiseSpec, d["noise"], "noise")
        if "bursts" in d:
            b = dict(d["bursts"])
            b["types"] = [_build(ProblemType, t, "bursts.types[]") for t in b.get("types", [])]
            d["bursts"] = _build(BurstSpec, b, "bursts")
        spec = _build(cls, d, "scenario")
        spec.validate()
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return json.loads(canonical_json(asdict(self)))

    def validate(self) -> None:
        ratios = self.topology.ratios
        if set(ratios) - {"TOR", "AGG", "CORE", "MB"}:
            raise SpecError(f"unknown tiers in ratios: {sorted(ratios)}")
        if abs(sum(ratios.values()) - 1.0) > 1e-6:
            raise SpecError("topology ratios must sum to 1")
        if not self.vendors:
            raise SpecError("at least one vendor required")
        if abs(sum(v.ratio for v in self.vendors) - 1.0) > 1e-6:
            raise SpecError("vendor ratios must sum to 1")
        if self.topology.k < 1 or self.duration_days < 1 or self.granularity <= 0:
            raise SpecError("k, duration_days and granularity must be positive")
        names = {v.name for v in self.vendors}
        for r in self.rules:
            for ev in (r.cause, r.effect):
                if ev not in CATALOG:
                    raise SpecError(f"rule {r.name}: unknown event {ev!r}")
            if r.vendor is not None and r.vendor not in names:
                raise SpecError(f"rule {r.name}: unknown vendor {r.vendor!r}")
            if r.channel not in CHANNELS_BASE and not r.channel.startswith("PROTOCOL:"):
                raise SpecError(f"rule {r.name}: bad channel {r.channel!r}")
            if not 0 <= r.probability <= 1:
                raise SpecError(f"rule {r.name}: probability outside [0, 1]")
            if r.lag.upper > self.channel_bound(r.channel):
                raise SpecError(
                    f"rule {r.name}: lag bound {r.lag.upper} exceeds channel bound {self.channel_bound(r.channel)}"
                )
        for ev in self.noise.events or ():
            if ev not in CATALOG:
                raise SpecError(f"noise: unknown event {ev!r}")
        for t in self.bursts.types:
            for s in t.steps:
                if s["event"] not in CATALOG:
                    raise SpecError(f"problem type {t.name}: unknown event {s['event']!r}")
        if self.config_edits and self.duration_days < 2:
            raise SpecError("config edits need at least two days")

    def channel_bound(self, channel: str, intra_lag: float = 5.0, slack: float = 1.0) -> float:
        """Smallest delay bound the emitted configs imply for *channel*
        under default engine knobs."""
        if channel in CHANNELS_BASE:
            return intra_lag
        proto = channel.split(":", 1)[1]
        if proto == "VLAN":
            return slack
        timers = self.timers.get(proto, {})
        vals = [min(v) if isinstance(v, list) else v for v in timers.values()]
        return (min(vals) if vals else 0.0) + slack


# --------------------------------------------------------------------------
# topology


@dataclass
class Device:
    name: str
    tier: str
    pod: int | None
    vendor: str
    os: str
    dialect: int
    interfaces: list = field(default_factory=list)  # (ifname, peer, peer_if)
    ospf: list = field(default_factory=list)
    bgp: list = field(default_factory=list)
    vlans: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def tier_counts(topo: TopologySpec) -> dict[str, int]:
    n, r = topo.devices, topo.ratios
    core = max(topo.min_core, round(n * r.get("CORE", 0)))
    mb = max(topo.min_mb, round(n * r.get("MB", 0)))
    agg = max(topo.k * topo.aggs_per_pod, round(n * r.get("AGG", 0)))
    tor = n - core - mb - agg
    if tor < topo.k:
        raise SpecError(f"{n} devices too few for k={topo.k} pods")
    return {"TOR": tor, "AGG": agg, "CORE": core, "MB": mb}


def _allocate(n: int, weights: list[float]) -> list[int]:
    raw = [n * w for w in weights]
    out = [math.floor(x) for x in raw]
    for i in sorted(range(len(raw)), key=lambda i: (-(raw[i] - out[i]), i))[: n - sum(out)]:
        out[i] += 1
    return out


def build_topology(spec: ScenarioSpec) -> dict[str, Device]:
    topo = spec.topology
    counts = tier_counts(topo)
    k = topo.k
    vend = spec.vendors
    dialect = {v.name: (v.dialect if v.dialect is not None else i % 2) for i, v in enumerate(vend)}
    pod_vendor: list[VendorSpec] = []
    for v, c in zip(vend, _allocate(k, [v.ratio for v in vend])):
        pod_vendor += [v] * c
    seen: Counter = Counter()
    pod_os = []
    for v in pod_vendor:
        pod_os.append(v.os_versions[seen[v.name] % len(v.os_versions)])
        seen[v.name] += 1
    devs: dict[str, Device] = {}

    def add(name, tier, pod, v, os_):
        devs[name] = Device(name, tier, pod, v.name, os_, dialect[v.name])
        return devs[name]

    pods_agg: list[list[Device]] = [[] for _ in range(k)]
    pods_tor: list[list[Device]] = [[] for _ in range(k)]
    for i in range(counts["AGG"]):
        p = i % k
        pods_agg[p].append(add(f"p{p}-agg{len(pods_agg[p])}", "AGG", p, pod_vendor[p], pod_os[p]))
    for i in range(counts["TOR"]):
        p = i % k
        pods_tor[p].append(add(f"p{p}-tor{len(pods_tor[p]):03d}", "TOR", p, pod_vendor[p], pod_os[p]))
    cores = [add(f"core{i}", "CORE", None, vend[0], vend[0].os_versions[0]) for i in range(counts["CORE"])]
    mbs = [add(f"mb{i}", "MB", 0, vend[0], vend[0].os_versions[0]) for i in range(counts["MB"])]

    def link(a: Device, b: Device):
        ia, ib = f"eth{len(a.interfaces) + 1}", f"eth{len(b.interfaces) + 1}"
        a.interfaces.append((ia, b.name, ib))
        b.interfaces.append((ib, a.name, ia))

    def peer(attr, a: Device, b: Device):
        getattr(a, attr).append(b.name)
        getattr(b, attr).append(a.name)

    for p in range(k):
        for t in pods_tor[p]:
            for a in pods_agg[p]:
                link(t, a)
                peer("ospf", t, a)
            t.vlans.append(100 + p)
        for i, a in enumerate(pods_agg[p]):
            a.vlans.append(100 + p)
            for b in pods_agg[p][i + 1:]:
                peer("ospf", a, b)
            for c in cores:
                link(a, c)
                peer("ospf", a, c)
    for i, c in enumerate(cores):
        for d in cores[i + 1:]:
            link(c, d)
            peer("bgp", c, d)
    for i, m in enumerate(mbs):
        a = pods_agg[(i // 2) % k][0]
        link(m, a)
        peer("bgp", m, a)
        if i % 2 == 1:
            link(mbs[i - 1], m)
            mbs[i - 1].vlans.append(900 + i // 2)
            m.vlans.append(900 + i // 2)
    for d in devs.values():
        d.extra = {"snmp": "snmp { community public ; }", "logging": "logging host 10.255.0.1", "ntp": "ntp server 10.255.0.2"}
    return devs


def render_device(d: Device, timers: dict) -> str:
    lines = [f"device {d.name} {{", f"  vendor {d.vendor};", f"  os {d.os};", f"  tier {d.tier};"]
    for ifn, peer_dev, peer_if in d.interfaces:
        lines.append(f"  interface {ifn} peer {peer_dev}:{peer_if};")
    for proto, peers in (("ospf", d.ospf), ("bgp", d.bgp)):
        if not peers:
            continue
        body = [f"peer {p};" for p in peers]
        for tname, vals in sorted(timers.get(proto.upper(), {}).items()):
            v = vals[d.dialect % len(vals)] if isinstance(vals, list) else vals
            body.append(f"{tname} {v};")
        lines.append(f"  {proto} {{ {' '.join(body)} }}")
    for v in d.vlans:
        lines.append(f"  vlan {v};")
    for key in sorted(d.extra):
        text = d.extra[key]
        lines.append(f"  {text}" if text.endswith("}") else f"  {text};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def neighbours(devs: dict[str, Device], channel: str) -> dict[str, list[str]]:
    out: dict[str, set] = {n: set() for n in devs}
    if channel == "PHYSICAL":
        for d in devs.values():
            out[d.name].update(p for _, p, _ in d.interfaces)
    elif channel == "PROTOCOL:OSPF":
        for d in devs.values():
            out[d.name].update(d.ospf)
    elif channel == "PROTOCOL:BGP":
        for d in devs.values():
            out[d.name].update(d.bgp)
    elif channel == "PROTOCOL:VLAN":
        by_vlan: dict[int, list[str]] = {}
        for d in devs.values():
            for v in d.vlans:
                by_vlan.setdefault(v, []).append(d.name)
        for ms in by_vlan.values():
            for a in ms:
                out[a].update(b for b in ms if b != a)
    return {k: sorted(v) for k, v in out.items()}


# --------------------------------------------------------------------------
# ground truth


@dataclass
class GroundTruth:
    edges: list = field(default_factory=list)  # {"cause","effect" (signatures),"channel","max_lag","rule"}
    lineage: list = field(default_factory=list)  # {"id","line","kind","rule","parent"}
    config_edits: list = field(default_factory=list)  # {"device","date","section"}
    bursts: list = field(default_factory=list)
    expected_signatures: list = field(default_factory=list)
    expected_tier_share: dict = field(default_factory=dict)

    def edge_set(self) -> set[tuple[tuple[str, ...], tuple[str, ...]]]:
        return {(tuple(e["cause"]), tuple(e["effect"])) for e in self.edges}

    def records(self):
        yield {"record": "meta", **header("ground_truth", SPEC_SCHEMA_VERSION)}
        for s in self.expected_signatures:
            yield {"record": "signature", "signature": list(s)}
        for e in self.edges:
            yield {"record": "edge", **e}
        for c in self.config_edits:
            yield {"record": "config_edit", **c}
        for b in self.bursts:
            yield {"record": "burst", **b}
        if self.expected_tier_share:
            yield {"record": "tier_share", "share": self.expected_tier_share}
        for l in self.lineage:
            yield {"record": "lineage", **l}

    def write(self, path: str | Path) -> None:
        write_ndjson(path, self.records())

    @classmethod
    def read(cls, path: str | Path) -> "GroundTruth":
        gt = cls()
        for r in read_ndjson(path):
            kind = r.pop("record")
            if kind == "signature":
                gt.expected_signatures.append(tuple(r["signature"]))
            elif kind == "edge":
                gt.edges.append(r)
            elif kind == "config_edit":
                gt.config_edits.append(r)
            elif kind == "burst":
                gt.bursts.append(r)
            elif kind == "tier_share":
                gt.expected_tier_share = r["share"]
            elif kind == "lineage":
                gt.lineage.append(r)
        return gt


@dataclass
class Scenario:
    spec: ScenarioSpec
    devices: dict[str, Device]
    configs: dict[str, dict[str, str]]  # date -> device -> text
    lines: list[str]
    truth: GroundTruth

    def manifest(self) -> dict:
        phys = sorted({tuple(sorted((d.name, p))) for d in self.devices.values() for _, p, _ in d.interfaces})
        return {
            "devices": {
                n: {"tier": d.tier, "pod": d.pod, "vendor": d.vendor, "os": d.os, "dialect": d.dialect}
                for n, d in sorted(self.devices.items())
            },
            "physical": [list(e) for e in phys],
        }

    def write(self, out: str | Path) -> Path:
        out = Path(out)
        for day, devs in self.configs.items():
            ddir = out / "configs" / day
            ddir.mkdir(parents=True, exist_ok=True)
            for name, text in devs.items():
                (ddir / f"{name}.cfg").write_text(text)
        (out / "syslog.log").write_text("".join(l + "\n" for l in self.lines))
        self.truth.write(out / "truth.ndjson")
        write_json(out / "manifest.json", self.manifest())
        write_json(out / "scenario.json", self.spec.to_dict())
        return out


# --------------------------------------------------------------------------
# generation


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


class _Emitter:
    def __init__(self, spec: ScenarioSpec, devs: dict[str, Device]):
        self.spec = spec
        self.devs = devs
        self.events: list[dict] = []
        self.words: dict[tuple[str, int], set] = {}

    def fill(self, event: str, dev: Device, rng: np.random.Generator) -> str:
        fmt = CATALOG[event][1][dev.dialect]
        vals = {}
        ifs = [i for i, _, _ in dev.interfaces] or ["eth0"]
        # str.format reuses a name, so draw per slot by rewriting repeated names
        parts = fmt.split("{")
        out = [parts[0]]
        for part in parts[1:]:
            name, rest = part.split("}", 1)
            if name == "iface":
                v = ifs[int(rng.integers(len(ifs)))]
            elif name == "ip":
                v = "10.%d.%d.%d" % tuple(int(x) for x in rng.integers(0, 255, 3))
            elif name == "num":
                v = str(int(rng.integers(1, 49)))
            elif name == "hex":
                v = hex(int(rng.integers(16, 4096)))
            elif name == "mac":
                v = ":".join("%02x" % int(x) for x in rng.integers(0, 256, 6))
            elif name == "word":
                v = _WORDS[int(rng.integers(len(_WORDS)))]
                self.words.setdefault((event, dev.dialect), set()).add(v)
            else:  # pragma: no cover
                raise SpecError(f"unknown placeholder {name}")
            vals[name] = v
            out.append(v + rest)
        return "".join(out)

    def emit(self, t: float, dev: Device, event: str, rng, kind: str, rule: str | None = None, parent: int | None = None) -> int:
        eid = len(self.events)
        self.events.append(
            {"id": eid, "t": t, "device": dev.name, "event": event, "dialect": dev.dialect,
             "msg": self.fill(event, dev, rng), "kind": kind, "rule": rule, "parent": parent}
        )
        return eid


def generate(spec: ScenarioSpec | dict) -> Scenario:
    """Build configs, syslog lines and ground truth for *spec* (deterministic in ``spec.seed``)."""
    if isinstance(spec, dict):
        spec = ScenarioSpec.from_dict(spec)
    spec.validate()
    devs = build_topology(spec)
    names = sorted(devs)
    start = datetime.fromisoformat(spec.start).replace(tzinfo=timezone.utc)
    t0 = start.timestamp()
    horizon = spec.duration_days * 86400.0
    em = _Emitter(spec, devs)
    nbr_cache: dict[str, dict[str, list[str]]] = {}

    def nbrs(ch):
        if ch not in nbr_cache:
            nbr_cache[ch] = neighbours(devs, ch)
        return nbr_cache[ch]

    truth_edges: dict[tuple, dict] = {}

    # rule-driven cause/effect events
    for ri, rule in enumerate(spec.rules):
        rng = _rng(spec.seed, 1, ri)
        eligible = [n for n in names if devs[n].tier == rule.tier and (rule.vendor is None or devs[n].vendor == rule.vendor)]
        for n in eligible:
            d = devs[n]
            k = int(rng.poisson(rule.rate_per_day * spec.duration_days))
            for t in np.sort(rng.uniform(0, horizon, k)).tolist():
                cid = em.emit(t0 + t, d, rule.cause, rng, "cause", rule.name)
                if rng.random() >= rule.probability:
                    continue
                if rule.channel == "WITHIN_DEVICE":
                    target = d
                else:
                    cands = [m for m in nbrs(rule.channel)[n] if rule.target_tier is None or devs[m].tier == rule.target_tier]
                    if not cands:
                        continue
                    target = devs[cands[int(rng.integers(len(cands)))]]
                lag = rule.lag.sample(rng)
                em.emit(t0 + t + lag, target, rule.effect, rng, "effect", rule.name, cid)
                key = (rule.cause, d.dialect, rule.effect, target.dialect, rule.channel)
                truth_edges.setdefault(key, {"rule": rule.name, "max_lag": rule.lag.upper})
        if spec.noise.background_effect_rate > 0:
            # spontaneous effects on the devices the rule can target
            targets = set()
            for n in eligible:
                if rule.channel == "WITHIN_DEVICE":
                    targets.add(n)
                else:
                    targets.update(m for m in nbrs(rule.channel)[n] if rule.target_tier is None or devs[m].tier == rule.target_tier)
            rate = rule.rate_per_day * spec.noise.background_effect_rate
            for n in sorted(targets):
                k = int(rng.poisson(rate * spec.duration_days))
                for t in np.sort(rng.uniform(0, horizon, k)).tolist():
                    em.emit(t0 + t, devs[n], rule.effect, rng, "noise")

    # independent noise
    used = {r.cause for r in spec.rules} | {r.effect for r in spec.rules}
    pool = spec.noise.events if spec.noise.events is not None else [e for e in CATALOG if e not in used]
    rng = _rng(spec.seed, 2)
    for n in names:
        if spec.noise.tiers is not None and devs[n].tier not in spec.noise.tiers:
            continue
        for ev in pool:
            k = int(rng.poisson(spec.noise.rate_per_day * spec.duration_days))
            for t in rng.uniform(0, horizon, k).tolist():
                em.emit(t0 + t, devs[n], ev, rng, "noise")

    bursts = _generate_bursts(spec, devs, em, t0, nbrs, truth_edges)

    # config history with planted edits
    rng = _rng(spec.seed, 4)
    edits = []
    if spec.config_edits:
        slots = [(day, n) for day in range(1, spec.duration_days) for n in names]
        if spec.config_edits > len(slots):
            raise SpecError("more config edits than (device, day) slots")
        pick = sorted(rng.choice(len(slots), size=spec.config_edits, replace=False).tolist())
        for c, i in enumerate(pick):
            day, n = slots[i]
            sec = _EDIT_SECTIONS[int(rng.integers(len(_EDIT_SECTIONS)))]
            edits.append({"device": n, "day": day, "section": sec, "n": c})
    configs: dict[str, dict[str, str]] = {}
    for day in range(spec.duration_days):
        for e in edits:
            if e["day"] == day:
                d = devs[e["device"]]
                if e["section"] == "snmp":
                    d.extra["snmp"] = f"snmp {{ community rotated{e['n']} ; }}"
                elif e["section"] == "logging":
                    d.extra["logging"] = f"logging host 10.254.{e['n'] // 250}.{e['n'] % 250 + 1}"
                else:
                    d.extra["ntp"] = f"ntp server 10.253.{e['n'] // 250}.{e['n'] % 250 + 1}"
        ds = (start + timedelta(days=day)).date().isoformat()
        configs[ds] = {n: render_device(devs[n], spec.timers) for n in names}

    # lines
    order = sorted(em.events, key=lambda e: (e["t"], e["id"]))
    gran = spec.granularity
    lines, lineage, line_of = [], [], {}
    for i, e in enumerate(order):
        ts = math.floor(e["t"] / gran + 1e-9) * gran
        sev = CATALOG[e["event"]][0]
        lines.append(f"{format_timestamp(ts, fractional=gran < 1)} {e['device']} local7.{sev} {e['msg']}")
        line_of[e["id"]] = i
    for e in order:
        lineage.append({
            "id": e["id"], "line": line_of[e["id"]], "kind": e["kind"], "rule": e["rule"],
            "parent": e["parent"], "device": e["device"], "event": e["event"], "dialect": e["dialect"],
        })
    for b in bursts:
        b["lines"] = sorted(line_of[i] for i in b.pop("event_ids"))

    emitted = sorted({(e["event"], e["dialect"]) for e in em.events})
    sigs = []
    for ev, dia in emitted:
        words = em.words.get((ev, dia))
        sigs.append(format_signature(ev, dia, next(iter(words)) if words and len(words) == 1 else None))

    def sig(ev, dia):
        words = em.words.get((ev, dia))
        return list(format_signature(ev, dia, next(iter(words)) if words and len(words) == 1 else None))

    edges = [
        {"cause": sig(c, cd), "effect": sig(e, ed), "channel": ch, **meta}
        for (c, cd, e, ed, ch), meta in sorted(truth_edges.items())
        if (c, cd) in set(emitted) and (e, ed) in set(emitted)
    ]
    truth = GroundTruth(
        edges=edges,
        lineage=lineage,
        config_edits=[
            {"device": e["device"], "date": (start + timedelta(days=e["day"])).date().isoformat(), "section": e["section"]}
            for e in edits
        ],
        bursts=bursts,
        expected_signatures=sorted(set(sigs)),
        expected_tier_share=expected_tier_share(spec, devs) if spec.bursts.count else {},
    )
    return Scenario(spec, devs, configs, lines, truth)


def _eligible_origins(pt: ProblemType, devs, nbrs) -> list[tuple[str, list[str]]]:
    needs_peer = any(s["device"] == "peer" for s in pt.steps)
    out = []
    for n in sorted(devs):
        if devs[n].tier not in pt.tiers:
            continue
        peers = []
        if needs_peer:
            peers = [m for m in nbrs("PHYSICAL")[n] if pt.peer_tiers is None or devs[m].tier in pt.peer_tiers]
            if not peers:
                continue
        out.append((n, peers))
    return out


def expected_tier_share(spec: ScenarioSpec, devs: dict[str, Device]) -> dict[str, float]:
    """Exact probability that a burst touches each tier, given uniform
    origin choice among eligible devices and uniform peer choice."""
    types = spec.bursts.types
    if not types:
        return {}
    nb = {}

    def nbrs(ch):
        if ch not in nb:
            nb[ch] = neighbours(devs, ch)
        return nb[ch]

    wsum = sum(t.weight for t in types)
    share = {t: 0.0 for t in ("TOR", "AGG", "CORE", "MB")}
    for pt in types:
        origins = _eligible_origins(pt, devs, nbrs)
        if not origins:
            continue
        uses_origin = any(s["device"] == "origin" for s in pt.steps)
        for tier in share:
            acc = 0.0
            for o, peers in origins:
                if uses_origin and devs[o].tier == tier:
                    acc += 1.0
                elif peers:
                    acc += sum(devs[m].tier == tier for m in peers) / len(peers)
            share[tier] += pt.weight / wsum * acc / len(origins)
    return share


def _generate_bursts(spec, devs, em: _Emitter, t0, nbrs, truth_edges) -> list[dict]:
    bs = spec.bursts
    if not bs.count or not bs.types:
        return []
    rng = _rng(spec.seed, 3)
    weights = np.array([t.weight for t in bs.types], dtype=float)
    weights /= weights.sum()
    origins = {t.name: _eligible_origins(t, devs, nbrs) for t in bs.types}
    out = []
    for b in range(bs.count):
        pt: ProblemType = bs.types[int(rng.choice(len(bs.types), p=weights))]
        cands = origins[pt.name]
        if not cands:
            raise SpecError(f"problem type {pt.name} has no eligible origin device")
        o, peers = cands[int(rng.integers(len(cands)))]
        peer = peers[int(rng.integers(len(peers)))] if peers else None
        start = t0 + b * bs.spacing
        n_steps = len(pt.steps)
        counts = [int(rng.integers(s["count"][0], s["count"][1] + 1)) for s in pt.steps]
        first = [None] * n_steps
        last = [None] * n_steps
        parents: dict[int, list] = {i: [] for i in range(n_steps)}
        for e in pt.edges:
            parents[e["dst"]].append(e)
        ids = []
        node_ids: list[list[int]] = [[] for _ in range(n_steps)]
        # steps are listed in topological order
        for i, s in enumerate(pt.steps):
            dev = devs[o] if s["device"] == "origin" else devs[peer]
            t = start
            parent_id = None
            for e in parents[i]:
                lag = _build(LagSpec, e.get("lag", {"kind": "constant", "value": 1.0}), "edge.lag").sample(rng)
                if last[e["src"]] + lag > t:
                    t = last[e["src"]] + lag
                    parent_id = node_ids[e["src"]][-1]
            first[i] = t
            for c in range(counts[i]):
                eid = em.emit(t + c * bs.dup_spacing, dev, s["event"], rng, "burst", pt.name, parent_id)
                node_ids[i].append(eid)
                ids.append(eid)
                parent_id = eid if parent_id is None or c == 0 else eid - 1
            last[i] = t + (counts[i] - 1) * bs.dup_spacing
        for e in pt.edges:
            sd = devs[o] if pt.steps[e["src"]]["device"] == "origin" else devs[peer]
            dd = devs[o] if pt.steps[e["dst"]]["device"] == "origin" else devs[peer]
            lag = _build(LagSpec, e.get("lag", {"kind": "constant", "value": 1.0}), "edge.lag")
            key = (pt.steps[e["src"]]["event"], sd.dialect, pt.steps[e["dst"]]["event"], dd.dialect, e["channel"])
            prev = truth_edges.get(key)
            ml = max(lag.upper, prev["max_lag"]) if prev else lag.upper
            truth_edges[key] = {"rule": pt.name, "max_lag": ml}
        dialects = [(devs[o] if s["device"] == "origin" else devs[peer]).dialect for s in pt.steps]
        variant = [c >= 2 for c in counts]
        touched = sorted({devs[o].tier} | ({devs[peer].tier} if peer else set()))
        out.append({
            "id": b, "type": pt.name, "origin": o, "peer": peer, "start": start,
            "end": max(last), "counts": counts,
            "class_key": canonical_json([pt.name, dialects, variant]),
            "type_key": canonical_json([pt.name, variant]),
            "tiers": touched, "event_ids": ids,
        })
    return out


# --------------------------------------------------------------------------
# scoring


@dataclass
class Score:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    precision_undefined: bool = False
    recall_undefined: bool = False
    per_channel: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _prf(inferred: set, truth: set):
    tp = len(inferred & truth)
    fp = len(inferred - truth)
    fn = len(truth - inferred)
    p_undef = not inferred
    r_undef = not truth
    p = 1.0 if p_undef else tp / len(inferred)
    r = 1.0 if r_undef else tp / len(truth)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f, tp, fp, fn, p_undef, r_undef


def score(inferred, truth: GroundTruth, dictionary) -> Score:
    """Precision/recall/F1 of M's template-level edges against planted edges.

    Empty-set conventions: no inferred edges gives precision 1 with
    ``precision_undefined`` set; likewise recall for an empty truth.
    """
    sig_to_id = {t.signature: t.id for t in dictionary.templates}
    missing = [s for s in truth.expected_signatures if tuple(s) not in sig_to_id]
    if missing:
        raise ScoreError(f"dictionary lacks {len(missing)} planted signatures, e.g. {' '.join(missing[0])!r}")
    if inferred.n != len(dictionary):
        raise ScoreError(f"matrix has n={inferred.n} but dictionary has {len(dictionary)} templates")
    if inferred.dictionary_fingerprint and inferred.dictionary_fingerprint != dictionary.fingerprint:
        raise ScoreError("matrix was built against a different dictionary")
    t_edges = {(sig_to_id[tuple(e["cause"])], sig_to_id[tuple(e["effect"])]) for e in truth.edges}
    t_chan = {(sig_to_id[tuple(e["cause"])], sig_to_id[tuple(e["effect"])], e["channel"]) for e in truth.edges}
    i_edges = inferred.edges()
    i_chan = inferred.channel_edge_set()
    p, r, f, tp, fp, fn, pu, ru = _prf(i_edges, t_edges)
    # a device pair can share several channels, so an inferred edge counts as
    # correct in every channel it was reported on when its template pair is planted
    per = {}
    for ch in sorted({c for *_, c in t_chan} | {c for *_, c in i_chan}):
        inf = {(i, j) for i, j, c in i_chan if c == ch}
        tru = {(i, j) for i, j, c in t_chan if c == ch}
        ctp = len(inf & t_edges)
        cfn = len(tru - i_edges)
        cp = ctp / len(inf) if inf else 1.0
        cr = (len(tru) - cfn) / len(tru) if tru else 1.0
        per[ch] = {"precision": cp, "recall": cr, "tp": ctp, "fp": len(inf) - ctp, "fn": cfn}
    return Score(p, r, f, tp, fp, fn, pu, ru, per)


def truth_edges_by_id(truth: GroundTruth, dictionary) -> list[tuple[int, int, str, float]]:
    sig_to_id = {t.signature: t.id for t in dictionary.templates}
    out = []
    for e in truth.edges:
        c, f = sig_to_id.get(tuple(e["cause"])), sig_to_id.get(tuple(e["effect"]))
        if c is None or f is None:
            raise ScoreError("dictionary lacks a planted signature")
        out.append((c, f, e["channel"], float(e["max_lag"])))
    return out


def load_builtin(name: str) -> ScenarioSpec:
    """One of the scenario documents shipped in ``logprophet/data/scenarios``."""
    from importlib import resources

    text = resources.files("logprophet").joinpath(f"data/scenarios/{name}.json").read_text()
    return ScenarioSpec.from_dict(json.loads(text))
