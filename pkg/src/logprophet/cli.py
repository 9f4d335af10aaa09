"""Command-line entry point. Each subcommand is a thin file-to-file wrapper
over one pipeline stage, so stages can be run and re-run independently.

Offline:  synth -> extract -> model -> infer
Online:   build -> report
Checking: score
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import click

from ._io import TOOL_VERSION, canonical_json, content_hash, header, read_json, read_ndjson, write_json, write_ndjson
from .analysis import write_reports
from .causality import CausalityConfig, CausalityMatrix, build_causality_matrix
from .domain_model import DomainModel, build_domain_model, load_history, load_snapshot, model_from_history
from .errors import ConfigError, LogProphetError, VersionMismatch
from .graph_builder import ProblemGraph, WindowConfig, build_pgs, to_dot
from .synthgen import GroundTruth, ScenarioSpec, generate, load_builtin, score
from .templates import IngestStats, MatchStats, TemplateDictionary, TemplateEvent, extract_templates, match_stream, read_syslog_file

CONFIG_SCHEMA_VERSION = 1
EVENTS_SCHEMA_VERSION = 1
_DATE_DIR = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass
class TemplateKnobs:
    threshold: float = 0.75
    year: int = 1970


@dataclass
class ModelKnobs:
    slack: float = 1.0


@dataclass
class WindowKnobs:
    delta: float = 300.0
    emission: str = "GAP_BASED"
    gap: float = 30.0
    chain_duplicates: bool = True


@dataclass
class PipelineConfig:
    """Every tunable knob, versioned. Unknown keys are rejected."""

    version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    workers: int = 1
    templates: TemplateKnobs = field(default_factory=TemplateKnobs)
    model: ModelKnobs = field(default_factory=ModelKnobs)
    causality: dict = field(default_factory=dict)
    windows: WindowKnobs = field(default_factory=WindowKnobs)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        def build(klass, data, where):
            if not isinstance(data, dict):
                raise ConfigError(f"{where}: expected an object")
            known = {f.name for f in fields(klass)}
            extra = sorted(set(data) - known)
            if extra:
                raise ConfigError(f"{where}: unknown keys {extra}", keys=extra)
            return data

        build(cls, d, "config")
        if d.get("version", CONFIG_SCHEMA_VERSION) != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {d.get('version')}")
        causality = build(CausalityConfig, d.get("causality", {}), "causality")
        return cls(
            version=d.get("version", CONFIG_SCHEMA_VERSION),
            seed=d.get("seed", 0),
            workers=d.get("workers", 1),
            templates=TemplateKnobs(**build(TemplateKnobs, d.get("templates", {}), "templates")),
            model=ModelKnobs(**build(ModelKnobs, d.get("model", {}), "model")),
            causality=dict(causality),
            windows=WindowKnobs(**build(WindowKnobs, d.get("windows", {}), "windows")),
        )

    def causality_config(self) -> CausalityConfig:
        knobs = {"seed": self.seed, **self.causality, "workers": self.workers}
        return CausalityConfig(**knobs)

    def window_config(self) -> WindowConfig:
        return WindowConfig(self.windows.delta, self.windows.emission, self.windows.gap)

    def resolved(self) -> dict:
        """The config as embedded in outputs; ``workers`` is left out because
        it must not change any result."""
        d = asdict(self)
        d.pop("workers")
        d["causality"] = self.causality_config().to_dict()
        return d

    @property
    def hash(self) -> str:
        return content_hash(self.resolved())


@dataclass
class _Ctx:
    config: PipelineConfig
    fmt: str


def _emit(ctx: _Ctx, payload: dict) -> None:
    if ctx.fmt == "csv":
        for k, v in payload.items():
            click.echo(f"{k},{v if not isinstance(v, (dict, list)) else canonical_json(v)}")
    else:
        click.echo(json.dumps(payload, sort_keys=True, indent=1))


def _check_meta(doc: dict, kind: str) -> None:
    meta = doc.get("meta", {})
    if meta.get("kind") != kind:
        raise VersionMismatch(f"expected a {kind} file, got {meta.get('kind')!r}")


def _load_dictionary(path: str) -> TemplateDictionary:
    doc = read_json(path)
    _check_meta(doc, "template_dictionary")
    d = TemplateDictionary.from_dict(doc)
    if doc.get("fingerprint") not in (None, d.fingerprint):
        raise VersionMismatch("dictionary fingerprint does not match its templates", path=path)
    return d


def _load_matrix(path: str) -> CausalityMatrix:
    doc = read_json(path)
    _check_meta(doc, "causality_matrix")
    return CausalityMatrix.from_dict(doc)


def _load_model(path: str) -> DomainModel:
    doc = read_json(path)
    _check_meta(doc, "domain_model")
    return DomainModel.from_dict(doc)


def _load_events(path: str) -> tuple[dict, list[TemplateEvent]]:
    rows = read_ndjson(path)
    meta = next(rows, None)
    if not meta or meta.get("kind") != "template_events":
        raise VersionMismatch("not a template event stream", path=path)
    if meta.get("schema_version") != EVENTS_SCHEMA_VERSION:
        raise VersionMismatch(f"event stream schema {meta.get('schema_version')} unsupported", path=path)
    return meta, [TemplateEvent.from_dict(r) for r in rows]


# --------------------------------------------------------------------------


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(TOOL_VERSION, prog_name="logprophet")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Pipeline config JSON.")
@click.option("--seed", type=int, default=None, help="Override the seed from the config or scenario.")
@click.option("--workers", type=int, default=None, help="Worker threads (results do not depend on this).")
@click.option("--format", "fmt", type=click.Choice(["json", "dot", "csv"]), default="json",
              help="Summary format on stdout; 'dot' also makes build write one DOT file per PG.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, seed: int | None, workers: int | None, fmt: str) -> None:
    """Log-Prophet: syslog templates, causality inference and problem graphs."""
    cfg = PipelineConfig.from_dict(read_json(config_path)) if config_path else PipelineConfig()
    if seed is not None:
        cfg.seed = seed
    if workers is not None:
        cfg.workers = workers
    ctx.obj = _Ctx(cfg, fmt)


@main.command()
@click.argument("spec")
@click.argument("out", type=click.Path(file_okay=False))
@click.pass_obj
def synth(ctx: _Ctx, spec: str, out: str) -> None:
    """Generate a scenario. SPEC is a JSON file or a built-in name
    (default, null, longitudinal). Writes configs/, syslog.log,
    truth.ndjson, manifest.json and scenario.json under OUT."""
    s = ScenarioSpec.load(spec) if Path(spec).exists() else load_builtin(spec)
    if click.get_current_context().find_root().params.get("seed") is not None:
        s.seed = ctx.config.seed
    sc = generate(s)
    sc.write(out)
    _emit(ctx, {"lines": len(sc.lines), "devices": len(sc.devices), "planted_edges": len(sc.truth.edges),
                "bursts": len(sc.truth.bursts), "out": out})


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--events", "events_out", type=click.Path(dir_okay=False),
              help="Also write the matched template-event stream here.")
@click.pass_obj
def extract(ctx: _Ctx, corpus: str, out: str, events_out: str | None) -> None:
    """Learn a template dictionary from a syslog CORPUS and write it to OUT."""
    knobs = ctx.config.templates
    stats = IngestStats()
    recs = read_syslog_file(corpus, year=knobs.year, stats=stats)
    d = extract_templates(recs, threshold=knobs.threshold)
    Path(out).write_text(json.dumps(d.to_dict(ctx.config.resolved()), sort_keys=True, indent=1) + "\n")
    summary = {"templates": len(d), "lines": stats.lines, "dropped": stats.dropped, "fingerprint": d.fingerprint}
    if events_out:
        ms = MatchStats()
        evs = list(match_stream(d, recs, ms))
        meta = {**header("template_events", EVENTS_SCHEMA_VERSION, ctx.config.resolved()),
                "dictionary_fingerprint": d.fingerprint}
        write_ndjson(events_out, [meta, *(e.to_dict() for e in evs)])
        summary.update(events=len(evs), no_match=ms.no_match)
    _emit(ctx, summary)


@main.command()
@click.argument("config_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.pass_obj
def model(ctx: _Ctx, config_dir: str, out: str) -> None:
    """Build the domain model from CONFIG_DIR: either one snapshot of
    *.cfg files or a history of dated (YYYY-MM-DD) snapshot directories."""
    root = Path(config_dir)
    slack = ctx.config.model.slack
    if any(p.is_dir() and _DATE_DIR.match(p.name) for p in root.iterdir()):
        m = model_from_history(load_history(root), slack=slack)
    else:
        m = build_domain_model(load_snapshot(root), slack=slack)
    Path(out).write_text(json.dumps(m.to_dict(ctx.config.resolved()), sort_keys=True, indent=1) + "\n")
    _emit(ctx, {"devices": len(m.devices), "physical_links": m.physical.number_of_edges(),
                "changes": len(m.changes), "warnings": len(m.warnings)})


@main.command()
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.argument("model_path", metavar="MODEL", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False))
@click.option("--dictionary", type=click.Path(exists=True, dir_okay=False), help="Dictionary the events were matched with.")
@click.option("--audit", type=click.Path(dir_okay=False), help="Audit log path (default: OUT with .audit.ndjson).")
@click.pass_obj
def infer(ctx: _Ctx, events: str, model_path: str, out: str, dictionary: str | None, audit: str | None) -> None:
    """Infer the causality matrix M from an EVENTS stream and a domain MODEL."""
    meta, evs = _load_events(events)
    fp = meta.get("dictionary_fingerprint")
    n = None
    if dictionary:
        d = _load_dictionary(dictionary)
        if fp and fp != d.fingerprint:
            raise VersionMismatch("event stream was matched against a different dictionary")
        fp, n = d.fingerprint, len(d)
    cfg = ctx.config.causality_config()
    M, log = build_causality_matrix(evs, _load_model(model_path), cfg, n_templates=n, dictionary_fingerprint=fp)
    M.config = ctx.config.resolved()
    Path(out).write_text(json.dumps(M.to_dict(), sort_keys=True, indent=1) + "\n")
    audit = audit or str(Path(out).with_suffix(".audit.ndjson"))
    write_ndjson(audit, [header("causality_audit", 1, ctx.config.resolved()), *(x.to_dict() for x in log)])
    _emit(ctx, {"edges": len(M.entries), "discarded": len(log), "audit": audit})


@main.command()
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.argument("dictionary", type=click.Path(exists=True, dir_okay=False))
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(file_okay=False))
@click.pass_obj
def build(ctx: _Ctx, events: str, dictionary: str, matrix: str, out: str) -> None:
    """Build Problem Graphs from EVENTS using DICTIONARY and MATRIX (M).
    Writes OUT/pgs.ndjson, plus OUT/dot/*.dot with --format dot."""
    d = _load_dictionary(dictionary)
    M = _load_matrix(matrix)
    if M.dictionary_fingerprint != d.fingerprint or M.n != len(d):
        raise VersionMismatch("causality matrix was built against a different dictionary",
                              matrix=M.dictionary_fingerprint, dictionary=d.fingerprint)
    meta, evs = _load_events(events)
    if meta.get("dictionary_fingerprint") not in (None, d.fingerprint):
        raise VersionMismatch("event stream was matched against a different dictionary")
    knobs = ctx.config.windows
    pgs = build_pgs(evs, M, ctx.config.window_config(), workers=ctx.config.workers,
                    chain_duplicates=knobs.chain_duplicates)
    outp = Path(out)
    outp.mkdir(parents=True, exist_ok=True)
    pmeta = {**header("problem_graphs", 1, ctx.config.resolved()), "dictionary_fingerprint": d.fingerprint}
    write_ndjson(outp / "pgs.ndjson", [pmeta, *(pg.to_dict() for pg in pgs)])
    if ctx.fmt == "dot":
        (outp / "dot").mkdir(exist_ok=True)
        stamp = f"// logprophet {TOOL_VERSION} config {ctx.config.hash}\n"
        for pg in pgs:
            (outp / "dot" / f"{pg.id}.dot").write_text(stamp + to_dot(pg, d))
    _emit(ctx, {"pgs": len(pgs), "events": len(evs), "out": out})


@main.command()
@click.argument("pg_dir", type=click.Path(file_okay=False))
@click.argument("model_path", metavar="MODEL", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(file_okay=False))
@click.option("--dictionary", type=click.Path(exists=True, dir_okay=False), help="Template dictionary for labels and layers.")
@click.pass_obj
def report(ctx: _Ctx, pg_dir: str, model_path: str, out: str, dictionary: str | None) -> None:
    """Cluster the PGs in PG_DIR and write CSV reports and exemplar DOTs to OUT."""
    src = Path(pg_dir) / "pgs.ndjson"
    pgs: list[ProblemGraph] = []
    if src.exists():
        rows = read_ndjson(src)
        next(rows, None)
        pgs = [ProblemGraph.from_dict(r) for r in rows]
    d = _load_dictionary(dictionary) if dictionary else None
    summary = write_reports(out, pgs, d, _load_model(model_path))
    write_json(Path(out) / "meta.json", header("report", 1, ctx.config.resolved()))
    _emit(ctx, summary)


@main.command(name="score")
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False))
@click.argument("truth", type=click.Path(exists=True, dir_okay=False))
@click.option("--dictionary", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Also write the metrics JSON here.")
@click.pass_obj
def score_cmd(ctx: _Ctx, matrix: str, truth: str, dictionary: str, out: str | None) -> None:
    """Score MATRIX against a scenario's TRUTH file."""
    s = score(_load_matrix(matrix), GroundTruth.read(truth), _load_dictionary(dictionary))
    payload = s.to_dict()
    if out:
        write_json(out, {"meta": header("score", 1, ctx.config.resolved()), **payload})
    _emit(ctx, payload)


def run(argv: list[str] | None = None) -> int:
    """Invoke the CLI, turning pipeline errors into a JSON line on stderr
    and a nonzero exit status."""
    try:
        main.main(args=argv, prog_name="logprophet", standalone_mode=False)
    except LogProphetError as e:
        click.echo(canonical_json(e.to_dict()), err=True)
        return 2
    except click.ClickException as e:
        click.echo(canonical_json({"error": "UsageError", "message": e.format_message()}), err=True)
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except (OSError, ValueError, KeyError) as e:
        click.echo(canonical_json({"error": type(e).__name__, "message": str(e)}), err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
