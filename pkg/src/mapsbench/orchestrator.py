"""Experiment configuration and resumable execution of the full grid.

The grid is corpus x model x strategy x run x question. Each cell is one
:class:`RunKey` and produces one line in ``runs.jsonl``. Lines are committed in
grid order even when attempts run in parallel, so a completed log is
byte-identical no matter how many workers produced it or how often the run was
interrupted and resumed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

import yaml

from .corpus import (
    CorpusError,
    CorpusManifest,
    SamplePlan,
    draw_samples,
    full_set_plan,
    load_corpus,
    manifest_for,
)
from .domain import (
    DEFAULT_LAYER_CAP,
    SCHEMA_VERSION,
    AttemptTrace,
    PriceSheet,
    Question,
    StrategyKind,
    StrategySpec,
    TokenUsage,
    TraceError,
    Variant,
    dumps_record,
    trace_from_dict,
    trace_to_dict,
)
from .engine import AttemptFailed, EngineConfig, provider_call_count, run_attempt
from .prompts import PromptForge, TemplateSet, load_exemplars, packaged_templates
from .providers import (
    ChatProvider,
    Decoding,
    OpenAICompatProvider,
    ProviderConfig,
    ScriptedProvider,
    SimulatedProvider,
)

logger = logging.getLogger(__name__)

RUN_LOG = "runs.jsonl"
FAILURES = "failures.jsonl"
MANIFEST = "manifest.json"

PROVIDER_KINDS = ("openai_compat", "scripted", "simulated")


class ConfigError(ValueError):
    pass


class LogError(ValueError):
    pass


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRef:
    path: Path
    variant: Variant
    sha256: str | None = None


@dataclass(frozen=True)
class ModelConfig:
    id: str
    provider: str = "openai_compat"
    options: Mapping[str, Any] = field(default_factory=dict)

    @property
    def live(self) -> bool:
        return self.provider == "openai_compat"


@dataclass(frozen=True)
class StrategyRef:
    kind: StrategyKind
    max_layers: int | None = None

    def spec_for(self, variant: Variant, exemplars) -> StrategySpec:
        return StrategySpec.for_variant(self.kind, variant, max_layers=self.max_layers, exemplars=exemplars)


@dataclass(frozen=True)
class ExperimentConfig:
    corpora: tuple[CorpusRef, ...]
    models: tuple[ModelConfig, ...]
    strategies: tuple[StrategyRef, ...]
    output_dir: Path
    prices_path: Path
    sample: SamplePlan | None = None
    seed: int = 0
    parallel: int = 1
    templates: str = "v1"
    exemplars_path: Path | None = None
    decoding: Decoding = field(default_factory=Decoding)
    layer_cap: int = DEFAULT_LAYER_CAP
    base_dir: Path = Path(".")
    raw: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any], base_dir: str | Path = ".") -> "ExperimentConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError("config must be a mapping")
        base = Path(base_dir)

        def resolve(p: str | os.PathLike) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        try:
            seed = int(raw.get("seed", 0))
            sample = None
            if raw.get("sample") is not None:
                s = raw["sample"]
                sample = SamplePlan(int(s["runs"]), int(s["sample_size"]), seed)
            corpora = tuple(
                CorpusRef(resolve(c["path"]), Variant(c["variant"]), c.get("sha256"))
                for c in raw["corpora"]
            )
            models = []
            for m in raw["models"]:
                m = dict(m)
                model_id = str(m.pop("id"))
                kind = m.pop("provider", "openai_compat")
                if kind not in PROVIDER_KINDS:
                    raise ConfigError(f"model {model_id}: unknown provider {kind!r}")
                models.append(ModelConfig(model_id, kind, m))
            strategies = tuple(
                StrategyRef(StrategyKind(s["kind"]), s.get("max_layers")) for s in raw["strategies"]
            )
            dec = raw.get("decoding") or {}
            decoding = Decoding(float(dec.get("temperature", 0.0)), float(dec.get("top_p", 1.0)))
            cfg = cls(
                corpora=corpora,
                models=tuple(models),
                strategies=strategies,
                output_dir=resolve(raw["output_dir"]),
                prices_path=resolve(raw["prices"]),
                sample=sample,
                seed=seed,
                parallel=int(raw.get("parallel", 1)),
                templates=str(raw.get("templates", "v1")),
                exemplars_path=resolve(raw["exemplars"]) if raw.get("exemplars") else None,
                decoding=decoding,
                layer_cap=int(raw.get("layer_cap", DEFAULT_LAYER_CAP)),
                base_dir=base,
                raw=dict(raw),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc!r}") from exc
        if cfg.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        for ref in cfg.strategies:
            if (ref.max_layers or 0) > cfg.layer_cap:
                raise ConfigError(f"{ref.kind.value} max_layers exceeds layer_cap={cfg.layer_cap}")
        return cfg

    def with_overrides(self, **changes: Any) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def load_prices(self) -> PriceSheet:
        return load_price_sheet(self.prices_path)

    def load_templates(self) -> TemplateSet:
        candidate = Path(self.templates)
        if not candidate.is_absolute():
            candidate = self.base_dir / candidate
        if candidate.is_dir():
            ts = TemplateSet.from_directory(candidate)
        else:
            ts = packaged_templates(self.templates)
        if self.exemplars_path is not None:
            ts = TemplateSet(ts.version, ts.texts, load_exemplars(self.exemplars_path))
        return ts

    def problems(self, prices: PriceSheet | None = None) -> list[str]:
        """Configuration problems that make the experiment unrunnable."""
        out = []
        if prices is None:
            try:
                prices = self.load_prices()
            except ConfigError as exc:
                return [str(exc)]
        for m in self.models:
            if m.id not in prices:
                out.append(f"model {m.id} has no price entry")
            if m.provider == "scripted" and "script" not in m.options:
                out.append(f"model {m.id}: scripted provider needs a 'script' file")
        seen = set()
        for m in self.models:
            if m.id in seen:
                out.append(f"model {m.id} configured twice")
            seen.add(m.id)
        for c in self.corpora:
            if not c.path.exists():
                out.append(f"corpus file {c.path} not found")
        if any(c.variant.gsm_family for c in self.corpora) and self.sample is None:
            out.append("GSM-family corpora need a 'sample' plan (runs, sample_size)")
        return out


def load_price_sheet(path: str | Path) -> PriceSheet:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        return PriceSheet.from_mapping(raw)
    except (OSError, yaml.YAMLError, KeyError, TypeError, ArithmeticError, TraceError) as exc:
        raise ConfigError(f"cannot read price sheet {path}: {exc!r}") from exc


# -- run keys and the run log -------------------------------------------------


@dataclass(frozen=True, order=True)
class RunKey:
    dataset: str
    variant: str
    model_id: str
    strategy: str
    run_index: int
    question_id: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "variant": self.variant,
            "model_id": self.model_id,
            "strategy": self.strategy,
            "run_index": self.run_index,
            "question_id": self.question_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunKey":
        return cls(d["dataset"], d["variant"], d["model_id"], d["strategy"], int(d["run_index"]), d["question_id"])


@dataclass(frozen=True)
class RunRecord:
    key: RunKey
    trace: AttemptTrace

    def encode(self) -> str:
        return dumps_record(
            {"schema_version": SCHEMA_VERSION, "run_key": self.key.to_dict(), "trace": trace_to_dict(self.trace)}
        )

    @classmethod
    def decode(cls, line: str) -> "RunRecord":
        d = json.loads(line)
        if d.get("schema_version") != SCHEMA_VERSION:
            raise LogError(f"unsupported schema_version {d.get('schema_version')!r}")
        return cls(RunKey.from_dict(d["run_key"]), trace_from_dict(d["trace"]))


def read_run_log(path: str | Path, *, repair: bool = False) -> list[RunRecord]:
    """Parse a run log.

    A torn final line (the process died mid-write) is dropped, and with
    ``repair=True`` also truncated from the file. Corruption anywhere else is
    an error.
    """
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    records = []
    offset = 0
    lines = data.split(b"\n")
    for i, raw in enumerate(lines):
        is_last = i == len(lines) - 1
        if not raw.strip():
            offset += len(raw) + (0 if is_last else 1)
            continue
        try:
            records.append(RunRecord.decode(raw.decode("utf-8")))
        except (ValueError, KeyError, TypeError, TraceError) as exc:
            tail = all(not rest.strip() for rest in lines[i + 1 :])
            if tail:
                logger.warning("dropping torn final line of %s", path)
                if repair:
                    with open(path, "r+b") as fh:
                        fh.truncate(offset)
                break
            raise LogError(f"{path}: corrupt record on line {i + 1}: {exc!r}") from exc
        if is_last and repair:
            # complete record without its newline
            with open(path, "ab") as fh:
                fh.write(b"\n")
        offset += len(raw) + 1
    return records


# -- providers ----------------------------------------------------------------

ProviderFactory = Callable[[], ChatProvider]


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def build_provider_factories(
    config: ExperimentConfig, questions: Mapping[str, Question], *, live: bool
) -> dict[str, ProviderFactory]:
    """One factory per model.

    Scripted providers are replayed from call 0 for every attempt, so one script
    serves every strategy. Live and simulated providers are shared.
    """
    factories: dict[str, ProviderFactory] = {}
    for m in config.models:
        opts = dict(m.options)
        if m.provider == "scripted":
            records = _read_jsonl(config.base_dir / opts["script"])
            template = ScriptedProvider.from_records(records, model_id=m.id)

            def fresh(template=template, mid=m.id) -> ChatProvider:
                return ScriptedProvider(template._script, model_id=mid)

            factories[m.id] = fresh
        elif m.provider == "simulated":
            golds = {qid: q.gold.canonical for qid, q in questions.items()}
            sim = SimulatedProvider(
                golds,
                model_id=m.id,
                seed=int(opts.get("seed", 0)),
                p_initial=float(opts.get("p_initial", 0.6)),
                p_reflect=float(opts.get("p_reflect", 0.4)),
            )
            factories[m.id] = lambda sim=sim: sim
        else:
            if not live:
                raise ConfigError(f"model {m.id} calls a live API; pass --live to allow paid requests")
            known = {k: opts[k] for k in ProviderConfig.__dataclass_fields__ if k in opts and k != "model_id"}
            client = OpenAICompatProvider(ProviderConfig(model_id=m.id, **known))
            factories[m.id] = lambda client=client: client
    return factories


# -- execution ----------------------------------------------------------------


@dataclass(frozen=True)
class WorkItem:
    key: RunKey
    question: Question
    spec: StrategySpec


@dataclass
class LoadedExperiment:
    config: ExperimentConfig
    prices: PriceSheet
    templates: TemplateSet
    questions: dict[str, Question]
    manifests: list[CorpusManifest]
    samples: dict[str, list[list[str]]]

    def work(self) -> Iterator[WorkItem]:
        exemplars = self.templates.exemplars
        for ref in self.config.corpora:
            variant = ref.variant
            for model in self.config.models:
                for strat in self.config.strategies:
                    spec = strat.spec_for(variant, exemplars)
                    for run_index, ids in enumerate(self.samples[variant.value]):
                        for qid in ids:
                            key = RunKey(variant.dataset.value, variant.value, model.id, spec.label, run_index, qid)
                            yield WorkItem(key, self.questions[qid], spec)

    def manifest(self) -> dict[str, Any]:
        cfg = self.config
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": cfg.seed,
            "sample": None if cfg.sample is None else {"runs": cfg.sample.runs, "sample_size": cfg.sample.sample_size},
            "templates": {"version": self.templates.version, "sha256": self.templates.digest},
            "corpora": [m.to_dict() for m in self.manifests],
            "models": [{"id": m.id, "provider": m.provider} for m in cfg.models],
            "strategies": [s.spec_for(Variant.GSM8K, ()).label for s in cfg.strategies],
            "decoding": {"temperature": cfg.decoding.temperature, "top_p": cfg.decoding.top_p},
            "samples": self.samples,
        }


def load_experiment(config: ExperimentConfig) -> LoadedExperiment:
    problems = config.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    prices = config.load_prices()
    templates = config.load_templates()
    questions: dict[str, Question] = {}
    manifests = []
    samples: dict[str, list[list[str]]] = {}
    for ref in config.corpora:
        qs = load_corpus(ref.path, ref.variant)
        man = manifest_for(ref.path, ref.variant, qs)
        if ref.sha256 and ref.sha256 != man.sha256:
            raise CorpusError(f"{ref.path}: sha256 {man.sha256} does not match pinned {ref.sha256}")
        if ref.variant.value in samples:
            raise ConfigError(f"variant {ref.variant.value} listed twice")
        manifests.append(man)
        for q in qs:
            questions[q.id] = q
        if ref.variant.gsm_family:
            assert config.sample is not None
            plan = config.sample
        else:
            plan = full_set_plan(qs, config.seed)
        samples[ref.variant.value] = draw_samples(qs, plan)
    return LoadedExperiment(config, prices, templates, questions, manifests, samples)


@dataclass
class RunOutcome:
    log_dir: Path
    completed: int = 0
    skipped: int = 0
    failed: list[RunKey] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def _check_manifest(path: Path, manifest: dict[str, Any]) -> None:
    if not path.exists():
        return
    previous = json.loads(path.read_text(encoding="utf-8"))
    for field_name in ("seed", "sample", "templates", "corpora", "decoding"):
        if previous.get(field_name) != manifest.get(field_name):
            raise ConfigError(
                f"{path.parent} was produced with a different {field_name}; use a new output_dir"
            )


def projected_cost(loaded: LoadedExperiment, pending: Sequence[WorkItem], history: Sequence[RunRecord] = ()) -> Decimal:
    """Worst-case spend for ``pending``: every attempt runs all its layers.

    Tokens per call come from the existing log when there is one, otherwise from
    a conservative default.
    """
    calls = 0
    usage = TokenUsage()
    for rec in history:
        calls += provider_call_count(rec.trace.strategy, rec.trace.reflections_used)
        usage = usage + rec.trace.total_usage
    if calls:
        per_in = Decimal(usage.prompt_tokens) / calls
        per_out = Decimal(usage.completion_tokens) / calls
    else:
        per_in, per_out = Decimal(1500), Decimal(500)
    total = Decimal(0)
    for item in pending:
        rate = loaded.prices.rate(item.key.model_id)
        n = provider_call_count(item.spec, item.spec.max_layers)
        total += n * (per_in * rate.usd_per_1m_input + per_out * rate.usd_per_1m_output) / Decimal(1_000_000)
    return total


def pending_work(loaded: LoadedExperiment) -> tuple[list[WorkItem], list[RunRecord]]:
    log_path = loaded.config.output_dir / RUN_LOG
    existing = read_run_log(log_path)
    done = {rec.key for rec in existing}
    return [w for w in loaded.work() if w.key not in done], existing


def run_experiment(
    config: ExperimentConfig,
    *,
    providers: Mapping[str, ProviderFactory] | None = None,
    live: bool = False,
    budget_usd: Decimal | None = None,
) -> RunOutcome:
    """Execute every missing :class:`RunKey` and append its trace to the run log."""
    loaded = load_experiment(config)
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = loaded.manifest()
    _check_manifest(out_dir / MANIFEST, manifest)

    log_path = out_dir / RUN_LOG
    existing = read_run_log(log_path, repair=True)
    done = {rec.key for rec in existing}
    if len(done) != len(existing):
        raise LogError(f"{log_path} holds duplicate run keys")
    todo = [w for w in loaded.work() if w.key not in done]
    outcome = RunOutcome(out_dir, skipped=len(done))

    if providers is None:
        providers = build_provider_factories(config, loaded.questions, live=live)
        if live and any(m.live for m in config.models):
            projection = projected_cost(loaded, todo, existing)
            logger.info("projected worst-case spend: $%s for %d attempts", f"{projection:.2f}", len(todo))
            if budget_usd is not None and projection > budget_usd:
                raise ConfigError(f"projected spend ${projection:.2f} exceeds budget ${budget_usd}")
    missing = sorted({m.id for m in config.models} - set(providers))
    if missing:
        raise ConfigError(f"no provider for model(s): {', '.join(missing)}")

    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    forge = PromptForge(loaded.templates)

    def execute(item: WorkItem) -> AttemptTrace:
        engine_cfg = EngineConfig(item.spec, config.decoding, layer_cap=config.layer_cap)
        provider = providers[item.key.model_id]()
        return run_attempt(
            item.question,
            engine_cfg,
            provider,
            forge=forge,
            run_index=item.key.run_index,
            rate=loaded.prices.rate(item.key.model_id),
        )

    window = max(1, config.parallel) * 4
    queue: deque[tuple[WorkItem, Future[AttemptTrace]]] = deque()
    items = iter(todo)
    pool = ThreadPoolExecutor(max_workers=config.parallel, thread_name_prefix="maps")
    try:
        with open(log_path, "a", encoding="utf-8") as log, open(out_dir / FAILURES, "a", encoding="utf-8") as failures:

            def refill() -> None:
                while len(queue) < window:
                    item = next(items, None)
                    if item is None:
                        return
                    queue.append((item, pool.submit(execute, item)))

            refill()
            while queue:
                item, fut = queue.popleft()
                try:
                    trace = fut.result()
                except AttemptFailed as exc:
                    logger.error("%s", exc)
                    outcome.failed.append(item.key)
                    failures.write(dumps_record({"run_key": item.key.to_dict(), "error": str(exc)}) + "\n")
                    failures.flush()
                else:
                    log.write(RunRecord(item.key, trace).encode() + "\n")
                    log.flush()
                    outcome.completed += 1
                refill()
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
    return outcome


def config_digest(config: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(config.raw, sort_keys=True, default=str).encode()).hexdigest()
