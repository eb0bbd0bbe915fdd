"""Training and inference drivers that keep all their state under a run directory."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from lemmaloop import lean_text
from lemmaloop.config import ConfigError, RunConfig
from lemmaloop.embedding import EmbeddingProvider, HashEmbedder, HttpEmbedder
from lemmaloop.library import Library
from lemmaloop.llm import LLMGateway, OpenAIChatProvider, ScriptedProvider, TemplateSet, TokenLedger, TokenUsage
from lemmaloop.sleep import run_sleep_cycle
from lemmaloop.theorem_ir import ParseError, TheoremStatement
from lemmaloop.verifier import CheckerUnavailable, LeanVerifier, MockVerifier, Verifier
from lemmaloop.wake import ProofAttemptRecord, WakeContext, run_wake_cycle, solve

log = logging.getLogger(__name__)

STATE_FILE = "state.json"
LIBRARY_FILE = "library.json"


class DatasetError(ConfigError):
    pass


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


# -- datasets ---------------------------------------------------------------


@dataclass
class Dataset:
    domain: str
    imports_header: str
    theorems: list[TheoremStatement]


def load_dataset(directory: str | Path) -> Dataset:
    """A directory holding `manifest.json`, `<id>.lean` files and an optional `header.lean`."""
    root = Path(directory)
    manifest_path = root / "manifest.json"
    try:
        manifest = read_json(manifest_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {manifest_path}: {exc}") from exc
    header_path = root / "header.lean"
    header = header_path.read_text(encoding="utf-8").strip() if header_path.exists() else ""
    ids = manifest.get("theorems") or []
    if not ids:
        raise DatasetError(f"{manifest_path} lists no theorems")
    theorems = []
    for theorem_id in ids:
        path = root / f"{theorem_id}.lean"
        try:
            theorems.append(TheoremStatement.from_source(path.read_text(encoding="utf-8").strip(), header, id=theorem_id))
        except OSError as exc:
            raise DatasetError(f"cannot read theorem {theorem_id}: {exc}") from exc
        except ParseError as exc:
            raise DatasetError(f"theorem {theorem_id}: {exc}") from exc
    return Dataset(manifest.get("domain", "general"), header, theorems)


# -- wiring -----------------------------------------------------------------


def build_gateway(config: RunConfig) -> LLMGateway:
    llm = config.llm
    if llm.kind == "scripted":
        if not llm.scenario:
            raise ConfigError("llm.scenario is required for the scripted provider")
        try:
            provider = ScriptedProvider.from_file(llm.scenario)
        except OSError as exc:
            raise ConfigError(f"cannot read scenario: {exc}") from exc
        temperature = 0.0
    elif llm.kind == "openai":
        if not llm.endpoint:
            raise ConfigError("llm.endpoint is required for the openai provider")
        provider = OpenAIChatProvider(llm.endpoint)
        temperature = llm.temperature
    else:
        raise ConfigError(f"unknown llm.kind {llm.kind!r}")
    return LLMGateway(
        provider,
        model=llm.model,
        temperature=temperature,
        token_ceiling=llm.token_ceiling,
        max_in_flight=llm.max_in_flight,
    )


def build_verifier(config: RunConfig) -> Verifier:
    v = config.verifier
    if v.kind == "mock":
        if not v.rules:
            return MockVerifier()
        try:
            return MockVerifier.from_file(v.rules)
        except OSError as exc:
            raise ConfigError(f"cannot read verifier rules: {exc}") from exc
    if v.kind == "lean":
        verifier = LeanVerifier(v.command, v.project_root, v.timeout, v.keep_failures, v.max_concurrent)
        verifier.check_available()
        return verifier
    raise ConfigError(f"unknown verifier.kind {v.kind!r}")


def build_embedder(config: RunConfig) -> EmbeddingProvider:
    e = config.embedding
    if e.kind == "hash":
        return HashEmbedder(e.dim)
    if e.kind == "http":
        if not e.endpoint or not e.model:
            raise ConfigError("embedding.endpoint and embedding.model are required for http embeddings")
        return HttpEmbedder(e.endpoint, e.model)
    raise ConfigError(f"unknown embedding.kind {e.kind!r}")


@dataclass
class Components:
    gateway: LLMGateway
    verifier: Verifier
    embedder: EmbeddingProvider
    templates: TemplateSet

    @classmethod
    def from_config(cls, config: RunConfig) -> Components:
        return cls(build_gateway(config), build_verifier(config), build_embedder(config), TemplateSet(config.templates_dir))

    def context(self, library: Library, imports_header: str) -> WakeContext:
        return WakeContext(self.gateway, self.verifier, library, self.templates, imports_header)


def imports_header_for(dataset: Dataset, config: RunConfig) -> str:
    """The configured checker header wins over the dataset's `header.lean`."""
    return config.verifier.imports_header or dataset.imports_header


# -- metrics ----------------------------------------------------------------


def proof_length(proof_source: str) -> int:
    """Non-blank, non-comment lines of the last declaration's proof body.

    Text after `:=` on the statement's own line counts as a line unless it
    is just `by`.
    """
    decls = lean_text.declarations(proof_source)
    masked = lean_text.mask_comments_and_strings(proof_source)
    if decls and decls[-1].assign is not None:
        body = masked[decls[-1].assign + 2:decls[-1].end]
    elif decls:
        return 0
    else:
        body = masked
    lines = body.split("\n")
    first = lines[0].strip()
    count = 1 if first and first != "by" else 0
    return count + sum(1 for line in lines[1:] if line.strip())


def format_thousands(tokens: int, samples: int) -> str:
    """Tokens per sample in thousands with two decimals (530000 over 1000 gives 0.53)."""
    if samples <= 0:
        return "0.00"
    return f"{tokens / samples / 1000:.2f}"


@dataclass
class Metrics:
    solved: int = 0
    total: int = 0
    completion_tokens: int = 0
    prompt_tokens: int = 0
    mean_proof_length: float = 0.0
    lemma_usage: int = 0
    used_lemmas: int = 0
    total_lemmas: int = 0
    covered_theorems: int = 0

    def __post_init__(self) -> None:
        if not (self.covered_theorems <= self.solved <= self.total and self.used_lemmas <= self.total_lemmas):
            raise ValueError(f"inconsistent metrics: {self}")

    @property
    def tokens_per_sample(self) -> str:
        return format_thousands(self.completion_tokens, self.total)

    def library_row(self) -> tuple[int, int, int, int, int, int]:
        return (self.lemma_usage, self.used_lemmas, self.total_lemmas, self.covered_theorems, self.solved, self.total)

    def to_dict(self) -> dict:
        return {
            "solved": self.solved,
            "total": self.total,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "tokens_per_sample": self.tokens_per_sample,
            "mean_proof_length": self.mean_proof_length,
            "lemma_usage": self.lemma_usage,
            "used_lemmas": self.used_lemmas,
            "total_lemmas": self.total_lemmas,
            "covered_theorems": self.covered_theorems,
            "lemma_usage_rule": "identifier-token match, counted once per proved theorem",
            "proof_length_rule": "non-blank non-comment lines of the final declaration body",
        }

    @classmethod
    def from_dict(cls, data: dict) -> Metrics:
        return cls(**{k: data[k] for k in (
            "solved", "total", "completion_tokens", "prompt_tokens", "mean_proof_length",
            "lemma_usage", "used_lemmas", "total_lemmas", "covered_theorems",
        )})


def compute_metrics(records: Sequence[ProofAttemptRecord], library: Library, total: int | None = None) -> Metrics:
    total = len(records) if total is None else total
    proved = [r for r in records if r.proved]
    usage = TokenUsage.sum(r.tokens for r in records)
    lengths = [proof_length(r.proof_source) for r in proved]
    known = {lem.id for lem in library.lemmas}
    cited = [set(r.used_lemma_ids) & known for r in proved]
    return Metrics(
        solved=len(proved),
        total=total,
        completion_tokens=usage.completion_tokens,
        prompt_tokens=usage.prompt_tokens,
        mean_proof_length=round(sum(lengths) / len(lengths), 2) if lengths else 0.0,
        lemma_usage=sum(len(c) for c in cited),
        used_lemmas=len(set().union(*cited)) if cited else 0,
        total_lemmas=len(library),
        covered_theorems=sum(1 for c in cited if c),
    )


def format_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def library_table(metrics: Metrics) -> str:
    return format_table(
        ["Lemma Usage", "Used Lemmas", "Total Lemmas", "Covered", "Proved", "Total"], [metrics.library_row()]
    )


# -- training ---------------------------------------------------------------


@dataclass
class CycleReport:
    cycle: int
    learnable: int
    solved_direct: int
    solved_via_decomposition: int
    failed: int
    intermediates: int
    tokens: TokenUsage
    sleep: dict

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "learnable": self.learnable,
            "solved_direct": self.solved_direct,
            "solved_via_decomposition": self.solved_via_decomposition,
            "failed": self.failed,
            "intermediates": self.intermediates,
            "prompt_tokens": self.tokens.prompt_tokens,
            "completion_tokens": self.tokens.completion_tokens,
            "call_count": self.tokens.call_count,
            "sleep": self.sleep,
        }


@dataclass
class TrainResult:
    run_dir: Path
    library: Library
    reports: list[dict] = field(default_factory=list)
    status: str = "complete"


def run_dir_for(config: RunConfig) -> Path:
    return Path(config.runs_dir) / config.run_id


def train(
    dataset: Dataset,
    config: RunConfig,
    resume: bool = False,
    components: Components | None = None,
    stop_after: int | None = None,
) -> TrainResult:
    """Run wake-sleep cycles, persisting all run state at every barrier.

    With `resume`, continues after the last completed cycle recorded in the
    run directory. `stop_after` ends the session after that many cycles have
    completed in total (used to simulate interruption).
    """
    components = components or Components.from_config(config)
    run_dir = run_dir_for(config)
    state_path = run_dir / STATE_FILE
    if resume and state_path.exists():
        state = read_json(state_path)
        library = Library.load(run_dir / LIBRARY_FILE)
        components.gateway.restore_spent(int(state.get("tokens_spent", 0)))
    else:
        if resume:
            log.warning("nothing to resume in %s; starting fresh", run_dir)
        state = {"completed_cycles": 0, "status": "running", "tokens_spent": 0, "reports": []}
        library = Library(capacity=config.sleep.capacity, domain=dataset.domain)
        write_json(run_dir / "config.json", config.to_dict())
        library.persist(run_dir / LIBRARY_FILE)
        write_json(state_path, state)

    reports = list(state.get("reports", []))
    status = "complete"
    for cycle in range(state["completed_cycles"] + 1, config.cycles + 1):
        if stop_after is not None and cycle > stop_after:
            status = "interrupted"
            break
        try:
            report = _run_cycle(cycle, dataset, library, config, components, run_dir)
        except Exception:
            # the library on disk is still the last completed cycle's
            write_json(state_path, {**state, "status": "aborted"})
            raise
        reports.append(report.to_dict())
        library.persist(run_dir / LIBRARY_FILE)
        state = {
            "completed_cycles": cycle,
            "status": "running" if cycle < config.cycles else "complete",
            "tokens_spent": components.gateway.spent,
            "reports": reports,
        }
        write_json(state_path, state)
    return TrainResult(run_dir, library, reports, status)


def _run_cycle(
    cycle: int, dataset: Dataset, library: Library, config: RunConfig, components: Components, run_dir: Path
) -> CycleReport:
    cycle_dir = run_dir / f"cycle-{cycle}"
    frozen = library.snapshot()
    ctx = components.context(frozen, imports_header_for(dataset, config))
    wake = run_wake_cycle(dataset.theorems, ctx, config.wake, config.workers)
    wake_dir = cycle_dir / "wake"
    write_json(wake_dir / "records.json", [r.to_dict() for r in wake.per_theorem_records])
    write_json(wake_dir / "subgoal_records.json", [r.to_dict() for r in wake.subgoal_records])
    write_json(wake_dir / "sketches.json", [s.to_dict() for s in wake.sketches])
    write_json(
        wake_dir / "intermediates.json",
        [{"id": sg.id, "depth": sg.depth, "statement": sg.statement_source, "proof": proof} for sg, proof in wake.intermediate_theorems],
    )
    write_json(wake_dir / "ledger.json", wake.ledger.to_records())
    log.info("cycle %d wake: %d learnable, %d intermediates", cycle, len(wake.learnable_theorems), len(wake.intermediate_theorems))

    intermediates = [(sg.statement, proof) for sg, proof in wake.intermediate_theorems]
    sleep = run_sleep_cycle(
        intermediates,
        wake.learnable_theorems,
        library,
        config.sleep,
        ctx,
        components.embedder,
        cycle=cycle,
        seed=config.seed,
        domain=dataset.domain,
        usage_records=wake.per_theorem_records,
        workers=config.workers,
        library_path=cycle_dir / LIBRARY_FILE,
    )
    sleep_dir = cycle_dir / "sleep"
    write_json(sleep_dir / "annotations.json", [{"id": a.theorem_id, "description": a.description, "fallback": a.fallback} for a in sleep.annotations])
    write_json(sleep_dir / "clusters.json", sleep.report.clusters)
    write_json(sleep_dir / "candidates.json", [c.to_dict() for c in sleep.candidates])
    write_json(sleep_dir / "report.json", sleep.report.to_dict())
    write_json(sleep_dir / "ledger.json", sleep.ledger.to_records())
    log.info("cycle %d sleep: +%d lemmas, library size %d", cycle, len(sleep.report.added), len(library))

    records = wake.per_theorem_records
    return CycleReport(
        cycle=cycle,
        learnable=len(wake.learnable_theorems),
        solved_direct=sum(1 for r in records if r.proved and r.via == "direct"),
        solved_via_decomposition=len(wake.solved_via_decomposition),
        failed=len(wake.failures),
        intermediates=len(wake.intermediate_theorems),
        tokens=wake.ledger.total() + sleep.ledger.total(),
        sleep=sleep.report.to_dict(),
    )


# -- inference --------------------------------------------------------------


@dataclass
class InferenceResult:
    records: list[ProofAttemptRecord]
    metrics: Metrics
    ledger: TokenLedger


def prove(
    dataset: Dataset, library: Library, config: RunConfig, components: Components | None = None,
    out_dir: str | Path | None = None,
) -> InferenceResult:
    """Direct proof with the library, then a single level of sketch-and-prove."""
    components = components or Components.from_config(config)
    ctx = components.context(library, imports_header_for(dataset, config))
    inference = config.inference
    if inference.max_depth > 1:
        raise ConfigError("inference performs at most one decomposition level")
    records, ledger = [], TokenLedger()
    for thm in dataset.theorems:
        run = solve(thm, ctx, inference, 0, TokenLedger())
        assert run.record.depth <= 1
        records.append(run.record)
        ledger.extend(run.ledger)
    metrics = compute_metrics(records, library, total=len(dataset.theorems))
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "records.json", [r.to_dict() for r in records])
        write_json(out / "metrics.json", metrics.to_dict())
        write_json(out / "ledger.json", ledger.to_records())
    return InferenceResult(records, metrics, ledger)


# -- reporting --------------------------------------------------------------


def stats_text(run_dir: str | Path) -> str:
    run_dir = Path(run_dir)
    parts = []
    state_path = run_dir / STATE_FILE
    if state_path.exists():
        state = read_json(state_path)
        rows = [
            (r["cycle"], r["learnable"], r["solved_direct"] + r["solved_via_decomposition"], r["failed"],
             r["intermediates"], r["sleep"]["cluster_count"], len(r["sleep"]["added"]), r["sleep"]["library_size"],
             r["completion_tokens"])
            for r in state.get("reports", [])
        ]
        parts.append(f"Training ({state.get('status')}, {state.get('completed_cycles')} cycles)")
        parts.append(format_table(
            ["Cycle", "Learnable", "Solved", "Failed", "Intermediates", "Clusters", "Added", "Library", "Output tokens"], rows
        ))
    metrics_path = run_dir / "inference" / "metrics.json"
    if metrics_path.exists():
        m = Metrics.from_dict(read_json(metrics_path))
        parts.append("Inference")
        parts.append(format_table(["Solved", "Total", "Mean proof length"], [(m.solved, m.total, m.mean_proof_length)]))
        parts.append("Lemma library")
        parts.append(library_table(m))
        parts.append("Output tokens per sample (thousands)")
        parts.append(format_table(["Tokens/sample"], [(m.tokens_per_sample,)]))
    if not parts:
        raise FileNotFoundError(f"no run state or inference metrics under {run_dir}")
    return "\n\n".join(parts) + "\n"


def inspect_library_text(path: str | Path) -> str:
    library = Library.load(path)
    used = [lem for lem in library.lemmas if lem.usage_count]
    summary = format_table(
        ["Total Lemmas", "Used Lemmas", "Lemma Usage", "Capacity", "Cycle"],
        [(len(library), len(used), sum(lem.usage_count for lem in library.lemmas), library.capacity, library.cycle)],
    )
    rows = [
        (lem.name, lem.usage_count, "never" if lem.last_used_cycle < 0 else lem.last_used_cycle, lem.origin_cycle,
         lean_text.normalize_ws(lem.statement_source))
        for lem in sorted(library.lemmas, key=lambda lem: (-lem.usage_count, lem.name))
    ]
    detail = format_table(["Name", "Uses", "Last used", "Origin", "Statement"], rows)
    return f"{summary}\n\n{detail}\n"


__all__ = [
    "CheckerUnavailable",
    "Components",
    "Dataset",
    "DatasetError",
    "Metrics",
    "compute_metrics",
    "format_thousands",
    "inspect_library_text",
    "load_dataset",
    "proof_length",
    "prove",
    "stats_text",
    "train",
]
