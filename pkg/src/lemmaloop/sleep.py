"""Sleep stage: turn proved theorems into new verified library lemmas."""

from __future__ import annotations

import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from lemmaloop import lean_text
from lemmaloop.clustering import cluster_annotations
from lemmaloop.config import SleepConfig
from lemmaloop.embedding import EmbeddingProvider, embed
from lemmaloop.library import Lemma, Library
from lemmaloop.llm import TagNotFound, TokenLedger, extract_lean_blocks, extract_tagged
from lemmaloop.theorem_ir import ExprTree, ParseError, TheoremStatement, is_duplicate, parse_to_expr_tree, structural_similarity
from lemmaloop.wake import ProofAttemptRecord, WakeContext, direct_prove

PROPOSED = "proposed"
VALIDATED = "validated"
VERIFIED = "verified"
REJECTED_SIMILARITY = "rejected_similarity"
REJECTED_DUPLICATE = "rejected_duplicate"
REJECTED_UNPROVABLE = "rejected_unprovable"

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class Annotation:
    theorem_id: str
    description: str
    fallback: bool = False
    embedding: list[float] | None = None


@dataclass
class CandidateLemma:
    statement_source: str
    source_cluster: int
    name: str = ""
    max_similarity: float | None = None
    proof_source: str | None = None
    status: str = PROPOSED
    description: str = ""
    tree: ExprTree | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "cluster": self.source_cluster,
            "status": self.status,
            "max_similarity": None if self.max_similarity is None else round(self.max_similarity, 6),
            "statement": self.statement_source,
            "proof": self.proof_source,
        }


@dataclass
class SleepReport:
    cycle: int
    annotated: int = 0
    annotation_fallbacks: int = 0
    clusters: list[list[str]] = field(default_factory=list)
    proposed: int = 0
    validated: int = 0
    rejected_similarity: int = 0
    rejected_duplicate: int = 0
    verified: int = 0
    rejected_unprovable: int = 0
    added: list[str] = field(default_factory=list)
    evicted: list[str] = field(default_factory=list)
    usage_recorded: int = 0
    library_size: int = 0

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "annotated": self.annotated,
            "annotation_fallbacks": self.annotation_fallbacks,
            "cluster_count": len(self.clusters),
            "clusters": self.clusters,
            "proposed": self.proposed,
            "validated": self.validated,
            "rejected_similarity": self.rejected_similarity,
            "rejected_duplicate": self.rejected_duplicate,
            "verified": self.verified,
            "rejected_unprovable": self.rejected_unprovable,
            "added": self.added,
            "evicted": self.evicted,
            "usage_recorded": self.usage_recorded,
            "library_size": self.library_size,
        }


@dataclass
class SleepResult:
    library: Library
    report: SleepReport
    annotations: list[Annotation]
    candidates: list[CandidateLemma]
    candidate_records: list[ProofAttemptRecord]
    ledger: TokenLedger


def _fan_out(fn: Callable[[T, TokenLedger], R], items: Sequence[T], workers: int) -> list[tuple[R, TokenLedger]]:
    """Apply `fn` with a private ledger per item; results keep input order."""

    def one(item: T) -> tuple[R, TokenLedger]:
        ledger = TokenLedger()
        return fn(item, ledger), ledger

    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, items))
    return [one(item) for item in items]


def annotate_theorem(thm: TheoremStatement, proof: str, ctx: WakeContext, ledger: TokenLedger | None = None) -> Annotation:
    prompt = ctx.templates.render("annotation", proof=proof)
    for _ in range(2):
        text, _ = ctx.gateway.complete(prompt, purpose="annotation", subject=thm.id, ledger=ledger)
        try:
            description = extract_tagged(text, "description")
        except TagNotFound:
            continue
        if description:
            return Annotation(thm.id, description)
    return Annotation(thm.id, lean_text.normalize_ws(thm.header), fallback=True)


def theorem_section(members: Sequence[tuple[TheoremStatement, Annotation]]) -> str:
    return "\n\n".join(f"```lean4\n{thm.header}\n```\nDescription: {ann.description}" for thm, ann in members)


def _statement_header(block: str) -> str:
    """Drop any proof (such as `:= by sorry`) and keep the declaration header."""
    return TheoremStatement.from_source(block).header


def propose_cluster_candidates(
    cluster: Sequence[tuple[TheoremStatement, Annotation]],
    domain: str,
    ctx: WakeContext,
    cluster_id: int = 0,
    ledger: TokenLedger | None = None,
) -> list[CandidateLemma]:
    if not cluster:
        raise ValueError("cannot abstract an empty cluster")
    prompt = ctx.templates.render("cluster_abstraction", theorem_section=theorem_section(cluster), domain=domain)
    text, _ = ctx.gateway.complete(prompt, purpose="cluster_abstraction", subject=f"cluster-{cluster_id}", ledger=ledger)
    description = cluster[0][1].description
    candidates = []
    for block in extract_lean_blocks(text, allow_bare=True):
        try:
            header = _statement_header(block)
            name = TheoremStatement.from_source(header).name
        except ParseError:
            header, name = block.strip(), ""
        candidates.append(CandidateLemma(header, cluster_id, name=name, description=description))
    return candidates


def validate_candidate(cand: CandidateLemma, cluster_trees: Sequence[ExprTree], threshold: float) -> CandidateLemma:
    try:
        cand.tree = parse_to_expr_tree(cand.statement_source)
    except ParseError:
        cand.max_similarity = 0.0
        cand.status = REJECTED_SIMILARITY
        return cand
    cand.max_similarity = max((structural_similarity(cand.tree, t) for t in cluster_trees), default=0.0)
    cand.status = VALIDATED if cand.max_similarity >= threshold else REJECTED_SIMILARITY
    return cand


def fresh_name(domain: str, statement: str, taken: set[str]) -> str:
    prefix = re.sub(r"\W", "_", domain.lower()) or "lemma"
    salt = 0
    while True:
        digest = hashlib.sha1(f"{statement}\0{salt}".encode()).hexdigest()[:8]
        name = f"{prefix}_{digest}"
        if name not in taken:
            return name
        salt += 1


def _assign_names(candidates: list[CandidateLemma], lib: Library, domain: str) -> None:
    """Keep proposed names where free; generated names otherwise."""
    taken = set(lib.names())
    for cand in candidates:
        if not cand.name or cand.name in taken:
            new = fresh_name(domain, cand.statement_source, taken)
            if cand.name:
                cand.statement_source = lean_text.rename_declaration(cand.statement_source, cand.name, new)
            cand.name = new
        taken.add(cand.name)


def run_sleep_cycle(
    intermediates: Sequence[tuple[TheoremStatement, str]],
    learnables: Sequence[tuple[TheoremStatement, str]],
    lib: Library,
    config: SleepConfig,
    ctx: WakeContext,
    embedder: EmbeddingProvider,
    *,
    cycle: int,
    seed: int = 42,
    domain: str = "",
    usage_records: Sequence[ProofAttemptRecord] = (),
    workers: int = 1,
    library_path: str | Path | None = None,
) -> SleepResult:
    """One consolidation pass. `ctx.library` is the frozen snapshot used for proving."""
    lib.cycle = cycle
    domain = domain or lib.domain or "general"
    report = SleepReport(cycle)
    ledger = TokenLedger()
    pool = list(intermediates) + list(learnables)

    annotated = _fan_out(lambda item, lg: annotate_theorem(item[0], item[1], ctx, lg), pool, workers)
    annotations = [a for a, _ in annotated]
    for _, lg in annotated:
        ledger.extend(lg)
    report.annotated = len(annotations)
    report.annotation_fallbacks = sum(a.fallback for a in annotations)

    candidates: list[CandidateLemma] = []
    if pool:
        by_id = {thm.id: (thm, ann) for (thm, _), ann in zip(pool, annotations)}
        if config.ablate_clustering:
            groups = [[a.theorem_id] for a in annotations]
        else:
            vectors = embed([a.description for a in annotations], embedder)
            for a, v in zip(annotations, vectors):
                a.embedding = [float(x) for x in v]
            groups = cluster_annotations([(a.theorem_id, a.description) for a in annotations], embedder, seed, vectors=vectors)
        report.clusters = [list(g) for g in groups]
        members = [[by_id[i] for i in g] for g in groups]
        proposals = _fan_out(
            lambda idx, lg: propose_cluster_candidates(members[idx], domain, ctx, idx, lg), list(range(len(groups))), workers
        )
        for (cands, lg), group in zip(proposals, members):
            ledger.extend(lg)
            trees = [parse_to_expr_tree(thm) for thm, _ in group]
            for cand in cands:
                validate_candidate(cand, trees, config.similarity_threshold)
            candidates.extend(cands)
    report.proposed = len(candidates)
    report.validated = sum(c.status == VALIDATED for c in candidates)
    report.rejected_similarity = sum(c.status == REJECTED_SIMILARITY for c in candidates)

    survivors: list[CandidateLemma] = []
    for cand in candidates:
        if cand.status != VALIDATED:
            continue
        others = [lem.expr_tree for lem in lib.lemmas] + [s.tree for s in survivors]
        if any(is_duplicate(cand.tree, t, config.dup_threshold) for t in others):
            cand.status = REJECTED_DUPLICATE
        else:
            survivors.append(cand)
    report.rejected_duplicate = sum(c.status == REJECTED_DUPLICATE for c in candidates)
    _assign_names(survivors, lib, domain)

    def prove(cand: CandidateLemma, lg: TokenLedger) -> ProofAttemptRecord:
        stmt = TheoremStatement.from_source(cand.statement_source + " := by sorry", ctx.imports_header)
        return direct_prove(stmt, ctx, config.candidate_prove_budget, lg)

    proved = _fan_out(prove, survivors, workers)
    records = []
    verified_lemmas = []
    for cand, (rec, lg) in zip(survivors, proved):
        ledger.extend(lg)
        records.append(rec)
        if rec.proved:
            cand.status = VERIFIED
            cand.proof_source = rec.proof_source
            verified_lemmas.append(
                Lemma(cand.name, cand.name, cand.statement_source, rec.proof_source, cand.tree, cand.description, cycle)
            )
        else:
            cand.status = REJECTED_UNPROVABLE
    report.verified = len(verified_lemmas)
    report.rejected_unprovable = sum(c.status == REJECTED_UNPROVABLE for c in candidates)

    _, accepted, _ = lib.add_lemmas(verified_lemmas, config.dup_threshold)
    report.added = [lem.name for lem in accepted]
    known = {lem.id for lem in lib.lemmas}
    used = [i for rec in usage_records if rec.proved for i in rec.used_lemma_ids if i in known]
    lib.record_usage(used, cycle)
    report.usage_recorded = len(used)
    if not config.ablate_library_optimization:
        _, evicted = lib.evict_lru()
        report.evicted = [lem.name for lem in evicted]
    report.library_size = len(lib)
    if library_path is not None:
        lib.persist(library_path)
    return SleepResult(lib, report, annotations, candidates, records, ledger)
