"""Wake stage: direct proving, sketch-based decomposition and intermediate-theorem collection."""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from lemmaloop import lean_text
from lemmaloop.config import WakeConfig
from lemmaloop.library import Library
from lemmaloop.llm import (
    Budget,
    LLMGateway,
    TemplateSet,
    TokenLedger,
    TokenUsage,
    extract_lean_blocks,
    first_lean_block,
)
from lemmaloop.theorem_ir import ParseError, TheoremStatement
from lemmaloop.verifier import Diagnostic, FAILED, VerificationResult, VerificationUnit, Verifier, count_sorries

PROVED, FAILED_OUTCOME = "proved", "failed"
VIA_DIRECT, VIA_DECOMPOSITION = "direct", "decomposition"
VERDICT_RE = re.compile(r"VERDICT:\s*(VALID|INVALID)\b")


class SketchBudgetExhausted(RuntimeError):
    pass


class ExtractionError(ValueError):
    pass


class ExtractionArityMismatch(ExtractionError):
    pass


class NameMismatch(ExtractionError):
    pass


@dataclass
class WakeContext:
    """Shared collaborators for one stage. The library must not change while in use."""

    gateway: LLMGateway
    verifier: Verifier
    library: Library
    templates: TemplateSet = field(default_factory=TemplateSet)
    imports_header: str = ""

    def unit(self, target: str, axioms: tuple[str, ...] = ()) -> VerificationUnit:
        return VerificationUnit(self.imports_header, self.library.proved_sources(), target, axioms)


@dataclass
class ProofAttemptRecord:
    theorem_id: str
    outcome: str
    proof_source: str | None
    attempts_used: int
    corrections_used: int
    tokens: TokenUsage
    used_lemma_ids: list[str] = field(default_factory=list)
    corrections_per_attempt: list[int] = field(default_factory=list)
    via: str = VIA_DIRECT
    depth: int = 0

    @property
    def proved(self) -> bool:
        return self.outcome == PROVED

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "outcome": self.outcome,
            "via": self.via,
            "depth": self.depth,
            "attempts_used": self.attempts_used,
            "corrections_used": self.corrections_used,
            "corrections_per_attempt": list(self.corrections_per_attempt),
            "prompt_tokens": self.tokens.prompt_tokens,
            "completion_tokens": self.tokens.completion_tokens,
            "call_count": self.tokens.call_count,
            "used_lemma_ids": list(self.used_lemma_ids),
            "proof_source": self.proof_source,
        }


@dataclass
class SketchArtifact:
    theorem_id: str
    sketch_source: str
    sorry_count: int
    have_names: list[str]
    nl_check_passed: bool = False

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "sorry_count": self.sorry_count,
            "have_names": list(self.have_names),
            "nl_check_passed": self.nl_check_passed,
            "sketch_source": self.sketch_source,
        }


@dataclass
class Subgoal:
    parent_theorem_id: str
    name: str
    statement_source: str
    depth: int
    imports_header: str = ""

    @property
    def id(self) -> str:
        return f"{self.parent_theorem_id}/{self.name}"

    @property
    def statement(self) -> TheoremStatement:
        return TheoremStatement.from_source(self.statement_source, self.imports_header, id=self.id)


@dataclass
class AssemblyResult:
    ok: bool
    proof_source: str | None
    errors: tuple[Diagnostic, ...] = ()


@dataclass
class TheoremRun:
    """Everything produced while solving one theorem (or subgoal) and its descendants."""

    record: ProofAttemptRecord
    intermediates: list[tuple[Subgoal, str]] = field(default_factory=list)
    sketches: list[SketchArtifact] = field(default_factory=list)
    subgoal_records: list[ProofAttemptRecord] = field(default_factory=list)
    ledger: TokenLedger = field(default_factory=TokenLedger)


@dataclass
class WakeOutcome:
    learnable_theorems: list[tuple[TheoremStatement, str]] = field(default_factory=list)
    intermediate_theorems: list[tuple[Subgoal, str]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    per_theorem_records: list[ProofAttemptRecord] = field(default_factory=list)
    subgoal_records: list[ProofAttemptRecord] = field(default_factory=list)
    sketches: list[SketchArtifact] = field(default_factory=list)
    ledger: TokenLedger = field(default_factory=TokenLedger)

    @property
    def solved_via_decomposition(self) -> list[str]:
        return [r.theorem_id for r in self.per_theorem_records if r.proved and r.via == VIA_DECOMPOSITION]


# -- checking helpers -------------------------------------------------------


def _fail(message: str, line: int = 0) -> VerificationResult:
    return VerificationResult(FAILED, (Diagnostic(line, 0, message),))


def _same_statement(candidate: str, thm: TheoremStatement) -> bool:
    for decl in lean_text.declarations(candidate):
        if decl.name == thm.name and decl.keyword in lean_text.THEOREM_KEYWORDS:
            return lean_text.normalize_ws(decl.header(candidate)) == lean_text.normalize_ws(thm.header)
    return False


def check_candidate(
    candidate: str | None, thm: TheoremStatement, ctx: WakeContext, allow_sorry: bool = False
) -> VerificationResult:
    """Verify a model-produced proof of `thm`, rejecting altered statements first."""
    if candidate is None or not candidate.strip():
        return _fail("no Lean code block found in the reply")
    if not _same_statement(candidate, thm):
        return _fail(f"the statement of '{thm.name}' is missing or was changed")
    return ctx.verifier.verify(ctx.unit(candidate), allow_sorry=allow_sorry)


def format_errors(candidate: str | None, result: VerificationResult, fallback: str) -> str:
    code = candidate if candidate and candidate.strip() else fallback
    return f"```lean4\n{code}\n```\n\nErrors:\n{result.error_text()}"


def is_learnable(record: ProofAttemptRecord) -> bool:
    return record.proved and record.via == VIA_DIRECT


# -- direct proving ---------------------------------------------------------


def direct_prove(
    thm: TheoremStatement, ctx: WakeContext, budget: Budget, ledger: TokenLedger | None = None
) -> ProofAttemptRecord:
    """Whole-proof attempts, each followed by up to `max_corrections` repair rounds."""
    ledger = TokenLedger() if ledger is None else ledger
    usage = TokenUsage()
    context = ctx.library.render_context()
    per_attempt: list[int] = []
    for attempt in range(1, budget.max_attempts + 1):
        prompt = ctx.templates.render("whole_proof", problem=thm.with_sorry(), useful_theorems_section=context)
        text, u = ctx.gateway.complete(prompt, purpose="whole_proof", subject=thm.id, ledger=ledger)
        usage = usage + u
        candidate = first_lean_block(text)
        result = check_candidate(candidate, thm, ctx)
        corrections = 0
        while not result.ok and corrections < budget.max_corrections:
            corrections += 1
            prompt = ctx.templates.render(
                "error_correction",
                error_message=format_errors(candidate, result, thm.with_sorry()),
                useful_theorems_section=context,
            )
            text, u = ctx.gateway.complete(prompt, purpose="error_correction", subject=thm.id, ledger=ledger)
            usage = usage + u
            candidate = first_lean_block(text)
            result = check_candidate(candidate, thm, ctx)
        per_attempt.append(corrections)
        if result.ok:
            return ProofAttemptRecord(
                thm.id, PROVED, candidate, attempt, sum(per_attempt), usage,
                ctx.library.detect_used_lemmas(candidate), per_attempt,
            )
    return ProofAttemptRecord(thm.id, FAILED_OUTCOME, None, budget.max_attempts, sum(per_attempt), usage, [], per_attempt)


# -- sketches ---------------------------------------------------------------

_NAMED_HAVE_RE = re.compile(r"^\s*have\s+([^\W\d][\w']*)\b")
_HAVE_INLINE_SORRY_RE = re.compile(r":=\s*(?:by\s+)?sorry\s*$")
_BY_EOL_RE = re.compile(r":=\s*by\s*$")


def have_names(sketch: str) -> list[str]:
    masked = lean_text.mask_comments_and_strings(sketch)
    return [m.group(1) for m in (_NAMED_HAVE_RE.match(line) for line in masked.split("\n")) if m]


def misplaced_sorries(sketch: str) -> list[int]:
    """1-based lines holding a `sorry` that is not the whole body of a named `have`.

    Accepted shapes are `have h : P := by sorry` (or `:= sorry`) on one line,
    and `have h : P := by` followed by a line containing only `sorry`.
    """
    lines = lean_text.mask_comments_and_strings(sketch).split("\n")
    bad = []
    for idx, line in enumerate(lines):
        n = lean_text.count_token(line, "sorry")
        if not n:
            continue
        if n == 1 and _NAMED_HAVE_RE.match(line) and _HAVE_INLINE_SORRY_RE.search(line):
            continue
        if n == 1 and line.strip() == "sorry":
            prev = next((lines[j] for j in range(idx - 1, -1, -1) if lines[j].strip()), "")
            if _NAMED_HAVE_RE.match(prev) and _BY_EOL_RE.search(prev):
                continue
        bad.append(idx + 1)
    return bad


def check_sketch(candidate: str | None, thm: TheoremStatement, ctx: WakeContext) -> VerificationResult:
    if candidate is None or not candidate.strip():
        return _fail("no Lean code block found in the reply")
    if not _same_statement(candidate, thm):
        return _fail(f"the statement of '{thm.name}' is missing or was changed")
    bad = misplaced_sorries(candidate)
    if bad:
        return _fail("`sorry` may only close a named `have` subgoal, not the main goal", bad[0])
    names = have_names(candidate)
    if len(set(names)) != len(names):
        return _fail("subgoal names must be distinct")
    return ctx.verifier.verify(ctx.unit(candidate), allow_sorry=True)


def generate_sketch(
    thm: TheoremStatement, ctx: WakeContext, attempts: int, corrections: int, ledger: TokenLedger | None = None
) -> SketchArtifact | ProofAttemptRecord:
    """A validated sketch, or a proved record when the model returned a complete proof."""
    ledger = TokenLedger() if ledger is None else ledger
    context = ctx.library.render_context()
    usage = TokenUsage()
    for _ in range(attempts):
        prompt = ctx.templates.render("sketch", problem=thm.with_sorry(), useful_theorems_section=context)
        text, u = ctx.gateway.complete(prompt, purpose="sketch", subject=thm.id, ledger=ledger)
        usage = usage + u
        candidate = first_lean_block(text)
        for round_ in range(corrections + 1):
            if candidate is not None and count_sorries(candidate) == 0:
                result = check_candidate(candidate, thm, ctx)
                if result.ok:
                    return ProofAttemptRecord(
                        thm.id, PROVED, candidate, 1, round_, usage, ctx.library.detect_used_lemmas(candidate), [round_]
                    )
            else:
                result = check_sketch(candidate, thm, ctx)
                if result.ok:
                    return SketchArtifact(thm.id, candidate, count_sorries(candidate), have_names(candidate))
            if round_ == corrections:
                break
            prompt = ctx.templates.render(
                "sketch_correction",
                error_message=format_errors(candidate, result, thm.with_sorry()),
                useful_theorems_section=context,
            )
            text, u = ctx.gateway.complete(prompt, purpose="sketch_correction", subject=thm.id, ledger=ledger)
            usage = usage + u
            candidate = first_lean_block(text)
    raise SketchBudgetExhausted(f"no valid sketch for {thm.id}")


def nl_check_sketch(sketch: SketchArtifact, ctx: WakeContext, ledger: TokenLedger | None = None) -> bool:
    prompt = ctx.templates.render("nl_check", proof_sketch=sketch.sketch_source)
    text, _ = ctx.gateway.complete(prompt, purpose="nl_check", subject=sketch.theorem_id, ledger=ledger)
    verdicts = VERDICT_RE.findall(text)
    sketch.nl_check_passed = bool(verdicts) and verdicts[-1] == "VALID"
    return sketch.nl_check_passed


def _statement_only(block: str) -> str:
    """The declaration with its proof replaced by `sorry`."""
    stmt = TheoremStatement.from_source(block)
    return stmt.with_sorry()


def extract_subgoals(
    sketch: SketchArtifact, ctx: WakeContext, depth: int, ledger: TokenLedger | None = None
) -> list[Subgoal]:
    """Standalone subgoal theorems for every `sorry` of the sketch, or an ExtractionError."""
    if sketch.sorry_count < 1:
        raise ValueError("sketch has no sorry to extract")
    prompt = ctx.templates.render("decomposition", proof_sketch=sketch.sketch_source)
    text, _ = ctx.gateway.complete(prompt, purpose="decomposition", subject=sketch.theorem_id, ledger=ledger)
    blocks = extract_lean_blocks(text, allow_bare=True)
    if len(blocks) != sketch.sorry_count:
        raise ExtractionArityMismatch(f"{len(blocks)} subgoals extracted for {sketch.sorry_count} sorries")
    subgoals, seen = [], set()
    allowed = set(sketch.have_names)
    for block in blocks:
        try:
            source = _statement_only(block)
        except ParseError as exc:
            raise ExtractionError(f"unparseable subgoal: {exc}") from exc
        name = TheoremStatement.from_source(source).name
        if name in seen:
            raise NameMismatch(f"duplicate subgoal name {name!r}")
        if name not in allowed:
            raise NameMismatch(f"subgoal {name!r} matches no `have` in the sketch")
        seen.add(name)
        subgoals.append(Subgoal(sketch.theorem_id, name, source, depth, ctx.imports_header))
    return subgoals


def as_axiom(statement_source: str) -> str:
    decl = next(d for d in lean_text.declarations(statement_source) if d.keyword in lean_text.THEOREM_KEYWORDS)
    header = decl.header(statement_source)
    return "axiom" + header[len(decl.keyword):]


def reassemble_and_check(
    sketch: SketchArtifact, thm: TheoremStatement, subgoals: list[Subgoal], ctx: WakeContext,
    ledger: TokenLedger | None = None,
) -> AssemblyResult:
    """Ask for the main proof from the sketch and verify it with subgoals assumed as axioms."""
    theorems = "\n\n".join(sg.statement_source for sg in subgoals)
    prompt = ctx.templates.render("assembly", proof_sketch=sketch.sketch_source, theorems_string=theorems)
    text, _ = ctx.gateway.complete(prompt, purpose="assembly", subject=sketch.theorem_id, ledger=ledger)
    candidate = first_lean_block(text)
    if candidate is None or not _same_statement(candidate, thm):
        result = check_candidate(candidate, thm, ctx)
        return AssemblyResult(False, candidate, result.errors)
    axioms = tuple(as_axiom(sg.statement_source) for sg in subgoals)
    result = ctx.verifier.verify(ctx.unit(candidate, axioms))
    return AssemblyResult(result.ok, candidate, result.errors)


# -- recursive solving ------------------------------------------------------


def solve(
    thm: TheoremStatement, ctx: WakeContext, config: WakeConfig, depth: int = 0, ledger: TokenLedger | None = None
) -> TheoremRun:
    """Direct proof, then (while depth allows) sketch-and-prove with recursion on failed subgoals."""
    ledger = TokenLedger() if ledger is None else ledger
    start = len(ledger.entries)
    record = direct_prove(thm, ctx, config.budget, ledger)
    record.depth = depth
    run = TheoremRun(record, ledger=ledger)
    if record.proved or depth >= config.max_depth:
        return run
    for _ in range(config.sketch_attempts):
        try:
            sketch = generate_sketch(thm, ctx, 1, config.corrections, ledger)
        except SketchBudgetExhausted:
            continue
        if isinstance(sketch, ProofAttemptRecord):
            sketch.depth = depth
            sketch.tokens = TokenUsage.sum(e.usage for e in ledger.entries[start:])
            run.record = sketch
            return run
        run.sketches.append(sketch)
        if not nl_check_sketch(sketch, ctx, ledger):
            continue
        try:
            subgoals = extract_subgoals(sketch, ctx, depth + 1, ledger)
        except ExtractionError:
            continue
        assembly = reassemble_and_check(sketch, thm, subgoals, ctx, ledger)
        proofs: list[str | None] = []
        deepest = depth + 1
        for sg in subgoals:
            sub = solve(sg.statement, ctx, config, depth + 1, ledger)
            run.subgoal_records.append(sub.record)
            run.subgoal_records.extend(sub.subgoal_records)
            run.sketches.extend(sub.sketches)
            run.intermediates.extend(sub.intermediates)
            if sub.record.proved:
                run.intermediates.append((sg, sub.record.proof_source))
                deepest = max(deepest, sub.record.depth)
            proofs.append(sub.record.proof_source)
        if not assembly.ok or any(p is None for p in proofs):
            continue
        composed = "\n\n".join([*proofs, assembly.proof_source])
        if ctx.verifier.verify(ctx.unit(composed)).ok:
            record.outcome = PROVED
            record.proof_source = composed
            record.via = VIA_DECOMPOSITION
            record.depth = deepest
            record.used_lemma_ids = ctx.library.detect_used_lemmas(composed)
            break
    record.tokens = TokenUsage.sum(e.usage for e in ledger.entries[start:])
    return run


def run_wake_cycle(
    training_set: list[TheoremStatement], ctx: WakeContext, config: WakeConfig, workers: int = 1
) -> WakeOutcome:
    """Solve every theorem against a frozen library; results merge in input order."""

    def one(thm: TheoremStatement) -> TheoremRun:
        return solve(thm, ctx, config, 0, TokenLedger())

    if workers > 1 and len(training_set) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, training_set))
    else:
        runs = [one(t) for t in training_set]
    outcome = WakeOutcome()
    for thm, run in zip(training_set, runs):
        rec = run.record
        outcome.per_theorem_records.append(rec)
        outcome.subgoal_records.extend(run.subgoal_records)
        outcome.sketches.extend(run.sketches)
        outcome.intermediate_theorems.extend(run.intermediates)
        outcome.ledger.extend(run.ledger)
        if is_learnable(rec):
            outcome.learnable_theorems.append((thm, rec.proof_source))
        elif not rec.proved:
            outcome.failures.append(thm.id)
    return outcome
