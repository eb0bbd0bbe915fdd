"""The lemma library: dedup on insert, usage tracking, LRU eviction, persistence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from lemmaloop import lean_text
from lemmaloop.theorem_ir import ExprTree, TheoremStatement, from_sexpr, is_duplicate, parse_to_expr_tree
from lemmaloop.verifier import count_sorries

SCHEMA_VERSION = 1
NEVER = -1
EMPTY_CONTEXT = "(no lemmas yet)"


class UnverifiedCandidate(ValueError):
    pass


class UnknownLemma(KeyError):
    pass


class SchemaVersionMismatch(ValueError):
    pass


@dataclass
class Lemma:
    id: str
    name: str
    statement_source: str
    proof_source: str
    expr_tree: ExprTree
    description: str = ""
    origin_cycle: int = 0
    usage_count: int = 0
    last_used_cycle: int = NEVER

    @classmethod
    def from_proof(cls, proof_source: str, description: str = "", id: str = "", origin_cycle: int = 0) -> Lemma:
        """Build a lemma from a full proved declaration."""
        stmt = TheoremStatement.from_source(proof_source)
        return cls(
            id=id or stmt.name,
            name=stmt.name,
            statement_source=stmt.header,
            proof_source=proof_source,
            expr_tree=parse_to_expr_tree(stmt),
            description=description,
            origin_cycle=origin_cycle,
        )

    def eviction_key(self) -> tuple[int, int, int, str]:
        return (self.last_used_cycle, self.usage_count, self.origin_cycle, self.name)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "statement": self.statement_source,
            "proof": self.proof_source,
            "description": self.description,
            "tree": self.expr_tree.to_sexpr(),
            "usage_count": self.usage_count,
            "last_used_cycle": None if self.last_used_cycle == NEVER else self.last_used_cycle,
            "origin_cycle": self.origin_cycle,
        }

    @classmethod
    def from_record(cls, r: dict) -> Lemma:
        last = r.get("last_used_cycle")
        tree = from_sexpr(r["tree"]) if r.get("tree") else parse_to_expr_tree(r["statement"])
        return cls(
            id=r["id"],
            name=r["name"],
            statement_source=r["statement"],
            proof_source=r["proof"],
            expr_tree=tree,
            description=r.get("description", ""),
            origin_cycle=int(r.get("origin_cycle", 0)),
            usage_count=int(r.get("usage_count", 0)),
            last_used_cycle=NEVER if last is None else int(last),
        )


@dataclass
class Library:
    """Ordered lemma collection. Operations mutate in place and return `self`."""

    lemmas: list[Lemma] = field(default_factory=list)
    capacity: int = 100
    cycle: int = 0
    domain: str = ""

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")

    def __len__(self) -> int:
        return len(self.lemmas)

    def names(self) -> list[str]:
        return [lem.name for lem in self.lemmas]

    def get(self, lemma_id: str) -> Lemma:
        for lem in self.lemmas:
            if lem.id == lemma_id:
                return lem
        raise UnknownLemma(lemma_id)

    def snapshot(self) -> Library:
        """Deep enough copy to freeze the library during a parallel phase."""
        return Library(
            [Lemma(**{**lem.__dict__}) for lem in self.lemmas], self.capacity, self.cycle, self.domain
        )

    def add_lemmas(self, candidates: Iterable[Lemma], dup_threshold: float = 0.15) -> tuple[Library, list[Lemma], list[Lemma]]:
        candidates = list(candidates)
        for cand in candidates:
            if not cand.proof_source.strip() or count_sorries(cand.proof_source):
                raise UnverifiedCandidate(f"candidate {cand.name!r} has no complete proof")
        accepted: list[Lemma] = []
        rejected: list[Lemma] = []
        for cand in candidates:
            if any(is_duplicate(cand.expr_tree, other.expr_tree, dup_threshold) for other in self.lemmas):
                rejected.append(cand)
                continue
            lemma = self._fresh(cand)
            self.lemmas.append(lemma)
            accepted.append(lemma)
        return self, accepted, rejected

    def _fresh(self, cand: Lemma) -> Lemma:
        taken_names = set(self.names())
        taken_ids = {lem.id for lem in self.lemmas}
        name = cand.name
        suffix = 1
        while name in taken_names:
            suffix += 1
            name = f"{cand.name}_{suffix}"
        lemma_id = cand.id if cand.id not in taken_ids else name
        while lemma_id in taken_ids:
            lemma_id += "_"
        renamed = name != cand.name
        return Lemma(
            id=lemma_id,
            name=name,
            statement_source=lean_text.rename_declaration(cand.statement_source, cand.name, name) if renamed else cand.statement_source,
            proof_source=lean_text.rename_declaration(cand.proof_source, cand.name, name) if renamed else cand.proof_source,
            expr_tree=cand.expr_tree,
            description=cand.description,
            origin_cycle=self.cycle,
            usage_count=0,
            last_used_cycle=NEVER,
        )

    def record_usage(self, lemma_ids: Iterable[str], cycle: int) -> Library:
        lemma_ids = list(lemma_ids)
        by_id = {lem.id: lem for lem in self.lemmas}
        missing = [i for i in lemma_ids if i not in by_id]
        if missing:
            raise UnknownLemma(", ".join(missing))
        for i in lemma_ids:
            lem = by_id[i]
            lem.usage_count += 1
            lem.last_used_cycle = cycle
        return self

    def evict_lru(self) -> tuple[Library, list[Lemma]]:
        evicted = []
        while len(self.lemmas) > self.capacity:
            victim = min(self.lemmas, key=Lemma.eviction_key)
            self.lemmas.remove(victim)
            evicted.append(victim)
        return self, evicted

    def detect_used_lemmas(self, proof_source: str) -> list[str]:
        """Ids of lemmas named as identifier tokens in `proof_source`, in library order.

        The proof's own declaration names do not count, so a lemma's proof
        never reports itself.
        """
        own = {d.name for d in lean_text.declarations(proof_source)}
        tokens = {name for name, _ in lean_text.identifiers(proof_source)} - own
        return [lem.id for lem in self.lemmas if lem.name in tokens]

    def render_context(self) -> str:
        if not self.lemmas:
            return EMPTY_CONTEXT
        ordered = sorted(self.lemmas, key=lambda lem: (-lem.usage_count, lem.name))
        body = "\n\n".join(lem.statement_source for lem in ordered)
        return f"```lean4\n{body}\n```"

    def proved_sources(self) -> tuple[str, ...]:
        return tuple(lem.proof_source for lem in self.lemmas)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "domain": self.domain,
            "capacity": self.capacity,
            "cycle": self.cycle,
            "lemmas": [lem.to_record() for lem in self.lemmas],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Library:
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionMismatch(f"library schema {version!r}, expected {SCHEMA_VERSION}")
        return cls(
            [Lemma.from_record(r) for r in data.get("lemmas", [])],
            capacity=int(data["capacity"]),
            cycle=int(data.get("cycle", 0)),
            domain=data.get("domain", ""),
        )

    def persist(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> Library:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
