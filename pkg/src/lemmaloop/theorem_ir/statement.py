from __future__ import annotations

from dataclasses import dataclass, field

from lemmaloop import lean_text


class ParseError(ValueError):
    """Raised for statements that cannot be split or tokenized."""


@dataclass(frozen=True)
class TheoremStatement:
    """One formal theorem declaration, split into binders and goal."""

    name: str
    raw_source: str
    hypotheses: tuple[str, ...]
    goal: str
    imports_header: str = ""
    id: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if not self.id:
            object.__setattr__(self, "id", self.name)

    @classmethod
    def from_source(cls, raw_source: str, imports_header: str = "", id: str = "") -> TheoremStatement:
        if not raw_source.strip():
            raise ParseError("empty theorem source")
        if not lean_text.brackets_balanced(raw_source):
            raise ParseError("unbalanced delimiters")
        decls = [d for d in lean_text.declarations(raw_source) if d.keyword in lean_text.THEOREM_KEYWORDS]
        if len(decls) != 1:
            raise ParseError(f"expected exactly one theorem declaration, found {len(decls)}")
        decl = decls[0]
        masked = lean_text.mask_comments_and_strings(raw_source)
        stop = decl.assign if decl.assign is not None else len(raw_source)
        hypotheses, goal = split_signature(raw_source, masked, decl.name_end, stop)
        if not goal.strip():
            raise ParseError("empty statement body")
        return cls(
            name=decl.name,
            raw_source=raw_source,
            hypotheses=tuple(hypotheses),
            goal=goal,
            imports_header=imports_header,
            id=id or decl.name,
        )

    @property
    def header(self) -> str:
        """Declaration text without the proof, e.g. `theorem t (a : ℝ) : a = a`."""
        return _decl(self.raw_source).header(self.raw_source)

    @property
    def proof(self) -> str:
        return _decl(self.raw_source).body(self.raw_source).strip()

    def with_sorry(self) -> str:
        return f"{self.header} := by sorry"

    def renamed(self, new_name: str) -> TheoremStatement:
        src = lean_text.rename_declaration(self.raw_source, self.name, new_name)
        return TheoremStatement.from_source(src, self.imports_header, id=self.id if self.id != self.name else new_name)


def _decl(source: str) -> lean_text.Declaration:
    return next(d for d in lean_text.declarations(source) if d.keyword in lean_text.THEOREM_KEYWORDS)


def split_signature(source: str, masked: str, start: int, stop: int) -> tuple[list[str], str]:
    """Split `binders : goal` between offsets into binder groups and goal text."""
    hypotheses = []
    i = start
    while i < stop:
        ch = masked[i]
        if ch.isspace():
            i += 1
            continue
        if ch in lean_text.OPEN_BRACKETS:
            j = _matching(masked, i, stop)
            hypotheses.append(source[i:j + 1])
            i = j + 1
            continue
        if ch == ":" and not masked.startswith(":=", i):
            return hypotheses, source[i + 1:stop].strip()
        raise ParseError(f"unexpected text in signature: {source[i:i + 20]!r}")
    raise ParseError("missing ':' before the goal")


def _matching(masked: str, i: int, stop: int) -> int:
    depth = 0
    for j in range(i, stop):
        ch = masked[j]
        if ch in lean_text.OPEN_BRACKETS:
            depth += 1
        elif ch in lean_text.CLOSE_BRACKETS:
            depth -= 1
            if depth == 0:
                return j
    raise ParseError("unbalanced delimiters")
