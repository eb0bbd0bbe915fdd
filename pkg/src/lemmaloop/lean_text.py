"""Lexical helpers for Lean 4 source text.

Nothing here understands Lean semantics. The helpers know just enough about
comments and brackets to count `sorry`s and split declarations
without being fooled by commented-out code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

IDENT_RE = re.compile(r"(?<![\w'.])([^\W\d][\w']*(?:\.[\w']+)*)")
DECL_RE = re.compile(
    r"(?m)^[ \t]*(?:@\[[^\]\n]*\][ \t]*)?"
    r"(?:(?:private|protected|noncomputable)[ \t]+)*"
    r"(theorem|lemma|axiom)[ \t]+([^\s({\[⦃:]+)"
)
THEOREM_KEYWORDS = ("theorem", "lemma")

OPEN_BRACKETS = {"(": ")", "[": "]", "{": "}", "⟨": "⟩", "⦃": "⦄"}
CLOSE_BRACKETS = {v: k for k, v in OPEN_BRACKETS.items()}


def mask_comments_and_strings(source: str) -> str:
    """Blank out comments and string literals, keeping offsets and newlines."""
    out = list(source)
    i, n = 0, len(source)
    while i < n:
        if source.startswith("--", i):
            j = source.find("\n", i)
            j = n if j == -1 else j
            _blank(out, i, j)
            i = j
        elif source.startswith("/-", i):
            depth, j = 1, i + 2
            while j < n and depth:
                if source.startswith("/-", j):
                    depth += 1
                    j += 2
                elif source.startswith("-/", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            _blank(out, i, j)
            i = j
        elif source[i] == '"':
            j = i + 1
            while j < n and source[j] != '"':
                j += 2 if source[j] == "\\" else 1
            j = min(j + 1, n)
            _blank(out, i, j)
            i = j
        else:
            i += 1
    return "".join(out)


def _blank(chars: list[str], start: int, end: int) -> None:
    for k in range(start, end):
        if chars[k] != "\n":
            chars[k] = " "


def identifiers(source: str) -> list[tuple[str, int]]:
    """Identifier tokens (with offsets) outside comments and strings."""
    masked = mask_comments_and_strings(source)
    return [(m.group(1), m.start(1)) for m in IDENT_RE.finditer(masked)]


def count_token(source: str, token: str) -> int:
    return sum(1 for name, _ in identifiers(source) if name == token)


@dataclass(frozen=True)
class Declaration:
    keyword: str
    name: str
    start: int
    name_end: int
    assign: int | None  # offset of the top-level ":=", if any
    end: int

    def header(self, source: str) -> str:
        stop = self.assign if self.assign is not None else self.end
        return source[self.start:stop].strip()

    def body(self, source: str) -> str:
        if self.assign is None:
            return ""
        return source[self.assign + 2:self.end]


def declarations(source: str) -> list[Declaration]:
    """Top-level theorem/lemma/axiom declarations in order of appearance."""
    masked = mask_comments_and_strings(source)
    found = list(DECL_RE.finditer(masked))
    decls = []
    for idx, m in enumerate(found):
        end = found[idx + 1].start() if idx + 1 < len(found) else len(source)
        start = m.start(1)
        decls.append(
            Declaration(
                keyword=m.group(1),
                name=m.group(2),
                start=start,
                name_end=m.end(2),
                assign=find_top_level(masked, ":=", m.end(2), end),
                end=end,
            )
        )
    return decls


def find_top_level(masked: str, needle: str, start: int = 0, end: int | None = None) -> int | None:
    """Offset of the first `needle` outside any bracket pair, or None."""
    end = len(masked) if end is None else end
    depth = 0
    i = start
    while i < end:
        ch = masked[i]
        if ch in OPEN_BRACKETS:
            depth += 1
        elif ch in CLOSE_BRACKETS:
            depth = max(depth - 1, 0)
        elif depth == 0 and masked.startswith(needle, i):
            return i
        i += 1
    return None


def brackets_balanced(text: str) -> bool:
    stack: list[str] = []
    for ch in mask_comments_and_strings(text):
        if ch in OPEN_BRACKETS:
            stack.append(ch)
        elif ch in CLOSE_BRACKETS:
            if not stack or stack[-1] != CLOSE_BRACKETS[ch]:
                return False
            stack.pop()
    return not stack


def rename_declaration(source: str, old: str, new: str) -> str:
    """Rename every identifier token equal to `old` (outside comments/strings)."""
    pieces, last = [], 0
    for name, pos in identifiers(source):
        if name == old:
            pieces.append(source[last:pos])
            pieces.append(new)
            last = pos + len(old)
    pieces.append(source[last:])
    return "".join(pieces)


def normalize_ws(text: str) -> str:
    return " ".join(text.split())
