from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator


@dataclass(frozen=True)
class ExprTree:
    """Immutable ordered labelled tree. `size` is cached at construction."""

    label: str
    children: tuple[ExprTree, ...] = ()
    size: int = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.children, tuple):
            object.__setattr__(self, "children", tuple(self.children))
        object.__setattr__(self, "size", 1 + sum(c.size for c in self.children))

    def preorder(self) -> Iterator[ExprTree]:
        yield self
        for child in self.children:
            yield from child.preorder()

    def labels(self) -> set[str]:
        return {node.label for node in self.preorder()}

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.children), default=0)

    def to_sexpr(self) -> str:
        if not self.children:
            return _quote(self.label)
        return "(" + " ".join([_quote(self.label)] + [c.to_sexpr() for c in self.children]) + ")"

    def __str__(self) -> str:
        return self.to_sexpr()


def leaf(label: str) -> ExprTree:
    return ExprTree(label)


def node(label: str, *children: ExprTree) -> ExprTree:
    return ExprTree(label, tuple(children))


_BARE = re.compile(r'^[^\s()"]+$')


def _quote(label: str) -> str:
    if _BARE.match(label):
        return label
    return '"' + label.replace("\\", "\\\\").replace('"', '\\"') + '"'


_SEXPR_TOKEN = re.compile(r'\s*(\(|\)|"(?:[^"\\]|\\.)*"|[^\s()"]+)')


class SexprError(ValueError):
    pass


def from_sexpr(text: str) -> ExprTree:
    """Inverse of `ExprTree.to_sexpr`."""
    tokens: list[str] = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _SEXPR_TOKEN.match(text, pos)
        if not m:
            raise SexprError(f"bad s-expression near offset {pos}")
        tokens.append(m.group(1))
        pos = m.end()
    if not tokens:
        raise SexprError("empty s-expression")
    tree, used = _read(tokens, 0)
    if used != len(tokens):
        raise SexprError("trailing tokens in s-expression")
    return tree


def _read(tokens: list[str], i: int) -> tuple[ExprTree, int]:
    tok = tokens[i]
    if tok == ")":
        raise SexprError("unexpected ')'")
    if tok != "(":
        return ExprTree(_unquote(tok)), i + 1
    if i + 1 >= len(tokens) or tokens[i + 1] in "()":
        raise SexprError("list must start with a label")
    label = _unquote(tokens[i + 1])
    i += 2
    children = []
    while True:
        if i >= len(tokens):
            raise SexprError("unterminated list")
        if tokens[i] == ")":
            return ExprTree(label, tuple(children)), i + 1
        child, i = _read(tokens, i)
        children.append(child)


def _unquote(tok: str) -> str:
    if tok.startswith('"'):
        return re.sub(r"\\(.)", r"\1", tok[1:-1])
    return tok
