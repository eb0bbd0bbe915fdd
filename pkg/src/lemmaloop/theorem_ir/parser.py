"""Token-level parser from Lean theorem statements to simplified expression trees.

The grammar is deliberately small: identifiers, numerals, a fixed infix
operator table, prefix negation, quantifier/binder forms, bracket groups and
juxtaposition as function application. Unicode notation is folded onto an
ASCII label table first, so `≤` and `<=` produce the same node.

Tree shape for a theorem:

    (THM <binder-group>... <goal>)

A binder group that declares variables, e.g. `(a b : ℝ)`, becomes
`(HYP Real)`; a group whose type is a proposition, e.g. `(h : a < b)`, becomes
the proposition tree itself. Bound variables are renamed `v0, v1, ...` in
binding order, which makes the tree invariant under alpha-renaming.
"""

from __future__ import annotations

import re

from lemmaloop import lean_text
from lemmaloop.theorem_ir.statement import ParseError, TheoremStatement
from lemmaloop.theorem_ir.tree import ExprTree

ROOT = "THM"
DECL = "HYP"

CONSTANTS = {"ℝ": "Real", "ℕ": "Nat", "ℤ": "Int", "ℚ": "Rat", "ℂ": "Complex", "Type*": "Type", "Sort*": "Sort"}

# token -> canonical label
INFIX_LABELS = {
    "=": "=", "≠": "!=", "!=": "!=", "<": "<", ">": ">", "≤": "<=", "<=": "<=", "≥": ">=", ">=": ">=",
    "+": "+", "-": "-", "*": "*", "/": "/", "^": "^", "%": "%", "∣": "dvd",
    "∧": "/\\", "/\\": "/\\", "∨": "\\/", "\\/": "\\/", "→": "->", "->": "->", "↔": "<->", "<->": "<->",
    "∈": "mem", "∉": "notmem", "⊆": "subset", "⊂": "ssubset", "∩": "inter", "∪": "union",
    "≡": "modeq", "•": "smul", "∘": "comp", "×": "prod_type", "++": "append", "<|": "app", "$": "app",
}

# canonical label -> (left binding power, right binding power)
BINDING_POWER = {
    "app": (10, 10),
    "<->": (20, 21),
    "->": (25, 25),
    "\\/": (30, 30),
    "/\\": (35, 35),
    "prod_type": (35, 35),
    **{rel: (50, 51) for rel in ("=", "!=", "<", ">", "<=", ">=", "dvd", "mem", "notmem", "subset", "ssubset", "modeq")},
    "+": (65, 66), "-": (65, 66), "union": (65, 66), "append": (65, 66),
    "*": (70, 71), "/": (70, 71), "%": (70, 71), "inter": (70, 71), "smul": (70, 71),
    "^": (75, 75),
    "comp": (90, 90),
}
APP_BP = 1000
_VAR_RE = re.compile(r"v\d+")

PROP_LABELS = {
    "=", "!=", "<", ">", "<=", ">=", "dvd", "mem", "notmem", "subset", "ssubset", "modeq",
    "/\\", "\\/", "->", "<->", "not", "forall", "exists", "exists!", "True", "False",
}
BINDER_PREDICATES = {"∈", "∉", "<", ">", "≤", "<=", "≥", ">=", "≠", "!=", "⊆"}
QUANTIFIERS = {"∀": "forall", "∃": "exists", "∃!": "exists!", "∑": "sum", "∏": "prod", "⋃": "iUnion", "⋂": "iInter"}
LAMBDA_WORDS = {"fun", "λ"}
STOP_WORDS = {"then", "else", "in", "with", "at", "from"}

_TOKEN_RE = re.compile(
    r"\s*("
    r"(?:Type|Sort)\*"
    r"|:=|<->|->|<=|>=|!=|=>|/\\|\\/|∃!|⁻¹|\+\+|<\||\.\."
    r"|\d+(?:\.\d+)?"
    r"|[^\W\d][\w']*(?:\.(?:[^\W\d][\w']*|\d+))*"
    r"|\S)"
)


def tokenize(text: str) -> list[str]:
    masked = lean_text.mask_comments_and_strings(text)
    tokens = []
    pos = 0
    while True:
        m = _TOKEN_RE.match(masked, pos)
        if not m:
            break
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _Fail(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[str], scopes: list[dict[str, str]], counter: list[int]):
        self.toks = tokens
        self.i = 0
        self.scopes = scopes
        self.counter = counter

    # -- token helpers -------------------------------------------------
    def peek(self, k: int = 0) -> str | None:
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else None

    def next(self) -> str:
        tok = self.peek()
        if tok is None:
            raise _Fail("unexpected end of input")
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        if self.next() != tok:
            raise _Fail(f"expected {tok!r}")

    def at_end(self) -> bool:
        return self.i >= len(self.toks)

    # -- variables -----------------------------------------------------
    def bind(self, name: str) -> None:
        self.scopes[-1][name] = f"v{self.counter[0]}"
        self.counter[0] += 1

    def lookup(self, name: str) -> str | None:
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def ident_tree(self, name: str) -> ExprTree:
        if name in CONSTANTS:
            return ExprTree(CONSTANTS[name])
        var = self.lookup(name)
        if var is not None:
            return ExprTree(var)
        head, dot, rest = name.partition(".")
        if dot:
            var = self.lookup(head)
            if var is not None:
                return ExprTree("." + rest, (ExprTree(var),))
        return ExprTree(name)

    # -- grammar -------------------------------------------------------
    def expr(self, min_bp: int = 0) -> ExprTree:
        lhs = self.prefix()
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok in INFIX_LABELS:
                label = INFIX_LABELS[tok]
                lbp, rbp = BINDING_POWER[label]
                if lbp < min_bp:
                    break
                self.next()
                rhs = self.expr(rbp)
                lhs = ExprTree(label, (lhs, rhs))
            elif tok in ("⁻¹", "!") and APP_BP >= min_bp:
                self.next()
                lhs = ExprTree("inv" if tok == "⁻¹" else "factorial", (lhs,))
            elif tok == "[" and APP_BP >= min_bp:
                self.next()
                items = self.sequence("]")
                lhs = ExprTree("annot", (lhs, *items))
            elif self.starts_argument(tok) and APP_BP >= min_bp:
                args = []
                while self.starts_argument(self.peek()):
                    args.append(self.argument())
                if lhs.children or _VAR_RE.fullmatch(lhs.label):
                    lhs = ExprTree("APP", (lhs, *args))
                else:
                    lhs = ExprTree(lhs.label, tuple(args))
            else:
                break
        return lhs

    def starts_argument(self, tok: str | None) -> bool:
        if tok is None:
            return False
        if tok in ("(", "⟨", "{", "↑", "·"):
            return True
        if tok in STOP_WORDS or tok in LAMBDA_WORDS or tok == "if":
            return False
        return tok[0].isalnum() or tok[0] == "_" or tok in CONSTANTS

    def argument(self) -> ExprTree:
        tok = self.next()
        if tok == "↑":
            return self.argument()
        return self.atom(tok)

    def prefix(self) -> ExprTree:
        tok = self.next()
        if tok == "¬":
            return ExprTree("not", (self.expr(40),))
        if tok == "-":
            return ExprTree("neg", (self.expr(75),))
        if tok == "↑":
            return self.expr(APP_BP)
        if tok == "√":
            return ExprTree("sqrt", (self.expr(APP_BP),))
        if tok in QUANTIFIERS:
            return self.binder_form(QUANTIFIERS[tok], (",",))
        if tok in LAMBDA_WORDS:
            return self.binder_form("fun", ("=>", "↦", ","))
        if tok == "if":
            cond = self.expr(0)
            self.expect("then")
            then = self.expr(0)
            self.expect("else")
            return ExprTree("ite", (cond, then, self.expr(0)))
        if tok == "|":
            inner = self.expr(0)
            self.expect("|")
            return ExprTree("abs", (inner,))
        if tok == "[":
            return ExprTree("list", tuple(self.sequence("]")))
        return self.atom(tok)

    def atom(self, tok: str) -> ExprTree:
        if tok == "(":
            if self.peek() == ")":
                self.next()
                return ExprTree("unit")
            inner = self.expr(0)
            if self.peek() == ":":
                self.next()
                self.expr(0)  # type ascriptions are dropped
            if self.peek() == ",":
                items = [inner]
                while self.peek() == ",":
                    self.next()
                    items.append(self.expr(0))
                self.expect(")")
                return ExprTree("tuple", tuple(items))
            self.expect(")")
            return inner
        if tok == "⟨":
            return ExprTree("anon", tuple(self.sequence("⟩")))
        if tok == "{":
            return self.brace()
        if tok[0].isdigit():
            return ExprTree(tok)
        if tok[0].isalpha() or tok[0] == "_" or tok in CONSTANTS:
            if tok in STOP_WORDS:
                raise _Fail(f"unexpected {tok!r}")
            return self.ident_tree(tok)
        if tok == "·":
            return ExprTree("·")
        raise _Fail(f"unexpected token {tok!r}")

    def sequence(self, close: str) -> list[ExprTree]:
        items: list[ExprTree] = []
        if self.peek() == close:
            self.next()
            return items
        while True:
            items.append(self.expr(0))
            tok = self.next()
            if tok == close:
                return items
            if tok != ",":
                raise _Fail(f"expected ',' or {close!r}")

    def brace(self) -> ExprTree:
        # set-builder iff a '|' appears at this brace's own nesting level
        depth = 0
        for tok in self.toks[self.i:]:
            if tok in lean_text.OPEN_BRACKETS:
                depth += 1
            elif tok in lean_text.CLOSE_BRACKETS:
                if depth == 0:
                    break
                depth -= 1
            elif tok == "|" and depth == 0:
                tree = self.binder_form("setOf", ("|",))
                self.expect("}")
                return tree
        items = self.sequence("}")
        return ExprTree("set", tuple(items)) if items else ExprTree("emptyset")

    def binder_form(self, label: str, separators: tuple[str, ...]) -> ExprTree:
        self.scopes.append({})
        try:
            annotations: list[ExprTree] = []
            simple: list[str] = []
            while True:
                tok = self.peek()
                if tok is None:
                    raise _Fail("unterminated binder")
                if tok in ("(", "{", "⦃", "["):
                    annotations.extend(self.bracket_binder())
                elif tok == "_" or (tok[0].isalpha() and tok not in STOP_WORDS and tok not in CONSTANTS):
                    self.next()
                    simple.append(tok)
                    self.bind(tok)
                else:
                    break
            tok = self.peek()
            if tok == ":":
                self.next()
                annotations.append(self.expr(0))
            elif tok in BINDER_PREDICATES:
                self.next()
                bound = self.expr(51)
                rel = INFIX_LABELS[tok]
                for name in simple:
                    annotations.append(ExprTree(rel, (ExprTree(self.lookup(name) or name), bound)))
            elif tok == "in":
                self.next()
                annotations.append(ExprTree("mem", (self.expr(0),)))
            tok = self.next()
            if tok not in separators:
                raise _Fail(f"expected binder separator, got {tok!r}")
            body = self.expr(0)
            return ExprTree(label, (*annotations, body))
        finally:
            self.scopes.pop()

    def bracket_binder(self) -> list[ExprTree]:
        open_tok = self.next()
        close_tok = lean_text.OPEN_BRACKETS[open_tok]
        names = []
        while (tok := self.peek()) is not None and (tok[0].isalpha() or tok == "_") and tok not in CONSTANTS:
            names.append(self.next())
        if self.peek() == ":":
            self.next()
            typ = self.expr(0)
        elif open_tok == "[":
            # anonymous instance binder: the "names" were the start of the type
            self.i -= len(names)
            names = []
            typ = self.expr(0)
        else:
            typ = None
        self.expect(close_tok)
        for name in names:
            self.bind(name)
        return [typ] if typ is not None else []


def parse_expression(text: str, scopes: list[dict[str, str]] | None = None,
                     counter: list[int] | None = None) -> ExprTree:
    """Parse a standalone expression; unparseable input degrades to atom leaves."""
    tokens = tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    scopes = scopes if scopes is not None else [{}]
    counter = counter if counter is not None else [0]
    return _parse_tokens(tokens, scopes, counter)


def _parse_tokens(tokens: list[str], scopes: list[dict[str, str]], counter: list[int]) -> ExprTree:
    saved_counter = counter[0]
    saved_scopes = [dict(s) for s in scopes]
    parser = _Parser(tokens, scopes, counter)
    try:
        parts = [parser.expr(0)]
        while not parser.at_end():
            parts.append(parser.expr(0))
        return parts[0] if len(parts) == 1 else ExprTree("SEQ", tuple(parts))
    except (_Fail, IndexError, TypeError):
        counter[0] = saved_counter
        scopes[:] = saved_scopes
        return _degrade(tokens, scopes)


def _degrade(tokens: list[str], scopes: list[dict[str, str]]) -> ExprTree:
    leaves = []
    for tok in tokens:
        label = CONSTANTS.get(tok) or INFIX_LABELS.get(tok) or tok
        for scope in reversed(scopes):
            if tok in scope:
                label = scope[tok]
                break
        leaves.append(ExprTree(label))
    return ExprTree("RAW", tuple(leaves))


def parse_binder_group(text: str, scopes: list[dict[str, str]], counter: list[int]) -> ExprTree | None:
    """Tree for one theorem-level binder group, registering its names."""
    inner = text.strip()
    open_tok, close_tok = inner[0], inner[-1]
    if lean_text.OPEN_BRACKETS.get(open_tok) != close_tok:
        raise ParseError(f"malformed binder group {text!r}")
    body = inner[1:-1]
    masked = lean_text.mask_comments_and_strings(body)
    colon = _top_level_colon(masked)
    if colon is None:
        names: list[str] = []
        type_text = body
    else:
        names = body[:colon].split()
        type_text = body[colon + 1:]
        default = lean_text.find_top_level(lean_text.mask_comments_and_strings(type_text), ":=")
        if default is not None:
            type_text = type_text[:default]
    if not type_text.strip():
        for name in names:
            scopes[-1][name] = f"v{counter[0]}"
            counter[0] += 1
        return None
    typ = parse_expression(type_text, scopes, counter)
    for name in names:
        if name != "_":
            scopes[-1][name] = f"v{counter[0]}"
        counter[0] += 1
    if typ.label in PROP_LABELS:
        return typ
    return ExprTree(DECL, (typ,))


def _top_level_colon(masked: str) -> int | None:
    depth = 0
    for i, ch in enumerate(masked):
        if ch in lean_text.OPEN_BRACKETS:
            depth += 1
        elif ch in lean_text.CLOSE_BRACKETS:
            depth -= 1
        elif ch == ":" and depth == 0 and not masked.startswith(":=", i):
            return i
    return None


def parse_to_expr_tree(stmt: TheoremStatement | str) -> ExprTree:
    """Simplified expression tree for a theorem statement (see module docstring)."""
    if isinstance(stmt, str):
        stmt = TheoremStatement.from_source(stmt)
    scopes: list[dict[str, str]] = [{}]
    counter = [0]
    children = []
    for group in stmt.hypotheses:
        tree = parse_binder_group(group, scopes, counter)
        if tree is not None:
            children.append(tree)
    children.append(parse_expression(stmt.goal, scopes, counter))
    return ExprTree(ROOT, tuple(children))
