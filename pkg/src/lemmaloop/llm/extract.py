"""Pull structured payloads out of free-form model replies."""

from __future__ import annotations

import re

_FENCE_OPEN = re.compile(r"^\s*```+\s*([A-Za-z0-9_+-]*)\s*$")
_FENCE_CLOSE = re.compile(r"^\s*```+\s*$")
_LEAN_INFO = {"lean", "lean4"}


class TagNotFound(ValueError):
    pass


def extract_lean_blocks(response: str, allow_bare: bool = False) -> list[str]:
    """Interiors of fenced ```lean / ```lean4 blocks, in order.

    With `allow_bare`, fences without an info string count too.
    """
    blocks: list[str] = []
    current: list[str] | None = None
    keep = False
    for line in response.split("\n"):
        if current is None:
            m = _FENCE_OPEN.match(line)
            if m:
                info = m.group(1).lower()
                keep = info in _LEAN_INFO or (allow_bare and info == "")
                current = []
        elif _FENCE_CLOSE.match(line):
            if keep:
                blocks.append("\n".join(current))
            current = None
        else:
            current.append(line)
    return blocks


def first_lean_block(response: str) -> str | None:
    blocks = extract_lean_blocks(response, allow_bare=True)
    return blocks[0] if blocks else None


def extract_tagged(response: str, tag: str) -> str:
    """Trimmed interior of the first well-formed outermost <tag>...</tag> pair."""
    if not re.fullmatch(r"[A-Za-z_][\w-]*", tag):
        raise ValueError(f"invalid tag name {tag!r}")
    token = re.compile(rf"<(/?){re.escape(tag)}>")
    depth, start = 0, None
    for m in token.finditer(response):
        closing = m.group(1) == "/"
        if not closing:
            if depth == 0:
                start = m.end()
            depth += 1
        elif depth > 0:
            depth -= 1
            if depth == 0:
                return response[start:m.start()].strip()
    raise TagNotFound(f"no complete <{tag}> pair in response")
