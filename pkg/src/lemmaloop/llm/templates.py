"""Prompt templates and placeholder rendering."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

PLACEHOLDERS = (
    "problem",
    "error_message",
    "useful_theorems_section",
    "proof_sketch",
    "theorems_string",
    "proof",
    "theorem_section",
    "domain",
)
TEMPLATE_IDS = (
    "whole_proof",
    "error_correction",
    "sketch",
    "sketch_correction",
    "decomposition",
    "assembly",
    "annotation",
    "cluster_abstraction",
    "nl_check",
)

_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


class MissingPlaceholder(KeyError):
    def __init__(self, missing: list[str]):
        super().__init__(f"missing bindings: {', '.join(missing)}")
        self.missing = missing


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for m in _PLACEHOLDER_RE.finditer(self.body):
            seen.setdefault(m.group(1), None)
        return tuple(seen)

    def render(self, **bindings: str) -> str:
        return render_prompt(self, bindings)


def render_prompt(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Substitute every known placeholder; nothing else in the body changes."""
    missing = [p for p in template.placeholders if p not in bindings]
    if missing:
        raise MissingPlaceholder(missing)
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], template.body)


def load_template(template_id: str, directory: str | Path | None = None) -> PromptTemplate:
    """Load a template from `directory` if it has one, else from the packaged set."""
    if directory is not None:
        path = Path(directory) / f"{template_id}.txt"
        if path.exists():
            return PromptTemplate(template_id, path.read_text(encoding="utf-8"))
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    text = resources.files("lemmaloop.llm").joinpath("templates", f"{template_id}.txt").read_text(encoding="utf-8")
    return PromptTemplate(template_id, text)


class TemplateSet:
    """All templates, loaded once; `directory` overrides individual files."""

    def __init__(self, directory: str | Path | None = None):
        self._templates = {tid: load_template(tid, directory) for tid in TEMPLATE_IDS}

    def __getitem__(self, template_id: str) -> PromptTemplate:
        return self._templates[template_id]

    def render(self, template_id: str, **bindings: str) -> str:
        return render_prompt(self._templates[template_id], bindings)
