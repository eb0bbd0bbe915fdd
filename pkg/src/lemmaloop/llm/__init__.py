"""Prompt templates, provider access and reply parsing."""

from lemmaloop.llm.extract import TagNotFound, extract_lean_blocks, extract_tagged, first_lean_block
from lemmaloop.llm.gateway import (
    Budget,
    BudgetExhausted,
    ChatRequest,
    ChatResponse,
    LLMGateway,
    LedgerEntry,
    ProviderError,
    TokenLedger,
    TokenUsage,
)
from lemmaloop.llm.providers import OpenAIChatProvider, ScriptedProvider, ScriptRule
from lemmaloop.llm.templates import MissingPlaceholder, PromptTemplate, TemplateSet, load_template, render_prompt

__all__ = [
    "Budget",
    "BudgetExhausted",
    "ChatRequest",
    "ChatResponse",
    "LLMGateway",
    "LedgerEntry",
    "MissingPlaceholder",
    "OpenAIChatProvider",
    "PromptTemplate",
    "ProviderError",
    "ScriptRule",
    "ScriptedProvider",
    "TagNotFound",
    "TemplateSet",
    "TokenLedger",
    "TokenUsage",
    "extract_lean_blocks",
    "extract_tagged",
    "first_lean_block",
    "load_template",
    "render_prompt",
]
