"""Chat providers: a scripted offline mock and an OpenAI-compatible HTTP client."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from lemmaloop.llm.gateway import ChatRequest, ChatResponse, ProviderError


@dataclass
class ScriptRule:
    reply: str
    contains: list[str] = field(default_factory=list)
    excludes: list[str] = field(default_factory=list)
    purpose: list[str] = field(default_factory=list)
    prompt_tokens: int | None = None
    completion_tokens: int | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.purpose and request.purpose not in self.purpose:
            return False
        prompt = request.prompt
        return all(s in prompt for s in self.contains) and not any(s in prompt for s in self.excludes)

    @classmethod
    def from_dict(cls, data: dict) -> ScriptRule:
        purpose = data.get("purpose", [])
        usage = data.get("usage", {})
        return cls(
            reply=data["reply"],
            contains=list(_as_list(data.get("contains", []))),
            excludes=list(_as_list(data.get("excludes", []))),
            purpose=list(_as_list(purpose)),
            prompt_tokens=usage.get("prompt_tokens"),
            completion_tokens=usage.get("completion_tokens"),
        )


def _as_list(value) -> list:
    return [value] if isinstance(value, str) else list(value)


class ScriptedProvider:
    """Replies chosen by the first rule whose predicates match the prompt.

    A rule matches when the request purpose is one of `purpose` (if given),
    every `contains` substring occurs in the prompt and no `excludes` one
    does. Unscripted token counts default to whitespace word counts.
    The provider is stateless, so runs are reproducible and resumable.
    """

    def __init__(self, rules: list[ScriptRule], default_reply: str = ""):
        self.rules = rules
        self.default_reply = default_reply

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedProvider:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls(
            [ScriptRule.from_dict(r) for r in data.get("rules", [])],
            default_reply=data.get("default_reply", ""),
        )

    def chat(self, request: ChatRequest) -> ChatResponse:
        for rule in self.rules:
            if rule.matches(request):
                return self._respond(request, rule.reply, rule.prompt_tokens, rule.completion_tokens)
        return self._respond(request, self.default_reply, None, None)

    @staticmethod
    def _respond(request: ChatRequest, text: str, prompt_tokens: int | None, completion_tokens: int | None) -> ChatResponse:
        if prompt_tokens is None:
            prompt_tokens = sum(len(m["content"].split()) for m in request.messages)
        if completion_tokens is None:
            completion_tokens = len(text.split())
        return ChatResponse(text, prompt_tokens, completion_tokens)


class OpenAIChatProvider:
    """POSTs to `{endpoint}/chat/completions`; the key comes from LLM_API_KEY."""

    def __init__(self, endpoint: str, api_key_env: str = "LLM_API_KEY", timeout: float = 600.0):
        self.endpoint = endpoint.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout

    def chat(self, request: ChatRequest) -> ChatResponse:
        import httpx

        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        payload = {"model": request.model, "messages": list(request.messages), "temperature": request.temperature}
        try:
            resp = httpx.post(f"{self.endpoint}/chat/completions", json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"chat request failed: {exc}") from exc
        usage = data.get("usage") or {}
        completion = int(usage.get("completion_tokens", 0))
        # some providers report hidden reasoning separately from completion tokens
        completion += int(usage.get("reasoning_tokens", 0))
        return ChatResponse(text, int(usage.get("prompt_tokens", 0)), completion)
