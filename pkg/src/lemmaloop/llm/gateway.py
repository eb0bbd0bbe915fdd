"""Budgeted access to a chat-completion provider with exact token accounting."""

from __future__ import annotations

import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Protocol

SYSTEM_PROMPT = "You are a careful assistant for formal mathematics in Lean 4."


class ProviderError(RuntimeError):
    """The provider could not be reached or refused the request."""


class BudgetExhausted(RuntimeError):
    """The run-level token ceiling would be exceeded."""


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    call_count: int = 0

    def __post_init__(self) -> None:
        if min(self.prompt_tokens, self.completion_tokens, self.call_count) < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: TokenUsage) -> TokenUsage:
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
            self.call_count + other.call_count,
        )

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    @classmethod
    def sum(cls, usages: Iterable[TokenUsage]) -> TokenUsage:
        total = cls()
        for u in usages:
            total = total + u
        return total


@dataclass(frozen=True)
class Budget:
    max_attempts: int = 4
    max_corrections: int = 6

    def __post_init__(self) -> None:
        if self.max_attempts < 1 or self.max_corrections < 0:
            raise ValueError("need max_attempts >= 1 and max_corrections >= 0")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]
    model: str
    temperature: float
    purpose: str = ""

    @property
    def prompt(self) -> str:
        return self.messages[-1]["content"]


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int
    completion_tokens: int


class ChatProvider(Protocol):
    def chat(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class LedgerEntry:
    purpose: str
    subject: str
    prompt_tokens: int
    completion_tokens: int
    call_count: int

    @property
    def usage(self) -> TokenUsage:
        return TokenUsage(self.prompt_tokens, self.completion_tokens, self.call_count)


@dataclass
class TokenLedger:
    """Append-only log of provider calls. Appends are serialized by a lock."""

    entries: list[LedgerEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self.entries.append(entry)

    def extend(self, other: TokenLedger) -> None:
        with self._lock:
            self.entries.extend(other.entries)

    def total(self) -> TokenUsage:
        return TokenUsage.sum(e.usage for e in list(self.entries))

    def by_subject(self, subject: str) -> list[LedgerEntry]:
        return [e for e in self.entries if e.subject == subject]

    def to_records(self) -> list[dict]:
        return [asdict(e) for e in self.entries]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> TokenLedger:
        return cls([LedgerEntry(**r) for r in records])


class LLMGateway:
    """Sends rendered prompts to a provider with retries and a token ceiling.

    Usage goes to the ledger passed to `complete`, or to `self.ledger`.
    The ceiling applies to everything this gateway has spent, across ledgers.
    """

    def __init__(
        self,
        provider: ChatProvider,
        model: str = "mock",
        temperature: float = 0.7,
        token_ceiling: int | None = None,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        sleep: Callable[[float], None] = time.sleep,
        system_prompt: str = SYSTEM_PROMPT,
    ):
        self.provider = provider
        self.model = model
        self.temperature = temperature
        self.token_ceiling = token_ceiling
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep
        self.system_prompt = system_prompt
        self.ledger = TokenLedger()
        self._spent = 0
        self._spent_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    @property
    def spent(self) -> int:
        return self._spent

    def restore_spent(self, tokens: int) -> None:
        """Carry over spending from a previous session of the same run."""
        with self._spent_lock:
            self._spent = tokens

    def complete(
        self,
        prompt: str,
        *,
        purpose: str = "",
        subject: str = "",
        ledger: TokenLedger | None = None,
        temperature: float | None = None,
    ) -> tuple[str, TokenUsage]:
        if not prompt:
            raise ValueError("empty prompt")
        if self.token_ceiling is not None and self._spent >= self.token_ceiling:
            raise BudgetExhausted(f"token ceiling {self.token_ceiling} already reached")
        request = ChatRequest(
            messages=(
                {"role": "system", "content": self.system_prompt},
                {"role": "user", "content": prompt},
            ),
            model=self.model,
            temperature=self.temperature if temperature is None else temperature,
            purpose=purpose,
        )
        calls = 0
        while True:
            calls += 1
            try:
                with self._slots:
                    response = self.provider.chat(request)
                break
            except ProviderError as exc:
                if calls > self.max_retries:
                    raise ProviderError(f"{exc} (gave up after {calls} calls)") from exc
                self.sleep(self.backoff * 2 ** (calls - 1))
        usage = TokenUsage(response.prompt_tokens, response.completion_tokens, calls)
        with self._spent_lock:
            if self.token_ceiling is not None and self._spent + usage.total_tokens > self.token_ceiling:
                raise BudgetExhausted(
                    f"call would use {usage.total_tokens} tokens; "
                    f"{self.token_ceiling - self._spent} left under ceiling {self.token_ceiling}"
                )
            self._spent += usage.total_tokens
        target = self.ledger if ledger is None else ledger
        target.append(LedgerEntry(purpose, subject, usage.prompt_tokens, usage.completion_tokens, calls))
        return response.text, usage
