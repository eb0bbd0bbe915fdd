from __future__ import annotations

import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemmaloop.llm import (
    Budget,
    BudgetExhausted,
    ChatRequest,
    ChatResponse,
    LLMGateway,
    MissingPlaceholder,
    OpenAIChatProvider,
    PromptTemplate,
    ProviderError,
    ScriptedProvider,
    TagNotFound,
    TemplateSet,
    TokenLedger,
    TokenUsage,
    extract_lean_blocks,
    extract_tagged,
    render_prompt,
)
from lemmaloop.llm.templates import PLACEHOLDERS, TEMPLATE_IDS
from conftest import fence, rule

EXPECTED_PLACEHOLDERS = {
    "whole_proof": {"problem", "useful_theorems_section"},
    "error_correction": {"error_message", "useful_theorems_section"},
    "sketch": {"problem", "useful_theorems_section"},
    "sketch_correction": {"error_message", "useful_theorems_section"},
    "decomposition": {"proof_sketch"},
    "assembly": {"proof_sketch", "theorems_string"},
    "annotation": {"proof"},
    "cluster_abstraction": {"theorem_section", "domain"},
    "nl_check": {"proof_sketch"},
}


# -- templates ------------------------------------------------------------------


def test_packaged_templates_have_expected_placeholders():
    templates = TemplateSet()
    for tid in TEMPLATE_IDS:
        assert set(templates[tid].placeholders) == EXPECTED_PLACEHOLDERS[tid]


def test_whole_proof_rendering():
    out = TemplateSet().render("whole_proof", problem="theorem t : 1 = 1 := by sorry", useful_theorems_section="")
    assert "theorem t : 1 = 1 := by sorry" in out
    assert "Do NOT use sorry" in out
    assert "{" + "problem}" not in out


def test_annotation_mentions_description_tags():
    out = TemplateSet().render("annotation", proof="theorem t : 1 = 1 := rfl")
    assert "<description> tags" in out


def test_zero_placeholder_template_is_verbatim():
    body = "No placeholders {here} or {problem_x}."
    assert render_prompt(PromptTemplate("x", body), {}) == body


def test_missing_placeholder_lists_keys():
    with pytest.raises(MissingPlaceholder) as info:
        TemplateSet().render("assembly", proof_sketch="s")
    assert info.value.missing == ["theorems_string"]


def test_template_directory_override(tmp_path):
    (tmp_path / "whole_proof.txt").write_text("Prove {problem}. Lemmas: {useful_theorems_section}")
    templates = TemplateSet(tmp_path)
    assert templates.render("whole_proof", problem="P", useful_theorems_section="L") == "Prove P. Lemmas: L"
    assert "proof sketch" in templates["decomposition"].body


_safe_text = st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(TEMPLATE_IDS), st.fixed_dictionaries({p: _safe_text for p in PLACEHOLDERS}))
def test_rendering_resolves_every_placeholder_and_is_idempotent(tid, bindings):
    template = TemplateSet()[tid]
    out = render_prompt(template, bindings)
    for name in PLACEHOLDERS:
        assert "{" + name + "}" not in out
    assert render_prompt(PromptTemplate(tid, out), bindings) == out


# -- extraction -------------------------------------------------------------------


def test_extract_single_block():
    assert extract_lean_blocks("Here:\n```lean\ntheorem t : 1 = 1 := rfl\n```\nDone.") == ["theorem t : 1 = 1 := rfl"]


def test_extract_no_block():
    assert extract_lean_blocks("I cannot prove this.") == []


def test_extract_multiple_blocks_in_order():
    reply = "\n".join(fence(f"theorem s{i} : True := by sorry") for i in range(3))
    assert extract_lean_blocks(reply) == [f"theorem s{i} : True := by sorry" for i in range(3)]


def test_bare_and_foreign_fences():
    reply = "```\nbare\n```\n```python\nprint(1)\n```\n```lean4\nkept\n```"
    assert extract_lean_blocks(reply) == ["kept"]
    assert extract_lean_blocks(reply, allow_bare=True) == ["bare", "kept"]


_payload = st.lists(st.text(alphabet=st.characters(blacklist_categories=["Cs"], blacklist_characters="`\r\n\x0b\x0c\x1c\x1d\x1e\x85  "), max_size=30), min_size=1, max_size=6).map("\n".join)


@settings(max_examples=200, deadline=None)
@given(_payload)
def test_wrap_then_extract_is_identity(payload):
    assert extract_lean_blocks(fence(payload)) == [payload]


def test_extract_tagged():
    assert extract_tagged("<description>AM-GM variant</description>", "description") == "AM-GM variant"
    reply = "Sub-domain: algebra.\nReasoning...\n<description>\n  Titu's lemma variant.\n</description>\nThanks"
    assert extract_tagged(reply, "description") == "Titu's lemma variant."


def test_extract_tagged_nested_and_stray():
    reply = "</description> noise <description>outer <description>inner</description> tail</description>"
    assert extract_tagged(reply, "description") == "outer <description>inner</description> tail"


def test_extract_tagged_missing_close():
    with pytest.raises(TagNotFound):
        extract_tagged("<description>never closed", "description")


# -- gateway ----------------------------------------------------------------------


class FailingThenOk:
    def __init__(self, failures: int, usage=(3, 4)):
        self.failures = failures
        self.calls = 0
        self.usage = usage

    def chat(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        if self.calls <= self.failures:
            raise ProviderError("503")
        return ChatResponse("ok", *self.usage)


def test_canned_reply_and_scripted_usage():
    provider = ScriptedProvider([rule("canned", "hello", usage={"prompt_tokens": 11, "completion_tokens": 7})])
    gateway = LLMGateway(provider)
    ledger = TokenLedger()
    text, usage = gateway.complete("say hello", purpose="whole_proof", subject="t", ledger=ledger)
    assert text == "canned"
    assert usage == TokenUsage(11, 7, 1)
    assert ledger.total() == usage


def test_retry_then_success_counts_calls():
    sleeps = []
    gateway = LLMGateway(FailingThenOk(2), sleep=sleeps.append, backoff=1.0)
    _, usage = gateway.complete("x")
    assert usage.call_count == 3
    assert sleeps == [1.0, 2.0]


def test_gives_up_after_three_retries():
    provider = FailingThenOk(100)
    gateway = LLMGateway(provider, sleep=lambda s: None)
    with pytest.raises(ProviderError):
        gateway.complete("x")
    assert provider.calls == 4
    assert gateway.ledger.entries == []


def test_token_ceiling_leaves_ledger_unchanged():
    provider = ScriptedProvider([rule("big", usage={"prompt_tokens": 1000, "completion_tokens": 1000})])
    gateway = LLMGateway(provider, token_ceiling=1000)
    ledger = TokenLedger()
    with pytest.raises(BudgetExhausted):
        gateway.complete("anything", ledger=ledger)
    assert ledger.entries == [] and gateway.spent == 0


def test_ceiling_blocks_once_spent():
    gateway = LLMGateway(ScriptedProvider([rule("r", usage={"prompt_tokens": 5, "completion_tokens": 5})]), token_ceiling=20)
    gateway.complete("a")
    gateway.complete("b")
    with pytest.raises(BudgetExhausted):
        gateway.complete("c")
    assert gateway.ledger.total().total_tokens == 20


def test_empty_prompt_rejected():
    with pytest.raises(ValueError):
        LLMGateway(ScriptedProvider([])).complete("")


def test_ledger_conservation_under_threads():
    gateway = LLMGateway(ScriptedProvider([], default_reply="one two three"), max_in_flight=4)
    usages = []
    lock = threading.Lock()

    def worker(i):
        for j in range(25):
            _, u = gateway.complete(f"prompt {i} {j} " + "w " * j)
            with lock:
                usages.append(u)

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(gateway.ledger.entries) == 200
    assert gateway.ledger.total() == TokenUsage.sum(usages)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 5)), max_size=20))
def test_token_usage_is_additive(triples):
    usages = [TokenUsage(*t) for t in triples]
    total = TokenUsage.sum(usages)
    assert total.prompt_tokens == sum(t[0] for t in triples)
    assert total.completion_tokens == sum(t[1] for t in triples)
    assert total.call_count == sum(t[2] for t in triples)


def test_invalid_budget_and_usage():
    with pytest.raises(ValueError):
        Budget(0, 6)
    with pytest.raises(ValueError):
        Budget(4, -1)
    with pytest.raises(ValueError):
        TokenUsage(-1, 0, 0)


def test_ledger_records_round_trip():
    gateway = LLMGateway(ScriptedProvider([], default_reply="r"))
    gateway.complete("p q", purpose="sketch", subject="t1")
    records = gateway.ledger.to_records()
    assert records == [{"purpose": "sketch", "subject": "t1", "prompt_tokens": gateway.ledger.entries[0].prompt_tokens,
                        "completion_tokens": 1, "call_count": 1}]
    assert TokenLedger.from_records(records).total() == gateway.ledger.total()


# -- providers ----------------------------------------------------------------------


def test_scripted_provider_matching(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(
        "default_reply: nothing\n"
        "rules:\n"
        "  - purpose: sketch\n    contains: [t1]\n    reply: sketch-for-t1\n"
        "  - contains: [t1]\n    excludes: [lemma]\n    reply: plain-t1\n"
        "  - contains: [t1]\n    reply: t1-with-lemma\n    usage: {prompt_tokens: 9, completion_tokens: 2}\n",
        encoding="utf-8",
    )
    provider = ScriptedProvider.from_file(path)

    def ask(prompt, purpose=""):
        return provider.chat(ChatRequest(({"role": "user", "content": prompt},), "m", 0.0, purpose))

    assert ask("prove t1", "sketch").text == "sketch-for-t1"
    assert ask("prove t1", "whole_proof").text == "plain-t1"
    reply = ask("prove t1 using lemma")
    assert (reply.text, reply.prompt_tokens, reply.completion_tokens) == ("t1-with-lemma", 9, 2)
    fallback = ask("other goal here")
    assert (fallback.text, fallback.prompt_tokens, fallback.completion_tokens) == ("nothing", 3, 1)


def test_openai_provider_wire_format(monkeypatch):
    seen = {}

    def fake_post(url, json, headers, timeout):
        seen.update(url=url, json=json, headers=headers)
        body = {
            "choices": [{"message": {"role": "assistant", "content": "hi"}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 8, "reasoning_tokens": 5},
        }
        return httpx.Response(200, json=body, request=httpx.Request("POST", url))

    monkeypatch.setenv("LLM_API_KEY", "k")
    monkeypatch.setattr(httpx, "post", fake_post)
    gateway = LLMGateway(OpenAIChatProvider("http://llm.local/v1"), model="m1", temperature=0.7)
    text, usage = gateway.complete("hello", purpose="whole_proof")
    assert text == "hi"
    assert usage == TokenUsage(10, 13, 1)
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["json"]["model"] == "m1" and seen["json"]["temperature"] == 0.7
    assert [m["role"] for m in seen["json"]["messages"]] == ["system", "user"]
    assert seen["headers"] == {"Authorization": "Bearer k"}


def test_openai_provider_errors(monkeypatch):
    def server_error(url, json, headers, timeout):
        return httpx.Response(500, text="boom", request=httpx.Request("POST", url))

    monkeypatch.setattr(httpx, "post", server_error)
    gateway = LLMGateway(OpenAIChatProvider("http://llm.local"), sleep=lambda s: None)
    with pytest.raises(ProviderError):
        gateway.complete("x")
