from __future__ import annotations

from pathlib import Path

import pytest

import lemmaloop
from lemmaloop.library import Library
from lemmaloop.llm import LLMGateway, ScriptedProvider, ScriptRule
from lemmaloop.verifier import MockVerifier
from lemmaloop.wake import WakeContext

TOY = Path(lemmaloop.__file__).parent / "data" / "toy"
FIXTURES = Path(__file__).parent / "fixtures"


def fence(code: str) -> str:
    return f"```lean4\n{code}\n```"


def rule(reply: str, *contains: str, purpose=(), excludes=(), usage=None) -> ScriptRule:
    usage = usage or {}
    return ScriptRule(
        reply=reply,
        contains=list(contains),
        excludes=list(excludes),
        purpose=[purpose] if isinstance(purpose, str) else list(purpose),
        prompt_tokens=usage.get("prompt_tokens"),
        completion_tokens=usage.get("completion_tokens"),
    )


def make_ctx(rules, verifier=None, library=None, header="", default_reply="no idea", **gateway_kw) -> WakeContext:
    gateway = LLMGateway(ScriptedProvider(list(rules), default_reply), **gateway_kw)
    return WakeContext(gateway, verifier or MockVerifier(), library or Library(), imports_header=header)


@pytest.fixture
def toy_dir() -> Path:
    return TOY


# -- acceptance summary: one line per criterion ----------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (report.when == "call" or report.skipped or report.failed):
        return
    number, title = marker.args
    if report.skipped:
        verdict = "SKIP"
    else:
        verdict = "PASS" if report.passed else "FAIL"
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if number not in _CRITERIA or verdict != "PASS":
        _CRITERIA[number] = (title, verdict, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[number]
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"criterion {number:>2} {verdict}: {title}{suffix}")
