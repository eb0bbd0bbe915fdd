"""Formal checking of candidate proofs: an external Lean process or a rule-based mock."""

from __future__ import annotations

import os
import re
import shlex
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import yaml

from lemmaloop import lean_text

OK, FAILED, TIMEOUT = "ok", "failed", "timeout"


class CheckerUnavailable(RuntimeError):
    pass


class WorkspaceError(OSError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    """An error located in target-relative coordinates (1-based line, 0-based column).

    Line 0 means the error lies outside the target (header, library or axioms).
    """

    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}:{self.column}: {self.message}"


@dataclass(frozen=True)
class VerificationResult:
    status: str
    errors: tuple[Diagnostic, ...] = ()
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if self.status not in (OK, FAILED, TIMEOUT):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == OK and self.errors:
            raise ValueError("an ok result carries no errors")

    @property
    def ok(self) -> bool:
        return self.status == OK

    def error_text(self) -> str:
        if self.status == TIMEOUT:
            return "The checker timed out."
        return "\n".join(str(d) for d in self.errors)


@dataclass(frozen=True)
class VerificationUnit:
    """One compilation unit: header, proved library lemmas, assumed axioms, then the target."""

    imports_header: str
    library_context: tuple[str, ...]
    target_source: str
    axioms: tuple[str, ...] = field(default=())

    def render(self) -> tuple[str, int]:
        """Full source text and the number of lines preceding the target."""
        parts = [p.strip("\n") for p in (self.imports_header, *self.library_context, *self.axioms) if p.strip()]
        prefix = "\n\n".join(parts) + "\n\n" if parts else ""
        return prefix + self.target_source + "\n", prefix.count("\n")

    def declared_names(self) -> set[str]:
        names = set()
        for src in (*self.library_context, *self.axioms, self.target_source):
            names.update(d.name for d in lean_text.declarations(src))
        return names


def count_sorries(source: str) -> int:
    return lean_text.count_token(source, "sorry")


def sorry_guard(unit: VerificationUnit) -> VerificationResult | None:
    for name, pos in lean_text.identifiers(unit.target_source):
        if name == "sorry":
            line, col = _line_col(unit.target_source, pos)
            return VerificationResult(FAILED, (Diagnostic(line, col, "sorry present in proof"),))
    return None


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1)


class Verifier(Protocol):
    def verify(self, unit: VerificationUnit, allow_sorry: bool = False) -> VerificationResult: ...


_LOCAL_NAME_RE = re.compile(r"\b(?:have|let|obtain|set)\s+([^\W\d][\w']*)")


@dataclass
class MockRule:
    pattern: re.Pattern
    status: str
    message: str = ""


class MockVerifier:
    """Deterministic stand-in for the checker driven by regex rules on the target.

    Checks run in order: the sorry guard (unless `allow_sorry`), then name
    resolution for identifiers matching `reference_pattern`, then the first
    rule whose pattern is found in the target, then `default`.
    """

    def __init__(
        self,
        rules: list[MockRule] | None = None,
        default: str = OK,
        default_message: str = "rejected by mock checker",
        reference_pattern: str | None = None,
    ):
        self.rules = rules or []
        self.default = default
        self.default_message = default_message
        self.reference_pattern = re.compile(reference_pattern) if reference_pattern else None
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> MockVerifier:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> MockVerifier:
        rules = [
            MockRule(re.compile(r["pattern"], re.MULTILINE), r.get("status", FAILED), r.get("message", ""))
            for r in data.get("rules", [])
        ]
        return cls(
            rules,
            default=data.get("default", OK),
            default_message=data.get("default_message", "rejected by mock checker"),
            reference_pattern=data.get("reference_pattern"),
        )

    def verify(self, unit: VerificationUnit, allow_sorry: bool = False) -> VerificationResult:
        with self._lock:
            self.calls += 1
        if not allow_sorry:
            guarded = sorry_guard(unit)
            if guarded is not None:
                return guarded
        target = unit.target_source
        if self.reference_pattern is not None:
            known = unit.declared_names() | set(_LOCAL_NAME_RE.findall(lean_text.mask_comments_and_strings(target)))
            for name, pos in lean_text.identifiers(target):
                if self.reference_pattern.search(name) and name not in known:
                    line, col = _line_col(target, pos)
                    return VerificationResult(FAILED, (Diagnostic(line, col, f"unknown identifier '{name}'"),))
        for rule in self.rules:
            m = rule.pattern.search(target)
            if m:
                return self._result(rule.status, rule.message, target, m.start())
        return self._result(self.default, self.default_message, target, 0)

    @staticmethod
    def _result(status: str, message: str, target: str, pos: int) -> VerificationResult:
        if status == OK:
            return VerificationResult(OK)
        line, col = _line_col(target, pos)
        return VerificationResult(status, (Diagnostic(line, col, message or "rejected by mock checker"),))


_DIAG_RE = re.compile(r"^(?P<file>[^\n:]+):(?P<line>\d+):(?P<col>\d+): (?P<sev>error|warning|info)(?:\([^)]*\))?: ?(?P<msg>.*)$")


def parse_diagnostics(output: str, line_offset: int) -> list[Diagnostic]:
    """Error diagnostics from checker output, with continuation lines folded in."""
    diags: list[Diagnostic] = []
    current: list | None = None
    for raw in output.splitlines():
        m = _DIAG_RE.match(raw)
        if m:
            if current is not None:
                diags.append(Diagnostic(current[0], current[1], "\n".join(current[2]).strip()))
            current = None
            if m.group("sev") == "error":
                line = int(m.group("line")) - line_offset
                current = [max(line, 0), int(m.group("col")), [m.group("msg")]]
        elif current is not None:
            current[2].append(raw)
    if current is not None:
        diags.append(Diagnostic(current[0], current[1], "\n".join(current[2]).strip()))
    return diags


class LeanVerifier:
    """Compiles each unit with an external checker command in a private directory.

    `command` is run with the unit's file path appended and `project_root` as
    the working directory, so `lake env lean` resolves the project's
    dependencies.
    """

    def __init__(
        self,
        command: str | list[str] = "lake env lean",
        project_root: str | Path | None = None,
        timeout: float = 300.0,
        keep_failures: bool = False,
        max_concurrent: int | None = None,
        workspace_root: str | Path | None = None,
    ):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise CheckerUnavailable("empty checker command")
        self.project_root = Path(project_root) if project_root else None
        self.timeout = timeout
        self.keep_failures = keep_failures
        self.workspace_root = workspace_root
        self._slots = threading.BoundedSemaphore(max_concurrent or max(1, (os.cpu_count() or 2) // 2))

    def check_available(self) -> None:
        if shutil.which(self.command[0]) is None and not Path(self.command[0]).is_file():
            raise CheckerUnavailable(f"checker binary not found: {self.command[0]}")
        if self.project_root is not None and not self.project_root.is_dir():
            raise CheckerUnavailable(f"project root does not exist: {self.project_root}")

    def verify(self, unit: VerificationUnit, allow_sorry: bool = False) -> VerificationResult:
        if not allow_sorry:
            guarded = sorry_guard(unit)
            if guarded is not None:
                return guarded
        self.check_available()
        text, offset = unit.render()
        try:
            workdir = Path(tempfile.mkdtemp(prefix="lemmaloop-", dir=self.workspace_root))
            path = workdir / "Unit.lean"
            path.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise WorkspaceError(f"cannot prepare workspace: {exc}") from exc
        start = time.monotonic()
        try:
            with self._slots:
                proc = subprocess.run(
                    [*self.command, str(path)],
                    cwd=self.project_root,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
        except subprocess.TimeoutExpired:
            self._cleanup(workdir, failed=True)
            return VerificationResult(TIMEOUT, (), max(time.monotonic() - start, self.timeout))
        except FileNotFoundError as exc:
            self._cleanup(workdir, failed=True)
            raise CheckerUnavailable(str(exc)) from exc
        wall = time.monotonic() - start
        diags = parse_diagnostics(proc.stdout + "\n" + proc.stderr, offset)
        if proc.returncode == 0 and not diags:
            self._cleanup(workdir, failed=False)
            return VerificationResult(OK, (), wall)
        if not diags:
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-5:]
            diags = [Diagnostic(0, 0, "checker exited with code %d: %s" % (proc.returncode, " | ".join(tail)))]
        self._cleanup(workdir, failed=True)
        return VerificationResult(FAILED, tuple(diags), wall)

    def _cleanup(self, workdir: Path, failed: bool) -> None:
        if failed and self.keep_failures:
            return
        shutil.rmtree(workdir, ignore_errors=True)
