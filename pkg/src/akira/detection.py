"""Undefined-behavior detection behind a uniform ``Detector`` interface.

Two backends are provided: ``MiriDetector`` shells out to the Miri
interpreter on a temporary single-file project, and ``MockDetector``
replays a fixed script of reports for offline deterministic testing.
Diagnostics parsing is shared: one finding per undefined-behavior error
block, categorized by an ordered keyword-rule table that ships as data.
"""

from __future__ import annotations

import re
import subprocess
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .errors import DetectorUnavailableError, ScriptError

UB_BLOCK_MARKER = "error: Undefined Behavior"
COMPILE_ERROR_PATTERNS = ("error[E", "error: could not compile", "error: expected")
LOCATION_RE = re.compile(r"-->\s*(\S+?:\d+:\d+)")

DEFAULT_TIMEOUT_S = 60.0


@dataclass(frozen=True)
class UbFinding:
    """A single undefined-behavior finding extracted from diagnostics."""

    category: str
    message: str
    location: str | None = None


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of one full detection run."""

    findings: tuple[UbFinding, ...]
    compiled: bool = True
    raw_output: str = ""

    @property
    def ub_count(self) -> int:
        return len(self.findings)

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(f.category for f in self.findings)


class Detector(Protocol):
    """Anything that can run one detection pass over a program."""

    def detect(self, code: str) -> DetectionReport: ...


class CategoryRules:
    """Ordered keyword -> category rules; first matching keyword wins."""

    def __init__(self, rules: Sequence[tuple[str, str]]):
        self._rules = [(kw.lower(), cat) for kw, cat in rules]

    @classmethod
    def load(cls, path: str | Path) -> "CategoryRules":
        rules: list[tuple[str, str]] = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=>" not in line:
                raise ScriptError(f"{path}:{lineno}: expected 'keyword => category'")
            keyword, category = (part.strip() for part in line.split("=>", 1))
            if not keyword or not category:
                raise ScriptError(f"{path}:{lineno}: empty keyword or category")
            rules.append((keyword, category))
        return cls(rules)

    @classmethod
    def default(cls) -> "CategoryRules":
        ref = resources.files("akira.data").joinpath("diagnostics.rules")
        with resources.as_file(ref) as path:
            return cls.load(path)

    def categorize_line(self, line: str) -> str:
        lowered = line.lower()
        for keyword, category in self._rules:
            if keyword in lowered:
                return category
        return "unknown"


def parse_diagnostics(raw: str, rules: CategoryRules | None = None) -> list[UbFinding]:
    """Extract findings from detector standard-error text.

    Each ``error: Undefined Behavior`` block yields one finding, in
    document order.  The category comes from the keyword rules applied
    to the block's first line; a ``file:line:col`` span is attached when
    present.  Unmatched blocks never raise: they surface as ``unknown``.
    """
    rules = rules or CategoryRules.default()
    lines = raw.splitlines()
    starts = [i for i, line in enumerate(lines) if UB_BLOCK_MARKER in line]
    findings: list[UbFinding] = []
    for n, start in enumerate(starts):
        end = starts[n + 1] if n + 1 < len(starts) else len(lines)
        first = lines[start]
        message = first.split(UB_BLOCK_MARKER, 1)[1].lstrip(": ").strip()
        location = None
        for line in lines[start:end]:
            match = LOCATION_RE.search(line)
            if match:
                location = match.group(1)
                break
        findings.append(
            UbFinding(
                category=rules.categorize_line(first),
                message=message or first.strip(),
                location=location,
            )
        )
    return findings


def detect(code: str, backend: Detector) -> DetectionReport:
    """Run one detection pass of ``code`` through ``backend``."""
    return backend.detect(code)


@dataclass
class MockDetector:
    """Replays a fixed list of reports, one per call, never fabricating.

    The script cursor is per-instance; running past the end raises
    ``DetectorUnavailableError`` instead of inventing a report.
    """

    script: list[DetectionReport] = field(default_factory=list)
    calls: int = 0

    @classmethod
    def from_counts(cls, counts: Sequence[int], category: str = "dangling") -> "MockDetector":
        reports = [
            DetectionReport(
                findings=tuple(
                    UbFinding(category=category, message=f"scripted finding {i}")
                    for i in range(n)
                )
            )
            for n in counts
        ]
        return cls(script=reports)

    def detect(self, code: str) -> DetectionReport:
        if self.calls >= len(self.script):
            raise DetectorUnavailableError("mock detector script exhausted")
        report = self.script[self.calls]
        self.calls += 1
        return report


class MiriDetector:
    """Runs the Miri interpreter on a throwaway single-file project.

    A timeout or missing toolchain is reported as detector failure, not
    as a clean program.
    """

    CARGO_MANIFEST = (
        '[package]\nname = "akira-candidate"\nversion = "0.0.0"\nedition = "2021"\n'
        "\n[[bin]]\nname = \"candidate\"\npath = \"src/main.rs\"\n"
    )

    def __init__(
        self,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        toolchain: str | None = "nightly",
        rules: CategoryRules | None = None,
        command: Sequence[str] | None = None,
    ):
        self.timeout_s = timeout_s
        self.toolchain = toolchain
        self.rules = rules or CategoryRules.default()
        # Test seam: anything that prints Miri-style diagnostics works.
        self._command = list(command) if command else None

    def _build_command(self) -> list[str]:
        if self._command:
            return list(self._command)
        cmd = ["cargo"]
        if self.toolchain:
            cmd.append(f"+{self.toolchain}")
        cmd += ["miri", "run", "--quiet"]
        return cmd

    @classmethod
    def available(cls, toolchain: str | None = "nightly") -> bool:
        cmd = ["cargo"] + ([f"+{toolchain}"] if toolchain else []) + ["miri", "--version"]
        try:
            probe = subprocess.run(cmd, capture_output=True, timeout=30)
        except (OSError, subprocess.TimeoutExpired):
            return False
        return probe.returncode == 0

    def detect(self, code: str) -> DetectionReport:
        with tempfile.TemporaryDirectory(prefix="akira-miri-") as tmp:
            project = Path(tmp)
            (project / "Cargo.toml").write_text(self.CARGO_MANIFEST)
            (project / "src").mkdir()
            (project / "src" / "main.rs").write_text(code)
            try:
                proc = subprocess.run(
                    self._build_command(),
                    cwd=project,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout_s,
                )
            except subprocess.TimeoutExpired as exc:
                raise DetectorUnavailableError(
                    f"detector timed out after {self.timeout_s:.0f}s"
                ) from exc
            except OSError as exc:
                raise DetectorUnavailableError(f"detector could not start: {exc}") from exc
        raw = proc.stderr
        compiled = not any(pat in raw for pat in COMPILE_ERROR_PATTERNS)
        findings = tuple(parse_diagnostics(raw, self.rules)) if compiled else ()
        return DetectionReport(findings=findings, compiled=compiled, raw_output=raw)
