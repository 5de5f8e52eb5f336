"""Dual-mode repair agents, next-state selection, and the knowledge base.

Selection runs through three tiers: recorded experience with a matching
signal fingerprint, then the generation provider's judgment, then a
static keyword policy.  The static tier is total, so the selector always
produces exactly one (agent, mode) pair.  The knowledge base is an
append-only store of prior repair outcomes, optionally persisted as
JSON lines, with serialized writes.
"""

from __future__ import annotations

import json
import random
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DegenerateCandidateError, ProviderUnavailableError, ScriptError
from .provider import DEFAULT_TEMPERATURE, GenerationBackend, GenerationRequest, complete
from .states import TERMINAL_STATES, AgentKind, SourceSnapshot, StateId, ThinkingMode
from .waveform import NormalizedSignals

#: Snapshots under this many non-blank lines default to fast thinking.
FAST_LOC_THRESHOLD = 60

#: Tie-break order for agents (and the scan order of the static policy).
STATIC_AGENT_ORDER = (AgentKind.REPLACE, AgentKind.ASSERT, AgentKind.MODIFY, AgentKind.KNOWLEDGE)
MODE_ORDER = (ThinkingMode.FAST, ThinkingMode.SLOW)

_REPLACE_KEYWORDS = ("size mismatch", "dangling")
_ASSERT_KEYWORDS = ("access violation", "retag write", "write access")
_CONCURRENCY_KEYWORDS = ("data_race", "data race", "atomic", "concurrency")

_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_+-]*)\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class ActionContext:
    keywords: tuple[str, ...] = ()
    history: str = ""
    code_excerpt: str = ""


@dataclass(frozen=True)
class RepairAction:
    """One concrete repair step: which agent, which mode, what context."""

    agent: AgentKind
    mode: ThinkingMode
    context: ActionContext = ActionContext()


class KbOutcome(Enum):
    IMPROVED = "improved"
    WORSENED = "worsened"
    FIXED = "fixed"


@dataclass(frozen=True)
class KnowledgeEntry:
    """One recorded repair experience keyed by a signal fingerprint."""

    fingerprint: str
    agent: AgentKind
    mode: ThinkingMode
    outcome: KbOutcome
    delta_e: float

    def __post_init__(self) -> None:
        if self.outcome in (KbOutcome.IMPROVED, KbOutcome.FIXED) and self.delta_e > 0:
            raise ValueError("improved/fixed entries require delta_e <= 0")
        if self.outcome is KbOutcome.WORSENED and self.delta_e <= 0:
            raise ValueError("worsened entries require delta_e > 0")

    def to_json(self) -> str:
        return json.dumps(
            {
                "fingerprint": self.fingerprint,
                "agent": self.agent.value,
                "mode": self.mode.value,
                "outcome": self.outcome.value,
                "delta_e": self.delta_e,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "KnowledgeEntry":
        raw = json.loads(line)
        return cls(
            fingerprint=raw["fingerprint"],
            agent=AgentKind(raw["agent"]),
            mode=ThinkingMode(raw["mode"]),
            outcome=KbOutcome(raw["outcome"]),
            delta_e=float(raw["delta_e"]),
        )


def dominant_category(categories: Iterable[str]) -> str:
    """Most frequent finding category; alphabetical on ties, 'none' when empty."""
    counts: dict[str, int] = {}
    for cat in categories:
        counts[cat] = counts.get(cat, 0) + 1
    if not counts:
        return "none"
    return min(counts, key=lambda c: (-counts[c], c))


def fingerprint(signals: NormalizedSignals, dominant: str) -> str:
    """Knowledge-base key: per-channel signals at 1 decimal + dominant category."""
    return "|".join(f"{round(v, 1):.1f}" for v in signals.values) + "|" + dominant


class KnowledgeBase:
    """Append-only store of repair experience with serialized writes."""

    def __init__(self, path: str | Path | None = None):
        self._entries: list[KnowledgeEntry] = []
        self._new: list[KnowledgeEntry] = []
        self._lock = threading.Lock()
        self._path = Path(path) if path else None
        if self._path and self._path.exists():
            for lineno, line in enumerate(self._path.read_text().splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    self._entries.append(KnowledgeEntry.from_json(line))
                except (KeyError, ValueError, json.JSONDecodeError) as exc:
                    raise ScriptError(f"{self._path}:{lineno}: bad knowledge entry: {exc}") from exc

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[KnowledgeEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    @property
    def new_entries(self) -> tuple[KnowledgeEntry, ...]:
        """Entries recorded on this instance since construction."""
        with self._lock:
            return tuple(self._new)

    def record(self, entry: KnowledgeEntry) -> None:
        with self._lock:
            self._entries.append(entry)
            self._new.append(entry)
            if self._path:
                with self._path.open("a") as fh:
                    fh.write(entry.to_json() + "\n")

    def snapshot_view(self) -> "KnowledgeBase":
        """In-memory copy seeing current entries but isolated from later writes."""
        view = KnowledgeBase()
        with self._lock:
            view._entries = list(self._entries)
        return view

    def matching(self, fp: str) -> list[KnowledgeEntry]:
        with self._lock:
            return [e for e in self._entries if e.fingerprint == fp]

    def query(self, fp: str) -> list[tuple[AgentKind, ThinkingMode]]:
        """Ranked (agent, mode) pairs for a fingerprint.

        Ordered by fixed count, then improved count, then fewest
        worsened; ties fall back to the static agent order with fast
        before slow.  No match yields an empty list.
        """
        tallies: dict[tuple[AgentKind, ThinkingMode], list[int]] = {}
        for entry in self.matching(fp):
            counts = tallies.setdefault((entry.agent, entry.mode), [0, 0, 0])
            if entry.outcome is KbOutcome.FIXED:
                counts[0] += 1
            elif entry.outcome is KbOutcome.IMPROVED:
                counts[1] += 1
            else:
                counts[2] += 1
        return sorted(
            tallies,
            key=lambda pair: (
                -tallies[pair][0],
                -tallies[pair][1],
                tallies[pair][2],
                STATIC_AGENT_ORDER.index(pair[0]),
                MODE_ORDER.index(pair[1]),
            ),
        )

    def best_positive(self, fp: str) -> tuple[AgentKind, ThinkingMode] | None:
        """Top ranked pair backed by at least one improved or fixed entry."""
        positive = {
            (e.agent, e.mode)
            for e in self.matching(fp)
            if e.outcome in (KbOutcome.FIXED, KbOutcome.IMPROVED)
        }
        for pair in self.query(fp):
            if pair in positive:
                return pair
        return None


def static_policy(
    keywords: Sequence[str], current: StateId, loc: int
) -> tuple[AgentKind, ThinkingMode]:
    """Keyword-driven fallback; total over every state and keyword set."""
    joined = " ".join(k.lower() for k in keywords)
    mode = ThinkingMode.FAST if loc < FAST_LOC_THRESHOLD else ThinkingMode.SLOW
    if any(k in joined for k in _REPLACE_KEYWORDS):
        return AgentKind.REPLACE, mode
    if any(k in joined for k in _ASSERT_KEYWORDS):
        return AgentKind.ASSERT, mode
    if any(k in joined for k in _CONCURRENCY_KEYWORDS):
        return AgentKind.MODIFY, ThinkingMode.SLOW
    if current is not StateId.Q_KNOWLEDGE:
        return AgentKind.KNOWLEDGE, mode
    return AgentKind.MODIFY, mode


def _parse_provider_choice(text: str) -> tuple[AgentKind | None, ThinkingMode | None]:
    lowered = text.lower()
    agent = None
    for candidate in STATIC_AGENT_ORDER:
        if re.search(rf"\b{candidate.value}\b", lowered):
            agent = candidate
            break
    mode = None
    if re.search(r"\bslow\b", lowered):
        mode = ThinkingMode.SLOW
    elif re.search(r"\bfast\b", lowered):
        mode = ThinkingMode.FAST
    return agent, mode


def select_next(
    current: StateId,
    signals: NormalizedSignals,
    keywords: Sequence[str],
    kb: KnowledgeBase,
    provider: GenerationBackend | None,
    rng: random.Random,
    *,
    loc: int,
    history: str = "",
    code_excerpt: str = "",
    temperature: float = DEFAULT_TEMPERATURE,
) -> tuple[StateId, RepairAction]:
    """Pick the next repair state and action for the current context.

    Tier 1 follows positive knowledge-base evidence for the signal
    fingerprint; tier 2 asks the provider to choose; tier 3 applies the
    static keyword policy.  Provider failure is absorbed, never raised.
    """
    if current in TERMINAL_STATES:
        raise ValueError("cannot select a successor for a terminal state")
    fp = fingerprint(signals, dominant_category(keywords))
    choice = kb.best_positive(fp)
    if choice is None and provider is not None:
        prompt = (
            "Choose the next repair agent for a Rust program with undefined behavior.\n"
            f"Diagnostic keywords: {', '.join(keywords) if keywords else '(none)'}\n"
            f"Code excerpt:\n{code_excerpt}\n"
            "Answer with one agent (assert, modify, replace, knowledge) "
            "and one mode (fast, slow)."
        )
        try:
            response = complete(
                GenerationRequest(
                    prompt,
                    temperature=temperature,
                    step_budget=1,
                    seed=rng.randrange(2**31),
                ),
                provider,
            )
            agent, mode = _parse_provider_choice(response.text)
            if agent is not None:
                if mode is None:
                    mode = ThinkingMode.FAST if loc < FAST_LOC_THRESHOLD else ThinkingMode.SLOW
                choice = (agent, mode)
        except ProviderUnavailableError:
            choice = None
    if choice is None:
        choice = static_policy(keywords, current, loc)
    agent, mode = choice
    action = RepairAction(
        agent=agent,
        mode=mode,
        context=ActionContext(keywords=tuple(keywords), history=history, code_excerpt=code_excerpt),
    )
    return agent.state, action


class PromptLibrary:
    """Per-(agent, mode) prompt templates with {code}/{keywords}/{history} slots."""

    _default: "PromptLibrary | None" = None

    def __init__(self, templates: dict[tuple[AgentKind, ThinkingMode], str]):
        missing = [
            (a.value, m.value)
            for a in AgentKind
            for m in ThinkingMode
            if (a, m) not in templates
        ]
        if missing:
            raise ScriptError(f"missing prompt templates: {missing}")
        self._templates = templates

    @classmethod
    def load(cls, directory: str | Path) -> "PromptLibrary":
        directory = Path(directory)
        templates = {}
        for agent in AgentKind:
            for mode in ThinkingMode:
                path = directory / f"{agent.value}_{mode.value}.txt"
                if path.exists():
                    templates[(agent, mode)] = path.read_text()
        return cls(templates)

    @classmethod
    def default(cls) -> "PromptLibrary":
        if cls._default is None:
            ref = resources.files("akira.data").joinpath("prompts")
            with resources.as_file(ref) as directory:
                cls._default = cls.load(directory)
        return cls._default

    def render(self, action: RepairAction, code: str) -> str:
        template = self._templates[(action.agent, action.mode)]
        return template.format(
            code=code,
            keywords=", ".join(action.context.keywords) if action.context.keywords else "(none)",
            history=action.context.history or "(first attempt)",
        )


def extract_code(text: str) -> str:
    """Pull program text out of a provider response (fenced block if any)."""
    match = _FENCE_RE.search(text)
    if match:
        return match.group(1)
    return text


def apply(
    action: RepairAction,
    snapshot: SourceSnapshot,
    provider: GenerationBackend,
    *,
    temperature: float = DEFAULT_TEMPERATURE,
    seed: int = 0,
    step: int | None = None,
    templates: PromptLibrary | None = None,
) -> SourceSnapshot:
    """Run one repair action and return the candidate snapshot.

    The input snapshot is never touched; empty or unusable provider
    output raises ``DegenerateCandidateError`` so the caller can record
    a failed transition without replacing the working snapshot.
    """
    templates = templates or PromptLibrary.default()
    prompt = templates.render(action, snapshot.code)
    request = GenerationRequest(
        prompt,
        temperature=temperature,
        step_budget=action.mode.step_budget,
        seed=seed,
    )
    response = complete(request, provider)
    code = extract_code(response.text)
    if not code.strip():
        raise DegenerateCandidateError("degenerate candidate: provider returned no code")
    return SourceSnapshot.create(
        code=code,
        producer=action.agent.state,
        mode=action.mode,
        step=snapshot.step + 1 if step is None else step,
    )
