"""Core state and snapshot types shared by the session engine and agents."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum


class StateId(Enum):
    """The eight states of the repair machine."""

    Q0 = "q0"
    Q_ASSERT = "q_assert"
    Q_MODIFY = "q_modify"
    Q_REPLACE = "q_replace"
    Q_KNOWLEDGE = "q_knowledge"
    Q_ROLLBACK = "q_rollback"
    Q_ERR = "q_err"
    Q_F = "q_f"


#: Terminal states have no outgoing transitions.
TERMINAL_STATES = frozenset({StateId.Q_F, StateId.Q_ERR})

#: States occupied while a repair agent is driving.
AGENT_STATES = frozenset(
    {StateId.Q_ASSERT, StateId.Q_MODIFY, StateId.Q_REPLACE, StateId.Q_KNOWLEDGE}
)


class ThinkingMode(Enum):
    """Generation regime: single-pass heuristic vs. multi-step reasoning."""

    FAST = "fast"
    SLOW = "slow"

    @property
    def step_budget(self) -> int:
        return 1 if self is ThinkingMode.FAST else 3


class AgentKind(Enum):
    """The four repair agents; each maps to one non-terminal state."""

    ASSERT = "assert"
    MODIFY = "modify"
    REPLACE = "replace"
    KNOWLEDGE = "knowledge"

    @property
    def state(self) -> StateId:
        return _AGENT_TO_STATE[self]


_AGENT_TO_STATE = {
    AgentKind.ASSERT: StateId.Q_ASSERT,
    AgentKind.MODIFY: StateId.Q_MODIFY,
    AgentKind.REPLACE: StateId.Q_REPLACE,
    AgentKind.KNOWLEDGE: StateId.Q_KNOWLEDGE,
}

STATE_TO_AGENT = {state: agent for agent, state in _AGENT_TO_STATE.items()}


@dataclass(frozen=True)
class SourceSnapshot:
    """An immutable version of the program under repair plus provenance."""

    id: str
    code: str
    producer: StateId
    mode: ThinkingMode | None
    step: int

    @classmethod
    def create(
        cls,
        code: str,
        producer: StateId = StateId.Q0,
        mode: ThinkingMode | None = None,
        step: int = 0,
    ) -> "SourceSnapshot":
        if step < 0:
            raise ValueError("step must be non-negative")
        digest = hashlib.sha256(code.encode()).hexdigest()
        return cls(id=f"s{step:03d}-{digest[:12]}", code=code, producer=producer, mode=mode, step=step)

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.code.encode()).hexdigest()

    @property
    def loc(self) -> int:
        """Non-blank line count; the complexity proxy for mode selection."""
        return sum(1 for line in self.code.splitlines() if line.strip())
