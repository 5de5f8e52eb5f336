"""Uniform text-generation interface over hosted models and scripted mocks.

``complete`` is the single entry point every other module uses.  Fast
requests make one backend call; slow requests are realized as a chained
plan -> act -> check sequence of sub-calls within one ``complete``, each
sub-call visible in the backend's call log.  Mock backends answer from a
prompt-hash script and are byte-reproducible; the HTTP backend speaks a
chat-completion endpoint configured through environment variables.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .errors import ProviderUnavailableError, ScriptError

FAST_STAGES = ("act",)
SLOW_STAGES = ("plan", "act", "check")

DEFAULT_TEMPERATURE = 0.5
#: Temperature presets for the pipeline-comparison experiment.
LOW_TEMPERATURE = 0.2
HIGH_TEMPERATURE = 1.0

URL_ENV = "AKIRA_PROVIDER_URL"
KEY_ENV = "AKIRA_PROVIDER_KEY"

SCRIPT_SCHEMA = "akira-script/1"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    step_budget: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if self.step_budget < 1:
            raise ValueError("step_budget must be >= 1")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    steps_used: int
    provider_id: str


class GenerationBackend(Protocol):
    """One generation sub-call; ``complete`` drives the chaining."""

    provider_id: str
    hosted: bool

    def generate(self, request: GenerationRequest, stage: str, history: tuple[str, ...]) -> str: ...


def complete(request: GenerationRequest, backend: GenerationBackend) -> GenerationResponse:
    """Run one generation request, chaining sub-calls for slow budgets.

    A budget of 1 issues a single ``act`` call; budgets of 3 or more run
    the plan/act/check chain (3 sub-calls, so steps_used never exceeds
    the budget).  The final text is the last stage's output.
    """
    if not request.prompt:
        raise ValueError("empty prompt")
    stages = FAST_STAGES if request.step_budget < 3 else SLOW_STAGES
    history: tuple[str, ...] = ()
    text = ""
    for stage in stages:
        text = backend.generate(request, stage, history)
        history += (text,)
    return GenerationResponse(text=text, steps_used=len(stages), provider_id=backend.provider_id)


def prompt_key(prompt: str) -> str:
    """Stable script key for a prompt."""
    return hashlib.sha256(prompt.encode()).hexdigest()


@dataclass
class MockScriptBackend:
    """Deterministic backend answering from a prompt-hash script.

    Known prompts answer from the map (repeatably); unknown prompts
    consume the ordered fallback list; with both exhausted the backend
    reports itself unavailable rather than improvising.
    """

    responses: dict[str, str] = field(default_factory=dict)
    fallback: list[str] = field(default_factory=list)
    provider_id: str = "mock"
    hosted: bool = False
    call_log: list[tuple[str, str]] = field(default_factory=list)

    @classmethod
    def for_prompts(cls, answers: dict[str, str], **kwargs) -> "MockScriptBackend":
        return cls(responses={prompt_key(p): text for p, text in answers.items()}, **kwargs)

    def generate(self, request: GenerationRequest, stage: str, history: tuple[str, ...]) -> str:
        self.call_log.append((stage, request.prompt))
        key = prompt_key(request.prompt)
        if key in self.responses:
            return self.responses[key]
        if self.fallback:
            return self.fallback.pop(0)
        raise ProviderUnavailableError("mock script has no answer for this prompt")


def load_script(path: str | Path) -> MockScriptBackend:
    """Load a scripted backend from its JSON document."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScriptError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ScriptError(f"{path}: script must be a JSON object")
    responses = raw.get("responses", {})
    fallback = raw.get("fallback", [])
    if not isinstance(responses, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in responses.items()
    ):
        raise ScriptError(f"{path}: 'responses' must map prompt hashes to text")
    if not isinstance(fallback, list) or not all(isinstance(v, str) for v in fallback):
        raise ScriptError(f"{path}: 'fallback' must be a list of strings")
    return MockScriptBackend(responses=dict(responses), fallback=list(fallback))


def save_script(backend: MockScriptBackend, path: str | Path) -> None:
    doc = {
        "schema": SCRIPT_SCHEMA,
        "responses": backend.responses,
        "fallback": backend.fallback,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


_STAGE_INSTRUCTIONS = {
    "plan": "Outline, step by step, how you will perform the task below. Do not produce the final answer yet.",
    "act": "Perform the task below and return the final result only.",
    "check": "Review the draft result against the task; return the corrected final result only.",
}


class HttpBackend:
    """Chat-completion adapter for hosted model services.

    Credentials and endpoint come from ``AKIRA_PROVIDER_URL`` and
    ``AKIRA_PROVIDER_KEY``.  Request/response pairs are kept in
    ``call_log`` so the harness can attach them to session traces.
    """

    hosted = True

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout_s: float = 120.0,
    ):
        self.url = url or os.environ.get(URL_ENV, "")
        self.api_key = api_key or os.environ.get(KEY_ENV, "")
        self.model = model
        self.timeout_s = timeout_s
        self.provider_id = f"http:{self.model}"
        self.call_log: list[dict] = []
        if not self.url:
            raise ProviderUnavailableError(f"no provider URL configured ({URL_ENV} unset)")

    def generate(self, request: GenerationRequest, stage: str, history: tuple[str, ...]) -> str:
        import requests

        messages = [{"role": "system", "content": _STAGE_INSTRUCTIONS[stage]}]
        for prior in history:
            messages.append({"role": "assistant", "content": prior})
        messages.append({"role": "user", "content": request.prompt})
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "seed": request.seed,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(self.url, json=body, headers=headers, timeout=self.timeout_s)
            resp.raise_for_status()
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ProviderUnavailableError(f"provider request failed: {exc}") from exc
        self.call_log.append({"stage": stage, "request": body, "response": text})
        return text
