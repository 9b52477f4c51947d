"""LLM clients for instruction generation.

Two implementations of the same minimal interface: an HTTP client for a
chat-completions-style endpoint (configured through environment
variables) and a deterministic mock used in tests and offline runs.
"""

from __future__ import annotations

import base64
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .instructions import PromptBundle

log = logging.getLogger(__name__)

ENV_ENDPOINT = "DESKVLA_LLM_ENDPOINT"
ENV_API_KEY = "DESKVLA_LLM_API_KEY"
ENV_MODEL = "DESKVLA_LLM_MODEL"
ENV_TIMEOUT = "DESKVLA_LLM_TIMEOUT"
ENV_MAX_RETRIES = "DESKVLA_LLM_MAX_RETRIES"
ENV_MAX_PARALLEL = "DESKVLA_LLM_MAX_PARALLEL"

# Transport statuses worth retrying; everything else fails immediately.
_RETRY_STATUSES = (429, 500, 502, 503, 504)
_BACKOFF_BASE_S = 0.5


class LlmError(RuntimeError):
    """Raised when the endpoint cannot produce a completion."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class LlmConfig:
    endpoint: str
    api_key: str = ""
    model: str = "default"
    timeout_s: float = 30.0
    max_retries: int = 3
    max_parallel: int = 4

    @classmethod
    def from_env(cls) -> "LlmConfig":
        endpoint = os.environ.get(ENV_ENDPOINT, "")
        if not endpoint:
            raise LlmError(f"{ENV_ENDPOINT} is not set")
        return cls(
            endpoint=endpoint,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, "default"),
            timeout_s=float(os.environ.get(ENV_TIMEOUT, "30")),
            max_retries=int(os.environ.get(ENV_MAX_RETRIES, "3")),
            max_parallel=int(os.environ.get(ENV_MAX_PARALLEL, "4")),
        )


class HttpLlmClient:
    """Chat-completions client with retry/backoff on transient failures."""

    def __init__(self, config: LlmConfig, dataset_root: str | Path | None = None,
                 session: requests.Session | None = None):
        self.config = config
        self.dataset_root = Path(dataset_root) if dataset_root else None
        self.session = session or requests.Session()

    def _image_part(self, ref: str) -> dict:
        # Keyframes ride along as base64 when the files are reachable,
        # otherwise the reference string stands in for the pixels.
        if self.dataset_root is not None:
            path = self.dataset_root / ref
            if path.exists():
                payload = base64.b64encode(path.read_bytes()).decode("ascii")
                return {"type": "image", "media_type": "image/png", "data": payload}
        return {"type": "text", "text": f"[image: {ref}]"}

    def _body(self, prompt: PromptBundle) -> dict:
        content = [self._image_part(ref) for _, ref in prompt.keyframes]
        content.append({"type": "text", "text": prompt.user_message})
        return {
            "model": self.config.model,
            "system": prompt.system_message,
            "messages": [{"role": "user", "content": content}],
        }

    def complete(self, prompt: PromptBundle) -> str:
        headers = {"content-type": "application/json"}
        if self.config.api_key:
            headers["authorization"] = f"Bearer {self.config.api_key}"
        body = self._body(prompt)

        last_status: int | None = None
        last_error = "no attempts made"
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            if attempt > 0:
                delay = _BACKOFF_BASE_S * (2 ** (attempt - 1))
                log.warning("llm retry %d/%d for %s after %.1fs (%s)",
                            attempt, self.config.max_retries,
                            prompt.trajectory_id, delay, last_error)
                time.sleep(delay)
            try:
                resp = self.session.post(self.config.endpoint, json=body,
                                         headers=headers,
                                         timeout=self.config.timeout_s)
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code in _RETRY_STATUSES:
                last_status = resp.status_code
                last_error = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise LlmError(f"llm request failed: status {resp.status_code}",
                               status=resp.status_code)
            return _extract_text(resp.json())
        raise LlmError(f"llm request failed after {attempts} attempts: {last_error}",
                       status=last_status)


def _extract_text(payload: dict) -> str:
    # Accept the two common completion shapes.
    if "choices" in payload:
        return payload["choices"][0]["message"]["content"]
    if "content" in payload:
        parts = payload["content"]
        if isinstance(parts, str):
            return parts
        return "".join(p.get("text", "") for p in parts)
    raise LlmError("unrecognized completion payload")


# One template per rhetorical style asked for in the prompt: imperative,
# goal-oriented, conditional, low-level, high-level.
PARAPHRASE_TEMPLATES = (
    "In order to move the {obj}, the robot should bring it to the {goal}.",
    "To relocate the {obj}, the robot must carry it to the {goal}.",
    "If the task is to tidy up, place the {obj} at the {goal}.",
    "Grasp the {obj} and put it down at the {goal}.",
    "The goal is to have the {obj} resting at the {goal}.",
)


class MockLlmClient:
    """Deterministic stand-in for the HTTP client.

    With a canned fixture it echoes that text verbatim; otherwise it
    renders the five paraphrase templates from the prompt metadata,
    wrapped in a little analysis prose the parser must skip.
    """

    def __init__(self, fixture: str | None = None):
        self.fixture = fixture
        self.calls = 0

    def complete(self, prompt: PromptBundle) -> str:
        self.calls += 1
        if self.fixture is not None:
            return self.fixture
        obj = prompt.metadata.get("object", "object")
        goal = prompt.metadata.get("goal", "target")
        lines = [
            f"Scene Analysis: the robot moves the {obj} to the {goal}.",
            "",
        ]
        for i, template in enumerate(PARAPHRASE_TEMPLATES, start=1):
            lines.append(f"No. {i} " + template.format(obj=obj, goal=goal))
        return "\n".join(lines)


def generate_all(client, prompts: list[PromptBundle], max_parallel: int = 4) -> dict[str, str]:
    """Fan completion requests out over a bounded worker pool.

    Returns trajectory_id -> raw response for the successes and logs the
    failures; a failed trajectory simply stays absent.
    """
    results: dict[str, str] = {}
    max_parallel = max(1, int(max_parallel))
    with ThreadPoolExecutor(max_workers=max_parallel) as pool:
        futures = {pool.submit(client.complete, p): p.trajectory_id for p in prompts}
        for future, tid in futures.items():
            try:
                results[tid] = future.result()
            except Exception as exc:
                log.error("generation failed for %s: %s", tid, exc)
    return results
