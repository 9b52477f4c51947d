"""LLM client tests with a scripted fake transport.

The fake session records every POST and serves a queue of canned
responses, so retry ordering, backoff counts, and payload shape are all
observable without a network.
"""

from __future__ import annotations

import threading
import time

import pytest

from deskvla.instructions import build_prompt, parse_candidates
from deskvla.llm import (
    ENV_ENDPOINT,
    ENV_MAX_RETRIES,
    HttpLlmClient,
    LlmConfig,
    LlmError,
    MockLlmClient,
    generate_all,
)
from deskvla.trajectories import export, synthesize


class FakeResponse:
    def __init__(self, status_code: int, payload: dict | None = None):
        self.status_code = status_code
        self._payload = payload or {}

    def json(self):
        return self._payload


class FakeSession:
    """Serves queued responses; raising entries simulate transport errors."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers, "timeout": timeout})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def ok_response(text: str) -> FakeResponse:
    return FakeResponse(200, {"choices": [{"message": {"content": text}}]})


@pytest.fixture()
def prompt():
    return build_prompt(synthesize(1, steps=5, seed=0)[0])


@pytest.fixture(autouse=True)
def fast_backoff(monkeypatch):
    monkeypatch.setattr(time, "sleep", lambda s: None)


def make_client(responses, **cfg_kwargs):
    cfg = LlmConfig(endpoint="http://fake/v1/chat", api_key="sk-test", **cfg_kwargs)
    session = FakeSession(responses)
    return HttpLlmClient(cfg, session=session), session


def test_success_first_try(prompt):
    client, session = make_client([ok_response("No. 1 hi")])
    assert client.complete(prompt) == "No. 1 hi"
    assert len(session.requests) == 1
    req = session.requests[0]
    assert req["headers"]["authorization"] == "Bearer sk-test"
    assert req["json"]["system"] == prompt.system_message
    content = req["json"]["messages"][0]["content"]
    assert content[-1]["text"] == prompt.user_message
    assert len(content) == 4  # three keyframes plus the text block


def test_retries_transient_statuses(prompt):
    client, session = make_client(
        [FakeResponse(429), FakeResponse(503), ok_response("fine")], max_retries=3
    )
    assert client.complete(prompt) == "fine"
    assert len(session.requests) == 3


def test_retry_budget_exhausted(prompt):
    client, session = make_client([FakeResponse(500)] * 4, max_retries=3)
    with pytest.raises(LlmError, match="after 4 attempts"):
        client.complete(prompt)
    assert len(session.requests) == 4
    try:
        client2, _ = make_client([FakeResponse(429)] * 4, max_retries=3)
        client2.complete(prompt)
    except LlmError as exc:
        assert exc.status == 429


def test_non_retryable_status_fails_fast(prompt):
    client, session = make_client([FakeResponse(401)], max_retries=3)
    with pytest.raises(LlmError, match="status 401") as excinfo:
        client.complete(prompt)
    assert excinfo.value.status == 401
    assert len(session.requests) == 1


def test_transport_errors_are_retried(prompt):
    import requests

    client, session = make_client(
        [requests.ConnectionError("boom"), ok_response("ok")], max_retries=2
    )
    assert client.complete(prompt) == "ok"
    assert len(session.requests) == 2


def test_backoff_schedule(monkeypatch, prompt):
    delays = []
    monkeypatch.setattr(time, "sleep", lambda s: delays.append(s))
    client, _ = make_client([FakeResponse(429)] * 3 + [ok_response("ok")], max_retries=3)
    client.complete(prompt)
    assert delays == [0.5, 1.0, 2.0]


def test_anthropic_style_payload_extraction(prompt):
    resp = FakeResponse(200, {"content": [{"type": "text", "text": "No. 1 a"}, {"type": "text", "text": "b"}]})
    client, _ = make_client([resp])
    assert client.complete(prompt) == "No. 1 ab"


def test_images_inlined_when_dataset_present(tmp_path, prompt):
    trajs = synthesize(1, steps=5, seed=0)
    root = export(trajs, tmp_path / "ds")
    cfg = LlmConfig(endpoint="http://fake/v1/chat")
    session = FakeSession([ok_response("ok")])
    client = HttpLlmClient(cfg, dataset_root=root, session=session)
    client.complete(prompt)
    content = session.requests[0]["json"]["messages"][0]["content"]
    image_parts = [p for p in content if p.get("type") == "image"]
    assert len(image_parts) == 3
    assert all(p["media_type"] == "image/png" for p in image_parts)
    assert all(len(p["data"]) > 40 for p in image_parts)


def test_config_from_env(monkeypatch):
    monkeypatch.delenv(ENV_ENDPOINT, raising=False)
    with pytest.raises(LlmError, match=ENV_ENDPOINT):
        LlmConfig.from_env()
    monkeypatch.setenv(ENV_ENDPOINT, "http://example/v1")
    monkeypatch.setenv(ENV_MAX_RETRIES, "5")
    cfg = LlmConfig.from_env()
    assert cfg.endpoint == "http://example/v1"
    assert cfg.max_retries == 5
    assert cfg.timeout_s == 30.0


def test_mock_client_output_parses(prompt):
    client = MockLlmClient()
    raw = client.complete(prompt)
    cs = parse_candidates(raw, prompt.trajectory_id)
    assert len(cs.texts) == 5
    assert len(set(cs.texts)) == 5
    obj = prompt.metadata["object"]
    assert all(obj in t for t in cs.texts)
    assert client.calls == 1


def test_mock_client_is_deterministic(prompt):
    assert MockLlmClient().complete(prompt) == MockLlmClient().complete(prompt)


def test_mock_client_fixture_passthrough(prompt):
    client = MockLlmClient(fixture="verbatim text")
    assert client.complete(prompt) == "verbatim text"


def test_generate_all_collects_successes_and_skips_failures():
    prompts = [build_prompt(t) for t in synthesize(6, steps=5, seed=1)]

    class FlakyClient:
        def __init__(self):
            self.lock = threading.Lock()

        def complete(self, prompt):
            if prompt.trajectory_id.endswith("3"):
                raise LlmError("simulated outage")
            return f"response for {prompt.trajectory_id}"

    results = generate_all(FlakyClient(), prompts, max_parallel=3)
    assert set(results) == {p.trajectory_id for p in prompts if not p.trajectory_id.endswith("3")}
    assert results["traj-000"] == "response for traj-000"


def test_generate_all_bounds_concurrency():
    prompts = [build_prompt(t) for t in synthesize(8, steps=5, seed=2)]
    active = 0
    peak = 0
    lock = threading.Lock()

    class SlowClient:
        def complete(self, prompt):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            threading.Event().wait(0.02)  # immune to the time.sleep patch
            with lock:
                active -= 1
            return "No. 1 a\nNo. 2 b\nNo. 3 c\nNo. 4 d\nNo. 5 e"

    results = generate_all(SlowClient(), prompts, max_parallel=2)
    assert len(results) == 8
    assert peak <= 2
