"""Agent backends: deterministic stubs or an OpenAI-compatible chat endpoint."""

from __future__ import annotations

import json
import logging
import os
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import jsonschema

from . import stubs
from .context import AgentContext
from .messages import (ALPHA_GRID, COUNCIL_ROLES, FAIL_MGR, INSPECTOR, REQ_ENG, ROLES, SYS_ENG,
                       TUNER, AgentVote, GainProposal, TuningAction, validate)
from .prompts import FORMAT_REMINDER, system_prompt

log = logging.getLogger(__name__)

# role -> model id for the best-performing assignment; any OpenAI-compatible id works
DEFAULT_MODELS = {
    REQ_ENG: "meta-llama/llama-4-scout-17b-16e-instruct",
    FAIL_MGR: "openai/gpt-oss-120b",
    SYS_ENG: "llama-3.3-70b-versatile",
    INSPECTOR: "qwen/qwen3-32b",
    TUNER: "openai/gpt-oss-20b",
}

ENV_BASE_URL = "AIVV_BASE_URL"
ENV_API_KEY = "AIVV_API_KEY"


class AgentResponseError(ValueError):
    """The model reply held no usable JSON object for the role."""


def extract_json(text: str) -> dict:
    """First JSON object in ``text``, tolerating code fences and stray prose."""
    text = re.sub(r"```(?:json)?", "", text)
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise AgentResponseError(f"no JSON object in reply: {text[:80]!r}")


class StubBackend:
    """Rule-based agents; never touches the network."""

    name = "stub"

    def __init__(self):
        self.calls = Counter()
        self.degraded = Counter()

    def council_vote(self, role: str, ctx: AgentContext, peers: dict | None = None) -> AgentVote:
        self.calls[role] += 1
        return self._stub_vote(role, ctx, peers)

    def _stub_vote(self, role, ctx, peers):
        if role == REQ_ENG:
            return stubs.req_eng_vote(ctx)
        if role == FAIL_MGR:
            return stubs.fail_mgr_vote(ctx)
        if role == SYS_ENG:
            return stubs.sys_eng_vote(ctx, peers[REQ_ENG], peers[FAIL_MGR])
        raise ValueError(f"{role} is not a council role")

    def inspect(self, ctx: AgentContext, votes: list) -> TuningAction:
        self.calls[INSPECTOR] += 1
        return stubs.inspector_decide(ctx, votes)

    def tune(self, ctx: AgentContext, error: float, bounds_by_alpha: dict, fallback: float):
        self.calls[TUNER] += 1
        return stubs.tuner_recommend(error, bounds_by_alpha, fallback)

    @property
    def any_degraded(self) -> bool:
        return sum(self.degraded.values()) > 0


@dataclass
class HttpConfig:
    base_url: str = "https://api.groq.com/openai/v1"
    models: dict = field(default_factory=lambda: dict(DEFAULT_MODELS))
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    temperature: float = 0.0

    @classmethod
    def load(cls, path=None) -> "HttpConfig":
        """Defaults, then the JSON config file, then environment overrides."""
        cfg = cls()
        if path is not None:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            if "api_key" in data:
                raise ValueError("API keys belong in the environment, not the config file")
            models = {**cfg.models, **data.pop("models", {})}
            cfg = cls(**{**data, "models": models})
        cfg.base_url = os.environ.get(ENV_BASE_URL, cfg.base_url)
        for role in ROLES:
            override = os.environ.get(f"AIVV_MODEL_{role.upper()}")
            if override:
                cfg.models[role] = override
        return cfg


class HttpBackend(StubBackend):
    """Chat-completions agents with re-prompt, retry, and stub fallback.

    A role mapped to model ``"stub"`` (or missing) runs the rule set instead.
    """

    name = "http"

    def __init__(self, config: HttpConfig | None = None, api_key: str | None = None,
                 client: httpx.Client | None = None, sleep=time.sleep):
        super().__init__()
        self.config = config or HttpConfig.load()
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.client = client or httpx.Client(timeout=self.config.timeout)
        self.sleep = sleep
        self.transcript: list = []

    # -- transport -----------------------------------------------------------

    def _post(self, model: str, messages: list) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {"model": model, "messages": messages, "temperature": self.config.temperature}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        last = None
        for attempt in range(self.config.max_retries):
            try:
                resp = self.client.post(url, json=body, headers=headers)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request,
                                                response=resp)
                resp.raise_for_status()
                content = resp.json()["choices"][0]["message"]["content"] or ""
                self.transcript.append({"request": body, "response": content,
                                        "authorization": "Bearer ***" if self.api_key else None})
                return content
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
                log.warning("%s call failed (attempt %d): %s", model, attempt + 1, exc)
                if attempt + 1 < self.config.max_retries:
                    self.sleep(self.config.backoff * 2**attempt)
        raise ConnectionError(f"{model}: giving up after {self.config.max_retries} attempts") from last

    def invoke(self, role: str, payload: dict) -> dict | None:
        """Schema-valid JSON from the role's model, or None when the caller should fall back."""
        model = self.config.models.get(role)
        if not model or model == "stub":
            return None
        messages = [{"role": "system", "content": system_prompt(role)},
                    {"role": "user", "content": json.dumps(payload)}]
        for attempt in range(2):
            try:
                text = self._post(model, messages)
            except ConnectionError:
                break
            try:
                obj = extract_json(text)
                validate(role, obj)
                return obj
            except (AgentResponseError, jsonschema.ValidationError) as exc:
                log.warning("%s reply unusable (%s)", role, exc)
                messages = messages + [{"role": "assistant", "content": text},
                                       {"role": "user", "content": FORMAT_REMINDER}]
        self.degraded[role] += 1
        log.warning("%s degraded to stub logic", role)
        return None

    # -- roles ---------------------------------------------------------------

    def council_vote(self, role, ctx, peers=None):
        self.calls[role] += 1
        payload = ctx.to_prompt_dict()
        if role == SYS_ENG:
            payload["peer_findings"] = {r: peers[r].payload() for r in (REQ_ENG, FAIL_MGR)}
        obj = self.invoke(role, payload)
        if obj is None:
            vote = self._stub_vote(role, ctx, peers)
            vote.degraded = self.config.models.get(role) not in (None, "stub")
            return vote
        fields = {k: v for k, v in obj.items()
                  if k not in ("vote", "confidence", "reasoning", "risk_level", "tuning_proposal",
                               "tuning_reasoning")}
        vote = AgentVote(role, obj["vote"], float(obj["confidence"]), obj["reasoning"],
                         obj.get("risk_level"), fields=fields)
        if role == SYS_ENG:
            triggers = tuple(r for r, k in (("FM", FAIL_MGR), ("RE", REQ_ENG)) if peers[k].vote == "FAIL")
            if triggers:
                tp = obj.get("tuning_proposal")
                vote.proposal = (GainProposal(**tp, triggered_by=triggers,
                                              tuning_reasoning=obj.get("tuning_reasoning") or "",
                                              sample_id=ctx.sample_id)
                                 if tp else stubs.propose_gains(ctx, peers[FAIL_MGR], peers[REQ_ENG], triggers))
        return vote

    def inspect(self, ctx, votes):
        self.calls[INSPECTOR] += 1
        payload = {"context": ctx.to_prompt_dict(), "votes": [v.summary() for v in votes]}
        obj = self.invoke(INSPECTOR, payload)
        if obj is not None:
            try:
                return TuningAction.from_payload(obj)
            except (TypeError, ValueError) as exc:
                log.warning("inspector action rejected (%s)", exc)
                self.degraded[INSPECTOR] += 1
        action = stubs.inspector_decide(ctx, votes)
        action.degraded = self.config.models.get(INSPECTOR) not in (None, "stub")
        return action

    def tune(self, ctx, error, bounds_by_alpha, fallback):
        self.calls[TUNER] += 1
        payload = {"candidate_error": error, "current_alpha": ctx.alpha,
                   "alpha_table": {f"{a:.2f}": bounds_by_alpha[a] for a in ALPHA_GRID}}
        obj = self.invoke(TUNER, payload)
        if obj is None:
            return stubs.tuner_recommend(error, bounds_by_alpha, fallback)
        alpha = min(ALPHA_GRID, key=lambda a: abs(a - float(obj["recommended_alpha"])))
        return alpha, bounds_by_alpha[alpha] >= error, obj["reasoning"]


def make_backend(kind: str = "stub", config_path=None) -> StubBackend:
    if kind == "stub":
        return StubBackend()
    if kind == "http":
        if not os.environ.get(ENV_BASE_URL) and config_path is None:
            raise RuntimeError(f"HTTP agents need {ENV_BASE_URL} or a config file")
        return HttpBackend(HttpConfig.load(config_path))
    raise ValueError(f"unknown agent backend {kind!r}")


__all__ = ["StubBackend", "HttpBackend", "HttpConfig", "make_backend", "extract_json",
           "COUNCIL_ROLES", "DEFAULT_MODELS"]
