"""Reasoner backends: scripted, recording and HTTP chat-completion."""
from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from collections import defaultdict, deque
from pathlib import Path

from ..errors import AgentNetError

HTTP_TIMEOUT_S = 60.0


class ReasonerError(AgentNetError):
    pass


class ScriptExhausted(ReasonerError, LookupError):
    pass


class ReasonerUnavailable(ReasonerError):
    pass


class Reasoner:
    """``complete(system, user, tag)`` returns the response text."""

    label = "reasoner"

    def complete(self, system_text: str, user_text: str, tag: str = "") -> str:
        raise NotImplementedError


class ScriptedReasoner(Reasoner):
    """Replays ``(tag, response)`` pairs; each tag keeps its own cursor.

    A ``*`` tag answers any prompt once its own tag has run dry.
    """

    label = "scripted"

    def __init__(self, script):
        self._queues: dict[str, deque] = defaultdict(deque)
        for tag, text in script:
            self._queues[tag].append(text)
        self.calls = 0

    def remaining(self, tag: str) -> int:
        return len(self._queues.get(tag, ()))

    def complete(self, system_text: str, user_text: str, tag: str = "") -> str:
        for key in (tag, "*"):
            q = self._queues.get(key)
            if q:
                self.calls += 1
                return q.popleft()
        raise ScriptExhausted(f"script has no response left for {tag or 'untagged'} prompt")


def reasoner_scripted(script) -> ScriptedReasoner:
    return ScriptedReasoner(script)


def load_script(path) -> list[tuple[str, str]]:
    """Read a script file: YAML/JSON ``[{tag, response}, ...]`` or JSONL of the same."""
    text = Path(path).read_text(encoding="utf-8")
    entries = None
    stripped = text.lstrip()
    if stripped.startswith("{"):
        entries = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        import yaml

        data = yaml.safe_load(text) or []
        entries = data.get("responses", []) if isinstance(data, dict) else data
    out = []
    for i, e in enumerate(entries):
        if not isinstance(e, dict) or "response" not in e:
            raise ReasonerError(f"{path}: entry {i} lacks a response")
        out.append((str(e.get("tag", "*")), str(e["response"])))
    return out


class RecordingReasoner(Reasoner):
    """Wraps another reasoner and appends every exchange to a JSONL transcript."""

    def __init__(self, inner: Reasoner, path):
        self.inner = inner
        self.path = Path(path)
        self.label = f"recording({inner.label})"

    def complete(self, system_text: str, user_text: str, tag: str = "") -> str:
        response = self.inner.complete(system_text, user_text, tag)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps({"tag": tag, "system": system_text, "user": user_text,
                                 "response": response}, sort_keys=True) + "\n")
        return response


def transcript_script(path) -> list[tuple[str, str]]:
    """Turn a recorded transcript back into a replay script."""
    return load_script(path)


class HttpReasoner(Reasoner):
    """OpenAI-style chat completion endpoint configured from the environment."""

    label = "http"

    def __init__(self, base_url: str | None = None, api_key: str | None = None,
                 model: str | None = None, timeout_s: float = HTTP_TIMEOUT_S):
        self.base_url = base_url or os.environ.get("REASONER_BASE_URL", "")
        self.api_key = api_key if api_key is not None else os.environ.get("REASONER_API_KEY", "")
        self.model = model or os.environ.get("REASONER_MODEL", "")
        self.timeout_s = timeout_s

    def _url(self) -> str:
        url = self.base_url.rstrip("/")
        return url if url.endswith("/chat/completions") else url + "/chat/completions"

    def complete(self, system_text: str, user_text: str, tag: str = "") -> str:
        if not self.base_url:
            raise ReasonerUnavailable("REASONER_BASE_URL is not set")
        body = json.dumps({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
        }).encode()
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(self._url(), data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                data = json.loads(resp.read().decode("utf-8"))
            return str(data["choices"][0]["message"]["content"])
        except (urllib.error.URLError, OSError, ValueError, KeyError, IndexError, TypeError) as exc:
            raise ReasonerUnavailable(f"HTTP reasoner failed: {exc}") from exc
