"""Optional language-model oracle with a deterministic offline stub.

Backend selection: ``ORACLE_ENDPOINT`` unset means the stub. A remote backend
speaks the common chat-completions JSON shape over HTTP.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import httpx

log = logging.getLogger(__name__)

ROLES = ("rerank", "summarize_contract", "draft_protocol", "intention", "action", "curate")
DEFAULT_TIMEOUT = 30.0
MAX_TIMEOUT = 300.0
DEFAULT_MAX_IN_FLIGHT = 8


class OracleError(RuntimeError):
    """Base for every oracle failure; callers map it to their fallback."""


class OracleConnectionError(OracleError):
    pass


class OracleTimeoutError(OracleError):
    pass


class OracleResponseError(OracleError):
    """The endpoint answered, but not with a usable body."""


@dataclass(frozen=True)
class OracleRequest:
    role: str
    prompt: str
    context: dict[str, Any] = field(default_factory=dict)
    max_tokens: int = 256
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown oracle role {self.role!r}")
        if not self.prompt.strip():
            raise ValueError("oracle prompt must be non-empty")
        if not 0 < self.timeout <= MAX_TIMEOUT:
            raise ValueError(f"timeout must lie in (0, {MAX_TIMEOUT}] seconds")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class OracleResponse:
    text: str
    latency: float
    backend: str


def load_prompt(role: str) -> str:
    return resources.files("skillcoevo.prompts").joinpath(f"{role}.txt").read_text(encoding="utf-8")


def render_prompt(role: str, context: dict[str, Any]) -> str:
    return load_prompt(role).format(context=json.dumps(context, sort_keys=True, indent=1))


# --- backends --------------------------------------------------------------

class StubBackend:
    """Deterministic template answers; a pure function of the request."""

    name = "stub"

    def complete(self, req: OracleRequest) -> OracleResponse:
        ctx = req.context
        if req.role == "rerank":
            text = ",".join(str(i) for i in range(int(ctx.get("n_items", 0))))
        elif req.role == "summarize_contract":
            # echo only effects that already meet consensus: enrichment is a no-op
            counts = ctx.get("effect_counts", {})
            need = ctx.get("min_count", 0)
            top = max(counts.values(), default=0)
            text = "\n".join(e for e, c in sorted(counts.items()) if c == top and c >= need and c > 0)
        elif req.role == "draft_protocol":
            text = "{}"
        elif req.role == "curate":
            text = "APPROVE" if ctx.get("default") else "REJECT"
        else:
            text = str(ctx.get("default", ""))
        return OracleResponse(text, 0.0, self.name)


class RemoteBackend:
    name = "remote"

    def __init__(self, endpoint: str, model: str = "default", api_key: str | None = None,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint
        self.model = model
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, transport=transport)

    def _post(self, req: OracleRequest) -> str:
        body = {"model": self.model, "max_tokens": req.max_tokens,
                "messages": [{"role": "user", "content": req.prompt}]}
        try:
            resp = self._client.post(self.endpoint, json=body, timeout=req.timeout)
        except httpx.TimeoutException as err:
            raise OracleTimeoutError(f"oracle timed out after {req.timeout}s") from err
        except httpx.HTTPError as err:
            raise OracleConnectionError(f"oracle unreachable: {err}") from err
        if resp.status_code != 200:
            raise OracleResponseError(f"oracle returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise OracleResponseError("oracle response has no choices[0].message.content") from err

    def complete(self, req: OracleRequest) -> OracleResponse:
        start = time.monotonic()
        try:
            text = self._post(req)
        except OracleError as err:
            log.warning("oracle %s request failed (%s); retrying once", req.role, err)
            text = self._post(req)
        return OracleResponse(text, time.monotonic() - start, self.name)

    def close(self) -> None:
        self._client.close()


# --- client ----------------------------------------------------------------

@dataclass(frozen=True)
class OracleSettings:
    endpoint: str | None = None
    model: str = "default"
    api_key: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    max_in_flight: int = DEFAULT_MAX_IN_FLIGHT
    audit_path: str | None = None

    @classmethod
    def from_env(cls, environ=None, **overrides) -> "OracleSettings":
        env = os.environ if environ is None else environ
        values = {"endpoint": env.get("ORACLE_ENDPOINT") or None,
                  "model": env.get("ORACLE_MODEL") or "default",
                  "api_key": env.get("ORACLE_API_KEY") or None}
        values.update(overrides)
        return cls(**values)


_PERM_RE = re.compile(r"\d+")


def parse_permutation(text: str, n: int) -> list[int] | None:
    idx = [int(x) for x in _PERM_RE.findall(text)]
    return idx if sorted(idx) == list(range(n)) else None


class OracleClient:
    """Role-level helpers over a backend. Every helper has a documented fallback."""

    def __init__(self, backend=None, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
                 audit_path: str | Path | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.backend = backend or StubBackend()
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._audit_lock = threading.Lock()
        self.audit_path = Path(audit_path) if audit_path else None
        self.timeout = timeout

    @classmethod
    def from_settings(cls, settings: OracleSettings) -> "OracleClient":
        backend = (RemoteBackend(settings.endpoint, settings.model, settings.api_key)
                   if settings.endpoint else StubBackend())
        return cls(backend, settings.max_in_flight, settings.audit_path, settings.timeout)

    @property
    def is_stub(self) -> bool:
        return isinstance(self.backend, StubBackend)

    def complete(self, req: OracleRequest) -> OracleResponse:
        """Raises OracleError subclasses only."""
        with self._gate:
            try:
                resp = self.backend.complete(req)
            except OracleError:
                raise
            except Exception as err:  # backend bug or transport oddity
                raise OracleResponseError(f"{type(err).__name__}: {err}") from err
        self._audit(req, resp)
        return resp

    def _audit(self, req: OracleRequest, resp: OracleResponse) -> None:
        if self.audit_path is None:
            return
        line = json.dumps({"role": req.role, "prompt": req.prompt, "context": req.context,
                           "text": resp.text, "backend": resp.backend,
                           "latency": round(resp.latency, 6)}, sort_keys=True, default=str)
        with self._audit_lock, self.audit_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _ask(self, role: str, context: dict[str, Any]) -> str:
        req = OracleRequest(role, render_prompt(role, context), context, timeout=self.timeout)
        return self.complete(req).text

    # role helpers

    def rerank(self, items: Sequence[str], context: dict[str, Any] | None = None) -> list[int]:
        n = len(items)
        if n < 1:
            raise ValueError("rerank needs at least one item")
        identity = list(range(n))
        if n == 1:
            return identity
        try:
            text = self._ask("rerank", {**(context or {}), "items": list(items), "n_items": n})
        except OracleError as err:
            log.warning("rerank failed (%s); keeping order", err)
            return identity
        perm = parse_permutation(text, n)
        if perm is None:
            log.warning("rerank returned %r, not a permutation of %d; keeping order", text, n)
            return identity
        return perm

    def summarize_contract(self, context: dict[str, Any]) -> list[str]:
        try:
            text = self._ask("summarize_contract", context)
        except OracleError as err:
            log.warning("contract summary failed (%s); no suggestions", err)
            return []
        return [ln.strip() for ln in text.splitlines() if ln.strip()[:1] in ("+", "-")]

    def draft_protocol(self, context: dict[str, Any]) -> dict[str, Any]:
        try:
            data = json.loads(self._ask("draft_protocol", context))
        except (OracleError, ValueError) as err:
            log.warning("protocol draft failed (%s); using template", err)
            return {}
        if not isinstance(data, dict):
            return {}
        out: dict[str, Any] = {}
        if isinstance(data.get("summary"), str) and data["summary"].strip():
            out["summary"] = data["summary"].strip()
        plan = data.get("plan")
        if isinstance(plan, list) and plan and all(isinstance(p, str) and p.strip() for p in plan):
            out["plan"] = [p.strip() for p in plan]
        return out

    def intention(self, context: dict[str, Any], default: str) -> str:
        try:
            text = self._ask("intention", {**context, "default": default}).strip()
        except OracleError as err:
            log.warning("intention request failed (%s); heuristic tag", err)
            return default
        line = text.splitlines()[0].strip() if text else ""
        return line or default

    def action(self, context: dict[str, Any], valid: Sequence[str], default: int) -> int:
        """Index into ``valid``; one retry on an unparseable answer, then ``default``."""
        ctx = {**context, "valid_actions": list(valid), "default": valid[default]}
        for _ in range(2):
            try:
                text = self._ask("action", ctx).strip()
            except OracleError as err:
                log.warning("action request failed (%s); heuristic action", err)
                return default
            if text in valid:
                return list(valid).index(text)
            m = _PERM_RE.fullmatch(text)
            if m and int(text) < len(valid):
                return int(text)
        log.warning("action answer %r is not a valid action; heuristic action", text)
        return default

    def approve(self, mutation, evidence: dict[str, Any], default: bool) -> bool:
        ctx = {"kind": mutation.kind, "reason": mutation.reason, "evidence": evidence,
               "default": default}
        try:
            text = self._ask("curate", ctx).strip().upper()
        except OracleError as err:
            log.warning("curation request failed (%s); rule decision", err)
            return default
        if text.startswith("APPROVE"):
            return True
        if text.startswith("REJECT"):
            return False
        log.warning("curation answer %r unparseable; rule decision", text)
        return default


def make_oracle(settings: OracleSettings | None = None) -> OracleClient:
    return OracleClient.from_settings(settings or OracleSettings.from_env())


__all__ = [
    "OracleClient", "OracleConnectionError", "OracleError", "OracleRequest", "OracleResponse",
    "OracleResponseError", "OracleSettings", "OracleTimeoutError", "ROLES", "RemoteBackend",
    "StubBackend", "load_prompt", "make_oracle", "parse_permutation", "render_prompt",
]
