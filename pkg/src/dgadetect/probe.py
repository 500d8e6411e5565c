"""Zero-shot probe of a chat-completions endpoint, plus in-tree stubs.

The probe renders one yes/no question per domain, sends it as a single
user message, and reads the first standalone "yes"/"no" token of the reply.
Replies without one are counted unparseable and excluded from accuracy.
Stub transports (and a localhost stub server) keep tests offline.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from .errors import AllRepliesUnparseableError, EndpointUnreachableError
from .training import ConfusionMatrix, EvalReport, report_from_confusion

DEFAULT_TEMPLATE = "Is {domain} a DGA domain? Please give me yes or no answer?"


@dataclass(frozen=True)
class ProbeConfig:
    endpoint: str = ""
    model: str = "stub"
    template: str = DEFAULT_TEMPLATE
    timeout: float = 30.0
    max_domains: int | None = None
    auth_env: str | None = None   # environment variable holding a bearer token

    def __post_init__(self):
        if self.template.count("{domain}") != 1:
            raise ValueError("template must contain exactly one {domain} placeholder")


_TOKEN_RE = re.compile(r"[a-zA-Z]+")


def parse_reply(text: str) -> bool | None:
    """True for malicious (yes), False for benign (no), None if neither
    appears as a standalone word."""
    for token in _TOKEN_RE.findall(text):
        low = token.lower()
        if low == "yes":
            return True
        if low == "no":
            return False
    return None


def http_transport(cfg: ProbeConfig):
    """Transport speaking the common chat-completions JSON wire shape."""
    headers = {"Content-Type": "application/json"}
    if cfg.auth_env:
        token = os.environ.get(cfg.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"

    def send(message: str) -> str:
        payload = {"model": cfg.model,
                   "messages": [{"role": "user", "content": message}]}
        try:
            resp = requests.post(cfg.endpoint, json=payload, headers=headers,
                                 timeout=cfg.timeout)
            resp.raise_for_status()
            data = resp.json()
        except requests.RequestException as exc:
            raise EndpointUnreachableError(f"{cfg.endpoint}: {exc}") from exc
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointUnreachableError(
                f"malformed completion payload: {data!r}") from exc

    return send


@dataclass
class ProbeOutcome:
    report: EvalReport
    parsed: int
    unparseable: int
    replies: list


def probe_zeroshot(cfg: ProbeConfig, records, transport=None) -> ProbeOutcome:
    """Query the endpoint once per labeled record and score the answers.

    ``records`` is an iterable of objects with ``domain`` and ``label``
    (DatasetRecord works). ``transport`` defaults to HTTP against
    ``cfg.endpoint``; tests inject stub callables.
    """
    send = transport or http_transport(cfg)
    rows = list(records)
    if cfg.max_domains is not None:
        rows = rows[: cfg.max_domains]
    y_true: list[int] = []
    y_pred: list[int] = []
    replies = []
    unparseable = 0
    for rec in rows:
        message = cfg.template.format(domain=rec.domain.text)
        reply = send(message)
        verdict = parse_reply(reply)
        replies.append({"domain": rec.domain.text, "reply": reply,
                        "parsed": verdict})
        if verdict is None:
            unparseable += 1
            continue
        y_true.append(1 if rec.label.malicious else 0)
        y_pred.append(1 if verdict else 0)
    if not y_true:
        raise AllRepliesUnparseableError(
            f"none of {len(rows)} replies contained a yes/no token")
    cm = ConfusionMatrix.from_predictions(
        np.array(y_true), np.array(y_pred), ["benign", "malicious"])
    return ProbeOutcome(report=report_from_confusion(cm), parsed=len(y_true),
                        unparseable=unparseable, replies=replies)


# --- stub transports (no network) ---

def stub_always_yes(message: str) -> str:
    return "Yes."


def stub_always_no(message: str) -> str:
    return "No."


def stub_unparseable(message: str) -> str:
    return "I think not"


def make_echo_truth_stub(truth: dict, invert: bool = False):
    """Reply with the ground truth for the domain found in the prompt
    (inverted when ``invert``, for the adversarial case)."""

    def send(message: str) -> str:
        for domain, malicious in truth.items():
            if domain in message:
                answer = malicious != invert
                return "yes" if answer else "no"
        return "I cannot tell"

    return send


STUB_POLICIES = {
    "always_yes": lambda truth: stub_always_yes,
    "always_no": lambda truth: stub_always_no,
    "echo_truth": lambda truth: make_echo_truth_stub(truth),
    "adversarial": lambda truth: make_echo_truth_stub(truth, invert=True),
}


class StubServer:
    """Localhost chat-completions stub for exercising the HTTP path.

    Usage::

        with StubServer(stub_always_yes) as url:
            probe_zeroshot(ProbeConfig(endpoint=url), records)
    """

    def __init__(self, policy):
        self.policy = policy
        self._server = None
        self._thread = None

    def __enter__(self) -> str:
        policy = self.policy

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                message = payload["messages"][0]["content"]
                body = json.dumps({
                    "choices": [{"message": {"role": "assistant",
                                             "content": policy(message)}}]
                }).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        host, port = self._server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join(timeout=5)
        return False
