"""Thin chat-completion HTTP client shared by the remote reasoner and structurer."""
from __future__ import annotations

import json
import urllib.error
import urllib.request
from typing import Any, Sequence


class ChatEndpointError(RuntimeError):
    """Transport or protocol failure talking to a chat-completion endpoint."""


def chat_complete(
    endpoint: str,
    messages: Sequence[dict[str, Any]],
    model: str | None = None,
    timeout: float = 30.0,
) -> str:
    """POST a chat request and return the assistant message text.

    Accepts both the nested chat-completion reply shape
    (choices[0].message.content) and a flat {"content": ...} shape, so small
    local mock endpoints stay trivial.
    """
    payload: dict[str, Any] = {"messages": list(messages)}
    if model is not None:
        payload["model"] = model
    request = urllib.request.Request(
        endpoint,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            body = response.read().decode("utf-8")
    except urllib.error.URLError as exc:
        raise ChatEndpointError(f"chat endpoint {endpoint} unreachable: {exc}") from exc
    try:
        reply = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ChatEndpointError(f"chat endpoint {endpoint} returned non-JSON") from exc
    try:
        if "choices" in reply:
            return str(reply["choices"][0]["message"]["content"])
        return str(reply["content"])
    except (KeyError, IndexError, TypeError) as exc:
        raise ChatEndpointError(
            f"chat endpoint {endpoint} reply missing message content"
        ) from exc
