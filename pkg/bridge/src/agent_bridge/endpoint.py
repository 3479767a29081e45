"""Chat endpoint adapters.

To the bridge a model endpoint is one function: prompt text in, completion
text out. Anything that prevents reading a completion string back (transport
failure, bad HTTP status, a response body the adapter cannot interpret)
raises EndpointError and the runner's retry policy takes over. Adapters may
be called from several workers at once and must not keep per-call state.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from typing import Protocol


class EndpointError(RuntimeError):
    pass


class ChatEndpoint(Protocol):
    def complete(self, prompt: str, temperature: float) -> str: ...


class HttpChatEndpoint:
    """POST adapter for chat-completions style APIs.

    Sends {"model", "messages": [{"role": "user", "content": prompt}],
    "temperature"} and reads choices[0].message.content back. The credential
    is resolved from the named environment variable at call time and sent as
    a bearer token.
    """

    def __init__(
        self,
        url: str,
        model: str = "",
        credential_env: str = "",
        timeout: float = 60.0,
    ):
        if not url:
            raise ValueError("endpoint url is empty")
        self.url = url
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout

    def complete(self, prompt: str, temperature: float) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            token = os.environ.get(self.credential_env)
            if not token:
                raise EndpointError(
                    f"credential variable {self.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(
            self.url,
            data=json.dumps(payload).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = response.read()
        except urllib.error.HTTPError as exc:
            raise EndpointError(f"endpoint returned HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise EndpointError(f"endpoint unreachable: {exc}") from exc
        return _extract_completion(body)


def _extract_completion(body: bytes) -> str:
    try:
        data = json.loads(body)
    except ValueError as exc:
        raise EndpointError("endpoint response is not json") from exc
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise EndpointError("endpoint response carries no completion") from exc
    if not isinstance(content, str):
        raise EndpointError("completion content is not text")
    return content
