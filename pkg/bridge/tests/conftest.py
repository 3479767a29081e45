"""Shared fixtures: a real protocol server and a local chat-completions API.

The bridge is a pure client, so its tests talk to the probe package the way
any deployment would: through the installed `ruleshift` executable, never by
importing it.
"""

import json
import shutil
import socket
import subprocess
import threading
import time
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

SERVER_EXE = shutil.which("ruleshift")


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def wait_for_port(port: int, deadline: float = 15.0):
    end = time.monotonic() + deadline
    while time.monotonic() < end:
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise RuntimeError(f"server on port {port} did not come up")


@pytest.fixture(scope="session")
def server_address():
    if SERVER_EXE is None:
        pytest.fail("the environment server CLI 'ruleshift' is not installed")
    port = free_port()
    proc = subprocess.Popen(
        [SERVER_EXE, "serve", "--tcp", f"127.0.0.1:{port}", "--seed", "0"]
    )
    try:
        wait_for_port(port)
        yield f"tcp:127.0.0.1:{port}"
    finally:
        proc.terminate()
        proc.wait(timeout=10)


# --- chat-completions stand-in ---------------------------------------------------------


class _ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        request = json.loads(self.rfile.read(length))
        self.server.requests.append(
            {"body": request, "auth": self.headers.get("Authorization")}
        )
        status, payload = self.server.responder(request)
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


def completion(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


def chat_url(server) -> str:
    return f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"


@pytest.fixture()
def chat_api():
    server = HTTPServer(("127.0.0.1", 0), _ChatHandler)
    server.requests = []
    server.responder = lambda request: (200, completion("pong"))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield server
    finally:
        server.shutdown()
        server.server_close()
