"""Loopback socket bridge between the orchestrator and a browser harness.

The orchestrator listens; the harness page connects out and forwards
binary frames to its worker verbatim, so the wire format is exactly the
CBOR invoke/result encoding used everywhere else. Two control frames
exist besides invoke/result: ``{op:"reset"}`` asks the page to discard
its worker and caches (forcing the next invocations cold) and is
acknowledged with ``{op:"reset_done"}``; ``{op:"ping"}``/``{op:"pong"}``
checks liveness.

Requests over one session are strictly serialized; replies are matched
FIFO. A dropped connection surfaces as BackendUnavailable so the
orchestrator can discard and flag the affected run.
"""

from __future__ import annotations

import queue
import threading
from typing import Optional

from websockets.sync.server import Server, ServerConnection, serve

from . import cbor
from .frames import InvokeFrame, ResultFrame, decode_result, encode_invoke
from .transports import BackendUnavailable

DEFAULT_BRIDGE_PORT = 8787
_CONTROL_TIMEOUT_S = 30.0


class BridgeServer:
    """Accepts harness connections and exposes the Transport interface.

    Only the most recent harness connection is active; a page reload
    simply takes over the session.
    """

    requires_reset_for_cold = True  # cold means a fresh worker in the page

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_BRIDGE_PORT,
                 invoke_timeout_s: float = 300.0):
        self.invoke_timeout_s = invoke_timeout_s
        self._conn: Optional[ServerConnection] = None
        self._conn_lock = threading.Lock()
        self._request_lock = threading.Lock()
        self._replies: queue.Queue[Optional[bytes]] = queue.Queue()
        self._connected = threading.Event()
        # loopback link, frames up to ~9 MiB (4 MiB payload + envelope)
        self._server: Server = serve(self._session, host, port, max_size=None)
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="bridge-server", daemon=True
        )
        self._thread.start()
        self.port = self._server.socket.getsockname()[1]

    # -- session handling ----------------------------------------------------

    def _session(self, conn: ServerConnection) -> None:
        with self._conn_lock:
            self._conn = conn
        self._connected.set()
        try:
            for message in conn:
                if isinstance(message, bytes):
                    self._replies.put(message)
        except Exception:
            pass
        finally:
            with self._conn_lock:
                if self._conn is conn:
                    self._conn = None
                    self._connected.clear()
            self._replies.put(None)  # wake pending waiters: session is gone

    def wait_for_harness(self, timeout_s: float = 60.0) -> bool:
        """Block until a harness page has connected."""
        return self._connected.wait(timeout_s)

    def _send(self, data: bytes) -> None:
        with self._conn_lock:
            conn = self._conn
        if conn is None:
            raise BackendUnavailable("no harness connected to the bridge")
        try:
            conn.send(data)
        except Exception as exc:
            raise BackendUnavailable(f"bridge send failed: {exc}") from exc

    def _recv(self, timeout_s: float) -> bytes:
        try:
            reply = self._replies.get(timeout=timeout_s)
        except queue.Empty:
            raise BackendUnavailable("harness reply timed out") from None
        if reply is None:
            raise BackendUnavailable("harness connection lost")
        return reply

    # -- Transport interface ---------------------------------------------------

    def invoke(self, frame: InvokeFrame) -> ResultFrame:
        with self._request_lock:  # one in-flight request per session
            self._send(encode_invoke(frame))
            reply = self._recv(self.invoke_timeout_s)
        return decode_result(reply)

    def reset(self) -> None:
        with self._request_lock:
            self._send(cbor.encode({"op": "reset"}))
            reply = cbor.decode(self._recv(_CONTROL_TIMEOUT_S))
        if reply.get("op") != "reset_done":
            raise BackendUnavailable(f"unexpected reset reply: {reply.get('op')!r}")

    def healthy(self) -> bool:
        if not self._connected.is_set():
            return False
        try:
            with self._request_lock:
                self._send(cbor.encode({"op": "ping"}))
                reply = cbor.decode(self._recv(_CONTROL_TIMEOUT_S))
            return reply.get("op") == "pong"
        except BackendUnavailable:
            return False

    def close(self) -> None:
        self._server.shutdown()
        self._thread.join(timeout=5)
