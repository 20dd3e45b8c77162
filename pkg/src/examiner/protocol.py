"""JSON-lines stdio protocol: engine-side client and the built-in landscape server.

One UTF-8 JSON object per line over the child's stdin/stdout:

    engine->SUT: {"type":"hello","version":1,"nuisance":{...}}
    SUT->engine: {"type":"ready","name":"<str>","version":1}
    engine->SUT: {"type":"eval","id":<u64>,"poses":[[f64...],...]}
    SUT->engine: {"type":"result","id":<u64>,"err2d":[f64...],"err3d":[f64...]}
    engine->SUT: {"type":"train","id":<u64>,"lr_discount":<f64>,"samples":[[f64...],...]}
    SUT->engine: {"type":"trained","id":<u64>} or {"type":"unsupported","id":<u64>}
    engine->SUT: {"type":"bye"}   (SUT exits 0)

Floats survive the round trip bit-exactly (shortest-repr serialization), so an
external landscape server is indistinguishable from in-process evaluation.
"""

from __future__ import annotations

import collections
import json
import queue
import subprocess
import sys
import threading
import time
from typing import IO, Sequence

import numpy as np

from .errors import ProtocolError
from .landscape import SyntheticLandscape

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0  # seconds per batch

_EOF = object()


class ProtocolClient:
    """Owns one child SUT process. Requests are serialized by an internal lock;
    replies are matched by id."""

    def __init__(self, argv: Sequence[str], nuisance: dict, timeout: float = DEFAULT_TIMEOUT):
        self.argv = list(argv)
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        self._stderr_tail: collections.deque[str] = collections.deque(maxlen=50)
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"cannot spawn SUT {self.argv!r}: {exc}") from exc
        threading.Thread(target=self._drain_stdout, daemon=True).start()
        threading.Thread(target=self._drain_stderr, daemon=True).start()
        self.name = self._handshake(nuisance)

    # -- pipe plumbing ---------------------------------------------------

    def _drain_stdout(self) -> None:
        try:
            for line in self._proc.stdout:  # type: ignore[union-attr]
                self._lines.put(line)
        finally:
            self._lines.put(_EOF)

    def _drain_stderr(self) -> None:
        for line in self._proc.stderr:  # type: ignore[union-attr]
            self._stderr_tail.append(line.rstrip())

    def _context(self) -> str:
        if not self._stderr_tail:
            return ""
        return " | stderr: " + " / ".join(self._stderr_tail)

    def _next_message(self, deadline: float, batch_id: int | None) -> dict:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProtocolError(f"SUT reply timed out after {self.timeout}s{self._context()}", batch_id)
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                raise ProtocolError(f"SUT reply timed out after {self.timeout}s{self._context()}", batch_id)
            if line is _EOF:
                code = self._proc.poll()
                raise ProtocolError(f"SUT process exited (code {code}){self._context()}", batch_id)
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed SUT reply: {line[:200]!r} ({exc})", batch_id) from exc
            if not isinstance(obj, dict):
                raise ProtocolError(f"malformed SUT reply: expected object, got {line[:200]!r}", batch_id)
            return obj

    def _send(self, obj: dict, batch_id: int | None) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")  # type: ignore[union-attr]
            self._proc.stdin.flush()  # type: ignore[union-attr]
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"SUT pipe closed: {exc}{self._context()}", batch_id) from exc

    # -- protocol --------------------------------------------------------

    def _handshake(self, nuisance: dict) -> str:
        self._send({"type": "hello", "version": PROTOCOL_VERSION, "nuisance": nuisance}, None)
        reply = self._next_message(time.monotonic() + self.timeout, None)
        if reply.get("type") != "ready":
            raise ProtocolError(f"expected ready, got {reply.get('type')!r}")
        if reply.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: engine speaks {PROTOCOL_VERSION}, SUT speaks {reply.get('version')!r}"
            )
        return str(reply.get("name", ""))

    def eval(self, poses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        with self._lock:
            self._next_id += 1
            batch_id = self._next_id
            self._send({"type": "eval", "id": batch_id, "poses": poses.tolist()}, batch_id)
            reply = self._next_message(time.monotonic() + self.timeout, batch_id)
        if reply.get("type") != "result" or reply.get("id") != batch_id:
            raise ProtocolError(f"unexpected reply to eval #{batch_id}: {reply}", batch_id)
        try:
            err2d = np.asarray(reply["err2d"], dtype=float)
            err3d = np.asarray(reply["err3d"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed result for batch #{batch_id}: {exc}", batch_id) from exc
        n = poses.shape[0]
        if err2d.shape != (n,) or err3d.shape != (n,):
            raise ProtocolError(f"result length mismatch for batch #{batch_id}", batch_id)
        return err2d, err3d

    def train(self, samples: np.ndarray, lr_discount: float) -> bool:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        payload = samples.tolist() if samples.size else []
        with self._lock:
            self._next_id += 1
            batch_id = self._next_id
            self._send(
                {"type": "train", "id": batch_id, "lr_discount": float(lr_discount), "samples": payload},
                batch_id,
            )
            reply = self._next_message(time.monotonic() + self.timeout, batch_id)
        if reply.get("id") != batch_id or reply.get("type") not in ("trained", "unsupported"):
            raise ProtocolError(f"unexpected reply to train #{batch_id}: {reply}", batch_id)
        return reply["type"] == "trained"

    def close(self) -> int:
        """Send bye and wait for the child to exit; kills it on timeout."""
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"}, None)
            except ProtocolError:
                pass
        try:
            return self._proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            return self._proc.wait()

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None


def serve_landscape_stdio(
    landscape: SyntheticLandscape,
    name: str = "builtin-landscape",
    stdin: IO[str] | None = None,
    stdout: IO[str] | None = None,
) -> int:
    """Serve a landscape over the stdio protocol until bye/EOF. Returns the exit code.

    Malformed lines are reported on stderr and skipped; unknown message types
    get an ``unsupported`` reply so a confused peer can notice.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def reply(obj: dict) -> None:
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            kind = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            print(f"examiner sut-serve: skipping malformed line: {exc}", file=sys.stderr)
            continue
        if kind == "hello":
            reply({"type": "ready", "name": name, "version": PROTOCOL_VERSION})
        elif kind == "eval":
            try:
                err2d, err3d = landscape.evaluate(np.asarray(msg["poses"], dtype=float))
            except Exception as exc:  # report instead of dying mid-protocol
                print(f"examiner sut-serve: eval failed: {exc}", file=sys.stderr)
                reply({"type": "unsupported", "id": msg.get("id")})
                continue
            reply({"type": "result", "id": msg["id"], "err2d": err2d.tolist(), "err3d": err3d.tolist()})
        elif kind == "train":
            samples = np.asarray(msg.get("samples", []), dtype=float)
            trained = landscape.train(samples, float(msg.get("lr_discount", 0.0)))
            reply({"type": "trained" if trained else "unsupported", "id": msg.get("id")})
        elif kind == "bye":
            return 0
        else:
            reply({"type": "unsupported", "id": msg.get("id")})
    return 0
