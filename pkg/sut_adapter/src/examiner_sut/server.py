"""Single-threaded stdio server for the examiner wire protocol.

One JSON object per line. Incoming ``hello`` gets ``ready``; ``eval`` calls
the model callback; ``train`` calls the train callback when one is installed
and answers ``unsupported`` otherwise; ``bye`` ends the loop with exit code 0.
Requests are processed strictly in arrival order — the examiner serializes
per handle, so no concurrency machinery is needed here.
"""

from __future__ import annotations

import json
import sys
from typing import Callable, IO, Optional

PROTOCOL_VERSION = 1

ModelCallback = Callable[[list[list[float]]], tuple[list[float], list[float]]]
TrainCallback = Callable[[list[list[float]], float], bool]


class ProtocolServer:
    def __init__(
        self,
        model: ModelCallback,
        train: Optional[TrainCallback] = None,
        name: str = "examiner-sut-adapter",
    ):
        self.model = model
        self.train = train
        self.name = name

    def handle_line(self, line: str, out: IO[str]) -> bool:
        """Process one request line; returns False once the peer said bye."""
        line = line.strip()
        if not line:
            return True
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("expected a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            print(f"examiner-sut: skipping malformed line: {exc}", file=sys.stderr)
            return True
        kind = msg.get("type")
        if kind == "hello":
            self._reply(out, {"type": "ready", "name": self.name, "version": PROTOCOL_VERSION})
        elif kind == "eval":
            self._handle_eval(msg, out)
        elif kind == "train":
            self._handle_train(msg, out)
        elif kind == "bye":
            return False
        else:
            self._reply(out, {"type": "unsupported", "id": msg.get("id")})
        return True

    def _handle_eval(self, msg: dict, out: IO[str]) -> None:
        try:
            poses = msg["poses"]
            err2d, err3d = self.model(poses)
            if len(err2d) != len(poses) or len(err3d) != len(poses):
                raise ValueError("model returned wrong-length error lists")
        except Exception as exc:  # answer with an error so the peer can match ids
            self._reply(out, {"type": "error", "id": msg.get("id"), "message": str(exc)})
            return
        self._reply(out, {
            "type": "result",
            "id": msg.get("id"),
            "err2d": [float(e) for e in err2d],
            "err3d": [float(e) for e in err3d],
        })

    def _handle_train(self, msg: dict, out: IO[str]) -> None:
        if self.train is None:
            self._reply(out, {"type": "unsupported", "id": msg.get("id")})
            return
        try:
            trained = self.train(msg.get("samples", []), float(msg.get("lr_discount", 0.0)))
        except Exception as exc:
            self._reply(out, {"type": "error", "id": msg.get("id"), "message": str(exc)})
            return
        self._reply(out, {"type": "trained" if trained else "unsupported", "id": msg.get("id")})

    @staticmethod
    def _reply(out: IO[str], obj: dict) -> None:
        out.write(json.dumps(obj) + "\n")
        out.flush()


def serve_stdio(
    model: ModelCallback,
    train: Optional[TrainCallback] = None,
    name: str = "examiner-sut-adapter",
    stdin: Optional[IO[str]] = None,
    stdout: Optional[IO[str]] = None,
) -> int:
    """Serve until bye or EOF; returns the process exit code (0)."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    server = ProtocolServer(model, train, name)
    for line in stdin:
        if not server.handle_line(line, stdout):
            break
    return 0
