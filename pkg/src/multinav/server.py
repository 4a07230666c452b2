"""Velocity-command service over TCP, one JSON object per line.

Request::

    {"scan": [[...B floats...] x 3], "goal": [distance, angle], "vel": [v, w],
     "deterministic": true}

Response: ``{"v": ..., "w": ...}`` or ``{"error": code, "msg": text}`` with
code one of ``parse``, ``bad_request``, ``beam_mismatch``, ``too_long``.

A connection may first send ``{"seed": int}``; the reply is
``{"ok": true, "seed": int}`` and the connection's sampling RNG is
re-seeded, which makes non-deterministic responses reproducible.
Connections that never send it sample from seed 0.
"""
from __future__ import annotations

import json
import logging
import math
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evaluate import PolicyController
from .mdp import Observation, RunningNormalizer
from .policy import NetConfig, clamp_action, sample_action
from .seeding import make_rng

log = logging.getLogger(__name__)

MAX_LINE = 1 << 20


class RequestError(ValueError):
    def __init__(self, code: str, msg: str):
        super().__init__(msg)
        self.code = code


@dataclass(frozen=True)
class FrozenPolicy:
    """Immutable inference bundle shared by every connection."""

    policy: dict
    normalizer: RunningNormalizer
    net: NetConfig

    @classmethod
    def from_checkpoint(cls, checkpoint) -> "FrozenPolicy":
        from .train import TrainState, load_checkpoint
        state = checkpoint if isinstance(checkpoint, TrainState) else load_checkpoint(checkpoint)
        policy = {k: v.copy() for k, v in state.policy.items()}
        for v in policy.values():
            v.setflags(write=False)
        return cls(policy, state.normalizer, state.config.net)

    @property
    def n_beams(self) -> int:
        return self.net.n_beams


def infer(model: FrozenPolicy, scan, goal, vel, deterministic: bool = True,
          rng: Optional[np.random.Generator] = None) -> tuple[float, float]:
    """In-process inference; the server calls exactly this."""
    raw = Observation(np.asarray(scan, dtype=np.float64)[None],
                      np.asarray(goal, dtype=np.float64)[None],
                      np.asarray(vel, dtype=np.float64)[None])
    ctrl = PolicyController(model.policy, model.normalizer, model.net)
    mean = ctrl.mean_action(raw)[0]
    if deterministic:
        action = clamp_action(mean)
    else:
        action, _, _ = sample_action(mean, model.policy["log_std"].astype(np.float64), rng)
    return float(action[0]), float(action[1])


def _finite_list(value, length: int, what: str) -> list:
    if not isinstance(value, list) or len(value) != length:
        raise RequestError("bad_request", f"{what} must be a list of {length} numbers")
    for x in value:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise RequestError("bad_request", f"{what} must contain finite numbers")
    return value


def parse_request(line: bytes, n_beams: int) -> tuple:
    """Validate one request line; returns (scan, goal, vel, deterministic)."""
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise RequestError("parse", f"invalid JSON: {exc}") from None
    if not isinstance(msg, dict):
        raise RequestError("parse", "request must be a JSON object")
    missing = [k for k in ("scan", "goal", "vel") if k not in msg]
    if missing:
        raise RequestError("bad_request", f"missing fields {missing}")
    scan = msg["scan"]
    if not isinstance(scan, list) or len(scan) != 3:
        raise RequestError("bad_request", "scan must hold exactly 3 frames")
    if any(not isinstance(f, list) for f in scan):
        raise RequestError("bad_request", "scan frames must be lists")
    if any(len(f) != n_beams for f in scan):
        raise RequestError("beam_mismatch",
                           f"expected {n_beams} beams per frame, got {[len(f) for f in scan]}")
    for f in scan:
        _finite_list(f, n_beams, "scan frame")
    goal = _finite_list(msg["goal"], 2, "goal")
    vel = _finite_list(msg["vel"], 2, "vel")
    det = msg.get("deterministic", True)
    if not isinstance(det, bool):
        raise RequestError("bad_request", "deterministic must be a boolean")
    return scan, goal, vel, det


class Session:
    """Per-connection protocol state; ``handle`` maps one line to one reply."""

    def __init__(self, model: FrozenPolicy):
        self.model = model
        self.rng = make_rng(0)

    def handle(self, line: bytes) -> dict:
        try:
            if len(line) > MAX_LINE:
                raise RequestError("too_long", f"line exceeds {MAX_LINE} bytes")
            stripped = line.strip()
            if stripped.startswith(b'{"seed"'):
                try:
                    msg = json.loads(stripped.decode("utf-8"))
                except (UnicodeDecodeError, ValueError):
                    msg = None
                if isinstance(msg, dict) and set(msg) == {"seed"}:
                    seed = msg["seed"]
                    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
                        raise RequestError("bad_request", "seed must be a non-negative integer")
                    self.rng = make_rng(seed)
                    return {"ok": True, "seed": seed}
            scan, goal, vel, det = parse_request(stripped, self.model.n_beams)
            v, w = infer(self.model, scan, goal, vel, det, self.rng)
            return {"v": v, "w": w}
        except RequestError as exc:
            return {"error": exc.code, "msg": str(exc)}
        except Exception as exc:  # never let a request take the connection down
            log.exception("internal error")
            return {"error": "internal", "msg": repr(exc)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session = Session(self.server.model)
        while True:
            line = self.rfile.readline(MAX_LINE + 2)
            if not line:
                return
            if not line.endswith(b"\n"):
                # Over-long line: answer once, then discard up to the newline.
                reply = session.handle(line) if len(line) <= MAX_LINE else {
                    "error": "too_long", "msg": f"line exceeds {MAX_LINE} bytes"}
                while line and not line.endswith(b"\n"):
                    line = self.rfile.readline(MAX_LINE + 2)
            else:
                reply = session.handle(line[:-1])
            try:
                self.wfile.write((json.dumps(reply) + "\n").encode())
            except OSError:
                return


class PolicyServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, model: FrozenPolicy, address: str = "127.0.0.1", port: int = 0):
        self.model = model
        super().__init__((address, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]


def start_server(checkpoint, address: str = "127.0.0.1", port: int = 0) -> PolicyServer:
    """Start serving in a background thread; call ``shutdown()`` to stop."""
    model = checkpoint if isinstance(checkpoint, FrozenPolicy) else FrozenPolicy.from_checkpoint(checkpoint)
    server = PolicyServer(model, address, port)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


def serve(checkpoint, address: str = "127.0.0.1", port: int = 8765):
    """Serve until interrupted."""
    model = FrozenPolicy.from_checkpoint(checkpoint)
    with PolicyServer(model, address, port) as server:
        log.info("serving %d-beam policy on %s:%d", model.n_beams, address, server.port)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


class Client:
    """Minimal blocking client for the line protocol."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rb")

    def send_raw(self, line: bytes) -> dict:
        self.sock.sendall(line + b"\n")
        return json.loads(self.file.readline())

    def request(self, scan, goal, vel, deterministic: bool = True) -> dict:
        payload = {"scan": [list(map(float, f)) for f in scan], "goal": list(map(float, goal)),
                   "vel": list(map(float, vel)), "deterministic": deterministic}
        return self.send_raw(json.dumps(payload).encode())

    def close(self):
        self.file.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
