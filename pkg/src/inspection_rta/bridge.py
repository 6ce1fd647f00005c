"""Line-delimited JSON bridge to a policy running in a child process.

Protocol (one JSON object per line, UTF-8):

* parent -> child, once: ``{"v": 1, "obs_size": 26}``
* child -> parent, once: ``{"v": 1}``
* then, once per policy step, parent -> child ``{"t": <s>, "obs": [26 floats]}`` and
  child -> parent ``{"F": [3 floats, N], "tau": [3 floats, N m]}``.

Every read waits at most ``timeout`` seconds.
"""

from __future__ import annotations

import json
import math
import queue
import shlex
import subprocess
import threading

import numpy as np

from . import _layout as L

__all__ = [
    "PROTOCOL_VERSION",
    "BridgeError",
    "BridgeTimeout",
    "MalformedAction",
    "encode_obs",
    "decode_obs",
    "encode_action",
    "decode_action",
    "ExternalPolicy",
]

PROTOCOL_VERSION = 1
OBS_SIZE = 26


class BridgeError(RuntimeError):
    pass


class BridgeTimeout(BridgeError):
    pass


class MalformedAction(BridgeError):
    pass


def encode_obs(t: float, obs) -> str:
    """One observation record (no trailing newline). Floats keep full precision."""
    return json.dumps({"t": float(t), "obs": [float(v) for v in obs]})


def decode_obs(line: str) -> tuple[float, np.ndarray]:
    rec = json.loads(line)
    return float(rec["t"]), np.array(rec["obs"], dtype=float)


def encode_action(u) -> str:
    u = np.asarray(u, dtype=float).reshape(L.NU)
    return json.dumps({"F": [float(v) for v in u[:3]], "tau": [float(v) for v in u[3:]]})


def _triple(rec: dict, key: str) -> list:
    v = rec.get(key)
    if not isinstance(v, list) or len(v) != 3:
        raise MalformedAction(f"field {key!r} must be a list of 3 numbers")
    out = []
    for a in v:
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not math.isfinite(a):
            raise MalformedAction(f"field {key!r} holds a non-finite or non-numeric entry")
        out.append(float(a))
    return out


def decode_action(line: str) -> np.ndarray:
    """Parse an action record into the packed control ``[F, tau]``."""
    try:
        rec = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedAction(f"not JSON: {line!r}") from exc
    if not isinstance(rec, dict):
        raise MalformedAction(f"expected an object, got {line!r}")
    return np.array(_triple(rec, "F") + _triple(rec, "tau"))


class ExternalPolicy:
    """Policy callable backed by a child process speaking the bridge protocol.

    ``cmd`` is a shell-style command string or an argument list. Use as a context
    manager, or call :meth:`close`, to reap the child.
    """

    name = "external"

    def __init__(self, cmd, timeout: float = 5.0):
        self.argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        if not self.argv:
            raise BridgeError("empty external policy command")
        self.timeout = float(timeout)
        try:
            self.proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise BridgeError(f"cannot start {self.argv[0]!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._send(json.dumps({"v": PROTOCOL_VERSION, "obs_size": OBS_SIZE}))
        reply = self._recv()
        try:
            ok = json.loads(reply).get("v") == PROTOCOL_VERSION
        except (json.JSONDecodeError, AttributeError):
            ok = False
        if not ok:
            self.close()
            raise MalformedAction(f"bad handshake reply: {reply!r}")

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, line: str):
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BridgeError(f"policy process closed its input: {exc}") from exc

    def _recv(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise BridgeTimeout(f"no reply within {self.timeout} s") from None
        if line is None:
            raise BridgeError(f"policy process exited (code {self.proc.poll()})")
        return line.rstrip("\n")

    def reset(self, state):
        pass

    def __call__(self, state, obs) -> np.ndarray:
        self._send(encode_obs(state.t, obs))
        return decode_action(self._recv())

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
