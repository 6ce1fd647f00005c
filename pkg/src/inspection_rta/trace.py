"""Episode trace: one record per simulated second, plus reward records per policy step.

Traces are written as JSON lines. The first line is a header describing the run; each
following line is one inner step. Floats are written with ``repr`` precision so a
parsed trace reproduces every metric bit for bit. NaN (disabled constraints) is
written as ``null``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _layout as L
from .config import CONSTRAINT_IDS

__all__ = ["REWARD_TERMS", "EpisodeTrace", "write_jsonl", "read_jsonl", "write_csv", "TRACE_VERSION"]

TRACE_VERSION = 1
REWARD_TERMS = ("points", "delta_v", "torque", "orient", "time", "success", "crash", "dist", "energy")
STATE_FIELDS = ("x", "y", "z", "vx", "vy", "vz", "q1", "q2", "q3", "q4", "w1", "w2", "w3", "T", "E", "theta_S", "t")


@dataclass(eq=False)
class EpisodeTrace:
    """Growable per-inner-step arrays for one episode.

    ``u_agent`` is the policy's command for the enclosing policy step, ``u_des`` the
    filter input at that second (the agent command on the first second, the previous
    safe control afterwards), ``u_act`` the applied control. ``h`` is evaluated at the
    state reached after the step, ``bc`` and ``slack`` come from the filter call that
    produced ``u_act``. ``reward_rows`` maps a record index to the 9 reward terms of the
    policy step ending there.
    """

    seed: int
    mass: float
    dt: float
    x0: np.ndarray
    rta: bool
    n: int = 0
    cap: int = 0
    arrays: dict = field(default_factory=dict)
    new_points: list = field(default_factory=list)
    reward_rows: dict = field(default_factory=dict)
    termination: str = "Running"

    _SPECS = {
        "t": (),
        "x": (L.NX,),
        "u_agent": (L.NU,),
        "u_des": (L.NU,),
        "u_act": (L.NU,),
        "h": (L.NC,),
        "bc": (L.NC,),
        "slack": (L.NC,),
        "status": (),
        "iters": (),
        "w_p": (),
        "outer": (),
    }
    _INT = ("status", "iters", "outer")

    def _grow(self, need: int):
        if need <= self.cap:
            return
        cap = max(need, 2 * self.cap, 256)
        for k, shp in self._SPECS.items():
            dt = np.int64 if k in self._INT else float
            new = np.zeros((cap,) + shp, dtype=dt)
            if k in self.arrays:
                new[: self.n] = self.arrays[k][: self.n]
            self.arrays[k] = new
        self.cap = cap

    def append_block(self, block: dict, new_points: list):
        m = len(block["t"])
        self._grow(self.n + m)
        for k, v in block.items():
            self.arrays[k][self.n : self.n + m] = v
        self.new_points.extend(new_points)
        self.n += m

    def __getattr__(self, name):
        arrays = self.__dict__.get("arrays")
        if arrays is not None and name in self._SPECS:
            return arrays[name][: self.__dict__["n"]]
        raise AttributeError(name)

    def __len__(self) -> int:
        return self.n

    def reward_matrix(self) -> np.ndarray:
        """Rows of reward terms in policy-step order."""
        keys = sorted(self.reward_rows)
        return np.array([[self.reward_rows[k][t] for t in REWARD_TERMS] for k in keys]).reshape(-1, len(REWARD_TERMS))

    def equals(self, other: "EpisodeTrace") -> bool:
        if self.n != other.n or self.termination != other.termination:
            return False
        for k in self._SPECS:
            a, b = getattr(self, k), getattr(other, k)
            if not np.array_equal(a, b, equal_nan=(a.dtype.kind == "f")):
                return False
        return self.new_points == other.new_points and self.reward_rows == other.reward_rows


def _f(v: float):
    return None if (isinstance(v, float) and math.isnan(v)) else v


def _fl(a) -> list:
    return [_f(float(v)) for v in a]


def _unf(a) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in a], dtype=float)


def write_jsonl(trace: EpisodeTrace, path, extra_header: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "v": TRACE_VERSION,
        "kind": "header",
        "seed": trace.seed,
        "rta": trace.rta,
        "mass": trace.mass,
        "dt": trace.dt,
        "x0": _fl(trace.x0),
        "state_fields": list(STATE_FIELDS),
        "constraints": list(CONSTRAINT_IDS),
        "reward_terms": list(REWARD_TERMS),
        "records": trace.n,
        "termination": trace.termination,
    }
    if extra_header:
        header.update(extra_header)
    with path.open("w") as fh:
        fh.write(json.dumps(header) + "\n")
        A = trace.arrays
        for i in range(trace.n):
            rec = {
                "t": float(A["t"][i]),
                "outer": int(A["outer"][i]),
                "x": _fl(A["x"][i]),
                "u_agent": _fl(A["u_agent"][i]),
                "u_des": _fl(A["u_des"][i]),
                "u_act": _fl(A["u_act"][i]),
                "h": _fl(A["h"][i]),
                "bc": _fl(A["bc"][i]),
                "slack": _fl(A["slack"][i]),
                "status": L.STATUS_NAMES[int(A["status"][i])] if A["status"][i] >= 0 else "Bypass",
                "iters": int(A["iters"][i]),
                "w_p": float(A["w_p"][i]),
                "new_points": list(trace.new_points[i]),
            }
            if i in trace.reward_rows:
                rec["reward"] = trace.reward_rows[i]
            if i == trace.n - 1:
                rec["termination"] = trace.termination
            fh.write(json.dumps(rec) + "\n")
    return path


def read_jsonl(path) -> EpisodeTrace:
    """Parse a trace file written by :func:`write_jsonl`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError("empty trace file")
    hdr = json.loads(lines[0])
    if hdr.get("kind") != "header" or hdr.get("v") != TRACE_VERSION:
        raise ValueError("not a version-1 trace file")
    tr = EpisodeTrace(int(hdr["seed"]), float(hdr["mass"]), float(hdr["dt"]), _unf(hdr["x0"]), bool(hdr["rta"]))
    names = {n: i for i, n in enumerate(L.STATUS_NAMES)}
    recs = [json.loads(s) for s in lines[1:]]
    block = {k: [] for k in EpisodeTrace._SPECS}
    newp = []
    for i, r in enumerate(recs):
        block["t"].append(r["t"])
        block["outer"].append(r["outer"])
        for k in ("x", "u_agent", "u_des", "u_act", "h", "bc", "slack"):
            block[k].append(_unf(r[k]))
        block["status"].append(names.get(r["status"], -1))
        block["iters"].append(r["iters"])
        block["w_p"].append(r["w_p"])
        newp.append(list(r["new_points"]))
        if "reward" in r:
            tr.reward_rows[i] = {k: r["reward"][k] for k in REWARD_TERMS}
    if recs:
        tr.append_block({k: np.array(v) for k, v in block.items()}, newp)
        tr.termination = recs[-1].get("termination", hdr["termination"])
    else:
        tr.termination = hdr["termination"]
    return tr


def write_csv(trace: EpisodeTrace, path) -> Path:
    """Flat columnar export for plotting (no reward terms)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = (
        ["t"]
        + list(STATE_FIELDS)
        + [f"u_des_{i}" for i in range(L.NU)]
        + [f"u_act_{i}" for i in range(L.NU)]
        + [f"h_{c}" for c in CONSTRAINT_IDS]
        + [f"bc_{c}" for c in CONSTRAINT_IDS]
        + ["status", "w_p"]
    )
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        A = trace.arrays
        for i in range(trace.n):
            w.writerow(
                [repr(float(A["t"][i]))]
                + [repr(float(v)) for v in A["x"][i]]
                + [repr(float(v)) for v in A["u_des"][i]]
                + [repr(float(v)) for v in A["u_act"][i]]
                + [repr(float(v)) for v in A["h"][i]]
                + [repr(float(v)) for v in A["bc"][i]]
                + [int(A["status"][i]), repr(float(A["w_p"][i]))]
            )
    return path
