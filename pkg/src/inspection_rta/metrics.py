"""Episode metrics, interquartile mean, bootstrap intervals and violation tables."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .config import CONSTRAINT_IDS
from .trace import EpisodeTrace

__all__ = [
    "EmptySample",
    "VIOLATION_ROWS",
    "delta_v_increment",
    "torque_increment",
    "EpisodeMetrics",
    "episode_metrics",
    "violation_stats",
    "iqm",
    "bootstrap_ci",
    "BatchSummary",
    "summarize",
    "format_summary",
]

# Table row order: aggregate first, then one row per constraint
VIOLATION_ROWS = ("Any",) + CONSTRAINT_IDS
_ROW_LABELS = {
    "Any": "Any constraint",
    "Collision": "Safe separation",
    "Speed": "Dynamic speed",
    "KIZ": "Keep-in zone",
    "PSM": "Passively safe maneuvers",
    "VxLim": "Velocity limit x",
    "VyLim": "Velocity limit y",
    "VzLim": "Velocity limit z",
    "AttEZ": "Sun exclusion zone",
    "Temp": "Temperature",
    "Batt": "Battery energy",
    "W1Lim": "Angular velocity x",
    "W2Lim": "Angular velocity y",
    "W3Lim": "Angular velocity z",
}


class EmptySample(ValueError):
    pass


def delta_v_increment(F, mass: float, dt: float) -> float:
    """Velocity change [m/s] from per-axis thrust ``F`` held for ``dt`` seconds."""
    F = np.asarray(F, dtype=float)
    return float((abs(F[0]) + abs(F[1]) + abs(F[2])) / mass * dt)


def torque_increment(tau) -> float:
    tau = np.asarray(tau, dtype=float)
    return float(abs(tau[0]) + abs(tau[1]) + abs(tau[2]))


def violation_stats(h) -> dict:
    """Percent of inner steps with ``h < 0``, per constraint and for any constraint.

    ``h`` is an (n_steps x n_constraints) array; NaN entries (disabled constraints)
    never count as violations.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] == 0:
        raise EmptySample("need at least one inner step")
    with np.errstate(invalid="ignore"):
        viol = h < 0.0
    n = h.shape[0]
    out = {"Any": 100.0 * float(np.count_nonzero(viol.any(axis=1))) / n}
    for k, cid in enumerate(CONSTRAINT_IDS):
        out[cid] = 100.0 * float(np.count_nonzero(viol[:, k])) / n
    return out


@dataclass(frozen=True)
class EpisodeMetrics:
    inspected_weight: float
    total_reward: float
    episode_length: float
    delta_v: float
    total_torque: float
    delta_v_desired: float
    total_torque_desired: float
    violation_pct: dict
    termination: str
    min_separation: float
    steps: int

    def to_dict(self) -> dict:
        return asdict(self)


def episode_metrics(trace: EpisodeTrace, sep_radius: float = 15.0) -> EpisodeMetrics:
    """Metrics recomputed from a trace (the only place metrics are computed).

    Applied-control columns (``delta_v``, ``total_torque``) sum over every simulated
    second. The desired-control columns follow the reward: thrust counts for the
    seconds actually flown in each policy step, torque once per policy step.
    """
    n = trace.n
    if n == 0:
        raise EmptySample("trace has no records")
    dt, m = trace.dt, trace.mass
    ua = trace.u_act
    dv = 0.0
    tq = 0.0
    for i in range(n):
        dv += delta_v_increment(ua[i, :3], m, dt)
        tq += torque_increment(ua[i, 3:])
    outer = trace.outer
    ug = trace.u_agent
    dvd = 0.0
    tqd = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and outer[j] == outer[i]:
            j += 1
        dvd += delta_v_increment(ug[i, :3], m, dt * (j - i))
        tqd += torque_increment(ug[i, 3:])
        i = j
    rm = trace.reward_matrix()
    total = float(sum(float(sum(row)) for row in rm))
    seps = np.linalg.norm(trace.x[:, 0:3], axis=1) - sep_radius
    return EpisodeMetrics(
        inspected_weight=float(trace.w_p[-1]),
        total_reward=total,
        episode_length=float(trace.t[-1] - trace.x0[16]),
        delta_v=dv,
        total_torque=tq,
        delta_v_desired=dvd,
        total_torque_desired=tqd,
        violation_pct=violation_stats(trace.h),
        termination=trace.termination,
        min_separation=float(min(seps.min(), np.linalg.norm(trace.x0[0:3]) - sep_radius)),
        steps=n,
    )


def iqm(samples) -> float:
    """Interquartile mean: average over the middle 50% of the probability mass.

    Each sample owns an equal share ``1/n`` of the mass; samples straddling the 25% or
    75% boundary contribute the fraction of their share that falls inside.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise EmptySample("iqm of an empty sample")
    lo = np.arange(n) / n
    hi = (np.arange(n) + 1) / n
    w = np.clip(np.minimum(hi, 0.75) - np.maximum(lo, 0.25), 0.0, None)
    return float(np.dot(w, x) / 0.5)


def bootstrap_ci(samples, confidence: float = 0.95, resamples: int = 10000, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the IQM.

    The interval is widened, if needed, to include the point IQM (the percentile
    interval can miss it for tiny or heavily tied samples).
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise EmptySample("bootstrap of an empty sample")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(resamples, n))
    res = np.sort(x[idx], axis=1)
    lo_m = np.arange(n) / n
    hi_m = (np.arange(n) + 1) / n
    w = np.clip(np.minimum(hi_m, 0.75) - np.maximum(lo_m, 0.25), 0.0, None) / 0.5
    stats = res @ w
    a = (1.0 - confidence) / 2
    lo, hi = np.quantile(stats, [a, 1.0 - a])
    point = iqm(x)
    return float(min(lo, point)), float(max(hi, point))


@dataclass(frozen=True)
class BatchSummary:
    """Per-metric IQM, bootstrap interval and mean, plus mean violation percentages."""

    n_episodes: int
    metrics: dict
    violation_mean: dict
    terminations: dict

    def to_dict(self) -> dict:
        return asdict(self)


_SUMMARY_METRICS = ("inspected_weight", "total_reward", "episode_length", "delta_v", "total_torque", "delta_v_desired", "total_torque_desired")


def summarize(episodes: list, resamples: int = 10000, seed: int = 0) -> BatchSummary:
    if not episodes:
        raise EmptySample("no episodes")
    out = {}
    for name in _SUMMARY_METRICS + ("violation_any",):
        if name == "violation_any":
            vals = np.array([e.violation_pct["Any"] for e in episodes])
        else:
            vals = np.array([getattr(e, name) for e in episodes])
        lo, hi = bootstrap_ci(vals, resamples=resamples, seed=seed)
        out[name] = {"iqm": iqm(vals), "ci_lo": lo, "ci_hi": hi, "mean": float(vals.mean())}
    vmean = {row: float(np.mean([e.violation_pct[row] for e in episodes])) for row in VIOLATION_ROWS}
    terms = {}
    for e in episodes:
        terms[e.termination] = terms.get(e.termination, 0) + 1
    return BatchSummary(len(episodes), out, vmean, dict(sorted(terms.items())))


def format_summary(s: BatchSummary) -> str:
    lines = [f"episodes: {s.n_episodes}", "", f"{'metric':<22}{'IQM':>14}{'95% CI':>30}{'mean':>14}"]
    for name, d in s.metrics.items():
        ci = f"[{d['ci_lo']:.6g}, {d['ci_hi']:.6g}]"
        lines.append(f"{name:<22}{d['iqm']:>14.6g}{ci:>30}{d['mean']:>14.6g}")
    lines += ["", f"{'mean violation %':<28}{'':>4}"]
    for row in VIOLATION_ROWS:
        lines.append(f"{_ROW_LABELS[row]:<28}{s.violation_mean[row]:>10.4f}")
    lines += ["", "terminations: " + ", ".join(f"{k}={v}" for k, v in s.terminations.items())]
    return "\n".join(lines)
