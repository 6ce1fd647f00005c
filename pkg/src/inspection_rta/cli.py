"""Command-line front end: ``check-filter``, ``episode``, ``batch``, ``dump-defaults``.

Exit codes: 0 success, 1 safety or acceptance failure, 2 usage or config error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import _layout as L
from .bridge import BridgeError, ExternalPolicy
from .config import CONSTRAINT_IDS, ConfigError, RunConfig, dump_config, load_config
from .controllers import LqrPdPolicy, RandomPolicy, ZeroPolicy
from .dynamics import NonFiniteState
from .env import InitFeasibilityExhausted, run_episode
from .metrics import episode_metrics, format_summary, summarize
from .trace import read_jsonl, write_csv, write_jsonl

__all__ = [
    "EXIT_OK",
    "EXIT_SAFETY",
    "EXIT_USAGE",
    "EXIT_RUNTIME",
    "make_policy",
    "run_check_filter",
    "check_report",
    "run_batch",
    "main",
]

EXIT_OK = 0
EXIT_SAFETY = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

CHECK_DURATION = 2000.0
SLACK_TOL = 1e-6
OPTIMAL_FRACTION = 0.99
POLICIES = ("lqr-pd", "zero", "random", "external:<cmd>")

_RUNTIME_ERRORS = (BridgeError, NonFiniteState, InitFeasibilityExhausted)


class UsageError(ValueError):
    pass


def make_policy(spec: str, model, seed: int = 0):
    """Build a policy from its command-line name."""
    if spec == "lqr-pd":
        return LqrPdPolicy(model=model)
    if spec == "zero":
        return ZeroPolicy()
    if spec == "random":
        return RandomPolicy(seed=seed, model=model)
    if spec.startswith("external:") and spec[len("external:") :].strip():
        return ExternalPolicy(spec[len("external:") :])
    raise UsageError(f"unknown policy {spec!r}; choose one of {', '.join(POLICIES)}")


def _episode(cfg: RunConfig, policy_spec: str, seed: int, max_policy_steps=None):
    model = L.Model.from_config(cfg)
    policy = make_policy(policy_spec, model, seed)
    try:
        return run_episode(policy, model, seed=seed, max_policy_steps=max_policy_steps)
    finally:
        if hasattr(policy, "close"):
            policy.close()


def _write_trace(trace, out: Path, stem: str, cfg: RunConfig) -> Path:
    # the policy name stays out of the header so equivalent policies give identical files
    header = {"sep_radius": cfg.episode.crash_radius}
    path = write_jsonl(trace, out / f"{stem}.jsonl", header)
    if cfg.output.write_csv:
        write_csv(trace, out / f"{stem}.csv")
    return path


# ---------------------------------------------------------------- check-filter


def run_check_filter(cfg: RunConfig, seed: int, policy_spec: str = "lqr-pd", duration: float = CHECK_DURATION):
    """Fly the boundary-pushing scenario for ``duration`` seconds (or until termination)."""
    steps = math.ceil(duration / cfg.episode.policy_period)
    return _episode(cfg, policy_spec, seed, max_policy_steps=steps)


def check_report(trace, cfg: RunConfig) -> dict:
    """Pass/fail summary of a check-filter trace.

    The run passes when hard rows (slack weight 0) keep ``h >= 0`` at every step, the
    raw distance to the chief stays non-negative and, with the filter on, at least 99%
    of the solves are Optimal. Slacked rows are reported but do not decide the exit
    code: ``min_slacked_bc`` is the smallest raw ``BC`` and ``slack_free`` says whether
    it stayed above -1e-6; ``min_slacked_residual`` is the smallest ``BC - delta``,
    i.e. how well the relaxed rows the solver was given were met.
    """
    model = L.Model.from_config(cfg)
    CP = model.CP
    enabled = CP[:, L.CP_EN] > 0
    hard = enabled & (CP[:, L.CP_W] <= 0)
    slacked = enabled & (CP[:, L.CP_W] > 0)
    with np.errstate(invalid="ignore"):
        viol = trace.h < 0
    sep = np.linalg.norm(trace.x[:, 0:3], axis=1) - cfg.episode.crash_radius
    per = {}
    for k, cid in enumerate(CONSTRAINT_IDS):
        col = trace.h[:, k]
        per[cid] = {
            "hard": bool(hard[k]),
            "enabled": bool(enabled[k]),
            "min_h": float(np.nanmin(col)) if enabled[k] else None,
            "violations": int(np.count_nonzero(viol[:, k])),
        }
    hard_ok = not np.any(viol[:, hard]) and bool(sep.min() >= 0.0)
    rep = {
        "seed": trace.seed,
        "rta": trace.rta,
        "steps": trace.n,
        "duration": float(trace.t[-1] - trace.x0[L.X_TIME]),
        "termination": trace.termination,
        "min_separation": float(sep.min()),
        "hard_ok": bool(hard_ok),
        "constraints": per,
    }
    ok = hard_ok
    if trace.rta:
        raw = trace.bc[:, slacked]
        resid = (trace.bc - trace.slack)[:, slacked]
        worst_raw = float(np.nanmin(raw)) if raw.size else 0.0
        worst = float(np.nanmin(resid)) if resid.size else 0.0
        frac = float(np.mean(trace.status == L.ST_OPTIMAL))
        counts = {name: int(np.count_nonzero(trace.status == i)) for i, name in enumerate(L.STATUS_NAMES)}
        rep.update(
            min_slacked_bc=worst_raw,
            slack_free=bool(worst_raw >= -SLACK_TOL),
            min_slacked_residual=worst,
            optimal_fraction=frac,
            status_counts=counts,
            solver_ok=bool(frac >= OPTIMAL_FRACTION),
        )
        ok = ok and rep["solver_ok"]
    rep["passed"] = bool(ok)
    return rep


def _format_check(rep: dict) -> str:
    lines = [
        f"check-filter seed={rep['seed']} rta={'on' if rep['rta'] else 'off'}: {'PASS' if rep['passed'] else 'FAIL'}",
        f"  steps {rep['steps']}, simulated {rep['duration']:.0f} s, termination {rep['termination']}",
        f"  min separation {rep['min_separation']:.6g} m",
    ]
    if rep["rta"]:
        lines.append(f"  optimal solves {100 * rep['optimal_fraction']:.2f}%  {rep['status_counts']}")
        lines.append(f"  slacked rows: min BC {rep['min_slacked_bc']:.3e}, min BC - slack {rep['min_slacked_residual']:.3e}")
    lines.append(f"  {'constraint':<12}{'kind':>8}{'min h':>16}{'violations':>12}")
    for cid, d in rep["constraints"].items():
        kind = "off" if not d["enabled"] else ("hard" if d["hard"] else "slacked")
        mh = "-" if d["min_h"] is None else f"{d['min_h']:.6g}"
        lines.append(f"  {cid:<12}{kind:>8}{mh:>16}{d['violations']:>12}")
    return "\n".join(lines)


def cmd_check_filter(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    policy = args.policy or "lqr-pd"
    trace = run_check_filter(cfg, seed, policy)
    rep = check_report(trace, cfg)
    out = _out(args, cfg)
    _write_trace(trace, out, f"check_filter_seed{seed}", cfg)
    (out / f"check_filter_seed{seed}.json").write_text(json.dumps(rep, indent=2) + "\n")
    print(_format_check(rep))
    return EXIT_OK if rep["passed"] else EXIT_SAFETY


# ---------------------------------------------------------------- episode / batch


def cmd_episode(args, cfg: RunConfig) -> int:
    seed = _seed(args, cfg)
    policy = args.policy or "zero"
    trace = _episode(cfg, policy, seed)
    m = episode_metrics(trace, cfg.episode.crash_radius)
    out = _out(args, cfg)
    path = _write_trace(trace, out, f"episode_seed{seed}", cfg)
    (out / f"episode_seed{seed}_metrics.json").write_text(json.dumps(m.to_dict() | {"policy": policy}, indent=2) + "\n")
    print(f"episode seed={seed} policy={policy}: {m.termination} after {m.episode_length:.0f} s")
    print(f"  inspected weight {m.inspected_weight:.4f}, total reward {m.total_reward:.6g}")
    print(f"  delta-v {m.delta_v:.6g} m/s, torque {m.total_torque:.6g} N m, any violation {m.violation_pct['Any']:.4f}%")
    print(f"  trace {path}")
    return EXIT_OK


def _batch_one(job):
    cfg, policy, seed = job
    try:
        trace = _episode(cfg, policy, seed)
        return seed, episode_metrics(trace, cfg.episode.crash_radius), None
    except _RUNTIME_ERRORS as exc:
        return seed, None, f"{type(exc).__name__}: {exc}"


def run_batch(cfg: RunConfig, seeds, policy_spec: str = "zero", jobs: int = 1):
    """Metrics per seed in seed order, plus ``{seed: error}`` for failed episodes."""
    work = [(cfg, policy_spec, int(s)) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_one, work))
    else:
        results = [_batch_one(w) for w in work]
    ok = [m for _, m, e in results if e is None]
    errors = {s: e for s, _, e in results if e is not None}
    return ok, errors


def cmd_batch(args, cfg: RunConfig) -> int:
    policy = args.policy or "zero"
    if args.episodes is not None:
        if args.episodes < 1:
            raise UsageError("--episodes must be at least 1")
        seeds = [_seed(args, cfg) + i for i in range(args.episodes)]
    else:
        seeds = list(cfg.seeds)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    eps, errors = run_batch(cfg, seeds, policy, args.jobs)
    out = _out(args, cfg)
    for s, e in errors.items():
        print(f"episode seed={s} failed: {e}", file=sys.stderr)
    if not eps:
        return EXIT_RUNTIME
    s = summarize(eps)
    text = format_summary(s)
    (out / "batch_summary.txt").write_text(text + "\n")
    doc = s.to_dict() | {
        "policy": policy,
        "rta": cfg.episode.rta_enabled,
        "seeds": seeds,
        "failed": {str(k): v for k, v in errors.items()},
        "episodes": [e.to_dict() for e in eps],
    }
    (out / "batch_summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(text)
    if errors:
        return EXIT_RUNTIME
    model = L.Model.from_config(cfg)
    hard = [cid for k, cid in enumerate(CONSTRAINT_IDS) if model.CP[k, L.CP_EN] > 0 and model.CP[k, L.CP_W] <= 0]
    if cfg.episode.rta_enabled and any(s.violation_mean[cid] > 0.0 for cid in hard):
        return EXIT_SAFETY
    return EXIT_OK


def cmd_dump_defaults(args, cfg: RunConfig) -> int:
    sys.stdout.write(dump_config(RunConfig()))
    return EXIT_OK


def cmd_recompute(args, cfg: RunConfig) -> int:
    trace = read_jsonl(args.trace)
    hdr = json.loads(Path(args.trace).open().readline())
    m = episode_metrics(trace, float(hdr.get("sep_radius", cfg.episode.crash_radius)))
    print(json.dumps(m.to_dict(), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- plumbing


def _seed(args, cfg: RunConfig) -> int:
    return cfg.episode.seed if args.seed is None else args.seed


def _out(args, cfg: RunConfig) -> Path:
    out = Path(args.out if args.out is not None else cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML file layered over the built-in defaults")
    p.add_argument("--seed", type=int, help="episode seed (batch: base seed)")
    p.add_argument("--rta", choices=("on", "off"), help="override episode.rta_enabled")
    p.add_argument("--policy", help=f"one of {', '.join(POLICIES)}")
    p.add_argument("--out", help="output directory (default: output.out_dir)")
    p.add_argument("--episodes", type=int, help="batch size (default: the config seed list)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for batch")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="inspection-rta", description=__doc__.splitlines()[0])
    ap.add_argument("--dump-defaults", action="store_true", help="print the default config and exit")
    sub = ap.add_subparsers(dest="command")
    for name, fn, hlp in (
        ("check-filter", cmd_check_filter, "boundary-pushing safety run"),
        ("episode", cmd_episode, "one episode with traces and metrics"),
        ("batch", cmd_batch, "seeded episodes with IQM summary"),
        ("dump-defaults", cmd_dump_defaults, "print the default config"),
    ):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.set_defaults(func=fn)
    p = sub.add_parser("recompute", help="recompute episode metrics from a trace file")
    _common(p)
    p.add_argument("trace")
    p.set_defaults(func=cmd_recompute)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.dump_defaults:
        return cmd_dump_defaults(args, RunConfig())
    if args.command is None:
        ap.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        if args.rta is not None:
            cfg = cfg.with_updates(episode={"rta_enabled": args.rta == "on"})
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
