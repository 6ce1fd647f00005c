"""Inspection episode: randomized reset, dual-rate step loop, observation, reward.

The policy acts every ``policy_period`` seconds. Inside one policy step the safety
filter and the dynamics run every ``inner_period`` seconds; the first inner step
filters the policy command and later inner steps filter the previous safe control.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.cluster.vq import kmeans2

from . import _layout as L
from .constraints import _eval_all, _rows, psm_h
from .dynamics import NonFiniteState, SimState, _all_finite, _dcm, _rk4
from .asif import NXMAX, _filter_kernel, _limits
from .inspection import PointSet, _update, generate_points
from .metrics import delta_v_increment, torque_increment
from .trace import REWARD_TERMS, EpisodeTrace

__all__ = [
    "OBS_SIZE",
    "OBS_LABELS",
    "EpisodeFinished",
    "InitFeasibilityExhausted",
    "StepResult",
    "InspectionEnv",
    "termination_check",
    "run_episode",
]

OBS_SIZE = 26
OBS_LABELS = (
    ["p_norm", "p_hat_x", "p_hat_y", "p_hat_z", "v_norm", "v_hat_x", "v_hat_y", "v_hat_z"]
    + ["w_x", "w_y", "w_z", "E", "T", "sun_x", "sun_y", "sun_z", "sun_dot_p"]
    + ["prio_x", "prio_y", "prio_z", "prio_dot_p", "ups_x", "ups_y", "ups_z", "ups_dot_p", "w_p"]
)


class EpisodeFinished(RuntimeError):
    pass


class InitFeasibilityExhausted(RuntimeError):
    pass


# ---------------------------------------------------------------- compiled kernels


@njit(cache=True)
def _termination(x, wp, P):
    r = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
    if r < P[L.P_CRASH]:
        return L.TERM_CRASH
    if r > P[L.P_BOUND]:
        return L.TERM_OOB
    if x[L.X_E] <= P[L.P_EFLOOR]:
        return L.TERM_POWER
    if wp >= P[L.P_SUCCESS]:
        return L.TERM_SUCCESS
    if x[L.X_TIME] >= P[L.P_TEND]:
        return L.TERM_TIMEOUT
    return L.TERM_RUNNING


@njit(cache=True)
def _run_inner(
    x0, u_agent, n_inner, rta, P, CP, S, ws_x, ws_ok,
    pos, weights, inspected, bore, cos_half, wp0,
    out_x, out_uin, out_uact, out_h, out_bc, out_delta, out_status, out_iters, out_new, out_wp,
):
    """Run up to ``n_inner`` inner steps. Returns (steps done, termination code, error flag)."""
    dt = P[L.P_DT]
    lim = _limits(P)
    G = np.zeros((L.NC, L.NU))
    aff = np.zeros(L.NC)
    hv = np.zeros(L.NC)
    psi = np.zeros(L.NC)
    ts = np.zeros(1)
    h = np.zeros(L.NC)
    u_in = u_agent.copy()
    u = np.zeros(L.NU)
    delta = np.zeros(L.NC)
    bc = np.zeros(L.NC)
    sun = np.zeros(3)
    x = x0.copy()
    wp = wp0
    term = L.TERM_RUNNING
    for i in range(n_inner):
        if rta:
            _rows(x, P, CP, G, aff, hv, psi, ts)
            st, it, mod, bad = _filter_kernel(G, aff, CP, P, S, u_in, ws_x, ws_ok, u, delta, bc)
        else:
            for j in range(L.NU):
                u[j] = min(max(u_in[j], -lim[j]), lim[j])
            for k in range(L.NC):
                bc[k] = np.nan
                delta[k] = 0.0
            st = -1
            it = 0
        for j in range(L.NU):
            out_uin[i, j] = u_in[j]
            out_uact[i, j] = u[j]
        xn = _rk4(x, u, dt, P)
        if not _all_finite(xn):
            return i, term, 1
        x = xn
        _eval_all(x, P, CP, h)
        for k in range(L.NC):
            out_h[i, k] = h[k] if CP[k, L.CP_EN] > 0.0 else np.nan
            out_bc[i, k] = bc[k]
            out_delta[i, k] = delta[k]
        sun[0] = math.cos(x[L.X_SUN])
        sun[1] = math.sin(x[L.X_SUN])
        gained, cnt = _update(pos, weights, inspected, x[0:3], x[6:10], sun, bore, cos_half, out_new[i])
        wp += gained
        # inspected weight is a sum of fixed weights; clip round-off above one
        if wp > 1.0:
            wp = 1.0
        for j in range(L.NX):
            out_x[i, j] = x[j]
        out_status[i] = st
        out_iters[i] = it
        out_wp[i] = wp
        for j in range(L.NU):
            u_in[j] = u[j]
        term = _termination(x, wp, P)
        if term != L.TERM_RUNNING:
            return i + 1, term, 0
    return n_inner, term, 0


# ---------------------------------------------------------------- python API


@dataclass(frozen=True)
class StepResult:
    """Outcome of one policy step.

    ``safety`` maps constraint name to ``(h, violated)`` at the last simulated second.
    """

    obs: np.ndarray
    reward: float
    reward_breakdown: dict
    done: bool
    termination: str
    safety: dict
    state: SimState
    inner_steps: int


def _sph(r, a, e) -> np.ndarray:
    return np.array([r * math.cos(a) * math.cos(e), r * math.sin(a) * math.cos(e), r * math.sin(e)])


def _unit_or_zero(v) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0.0 else np.zeros(3)


@njit(cache=True)
def _unit3(v, out):
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    for i in range(3):
        out[i] = v[i] / n if n > 0.0 else 0.0
    return n


@njit(cache=True)
def _obs_kernel(x, pr, ups, wp, norms, w_max, o):
    """Fill the observation vector ``o``; body-frame vectors use R(q)^T."""
    R = _dcm(x[6:10])
    ph = np.empty(3)
    vh = np.empty(3)
    npos = _unit3(x[0:3], ph)
    nvel = _unit3(x[3:6], vh)
    sun = np.array([math.cos(x[15]), math.sin(x[15]), 0.0])
    o[0] = npos / norms[0]
    o[4] = nvel / norms[1]
    for i in range(3):
        o[1 + i] = R[0, i] * ph[0] + R[1, i] * ph[1] + R[2, i] * ph[2]
        o[5 + i] = R[0, i] * vh[0] + R[1, i] * vh[1] + R[2, i] * vh[2]
        o[8 + i] = x[10 + i] / w_max[i]
        o[13 + i] = R[0, i] * sun[0] + R[1, i] * sun[1]
        o[17 + i] = R[0, i] * pr[0] + R[1, i] * pr[1] + R[2, i] * pr[2]
        o[21 + i] = R[0, i] * ups[0] + R[1, i] * ups[1] + R[2, i] * ups[2]
    o[11] = x[14] / norms[2]
    o[12] = x[13] / norms[3]
    o[16] = sun[0] * ph[0] + sun[1] * ph[1]
    o[20] = pr[0] * ph[0] + pr[1] * ph[1] + pr[2] * ph[2]
    o[24] = ups[0] * ph[0] + ups[1] * ph[1] + ups[2] * ph[2]
    o[25] = wp


@njit(cache=True)
def _alignment(x, bore):
    """Cosine between the boresight (Hill frame) and the direction to the chief."""
    R = _dcm(x[6:10])
    ph = np.empty(3)
    _unit3(x[0:3], ph)
    a = 0.0
    for i in range(3):
        a -= (R[i, 0] * bore[0] + R[i, 1] * bore[1] + R[i, 2] * bore[2]) * ph[i]
    return a


def termination_check(state, wp: float, model=None) -> str:
    """Termination for a state and inspected weight; priority Crash, OutOfBounds,
    PowerDepleted, Success, Timeout."""
    mdl = L.resolve(model)
    x = state.to_array() if isinstance(state, SimState) else np.asarray(state, dtype=float)
    return L.TERM_NAMES[_termination(x, float(wp), mdl.P)]


class InspectionEnv:
    """One episode owner: state, inspection points, filter warm start and trace."""

    def __init__(self, model=None, rta: bool | None = None):
        self.model = L.resolve(model)
        self.cfg = self.model.cfg
        self.ep = self.cfg.episode
        self.rta = self.ep.rta_enabled if rta is None else bool(rta)
        self.n_inner = self.ep.inner_steps
        self.bore = self.model.CP[L.C_ATTEZ, L.CP_A1 : L.CP_A3 + 1].copy()
        self.cos_half = math.cos(math.radians(self.ep.sensor_fov_deg) / 2)
        self.w_max = self.model.CP[L.C_W1 : L.C_W3 + 1, L.CP_A0].copy()
        ep = self.ep
        self._obs_norms = np.array([ep.obs_norm_p, ep.obs_norm_v, ep.obs_norm_E, ep.obs_norm_T])
        self.E_min = self.model.CP[L.C_BATT, L.CP_A0]
        self.x = None
        self.points = None
        self.trace = None
        self.done = True
        self.termination = L.TERM_NAMES[L.TERM_RUNNING]

    # ------------------------------------------------------------ reset
    def _feasible(self, x) -> bool:
        G = np.zeros((L.NC, L.NU))
        aff = np.zeros(L.NC)
        hv = np.zeros(L.NC)
        psi = np.zeros(L.NC)
        _rows(x, self.model.P, self.model.CP, G, aff, hv, psi, np.zeros(1))
        en = self.model.CP[:, L.CP_EN] > 0
        return bool(np.all(hv[en] >= 0.0) and np.all(psi[en] >= 0.0))

    def sample_initial(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Initial packed state and priority vector for ``seed``."""
        ep = self.ep
        rng = np.random.default_rng(seed)
        r = rng.uniform(*ep.r_range)
        a = rng.uniform(0.0, 2 * math.pi)
        e = rng.uniform(-math.pi / 2, math.pi / 2)
        E = rng.uniform(*ep.E_range)
        T = rng.uniform(*ep.T_range)
        th = rng.uniform(0.0, 2 * math.pi)
        pa = rng.uniform(0.0, 2 * math.pi)
        pe = rng.uniform(-math.pi / 2, math.pi / 2)
        x = np.zeros(L.NX)
        x[0:3] = _sph(r, a, e)
        x[L.X_T] = T
        x[L.X_E] = E
        x[L.X_SUN] = th
        for _ in range(ep.max_init_resamples):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            x[6:10] = q
            if self._feasible(x):
                return x, _sph(1.0, pa, pe)
        raise InitFeasibilityExhausted(f"no admissible attitude after {ep.max_init_resamples} samples (seed {seed})")

    def reset(self, seed: int | None = None, x0=None):
        """Start an episode. Returns (state, points, observation)."""
        self.seed = self.ep.seed if seed is None else int(seed)
        x, prio = self.sample_initial(self.seed)
        if x0 is not None:
            x = (x0.to_array() if isinstance(x0, SimState) else np.asarray(x0, dtype=float)).copy()
        self.x = x
        ep = self.ep
        self.points = generate_points(ep.n_points, ep.sphere_radius, prio)
        self.ws_x = np.zeros(NXMAX)
        self.ws_ok = np.zeros(1, dtype=np.bool_)
        self.trace = EpisodeTrace(self.seed, float(self.model.P[L.P_M]), float(self.model.P[L.P_DT]), x.copy(), self.rta)
        self.wp = 0.0
        self.outer = 0
        self.done = False
        self.termination = L.TERM_NAMES[L.TERM_RUNNING]
        self._km_key = None
        self._km_dir = np.zeros(3)
        return self.state, self.points, self.observe()

    @property
    def state(self) -> SimState:
        return SimState.from_array(self.x)

    # ------------------------------------------------------------ observation
    def _ups_direction(self) -> np.ndarray:
        """Unit vector toward the nearest cluster of uninspected points (zero if none)."""
        ps = self.points
        key = ps.inspected.tobytes()
        if key != self._km_key:
            un = ps.positions[~ps.inspected]
            if len(un) == 0:
                cents = np.zeros((0, 3))
            else:
                k = max(1, math.ceil(len(un) / self.ep.points_per_cluster))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    cents, _ = kmeans2(un, k, minit="++", seed=self.seed)
            self._km_key = key
            self._km_cents = cents
        cents = self._km_cents
        if len(cents) == 0:
            return np.zeros(3)
        d = cents - self.x[0:3]
        return _unit_or_zero(cents[int(np.argmin(np.einsum("ij,ij->i", d, d)))])

    def observe(self) -> np.ndarray:
        o = np.empty(OBS_SIZE)
        _obs_kernel(self.x, self.points.priority_vec, self._ups_direction(), self.wp, self._obs_norms, self.w_max, o)
        return o

    # ------------------------------------------------------------ reward
    def reward(self, wp_prev: float, x_new, u_agent, u_act_block, term: int) -> dict:
        ep = self.ep
        m = self.model.P[L.P_M]
        dt = self.model.P[L.P_DT]
        k = len(u_act_block)
        if ep.reward_uses_desired_control:
            dv = delta_v_increment(u_agent[:3], m, dt * k)
            tq = torque_increment(u_agent[3:])
        else:
            dv = sum(delta_v_increment(u[:3], m, dt) for u in u_act_block)
            tq = sum(torque_increment(u[3:]) for u in u_act_block) / max(k, 1)
        align = float(_alignment(x_new, self.bore))
        succ = 0.0
        if term == L.TERM_SUCCESS:
            h, _ = psm_h(x_new, self.model, ep.success_fft_horizon, ep.success_fft_step)
            succ = ep.reward_success if h >= 0.0 else -ep.reward_success
        return {
            "points": ep.reward_points * (self.wp - wp_prev),
            "delta_v": ep.reward_delta_v * dv,
            "torque": ep.reward_torque * tq,
            "orient": ep.reward_orient_scale * math.exp(-abs(align - 1.0) / ep.reward_orient_width),
            "time": ep.reward_time if x_new[L.X_TIME] <= ep.reward_time_limit else 0.0,
            "success": succ,
            "crash": ep.reward_crash if term == L.TERM_CRASH else 0.0,
            "dist": ep.reward_dist if term == L.TERM_OOB else 0.0,
            "energy": ep.reward_energy if x_new[L.X_E] < self.E_min else 0.0,
        }

    # ------------------------------------------------------------ step
    def step(self, u_des) -> StepResult:
        if self.done:
            raise EpisodeFinished("episode has terminated; call reset()")
        ua = np.asarray(u_des.to_array() if hasattr(u_des, "to_array") else u_des, dtype=float).reshape(L.NU)
        if not np.all(np.isfinite(ua)):
            raise ValueError("policy command is not finite")
        n = self.n_inner
        ps = self.points
        npts = len(ps.weights)
        out_x = np.zeros((n, L.NX))
        out_uin = np.zeros((n, L.NU))
        out_uact = np.zeros((n, L.NU))
        out_h = np.zeros((n, L.NC))
        out_bc = np.zeros((n, L.NC))
        out_delta = np.zeros((n, L.NC))
        out_st = np.zeros(n, dtype=np.int64)
        out_it = np.zeros(n, dtype=np.int64)
        out_new = np.zeros((n, npts), dtype=np.bool_)
        out_wp = np.zeros(n)
        steps, term, err = _run_inner(
            self.x, ua, n, self.rta, self.model.P, self.model.CP, self.model.S,
            self.ws_x, self.ws_ok, ps.positions, ps.weights, ps.inspected,
            self.bore, self.cos_half, self.wp,
            out_x, out_uin, out_uact, out_h, out_bc, out_delta, out_st, out_it, out_new, out_wp,
        )
        if err:
            self.done = True
            raise NonFiniteState(f"state became non-finite at t={self.x[L.X_TIME] + steps * self.model.P[L.P_DT]}")
        s = steps
        wp_prev = self.wp
        self.x = out_x[s - 1].copy()
        self.wp = float(out_wp[s - 1])
        block = {
            "t": out_x[:s, L.X_TIME],
            "x": out_x[:s],
            "u_agent": np.broadcast_to(ua, (s, L.NU)),
            "u_des": out_uin[:s],
            "u_act": out_uact[:s],
            "h": out_h[:s],
            "bc": out_bc[:s],
            "slack": out_delta[:s],
            "status": out_st[:s],
            "iters": out_it[:s],
            "w_p": out_wp[:s],
            "outer": np.full(s, self.outer, dtype=np.int64),
        }
        newp = [[] for _ in range(s)]
        for i in np.flatnonzero(out_new[:s].any(axis=1)):
            newp[i] = np.flatnonzero(out_new[i]).tolist()
        self.trace.append_block(block, newp)
        rw = self.reward(wp_prev, self.x, ua, out_uact[:s], term)
        self.trace.reward_rows[self.trace.n - 1] = rw
        self.outer += 1
        self.termination = L.TERM_NAMES[term]
        self.done = term != L.TERM_RUNNING
        self.trace.termination = self.termination
        hl = out_h[s - 1]
        safety = {L.CONSTRAINT_IDS[k]: (float(hl[k]), bool(hl[k] < 0.0)) for k in range(L.NC)}
        obs = self.observe()
        return StepResult(obs, float(sum(rw[t] for t in REWARD_TERMS)), rw, self.done, self.termination, safety, self.state, s)


def run_episode(policy, model=None, seed: int = 0, rta: bool | None = None, max_policy_steps: int | None = None) -> EpisodeTrace:
    """Roll out ``policy`` from ``reset(seed)`` until termination.

    ``policy`` is called as ``policy(state, obs)`` and may define ``reset(state)``.
    """
    env = InspectionEnv(model, rta)
    state, _, obs = env.reset(seed)
    if hasattr(policy, "reset"):
        policy.reset(state)
    k = 0
    while not env.done:
        if max_policy_steps is not None and k >= max_policy_steps:
            break
        res = env.step(policy(state, obs))
        obs, state = res.obs, res.state
        k += 1
    return env.trace
