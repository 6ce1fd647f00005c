"""Flat float64 layouts shared by the compiled kernels.

The compiled code cannot take pydantic objects, so the run config is packed into three
arrays: ``P`` (vehicle, thermal, power, episode scalars), ``CP`` (one row per safety
constraint) and ``S`` (solver settings). :class:`Model` owns one packed copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CONSTRAINT_IDS, RunConfig

# state vector
X_P = 0
X_V = 3
X_Q = 6
X_W = 10
X_T = 13
X_E = 14
X_SUN = 15
X_TIME = 16
NX = 17

NU = 6
NC = len(CONSTRAINT_IDS)

# constraint ids (row order of CP and of every per-constraint array)
C_COLLISION = 0
C_SPEED = 1
C_KIZ = 2
C_PSM = 3
C_VX = 4
C_VY = 5
C_VZ = 6
C_ATTEZ = 7
C_TEMP = 8
C_BATT = 9
C_W1 = 10
C_W2 = 11
C_W3 = 12

# P layout
(
    P_M,
    P_N,
    P_J1,
    P_J2,
    P_J3,
    P_FMAX,
    P_TAUMAX,
    P_TH_MN,
    P_TH_A,
    P_TH_CP,
    P_TH_ALPHA,
    P_TH_EPS,
    P_TH_AF,
    P_TH_S,
    P_TH_SIGMA,
    P_TH_TE,
    P_TH_VF,
    P_TH_NX,
    P_TH_NY,
    P_TH_NZ,
    P_PW_PI,
    P_PW_ID,
    P_PW_POUT,
    P_PW_A,
    P_PW_NX,
    P_PW_NY,
    P_PW_NZ,
    P_AMAX,
    P_CRASH,
    P_BOUND,
    P_SUCCESS,
    P_EFLOOR,
    P_TEND,
    P_DT,
    P_HALF_FOV,
    P_RTA,
) = range(36)
NP = 36

# CP columns
CP_C1 = 0
CP_C3 = 1
CP_W = 2
CP_EN = 3
CP_A0 = 4
CP_A1 = 5
CP_A2 = 6
CP_A3 = 7
NCP = 8

# S layout
S_EPS_ABS = 0
S_EPS_REL = 1
S_MAX_ITER = 2
S_RHO = 3
S_SIGMA = 4
S_RELAX = 5
S_SCALING = 6
S_POLISH = 7
S_WARM = 8
S_CHANGE_TOL = 9
NS = 10

# solver status codes
ST_OPTIMAL = 0
ST_MAXITER = 1
ST_INFEASIBLE = 2
STATUS_NAMES = ("Optimal", "MaxIter", "Infeasible")

# termination codes
TERM_RUNNING = 0
TERM_SUCCESS = 1
TERM_CRASH = 2
TERM_OOB = 3
TERM_TIMEOUT = 4
TERM_POWER = 5
TERM_NAMES = ("Running", "Success", "Crash", "OutOfBounds", "Timeout", "PowerDepleted")


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def pack_params(cfg: RunConfig) -> np.ndarray:
    veh, th, pw, ep, cons = cfg.vehicle, cfg.thermal, cfg.power, cfg.episode, cfg.constraints
    P = np.zeros(NP)
    P[P_M] = veh.m
    P[P_N] = veh.n
    P[P_J1], P[P_J2], P[P_J3] = veh.J1, veh.J2, veh.J3
    P[P_FMAX] = veh.F_max
    P[P_TAUMAX] = veh.torque_limit
    P[P_TH_MN] = th.m_n
    P[P_TH_A] = th.A
    P[P_TH_CP] = th.c_p
    P[P_TH_ALPHA] = th.alpha_abs
    P[P_TH_EPS] = th.eps
    P[P_TH_AF] = th.A_f
    P[P_TH_S] = th.S
    P[P_TH_SIGMA] = th.sigma
    P[P_TH_TE] = th.T_E
    P[P_TH_VF] = th.view_factor_scale
    P[P_TH_NX : P_TH_NZ + 1] = _unit(th.n_hat_body)
    P[P_PW_PI] = pw.P_I
    P[P_PW_ID] = pw.I_d
    P[P_PW_POUT] = pw.P_out
    P[P_PW_A] = pw.A
    P[P_PW_NX : P_PW_NZ + 1] = _unit(pw.panel_normal_body)
    P[P_AMAX] = cons.braking_accel(veh)
    P[P_CRASH] = ep.crash_radius
    P[P_BOUND] = ep.bound_radius
    P[P_SUCCESS] = ep.success_weight
    P[P_EFLOOR] = ep.power_floor
    P[P_TEND] = ep.max_time
    P[P_DT] = ep.inner_period
    P[P_HALF_FOV] = math.radians(ep.sensor_fov_deg) / 2
    P[P_RTA] = 1.0 if ep.rta_enabled else 0.0
    return P


def pack_constraints(cfg: RunConfig) -> np.ndarray:
    n = cfg.vehicle.n
    CP = np.zeros((NC, NCP))
    for i, cid in enumerate(CONSTRAINT_IDS):
        s = cfg.constraints.settings(cid)
        CP[i, CP_C1] = s.c1
        CP[i, CP_C3] = s.c3
        CP[i, CP_W] = s.slack_weight
        CP[i, CP_EN] = 1.0 if s.enabled else 0.0
        if i in (C_COLLISION,):
            CP[i, CP_A0] = s.r_d + s.r_c
        elif i == C_SPEED:
            CP[i, CP_A0] = s.nu0
            CP[i, CP_A1] = s.nu1_over_n * n
        elif i == C_KIZ:
            CP[i, CP_A0] = s.r_max
        elif i == C_PSM:
            CP[i, CP_A0] = s.r_d + s.r_c
            CP[i, CP_A1] = s.horizon
            CP[i, CP_A2] = s.grid_step
        elif i in (C_VX, C_VY, C_VZ):
            CP[i, CP_A0] = s.v_max
        elif i == C_ATTEZ:
            CP[i, CP_A0] = math.radians(s.fov_deg) / 2 + math.radians(s.beta_deg)
            CP[i, CP_A1 : CP_A3 + 1] = _unit(s.boresight_body)
        elif i == C_TEMP:
            CP[i, CP_A0] = s.T_max
            CP[i, CP_A1] = s.delta0
            CP[i, CP_A2] = s.delta1
        elif i == C_BATT:
            CP[i, CP_A0] = s.E_min
            CP[i, CP_A1] = s.delta2
        else:
            CP[i, CP_A0] = math.radians(s.omega_max_deg)
    return CP


def pack_solver(cfg: RunConfig) -> np.ndarray:
    s = cfg.solver
    S = np.zeros(NS)
    S[S_EPS_ABS] = s.eps_abs
    S[S_EPS_REL] = s.eps_rel
    S[S_MAX_ITER] = s.max_iter
    S[S_RHO] = s.rho
    S[S_SIGMA] = s.sigma
    S[S_RELAX] = s.relax
    S[S_SCALING] = s.scaling_iters
    S[S_POLISH] = 1.0 if s.polish else 0.0
    S[S_WARM] = 1.0 if s.warm_start else 0.0
    S[S_CHANGE_TOL] = s.change_tol
    return S


@dataclass(frozen=True, eq=False)
class Model:
    """A run config together with its packed arrays."""

    cfg: RunConfig
    P: np.ndarray
    CP: np.ndarray
    S: np.ndarray

    @classmethod
    def from_config(cls, cfg: RunConfig | None = None) -> "Model":
        cfg = cfg if cfg is not None else RunConfig()
        P, CP, S = pack_params(cfg), pack_constraints(cfg), pack_solver(cfg)
        return cls(cfg, P, CP, S)


_DEFAULT: Model | None = None


def default_model() -> Model:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Model.from_config()
    return _DEFAULT


def resolve(model: Model | RunConfig | None) -> Model:
    if model is None:
        return default_model()
    if isinstance(model, RunConfig):
        return Model.from_config(model)
    return model
