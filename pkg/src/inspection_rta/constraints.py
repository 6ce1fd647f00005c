"""Safety constraints as barrier functions.

Each constraint provides a value ``h(x)`` (safe iff ``h >= 0``) and a barrier-condition
row that is affine in the control, ``BC(x, u) = grad_u . u + affine``. First-order rows
use ``BC = dh/dt + alpha(h)``. Attitude, temperature and battery constraints only see
the torque through their second derivative, so their row is built on the lifted value
``psi = dh/dt + alpha(h)``:

    BC = d2h/dt2 + alpha'(h) dh/dt + alpha(psi)

with ``alpha(h) = c1 h + c3 h^3`` on both levels.

Collision and keep-in-zone use the braking-distance form
``sqrt(2 a_max (r - r_min)) +/- (p_hat . v)`` so that thrust appears in the first
derivative. The passive-safety constraint takes the minimum distance along the
unforced relative-motion trajectory over a finite horizon, sampled on a grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _layout as L
from .config import CONSTRAINT_IDS
from .dynamics import SimState, _cross, _cw_accel, _dcm, _wdot
from .thermal import KELVIN, _edot, _heat, _heat_rate_coeffs

__all__ = [
    "ConstraintId",
    "UnknownConstraint",
    "DegenerateGradient",
    "InvalidCoefficients",
    "BarrierRow",
    "RELATIVE_DEGREE",
    "DEGENERATE_TOL",
    "strengthening",
    "eval_h",
    "eval_all",
    "barrier_row",
    "barrier_rows",
    "separation",
    "fft_position",
    "fft_matrices",
    "psm_h",
]

DEGENERATE_TOL = 1e-12
_SIGMA_FLOOR = 1e-9


class ConstraintId(enum.IntEnum):
    Collision = 0
    Speed = 1
    KIZ = 2
    PSM = 3
    VxLim = 4
    VyLim = 5
    VzLim = 6
    AttEZ = 7
    Temp = 8
    Batt = 9
    W1Lim = 10
    W2Lim = 11
    W3Lim = 12


assert tuple(c.name for c in ConstraintId) == CONSTRAINT_IDS

RELATIVE_DEGREE = {c: (2 if c in (ConstraintId.AttEZ, ConstraintId.Temp, ConstraintId.Batt) else 1) for c in ConstraintId}


class UnknownConstraint(KeyError):
    pass


class DegenerateGradient(ArithmeticError):
    """The barrier row has no control authority and is violated at this state."""


class InvalidCoefficients(ValueError):
    pass


# ---------------------------------------------------------------- compiled kernels


@njit(cache=True)
def _alpha(c1, c3, h):
    return c1 * h + c3 * h * h * h


@njit(cache=True)
def _dalpha(c1, c3, h):
    return c1 + 3.0 * c3 * h * h


@njit(cache=True)
def _fft_mats(n, t):
    c = math.cos(n * t)
    s = math.sin(n * t)
    return _fft_mats_cs(n, t, c, s)


@njit(cache=True)
def _fft_mats_cs(n, t, c, s):
    Prr = np.zeros((3, 3))
    Prv = np.zeros((3, 3))
    nt = n * t
    Prr[0, 0] = 4.0 - 3.0 * c
    Prr[1, 0] = 6.0 * (s - nt)
    Prr[1, 1] = 1.0
    Prr[2, 2] = c
    Prv[0, 0] = s / n
    Prv[0, 1] = 2.0 * (1.0 - c) / n
    Prv[1, 0] = -2.0 * (1.0 - c) / n
    Prv[1, 1] = (4.0 * s - 3.0 * nt) / n
    Prv[2, 2] = s / n
    return Prr, Prv


@njit(cache=True)
def _fft_point(p, v, n, t, c, s):
    nt = n * t
    x = (4.0 - 3.0 * c) * p[0] + s / n * v[0] + 2.0 * (1.0 - c) / n * v[1]
    y = 6.0 * (s - nt) * p[0] + p[1] - 2.0 * (1.0 - c) / n * v[0] + (4.0 * s - 3.0 * nt) / n * v[1]
    z = c * p[2] + s / n * v[2]
    return x, y, z


@njit(cache=True)
def _psm_min(p, v, n, horizon, step):
    """Minimum free-flight distance on the grid 0, step, ..., horizon.

    Returns (d_min, t_star). Ties resolve to the earliest time. Sines and cosines are
    advanced by angle addition to avoid a transcendental call per grid point.
    """
    nsteps = int(math.floor(horizon / step + 1e-9))
    cd = math.cos(n * step)
    sd = math.sin(n * step)
    c = 1.0
    s = 0.0
    best = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    tbest = 0.0
    for k in range(1, nsteps + 1):
        c, s = c * cd - s * sd, s * cd + c * sd
        t = k * step
        x, y, z = _fft_point(p, v, n, t, c, s)
        d = math.sqrt(x * x + y * y + z * z)
        if d < best:
            best = d
            tbest = t
    return best, tbest


@njit(cache=True)
def _psm_grad(p, v, n, t):
    """Gradients of the free-flight distance at time t w.r.t. p and v."""
    Prr, Prv = _fft_mats(n, t)
    y = Prr @ p + Prv @ v
    d = math.sqrt(y[0] ** 2 + y[1] ** 2 + y[2] ** 2)
    if d > 0.0:
        yh = y / d
    else:
        yh = np.zeros(3)
    return Prr.T @ yh, Prv.T @ yh


@njit(cache=True)
def _angle_kin(R, w, wd0, e, d, dd, ddd, P):
    """Angle between body axis e (rotated to Hill) and moving Hill direction d.

    Returns theta, theta_dot, theta_ddot without torque, torque coefficients of
    theta_ddot, and the cosine with its first two derivatives (torque-free part).
    """
    b = R @ e
    wxe = _cross(w, e)
    bd = R @ wxe
    bdd0 = R @ (_cross(w, wxe) + _cross(wd0, e))
    c = b[0] * d[0] + b[1] * d[1] + b[2] * d[2]
    cd = bd[0] * d[0] + bd[1] * d[1] + bd[2] * d[2] + b[0] * dd[0] + b[1] * dd[1] + b[2] * dd[2]
    cdd0 = (
        bdd0[0] * d[0]
        + bdd0[1] * d[1]
        + bdd0[2] * d[2]
        + 2.0 * (bd[0] * dd[0] + bd[1] * dd[1] + bd[2] * dd[2])
        + b[0] * ddd[0]
        + b[1] * ddd[1]
        + b[2] * ddd[2]
    )
    k = _cross(e, R.T @ d)
    k[0] /= P[L.P_J1]
    k[1] /= P[L.P_J2]
    k[2] /= P[L.P_J3]
    cc = min(1.0, max(-1.0, c))
    th = math.acos(cc)
    sig = math.sqrt(max(1.0 - cc * cc, _SIGMA_FLOOR * _SIGMA_FLOOR))
    thd = -cd / sig
    thdd0 = -cdd0 / sig - cc * cd * cd / (sig * sig * sig)
    kt = -k / sig
    return th, thd, thdd0, kt, c, cd


@njit(cache=True)
def _eval_all(x, P, CP, out_h):
    """Constraint values only (cheap; no derivatives)."""
    p = x[0:3]
    v = x[3:6]
    q = x[6:10]
    w = x[10:13]
    n = P[L.P_N]
    amax = P[L.P_AMAX]
    r = math.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
    vn = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    vr = (p[0] * v[0] + p[1] * v[1] + p[2] * v[2]) / r if r > 0.0 else 0.0
    out_h[L.C_COLLISION] = math.sqrt(max(2.0 * amax * (r - CP[L.C_COLLISION, L.CP_A0]), 0.0)) + vr
    out_h[L.C_SPEED] = CP[L.C_SPEED, L.CP_A0] + CP[L.C_SPEED, L.CP_A1] * r - vn
    out_h[L.C_KIZ] = math.sqrt(max(2.0 * amax * (CP[L.C_KIZ, L.CP_A0] - r), 0.0)) - vr
    dmin, _ = _psm_min(p, v, n, CP[L.C_PSM, L.CP_A1], CP[L.C_PSM, L.CP_A2])
    out_h[L.C_PSM] = dmin - CP[L.C_PSM, L.CP_A0]
    for i in range(3):
        vm = CP[L.C_VX + i, L.CP_A0]
        out_h[L.C_VX + i] = vm * vm - v[i] * v[i]
        wm = CP[L.C_W1 + i, L.CP_A0]
        out_h[L.C_W1 + i] = wm * wm - w[i] * w[i]
    R = _dcm(q)
    th = x[L.X_SUN]
    sun = np.array([math.cos(th), math.sin(th), 0.0])
    bore = R @ CP[L.C_ATTEZ, L.CP_A1 : L.CP_A3 + 1]
    cb = min(1.0, max(-1.0, bore[0] * sun[0] + bore[1] * sun[1] + bore[2] * sun[2]))
    out_h[L.C_ATTEZ] = math.acos(cb) - CP[L.C_ATTEZ, L.CP_A0]
    nb = np.array([P[L.P_TH_NX], P[L.P_TH_NY], P[L.P_TH_NZ]])
    nh = R @ nb
    cs = min(1.0, max(-1.0, nh[0] * sun[0] + nh[1] * sun[1]))
    ce = min(1.0, max(-1.0, -nh[0]))
    hp = 0.5 * math.pi
    out_h[L.C_TEMP] = (
        CP[L.C_TEMP, L.CP_A0]
        - x[L.X_T]
        - CP[L.C_TEMP, L.CP_A1] * (hp - math.acos(cs))
        - CP[L.C_TEMP, L.CP_A2] * (hp - math.acos(ce))
    )
    pb = np.array([P[L.P_PW_NX], P[L.P_PW_NY], P[L.P_PW_NZ]])
    ph = R @ pb
    cp = min(1.0, max(-1.0, ph[0] * sun[0] + ph[1] * sun[1]))
    out_h[L.C_BATT] = x[L.X_E] - CP[L.C_BATT, L.CP_A0] - CP[L.C_BATT, L.CP_A1] * math.acos(cp)


@njit(cache=True)
def _rows(x, P, CP, G, aff, hv, psi, tstar):
    """Barrier rows for all constraints.

    Fills G (NC x 6) control coefficients, aff (NC) affine parts, hv (NC) values,
    psi (NC) lifted values (equal to h for first-order rows) and returns the PSM
    argmin time through tstar[0].
    """
    p = x[0:3]
    v = x[3:6]
    q = x[6:10]
    w = x[10:13]
    n = P[L.P_N]
    m = P[L.P_M]
    amax = P[L.P_AMAX]
    R = _dcm(q)
    acc = _cw_accel(p, v, n)
    for i in range(L.NC):
        for j in range(6):
            G[i, j] = 0.0

    r = math.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
    if r > 0.0:
        ph = p / r
    else:
        ph = np.zeros(3)
    vr = ph[0] * v[0] + ph[1] * v[1] + ph[2] * v[2]
    # d(p_hat . v)/dp
    dvr_dp = (v - vr * ph) / r if r > 0.0 else np.zeros(3)

    # generic first-order translational row from (grad_p, grad_v, h)
    # ---- Collision
    rs = CP[L.C_COLLISION, L.CP_A0]
    rad = 2.0 * amax * (r - rs)
    sq = math.sqrt(rad) if rad > 0.0 else 0.0
    gp = dvr_dp + (amax / sq * ph if sq > 0.0 else np.zeros(3))
    gv = ph
    _trans_row(L.C_COLLISION, sq + vr, gp, gv, v, acc, R, m, CP, G, aff, hv, psi)

    # ---- Speed
    vn = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    gp = CP[L.C_SPEED, L.CP_A1] * ph
    gv = -v / vn if vn > 0.0 else np.zeros(3)
    _trans_row(L.C_SPEED, CP[L.C_SPEED, L.CP_A0] + CP[L.C_SPEED, L.CP_A1] * r - vn, gp, gv, v, acc, R, m, CP, G, aff, hv, psi)

    # ---- KIZ
    rad = 2.0 * amax * (CP[L.C_KIZ, L.CP_A0] - r)
    sq = math.sqrt(rad) if rad > 0.0 else 0.0
    gp = -dvr_dp - (amax / sq * ph if sq > 0.0 else np.zeros(3))
    gv = -ph
    _trans_row(L.C_KIZ, sq - vr, gp, gv, v, acc, R, m, CP, G, aff, hv, psi)

    # ---- PSM
    dmin, ts = _psm_min(p, v, n, CP[L.C_PSM, L.CP_A1], CP[L.C_PSM, L.CP_A2])
    tstar[0] = ts
    gp, gv = _psm_grad(p, v, n, ts)
    _trans_row(L.C_PSM, dmin - CP[L.C_PSM, L.CP_A0], gp, gv, v, acc, R, m, CP, G, aff, hv, psi)

    # ---- velocity limits
    for i in range(3):
        k = L.C_VX + i
        vm = CP[k, L.CP_A0]
        gp = np.zeros(3)
        gv = np.zeros(3)
        gv[i] = -2.0 * v[i]
        _trans_row(k, vm * vm - v[i] * v[i], gp, gv, v, acc, R, m, CP, G, aff, hv, psi)

    # ---- angular rate limits
    wd0 = _wdot(w, np.zeros(3), P)
    J = np.array([P[L.P_J1], P[L.P_J2], P[L.P_J3]])
    for i in range(3):
        k = L.C_W1 + i
        wm = CP[k, L.CP_A0]
        h = wm * wm - w[i] * w[i]
        c1, c3 = CP[k, L.CP_C1], CP[k, L.CP_C3]
        hv[k] = h
        psi[k] = h
        G[k, 3 + i] = -2.0 * w[i] / J[i]
        aff[k] = -2.0 * w[i] * wd0[i] + _alpha(c1, c3, h)

    # ---- attitude-dependent (second order)
    th = x[L.X_SUN]
    sun = np.array([math.cos(th), math.sin(th), 0.0])
    sund = np.array([n * math.sin(th), -n * math.cos(th), 0.0])
    sundd = -n * n * sun
    earth = np.array([-1.0, 0.0, 0.0])
    zero3 = np.zeros(3)

    # AttEZ
    k = L.C_ATTEZ
    e = CP[k, L.CP_A1 : L.CP_A3 + 1].copy()
    ang, angd, angdd0, kt, _, _ = _angle_kin(R, w, wd0, e, sun, sund, sundd, P)
    _second_order_row(k, ang - CP[k, L.CP_A0], angd, angdd0, kt, CP, G, aff, hv, psi)

    # Temp
    k = L.C_TEMP
    d0 = CP[k, L.CP_A1]
    d1 = CP[k, L.CP_A2]
    nb = np.array([P[L.P_TH_NX], P[L.P_TH_NY], P[L.P_TH_NZ]])
    tS, tSd, tSdd0, kS, cS, cSd = _angle_kin(R, w, wd0, nb, sun, sund, sundd, P)
    tE, tEd, tEdd0, kE, cE, cEd = _angle_kin(R, w, wd0, nb, earth, zero3, zero3, P)
    TK = x[L.X_T] + KELVIN
    mc = P[L.P_TH_MN] * P[L.P_TH_CP]
    Td = _heat(TK, cS, cE, P) / mc
    k_sun, k_earth, k_T = _heat_rate_coeffs(TK, P)
    Qd = k_T * Td
    if cS > 0.0:
        Qd += k_sun * cSd
    if cE > 0.0:
        Qd += k_earth * cEd
    Tdd = Qd / mc
    hp = 0.5 * math.pi
    h = CP[k, L.CP_A0] - x[L.X_T] - d0 * (hp - tS) - d1 * (hp - tE)
    hd = -Td + d0 * tSd + d1 * tEd
    hdd0 = -Tdd + d0 * tSdd0 + d1 * tEdd0
    _second_order_row(k, h, hd, hdd0, d0 * kS + d1 * kE, CP, G, aff, hv, psi)

    # Batt
    k = L.C_BATT
    d2 = CP[k, L.CP_A1]
    pb = np.array([P[L.P_PW_NX], P[L.P_PW_NY], P[L.P_PW_NZ]])
    tP, tPd, tPdd0, kP, cP, cPd = _angle_kin(R, w, wd0, pb, sun, sund, sundd, P)
    Ed = _edot(cP, P)
    Edd = P[L.P_PW_PI] * P[L.P_PW_ID] * P[L.P_PW_A] * cPd / 1000.0 if cP > 0.0 else 0.0
    h = x[L.X_E] - CP[k, L.CP_A0] - d2 * tP
    _second_order_row(k, h, Ed - d2 * tPd, Edd - d2 * tPdd0, -d2 * kP, CP, G, aff, hv, psi)


@njit(cache=True)
def _trans_row(k, h, gp, gv, v, acc, R, m, CP, G, aff, hv, psi):
    c1, c3 = CP[k, L.CP_C1], CP[k, L.CP_C3]
    hv[k] = h
    psi[k] = h
    drift = 0.0
    for i in range(3):
        drift += gp[i] * v[i] + gv[i] * acc[i]
    aff[k] = drift + _alpha(c1, c3, h)
    # grad_F = R^T gv / m
    for j in range(3):
        G[k, j] = (R[0, j] * gv[0] + R[1, j] * gv[1] + R[2, j] * gv[2]) / m


@njit(cache=True)
def _second_order_row(k, h, hd, hdd0, ktau, CP, G, aff, hv, psi):
    c1, c3 = CP[k, L.CP_C1], CP[k, L.CP_C3]
    ps = hd + _alpha(c1, c3, h)
    hv[k] = h
    psi[k] = ps
    aff[k] = hdd0 + _dalpha(c1, c3, h) * hd + _alpha(c1, c3, ps)
    for j in range(3):
        G[k, 3 + j] = ktau[j]


@njit(cache=True)
def _rows_alloc(x, P, CP):
    G = np.zeros((L.NC, 6))
    aff = np.zeros(L.NC)
    hv = np.zeros(L.NC)
    psi = np.zeros(L.NC)
    ts = np.zeros(1)
    _rows(x, P, CP, G, aff, hv, psi, ts)
    return G, aff, hv, psi, ts[0]


# ---------------------------------------------------------------- public API


@dataclass(frozen=True)
class BarrierRow:
    """Control-affine barrier condition ``BC(x, u) = grad_u . u + affine``.

    ``psi_value`` is the lifted value for second-order constraints and equals
    ``h_value`` otherwise. ``degenerate`` is set when ``grad_u`` vanishes.
    """

    id: ConstraintId
    grad_u: np.ndarray
    affine: float
    h_value: float
    psi_value: float
    relative_degree: int
    degenerate: bool

    def bc(self, u) -> float:
        return float(np.dot(self.grad_u, np.asarray(u, dtype=float)) + self.affine)


def _cid(cid) -> ConstraintId:
    try:
        if isinstance(cid, str):
            return ConstraintId[cid]
        return ConstraintId(int(cid))
    except (KeyError, ValueError) as exc:
        raise UnknownConstraint(f"unknown constraint {cid!r}") from exc


def _x(state) -> np.ndarray:
    if isinstance(state, SimState):
        return state.to_array()
    return np.asarray(state, dtype=float)


def strengthening(alpha_coeffs, h):
    """``c1 h + c3 h^3``; works elementwise on arrays."""
    c1, c3 = alpha_coeffs
    if c1 < 0 or c3 < 0 or (c1 == 0 and c3 == 0):
        raise InvalidCoefficients("need c1, c3 >= 0 and not both zero")
    h = np.asarray(h, dtype=float)
    out = c1 * h + c3 * h**3
    return float(out) if out.ndim == 0 else out


def eval_all(state, model=None) -> np.ndarray:
    """Values of all constraints in :class:`ConstraintId` order."""
    mdl = L.resolve(model)
    out = np.zeros(L.NC)
    _eval_all(_x(state), mdl.P, mdl.CP, out)
    return out


def eval_h(cid, state, model=None) -> float:
    return float(eval_all(state, model)[_cid(cid)])


def separation(state, model=None) -> float:
    """Raw safe-separation margin ``||p|| - (r_d + r_c)``."""
    mdl = L.resolve(model)
    x = _x(state)
    return float(np.linalg.norm(x[0:3]) - mdl.CP[L.C_COLLISION, L.CP_A0])


def barrier_rows(state, model=None):
    """All rows at once: (G [NC x 6], affine, h, psi, psm_t_star)."""
    mdl = L.resolve(model)
    return _rows_alloc(_x(state), mdl.P, mdl.CP)


def barrier_row(cid, state, model=None, raise_degenerate: bool = True) -> BarrierRow:
    """Barrier row of one constraint.

    Raises :class:`DegenerateGradient` only when the row has no control authority and
    is also violated for every control; a degenerate row that holds is returned with
    ``degenerate=True`` so the caller can drop it.
    """
    k = _cid(cid)
    G, aff, hv, psi, _ = barrier_rows(state, model)
    g = G[k].copy()
    deg = bool(np.linalg.norm(g) <= DEGENERATE_TOL)
    if deg and raise_degenerate and aff[k] < 0:
        raise DegenerateGradient(f"{k.name}: zero control gradient with BC = {aff[k]:.3e} < 0")
    return BarrierRow(k, g, float(aff[k]), float(hv[k]), float(psi[k]), RELATIVE_DEGREE[k], deg)


def fft_matrices(t: float, n: float = 0.001027):
    """Position rows of the unforced relative-motion transition: ``p(t) = A p0 + B v0``."""
    return _fft_mats(float(n), float(t))


def fft_position(p0, v0, t: float, n: float = 0.001027) -> np.ndarray:
    """Closed-form unforced relative position after ``t`` seconds."""
    if t < 0:
        raise ValueError("t must be non-negative")
    A, B = _fft_mats(float(n), float(t))
    return A @ np.asarray(p0, dtype=float) + B @ np.asarray(v0, dtype=float)


def psm_h(state, model=None, horizon: float | None = None, step: float | None = None) -> tuple[float, float]:
    """Passive-safety margin and the time of closest approach on the sampling grid."""
    mdl = L.resolve(model)
    x = _x(state)
    hz = mdl.CP[L.C_PSM, L.CP_A1] if horizon is None else float(horizon)
    st = mdl.CP[L.C_PSM, L.CP_A2] if step is None else float(step)
    d, ts = _psm_min(x[0:3], x[3:6], mdl.P[L.P_N], hz, st)
    return float(d - mdl.CP[L.C_PSM, L.CP_A0]), float(ts)
