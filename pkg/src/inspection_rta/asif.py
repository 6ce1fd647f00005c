"""Active-set-invariance safety filter.

Given the desired control ``u_des``, the filter returns the closest admissible control
that keeps every barrier condition satisfied:

    minimize    ||u_des - u||^2 + sum_k w_k delta_k^2
    subject to  grad_k . u + affine_k >= delta_k      (slacked constraints)
                grad_k . u + affine_k >= 0            (hard constraints, no delta)
                -limit <= u <= limit                  (12 box rows)

A constraint is hard when its slack weight is 0 in the config. Decision vector is
``[u (6), delta (one per slacked row)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import _layout as L
from .constraints import DEGENERATE_TOL, ConstraintId, _rows
from .dynamics import ControlInput, SimState
from .qp import INF, _admm, _primal_active_set, kkt_residuals

__all__ = [
    "NonFiniteInput",
    "QpProblem",
    "QpSolution",
    "FilterReport",
    "assemble",
    "solve",
    "AsifFilter",
    "FALLBACK_WEIGHT",
]

NXMAX = L.NU + L.NC
# weight used when hard rows must be relaxed because they conflict with the box
FALLBACK_WEIGHT = 1e12


class NonFiniteInput(ValueError):
    pass


# ---------------------------------------------------------------- compiled kernels


@njit(cache=True)
def _limits(P):
    lim = np.empty(L.NU)
    for j in range(3):
        lim[j] = P[L.P_FMAX]
        lim[3 + j] = P[L.P_TAUMAX]
    return lim


@njit(cache=True)
def _build(G, aff, use, weights, udes, lim):
    """Dense QP data for the rows flagged in ``use``.

    Returns (Pm, q, A, l, u, slack_col, row_of). ``slack_col[k]`` is the decision
    column of constraint k's slack (-1 if hard or unused); ``row_of[k]`` its row
    (-1 if unused). Box rows follow the barrier rows.
    """
    nrow = 0
    nsl = 0
    for k in range(L.NC):
        if use[k]:
            nrow += 1
            if weights[k] > 0.0:
                nsl += 1
    n = L.NU + nsl
    m = nrow + 2 * L.NU
    Pm = np.zeros((n, n))
    q = np.zeros(n)
    A = np.zeros((m, n))
    lo = np.empty(m)
    hi = np.empty(m)
    slack_col = -np.ones(L.NC, dtype=np.int64)
    row_of = -np.ones(L.NC, dtype=np.int64)
    for j in range(L.NU):
        Pm[j, j] = 2.0
        q[j] = -2.0 * udes[j]
    r = 0
    col = L.NU
    for k in range(L.NC):
        if not use[k]:
            continue
        for j in range(L.NU):
            A[r, j] = G[k, j]
        lo[r] = -aff[k]
        hi[r] = INF
        row_of[k] = r
        if weights[k] > 0.0:
            A[r, col] = -1.0
            Pm[col, col] = 2.0 * weights[k]
            slack_col[k] = col
            col += 1
        r += 1
    for j in range(L.NU):
        A[r, j] = 1.0
        lo[r] = -lim[j]
        hi[r] = INF
        r += 1
        A[r, j] = -1.0
        lo[r] = -lim[j]
        hi[r] = INF
        r += 1
    return Pm, q, A, lo, hi, slack_col, row_of


@njit(cache=True)
def _fallback(Pm, q, A, lo, x_admm, lim):
    """Exact solve of a filter QP by a primal active-set method. Returns (ok, x, y, passes).

    Used when the splitting iteration stops short of its tolerances. A feasible start is
    built from the problem structure: the control is clamped to the box and, for each
    violated row without a slack column, moved toward the box corner that maximizes
    that row; every slack is then set to ``min(0, BC)``. Control columns are scaled to a
    unit objective diagonal and rows to unit norm before the solve.
    """
    n = Pm.shape[0]
    m = A.shape[0]
    nu = L.NU
    scol = -np.ones(m, dtype=np.int64)
    for r in range(m):
        for c in range(nu, n):
            if A[r, c] != 0.0:
                scol[r] = c
    u0 = np.empty(nu)
    for j in range(nu):
        u0[j] = min(max(x_admm[j], -lim[j]), lim[j])
    for r in range(m):
        if scol[r] >= 0:
            continue
        bc = -lo[r]
        for j in range(nu):
            bc += A[r, j] * u0[j]
        if bc >= 0.0:
            continue
        d = 0.0
        for j in range(nu):
            cj = lim[j] if A[r, j] > 0.0 else (-lim[j] if A[r, j] < 0.0 else u0[j])
            d += A[r, j] * (cj - u0[j])
        if d <= 0.0:
            return False, x_admm, np.zeros(m), 0
        t = min(1.0, -bc / d)
        for j in range(nu):
            cj = lim[j] if A[r, j] > 0.0 else (-lim[j] if A[r, j] < 0.0 else u0[j])
            u0[j] += t * (cj - u0[j])
    x = np.zeros(n)
    for j in range(nu):
        x[j] = u0[j]
    for r in range(m):
        bc = -lo[r]
        for j in range(nu):
            bc += A[r, j] * u0[j]
        if scol[r] < 0:
            if bc < -1e-12 * (1.0 + abs(lo[r])):
                return False, x_admm, np.zeros(m), 0
        else:
            x[scol[r]] = min(0.0, bc / -A[r, scol[r]])
    # slack columns keep unit scale: shrinking them by the weight makes a slacked row
    # nearly parallel to a box row on the same axis
    d = np.ones(n)
    for j in range(nu):
        d[j] = 1.0 / math.sqrt(Pm[j, j])
    Ps = np.empty((n, n))
    qs = np.empty(n)
    for i in range(n):
        qs[i] = q[i] * d[i]
        for j in range(n):
            Ps[i, j] = Pm[i, j] * d[i] * d[j]
    As = np.empty((m, n))
    ls = np.empty(m)
    rn = np.empty(m)
    for r in range(m):
        s2 = 0.0
        for j in range(n):
            As[r, j] = A[r, j] * d[j]
            s2 += As[r, j] * As[r, j]
        rn[r] = math.sqrt(s2) if s2 > 0.0 else 1.0
        for j in range(n):
            As[r, j] /= rn[r]
        ls[r] = lo[r] / rn[r]
    xs = np.empty(n)
    for j in range(n):
        xs[j] = x[j] / d[j]
    ok, xs, ys, passes = _primal_active_set(Ps, qs, As, ls, xs, 10 * (n + m))
    if not ok:
        return False, x_admm, np.zeros(m), passes
    for j in range(n):
        x[j] = xs[j] * d[j]
    y = np.empty(m)
    for r in range(m):
        y[r] = ys[r] / rn[r]
    return True, x, y, passes


@njit(cache=True)
def _solve_qp(Pm, q, A, lo, hi, x0, y0, warm, S, lim):
    """Splitting solve, then the exact active-set fallback if it stops at MaxIter."""
    x, y, status, iters, rp, rd, pol = _admm(Pm, q, A, lo, hi, x0, y0, warm, S)
    if status == L.ST_MAXITER:
        ok, xf, yf, passes = _fallback(Pm, q, A, lo, x, lim)
        iters += passes
        if ok:
            return xf, yf, L.ST_OPTIMAL, iters
    return x, y, status, iters


@njit(cache=True)
def _filter_kernel(G, aff, CP, P, S, udes_raw, ws_x, ws_ok, out_u, out_delta, out_bc):
    """Filter one control. Returns (status, iterations, modified, n_dropped_violated).

    ``ws_x`` (u then one slot per constraint id) carries the primal warm start between
    calls and is updated in place. Duals are not carried over: multipliers of relaxed
    rows scale with the slack weight, and stale ones stall the next solve.
    """
    lim = _limits(P)
    uc = np.empty(L.NU)
    for j in range(L.NU):
        uc[j] = min(max(udes_raw[j], -lim[j]), lim[j])

    present = np.zeros(L.NC, dtype=np.bool_)
    weights = np.empty(L.NC)
    fast_ok = True
    dropped_bad = 0
    for k in range(L.NC):
        weights[k] = CP[k, L.CP_W]
        out_delta[k] = 0.0
        if CP[k, L.CP_EN] <= 0.0:
            out_bc[k] = np.nan
            continue
        gn = 0.0
        bc = aff[k]
        for j in range(L.NU):
            gn += G[k, j] * G[k, j]
            bc += G[k, j] * uc[j]
        if np.sqrt(gn) <= DEGENERATE_TOL:
            if aff[k] < 0.0:
                dropped_bad += 1
            out_bc[k] = aff[k]
            continue
        present[k] = True
        if bc < 0.0:
            fast_ok = False

    modified = False
    if fast_ok:
        for j in range(L.NU):
            out_u[j] = uc[j]
        for k in range(L.NC):
            if CP[k, L.CP_EN] > 0.0:
                s = aff[k]
                for j in range(L.NU):
                    s += G[k, j] * uc[j]
                out_bc[k] = s
        for j in range(L.NU):
            if abs(uc[j] - udes_raw[j]) > S[L.S_CHANGE_TOL]:
                modified = True
        return L.ST_OPTIMAL, 0, modified, dropped_bad

    # rows that hold for every control in the box can never bind: leave them out
    use = np.zeros(L.NC, dtype=np.bool_)
    for k in range(L.NC):
        if not present[k]:
            continue
        worst = aff[k]
        for j in range(L.NU):
            worst -= abs(G[k, j]) * lim[j]
        if worst < 0.0:
            use[k] = True

    Pm, q, A, lo, hi, scol, rof = _build(G, aff, use, weights, uc, lim)
    n = Pm.shape[0]
    m = A.shape[0]
    x0 = np.zeros(n)
    y0 = np.zeros(m)
    warm = ws_ok[0] and S[L.S_WARM] > 0.0
    if warm:
        for j in range(L.NU):
            x0[j] = ws_x[j]
        for k in range(L.NC):
            if scol[k] >= 0:
                x0[scol[k]] = ws_x[L.NU + k]
    x, y, status, iters = _solve_qp(Pm, q, A, lo, hi, x0, y0, warm, S, lim)

    if status == L.ST_INFEASIBLE:
        # relax the hard rows as well and return the least-violating box control
        w2 = weights.copy()
        for k in range(L.NC):
            if use[k] and w2[k] <= 0.0:
                w2[k] = FALLBACK_WEIGHT
        Pm, q, A, lo, hi, scol, rof = _build(G, aff, use, w2, uc, lim)
        n = Pm.shape[0]
        m = A.shape[0]
        x, y, st2, it2 = _solve_qp(Pm, q, A, lo, hi, np.zeros(n), np.zeros(m), False, S, lim)
        iters += it2
        ws_ok[0] = False
    else:
        ws_ok[0] = True

    for j in range(L.NU):
        out_u[j] = min(max(x[j], -lim[j]), lim[j])
    for k in range(L.NC):
        if scol[k] >= 0:
            out_delta[k] = x[scol[k]]
        if CP[k, L.CP_EN] > 0.0:
            s = aff[k]
            for j in range(L.NU):
                s += G[k, j] * out_u[j]
            out_bc[k] = s

    if ws_ok[0]:
        for j in range(L.NU):
            ws_x[j] = x[j]
        for k in range(L.NC):
            ws_x[L.NU + k] = x[scol[k]] if scol[k] >= 0 else 0.0

    for j in range(L.NU):
        if abs(out_u[j] - udes_raw[j]) > S[L.S_CHANGE_TOL]:
            modified = True
    return status, iters, modified, dropped_bad


# ---------------------------------------------------------------- python API


@dataclass(frozen=True)
class QpProblem:
    """Filter QP in the form ``min 1/2 z'Hz + f'z  s.t.  G z >= g_lb``.

    ``H / 2`` gives the objective ``||u_des - u||^2 + sum w delta^2`` up to a constant.
    ``row_ids`` names each barrier row (box rows are the last 12 and are labelled
    ``"box"``); ``slack_index_map`` maps constraint name to its slack column.
    """

    H: np.ndarray
    f_lin: np.ndarray
    G: np.ndarray
    g_lb: np.ndarray
    slack_index_map: dict
    row_ids: tuple
    u_des: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class QpSolution:
    """Solver output. ``slacks`` holds delta per slacked constraint (negative when relaxed)."""

    u_act: ControlInput
    slacks: dict
    status: str
    kkt_residuals: tuple
    z: np.ndarray
    y: np.ndarray
    iterations: int


@dataclass(frozen=True)
class FilterReport:
    """Per-call diagnostics of :meth:`AsifFilter.filter`.

    ``bc`` is the barrier condition of every enabled constraint at the returned control
    (NaN for disabled ones); ``relaxation`` is ``max(0, -delta)``; ``degenerate_violated``
    counts dropped rows without control authority whose condition is negative.
    """

    bc: np.ndarray
    slack: np.ndarray
    relaxation: np.ndarray
    status: str
    iterations: int
    modified: bool
    degenerate_violated: int
    relaxed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "relaxed", bool(np.any(self.relaxation > 1e-9)))


def _state_array(state) -> np.ndarray:
    return state.to_array() if isinstance(state, SimState) else np.asarray(state, dtype=float)


def _u_array(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return u.to_array()
    return np.asarray(u, dtype=float).reshape(L.NU)


def _cp_for(model, specs) -> np.ndarray:
    CP = model.CP.copy()
    if specs is not None:
        keep = {ConstraintId[s] if isinstance(s, str) else ConstraintId(int(s)) for s in specs}
        for k in range(L.NC):
            if ConstraintId(k) not in keep:
                CP[k, L.CP_EN] = 0.0
    return CP


def assemble(state, u_des, specs=None, model=None) -> QpProblem:
    """Build the full filter QP (no presolve) for ``state`` and desired control.

    ``specs`` optionally restricts the constraint set (ids or names). Rows whose
    control gradient vanishes are excluded.
    """
    mdl = L.resolve(model)
    CP = _cp_for(mdl, specs)
    x = _state_array(state)
    G = np.zeros((L.NC, L.NU))
    aff = np.zeros(L.NC)
    hv = np.zeros(L.NC)
    psi = np.zeros(L.NC)
    ts = np.zeros(1)
    _rows(x, mdl.P, CP, G, aff, hv, psi, ts)
    use = np.array(
        [CP[k, L.CP_EN] > 0 and np.linalg.norm(G[k]) > DEGENERATE_TOL for k in range(L.NC)], dtype=np.bool_
    )
    lim = np.asarray(_limits(mdl.P))
    ud = np.clip(_u_array(u_des), -lim, lim)
    Pm, q, A, lo, _, scol, rof = _build(G, aff, use, CP[:, L.CP_W].copy(), ud, lim)
    names = [ConstraintId(k).name for k in range(L.NC) if rof[k] >= 0] + ["box"] * (2 * L.NU)
    smap = {ConstraintId(k).name: int(scol[k]) for k in range(L.NC) if scol[k] >= 0}
    return QpProblem(Pm, q, A, lo, smap, tuple(names), ud)


def solve(qp: QpProblem, model=None, x0=None, y0=None) -> QpSolution:
    """Solve a filter QP with the operator-splitting solver.

    The returned control is clamped to the box; KKT residuals are computed on the
    unclamped iterate.
    """
    mdl = L.resolve(model)
    n, m = qp.H.shape[0], qp.G.shape[0]
    hi = np.full(m, INF)
    warm = x0 is not None and y0 is not None
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    lim = np.asarray(_limits(mdl.P))
    z, y, st, it = _solve_qp(qp.H, qp.f_lin, qp.G, qp.g_lb, hi, x0, y0, warm, mdl.S, lim)
    u = np.clip(z[: L.NU], -lim, lim)
    res = kkt_residuals(qp.H, qp.f_lin, qp.G, qp.g_lb, np.full(m, np.inf), z, y)
    slacks = {name: float(z[col]) for name, col in qp.slack_index_map.items()}
    return QpSolution(ControlInput.from_array(u), slacks, L.STATUS_NAMES[st], res, z, y, int(it))


class AsifFilter:
    """Safety filter with warm-start memory; use one instance per episode."""

    def __init__(self, model=None, specs=None):
        self.model = L.resolve(model)
        self.CP = _cp_for(self.model, specs)
        self.reset()

    def reset(self):
        self.ws_x = np.zeros(NXMAX)
        self.ws_ok = np.zeros(1, dtype=np.bool_)

    def rows(self, state):
        x = _state_array(state)
        G = np.zeros((L.NC, L.NU))
        aff = np.zeros(L.NC)
        hv = np.zeros(L.NC)
        psi = np.zeros(L.NC)
        ts = np.zeros(1)
        _rows(x, self.model.P, self.CP, G, aff, hv, psi, ts)
        return G, aff, hv, psi

    def filter(self, state, u_des) -> tuple[ControlInput, FilterReport]:
        ud = _u_array(u_des)
        if not np.all(np.isfinite(ud)):
            raise NonFiniteInput("desired control is not finite")
        G, aff, _, _ = self.rows(state)
        u = np.zeros(L.NU)
        delta = np.zeros(L.NC)
        bc = np.zeros(L.NC)
        st, it, mod, bad = _filter_kernel(
            G, aff, self.CP, self.model.P, self.model.S, ud, self.ws_x, self.ws_ok, u, delta, bc
        )
        rep = FilterReport(bc, delta, np.maximum(-delta, 0.0), L.STATUS_NAMES[st], int(it), bool(mod), int(bad))
        return ControlInput.from_array(u), rep
