"""Small dense convex QP solver (operator splitting / ADMM).

Solves ``min 1/2 x'Px + q'x  s.t.  l <= Ax <= u`` with the OSQP iteration: modified
Ruiz equilibration, relaxed ADMM steps on a cached Cholesky factor of
``P + sigma I + A' diag(rho) A``, adaptive ``rho``, a primal infeasibility certificate and
an active-set polishing step whose guessed active set is corrected until the KKT
conditions hold. A primal active-set method is provided for callers that can supply a
feasible start. Sized for the safety filter (tens of variables and rows);
every routine is compiled and allocation-light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _layout as L

__all__ = ["QpResult", "solve_qp", "kkt_residuals", "INF"]

INF = 1e30
_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_RHO_EQ_SCALE = 1e3
_SCALE_MIN = 1e-4
_SCALE_MAX = 1e4
_ADAPT_INTERVAL = 25
_ADAPT_TOL = 5.0
_EPS_PINF = 1e-5
_POLISH_REFINE = 5
_POLISH_FEAS = 1e-10
_POLISH_EVERY = 25


# ---------------------------------------------------------------- dense factorizations


@njit(cache=True)
def _chol(K, Lf):
    """Cholesky ``K = Lf Lf'``; returns False if K is not numerically positive definite."""
    n = K.shape[0]
    for j in range(n):
        s = K[j, j]
        for k in range(j):
            s -= Lf[j, k] * Lf[j, k]
        if s <= 0.0:
            return False
        d = math.sqrt(s)
        Lf[j, j] = d
        for i in range(j + 1, n):
            s = K[i, j]
            for k in range(j):
                s -= Lf[i, k] * Lf[j, k]
            Lf[i, j] = s / d
        for i in range(j):
            Lf[i, j] = 0.0
    return True


@njit(cache=True)
def _chol_solve(Lf, b, out):
    n = b.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= Lf[i, k] * out[k]
        out[i] = s / Lf[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= Lf[k, i] * out[k]
        out[i] = s / Lf[i, i]


@njit(cache=True)
def _mv(A, x, out):
    for i in range(A.shape[0]):
        s = 0.0
        for j in range(A.shape[1]):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True)
def _mtv(A, y, out):
    for j in range(A.shape[1]):
        out[j] = 0.0
    for i in range(A.shape[0]):
        yi = y[i]
        if yi != 0.0:
            for j in range(A.shape[1]):
                out[j] += A[i, j] * yi


@njit(cache=True)
def _inf_norm(v):
    m = 0.0
    for i in range(v.shape[0]):
        a = abs(v[i])
        if a > m:
            m = a
    return m


@njit(cache=True)
def _ruiz(P, q, A, l, u, iters, D, E):
    """Modified Ruiz equilibration; returns the cost scale c. Scales P, q, A, l, u in place."""
    n = P.shape[0]
    m = A.shape[0]
    for i in range(n):
        D[i] = 1.0
    for i in range(m):
        E[i] = 1.0
    dt = np.empty(n)
    et = np.empty(m)
    for _ in range(iters):
        for j in range(n):
            mx = 0.0
            for i in range(n):
                a = abs(P[i, j])
                if a > mx:
                    mx = a
            for i in range(m):
                a = abs(A[i, j])
                if a > mx:
                    mx = a
            if mx < _SCALE_MIN:
                mx = 1.0
            dt[j] = 1.0 / math.sqrt(min(mx, _SCALE_MAX))
        for i in range(m):
            mx = 0.0
            for j in range(n):
                a = abs(A[i, j])
                if a > mx:
                    mx = a
            if mx < _SCALE_MIN:
                mx = 1.0
            et[i] = 1.0 / math.sqrt(min(mx, _SCALE_MAX))
        for i in range(n):
            for j in range(n):
                P[i, j] *= dt[i] * dt[j]
            q[i] *= dt[i]
            D[i] *= dt[i]
        for i in range(m):
            for j in range(n):
                A[i, j] *= et[i] * dt[j]
            E[i] *= et[i]
    # cost scaling
    mean_col = 0.0
    for j in range(n):
        mx = 0.0
        for i in range(n):
            a = abs(P[i, j])
            if a > mx:
                mx = a
        mean_col += mx
    mean_col /= n
    qn = _inf_norm(q)
    g = max(mean_col, qn)
    if g < _SCALE_MIN:
        g = 1.0
    c = 1.0 / min(g, _SCALE_MAX)
    for i in range(n):
        for j in range(n):
            P[i, j] *= c
        q[i] *= c
    for i in range(m):
        if l[i] > -INF:
            l[i] *= E[i]
        if u[i] < INF:
            u[i] *= E[i]
    return c


@njit(cache=True)
def _factor(P, A, rho, sigma, Lf):
    n = P.shape[0]
    m = A.shape[0]
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            s = P[i, j]
            for k in range(m):
                s += A[k, i] * rho[k] * A[k, j]
            K[i, j] = s
        K[i, i] += sigma
    return _chol(K, Lf)


@njit(cache=True)
def _set_rho(rho_bar, l, u, rho):
    for i in range(l.shape[0]):
        if l[i] <= -INF and u[i] >= INF:
            rho[i] = _RHO_MIN
        elif u[i] - l[i] < 1e-12:
            rho[i] = _RHO_EQ_SCALE * rho_bar
        else:
            rho[i] = rho_bar


# ---------------------------------------------------------------- main iteration


@njit(cache=True)
def _residuals(Ps, qs, As, x, z, y, D, E, c, Ax, Px, Aty):
    """Unscaled primal/dual residuals and their tolerance normalizers."""
    n = x.shape[0]
    m = z.shape[0]
    _mv(As, x, Ax)
    _mv(Ps, x, Px)
    _mtv(As, y, Aty)
    rp = 0.0
    nAx = 0.0
    nz = 0.0
    for i in range(m):
        rp = max(rp, abs(Ax[i] - z[i]) / E[i])
        nAx = max(nAx, abs(Ax[i]) / E[i])
        nz = max(nz, abs(z[i]) / E[i])
    rd = 0.0
    nPx = 0.0
    nAty = 0.0
    nq = 0.0
    for i in range(n):
        cd = c * D[i]
        rd = max(rd, abs(Px[i] + qs[i] + Aty[i]) / cd)
        nPx = max(nPx, abs(Px[i]) / cd)
        nAty = max(nAty, abs(Aty[i]) / cd)
        nq = max(nq, abs(qs[i]) / cd)
    return rp, rd, max(nAx, nz), max(nPx, max(nAty, nq))


@njit(cache=True)
def _lu(K, piv, rtol):
    """In-place LU with partial pivoting; returns False if a pivot vanishes.

    A pivot counts as vanished below ``rtol`` times its own column scale, so one
    heavily weighted variable does not mask the others.
    """
    N = K.shape[0]
    cmax = np.zeros(N)
    for i in range(N):
        for j in range(N):
            cmax[j] = max(cmax[j], abs(K[i, j]))
    for k in range(N):
        p = k
        best = abs(K[k, k])
        for i in range(k + 1, N):
            if abs(K[i, k]) > best:
                best = abs(K[i, k])
                p = i
        if best <= rtol * cmax[k] or best == 0.0:
            return False
        piv[k] = p
        if p != k:
            for j in range(N):
                t = K[k, j]
                K[k, j] = K[p, j]
                K[p, j] = t
        inv = 1.0 / K[k, k]
        for i in range(k + 1, N):
            f = K[i, k] * inv
            K[i, k] = f
            if f != 0.0:
                for j in range(k + 1, N):
                    K[i, j] -= f * K[k, j]
    return True


@njit(cache=True)
def _lu_solve(LU, piv, b, out):
    N = LU.shape[0]
    for i in range(N):
        out[i] = b[i]
    for k in range(N):
        p = piv[k]
        if p != k:
            t = out[k]
            out[k] = out[p]
            out[p] = t
    for i in range(N):
        s = out[i]
        for j in range(i):
            s -= LU[i, j] * out[j]
        out[i] = s
    for i in range(N - 1, -1, -1):
        s = out[i]
        for j in range(i + 1, N):
            s -= LU[i, j] * out[j]
        out[i] = s / LU[i, i]


@njit(cache=True)
def _eq_solve(Ps, qs, As, ls, us, act, xp, yp, rtol):
    """Equality-constrained QP on the active set ``act`` (-1 lower, +1 upper)."""
    n = Ps.shape[0]
    m = As.shape[0]
    na = 0
    for i in range(m):
        if act[i] != 0:
            na += 1
    idx = np.empty(na, dtype=np.int64)
    b = np.empty(na)
    k = 0
    for i in range(m):
        if act[i] != 0:
            idx[k] = i
            b[k] = ls[i] if act[i] < 0 else us[i]
            k += 1
    N = n + na
    K = np.zeros((N, N))
    for i in range(n):
        for j in range(n):
            K[i, j] = Ps[i, j]
    for a in range(na):
        for j in range(n):
            K[n + a, j] = As[idx[a], j]
            K[j, n + a] = As[idx[a], j]
    rhs = np.empty(N)
    for i in range(n):
        rhs[i] = -qs[i]
    for a in range(na):
        rhs[n + a] = b[a]
    # the active-set KKT matrix is indefinite and badly scaled when slack weights are
    # large, so it is solved with a row-pivoted LU rather than a regularised LDL
    LU = K.copy()
    piv = np.empty(N, dtype=np.int64)
    if not _lu(LU, piv, rtol):
        return False
    sol = np.empty(N)
    _lu_solve(LU, piv, rhs, sol)
    corr = np.empty(N)
    for _ in range(_POLISH_REFINE):
        res = rhs - K @ sol
        _lu_solve(LU, piv, res, corr)
        sol += corr
    for i in range(N):
        if not np.isfinite(sol[i]):
            return False
    for i in range(n):
        xp[i] = sol[i]
    for i in range(m):
        yp[i] = 0.0
    for a in range(na):
        yp[idx[a]] = sol[n + a]
    return True


@njit(cache=True)
def _independent_guess(As, y, act):
    """Thin the active-set guess to linearly independent rows, largest ``|y|`` first.

    Parallel box rows or a hard row spanned by active bounds would make the polish
    system singular.
    """
    m, n = As.shape
    order = np.argsort(-np.abs(y))
    basis = np.zeros((n, n))
    nb = 0
    for t in range(m):
        i = order[t]
        if act[i] == 0:
            continue
        r = As[i].copy()
        nr = math.sqrt(np.dot(r, r))
        for k in range(nb):
            r -= np.dot(r, basis[k]) * basis[k]
        rr = math.sqrt(np.dot(r, r))
        if nb >= n or rr <= 1e-9 * nr:
            act[i] = 0
            continue
        basis[nb] = r / rr
        nb += 1


@njit(cache=True)
def _polish(Ps, qs, As, ls, us, x, z, y, rounds):
    """Polish on the active set guessed from the ADMM iterate. Returns (ok, x, y).

    The guess is corrected for up to ``rounds`` passes: the most violated inactive row
    is added, otherwise the active row whose multiplier has the wrong sign is dropped.
    """
    n = x.shape[0]
    m = z.shape[0]
    act = np.zeros(m, dtype=np.int64)
    for i in range(m):
        if z[i] - ls[i] < -y[i]:
            act[i] = -1
        elif us[i] - z[i] < y[i]:
            act[i] = 1
    _independent_guess(As, y, act)
    xp = np.empty(n)
    yp = np.empty(m)
    Ax = np.empty(m)
    for _ in range(rounds + 1):
        if not _eq_solve(Ps, qs, As, ls, us, act, xp, yp, 1e-14):
            return False, x, y
        _mv(As, xp, Ax)
        worst = 0.0
        iw = -1
        side = 0
        for i in range(m):
            if act[i] != 0:
                continue
            tol = _POLISH_FEAS * (1.0 + min(abs(ls[i]), abs(us[i])))
            if ls[i] - Ax[i] > tol and ls[i] - Ax[i] > worst:
                worst = ls[i] - Ax[i]
                iw = i
                side = -1
            elif Ax[i] - us[i] > tol and Ax[i] - us[i] > worst:
                worst = Ax[i] - us[i]
                iw = i
                side = 1
        if iw >= 0:
            act[iw] = side
            continue
        worst = 0.0
        for i in range(m):
            if act[i] == 0 or ls[i] == us[i]:
                continue
            bad = yp[i] if act[i] < 0 else -yp[i]
            if bad > _POLISH_FEAS * (1.0 + abs(yp[i])) and bad > worst:
                worst = bad
                iw = i
        if iw < 0:
            return True, xp, yp
        act[iw] = 0
    return False, x, y


@njit(cache=True)
def _primal_active_set(P, q, A, l, x, max_iter):
    """Primal active-set method for ``min 1/2 x'Px + q'x  s.t.  A x >= l``.

    ``x`` must be feasible. The working set starts empty. Each pass solves the equality problem on the working set,
    steps toward it until a blocking row is met, and drops the row with the most
    wrong-signed multiplier once the step vanishes. Returns (ok, x, y, passes) with
    ``y <= 0`` on active rows (same sign convention as the ADMM iterate).
    """
    n = P.shape[0]
    m = A.shape[0]
    u = np.full(m, INF)
    # rows enter one at a time; a guessed start set can be nearly dependent
    act = np.zeros(m, dtype=np.int64)
    Ax = A @ x
    xe = np.empty(n)
    ye = np.zeros(m)
    x = x.copy()
    for it in range(max_iter):
        # heavy slack weights give genuinely tiny Schur pivots; rows entering one at a
        # time stay independent, so only an exact zero pivot is rejected
        if not _eq_solve(P, q, A, l, u, act, xe, ye, 0.0):
            return False, x, ye, it
        pn = 0.0
        xn = 0.0
        for j in range(n):
            pn = max(pn, abs(xe[j] - x[j]))
            xn = max(xn, abs(x[j]))
        if pn <= 1e-12 * (1.0 + xn):
            ymax = 0.0
            for i in range(m):
                ymax = max(ymax, abs(ye[i]))
            worst = 1e-12 * (1.0 + ymax)
            iw = -1
            for i in range(m):
                if act[i] != 0 and ye[i] > worst:
                    worst = ye[i]
                    iw = i
            if iw < 0:
                return True, xe, ye, it + 1
            act[iw] = 0
            continue
        p = xe - x
        Ap = A @ p
        step = 1.0
        blk = -1
        for i in range(m):
            if act[i] == 0 and Ap[i] < 0.0:
                t = max(Ax[i] - l[i], 0.0) / -Ap[i]
                if t < step:
                    step = t
                    blk = i
        if blk < 0:
            x[:] = xe
        else:
            for j in range(n):
                x[j] += step * p[j]
            act[blk] = -1
        Ax = A @ x
    return False, x, ye, max_iter


@njit(cache=True)
def _accept_polish(Ps, qs, As, ls, us, x, z, y, rp, rd, D, E, c, eps_abs, eps_rel, bAx, bPx, bAty):
    """Polish and keep the result if it is no worse. Returns (kept, optimal, x, y, z, rp, rd)."""
    m = z.shape[0]
    ok, xp, yp = _polish(Ps, qs, As, ls, us, x, z, y, 3 * m)
    if not ok:
        return False, False, x, y, z, rp, rd
    Axp = As @ xp
    zp = np.empty(m)
    for i in range(m):
        zp[i] = min(max(Axp[i], ls[i]), us[i])
    # dual sign consistency
    for i in range(m):
        if yp[i] < -1e-9 * (1.0 + abs(yp[i])) and ls[i] <= -INF:
            return False, False, x, y, z, rp, rd
        if yp[i] > 1e-9 * (1.0 + abs(yp[i])) and us[i] >= INF:
            return False, False, x, y, z, rp, rd
    rpp, rdp, pnp, dnp = _residuals(Ps, qs, As, xp, zp, yp, D, E, c, bAx, bPx, bAty)
    if rpp <= max(rp, eps_abs) and rdp <= max(rd, eps_abs):
        opt = rpp <= eps_abs + eps_rel * pnp and rdp <= eps_abs + eps_rel * dnp
        return True, opt, xp, yp, zp, rpp, rdp
    return False, False, x, y, z, rp, rd


@njit(cache=True)
def _admm(P0, q0, A0, l0, u0, x0, y0, warm, S):
    """Solve the QP. Returns (x, y, status, iters, rp, rd, polished)."""
    n = P0.shape[0]
    m = A0.shape[0]
    Ps = P0.copy()
    qs = q0.copy()
    As = A0.copy()
    ls = l0.copy()
    us = u0.copy()
    D = np.empty(n)
    E = np.empty(m)
    c = _ruiz(Ps, qs, As, ls, us, int(S[L.S_SCALING]), D, E)
    eps_abs = S[L.S_EPS_ABS]
    eps_rel = S[L.S_EPS_REL]
    max_iter = int(S[L.S_MAX_ITER])
    sigma = S[L.S_SIGMA]
    alpha = S[L.S_RELAX]
    rho_bar = S[L.S_RHO]

    x = np.zeros(n)
    y = np.zeros(m)
    z = np.zeros(m)
    if warm:
        for i in range(n):
            x[i] = x0[i] / D[i]
        for i in range(m):
            y[i] = y0[i] * c / E[i]
    Ax = As @ x
    for i in range(m):
        z[i] = min(max(Ax[i], ls[i]), us[i])

    rho = np.empty(m)
    _set_rho(rho_bar, ls, us, rho)
    Lf = np.zeros((n, n))
    if not _factor(Ps, As, rho, sigma, Lf):
        return x * D, y * E / c, L.ST_MAXITER, 0, np.inf, np.inf, False

    xt = np.empty(n)
    rhs = np.empty(n)
    w = np.empty(m)
    zt = np.empty(m)
    Atw = np.empty(n)
    bAx = np.empty(m)
    bPx = np.empty(n)
    bAty = np.empty(n)
    status = L.ST_MAXITER
    it = 0
    rp = np.inf
    rd = np.inf
    dy = np.empty(m)
    polished_early = False
    for it in range(1, max_iter + 1):
        for i in range(m):
            w[i] = rho[i] * z[i] - y[i]
        _mtv(As, w, Atw)
        for i in range(n):
            rhs[i] = sigma * x[i] - qs[i] + Atw[i]
        _chol_solve(Lf, rhs, xt)
        _mv(As, xt, zt)
        for i in range(n):
            x[i] = alpha * xt[i] + (1.0 - alpha) * x[i]
        dy_norm = 0.0
        for i in range(m):
            zr = alpha * zt[i] + (1.0 - alpha) * z[i]
            zn = min(max(zr + y[i] / rho[i], ls[i]), us[i])
            dy[i] = rho[i] * (zr - zn)
            y[i] += dy[i]
            z[i] = zn
            dy_norm = max(dy_norm, abs(dy[i] * E[i]))

        rp, rd, pn, dn = _residuals(Ps, qs, As, x, z, y, D, E, c, bAx, bPx, bAty)
        if rp <= eps_abs + eps_rel * pn and rd <= eps_abs + eps_rel * dn:
            status = L.ST_OPTIMAL
            break

        # primal infeasibility certificate
        if dy_norm > 1e-12:
            _mtv(As, dy, Atw)
            lhs = 0.0
            for i in range(n):
                lhs = max(lhs, abs(Atw[i]) / D[i])
            sup = 0.0
            bad = False
            for i in range(m):
                if dy[i] > 0.0:
                    if us[i] >= INF:
                        if dy[i] * E[i] > _EPS_PINF * dy_norm:
                            bad = True
                    else:
                        sup += us[i] * dy[i]
                elif dy[i] < 0.0:
                    if ls[i] <= -INF:
                        if -dy[i] * E[i] > _EPS_PINF * dy_norm:
                            bad = True
                    else:
                        sup += ls[i] * dy[i]
            if (not bad) and lhs <= _EPS_PINF * dy_norm and sup < -_EPS_PINF * dy_norm:
                status = L.ST_INFEASIBLE
                break

        # slow progress usually means large multipliers on conflicting slacked rows;
        # the polished active-set solution is exact once the right set is found
        if S[L.S_POLISH] > 0.0 and it % _POLISH_EVERY == 0:
            kept, opt, xq, yq, zq, rpq, rdq = _accept_polish(
                Ps, qs, As, ls, us, x, z, y, rp, rd, D, E, c, eps_abs, eps_rel, bAx, bPx, bAty
            )
            if opt:
                x, y, z, rp, rd = xq, yq, zq, rpq, rdq
                status = L.ST_OPTIMAL
                polished_early = True
                break

        if it % _ADAPT_INTERVAL == 0:
            pnum = rp / max(pn, 1e-30)
            dnum = rd / max(dn, 1e-30)
            if dnum > 0.0 and pnum > 0.0:
                rho_new = rho_bar * math.sqrt(pnum / dnum)
                rho_new = min(max(rho_new, _RHO_MIN), _RHO_MAX)
                if rho_new > _ADAPT_TOL * rho_bar or rho_new < rho_bar / _ADAPT_TOL:
                    rho_bar = rho_new
                    _set_rho(rho_bar, ls, us, rho)
                    _factor(Ps, As, rho, sigma, Lf)

    polished = polished_early
    if polished_early:
        pass
    elif status == L.ST_MAXITER and S[L.S_POLISH] > 0.0:
        kept, opt, x, y, z, rp, rd = _accept_polish(
            Ps, qs, As, ls, us, x, z, y, rp, rd, D, E, c, eps_abs, eps_rel, bAx, bPx, bAty
        )
        polished = kept
        if opt:
            status = L.ST_OPTIMAL
    elif status == L.ST_OPTIMAL and S[L.S_POLISH] > 0.0:
        kept, opt, x, y, z, rp, rd = _accept_polish(
            Ps, qs, As, ls, us, x, z, y, rp, rd, D, E, c, eps_abs, eps_rel, bAx, bPx, bAty
        )
        polished = kept
    xo = x * D
    yo = np.empty(m)
    for i in range(m):
        yo[i] = y[i] * E[i] / c
    return xo, yo, status, it, rp, rd, polished


# ---------------------------------------------------------------- python API


@dataclass(frozen=True)
class QpResult:
    x: np.ndarray
    y: np.ndarray
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    polished: bool


def _settings(settings) -> np.ndarray:
    if settings is None:
        return L.default_model().S
    if isinstance(settings, np.ndarray):
        return settings
    return L.resolve(settings).S


def solve_qp(P, q, A, l, u, x0=None, y0=None, settings=None) -> QpResult:
    """Solve ``min 1/2 x'Px + q'x  s.t.  l <= Ax <= u``.

    Infinite bounds may be given as ``np.inf``. ``settings`` is a packed solver array, a
    :class:`~inspection_rta._layout.Model` or a run config.
    """
    P = np.ascontiguousarray(P, dtype=float)
    q = np.ascontiguousarray(q, dtype=float)
    A = np.ascontiguousarray(np.atleast_2d(A), dtype=float)
    l = np.clip(np.asarray(l, dtype=float), -INF, INF)
    u = np.clip(np.asarray(u, dtype=float), -INF, INF)
    n, m = P.shape[0], A.shape[0]
    warm = x0 is not None and y0 is not None
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float)
    x, y, st, it, rp, rd, pol = _admm(P, q, A, l, u, x0, y0, warm, _settings(settings))
    return QpResult(x, y, L.STATUS_NAMES[st], int(it), float(rp), float(rd), bool(pol))


def kkt_residuals(P, q, A, l, u, x, y) -> tuple[float, float, float]:
    """Primal infeasibility, stationarity and complementarity of ``(x, y)``.

    Sign convention: ``y_i <= 0`` at an active lower bound, ``y_i >= 0`` at an active
    upper bound.
    """
    Ax = A @ x
    prim = float(np.max(np.concatenate([[0.0], l - Ax, Ax - u])))
    dual = float(np.max(np.abs(P @ x + q + A.T @ y))) if len(x) else 0.0
    yp = np.maximum(y, 0.0)
    ym = np.minimum(y, 0.0)
    with np.errstate(invalid="ignore"):
        cu = np.where(np.isfinite(u) & (u < INF), yp * (u - Ax), np.where(yp > 0, np.inf, 0.0))
        cl = np.where(np.isfinite(l) & (l > -INF), -ym * (Ax - l), np.where(ym < 0, np.inf, 0.0))
    comp = float(np.max(np.abs(np.concatenate([[0.0], cu, cl]))))
    return prim, dual, comp
