"""Compiled inner loops of the group lasso solver.

Everything works on the Gram form of the least-squares term,
``||Y - Xb||^2 = b'Qb - 2c'b + const``, and keeps ``Qb`` up to date with
rank-p_g corrections after every block change.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _block_exact(evals, evecs, v, t, out):
    """argmin_b b'Ab - 2b'v + t||b|| with A = evecs diag(evals) evecs'.

    Zero when ||v|| <= t/2. Otherwise b = A_k^{-1} v with A_k = A + t/(2 rho) I
    and rho = ||b|| the root of phi(rho) = 1,
    phi(rho) = (sum_i w_i^2 / (evals_i rho + t/2)^2)^(-1/2), w = evecs'v.
    phi is increasing; Newton steps are safeguarded by bisection.
    """
    m = v.shape[0]
    vn = 0.0
    for i in range(m):
        vn += v[i] * v[i]
    vn = np.sqrt(vn)
    if vn <= 0.5 * t:
        for i in range(m):
            out[i] = 0.0
        return
    w = np.zeros(m)
    for j in range(m):
        for i in range(m):
            w[j] += evecs[i, j] * v[i]
    lmin = evals[0]
    for i in range(m):
        if evals[i] < lmin:
            lmin = evals[i]
    h = 0.5 * t
    if h == 0.0:
        coef = w / evals
        for i in range(m):
            out[i] = 0.0
            for j in range(m):
                out[i] += evecs[i, j] * coef[j]
        return
    lo = 0.0
    hi = vn / lmin
    rho = 0.5 * (lo + hi)
    # first guess from the isotropic case evals = lmin
    guess = (vn - h) / lmin
    if guess > lo and guess < hi:
        rho = guess
    for _ in range(200):
        S = 0.0
        dS = 0.0
        for i in range(m):
            s = evals[i] * rho + h
            q = w[i] * w[i] / (s * s)
            S += q
            dS += q * evals[i] / s
        phi = 1.0 / np.sqrt(S)
        if phi < 1.0:
            lo = rho
        else:
            hi = rho
        dphi = dS / (S * np.sqrt(S))
        step = (1.0 - phi) / dphi if dphi > 0.0 else 0.0
        new = rho + step
        if not (new > lo and new < hi):
            new = 0.5 * (lo + hi)
        if abs(new - rho) <= 1e-15 * (1.0 + rho):
            rho = new
            break
        rho = new
    for i in range(m):
        out[i] = 0.0
    for j in range(m):
        coef = w[j] * rho / (evals[j] * rho + h)
        for i in range(m):
            out[i] += evecs[i, j] * coef
    return


@njit(cache=True)
def _sweep(Q, c, offs, sizes, groups, n_groups, evals, evecs, gamma, wts, lam, beta, Qb, exact):
    worst = 0.0
    maxpg = evecs.shape[1]
    new = np.empty(maxpg)
    for k in range(n_groups):
        g = groups[k]
        a = offs[g]
        m = sizes[g]
        b = a + m
        if exact:
            # v = c_g - Q_{g,-g} beta_{-g} = c_g - Qb_g + Q_gg beta_g
            v = c[a:b] - Qb[a:b]
            for i in range(m):
                for j in range(m):
                    v[i] += Q[a + i, a + j] * beta[a + j]
            _block_exact(evals[a:b], evecs[a:b, :m], v, lam * wts[g], new[:m])
        else:
            z = beta[a:b] + (2.0 / gamma[g]) * (c[a:b] - Qb[a:b])
            t = lam * wts[g] / gamma[g]
            nz = np.sqrt(np.sum(z * z))
            if nz <= t:
                for i in range(m):
                    new[i] = 0.0
            else:
                f = 1.0 - t / nz
                for i in range(m):
                    new[i] = f * z[i]
        nd = 0.0
        nn = 0.0
        changed = False
        for i in range(m):
            d = new[i] - beta[a + i]
            if d != 0.0:
                changed = True
            nd += d * d
            nn += new[i] * new[i]
        if changed:
            for i in range(m):
                d = new[i] - beta[a + i]
                if d != 0.0:
                    for r in range(Qb.shape[0]):
                        Qb[r] += Q[r, a + i] * d
                beta[a + i] = new[i]
            rel = np.sqrt(nd) / (1.0 + np.sqrt(nn))
            if rel > worst:
                worst = rel
    return worst


@njit(cache=True)
def kkt_max(Q, c, offs, sizes, wts, lam, beta):
    grad = 2.0 * (c - Q @ beta)
    worst = 0.0
    for g in range(offs.shape[0]):
        a = offs[g]
        b = a + sizes[g]
        bn = np.sqrt(np.sum(beta[a:b] ** 2))
        if bn == 0.0:
            val = np.sqrt(np.sum(grad[a:b] ** 2)) - lam * wts[g]
            if val < 0.0:
                val = 0.0
        else:
            val = np.sqrt(np.sum((grad[a:b] - lam * wts[g] * beta[a:b] / bn) ** 2))
        if val > worst:
            worst = val
    return worst


@njit(cache=True)
def run(Q, c, offs, sizes, evals, evecs, gamma, wts, lam, beta, tol, kkt_tol, max_iter, exact, full_only):
    """Alternate full sweeps with active-set sweeps. Returns (sweeps, converged, kkt)."""
    G = offs.shape[0]
    all_groups = np.arange(G)
    active = np.empty(G, dtype=np.int64)
    Qb = Q @ beta
    it = 0
    kkt = np.inf
    while it < max_iter:
        change = _sweep(Q, c, offs, sizes, all_groups, G, evals, evecs, gamma, wts, lam, beta, Qb, exact)
        it += 1
        if change < tol:
            kkt = kkt_max(Q, c, offs, sizes, wts, lam, beta)
            if kkt <= kkt_tol:
                return it, True, kkt
        if full_only:
            continue
        n_act = 0
        for g in range(G):
            a = offs[g]
            for i in range(sizes[g]):
                if beta[a + i] != 0.0:
                    active[n_act] = g
                    n_act += 1
                    break
        while it < max_iter and n_act > 0:
            change = _sweep(Q, c, offs, sizes, active, n_act, evals, evecs, gamma, wts, lam, beta, Qb, exact)
            it += 1
            if change < tol:
                break
        # refresh to shed round-off accumulated by the rank updates
        Qb[:] = Q @ beta
    kkt = kkt_max(Q, c, offs, sizes, wts, lam, beta)
    return it, False, kkt
