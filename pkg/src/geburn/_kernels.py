"""Fused numba kernels for the 1-d and 2-d hot paths.

Each discounted chunk runs up to `nsteps` damped fixed-point iterations of

    v <- clip_box( v - clip(omega * res / (lam + D), +-h) + shift )

where res = lam*v + rhs(v), D is a per-node upper bound on the row mass of
the residual Jacobian, and shift is a mean correction (clipped to +-h/2)
applied only while no node has clamped speed: a uniform shift is exactly
neutral for rhs, so it solves the slow constant mode in one move, but once
the cutoff pins nodes their equations fix absolute values and shifting
fights the anchors.

The arithmetic here must match the reference implementation in
operators.g_operator; tests compare the two on random fields.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def rhs_speed_kappa_2d(v, fvals, p1, p2, plast, d, A, cutoff, h, rhs, speed, kappa):
    """Single operator evaluation (2-d), filling rhs/speed/kappa in place."""
    N0, N1 = v.shape
    inv2h = 0.5 / h
    invh = 1.0 / h
    pl2 = plast * plast
    Apl = A * plast
    F0 = np.empty_like(v)
    F1 = np.empty_like(v)
    for i in range(N0):
        ip = i + 1 if i + 1 < N0 else 0
        for j in range(N1):
            jp = j + 1 if j + 1 < N1 else 0
            jm = j - 1 if j >= 1 else N1 - 1
            im = i - 1 if i >= 1 else N0 - 1
            nrm = (v[ip, j] - v[i, j]) * invh + p1
            tang = 0.5 * ((v[i, jp] - v[i, jm]) + (v[ip, jp] - v[ip, jm])) * inv2h + p2
            F0[i, j] = nrm / np.sqrt(pl2 + nrm * nrm + tang * tang)
            nrm1 = (v[i, jp] - v[i, j]) * invh + p2
            tang1 = 0.5 * ((v[ip, j] - v[im, j]) + (v[ip, jp] - v[im, jp])) * inv2h + p1
            F1[i, j] = nrm1 / np.sqrt(pl2 + nrm1 * nrm1 + tang1 * tang1)
    for i in range(N0):
        ip = i + 1 if i + 1 < N0 else 0
        im = i - 1 if i >= 1 else N0 - 1
        for j in range(N1):
            jp = j + 1 if j + 1 < N1 else 0
            jm = j - 1 if j >= 1 else N1 - 1
            k = (F0[i, j] - F0[im, j] + F1[i, j] - F1[i, jm]) * invh
            kappa[i, j] = k
            s = 1.0 - d * k
            if cutoff and s < 0.0:
                s = 0.0
            speed[i, j] = s
            q0 = p1 + (v[ip, j] - v[im, j]) * inv2h
            q1 = p2 + (v[i, jp] - v[i, jm]) * inv2h
            mag = np.sqrt(pl2 + q0 * q0 + q1 * q1)
            m0 = max(abs(p1 + (v[ip, j] - v[i, j]) * invh), abs(p1 + (v[i, j] - v[im, j]) * invh))
            m1 = max(abs(p2 + (v[i, jp] - v[i, j]) * invh), abs(p2 + (v[i, j] - v[i, jm]) * invh))
            a0 = m0 / np.sqrt(pl2 + m0 * m0)
            a1 = m1 / np.sqrt(pl2 + m1 * m1)
            diss = a0 * (v[ip, j] - 2.0 * v[i, j] + v[im, j]) * inv2h \
                 + a1 * (v[i, jp] - 2.0 * v[i, j] + v[i, jm]) * inv2h
            rhs[i, j] = s * mag - abs(s) * diss + Apl * fvals[i, j]


@njit(cache=True)
def rhs_speed_kappa_1d(v, fvals, p1, plast, d, A, cutoff, h, rhs, speed, kappa):
    """Single operator evaluation (1-d)."""
    N0 = v.shape[0]
    inv2h = 0.5 / h
    invh = 1.0 / h
    pl2 = plast * plast
    Apl = A * plast
    F0 = np.empty_like(v)
    for i in range(N0):
        ip = i + 1 if i + 1 < N0 else 0
        nrm = (v[ip] - v[i]) * invh + p1
        F0[i] = nrm / np.sqrt(pl2 + nrm * nrm)
    for i in range(N0):
        ip = i + 1 if i + 1 < N0 else 0
        im = i - 1 if i >= 1 else N0 - 1
        k = (F0[i] - F0[im]) * invh
        kappa[i] = k
        s = 1.0 - d * k
        if cutoff and s < 0.0:
            s = 0.0
        speed[i] = s
        q0 = p1 + (v[ip] - v[im]) * inv2h
        mag = np.sqrt(pl2 + q0 * q0)
        m0 = max(abs(p1 + (v[ip] - v[i]) * invh), abs(p1 + (v[i] - v[im]) * invh))
        a0 = m0 / np.sqrt(pl2 + m0 * m0)
        diss = a0 * (v[ip] - 2.0 * v[i] + v[im]) * inv2h
        rhs[i] = s * mag - abs(s) * diss + Apl * fvals[i]


@njit(cache=True)
def discounted_chunk_2d(v, fvals, p1, p2, plast, d, A, cutoff, h, lam, tol, omega,
                        nsteps, lo, hi, F0, F1, C0, C1, res, speed, diag):
    """Up to nsteps iterations; returns (steps_done, sup_residual, converged, n_stalled)."""
    N0, N1 = v.shape
    inv2h = 0.5 / h
    invh = 1.0 / h
    pl2 = plast * plast
    Apl = A * plast
    cap = h
    shift_cap = 0.5 * h
    rn = 0.0
    nstall = 0
    for step in range(nsteps):
        for i in range(N0):
            ip = i + 1 if i + 1 < N0 else 0
            im = i - 1 if i >= 1 else N0 - 1
            for j in range(N1):
                jp = j + 1 if j + 1 < N1 else 0
                jm = j - 1 if j >= 1 else N1 - 1
                nrm = (v[ip, j] - v[i, j]) * invh + p1
                tang = 0.5 * ((v[i, jp] - v[i, jm]) + (v[ip, jp] - v[ip, jm])) * inv2h + p2
                W2 = pl2 + nrm * nrm + tang * tang
                W = np.sqrt(W2)
                F0[i, j] = nrm / W
                C0[i, j] = ((pl2 + tang * tang) + abs(nrm * tang)) / (W2 * W)
                nrm1 = (v[i, jp] - v[i, j]) * invh + p2
                tang1 = 0.5 * ((v[ip, j] - v[im, j]) + (v[ip, jp] - v[im, jp])) * inv2h + p1
                W2b = pl2 + nrm1 * nrm1 + tang1 * tang1
                Wb = np.sqrt(W2b)
                F1[i, j] = nrm1 / Wb
                C1[i, j] = ((pl2 + tang1 * tang1) + abs(nrm1 * tang1)) / (W2b * Wb)
        rn = 0.0
        ressum = 0.0
        nstall = 0
        for i in range(N0):
            ip = i + 1 if i + 1 < N0 else 0
            im = i - 1 if i >= 1 else N0 - 1
            for j in range(N1):
                jp = j + 1 if j + 1 < N1 else 0
                jm = j - 1 if j >= 1 else N1 - 1
                k = (F0[i, j] - F0[im, j] + F1[i, j] - F1[i, jm]) * invh
                s = 1.0 - d * k
                if cutoff and s < 0.0:
                    s = 0.0
                speed[i, j] = s
                q0 = p1 + (v[ip, j] - v[im, j]) * inv2h
                q1 = p2 + (v[i, jp] - v[i, jm]) * inv2h
                mag = np.sqrt(pl2 + q0 * q0 + q1 * q1)
                m0 = max(abs(p1 + (v[ip, j] - v[i, j]) * invh), abs(p1 + (v[i, j] - v[im, j]) * invh))
                m1 = max(abs(p2 + (v[i, jp] - v[i, j]) * invh), abs(p2 + (v[i, j] - v[i, jm]) * invh))
                a0 = m0 / np.sqrt(pl2 + m0 * m0)
                a1 = m1 / np.sqrt(pl2 + m1 * m1)
                diss = a0 * (v[ip, j] - 2.0 * v[i, j] + v[im, j]) * inv2h \
                     + a1 * (v[i, jp] - 2.0 * v[i, j] + v[i, jm]) * inv2h
                sa = abs(s)
                r = lam * v[i, j] + s * mag - sa * diss + Apl * fvals[i, j]
                res[i, j] = r
                ar = abs(r)
                if ar > rn:
                    rn = ar
                ressum += r
                if s == 0.0:
                    nstall += 1
                D = 2.0 * sa * (a0 + a1) * invh
                if sa > 0.0:
                    csum = C0[i, j] + C0[im, j] + C1[i, j] + C1[i, jm]
                    D += d * (mag + abs(diss) + abs(mag - diss)) * csum * invh * invh
                diag[i, j] = D
        if rn <= tol:
            return step, rn, True, nstall
        shift = 0.0
        if nstall == 0:
            shift = -omega * (ressum / (N0 * N1)) / lam
            if shift > shift_cap:
                shift = shift_cap
            elif shift < -shift_cap:
                shift = -shift_cap
        for i in range(N0):
            for j in range(N1):
                dv = omega * res[i, j] / (lam + diag[i, j])
                if dv > cap:
                    dv = cap
                elif dv < -cap:
                    dv = -cap
                x = v[i, j] - dv + shift
                if x < lo:
                    x = lo
                elif x > hi:
                    x = hi
                v[i, j] = x
    return nsteps, rn, False, nstall


@njit(cache=True)
def discounted_chunk_1d(v, fvals, p1, plast, d, A, cutoff, h, lam, tol, omega,
                        nsteps, lo, hi, F0, C0, res, speed, diag):
    N0 = v.shape[0]
    inv2h = 0.5 / h
    invh = 1.0 / h
    pl2 = plast * plast
    Apl = A * plast
    cap = h
    shift_cap = 0.5 * h
    rn = 0.0
    nstall = 0
    for step in range(nsteps):
        for i in range(N0):
            ip = i + 1 if i + 1 < N0 else 0
            nrm = (v[ip] - v[i]) * invh + p1
            W2 = pl2 + nrm * nrm
            W = np.sqrt(W2)
            F0[i] = nrm / W
            C0[i] = pl2 / (W2 * W)
        rn = 0.0
        ressum = 0.0
        nstall = 0
        for i in range(N0):
            ip = i + 1 if i + 1 < N0 else 0
            im = i - 1 if i >= 1 else N0 - 1
            k = (F0[i] - F0[im]) * invh
            s = 1.0 - d * k
            if cutoff and s < 0.0:
                s = 0.0
            speed[i] = s
            q0 = p1 + (v[ip] - v[im]) * inv2h
            mag = np.sqrt(pl2 + q0 * q0)
            m0 = max(abs(p1 + (v[ip] - v[i]) * invh), abs(p1 + (v[i] - v[im]) * invh))
            a0 = m0 / np.sqrt(pl2 + m0 * m0)
            diss = a0 * (v[ip] - 2.0 * v[i] + v[im]) * inv2h
            sa = abs(s)
            r = lam * v[i] + s * mag - sa * diss + Apl * fvals[i]
            res[i] = r
            ar = abs(r)
            if ar > rn:
                rn = ar
            ressum += r
            if s == 0.0:
                nstall += 1
            D = 2.0 * sa * a0 * invh
            if sa > 0.0:
                D += d * (mag + abs(diss) + abs(mag - diss)) * (C0[i] + C0[im]) * invh * invh
            diag[i] = D
        if rn <= tol:
            return step, rn, True, nstall
        shift = 0.0
        if nstall == 0:
            shift = -omega * (ressum / N0) / lam
            if shift > shift_cap:
                shift = shift_cap
            elif shift < -shift_cap:
                shift = -shift_cap
        for i in range(N0):
            dv = omega * res[i] / (lam + diag[i])
            if dv > cap:
                dv = cap
            elif dv < -cap:
                dv = -cap
            x = v[i] - dv + shift
            if x < lo:
                x = lo
            elif x > hi:
                x = hi
            v[i] = x
    return nsteps, rn, False, nstall


@njit(cache=True)
def evolve_chunk_2d(v, fvals, p1, p2, plast, d, A, cutoff, h, dt, nsteps, rhs, speed, kappa):
    """nsteps explicit Euler steps v <- v - dt*rhs(v); returns sup|v|."""
    N0, N1 = v.shape
    vmax = 0.0
    for _ in range(nsteps):
        rhs_speed_kappa_2d(v, fvals, p1, p2, plast, d, A, cutoff, h, rhs, speed, kappa)
        vmax = 0.0
        for i in range(N0):
            for j in range(N1):
                v[i, j] = v[i, j] - dt * rhs[i, j]
                av = abs(v[i, j])
                if av > vmax:
                    vmax = av
    return vmax


@njit(cache=True)
def evolve_chunk_1d(v, fvals, p1, plast, d, A, cutoff, h, dt, nsteps, rhs, speed, kappa):
    N0 = v.shape[0]
    vmax = 0.0
    for _ in range(nsteps):
        rhs_speed_kappa_1d(v, fvals, p1, plast, d, A, cutoff, h, rhs, speed, kappa)
        vmax = 0.0
        for i in range(N0):
            v[i] = v[i] - dt * rhs[i]
            av = abs(v[i])
            if av > vmax:
                vmax = av
    return vmax
