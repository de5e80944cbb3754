"""
Compiled inner loops.

Everything here works on plain arrays so the same code path serves single
steps, long runs and tangent-space propagation. Parameter packing:

    prm  = [mass, eps, rc, alpha_const, mtilde, eps_tilde, rc_tilde, target]
    iprm = [n_wall, mode, cells]

``cells`` is -1 (auto), 0 (double loop) or 1 (cell list). Errors are
returned as integer codes and turned into exceptions by the callers.
"""

import numpy as np
from numba import njit

IK, IE, GENERALIZED, CONSTANT = 0, 1, 2, 3

OK = 0
ERR_ZERO_MOMENTUM = 1
ERR_INFEASIBLE = 2
ERR_MAX_REFLECTIONS = 3
ERR_DEGENERATE_FRAME = 4

P_MASS, P_EPS, P_RC, P_ALPHA, P_MTILDE, P_EPS_T, P_RC_T, P_TARGET = range(8)
I_NWALL, I_MODE, I_CELLS = range(3)

ZERO_P2 = 1e-300
MAX_REFLECTIONS = 100
CELL_THRESHOLD = 64


@njit(cache=True)
def _min_image(dx, L):
    return dx - L * np.ceil(dx / L - 0.5)


@njit(cache=True)
def _min_image_inv(dx, L, inv):
    return dx - L * np.ceil(dx * inv - 0.5)


@njit(cache=True)
def _pair_direct(q, box, nwall, eps, rc, F):
    n, d = q.shape
    F[:, :] = 0.0
    V = 0.0
    if eps == 0.0:
        return V
    rc2 = rc * rc
    dr = np.empty(d)
    inv = 1.0 / box
    for i in range(n - 1):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                dx = q[i, k] - q[j, k]
                if k >= nwall:
                    dx = _min_image_inv(dx, box[k], inv[k])
                dr[k] = dx
                r2 += dx * dx
            if r2 < rc2:
                u = 1.0 - r2 / rc2
                u3 = u * u * u
                V += eps * u3 * u
                c = 8.0 * eps * u3 / rc2
                for k in range(d):
                    F[i, k] += c * dr[k]
                    F[j, k] -= c * dr[k]
    return V


@njit(cache=True)
def _cell_coords(q, box, nwall, ncell, width):
    n, d = q.shape
    cc = np.empty((n, d), dtype=np.int64)
    for i in range(n):
        for k in range(d):
            c = int(np.floor(q[i, k] / width[k]))
            if k >= nwall:
                c = c % ncell[k]
            else:
                if c < 0:
                    c = 0
                elif c >= ncell[k]:
                    c = ncell[k] - 1
            cc[i, k] = c
    return cc


@njit(cache=True)
def _pair_cells(q, box, nwall, eps, rc, F):
    n, d = q.shape
    F[:, :] = 0.0
    V = 0.0
    if eps == 0.0:
        return V
    ncell = np.empty(d, dtype=np.int64)
    width = np.empty(d)
    stride = np.empty(d, dtype=np.int64)
    total = 1
    for k in range(d):
        nc = int(box[k] / rc)
        if nc < 1:
            nc = 1
        ncell[k] = nc
        width[k] = box[k] / nc
        stride[k] = total
        total *= nc
    cc = _cell_coords(q, box, nwall, ncell, width)
    head = -np.ones(total, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    cell_of = np.empty(n, dtype=np.int64)
    # insert in reverse so each cell lists particles in increasing index
    for i in range(n - 1, -1, -1):
        flat = 0
        for k in range(d):
            flat += cc[i, k] * stride[k]
        cell_of[i] = flat
        nxt[i] = head[flat]
        head[flat] = i

    n_off = 3 ** d
    offs = np.empty((n_off, d), dtype=np.int64)
    for o in range(n_off):
        rem = o
        for k in range(d):
            offs[o, k] = rem % 3 - 1
            rem //= 3
    # with three or more cells per dimension no neighbour cell repeats
    dedup = False
    for k in range(d):
        if ncell[k] < 3:
            dedup = True
    neigh = np.empty(n_off, dtype=np.int64)
    inv = 1.0 / box
    rc2 = rc * rc
    dr = np.empty(d)
    for i in range(n):
        m = 0
        for o in range(n_off):
            flat = 0
            valid = True
            for k in range(d):
                c = cc[i, k] + offs[o, k]
                if c < 0:
                    if k < nwall:
                        valid = False
                        break
                    c += ncell[k]
                elif c >= ncell[k]:
                    if k < nwall:
                        valid = False
                        break
                    c -= ncell[k]
                flat += c * stride[k]
            if not valid:
                continue
            seen = False
            if dedup:
                for s in range(m):
                    if neigh[s] == flat:
                        seen = True
                        break
            if not seen:
                neigh[m] = flat
                m += 1
        for s in range(m):
            j = head[neigh[s]]
            while j >= 0:
                if j > i:
                    r2 = 0.0
                    for k in range(d):
                        dx = q[i, k] - q[j, k]
                        if k >= nwall:
                            dx = _min_image_inv(dx, box[k], inv[k])
                        dr[k] = dx
                        r2 += dx * dx
                    if r2 < rc2:
                        u = 1.0 - r2 / rc2
                        u3 = u * u * u
                        V += eps * u3 * u
                        c = 8.0 * eps * u3 / rc2
                        for k in range(d):
                            F[i, k] += c * dr[k]
                            F[j, k] -= c * dr[k]
                j = nxt[j]
    return V


@njit(cache=True)
def pair_forces(q, box, nwall, eps, rc, F, cells):
    """Pair energy; fills F with the pair force -dV/dq."""
    use_cells = cells == 1 or (cells < 0 and q.shape[0] > CELL_THRESHOLD)
    if use_cells:
        return _pair_cells(q, box, nwall, eps, rc, F)
    return _pair_direct(q, box, nwall, eps, rc, F)


@njit(cache=True)
def pair_hessian(q, box, nwall, eps, rc, H):
    n, d = q.shape
    H[:, :] = 0.0
    if eps == 0.0:
        return
    rc2 = rc * rc
    dr = np.empty(d)
    for i in range(n - 1):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                dx = q[i, k] - q[j, k]
                if k >= nwall:
                    dx = _min_image(dx, box[k])
                dr[k] = dx
                r2 += dx * dx
            if r2 < rc2:
                u = 1.0 - r2 / rc2
                c = 8.0 * eps / rc2
                s = c * 6.0 * u * u / rc2
                for a in range(d):
                    for b in range(d):
                        # dr[a] * dr[b] first so that H[a, b] == H[b, a] bitwise
                        h = s * (dr[a] * dr[b])
                        if a == b:
                            h -= c * u * u * u
                        H[i * d + a, i * d + b] += h
                        H[j * d + a, j * d + b] += h
                        H[i * d + a, j * d + b] -= h
                        H[j * d + a, i * d + b] -= h


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    n, d = a.shape
    for i in range(n):
        for k in range(d):
            s += a[i, k] * b[i, k]
    return s


@njit(cache=True)
def gauge_energy(q, g):
    return _dot(q, g)


@njit(cache=True)
def rhs(q, p, box, prm, iprm, xi_force, xi_full, F, Ft, dq, dp):
    """
    Right-hand side of the thermostatted equations of motion.

    Fills dq, dp and F (pair force); returns (alpha, V_pair, err). The
    gauge shift enters the total force with opposite signs through the
    potential and the field, so only ``xi_force`` appears there; ``xi_full``
    is the field seen by the isoenergetic friction.
    """
    n, d = q.shape
    m = prm[P_MASS]
    mode = iprm[I_MODE]
    V = pair_forces(q, box, iprm[I_NWALL], prm[P_EPS], prm[P_RC], F, iprm[I_CELLS])
    p2 = _dot(p, p)
    alpha = 0.0
    err = OK
    if mode == CONSTANT:
        alpha = prm[P_ALPHA]
    elif p2 < ZERO_P2:
        err = ERR_ZERO_MOMENTUM
    elif mode == IK:
        alpha = (_dot(F, p) + _dot(xi_force, p)) / p2
    elif mode == IE:
        alpha = _dot(xi_full, p) / p2
    else:
        pair_forces(q, box, iprm[I_NWALL], prm[P_EPS_T], prm[P_RC_T], Ft, iprm[I_CELLS])
        # (mt/m) dVt/dq - dV/dq + xi, with F = -dV/dq and Ft = -dVt/dq
        alpha = (-(prm[P_MTILDE] / m) * _dot(Ft, p) + _dot(F, p) + _dot(xi_force, p)) / p2
    for i in range(n):
        for k in range(d):
            dq[i, k] = p[i, k] / m
            dp[i, k] = F[i, k] + xi_force[i, k] - alpha * p[i, k]
    return alpha, V, err


@njit(cache=True)
def _axpy(out, x, c, y):
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = x[i, k] + c * y[i, k]


@njit(cache=True)
def _rk4(q, p, h, box, prm, iprm, xi_force, xi_full, w, qo, po):
    """One classical RK4 step of length h from (q, p) into (qo, po)."""
    F, Ft, qs, ps = w[0], w[1], w[2], w[3]
    k1q, k1p, k2q, k2p, k3q, k3p, k4q, k4p = w[4], w[5], w[6], w[7], w[8], w[9], w[10], w[11]
    a1, _, e1 = rhs(q, p, box, prm, iprm, xi_force, xi_full, F, Ft, k1q, k1p)
    if e1 != OK:
        return a1, e1
    _axpy(qs, q, 0.5 * h, k1q)
    _axpy(ps, p, 0.5 * h, k1p)
    _, _, e = rhs(qs, ps, box, prm, iprm, xi_force, xi_full, F, Ft, k2q, k2p)
    if e != OK:
        return a1, e
    _axpy(qs, q, 0.5 * h, k2q)
    _axpy(ps, p, 0.5 * h, k2p)
    _, _, e = rhs(qs, ps, box, prm, iprm, xi_force, xi_full, F, Ft, k3q, k3p)
    if e != OK:
        return a1, e
    _axpy(qs, q, h, k3q)
    _axpy(ps, p, h, k3p)
    _, _, e = rhs(qs, ps, box, prm, iprm, xi_force, xi_full, F, Ft, k4q, k4p)
    if e != OK:
        return a1, e
    c = h / 6.0
    n, d = q.shape
    for i in range(n):
        for k in range(d):
            qo[i, k] = q[i, k] + c * (k1q[i, k] + 2.0 * k2q[i, k] + 2.0 * k3q[i, k] + k4q[i, k])
            po[i, k] = p[i, k] + c * (k1p[i, k] + 2.0 * k2p[i, k] + 2.0 * k3p[i, k] + k4p[i, k])
    return a1, OK


@njit(cache=True)
def _inside(q, box, nwall):
    n = q.shape[0]
    for i in range(n):
        for k in range(nwall):
            if q[i, k] < 0.0 or q[i, k] > box[k]:
                return False
    return True


def workspace(n, d):
    return np.zeros((16, n, d))


@njit(cache=True)
def constrained_energy(q, p, box, prm, iprm, g, F, Ft):
    """Value of the quantity the mode holds fixed (K, H or the generalized H)."""
    m = prm[P_MASS]
    mode = iprm[I_MODE]
    p2 = _dot(p, p)
    if mode == IK or mode == CONSTANT:
        return 0.5 * p2 / m
    if mode == IE:
        V = pair_forces(q, box, iprm[I_NWALL], prm[P_EPS], prm[P_RC], F, iprm[I_CELLS])
        return 0.5 * p2 / m + V + gauge_energy(q, g)
    Vt = pair_forces(q, box, iprm[I_NWALL], prm[P_EPS_T], prm[P_RC_T], Ft, iprm[I_CELLS])
    return 0.5 * p2 / prm[P_MTILDE] + Vt


@njit(cache=True)
def project(q, p, box, prm, iprm, g, F, Ft):
    """
    Rescale p onto the constraint surface. Returns (residual, err) where
    residual is the relative constraint violation before rescaling.
    """
    mode = iprm[I_MODE]
    if mode == CONSTANT:
        return 0.0, OK
    m = prm[P_MASS]
    target = prm[P_TARGET]
    p2 = _dot(p, p)
    if p2 < ZERO_P2:
        return 0.0, ERR_ZERO_MOMENTUM
    if mode == IK:
        kin = 0.5 * p2 / m
        resid = abs(kin / target - 1.0)
        want = target
    elif mode == IE:
        V = pair_forces(q, box, iprm[I_NWALL], prm[P_EPS], prm[P_RC], F, iprm[I_CELLS])
        V += gauge_energy(q, g)
        kin = 0.5 * p2 / m
        resid = abs((kin + V) / target - 1.0)
        want = target - V
    else:
        Vt = pair_forces(q, box, iprm[I_NWALL], prm[P_EPS_T], prm[P_RC_T], Ft, iprm[I_CELLS])
        m = prm[P_MTILDE]
        kin = 0.5 * p2 / m
        resid = abs((kin + Vt) / target - 1.0)
        want = target - Vt
    if want <= 0.0:
        return resid, ERR_INFEASIBLE
    s = np.sqrt(want / kin)
    for i in range(p.shape[0]):
        for k in range(p.shape[1]):
            p[i, k] *= s
    return resid, OK


@njit(cache=True)
def wrap(q, box, nwall):
    n, d = q.shape
    for i in range(n):
        for k in range(nwall, d):
            L = box[k]
            x = q[i, k] - L * np.floor(q[i, k] / L)
            if x >= L:
                x = 0.0
            q[i, k] = x


@njit(cache=True)
def advance(q, p, h, tol, box, prm, iprm, xi_force, xi_full, w):
    """
    RK4 over h with elastic wall reflection, in place on (q, p), without
    projection or wrapping. Returns (alpha_at_start, reflections, err).
    """
    nwall = iprm[I_NWALL]
    qn, pn = w[12], w[13]
    qt, pt = w[14], w[15]
    n, d = q.shape
    left = h
    nref = 0
    alpha0, err = _rk4(q, p, left, box, prm, iprm, xi_force, xi_full, w, qn, pn)
    if err != OK:
        return alpha0, nref, err
    while not _inside(qn, box, nwall):
        lo = 0.0
        hi = left
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            _, err = _rk4(q, p, mid, box, prm, iprm, xi_force, xi_full, w, qt, pt)
            if err != OK:
                return alpha0, nref, err
            if _inside(qt, box, nwall):
                lo = mid
            else:
                hi = mid
        # qn holds the state at hi: it names the offending coordinates
        _, err = _rk4(q, p, hi, box, prm, iprm, xi_force, xi_full, w, qn, pn)
        if err != OK:
            return alpha0, nref, err
        if lo > 0.0:
            _, err = _rk4(q, p, lo, box, prm, iprm, xi_force, xi_full, w, qt, pt)
            if err != OK:
                return alpha0, nref, err
            q[:, :] = qt
            p[:, :] = pt
        for i in range(n):
            for k in range(nwall):
                if qn[i, k] < 0.0 and p[i, k] < 0.0:
                    p[i, k] = -p[i, k]
                elif qn[i, k] > box[k] and p[i, k] > 0.0:
                    p[i, k] = -p[i, k]
        nref += 1
        if nref > MAX_REFLECTIONS:
            return alpha0, nref, ERR_MAX_REFLECTIONS
        left -= lo
        _, err = _rk4(q, p, left, box, prm, iprm, xi_force, xi_full, w, qn, pn)
        if err != OK:
            return alpha0, nref, err
    q[:, :] = qn
    p[:, :] = pn
    return alpha0, nref, OK


@njit(cache=True)
def full_step(q, p, h, tol, projection, box, prm, iprm, xi_force, xi_full, g, w):
    """advance + projection + torus wrap. Returns (alpha, nref, resid, err)."""
    alpha, nref, err = advance(q, p, h, tol, box, prm, iprm, xi_force, xi_full, w)
    if err != OK:
        return alpha, nref, 0.0, err
    resid = 0.0
    if iprm[I_MODE] != CONSTANT:
        if projection:
            resid, err = project(q, p, box, prm, iprm, g, w[0], w[1])
        else:
            e = constrained_energy(q, p, box, prm, iprm, g, w[0], w[1])
            resid = abs(e / prm[P_TARGET] - 1.0)
    wrap(q, box, iprm[I_NWALL])
    return alpha, nref, resid, err


N_OBS = 8


@njit(cache=True)
def observe(q, p, box, prm, iprm, xi_force, xi_full, jnorm, w, out):
    """Fill out[1:] with K, H, alpha, J, V, heat_rate, stat_residual."""
    F, Ft = w[0], w[1]
    m = prm[P_MASS]
    alpha, Vp, err = rhs(q, p, box, prm, iprm, xi_force, xi_full, F, Ft, w[2], w[3])
    p2 = _dot(p, p)
    K = 0.5 * p2 / m
    V = Vp + gauge_energy(q, xi_full - xi_force)
    xp = _dot(xi_full, p)
    gp = xp - _dot(xi_force, p)
    out[1] = K
    out[2] = K + V
    out[3] = alpha
    out[4] = _dot(xi_force, p) * jnorm
    out[5] = V
    out[6] = (xp - alpha * p2) / m
    out[7] = (gp - _dot(F, p)) / m
    return err


@njit(cache=True)
def run_loop(q, p, n_steps, record_every, step0, h, tol, projection, box, prm, iprm,
             xi_force, xi_full, jnorm, rec, stats):
    """
    Advance n_steps, writing a record at the start and after every
    record_every steps. stats = [max_resid, sum_resid, reflections, steps_done].
    Returns (records_written, err).
    """
    n, d = q.shape
    w = np.zeros((16, n, d))
    g = xi_full - xi_force
    nrec = 0
    rec[0, 0] = step0 * h
    err = observe(q, p, box, prm, iprm, xi_force, xi_full, jnorm, w, rec[0])
    if err != OK:
        return 0, err
    nrec = 1
    for s in range(1, n_steps + 1):
        _, nref, resid, err = full_step(q, p, h, tol, projection, box, prm, iprm,
                                        xi_force, xi_full, g, w)
        if err != OK:
            return nrec, err
        stats[3] = s
        stats[2] += nref
        stats[1] += resid
        if resid > stats[0]:
            stats[0] = resid
        if s % record_every == 0:
            rec[nrec, 0] = (step0 + s) * h
            err = observe(q, p, box, prm, iprm, xi_force, xi_full, jnorm, w, rec[nrec])
            if err != OK:
                return nrec, err
            nrec += 1
    return nrec, OK


@njit(cache=True)
def jacobian(q, p, box, prm, iprm, xi_force, xi_full, F, Ft, dq, dp, Hs, J):
    """
    Jacobian of the IK/IE vector field on the flat phase vector (q, p).
    Returns alpha at the point.
    """
    n, d = q.shape
    D = n * d
    m = prm[P_MASS]
    alpha, _, _ = rhs(q, p, box, prm, iprm, xi_force, xi_full, F, Ft, dq, dp)
    pair_hessian(q, box, iprm[I_NWALL], prm[P_EPS], prm[P_RC], Hs)
    pf = p.ravel()
    p2 = np.dot(pf, pf)
    if iprm[I_MODE] == IK:
        num = (F + xi_force).ravel()
        da_dq = -(Hs @ pf) / p2
    else:
        num = xi_full.ravel()
        da_dq = np.zeros(D)
    da_dp = num / p2 - 2.0 * alpha * pf / p2
    J[:, :] = 0.0
    for a in range(D):
        J[a, D + a] = 1.0 / m
        for b in range(D):
            J[D + a, b] = -Hs[a, b] - pf[a] * da_dq[b]
            J[D + a, D + b] = -pf[a] * da_dp[b]
        J[D + a, D + a] -= alpha
    return alpha


@njit(cache=True)
def lyapunov_loop(q, p, W, n_steps, reorth_every, h, projection, box, prm, iprm,
                  xi_force, xi_full, logsum, div_acc):
    """
    Propagate state and tangent frame W (2D x k) with RK4 on the variational
    equations, QR-reorthonormalising every reorth_every steps. logsum
    accumulates log|R_ii|; div_acc[0] accumulates the divergence -(D-1) alpha
    integrated over time. Returns err.
    """
    n, d = q.shape
    D = n * d
    w = np.zeros((16, n, d))
    F, Ft = w[0], w[1]
    Hs = np.zeros((D, D))
    J = np.zeros((2 * D, 2 * D))
    qs = np.empty((n, d))
    ps = np.empty((n, d))
    kq = np.empty((4, n, d))
    kp = np.empty((4, n, d))
    kw = np.empty((4, W.shape[0], W.shape[1]))
    Ws = np.empty_like(W)
    g = xi_full - xi_force
    coef = np.array([0.0, 0.5, 0.5, 1.0])
    for s in range(1, n_steps + 1):
        for st in range(4):
            if st == 0:
                qs[:, :] = q
                ps[:, :] = p
                Ws[:, :] = W
            else:
                c = coef[st] * h
                qs[:, :] = q + c * kq[st - 1]
                ps[:, :] = p + c * kp[st - 1]
                Ws[:, :] = W + c * kw[st - 1]
            if np.dot(ps.ravel(), ps.ravel()) < ZERO_P2:
                return ERR_ZERO_MOMENTUM
            a = jacobian(qs, ps, box, prm, iprm, xi_force, xi_full, F, Ft,
                         w[2], w[3], Hs, J)
            if st == 0:
                div_acc[0] += -(D - 1) * a * h
            kq[st, :, :] = w[2]
            kp[st, :, :] = w[3]
            kw[st, :, :] = J @ Ws
        c = h / 6.0
        q[:, :] = q + c * (kq[0] + 2.0 * kq[1] + 2.0 * kq[2] + kq[3])
        p[:, :] = p + c * (kp[0] + 2.0 * kp[1] + 2.0 * kp[2] + kp[3])
        W[:, :] = W + c * (kw[0] + 2.0 * kw[1] + 2.0 * kw[2] + kw[3])
        if projection:
            _, err = project(q, p, box, prm, iprm, g, F, Ft)
            if err != OK:
                return err
        wrap(q, box, iprm[I_NWALL])
        if s % reorth_every == 0 or s == n_steps:
            Q, R = np.linalg.qr(W)
            for i in range(R.shape[0]):
                r = R[i, i]
                if abs(r) < 1e-300:
                    return ERR_DEGENERATE_FRAME
                logsum[i] += np.log(abs(r))
                if r < 0.0:
                    Q[:, i] = -Q[:, i]
            W[:, :] = Q
    return OK
