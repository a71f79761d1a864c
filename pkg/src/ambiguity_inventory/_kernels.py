"""Compiled inner loops. Array layouts are fixed: slices are (n_x, n_m),
stencil tables are (7, n_m) in the direction order of ``solver.DIRECTIONS``."""
import math

from numba import njit


@njit(cache=True)
def jacobi_sweep(vo, vn, prev, probs, dt, disc, fx, h1, h2, b, S, gamma, ell, uu, tilted):
    """One Jacobi sweep of the Bellman operator; returns the sup-norm change.

    Reads only ``vo`` and ``prev`` and writes every node of ``vn``; the
    belief-boundary rows are mirrored from the freshly written interior.
    """
    nx, nm = vo.shape
    half_gs = 0.5 * gamma * S
    for i in range(nx):
        for j in range(1, nm - 1):
            if i == 0:
                val = vo[1, j] + h1 * ell
            elif i == nx - 1:
                val = vo[nx - 2, j] + h1 * uu
            else:
                v0 = vo[i, j]
                xp = vo[i + 1, j]
                xm = vo[i - 1, j]
                mp = vo[i, j + 1]
                mm = vo[i, j - 1]
                acc = (probs[0, j] * xp + probs[1, j] * xm + probs[2, j] * mp
                       + probs[3, j] * mm + probs[4, j] * vo[i + 1, j + 1]
                       + probs[5, j] * vo[i - 1, j - 1] + probs[6, j] * prev[i, j])
                fwd = b * (xp - v0) / h1 + S * (mp - v0) / h2
                bwd = b * (v0 - xm) / h1 + S * (v0 - mm) / h2
                dp = fwd if fwd > 0.0 else 0.0
                dm = -bwd if bwd < 0.0 else 0.0
                tot = dp + dm
                if tilted:
                    # penalty rewritten as tilt rates kappa_j times (V_j - V_0),
                    # with the centre term moved to the left-hand side
                    kx = 0.0
                    km = 0.0
                    tilt = 0.0
                    qsum = 0.0
                    if dp > 0.0:
                        kx = half_gs * tot * b / h1
                        km = half_gs * tot * S / h2
                        tilt += kx * xp + km * mp
                        qsum += kx + km
                    if dm > 0.0:
                        kx = half_gs * tot * b / h1
                        km = half_gs * tot * S / h2
                        tilt += kx * xm + km * mm
                        qsum += kx + km
                    vc = (disc[j] * acc + fx[i] * dt[j] + dt[j] * tilt) / (1.0 + dt[j] * qsum)
                else:
                    vc = disc[j] * acc + fx[i] * dt[j] + half_gs * tot * tot * dt[j]
                val = vc
                vl = xp + h1 * ell
                if vl < val:
                    val = vl
                vu = xm + h1 * uu
                if vu < val:
                    val = vu
            vn[i, j] = val
        vn[i, 0] = vn[i, 1]
        vn[i, nm - 1] = vn[i, nm - 2]
    res = 0.0
    for i in range(nx):
        for j in range(nm):
            d = abs(vn[i, j] - vo[i, j])
            if d != d:
                return d
            if d > res:
                res = d
    return res


@njit(cache=True)
def simulate_block(z, theta, x0, m0, a, b, s, rho, ell, uu, c_lo, c_hi, dt,
                   m_lo, m_hi, reflect, controls, ground_truth,
                   lower, upper, delta, T, grid_m_lo, h2,
                   obs_steps, obs_x, obs_m, obs_gap,
                   hold, lctl, uctl, total, rec):
    """Advance a block of paths. ``z`` holds the standard normals, one row per
    path. Returns -1, or the index of the first path that met an ill-posed
    barrier pair (lower >= upper)."""
    n_paths, n_steps = z.shape
    n_tau, n_m = lower.shape
    sqdt = math.sqrt(dt)
    n_obs = obs_steps.shape[0]
    record = rec.shape[0] > 0
    for p in range(n_paths):
        x = x0
        m = m0
        S = s
        ch = 0.0
        cl = 0.0
        cu = 0.0
        k_obs = 0
        if controls:
            k = n_tau - 1
            jm = int(math.floor((m - grid_m_lo) / h2 + 0.5))
            jm = min(max(jm, 0), n_m - 1)
            lo = lower[k, jm]
            hi = upper[k, jm]
            if lo >= hi:
                return p
            if x < lo:
                cl += ell * (lo - x)
                x = lo
            elif x > hi:
                cu += uu * (x - hi)
                x = hi
        if record:
            rec[0, 0] = 0.0
            rec[0, 1] = x
            rec[0, 2] = m
            rec[0, 3] = S
            rec[0, 4] = ch
            rec[0, 5] = cl
            rec[0, 6] = cu
            rec[0, 7] = ch + cl + cu
        while k_obs < n_obs and obs_steps[k_obs] == 0:
            obs_x[p, k_obs] = x
            obs_m[p, k_obs] = m
            obs_gap[p, k_obs] = (b / S) * m if S > 0.0 else 0.0
            k_obs += 1
        for n in range(n_steps):
            t = n * dt
            t1 = (n + 1) * dt
            disc = math.exp(-rho * t)
            f = c_lo * (-x) if x < 0.0 else c_hi * x
            ch += disc * f * dt
            S1 = s / (1.0 + s * t1)
            if ground_truth:
                dx = (a - b * theta[p]) * dt + b * sqdt * z[p, n]
                # exact Gaussian update of the belief given the increment dx
                y = dx - a * dt
                m_new = S1 * (m / S - y / b) if S > 0.0 else m
                x += dx
                m = m_new
            else:
                dw = sqdt * z[p, n]
                x += (a - b * m) * dt + b * dw
                # sqrt(S_n S_{n+1}) makes the belief variance increment exact
                m += math.sqrt(S * S1) * dw
            S = S1
            if reflect:
                if m < m_lo:
                    m = m_lo
                elif m > m_hi:
                    m = m_hi
            if controls:
                tau = T - t1
                k = int(math.floor(tau / delta + 1e-9))
                k = min(max(k, 0), n_tau - 1)
                jm = int(math.floor((m - grid_m_lo) / h2 + 0.5))
                jm = min(max(jm, 0), n_m - 1)
                lo = lower[k, jm]
                hi = upper[k, jm]
                if lo >= hi:
                    return p
                disc1 = math.exp(-rho * t1)
                if x < lo:
                    cl += disc1 * ell * (lo - x)
                    x = lo
                elif x > hi:
                    cu += disc1 * uu * (x - hi)
                    x = hi
            if record:
                rec[n + 1, 0] = t1
                rec[n + 1, 1] = x
                rec[n + 1, 2] = m
                rec[n + 1, 3] = S
                rec[n + 1, 4] = ch
                rec[n + 1, 5] = cl
                rec[n + 1, 6] = cu
                rec[n + 1, 7] = ch + cl + cu
            while k_obs < n_obs and obs_steps[k_obs] == n + 1:
                obs_x[p, k_obs] = x
                obs_m[p, k_obs] = m
                obs_gap[p, k_obs] = (b / S) * m if S > 0.0 else 0.0
                k_obs += 1
        hold[p] = ch
        lctl[p] = cl
        uctl[p] = cu
        total[p] = ch + cl + cu
    return -1

