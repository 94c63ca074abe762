# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Gauss-Seidel sweeps for the anisotropic eikonal
equation and the greedy packing of disjoint balls.

The metric is a conformal Randers norm N(v) = lam|v| + b.v sampled at the
eight edge midpoints around each node (arrays of shape (8, ny, nx)).
"""
import numpy as np
from libc.math cimport sqrt

cdef double BIG = 1e300
cdef double REACHED = 1e200
cdef int DI[8]
cdef int DJ[8]
DI[:] = [1, 1, 0, -1, -1, -1, 0, 1]
DJ[:] = [0, 1, 1, 1, 0, -1, -1, -1]


cdef inline double nrm(double lam, double b1, double b2, double vx, double vy) nogil:
    return lam * sqrt(vx * vx + vy * vy) + b1 * vx + b2 * vy


cdef inline double fval(double s, double wa, double wb, double Px, double Py,
                        double Qx, double Qy, double Ux, double Uy,
                        double l0, double c1, double c2,
                        double la, double ba1, double ba2,
                        double lb, double bb1, double bb2) nogil:
    cdef double lam = la + s * (lb - la)
    cdef double b1 = ba1 + s * (bb1 - ba1)
    cdef double b2 = ba2 + s * (bb2 - ba2)
    return (wa + s * (wb - wa) + nrm(l0, c1, c2, Px + s * Qx, Py + s * Qy)
            + nrm(lam, b1, b2, Ux - s * Qx, Uy - s * Qy))


cdef inline double fder(double s, double wa, double wb, double Px, double Py,
                        double Qx, double Qy, double Ux, double Uy,
                        double l0, double c1, double c2,
                        double la, double ba1, double ba2,
                        double lb, double bb1, double bb2) nogil:
    cdef double lam = la + s * (lb - la)
    cdef double b1 = ba1 + s * (bb1 - ba1)
    cdef double b2 = ba2 + s * (bb2 - ba2)
    cdef double vx = Px + s * Qx
    cdef double vy = Py + s * Qy
    cdef double r0 = sqrt(vx * vx + vy * vy)
    cdef double d = (wb - wa) + c1 * Qx + c2 * Qy
    if r0 > 0:
        d += l0 * (vx * Qx + vy * Qy) / r0
    cdef double Vx = Ux - s * Qx
    cdef double Vy = Uy - s * Qy
    cdef double r1 = sqrt(Vx * Vx + Vy * Vy)
    d += (lb - la) * r1 + (bb1 - ba1) * Vx + (bb2 - ba2) * Vy - b1 * Qx - b2 * Qy
    if r1 > 0:
        d -= lam * (Vx * Qx + Vy * Qy) / r1
    return d


cdef double segmin(double wa, double wb, double Px, double Py,
                   double Qx, double Qy, double Ux, double Uy,
                   double l0, double c1, double c2,
                   double la, double ba1, double ba2,
                   double lb, double bb1, double bb2) nogil:
    cdef double fa = fval(0.0, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    cdef double fb = fval(1.0, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    cdef double best = fa if fa < fb else fb
    cdef double a = 0.0, b = 1.0, c = 0.5, fc, v
    cdef double da = fder(0.0, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    cdef double db = fder(1.0, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    cdef int side = 0, it
    if da >= 0 or db <= 0:
        return best
    # Illinois regula falsi on the derivative
    for it in range(60):
        c = (a * db - b * da) / (db - da)
        fc = fder(c, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
        if fc > 0:
            b = c
            db = fc
            if side == -1:
                da *= 0.5
            side = -1
        elif fc < 0:
            a = c
            da = fc
            if side == 1:
                db *= 0.5
            side = 1
        else:
            break
        if b - a < 1e-12:
            break
    v = fval(c, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    return v if v < best else best


def sweep_semi_lagrangian(double[:, ::1] w, unsigned char[:, ::1] fixed,
                          double ox, double oy, double h,
                          double sx, double sy, double l0, double c1, double c2,
                          double[:, :, ::1] lam, double[:, :, ::1] b1, double[:, :, ::1] b2,
                          double tol, int maxit):
    """Factored semi-Lagrangian fast sweeping, in place on ``w``.

    The distance is d = d0 + w with d0(z) = l0|z - s| + c.(z - s); pass
    l0 = c1 = c2 = 0 for the unfactored scheme.  Returns (sweeps, last_change).
    """
    cdef Py_ssize_t ny = w.shape[0], nx = w.shape[1]
    cdef Py_ssize_t i, j, ii, jj, ia, ja, ib, jb
    cdef int o, k, k2, it, nit = maxit
    cdef double err = 0.0, best, d0, wa, wb, v, nb, zx, zy
    cdef double Px, Py, Qx, Qy, Ux, Uy
    with nogil:
        for it in range(maxit):
            err = 0.0
            for o in range(4):
                for jj in range(ny):
                    j = jj if (o & 1) == 0 else ny - 1 - jj
                    for ii in range(nx):
                        i = ii if (o & 2) == 0 else nx - 1 - ii
                        if fixed[j, i]:
                            continue
                        zx = ox + i * h - sx
                        zy = oy + j * h - sy
                        d0 = nrm(l0, c1, c2, zx, zy)
                        best = w[j, i] + d0
                        for k in range(8):
                            k2 = (k + 1) % 8
                            ia = i + DI[k]
                            ja = j + DJ[k]
                            ib = i + DI[k2]
                            jb = j + DJ[k2]
                            if ia < 0 or ia >= nx or ja < 0 or ja >= ny:
                                continue
                            if ib < 0 or ib >= nx or jb < 0 or jb >= ny:
                                continue
                            wa = w[ja, ia]
                            wb = w[jb, ib]
                            if wa > REACHED and wb > REACHED:
                                continue
                            if wa > REACHED or wb > REACHED:
                                if wa > REACHED:
                                    v = (wb + nrm(l0, c1, c2, zx + DI[k2] * h, zy + DJ[k2] * h)
                                         + nrm(lam[k2, j, i], b1[k2, j, i], b2[k2, j, i], -DI[k2] * h, -DJ[k2] * h))
                                else:
                                    v = (wa + nrm(l0, c1, c2, zx + DI[k] * h, zy + DJ[k] * h)
                                         + nrm(lam[k, j, i], b1[k, j, i], b2[k, j, i], -DI[k] * h, -DJ[k] * h))
                                if v < best:
                                    best = v
                                continue
                            Px = zx + DI[k] * h
                            Py = zy + DJ[k] * h
                            Qx = (DI[k2] - DI[k]) * h
                            Qy = (DJ[k2] - DJ[k]) * h
                            Ux = -DI[k] * h
                            Uy = -DJ[k] * h
                            v = segmin(wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2,
                                       lam[k, j, i], b1[k, j, i], b2[k, j, i],
                                       lam[k2, j, i], b1[k2, j, i], b2[k2, j, i])
                            if v < best:
                                best = v
                        nb = best - d0
                        if nb < w[j, i]:
                            if w[j, i] < REACHED and w[j, i] - nb > err:
                                err = w[j, i] - nb
                            elif w[j, i] >= REACHED:
                                err = BIG
                            w[j, i] = nb
            if err < tol:
                nit = it + 1
                break
    return nit, err


cdef inline double codual(double lam, double b1, double b2, double p1, double p2) nogil:
    cdef double bt1 = b1 / lam, bt2 = b2 / lam
    cdef double bb = bt1 * bt1 + bt2 * bt2
    cdef double bx = bt1 * p1 + bt2 * p2
    return (sqrt((1 - bb) * (p1 * p1 + p2 * p2) + bx * bx) - bx) / (1 - bb) / lam


def sweep_lax_friedrichs(double[:, ::1] u, unsigned char[:, ::1] fixed,
                         double[:, ::1] lam, double[:, ::1] b1, double[:, ::1] b2,
                         double h, double tol, int maxit):
    """Lax-Friedrichs fast sweeping for F*(x, du) = 1, in place on ``u``."""
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef Py_ssize_t i, j, ii, jj
    cdef int o, it, nit = maxit
    cdef double err = 0.0, s, bt, uE, uW, uN, uS, p1, p2, H, new
    with nogil:
        for it in range(maxit):
            err = 0.0
            for o in range(4):
                for jj in range(ny):
                    j = jj if (o & 1) == 0 else ny - 1 - jj
                    for ii in range(nx):
                        i = ii if (o & 2) == 0 else nx - 1 - ii
                        if fixed[j, i]:
                            continue
                        # viscosity from the bound |dF*/dxi| <= 1/(lam(1-|b|/lam))
                        bt = sqrt(b1[j, i] * b1[j, i] + b2[j, i] * b2[j, i]) / lam[j, i]
                        s = 1.0 / (lam[j, i] * (1 - bt))
                        if i + 1 < nx:
                            uE = u[j, i + 1]
                        else:
                            uE = 2 * u[j, i - 1] - u[j, i - 2]
                            if u[j, i - 1] > uE:
                                uE = u[j, i - 1]
                        if i > 0:
                            uW = u[j, i - 1]
                        else:
                            uW = 2 * u[j, 1] - u[j, 2]
                            if u[j, 1] > uW:
                                uW = u[j, 1]
                        if j + 1 < ny:
                            uN = u[j + 1, i]
                        else:
                            uN = 2 * u[j - 1, i] - u[j - 2, i]
                            if u[j - 1, i] > uN:
                                uN = u[j - 1, i]
                        if j > 0:
                            uS = u[j - 1, i]
                        else:
                            uS = 2 * u[1, i] - u[2, i]
                            if u[1, i] > uS:
                                uS = u[1, i]
                        p1 = (uE - uW) / (2 * h)
                        p2 = (uN - uS) / (2 * h)
                        H = codual(lam[j, i], b1[j, i], b2[j, i], p1, p2)
                        new = (1 - H + s * (uE + uW) / (2 * h) + s * (uN + uS) / (2 * h)) / (2 * s / h)
                        if new < u[j, i]:
                            if u[j, i] < REACHED and u[j, i] - new > err:
                                err = u[j, i] - new
                            elif u[j, i] >= REACHED:
                                err = BIG
                            u[j, i] = new
            if err < tol:
                nit = it + 1
                break
    return nit, err


def greedy_pack(long[::1] order, int[::1] cj, int[::1] ci, double[::1] rad,
                double[::1] lam, double[::1] b1, double[::1] b2, int[::1] halfw,
                double h, int[:, ::1] occ):
    """Greedy disjoint packing of frozen-norm balls, in place on ``occ``.

    Candidates are visited in ``order``; candidate k is the ball
    {z : lam|z - x| + b.(z - x) < rad} around node (cj, ci) and is kept when
    none of its nodes is occupied and it fits in the grid.  Returns the
    kept candidate indices in selection order.
    """
    cdef Py_ssize_t ny = occ.shape[0], nx = occ.shape[1]
    cdef Py_ssize_t n = order.shape[0], t, k, j, i, jj, ii
    cdef int di, dj, w, ok, nsel = 0
    cdef double r, vx, vy
    out = np.empty(n, dtype=np.int64)
    cdef long[::1] sel = out
    with nogil:
        for t in range(n):
            k = order[t]
            j = cj[k]
            i = ci[k]
            if occ[j, i] >= 0:
                continue
            w = halfw[k]
            r = rad[k]
            ok = 1
            for dj in range(-w, w + 1):
                if not ok:
                    break
                for di in range(-w, w + 1):
                    vx = di * h
                    vy = dj * h
                    if lam[k] * sqrt(vx * vx + vy * vy) + b1[k] * vx + b2[k] * vy >= r:
                        continue
                    jj = j + dj
                    ii = i + di
                    if jj < 0 or jj >= ny or ii < 0 or ii >= nx or occ[jj, ii] >= 0:
                        ok = 0
                        break
            if not ok:
                continue
            for dj in range(-w, w + 1):
                for di in range(-w, w + 1):
                    vx = di * h
                    vy = dj * h
                    if lam[k] * sqrt(vx * vx + vy * vy) + b1[k] * vx + b2[k] * vy < r:
                        occ[j + dj, i + di] = nsel
            sel[nsel] = k
            nsel += 1
    return out[:nsel]
