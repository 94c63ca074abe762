"""Pure-Python twin of the compiled sweep kernels.

Same loops and the same floating-point operation order as ``_sweep.pyx``,
so both backends agree to the last bit on platforms without fused
multiply-add contraction.  Roughly two orders of magnitude slower.
"""
from math import sqrt

BIG = 1e300
REACHED = 1e200
DI = (1, 1, 0, -1, -1, -1, 0, 1)
DJ = (0, 1, 1, 1, 0, -1, -1, -1)


def nrm(lam, b1, b2, vx, vy):
    return lam * sqrt(vx * vx + vy * vy) + b1 * vx + b2 * vy


def fval(s, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2):
    lam = la + s * (lb - la)
    b1 = ba1 + s * (bb1 - ba1)
    b2 = ba2 + s * (bb2 - ba2)
    return (wa + s * (wb - wa) + nrm(l0, c1, c2, Px + s * Qx, Py + s * Qy)
            + nrm(lam, b1, b2, Ux - s * Qx, Uy - s * Qy))


def fder(s, wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2):
    lam = la + s * (lb - la)
    b1 = ba1 + s * (bb1 - ba1)
    b2 = ba2 + s * (bb2 - ba2)
    vx = Px + s * Qx
    vy = Py + s * Qy
    r0 = sqrt(vx * vx + vy * vy)
    d = (wb - wa) + c1 * Qx + c2 * Qy
    if r0 > 0:
        d += l0 * (vx * Qx + vy * Qy) / r0
    Vx = Ux - s * Qx
    Vy = Uy - s * Qy
    r1 = sqrt(Vx * Vx + Vy * Vy)
    d += (lb - la) * r1 + (bb1 - ba1) * Vx + (bb2 - ba2) * Vy - b1 * Qx - b2 * Qy
    if r1 > 0:
        d -= lam * (Vx * Qx + Vy * Qy) / r1
    return d


def segmin(wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2):
    args = (wa, wb, Px, Py, Qx, Qy, Ux, Uy, l0, c1, c2, la, ba1, ba2, lb, bb1, bb2)
    fa = fval(0.0, *args)
    fb = fval(1.0, *args)
    best = fa if fa < fb else fb
    a, b, c = 0.0, 1.0, 0.5
    da = fder(0.0, *args)
    db = fder(1.0, *args)
    side = 0
    if da >= 0 or db <= 0:
        return best
    for _ in range(60):
        c = (a * db - b * da) / (db - da)
        fc = fder(c, *args)
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
    v = fval(c, *args)
    return v if v < best else best


def sweep_semi_lagrangian(w, fixed, ox, oy, h, sx, sy, l0, c1, c2, lam, b1, b2, tol, maxit):
    ny, nx = w.shape
    W = w.tolist()
    fx = fixed.tolist()
    L, B1, B2 = lam.tolist(), b1.tolist(), b2.tolist()
    err = 0.0
    try:
        for it in range(maxit):
            err = 0.0
            for o in range(4):
                for jj in range(ny):
                    j = jj if (o & 1) == 0 else ny - 1 - jj
                    for ii in range(nx):
                        i = ii if (o & 2) == 0 else nx - 1 - ii
                        if fx[j][i]:
                            continue
                        zx = ox + i * h - sx
                        zy = oy + j * h - sy
                        d0 = nrm(l0, c1, c2, zx, zy)
                        best = W[j][i] + d0
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
                            wa = W[ja][ia]
                            wb = W[jb][ib]
                            if wa > REACHED and wb > REACHED:
                                continue
                            if wa > REACHED or wb > REACHED:
                                if wa > REACHED:
                                    v = (wb + nrm(l0, c1, c2, zx + DI[k2] * h, zy + DJ[k2] * h)
                                         + nrm(L[k2][j][i], B1[k2][j][i], B2[k2][j][i], -DI[k2] * h, -DJ[k2] * h))
                                else:
                                    v = (wa + nrm(l0, c1, c2, zx + DI[k] * h, zy + DJ[k] * h)
                                         + nrm(L[k][j][i], B1[k][j][i], B2[k][j][i], -DI[k] * h, -DJ[k] * h))
                                if v < best:
                                    best = v
                                continue
                            v = segmin(wa, wb, zx + DI[k] * h, zy + DJ[k] * h,
                                       (DI[k2] - DI[k]) * h, (DJ[k2] - DJ[k]) * h,
                                       -DI[k] * h, -DJ[k] * h, l0, c1, c2,
                                       L[k][j][i], B1[k][j][i], B2[k][j][i],
                                       L[k2][j][i], B1[k2][j][i], B2[k2][j][i])
                            if v < best:
                                best = v
                        nb = best - d0
                        if nb < W[j][i]:
                            if W[j][i] < REACHED and W[j][i] - nb > err:
                                err = W[j][i] - nb
                            elif W[j][i] >= REACHED:
                                err = BIG
                            W[j][i] = nb
            if err < tol:
                return it + 1, err
        return maxit, err
    finally:
        w[...] = W


def codual(lam, b1, b2, p1, p2):
    bt1 = b1 / lam
    bt2 = b2 / lam
    bb = bt1 * bt1 + bt2 * bt2
    bx = bt1 * p1 + bt2 * p2
    return (sqrt((1 - bb) * (p1 * p1 + p2 * p2) + bx * bx) - bx) / (1 - bb) / lam


def sweep_lax_friedrichs(u, fixed, lam, b1, b2, h, tol, maxit):
    ny, nx = u.shape
    U = u.tolist()
    fx = fixed.tolist()
    L, B1, B2 = lam.tolist(), b1.tolist(), b2.tolist()
    err = 0.0
    try:
        for it in range(maxit):
            err = 0.0
            for o in range(4):
                for jj in range(ny):
                    j = jj if (o & 1) == 0 else ny - 1 - jj
                    row = U[j]
                    for ii in range(nx):
                        i = ii if (o & 2) == 0 else nx - 1 - ii
                        if fx[j][i]:
                            continue
                        bt = sqrt(B1[j][i] * B1[j][i] + B2[j][i] * B2[j][i]) / L[j][i]
                        s = 1.0 / (L[j][i] * (1 - bt))
                        if i + 1 < nx:
                            uE = row[i + 1]
                        else:
                            uE = 2 * row[i - 1] - row[i - 2]
                            if row[i - 1] > uE:
                                uE = row[i - 1]
                        if i > 0:
                            uW = row[i - 1]
                        else:
                            uW = 2 * row[1] - row[2]
                            if row[1] > uW:
                                uW = row[1]
                        if j + 1 < ny:
                            uN = U[j + 1][i]
                        else:
                            uN = 2 * U[j - 1][i] - U[j - 2][i]
                            if U[j - 1][i] > uN:
                                uN = U[j - 1][i]
                        if j > 0:
                            uS = U[j - 1][i]
                        else:
                            uS = 2 * U[1][i] - U[2][i]
                            if U[1][i] > uS:
                                uS = U[1][i]
                        p1 = (uE - uW) / (2 * h)
                        p2 = (uN - uS) / (2 * h)
                        H = codual(L[j][i], B1[j][i], B2[j][i], p1, p2)
                        new = (1 - H + s * (uE + uW) / (2 * h) + s * (uN + uS) / (2 * h)) / (2 * s / h)
                        if new < row[i]:
                            if row[i] < REACHED and row[i] - new > err:
                                err = row[i] - new
                            elif row[i] >= REACHED:
                                err = BIG
                            row[i] = new
            if err < tol:
                return it + 1, err
        return maxit, err
    finally:
        u[...] = U


def greedy_pack(order, cj, ci, rad, lam, b1, b2, halfw, h, occ):
    """Greedy disjoint packing of frozen-norm balls, in place on ``occ``."""
    import numpy as np

    ny, nx = occ.shape
    stencils = {}
    sel = []
    for k in order.tolist():
        j, i = int(cj[k]), int(ci[k])
        if occ[j, i] >= 0:
            continue
        w = int(halfw[k])
        if w not in stencils:
            d = np.arange(-w, w + 1) * h
            stencils[w] = np.meshgrid(d, d)
        VX, VY = stencils[w]
        inside = lam[k] * np.sqrt(VX * VX + VY * VY) + b1[k] * VX + b2[k] * VY < rad[k]
        dj, di = np.nonzero(inside)
        jj = j + dj - w
        ii = i + di - w
        if jj.min() < 0 or jj.max() >= ny or ii.min() < 0 or ii.max() >= nx:
            continue
        if np.any(occ[jj, ii] >= 0):
            continue
        occ[jj, ii] = len(sel)
        sel.append(k)
    return np.array(sel, dtype=np.int64)
