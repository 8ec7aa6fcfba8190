"""Compiled inner loops.

The pair kernel walks a contiguous range ``[p0, p1)`` of the flattened
molecule-pair index space (i < j, row major) and accumulates into the buffers
it is handed. It releases the GIL, so several ranges can run concurrently on
private buffers.
"""

import math

import numba
import numpy as np

MODE_NONE = 0
MODE_RF = 1
MODE_EWALD = 2

# scalar slots
S_ULJ = 0
S_UELEC = 1
S_DL = 2  # dU/dlambda
S_DLL = 3  # d2U/dlambda2
S_VIRIAL = 4
S_SHIFT = 5
N_SCALARS = 6

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


@numba.njit(cache=True, nogil=True)
def pair_row_start(i, n):
    return i * (2 * n - i - 1) // 2


@numba.njit(cache=True, nogil=True)
def pair_chunk(
    p0,
    p1,
    com,
    site_start,
    offs,
    ext,
    stype,
    sq,
    box,
    rc2,
    sig2,
    eps4,
    mode,
    par_a,
    par_b,
    with_flux,
    force,
    torque,
    scal,
    e_mol,
    t_mol,
    r_mol,
):
    n = com.shape[0]
    if p1 <= p0 or n < 2:
        return
    i = 0
    while pair_row_start(i + 1, n) <= p0:
        i += 1
    j = i + 1 + (p0 - pair_row_start(i, n))
    rc = math.sqrt(rc2)
    inv_box = 1.0 / box
    rf_loc = np.zeros(9)
    ti_loc = np.zeros(9)
    tj_loc = np.zeros(9)
    a_ulj = 0.0
    a_uel = 0.0
    a_dl = 0.0
    a_dll = 0.0
    a_vir = 0.0
    a_shift = 0.0
    for _ in range(p0, p1):
        rx = com[i, 0] - com[j, 0]
        ry = com[i, 1] - com[j, 1]
        rz = com[i, 2] - com[j, 2]
        rx -= box * math.floor(rx * inv_box + 0.5)
        ry -= box * math.floor(ry * inv_box + 0.5)
        rz -= box * math.floor(rz * inv_box + 0.5)
        rr = rx * rx + ry * ry + rz * rz
        reach = rc + ext[i] + ext[j]
        if rr < reach * reach:
            fxi = 0.0
            fyi = 0.0
            fzi = 0.0
            txi = 0.0
            tyi = 0.0
            tzi = 0.0
            txj = 0.0
            tyj = 0.0
            tzj = 0.0
            upair = 0.0
            if with_flux:
                for p in range(9):
                    rf_loc[p] = 0.0
                    ti_loc[p] = 0.0
                    tj_loc[p] = 0.0
            for a in range(site_start[i], site_start[i + 1]):
                ta = stype[a]
                qa = sq[a]
                for b in range(site_start[j], site_start[j + 1]):
                    dx = rx + offs[a, 0] - offs[b, 0]
                    dy = ry + offs[a, 1] - offs[b, 1]
                    dz = rz + offs[a, 2] - offs[b, 2]
                    # the nearest image of a site pair can differ from that of the centres
                    sx = box * math.floor(dx * inv_box + 0.5)
                    sy = box * math.floor(dy * inv_box + 0.5)
                    sz = box * math.floor(dz * inv_box + 0.5)
                    dx -= sx
                    dy -= sy
                    dz -= sz
                    cx = rx - sx
                    cy = ry - sy
                    cz = rz - sz
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 >= rc2:
                        continue
                    du = 0.0  # u'(r)
                    d2u = 0.0  # u''(r)
                    u = 0.0
                    tb = stype[b]
                    have = False
                    r = math.sqrt(r2)
                    inv2 = 1.0 / r2
                    if ta >= 0 and tb >= 0 and eps4[ta, tb] > 0.0:
                        s6 = sig2[ta, tb] * inv2
                        s6 = s6 * s6 * s6
                        s12 = s6 * s6
                        e4 = eps4[ta, tb]
                        ulj = e4 * (s12 - s6)
                        a_ulj += ulj
                        u += ulj
                        du += -6.0 * e4 * (2.0 * s12 - s6) / r
                        d2u += 6.0 * e4 * (26.0 * s12 - 7.0 * s6) * inv2
                        c6 = sig2[ta, tb] / rc2
                        c6 = c6 * c6 * c6
                        a_shift += e4 * (c6 * c6 - c6)
                        have = True
                    qq = qa * sq[b]
                    if mode != MODE_NONE and qq != 0.0:
                        if mode == MODE_RF:
                            ue = qq * (1.0 / r + par_a * r2 - par_b)
                            du += qq * (-1.0 / r2 + 2.0 * par_a * r)
                            d2u += qq * (2.0 / (r2 * r) + 2.0 * par_a)
                        else:
                            ar = par_a * r
                            erfc_ar = math.erfc(ar)
                            ue = qq * erfc_ar / r
                            du += -qq * (erfc_ar / r2 + _TWO_OVER_SQRT_PI * par_a * math.exp(-ar * ar) / r)
                        a_uel += ue
                        u += ue
                        have = True
                    if not have:
                        continue
                    fr = -du / r
                    fx = fr * dx
                    fy = fr * dy
                    fz = fr * dz
                    fxi += fx
                    fyi += fy
                    fzi += fz
                    txi += offs[a, 1] * fz - offs[a, 2] * fy
                    tyi += offs[a, 2] * fx - offs[a, 0] * fz
                    tzi += offs[a, 0] * fy - offs[a, 1] * fx
                    txj -= offs[b, 1] * fz - offs[b, 2] * fy
                    tyj -= offs[b, 2] * fx - offs[b, 0] * fz
                    tzj -= offs[b, 0] * fy - offs[b, 1] * fx
                    x = dx * cx + dy * cy + dz * cz
                    dr_dl = x / r
                    a_dl += du * dr_dl
                    a_dll += d2u * dr_dl * dr_dl + du * (cx * cx + cy * cy + cz * cz - x * x * inv2) / r
                    a_vir += cx * fx + cy * fy + cz * fz
                    upair += u
                    if with_flux:
                        cv = (cx, cy, cz)
                        fv = (fx, fy, fz)
                        tav = (offs[a, 1] * fz - offs[a, 2] * fy, offs[a, 2] * fx - offs[a, 0] * fz, offs[a, 0] * fy - offs[a, 1] * fx)
                        tbv = (offs[b, 1] * fz - offs[b, 2] * fy, offs[b, 2] * fx - offs[b, 0] * fz, offs[b, 0] * fy - offs[b, 1] * fx)
                        for p in range(3):
                            for q in range(3):
                                rf_loc[3 * p + q] += cv[p] * fv[q]
                                ti_loc[3 * p + q] += cv[p] * tav[q]
                                tj_loc[3 * p + q] += cv[p] * tbv[q]
            force[i, 0] += fxi
            force[i, 1] += fyi
            force[i, 2] += fzi
            force[j, 0] -= fxi
            force[j, 1] -= fyi
            force[j, 2] -= fzi
            torque[i, 0] += txi
            torque[i, 1] += tyi
            torque[i, 2] += tzi
            torque[j, 0] += txj
            torque[j, 1] += tyj
            torque[j, 2] += tzj
            if with_flux:
                e_mol[i] += upair
                e_mol[j] += upair
                for p in range(9):
                    t_mol[i, p] += rf_loc[p]
                    t_mol[j, p] += rf_loc[p]
                    r_mol[i, p] += ti_loc[p]
                    r_mol[j, p] += tj_loc[p]
        j += 1
        if j == n:
            i += 1
            j = i + 1
    scal[S_ULJ] += a_ulj
    scal[S_UELEC] += a_uel
    scal[S_DL] += a_dl
    scal[S_DLL] += a_dll
    scal[S_VIRIAL] += a_vir
    scal[S_SHIFT] += a_shift


@numba.njit(cache=True, nogil=True)
def rdf_chunk(p0, p1, com, site_start, offs, stype, pair_index, box, rmax, dr, counts):
    """Histogram intermolecular distances of RDF sampling sites.

    ``pair_index[ta, tb]`` maps a sampling-site type pair onto a row of
    ``counts``. Sites of the two molecules are compared through the minimum
    image of their own separation.
    """
    n = com.shape[0]
    if p1 <= p0 or n < 2:
        return
    i = 0
    while pair_row_start(i + 1, n) <= p0:
        i += 1
    j = i + 1 + (p0 - pair_row_start(i, n))
    nbins = counts.shape[1]
    rmax2 = rmax * rmax
    inv_box = 1.0 / box
    for _ in range(p0, p1):
        for a in range(site_start[i], site_start[i + 1]):
            for b in range(site_start[j], site_start[j + 1]):
                dx = com[i, 0] + offs[a, 0] - com[j, 0] - offs[b, 0]
                dy = com[i, 1] + offs[a, 1] - com[j, 1] - offs[b, 1]
                dz = com[i, 2] + offs[a, 2] - com[j, 2] - offs[b, 2]
                dx -= box * math.floor(dx * inv_box + 0.5)
                dy -= box * math.floor(dy * inv_box + 0.5)
                dz -= box * math.floor(dz * inv_box + 0.5)
                r2 = dx * dx + dy * dy + dz * dz
                if r2 < rmax2:
                    k = int(math.sqrt(r2) / dr)
                    if k < nbins:
                        counts[pair_index[stype[a], stype[b]], k] += 1
        j += 1
        if j == n:
            i += 1
            j = i + 1
