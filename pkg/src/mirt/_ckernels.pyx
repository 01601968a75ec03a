# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: trilinear line sums, their matched scatter, and the
voxel-by-frequency parametrix sum. Semantics mirror ``_pykernels``."""

import numpy as np

from cython.parallel cimport prange, threadid
from libc.math cimport sqrt, ceil, floor, cos, sin, fabs, fmin, acos, log10, M_PI
from libc.string cimport memset

BACKEND = "cython"

DEF MAXQ = 128


cdef inline void _segment(const double* src, const double* w, const double* center, double radius,
                          double h_s, double* s_mid, Py_ssize_t* n) noexcept nogil:
    cdef double r0 = src[0] - center[0], r1 = src[1] - center[1], r2 = src[2] - center[2]
    cdef double b = w[0] * r0 + w[1] * r1 + w[2] * r2
    cdef double c = r0 * r0 + r1 * r1 + r2 * r2 - radius * radius
    cdef double disc = b * b - c
    cdef double m
    s_mid[0] = -b
    if disc > 0.0:
        m = ceil(2.0 * sqrt(disc) / h_s)
        if m < 1.0:
            m = 1.0
        n[0] = <Py_ssize_t>m
    else:
        n[0] = 0


cdef void _line_forward(const double* vals, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t nz,
                        const double* origin, const double* spacing, const double* src,
                        const double* w, const double* ea, const double* eb, const double* center,
                        double radius, double h_s, double* out) noexcept nogil:
    cdef double cA[9]
    cdef double cB[9]
    cdef Py_ssize_t i, j, n, m, a, b, c, ix, iy, iz, base
    cdef double s_mid, s, px, py, pz, qx, qy, qz, fx, fy, fz, wx, wy, wz, wt, da, db
    cdef long i0x, i0y, i0z
    cdef double accA = 0.0, accB = 0.0
    for i in range(3):
        for j in range(3):
            cA[3 * i + j] = w[i] * ea[j]
            cB[3 * i + j] = w[i] * eb[j]
    _segment(src, w, center, radius, h_s, &s_mid, &n)
    for m in range(n):
        s = s_mid + (m - 0.5 * (n - 1)) * h_s
        px = src[0] + s * w[0]
        py = src[1] + s * w[1]
        pz = src[2] + s * w[2]
        qx = (px - origin[0]) / spacing[0]
        qy = (py - origin[1]) / spacing[1]
        qz = (pz - origin[2]) / spacing[2]
        if qx < -1.0 or qy < -1.0 or qz < -1.0 or qx >= nx or qy >= ny or qz >= nz:
            continue
        i0x = <long>floor(qx)
        i0y = <long>floor(qy)
        i0z = <long>floor(qz)
        fx = qx - i0x
        fy = qy - i0y
        fz = qz - i0z
        for a in range(2):
            ix = i0x + a
            if ix < 0 or ix >= nx:
                continue
            wx = fx if a else 1.0 - fx
            for b in range(2):
                iy = i0y + b
                if iy < 0 or iy >= ny:
                    continue
                wy = fy if b else 1.0 - fy
                for c in range(2):
                    iz = i0z + c
                    if iz < 0 or iz >= nz:
                        continue
                    wz = fz if c else 1.0 - fz
                    wt = wx * wy * wz
                    base = ((ix * ny + iy) * nz + iz) * 9
                    da = 0.0
                    db = 0.0
                    for j in range(9):
                        da = da + vals[base + j] * cA[j]
                        db = db + vals[base + j] * cB[j]
                    accA = accA + wt * da
                    accB = accB + wt * db
    out[0] = h_s * accA
    out[1] = h_s * accB


cdef void _line_adjoint(double* acc, Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t nz,
                        const double* origin, const double* spacing, const double* src,
                        const double* w, const double* ea, const double* eb, const double* center,
                        double radius, double h_s, double gA, double gB) noexcept nogil:
    cdef double coef[9]
    cdef Py_ssize_t i, j, n, m, a, b, c, ix, iy, iz, base
    cdef double s_mid, s, px, py, pz, qx, qy, qz, fx, fy, fz, wx, wy, wz, wt
    cdef long i0x, i0y, i0z
    if gA == 0.0 and gB == 0.0:
        return
    for i in range(3):
        for j in range(3):
            coef[3 * i + j] = h_s * (gA * w[i] * ea[j] + gB * w[i] * eb[j])
    _segment(src, w, center, radius, h_s, &s_mid, &n)
    for m in range(n):
        s = s_mid + (m - 0.5 * (n - 1)) * h_s
        px = src[0] + s * w[0]
        py = src[1] + s * w[1]
        pz = src[2] + s * w[2]
        qx = (px - origin[0]) / spacing[0]
        qy = (py - origin[1]) / spacing[1]
        qz = (pz - origin[2]) / spacing[2]
        if qx < -1.0 or qy < -1.0 or qz < -1.0 or qx >= nx or qy >= ny or qz >= nz:
            continue
        i0x = <long>floor(qx)
        i0y = <long>floor(qy)
        i0z = <long>floor(qz)
        fx = qx - i0x
        fy = qy - i0y
        fz = qz - i0z
        for a in range(2):
            ix = i0x + a
            if ix < 0 or ix >= nx:
                continue
            wx = fx if a else 1.0 - fx
            for b in range(2):
                iy = i0y + b
                if iy < 0 or iy >= ny:
                    continue
                wy = fy if b else 1.0 - fy
                for c in range(2):
                    iz = i0z + c
                    if iz < 0 or iz >= nz:
                        continue
                    wz = fz if c else 1.0 - fz
                    wt = wx * wy * wz
                    base = ((ix * ny + iy) * nz + iz) * 9
                    for j in range(9):
                        acc[base + j] += wt * coef[j]


def forward(const double[:, :, :, ::1] values9, const double[::1] origin, const double[::1] spacing,
            const double[:, ::1] sources, const double[:, ::1] dirs, const double[:, ::1] ea,
            const double[:, ::1] eb, const double[::1] center, double radius, double h_s, int threads=1):
    cdef Py_ssize_t nx = values9.shape[0], ny = values9.shape[1], nz = values9.shape[2]
    cdef Py_ssize_t n_t = sources.shape[0], n_d = dirs.shape[0]
    cdef Py_ssize_t k, d
    out = np.zeros((n_t, n_d, 2))
    cdef double[:, :, ::1] o = out
    if n_t == 0 or n_d == 0:
        return out
    for k in prange(n_t, nogil=True, num_threads=max(threads, 1), schedule="dynamic"):
        for d in range(n_d):
            _line_forward(&values9[0, 0, 0, 0], nx, ny, nz, &origin[0], &spacing[0], &sources[k, 0],
                          &dirs[d, 0], &ea[d, 0], &eb[d, 0], &center[0], radius, h_s, &o[k, d, 0])
    return out


def adjoint(const double[:, :, ::1] g, const double[::1] origin, const double[::1] spacing,
            const long[::1] shape, const double[:, ::1] sources, const double[:, ::1] dirs,
            const double[:, ::1] ea, const double[:, ::1] eb, const double[::1] center, double radius,
            double h_s, int threads=1):
    """Per-thread private accumulators, summed in thread order at the end."""
    cdef Py_ssize_t nx = shape[0], ny = shape[1], nz = shape[2]
    cdef Py_ssize_t n_t = sources.shape[0], n_d = dirs.shape[0]
    cdef Py_ssize_t k, d
    cdef int nthr = max(threads, 1)
    buf = np.zeros((nthr, nx * ny * nz * 9))
    cdef double[:, ::1] acc = buf
    if n_t == 0 or n_d == 0:
        return np.zeros((nx, ny, nz, 9))
    for k in prange(n_t, nogil=True, num_threads=nthr, schedule="static"):
        for d in range(n_d):
            _line_adjoint(&acc[threadid(), 0], nx, ny, nz, &origin[0], &spacing[0], &sources[k, 0],
                          &dirs[d, 0], &ea[d, 0], &eb[d, 0], &center[0], radius, h_s,
                          g[k, d, 0], g[k, d, 1])
    return buf.sum(axis=0).reshape(nx, ny, nz, 9)


# ---------------------------------------------------------------------------
# parametrix

cdef inline void _curve(int code, const double* prm, double t, double* p, double* dp) noexcept nogil:
    cdef double R = prm[0], h = prm[1], m = prm[2]
    cdef double ct = cos(t), st = sin(t)
    p[0] = R * ct
    p[1] = R * st
    dp[0] = -R * st
    dp[1] = R * ct
    if code == 0:
        p[2] = 0.0
        dp[2] = 0.0
    elif code == 1:
        p[2] = h * t / (2.0 * M_PI)
        dp[2] = h / (2.0 * M_PI)
    elif code == 2:
        p[2] = h * cos(m * t)
        dp[2] = -h * m * sin(m * t)
    else:
        p[2] = -0.5 * h if t < 2.0 * M_PI else 0.5 * h
        dp[2] = 0.0


cdef double _root(int code, const double* prm, const double* n0, double c, double ta, double tb,
                  double ha, double hb) noexcept nogil:
    """Root of gamma(t).n0 = c on [ta, tb] where the left side is monotone."""
    cdef double p[3]
    cdef double dp[3]
    cdef double lo = ta, hi = tb, t, g, dg, tn
    cdef double sgn = 1.0 if hb > ha else -1.0
    cdef int it
    t = ta + (c - ha) / (hb - ha) * (tb - ta)
    if not (t > lo and t < hi):
        t = 0.5 * (lo + hi)
    for it in range(100):
        _curve(code, prm, t, p, dp)
        g = p[0] * n0[0] + p[1] * n0[1] + p[2] * n0[2] - c
        dg = dp[0] * n0[0] + dp[1] * n0[1] + dp[2] * n0[2]
        if sgn * g > 0.0:
            hi = t
        else:
            lo = t
        if g == 0.0 or hi - lo <= 4e-16 * (fabs(lo) + fabs(hi) + 1.0):
            break
        tn = t - g / dg if dg != 0.0 else lo - 1.0
        if not (tn > lo and tn < hi):
            tn = 0.5 * (lo + hi)
        if fabs(tn - t) <= 1e-15 * (fabs(t) + 1.0):
            t = tn
            break
        t = tn
    return t


cdef inline double _smoothstep(double u) noexcept nogil:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * (3.0 - 2.0 * u)


cdef bint _independent(double (*om)[3], int q, double tau) noexcept nogil:
    cdef int i, j, k
    cdef double cx, cy, cz
    cdef bint par[MAXQ][MAXQ]
    for i in range(q):
        for j in range(i + 1, q):
            cx = om[i][1] * om[j][2] - om[i][2] * om[j][1]
            cy = om[i][2] * om[j][0] - om[i][0] * om[j][2]
            cz = om[i][0] * om[j][1] - om[i][1] * om[j][0]
            par[i][j] = sqrt(cx * cx + cy * cy + cz * cz) > tau
    for i in range(q):
        for j in range(i + 1, q):
            if not par[i][j]:
                continue
            for k in range(j + 1, q):
                if par[i][k] and par[j][k]:
                    return True
    return False


cdef bint _chol5(double (*M)[5], double (*L)[5], double gate) noexcept nogil:
    """Cholesky of the upper-stored 5x5 ``M``; False if a pivot is not above ``gate``."""
    cdef int i, j, k
    cdef double piv, v
    for j in range(5):
        piv = M[j][j]
        for k in range(j):
            piv -= L[j][k] * L[j][k]
        if not (piv > gate):
            return False
        L[j][j] = sqrt(piv)
        for i in range(j + 1, 5):
            v = M[j][i]
            for k in range(j):
                v -= L[i][k] * L[j][k]
            L[i][j] = v / L[j][j]
    return True


cdef void _param_pair(const double* x, const double* xp, const double* freq, double kmag,
                      const double* n0, const double* brk, const double* hv, Py_ssize_t nb,
                      const unsigned char* seg_ok, const double* P, const double* yr, const double* yi,
                      int code, const double* prm, double tau_sigma, double taper, double pole_band,
                      double pole_taper, double cond_lo, double reg, double tau_rank,
                      double tau_indep, double* out) noexcept nogil:
    cdef double M[5][5]
    cdef double L[5][5]
    cdef double om[MAXQ][3]
    cdef double va[9]
    cdef double vb[9]
    cdef double a5[5]
    cdef double b5[5]
    cdef double zr[5]
    cdef double zi[5]
    cdef double p[3]
    cdef double dp[3]
    cdef double ealpha[3]
    cdef double c, lo, hi, t, s1, r, wq, chi = 1.0, tr, tinv, ph, cph, sph, vr, vi, sr, si
    cdef int q = 0, i, j, k, m
    cdef Py_ssize_t s
    memset(&M[0][0], 0, sizeof(M))
    c = x[0] * n0[0] + x[1] * n0[1] + x[2] * n0[2]
    for s in range(nb - 1):
        if not seg_ok[s] or hv[s] == hv[s + 1]:
            continue
        lo = hv[s] if hv[s] < hv[s + 1] else hv[s + 1]
        hi = hv[s + 1] if hv[s] < hv[s + 1] else hv[s]
        if not (c >= lo and c < hi):
            continue
        t = _root(code, prm, n0, c, brk[s], brk[s + 1], hv[s], hv[s + 1])
        _curve(code, prm, t, p, dp)
        s1 = fabs(dp[0] * n0[0] + dp[1] * n0[1] + dp[2] * n0[2])
        wq = _smoothstep((s1 - tau_sigma) / taper)
        if wq < chi:
            chi = wq
        if chi <= 0.0:
            return
        p[0] = x[0] - p[0]
        p[1] = x[1] - p[1]
        p[2] = x[2] - p[2]
        r = sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
        if r == 0.0 or q >= MAXQ:
            continue
        for i in range(3):
            om[q][i] = p[i] / r
        # chords inside the pole band carry no data
        wq = _smoothstep((acos(fmin(fabs(om[q][2]), 1.0)) - pole_band) / pole_taper)
        if wq < chi:
            chi = wq
        if chi <= 0.0:
            return
        ealpha[0] = n0[1] * om[q][2] - n0[2] * om[q][1]
        ealpha[1] = n0[2] * om[q][0] - n0[0] * om[q][2]
        ealpha[2] = n0[0] * om[q][1] - n0[1] * om[q][0]
        for i in range(3):
            for j in range(3):
                va[3 * i + j] = om[q][i] * ealpha[j]
                vb[3 * i + j] = om[q][i] * n0[j]
        for m in range(5):
            a5[m] = 0.0
            b5[m] = 0.0
            for i in range(9):
                a5[m] += P[5 * i + m] * va[i]
                b5[m] += P[5 * i + m] * vb[i]
        wq = 2.0 * M_PI / (s1 * r)
        for i in range(5):
            for j in range(i, 5):
                M[i][j] += wq * (a5[i] * a5[j] + b5[i] * b5[j])
        q += 1
    if q < 3 or not _independent(om, q, tau_indep):
        return
    tr = 0.0
    for i in range(5):
        tr += M[i][i]
    if not _chol5(M, L, tau_rank * tr):
        return
    if cond_lo > 0.0:
        # roll off where the 5x5 system is poorly conditioned:
        # rho = 1 / (tr M tr M^-1) lies within a factor 5 of lambda_min / tr M
        tinv = 0.0
        for m in range(5):
            for i in range(m, 5):
                sr = 1.0 if i == m else 0.0
                for k in range(m, i):
                    sr -= L[i][k] * zr[k]
                zr[i] = sr / L[i][i]
                tinv += zr[i] * zr[i]
        wq = _smoothstep(log10(1.0 / (tr * tinv * cond_lo)))
        if wq < chi:
            chi = wq
        if chi <= 0.0:
            return
    if reg > 0.0:
        for i in range(5):
            M[i][i] += reg * tr / 5.0
        _chol5(M, L, 0.0)
    for i in range(5):
        sr = yr[i]
        si = yi[i]
        for k in range(i):
            sr -= L[i][k] * zr[k]
            si -= L[i][k] * zi[k]
        zr[i] = sr / L[i][i]
        zi[i] = si / L[i][i]
    for i in range(4, -1, -1):
        sr = zr[i]
        si = zi[i]
        for k in range(i + 1, 5):
            sr -= L[k][i] * zr[k]
            si -= L[k][i] * zi[k]
        zr[i] = sr / L[i][i]
        zi[i] = si / L[i][i]
    ph = xp[0] * freq[0] + xp[1] * freq[1] + xp[2] * freq[2]
    cph = cos(ph)
    sph = sin(ph)
    for i in range(9):
        vr = 0.0
        vi = 0.0
        for m in range(5):
            vr += P[5 * i + m] * zr[m]
            vi += P[5 * i + m] * zi[m]
        out[i] += 2.0 * chi * kmag * (cph * vr - sph * vi)


def parametrix(const double[:, ::1] points, const double[:, ::1] phase_pts, const double[:, ::1] freqs,
               const double[::1] kmag, const double[:, ::1] dirs, const double[:, ::1] breaks,
               const double[:, ::1] hvals, const long[::1] nbreaks, const unsigned char[:, ::1] seg_ok,
               const double[:, :, ::1] basis, const double[:, ::1] yre, const double[:, ::1] yim,
               int code, const double[::1] params, double tau_sigma, double taper, double pole_band,
               double pole_taper, double cond_lo, double reg, double tau_rank, double tau_indep,
               int threads=1):
    cdef Py_ssize_t npts = points.shape[0], nf = freqs.shape[0]
    cdef Py_ssize_t i, f, f0, f1
    cdef Py_ssize_t block = 256
    out = np.zeros((npts, 9))
    cdef double[:, ::1] o = out
    if npts == 0 or nf == 0:
        return out
    if breaks.shape[1] > MAXQ + 1:
        raise ValueError("too many monotone runs per direction")
    # frequency blocks outside, voxels in parallel inside: fixed summation order per voxel
    for f0 in range(0, nf, block):
        f1 = min(f0 + block, nf)
        for i in prange(npts, nogil=True, num_threads=max(threads, 1), schedule="static"):
            for f in range(f0, f1):
                _param_pair(&points[i, 0], &phase_pts[i, 0], &freqs[f, 0], kmag[f], &dirs[f, 0],
                            &breaks[f, 0], &hvals[f, 0], nbreaks[f], &seg_ok[f, 0], &basis[f, 0, 0],
                            &yre[f, 0], &yim[f, 0], code, &params[0], tau_sigma, taper, pole_band,
                            pole_taper, cond_lo, reg, tau_rank, tau_indep, &o[i, 0])
    return out
