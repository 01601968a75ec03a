"""Pure numpy implementations of the hot loops.

Semantics must match ``_ckernels.pyx`` sample for sample; the compiled
module is preferred when it imports. ``threads`` is accepted and ignored.
"""

import math

import numpy as np

BACKEND = "python"

_CHUNK_POINTS = 1 << 18


# ---------------------------------------------------------------------------
# line sampling shared by forward and adjoint

def _segments(src, dirs, center, radius, h_s):
    """Per-line midpoint ``s_mid`` and sample count ``n`` (0 if the line misses)."""
    rel = src - center
    b = dirs @ rel
    c = rel @ rel - radius * radius
    disc = b * b - c
    ok = disc > 0.0
    length = np.where(ok, 2.0 * np.sqrt(np.where(ok, disc, 0.0)), 0.0)
    n = np.where(ok, np.ceil(length / h_s), 0).astype(np.int64)
    n = np.where(ok, np.maximum(n, 1), 0)
    return -b, n


def _line_samples(src, dirs, s_mid, n, h_s, line_ids):
    """Sample points for the given lines: (points, owner index into line_ids)."""
    counts = n[line_ids]
    owner = np.repeat(np.arange(len(line_ids)), counts)
    starts = np.cumsum(counts) - counts
    j = np.arange(counts.sum()) - np.repeat(starts, counts)
    lid = line_ids[owner]
    s = s_mid[lid] + (j - 0.5 * (counts[owner] - 1)) * h_s
    pts = src + s[:, None] * dirs[lid]
    return pts, owner


def _corners(pts, origin, spacing, shape):
    """Yield ``(flat_index, weight)`` for the eight trilinear corners; weight 0 off-grid."""
    q = (pts - origin) / spacing
    i0 = np.floor(q).astype(np.int64)
    fr = q - i0
    nx, ny, nz = shape
    for a in (0, 1):
        ix = i0[:, 0] + a
        wx = fr[:, 0] if a else 1.0 - fr[:, 0]
        vx = (ix >= 0) & (ix < nx)
        for b in (0, 1):
            iy = i0[:, 1] + b
            wy = fr[:, 1] if b else 1.0 - fr[:, 1]
            vy = vx & (iy >= 0) & (iy < ny)
            for c in (0, 1):
                iz = i0[:, 2] + c
                wz = fr[:, 2] if c else 1.0 - fr[:, 2]
                valid = vy & (iz >= 0) & (iz < nz)
                flat = np.where(valid, (ix * ny + iy) * nz + iz, 0)
                yield flat, np.where(valid, wx * wy * wz, 0.0)


def _line_batches(n, n_d):
    """Group line indices of one source so that each batch has bounded sample count."""
    ids = np.nonzero(n)[0]
    if ids.size == 0:
        return
    csum = np.cumsum(n[ids])
    start = 0
    while start < ids.size:
        base = csum[start] - n[ids[start]]
        stop = int(np.searchsorted(csum, base + _CHUNK_POINTS, side="right"))
        stop = max(stop, start + 1)
        yield ids[start:stop]
        start = stop


def forward(values9, origin, spacing, sources, dirs, ea, eb, center, radius, h_s, threads=1):
    shape = values9.shape[:3]
    flatvals = values9.reshape(-1, 9)
    cA = (dirs[:, :, None] * ea[:, None, :]).reshape(-1, 9)
    cB = (dirs[:, :, None] * eb[:, None, :]).reshape(-1, 9)
    out = np.zeros((len(sources), len(dirs), 2))
    for k, src in enumerate(sources):
        s_mid, n = _segments(src, dirs, center, radius, h_s)
        for ids in _line_batches(n, len(dirs)):
            pts, owner = _line_samples(src, dirs, s_mid, n, h_s, ids)
            interp = np.zeros((len(pts), 9))
            for flat, w in _corners(pts, origin, spacing, shape):
                interp += w[:, None] * flatvals[flat]
            lid = ids[owner]
            a = np.einsum("pk,pk->p", interp, cA[lid])
            b = np.einsum("pk,pk->p", interp, cB[lid])
            out[k, ids, 0] = h_s * np.bincount(owner, weights=a, minlength=len(ids))
            out[k, ids, 1] = h_s * np.bincount(owner, weights=b, minlength=len(ids))
    return out


def adjoint(g, origin, spacing, shape, sources, dirs, ea, eb, center, radius, h_s, threads=1):
    """Scatter ``h_s * (g_A w (x) e_a + g_B w (x) e_b)`` with trilinear weights."""
    nvox = int(np.prod(shape))
    cA = (dirs[:, :, None] * ea[:, None, :]).reshape(-1, 9)
    cB = (dirs[:, :, None] * eb[:, None, :]).reshape(-1, 9)
    acc = np.zeros((9, nvox))
    for k, src in enumerate(sources):
        s_mid, n = _segments(src, dirs, center, radius, h_s)
        coef = h_s * (g[k, :, 0:1] * cA + g[k, :, 1:2] * cB)
        for ids in _line_batches(n, len(dirs)):
            pts, owner = _line_samples(src, dirs, s_mid, n, h_s, ids)
            c = coef[ids[owner]]
            for flat, w in _corners(pts, origin, spacing, shape):
                for comp in range(9):
                    acc[comp] += np.bincount(flat, weights=w * c[:, comp], minlength=nvox)
    return acc.T.reshape(tuple(shape) + (9,)).copy()


# ---------------------------------------------------------------------------
# parametrix

def _curve_eval(code, params, t):
    R, h, m = params[0], params[1], params[2]
    ct, st = np.cos(t), np.sin(t)
    if code == 0:
        z, dz = np.zeros_like(t), np.zeros_like(t)
    elif code == 1:
        z, dz = h * t / (2 * math.pi), np.full_like(t, h / (2 * math.pi))
    elif code == 2:
        z, dz = h * np.cos(m * t), -h * m * np.sin(m * t)
    else:
        z, dz = np.where(t < 2 * math.pi, -0.5 * h, 0.5 * h), np.zeros_like(t)
    p = np.stack([R * ct, R * st, z], axis=-1)
    d = np.stack([-R * st, R * ct, dz], axis=-1)
    return p, d


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def parametrix(points, phase_pts, freqs, kmag, dirs, breaks, hvals, nbreaks, seg_ok,
               basis, yre, yim, code, params, tau_sigma, taper, pole_band, pole_taper, cond_lo, reg,
               tau_rank, tau_indep,                threads=1):
    """Sum over a half set of frequencies of ``2 Re(e^{i k.x} chi |k| B0(x, k0) y(k))``.

    ``points``: absolute voxel positions (for geometry), ``phase_pts``:
    positions used in the Fourier phase. Per direction ``d``, ``breaks[d]``
    holds ``nbreaks[d]`` parameters splitting the curve into monotone runs of
    ``h(t) = gamma(t) . k0``; ``hvals`` are ``h`` at the breaks and
    ``seg_ok[d, j]`` is 0 where break ``j`` ends a connected piece.
    ``basis[d]`` is the 9x5 solenoidal basis and ``y = basis^T nf_hat``.
    Returns the real accumulated sum, shape ``(n_points, 9)``.
    """
    npts = len(points)
    out = np.zeros((npts, 9))
    for f in range(len(freqs)):
        n0 = dirs[f]
        P = basis[f]
        c = points @ n0
        nseg = int(nbreaks[f]) - 1
        valid = np.zeros((npts, nseg), bool)
        omega = np.zeros((npts, nseg, 3))
        chi = np.ones(npts)
        M = np.zeros((npts, 5, 5))
        for j in range(nseg):
            if not seg_ok[f, j]:
                continue
            ha, hb = hvals[f, j], hvals[f, j + 1]
            if ha == hb:
                continue
            lo, hi = min(ha, hb), max(ha, hb)
            idx = np.nonzero((c >= lo) & (c < hi))[0]
            if idx.size == 0:
                continue
            a = np.full(idx.size, breaks[f, j])
            b = np.full(idx.size, breaks[f, j + 1])
            sgn = 1.0 if hb > ha else -1.0
            for _ in range(60):
                mid = 0.5 * (a + b)
                p, _d = _curve_eval(code, params, mid)
                above = sgn * (p @ n0 - c[idx]) > 0
                b = np.where(above, mid, b)
                a = np.where(above, a, mid)
            t = 0.5 * (a + b)
            p, d = _curve_eval(code, params, t)
            s1 = np.abs(d @ n0)
            chi[idx] = np.minimum(chi[idx], _smoothstep((s1 - tau_sigma) / taper))
            chord = points[idx] - p
            r = np.linalg.norm(chord, axis=1)
            hit = r > 0
            idx, s1, chord, r = idx[hit], s1[hit], chord[hit], r[hit]
            om = chord / r[:, None]
            polar = np.arccos(np.minimum(np.abs(om[:, 2]), 1.0))
            chi[idx] = np.minimum(chi[idx], _smoothstep((polar - pole_band) / pole_taper))
            w = 2 * math.pi / (np.maximum(s1, 1e-300) * r)
            ealpha = np.cross(n0, om)
            vA = (om[:, :, None] * ealpha[:, None, :]).reshape(-1, 9) @ P
            vB = (om[:, :, None] * n0[None, None, :]).reshape(-1, 9) @ P
            M[idx] += w[:, None, None] * (vA[:, :, None] * vA[:, None, :] + vB[:, :, None] * vB[:, None, :])
            valid[idx, j] = True
            omega[idx, j] = om
        good = (valid.sum(axis=1) >= 3) & (chi > 0)
        if not good.any():
            continue
        good &= _has_independent_triple(valid, omega, tau_indep)
        gi = np.nonzero(good)[0]
        if gi.size == 0:
            continue
        gi = gi[_pivots_ok(M[gi], tau_rank)]
        if gi.size == 0:
            continue
        if cond_lo > 0:
            chi[gi] = np.minimum(chi[gi], _smoothstep(np.log10(_conditioning(M[gi]) / cond_lo)))
            gi = gi[chi[gi] > 0]
            if gi.size == 0:
                continue
        Mg = M[gi]
        if reg > 0:
            Mg = Mg + (reg / 5.0) * np.trace(Mg, axis1=1, axis2=2)[:, None, None] * np.eye(5)
        y = yre[f] + 1j * yim[f]
        z = np.linalg.solve(Mg, np.broadcast_to(y, (gi.size, 5))[..., None])[..., 0]
        ph = phase_pts[gi] @ freqs[f]
        e = np.cos(ph) + 1j * np.sin(ph)
        out[gi] += (2.0 * chi[gi] * kmag[f])[:, None] * (e[:, None] * (z @ P.T)).real
    return out


def _conditioning(M):
    """``1 / (tr M tr M^-1)``, within a factor 5 of ``lambda_min / tr M``."""
    return 1.0 / (np.trace(M, axis1=1, axis2=2) * np.trace(np.linalg.inv(M), axis1=1, axis2=2))


def _pivots_ok(M, tau_rank):
    """Whether all Cholesky pivots of each 5x5 ``M`` exceed ``tau_rank * trace(M)``."""
    n = M.shape[-1]
    tr = np.trace(M, axis1=1, axis2=2)
    L = np.zeros_like(M)
    ok = np.ones(len(M), bool)
    for j in range(n):
        piv = M[:, j, j] - np.sum(L[:, j, :j] ** 2, axis=1)
        ok &= piv > tau_rank * tr
        L[:, j, j] = np.sqrt(np.where(ok, piv, 1.0))
        for i in range(j + 1, n):
            L[:, i, j] = (M[:, j, i] - np.sum(L[:, i, :j] * L[:, j, :j], axis=1)) / L[:, j, j]
    return ok


def _has_independent_triple(valid, omega, tau_indep):
    npts, nseg = valid.shape
    cr = np.linalg.norm(np.cross(omega[:, :, None, :], omega[:, None, :, :]), axis=-1) > tau_indep
    ok = np.zeros(npts, bool)
    for i in range(nseg):
        for j in range(i + 1, nseg):
            pair = valid[:, i] & valid[:, j] & cr[:, i, j]
            if not pair.any():
                continue
            for k in range(j + 1, nseg):
                ok |= pair & valid[:, k] & cr[:, i, k] & cr[:, j, k]
    return ok
