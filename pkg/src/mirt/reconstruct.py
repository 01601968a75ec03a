"""Leading-order inversion of the normal operator on recoverable covectors.

The output at voxel ``x`` is the real Fourier sum

    f_rec(x) = sum_{k != 0} e^{i k.(x - origin)} chi(x, k) B0(x, k) nf_hat(k) / N_total

with ``B0(x, k) = |k| P (P^T A0(x, k0) P |k|)^{-1} P^T`` and ``P`` the
orthonormal solenoidal basis of ``k0 = k / |k|``. Since ``chi`` and ``B0``
are even in ``k``, only half of the frequencies are visited and each term is
doubled. Nyquist planes are skipped.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .fields import Grid3, Tensor2Field, solenoidal_basis
from .geometry import (POLE_BAND, TAU_INDEP, TAU_TAN, CovectorClass, Curve, classify_intersections,
                       plane_intersections)
from .symbol import TAU_RANK, TAU_SIGMA, SymbolMatrix


def _smoothstep(u: float) -> float:
    u = min(max(u, 0.0), 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth cutoff onto covectors with three well-separated transversal intersections.

    ``taper`` is the width over which ``|gamma'.k0|`` rolls from ``tau_sigma``
    (cutoff 0) to ``tau_sigma + taper`` (cutoff 1). Chords whose polar angle
    is within ``pole_band`` of the axis carry no data and roll off over
    ``pole_taper`` radians. With ``M`` the symbol restricted to the
    solenoidal subspace, ``rho = 1 / (tr M tr M^-1)`` measures conditioning;
    the cutoff rolls from 1 at ``10 cond_floor`` to 0 at ``cond_floor`` in
    ``log10 rho``.
    """

    curve: Curve
    tau_sigma: float = TAU_SIGMA
    taper: float = TAU_SIGMA
    pole_band: float = POLE_BAND
    pole_taper: float = 0.05
    cond_floor: float = 0.0
    regularization: float = 0.0
    min_points: int = 3
    tau_rank: float = TAU_RANK
    tau_indep: float = TAU_INDEP

    def __post_init__(self):
        for name in ("tau_sigma", "taper", "pole_taper", "tau_rank", "tau_indep"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.cond_floor >= 0 and self.regularization >= 0):
            raise ValueError("cond_floor and regularization must be non-negative")
        if not 0 <= self.pole_band < math.pi / 2:
            raise ValueError("pole_band must lie in [0, pi/2)")
        if self.min_points != 3:
            raise ValueError("min_points is fixed at 3")


def cutoff_chi(spec: CutoffSpec, x, xi) -> float:
    """Cutoff value at ``(x, xi)``; 0 unless the covector is in the transversal class."""
    ints = plane_intersections(spec.curve, x, xi, tau_tan=TAU_TAN, raise_degenerate=False)
    if classify_intersections(ints, TAU_TAN, spec.tau_indep) is not CovectorClass.XI_PRIME:
        return 0.0
    chi = 1.0
    for p in ints.points:
        chi = min(chi, _smoothstep((abs(p.s1) - spec.tau_sigma) / spec.taper))
        polar = math.acos(min(abs(p.omega[2]), 1.0))
        chi = min(chi, _smoothstep((polar - spec.pole_band) / spec.pole_taper))
    if chi <= 0.0:
        return 0.0
    xi = np.asarray(xi, dtype=np.float64)
    sym = SymbolMatrix.from_parts(x, xi, [p.t for p in ints.points], [p.s1 for p in ints.points],
                                  [p.r for p in ints.points], [p.omega for p in ints.points])
    basis = solenoidal_basis(xi)
    m = basis.T @ sym.matrix @ basis * float(np.linalg.norm(xi))
    tr = float(np.trace(m))
    try:
        piv = np.diag(np.linalg.cholesky(m)) ** 2
    except np.linalg.LinAlgError:
        return 0.0
    if np.any(piv <= spec.tau_rank * tr):
        return 0.0
    if spec.cond_floor == 0.0:
        return chi
    rho = 1.0 / (tr * float(np.trace(np.linalg.inv(m))))
    return min(chi, _smoothstep(math.log10(rho / spec.cond_floor)))


# ---------------------------------------------------------------------------
# frequency plan

def half_frequencies(grid: Grid3, pad: int = 1):
    """Indices and wavevectors of one representative per ``+-k`` pair.

    Excludes ``k = 0`` and any frequency on a Nyquist plane. Returns
    ``(flat_index, k)`` with ``flat_index`` into the padded FFT array.
    """
    shape = tuple(pad * n for n in grid.shape)
    idx = [np.fft.fftfreq(n) * n for n in shape]
    ks = [2 * math.pi * np.fft.fftfreq(n, d) for n, d in zip(shape, grid.spacing)]
    I, J, K = np.meshgrid(*idx, indexing="ij")
    nyq = np.zeros(shape, bool)
    for arr, n in zip((I, J, K), shape):
        if n % 2 == 0:
            nyq |= arr == -n // 2
    # lexicographic positivity picks one of each pair
    pos = (I > 0) | ((I == 0) & (J > 0)) | ((I == 0) & (J == 0) & (K > 0))
    keep = pos & ~nyq
    flat = np.flatnonzero(keep)
    kx, ky, kz = np.meshgrid(*ks, indexing="ij")
    k = np.stack([kx.ravel()[flat], ky.ravel()[flat], kz.ravel()[flat]], axis=1)
    return flat, k


def monotone_breaks(curve: Curve, dirs: np.ndarray, per_period: int = 512):
    """Per direction, parameters splitting each curve piece into runs where ``gamma.k0`` is monotone.

    Returns ``(breaks, hvals, nbreaks, seg_ok)`` padded to a common width.
    ``seg_ok[d, j]`` is 0 when ``[breaks[d, j], breaks[d, j+1]]`` straddles two pieces.
    """
    nd = len(dirs)
    rows_t: list[list[float]] = [[] for _ in range(nd)]
    rows_h: list[list[float]] = [[] for _ in range(nd)]
    rows_ok: list[list[int]] = [[] for _ in range(nd)]
    for a, b, closed in curve.pieces():
        n = max(int(math.ceil(per_period * (b - a) / (2 * math.pi))), 8)
        tt = a + (b - a) * np.arange(n + 1) / n
        dh = dirs @ curve.tangent(tt).T  # (nd, n+1)
        crit = _critical_points(curve, dirs, tt, dh)
        h_a = dirs @ curve.point(np.array([a]))[0]
        # closed pieces return to the start point; open ones end at b
        h_b = h_a if closed else dirs @ curve.point(np.array([b]))[0]
        for d in range(nd):
            ts = [a] + crit[d] + [b]
            hs = [float(h_a[d])] + [float(dirs[d] @ curve.point(np.array([t]))[0]) for t in crit[d]] \
                + [float(h_b[d])]
            if rows_t[d]:
                rows_ok[d][-1] = 0  # gap between pieces
            rows_t[d].extend(ts)
            rows_h[d].extend(hs)
            rows_ok[d].extend([1] * (len(ts) - 1) + [0])
    width = max(len(r) for r in rows_t)
    breaks = np.zeros((nd, width))
    hvals = np.zeros((nd, width))
    seg_ok = np.zeros((nd, width), np.uint8)
    nbreaks = np.zeros(nd, np.int64)
    for d in range(nd):
        m = len(rows_t[d])
        breaks[d, :m] = rows_t[d]
        hvals[d, :m] = rows_h[d]
        seg_ok[d, :m] = rows_ok[d]
        nbreaks[d] = m
    return breaks, hvals, nbreaks, seg_ok


def _critical_points(curve: Curve, dirs, tt, dh) -> list[list[float]]:
    """Zeros of ``gamma'(t).k0`` strictly inside the sampled piece, all directions at once."""
    nd = len(dirs)
    s0, s1 = dh[:, :-1], dh[:, 1:]
    dd, jj = np.nonzero((s0 * s1 < 0) | ((s0 == 0) & (s1 != 0)))
    lo, hi = tt[jj].copy(), tt[jj + 1].copy()
    sgn = np.sign(s1[dd, jj] - s0[dd, jj])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        val = np.einsum("ij,ij->i", curve.tangent(mid), dirs[dd])
        up = sgn * val > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    roots = 0.5 * (lo + hi)
    out: list[list[float]] = [[] for _ in range(nd)]
    for d, t in zip(dd, roots):
        if tt[0] < t < tt[-1]:
            out[d].append(float(t))
    for d in range(nd):
        out[d].sort()
    return out


@dataclass
class ParametrixPlan:
    """Frequency set and per-direction curve data shared by every voxel."""

    grid: Grid3
    spec: CutoffSpec
    pad: int = 1
    flat: np.ndarray = field(init=False, repr=False)
    freqs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.pad not in (1, 2):
            raise ValueError("pad must be 1 or 2")
        self.flat, self.freqs = half_frequencies(self.grid, self.pad)
        self.kmag = np.linalg.norm(self.freqs, axis=1)
        self.dirs = self.freqs / self.kmag[:, None]
        self.breaks, self.hvals, self.nbreaks, self.seg_ok = monotone_breaks(self.spec.curve, self.dirs)
        self.basis = np.stack([solenoidal_basis(d) for d in self.dirs])

    @property
    def n_freqs(self) -> int:
        return len(self.freqs)

    def spectrum(self, f: Tensor2Field) -> np.ndarray:
        """``fft(f) / N_total`` on the half set, shape ``(n_freqs, 9)``."""
        shape = tuple(self.pad * n for n in self.grid.shape)
        fh = np.fft.fftn(f.flat(), s=shape, axes=(0, 1, 2)) / float(np.prod(shape))
        return fh.reshape(-1, 9)[self.flat]

    def evaluate(self, spec9: np.ndarray, points=None, phase_points=None, backend: str | None = None,
                 threads: int = 1) -> np.ndarray:
        """Sum ``2 chi |k| Re(e^{i k.p} B0(x, k0) spec9(k))`` at geometry points ``x``.

        ``points`` default to the grid points; ``phase_points`` default to the
        same points and are measured from the grid origin.
        """
        if points is None:
            points = self.grid.points().reshape(-1, 3)
        points = np.ascontiguousarray(points, dtype=np.float64)
        if phase_points is None:
            phase_points = points
        phase = np.ascontiguousarray(np.asarray(phase_points, dtype=np.float64) - np.asarray(self.grid.origin))
        y = np.einsum("fim,fi->fm", self.basis, spec9)
        c = self.spec.curve
        k = kernels.get(backend)
        return k.parametrix(points, phase, np.ascontiguousarray(self.freqs), np.ascontiguousarray(self.kmag),
                            np.ascontiguousarray(self.dirs), self.breaks, self.hvals, self.nbreaks,
                            self.seg_ok, np.ascontiguousarray(self.basis),
                            np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag), c.code,
                            np.asarray(c.params, dtype=np.float64), self.spec.tau_sigma, self.spec.taper,
                            self.spec.pole_band, self.spec.pole_taper, self.spec.cond_floor,
                            self.spec.regularization, self.spec.tau_rank,
                            self.spec.tau_indep, int(threads))


def apply_parametrix(nf: Tensor2Field, spec: CutoffSpec, pad: int = 1, backend: str | None = None,
                     threads: int = 1, plan: ParametrixPlan | None = None) -> Tensor2Field:
    """Apply the cut-off parametrix to a normal-operator image."""
    if plan is None:
        plan = ParametrixPlan(nf.grid, spec, pad)
    out = plan.evaluate(plan.spectrum(nf), backend=backend, threads=threads)
    return Tensor2Field(nf.grid, out.reshape(nf.grid.shape + (3, 3)))


# ---------------------------------------------------------------------------
# comparison

def default_mask(f_ref: Tensor2Field, level: float = 0.01) -> np.ndarray:
    """Voxels where the 3x3x3-averaged energy of ``f_ref`` exceeds ``level`` times its max."""
    energy = np.sum(f_ref.values ** 2, axis=(-2, -1))
    local = ndimage.uniform_filter(energy, size=3, mode="constant")
    top = local.max()
    if top <= 0:
        raise ValueError("reference field is zero")
    return local > level * top


def calibrate(f_rec: Tensor2Field, f_ref: Tensor2Field, mask=None) -> float:
    """Least-squares ``c`` minimising ``|c f_rec - f_ref|`` over the mask."""
    m = np.ones(f_rec.grid.shape, bool) if mask is None else np.asarray(mask, bool)
    a = f_rec.values[m]
    b = f_ref.values[m]
    den = float(np.sum(a * a))
    if den == 0.0:
        raise ValueError("reconstruction vanishes on the mask")
    return float(np.sum(a * b)) / den


@dataclass
class ReconReport:
    rel_error: float
    correlation: float
    component_errors: np.ndarray
    calibration: float
    mask_voxels: int
    runtime: float = 0.0

    def lines(self, with_runtime: bool = False) -> list[str]:
        out = [f"rel_error = {self.rel_error:.12e}",
               f"correlation = {self.correlation:.12e}",
               f"calibration = {self.calibration:.12e}",
               f"mask_voxels = {self.mask_voxels}"]
        for (i, j), e in np.ndenumerate(self.component_errors.reshape(3, 3)):
            out.append(f"component_error_{i + 1}{j + 1} = {e:.12e}")
        if with_runtime:
            out.append(f"runtime_s = {self.runtime:.3f}")
        return out


def error_report(f_rec: Tensor2Field, f_ref: Tensor2Field, mask=None, scale: bool = True,
                 runtime: float = 0.0) -> ReconReport:
    """Masked comparison after optional scalar calibration.

    Component errors are ``|c rec_ij - ref_ij|`` over the mask relative to the
    full masked norm of ``f_ref``, so components that vanish do not blow up.
    """
    if mask is None:
        mask = default_mask(f_ref)
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("mask is empty")
    c = calibrate(f_rec, f_ref, mask) if scale else 1.0
    a = c * f_rec.values[mask].reshape(-1, 9)
    b = f_ref.values[mask].reshape(-1, 9)
    ref_norm = float(np.linalg.norm(b))
    if ref_norm == 0.0:
        raise ValueError("reference vanishes on the mask")
    rel = float(np.linalg.norm(a - b)) / ref_norm
    comp = np.linalg.norm(a - b, axis=0) / ref_norm
    av, bv = a.ravel() - a.mean(), b.ravel() - b.mean()
    den = float(np.linalg.norm(av) * np.linalg.norm(bv))
    corr = float(av @ bv) / den if den > 0 else 0.0
    return ReconReport(rel, corr, comp, c, int(mask.sum()), runtime)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
