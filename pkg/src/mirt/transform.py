"""Discrete restricted mixed ray transform over lines through a source curve.

A line is ``{gamma(t_k) + s w : s}`` with ``w`` on a spherical grid inside the
pole band. Each line carries two channels,

    A = h_s * sum_s <f(p_s), w (x) w_alpha>,   B = h_s * sum_s <f(p_s), w (x) w_beta>,

with ``f`` trilinearly interpolated (zero outside the grid) at points ``p_s``
spaced ``h_s`` apart and centred on the chord cut by the grid's bounding
sphere. The adjoint reuses the same samples and weights, so the pair is an
exact transpose for the inner products

    <g, g'>_lines = sum_l mu_l g_l g'_l,   mu_l = dt sin(alpha) dalpha dbeta,
    <f, f'>_grid = voxel_volume * sum f f'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .fields import Grid3, Tensor2Field
from .geometry import POLE_BAND, Curve, frame_vectors


@dataclass(frozen=True)
class LineSet:
    curve: Curve
    n_t: int
    n_alpha: int
    n_beta: int
    h_s: float
    center: tuple[float, float, float]
    radius: float
    pole_band: float = POLE_BAND

    def __post_init__(self):
        if min(self.n_t, self.n_alpha, self.n_beta) < 1:
            raise ValueError("line set sizes must be positive")
        if not (0 < self.pole_band < math.pi / 2):
            raise ValueError("pole band must lie in (0, pi/2)")
        if not self.h_s > 0 or not self.radius > 0:
            raise ValueError("h_s and radius must be positive")

    @classmethod
    def for_grid(cls, curve: Curve, grid: Grid3, n_t: int = 96, n_alpha: int = 48, n_beta: int = 96,
                 pole_band: float = POLE_BAND, h_s: float | None = None) -> "LineSet":
        """Line set clipped to the grid's bounding sphere, ``h_s`` = half the finest spacing."""
        if h_s is None:
            h_s = 0.5 * min(grid.spacing)
        if h_s > 0.5 * min(grid.spacing) * (1 + 1e-12):
            raise ValueError("h_s must not exceed half the minimum grid spacing")
        return cls(curve, n_t, n_alpha, n_beta, float(h_s), tuple(float(c) for c in grid.center),
                   grid.bounding_radius, pole_band)

    def with_step(self, h_s: float) -> "LineSet":
        return LineSet(self.curve, self.n_t, self.n_alpha, self.n_beta, float(h_s), self.center,
                       self.radius, self.pole_band)

    @property
    def dt(self) -> float:
        t0, t1 = self.curve.interval
        return (t1 - t0) / self.n_t

    @property
    def t(self) -> np.ndarray:
        t0, _ = self.curve.interval
        k = np.arange(self.n_t)
        # closed curves: uniform periodic nodes; open curves: midpoints
        return t0 + (k if self.curve.closed else k + 0.5) * self.dt

    @property
    def dalpha(self) -> float:
        return (math.pi - 2 * self.pole_band) / self.n_alpha

    @property
    def dbeta(self) -> float:
        return 2 * math.pi / self.n_beta

    @property
    def alpha(self) -> np.ndarray:
        return self.pole_band + (np.arange(self.n_alpha) + 0.5) * self.dalpha

    @property
    def beta(self) -> np.ndarray:
        return np.arange(self.n_beta) * self.dbeta

    @property
    def n_lines(self) -> int:
        return self.n_t * self.n_alpha * self.n_beta

    def sources(self) -> np.ndarray:
        return self.curve.point(self.t)

    def directions(self):
        """``(w, w_alpha, w_beta)``, each ``(n_alpha * n_beta, 3)`` with beta fastest."""
        a, b = np.meshgrid(self.alpha, self.beta, indexing="ij")
        w, wa, wb = frame_vectors(a.ravel(), b.ravel())
        return w, wa, wb

    def weights(self) -> np.ndarray:
        """Line measure ``dt sin(alpha) dalpha dbeta``, shape ``(n_t, n_alpha, n_beta)``."""
        w = self.dt * np.sin(self.alpha) * self.dalpha * self.dbeta
        return np.broadcast_to(w[None, :, None], (self.n_t, self.n_alpha, self.n_beta)).copy()


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Channels ``A`` (``w_alpha``) and ``B`` (``w_beta``), each ``(n_t, n_alpha, n_beta)``."""

    lines: LineSet
    chan_a: np.ndarray
    chan_b: np.ndarray

    def __post_init__(self):
        shape = (self.lines.n_t, self.lines.n_alpha, self.lines.n_beta)
        for name in ("chan_a", "chan_b"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def dot(self, other: "Sinogram") -> float:
        w = self.lines.weights()
        return float(np.sum(w * (self.chan_a * other.chan_a + self.chan_b * other.chan_b)))

    def norm(self) -> float:
        return math.sqrt(max(self.dot(self), 0.0))

    def __add__(self, other):
        return Sinogram(self.lines, self.chan_a + other.chan_a, self.chan_b + other.chan_b)

    def __mul__(self, c):
        return Sinogram(self.lines, c * self.chan_a, c * self.chan_b)

    __rmul__ = __mul__


def _geometry(lines: LineSet):
    w, wa, wb = lines.directions()
    return (np.ascontiguousarray(lines.sources()), np.ascontiguousarray(w), np.ascontiguousarray(wa),
            np.ascontiguousarray(wb), np.asarray(lines.center, dtype=np.float64))


def mirt_forward(f: Tensor2Field, lines: LineSet, backend: str | None = None, threads: int = 1) -> Sinogram:
    k = kernels.get(backend)
    grid = f.grid
    src, w, wa, wb, center = _geometry(lines)
    out = k.forward(np.ascontiguousarray(f.flat()), np.asarray(grid.origin), np.asarray(grid.spacing),
                    src, w, wa, wb, center, float(lines.radius), float(lines.h_s), int(threads))
    shape = (lines.n_t, lines.n_alpha, lines.n_beta)
    return Sinogram(lines, out[..., 0].reshape(shape), out[..., 1].reshape(shape))


def mirt_adjoint(g: Sinogram, grid: Grid3, backend: str | None = None, threads: int = 1) -> Tensor2Field:
    k = kernels.get(backend)
    lines = g.lines
    src, w, wa, wb, center = _geometry(lines)
    mu = lines.weights() / grid.voxel_volume
    data = np.stack([(mu * g.chan_a).reshape(lines.n_t, -1), (mu * g.chan_b).reshape(lines.n_t, -1)], axis=-1)
    out = k.adjoint(np.ascontiguousarray(data), np.asarray(grid.origin), np.asarray(grid.spacing),
                    np.asarray(grid.shape, dtype=np.int64), src, w, wa, wb, center, float(lines.radius),
                    float(lines.h_s), int(threads))
    return Tensor2Field(grid, out.reshape(grid.shape + (3, 3)))


def normal_op(f: Tensor2Field, lines: LineSet, backend: str | None = None, threads: int = 1) -> Tensor2Field:
    """``N f = M* M f``."""
    return mirt_adjoint(mirt_forward(f, lines, backend, threads), f.grid, backend, threads)


def adjoint_defect(f: Tensor2Field, g: Sinogram, backend: str | None = None, threads: int = 1) -> float:
    """``|<Mf, g> - <f, M*g>| / (|Mf| |g| + |f| |M*g|)``."""
    mf = mirt_forward(f, g.lines, backend, threads)
    mg = mirt_adjoint(g, f.grid, backend, threads)
    num = abs(mf.dot(g) - f.dot(mg))
    den = mf.norm() * g.norm() + f.norm() * mg.norm()
    return num / den if den > 0 else 0.0
