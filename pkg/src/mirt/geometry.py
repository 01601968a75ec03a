"""Source curves, spherical frames, plane-curve intersections and covector
classification for the restricted line complex.

A covector ``(x, xi)`` defines the plane ``H(x, xi)`` through ``x`` with
normal ``xi``. Its intersections with the curve decide whether ``xi`` is a
recoverable direction at ``x``: three or more transversal hits whose chords
to ``x`` are pairwise non-parallel (``XI_PRIME``), tangential hits with
nonzero second-order contact (``XI_DOUBLE_PRIME``), and so on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

POLE_BAND = 0.1
TAU_TAN = 1e-6
TAU_INDEP = 1e-6
ROOT_TOL = 1e-10
SAMPLES_PER_PERIOD = 512
MERGE_TOL = 1e-6

CURVE_KINDS = ("circle", "helix", "crown", "two-circles")


class PoleError(ValueError):
    """Direction too close to the poles for the spherical frame."""


class DegeneratePlane(ValueError):
    """The plane contains an arc of the curve."""


@dataclass(frozen=True)
class Curve:
    """Parametric source curve.

    ``circle``       ``(R cos t, R sin t, 0)``, ``t in [0, 2 pi)``
    ``helix``        ``(R cos t, R sin t, h t / 2 pi)``, ``t in [-pi turns, pi turns]``
    ``crown``        ``(R cos t, R sin t, h cos(m t))``, ``t in [0, 2 pi)``
    ``two-circles``  circles at heights ``-h/2`` (``t < 2 pi``) and ``+h/2``,
                     ``t in [0, 4 pi)``
    """

    kind: str = "helix"
    radius: float = 2.0
    height: float = 1.0
    harmonic: int = 3
    turns: float = 3.0

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}; expected one of {CURVE_KINDS}")
        if not self.radius > 0:
            raise ValueError("curve radius must be positive")
        if self.kind == "helix" and not (self.turns > 0 and self.height != 0):
            raise ValueError("helix needs positive turns and nonzero pitch")
        if self.kind == "two-circles" and self.height == 0:
            raise ValueError("two-circles needs a nonzero separation")
        if self.kind == "crown" and int(self.harmonic) != self.harmonic:
            raise ValueError("crown harmonic must be an integer")

    @property
    def code(self) -> int:
        return CURVE_KINDS.index(self.kind)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.radius, self.height, float(self.harmonic), self.turns])

    @property
    def interval(self) -> tuple[float, float]:
        if self.kind == "helix":
            return (-math.pi * self.turns, math.pi * self.turns)
        if self.kind == "two-circles":
            return (0.0, 4.0 * math.pi)
        return (0.0, 2.0 * math.pi)

    @property
    def closed(self) -> bool:
        return self.kind != "helix"

    def pieces(self) -> list[tuple[float, float, bool]]:
        """Connected parameter ranges ``(a, b, periodic)``."""
        if self.kind == "helix":
            return [(*self.interval, False)]
        if self.kind == "two-circles":
            return [(0.0, 2.0 * math.pi, True), (2.0 * math.pi, 4.0 * math.pi, True)]
        return [(0.0, 2.0 * math.pi, True)]

    def _z(self, t, order):
        R, h, m = self.radius, self.height, self.harmonic
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "circle":
            return np.zeros_like(t)
        if self.kind == "helix":
            return [h * t / (2 * math.pi), np.full_like(t, h / (2 * math.pi)), np.zeros_like(t)][order]
        if self.kind == "crown":
            return [h * np.cos(m * t), -h * m * np.sin(m * t), -h * m * m * np.cos(m * t)][order]
        # two-circles
        return np.where(t < 2 * math.pi, -0.5 * h, 0.5 * h) if order == 0 else np.zeros_like(t)

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        R = self.radius
        return np.stack([R * np.cos(t), R * np.sin(t), self._z(t, 0)], axis=-1)

    def tangent(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        R = self.radius
        return np.stack([-R * np.sin(t), R * np.cos(t), self._z(t, 1)], axis=-1)

    def second(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        R = self.radius
        return np.stack([-R * np.cos(t), -R * np.sin(t), self._z(t, 2)], axis=-1)

    def samples(self, per_period: int = SAMPLES_PER_PERIOD) -> np.ndarray:
        t0, t1 = self.interval
        n = max(int(math.ceil(per_period * (t1 - t0) / (2 * math.pi))), 8)
        return np.linspace(t0, t1, n, endpoint=not self.closed)

    def check_regular(self, per_period: int = SAMPLES_PER_PERIOD, min_separation: float = 1e-6) -> None:
        """Raise ``ValueError`` if the curve is singular or self-intersecting on a dense sample."""
        ts, labels, index, lengths = [], [], [], []
        for piece, (a, b, closed) in enumerate(self.pieces()):
            tt = _piece_grid(a, b, closed, per_period)
            tt = tt[:-1] if closed else tt
            ts.append(tt)
            labels.append(np.full(len(tt), piece))
            index.append(np.arange(len(tt)))
            lengths.append(np.full(len(tt), len(tt) if closed else 10 ** 9))
        t = np.concatenate(ts)
        lab, idx, period = map(np.concatenate, (labels, index, lengths))
        speed = np.linalg.norm(self.tangent(t), axis=-1)
        if np.min(speed) <= 0:
            raise ValueError("curve is not regular")
        p = self.point(t)
        dt = np.max(np.diff(ts[0]))
        d = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        sep = np.abs(idx[:, None] - idx[None, :])
        sep = np.minimum(sep, period[:, None] - sep)
        far = (lab[:, None] != lab[None, :]) | (sep > 4)
        if np.any(d[far] < max(min_separation, 0.5 * float(np.max(speed)) * dt)):
            raise ValueError("curve self-intersects on the sampled parameter set")


# ---------------------------------------------------------------------------
# spherical frame

@dataclass(frozen=True)
class SphericalFrame:
    alpha: float
    beta: float

    @property
    def xi(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)])

    @property
    def xi_alpha(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([math.cos(a) * math.cos(b), math.cos(a) * math.sin(b), -math.sin(a)])

    @property
    def xi_beta(self) -> np.ndarray:
        b = self.beta
        return np.array([-math.sin(b), math.cos(b), 0.0])


def frame_vectors(alpha, beta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(xi, xi_alpha, xi_beta)`` for arrays of angles, each ``(..., 3)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    sa, ca, sb, cb = np.sin(alpha), np.cos(alpha), np.sin(beta), np.cos(beta)
    xi = np.stack([sa * cb, sa * sb, ca], axis=-1)
    xa = np.stack([ca * cb, ca * sb, -sa], axis=-1)
    xb = np.stack([-sb, cb, np.zeros_like(sb)], axis=-1)
    return xi, xa, xb


def frame_of(xi, pole_band: float = POLE_BAND) -> SphericalFrame:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (3,) or abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ValueError("frame_of needs a unit 3-vector")
    alpha = math.acos(min(1.0, max(-1.0, xi[2])))
    if not pole_band <= alpha <= math.pi - pole_band:
        raise PoleError(f"polar angle {alpha:.4g} outside [{pole_band}, pi - {pole_band}]")
    beta = math.atan2(xi[1], xi[0]) % (2 * math.pi)
    return SphericalFrame(alpha, beta)


# ---------------------------------------------------------------------------
# plane intersections

@dataclass(frozen=True)
class Intersection:
    t: float
    transversal: bool
    s1: float  # gamma'(t) . xi0
    s2: float  # gamma''(t) . xi0
    omega: np.ndarray
    r: float


@dataclass(frozen=True)
class IntersectionSet:
    points: list = field(default_factory=list)
    degenerate: bool = False

    def __len__(self):
        return len(self.points)

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])


def _unit(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64)
    n = np.linalg.norm(xi)
    if xi.shape != (3,) or not np.isfinite(n) or n == 0:
        raise ValueError("xi must be a nonzero finite 3-vector")
    return xi / n


def _piece_grid(a, b, closed, per_period):
    n = max(int(math.ceil(per_period * (b - a) / (2 * math.pi))), 8)
    if closed:
        t = a + (b - a) * np.arange(n + 1) / n  # last sample repeats the first point
    else:
        t = np.linspace(a, b, n)
    return t


def _bracket_roots(fun, t, vals, tol):
    """Roots of ``fun`` from sign changes (and exact zeros) of its samples."""
    roots = []
    for k in range(len(t) - 1):
        v0, v1 = vals[k], vals[k + 1]
        if v0 == 0.0:
            roots.append(t[k])
        elif v0 * v1 < 0.0:
            roots.append(brentq(fun, t[k], t[k + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
    if vals[-1] == 0.0:
        roots.append(t[-1])
    return roots


def plane_intersections(curve: Curve, x, xi, per_period: int = SAMPLES_PER_PERIOD,
                        tau_tan: float = TAU_TAN, root_tol: float = ROOT_TOL,
                        raise_degenerate: bool = True) -> IntersectionSet:
    """All parameters where the curve meets the plane through ``x`` with normal ``xi``.

    Transversal roots come from sign changes of ``g(t) = <gamma(t) - x, xi0>``
    on a dense sample refined by Brent's method; tangential roots are the
    critical points of ``g`` where ``|g|`` falls below ``root_tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = _unit(xi)
    scale = max(1.0, float(np.linalg.norm(x)), curve.radius)

    def g(t):
        return float(np.dot(curve.point(t) - x, n))

    def dg(t):
        return float(np.dot(curve.tangent(t), n))

    ts: list[float] = []
    for a, b, closed in curve.pieces():
        tt = _piece_grid(a, b, closed, per_period)
        vals = (curve.point(tt) - x) @ n
        small = np.abs(vals) < root_tol * scale
        if np.any(small[:-1] & small[1:]):
            if raise_degenerate:
                raise DegeneratePlane("plane contains an arc of the curve")
            return IntersectionSet([], degenerate=True)
        cand = _bracket_roots(g, tt, vals, root_tol)
        dvals = curve.tangent(tt) @ n
        for tc in _bracket_roots(dg, tt, dvals, root_tol):
            if abs(g(tc)) <= root_tol * scale:
                cand.append(tc)
        period = b - a
        if closed:
            cand = [a + (tq - a) % period for tq in cand]
        # a double root is only located to ~sqrt(eps) by the sign scan, so
        # nearby candidates are merged; among roots the one nearest a
        # critical point of g wins
        def score(t):
            return (abs(g(t)) > root_tol * scale, abs(dg(t)))

        cand.sort()
        merged: list[float] = []
        for tq in cand:
            if merged and tq - merged[-1] < MERGE_TOL:
                if score(tq) < score(merged[-1]):
                    merged[-1] = tq
                continue
            merged.append(tq)
        if closed and len(merged) > 1 and merged[0] + period - merged[-1] < MERGE_TOL:
            if score(merged[-1]) < score(merged[0]):
                merged[0] = merged[-1]
            merged.pop()
        ts.extend(merged)
    pts = []
    for tq in sorted(ts):
        p = curve.point(tq)
        d1 = curve.tangent(tq)
        s1 = float(d1 @ n)
        s2 = float(curve.second(tq) @ n)
        chord = x - p
        r = float(np.linalg.norm(chord))
        if r == 0.0:
            continue
        transversal = abs(s1) / float(np.linalg.norm(d1)) >= tau_tan
        pts.append(Intersection(float(tq), bool(transversal), s1, s2, chord / r, r))
    return IntersectionSet(pts)


# ---------------------------------------------------------------------------
# classification

class CovectorClass(enum.Enum):
    XI_PRIME = "XiPrime"
    XI_DOUBLE_PRIME = "XiDoublePrime"
    ON_SIGMA_BAD = "OnSigmaBad"
    NOT_IN_XI = "NotInXi"
    DEGENERATE = "Degenerate"


def independent_triple(omegas, tau_indep: float = TAU_INDEP):
    """Indices of three pairwise non-parallel unit vectors, or ``None``."""
    omegas = np.asarray(omegas, dtype=np.float64).reshape(-1, 3)
    m = len(omegas)
    if m < 3:
        return None
    cross = np.linalg.norm(np.cross(omegas[:, None, :], omegas[None, :, :]), axis=-1) > tau_indep
    for i in range(m):
        for j in range(i + 1, m):
            if not cross[i, j]:
                continue
            for k in range(j + 1, m):
                if cross[i, k] and cross[j, k]:
                    return (i, j, k)
    return None


def classify_intersections(ints: IntersectionSet, tau: float = TAU_TAN,
                           tau_indep: float = TAU_INDEP) -> CovectorClass:
    if ints.degenerate:
        return CovectorClass.DEGENERATE
    if independent_triple([p.omega for p in ints.points], tau_indep) is None:
        return CovectorClass.NOT_IN_XI
    tangential = [p for p in ints.points if not p.transversal]
    if not tangential:
        return CovectorClass.XI_PRIME
    if all(abs(p.s2) > tau for p in tangential):
        return CovectorClass.XI_DOUBLE_PRIME
    return CovectorClass.ON_SIGMA_BAD


def classify_covector(curve: Curve, x, xi, tau_tan: float = TAU_TAN,
                      tau_indep: float = TAU_INDEP) -> CovectorClass:
    ints = plane_intersections(curve, x, xi, tau_tan=tau_tan, raise_degenerate=False)
    return classify_intersections(ints, tau_tan, tau_indep)


# ---------------------------------------------------------------------------
# Kirillov-Tuy sampling

@dataclass
class KTReport:
    curve: Curve
    n_samples: int
    seed: int
    xi_prime: float
    xi_double_prime: float
    not_in_xi: float
    on_sigma_bad: float
    degenerate: int
    max_intersections: int
    coverage: np.ndarray  # per sampled point, fraction of its directions in XiPrime

    def as_dict(self) -> dict:
        cov = self.coverage
        return {
            "curve_kind": self.curve.kind,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "fraction_xi_prime": self.xi_prime,
            "fraction_xi_double_prime": self.xi_double_prime,
            "fraction_not_in_xi": self.not_in_xi,
            "fraction_on_sigma_bad": self.on_sigma_bad,
            "degenerate_draws": self.degenerate,
            "max_intersections": self.max_intersections,
            "coverage_min": float(cov.min()) if cov.size else 0.0,
            "coverage_mean": float(cov.mean()) if cov.size else 0.0,
            "coverage_max": float(cov.max()) if cov.size else 0.0,
        }


def sample_ball(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return np.asarray(center, dtype=np.float64) + r[:, None] * d


def sample_band_directions(rng: np.random.Generator, n: int, pole_band: float = POLE_BAND) -> np.ndarray:
    """Uniform directions on the sphere restricted to ``alpha`` in the pole band."""
    zmax = math.cos(pole_band)
    z = rng.uniform(-zmax, zmax, n)
    phi = rng.uniform(0.0, 2 * math.pi, n)
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def kt_check(curve: Curve, ball=((0.0, 0.0, 0.0), 1.0), n_samples: int = 2048, seed: int = 0,
             dirs_per_point: int = 32, pole_band: float = POLE_BAND) -> KTReport:
    """Sampled Kirillov-Tuy statistics over random covectors ``(x, xi)``.

    Draws ``ceil(n_samples / dirs_per_point)`` points in the ball, each with
    its own counter-based random stream, and ``dirs_per_point`` directions
    per point. Degenerate planes are counted and excluded from fractions.
    """
    from .rng import stream

    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    center, radius = ball
    n_points = -(-n_samples // dirs_per_point)
    counts = {c: 0 for c in CovectorClass}
    max_hits = 0
    coverage = []
    drawn = 0
    for p in range(n_points):
        rng = stream(seed, p)
        x = sample_ball(rng, center, radius, 1)[0]
        m = min(dirs_per_point, n_samples - drawn)
        dirs = sample_band_directions(rng, m, pole_band)
        drawn += m
        good = 0
        valid = 0
        for xi in dirs:
            ints = plane_intersections(curve, x, xi, raise_degenerate=False)
            cls = classify_intersections(ints)
            counts[cls] += 1
            if cls is CovectorClass.DEGENERATE:
                continue
            valid += 1
            max_hits = max(max_hits, len(ints))
            good += cls is CovectorClass.XI_PRIME
        coverage.append(good / valid if valid else 0.0)
    total = n_samples - counts[CovectorClass.DEGENERATE]
    frac = (lambda c: counts[c] / total if total else 0.0)
    return KTReport(curve, n_samples, seed,
                    frac(CovectorClass.XI_PRIME), frac(CovectorClass.XI_DOUBLE_PRIME),
                    frac(CovectorClass.NOT_IN_XI), frac(CovectorClass.ON_SIGMA_BAD),
                    counts[CovectorClass.DEGENERATE], max_hits, np.array(coverage))


# ---------------------------------------------------------------------------
# conormal bundle coordinates

def conormal_coords(curve: Curve, t: float, alpha: float, beta: float, s: float,
                    z1: float, z2: float, pole_band: float = POLE_BAND):
    """Map ``(t, alpha, beta, s, z1, z2)`` to ``(Gamma, x, xi)`` on the conormal bundle
    of the point-line relation."""
    if z1 == 0 and z2 == 0:
        raise ValueError("(z1, z2) must not both vanish")
    if not pole_band <= alpha <= math.pi - pole_band:
        raise PoleError(f"polar angle {alpha:.4g} outside the pole band")
    omega, w_a, w_b = frame_vectors(alpha, beta)
    xi = z1 * w_a + z2 * w_b
    x = curve.point(t) + s * omega
    gamma = np.array([-float(xi @ curve.tangent(t)), -s * z1, -s * z2 * math.sin(alpha)])
    return gamma, x, xi


def sigma_distance(curve: Curve, t: float, xi) -> float:
    """Signed ``gamma'(t) . xi0``; its zero set is the fold locus Sigma."""
    return float(curve.tangent(t) @ _unit(xi))
