"""Principal symbol of the normal operator, its rank-5 structure, and the
pseudo-inverse symbol used by the reconstruction.

For a covector ``xi`` at ``x`` the plane through ``x`` normal to ``xi`` meets
the source curve at ``gamma(t_q)``. With ``w_q = (x - gamma(t_q)) / r_q`` and
the adapted frame ``e_beta = xi0``, ``e_alpha = xi0 x w_q``,

    A0 = sum_q  2 pi / (|xi| |gamma'(t_q).xi0| r_q) * (a_q a_q^T + b_q b_q^T),

where ``a_q = vec(w_q (x) e_alpha)`` and ``b_q = vec(w_q (x) e_beta)``
(row-major flattening, first slot = line direction).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .fields import sol_projector
from .geometry import (POLE_BAND, TAU_INDEP, TAU_TAN, Curve, independent_triple, plane_intersections,
                       sample_ball, sample_band_directions)

TAU_SIGMA = 1e-3
TAU_RANK = 1e-8
ADMISSIBLE_TOL = 1e-9


class SigmaProximity(ValueError):
    """An intersection is too close to tangency; the symbol weight blows up there."""


class NotElliptic(ValueError):
    """Fewer than three usable, pairwise independent intersections."""


class RankDeficient(ValueError):
    pass


class AdmissibilityError(ValueError):
    pass


def adapted_frame(omega, xi0):
    """``(e_alpha, e_beta) = (xi0 x omega, xi0)`` for ``omega`` in the plane normal to ``xi0``."""
    omega = np.asarray(omega, dtype=np.float64)
    xi0 = np.asarray(xi0, dtype=np.float64)
    e_alpha = np.cross(np.broadcast_to(xi0, omega.shape), omega)
    return e_alpha, np.broadcast_to(xi0, omega.shape).copy()


@dataclass(frozen=True, eq=False)
class SymbolMatrix:
    """Symbol ``A0(x, xi)`` with the per-intersection data it is built from."""

    x: np.ndarray
    xi: np.ndarray
    t: np.ndarray
    weights: np.ndarray
    omegas: np.ndarray
    e_alpha: np.ndarray
    e_beta: np.ndarray
    matrix: np.ndarray

    @classmethod
    def from_parts(cls, x, xi, t, speeds, dists, omegas) -> "SymbolMatrix":
        """Assemble from intersection parameters, ``|gamma'.xi0|``, distances and unit chords."""
        x = np.asarray(x, dtype=np.float64)
        xi = np.asarray(xi, dtype=np.float64)
        knorm = float(np.linalg.norm(xi))
        if knorm == 0.0:
            raise ValueError("xi must be nonzero")
        xi0 = xi / knorm
        omegas = np.asarray(omegas, dtype=np.float64).reshape(-1, 3)
        speeds = np.abs(np.asarray(speeds, dtype=np.float64).reshape(-1))
        dists = np.asarray(dists, dtype=np.float64).reshape(-1)
        weights = 2 * math.pi / (knorm * speeds * dists)
        ea, eb = adapted_frame(omegas, xi0)
        va = (omegas[:, :, None] * ea[:, None, :]).reshape(-1, 9)
        vb = (omegas[:, :, None] * eb[:, None, :]).reshape(-1, 9)
        mat = np.einsum("q,qi,qj->ij", weights, va, va) + np.einsum("q,qi,qj->ij", weights, vb, vb)
        mat = 0.5 * (mat + mat.T)
        return cls(x, xi, np.asarray(t, dtype=np.float64).reshape(-1), weights, omegas, ea, eb, mat)

    @property
    def n_points(self) -> int:
        return len(self.weights)

    @property
    def xi0(self) -> np.ndarray:
        return self.xi / np.linalg.norm(self.xi)

    @property
    def v_alpha(self) -> np.ndarray:
        return (self.omegas[:, :, None] * self.e_alpha[:, None, :]).reshape(-1, 9)

    @property
    def v_beta(self) -> np.ndarray:
        return (self.omegas[:, :, None] * self.e_beta[:, None, :]).reshape(-1, 9)

    def kronecker_form(self) -> np.ndarray:
        """``sum_q w_q (w w^T) kron (I - w w^T)``; frame-free form of the same matrix."""
        out = np.zeros((9, 9))
        for w, om in zip(self.weights, self.omegas):
            oo = np.outer(om, om)
            out += w * np.kron(oo, np.eye(3) - oo)
        return out

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def rank(self, tau_rank: float = TAU_RANK) -> int:
        s = self.singular_values()
        return int(np.sum(s > tau_rank * s[0])) if s[0] > 0 else 0


def principal_symbol(curve: Curve, x, xi, tau_sigma: float = TAU_SIGMA, tau_tan: float = TAU_TAN,
                     tau_indep: float = TAU_INDEP, require_elliptic: bool = True) -> SymbolMatrix:
    """Evaluate ``A0(x, xi)`` from the plane intersections of ``curve``.

    Raises
    ------
    SigmaProximity
        Some intersection has ``|gamma'(t_q).xi0| <= tau_sigma``.
    NotElliptic
        The plane lies along the curve or has no independent triple of chords.
        With ``require_elliptic=False`` the matrix is returned regardless,
        which is how rank drops are inspected.
    """
    x = np.asarray(x, dtype=np.float64)
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (3,) or not np.all(np.isfinite(xi)) or not np.any(xi):
        raise ValueError("xi must be a nonzero finite 3-vector")
    ints = plane_intersections(curve, x, xi, tau_tan=tau_tan, raise_degenerate=False)
    if ints.degenerate:
        raise NotElliptic("plane contains an arc of the curve")
    pts = ints.points
    close = [p for p in pts if abs(p.s1) <= tau_sigma]
    if close:
        raise SigmaProximity(f"|gamma'.xi0| = {min(abs(p.s1) for p in close):.3g} <= {tau_sigma:g}")
    omegas = np.array([p.omega for p in pts]).reshape(-1, 3)
    if require_elliptic and independent_triple(omegas, tau_indep) is None:
        raise NotElliptic(f"{len(pts)} intersection(s) without an independent triple")
    return SymbolMatrix.from_parts(x, xi, [p.t for p in pts], [p.s1 for p in pts],
                                   [p.r for p in pts], omegas)


@dataclass(frozen=True, eq=False)
class Basis5:
    """Five symbol factors and the smallest singular value of their 9x5 stack."""

    vectors: np.ndarray  # (9, 5)
    labels: tuple  # (q1, q2, q3) with beta factors taken from q1, q2
    certificate: float


def _certificate(va, vb, triple, pair):
    cols = [va[q] for q in triple] + [vb[q] for q in pair]
    stack = np.stack(cols, axis=1)
    return np.linalg.svd(stack, compute_uv=False)[-1], stack


def basis5(symbol: SymbolMatrix, tau_rank: float = TAU_RANK) -> Basis5:
    """Best-conditioned choice of ``{w_q (x) e_alpha}_{3} u {w_q (x) e_beta}_{2}``.

    All triples and beta pairs are searched, so the certificate does not
    depend on how the intersections are labelled.
    """
    va, vb = symbol.v_alpha, symbol.v_beta
    best = (-1.0, None, None)
    for triple in itertools.combinations(range(symbol.n_points), 3):
        for pair in itertools.combinations(triple, 2):
            cert, stack = _certificate(va, vb, triple, pair)
            if cert > best[0]:
                rest = tuple(q for q in triple if q not in pair)
                best = (cert, stack, pair + rest)
    cert, stack, labels = best
    if stack is None:
        raise RankDeficient(f"only {symbol.n_points} intersection(s)")
    if not cert > tau_rank:
        raise RankDeficient(f"basis certificate {cert:.3g} <= {tau_rank:g}")
    return Basis5(stack, labels, float(cert))


def parametrix_symbol(symbol: SymbolMatrix, tau_rank: float = TAU_RANK) -> np.ndarray:
    """``B0 = Pi_sol(xi) pinv(A0)`` with singular values below ``tau_rank * s_max`` dropped."""
    basis5(symbol, tau_rank)
    u, s, vt = np.linalg.svd(symbol.matrix)
    keep = s > tau_rank * s[0]
    if keep.sum() < 5:
        raise RankDeficient(f"symbol rank {int(keep.sum())} < 5")
    pinv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return sol_projector(symbol.xi) @ pinv


def sample_symbols(curve: Curve, rng: np.random.Generator, n: int, ball=((0.0, 0.0, 0.0), 1.0),
                   pole_band: float = POLE_BAND, tau_sigma: float = TAU_SIGMA,
                   max_draws: int | None = None) -> list[SymbolMatrix]:
    """Symbols at ``n`` random covectors whose plane has an independent triple.

    Draws that land near the tangency set, on a degenerate plane, or without
    three usable intersections are skipped. Raises ``RuntimeError`` if
    ``max_draws`` (default ``200 n``) is exhausted first.
    """
    center, radius = ball
    out = []
    limit = 200 * n if max_draws is None else max_draws
    for _ in range(limit):
        if len(out) == n:
            break
        x = sample_ball(rng, center, radius, 1)[0]
        xi = sample_band_directions(rng, 1, pole_band)[0] * rng.uniform(0.5, 20.0)
        try:
            out.append(principal_symbol(curve, x, xi, tau_sigma))
        except (SigmaProximity, NotElliptic):
            continue
    if len(out) < n:
        raise RuntimeError(f"found {len(out)} of {n} usable covectors in {limit} draws")
    return out


def identity_defect(symbol: SymbolMatrix, tau_rank: float = TAU_RANK) -> float:
    """``|B0 A0 - Pi_sol(xi)|_F``."""
    b0 = parametrix_symbol(symbol, tau_rank)
    return float(np.linalg.norm(b0 @ symbol.matrix - sol_projector(symbol.xi)))


# ---------------------------------------------------------------------------
# ellipticity through the explicit constraint system

def _idx(i, j):
    return 3 * (i - 1) + (j - 1)


def constraint_rows(alphas, beta1) -> np.ndarray:
    """12x9 system on ``f_ij`` for three chords in a common vertical half-plane.

    Rows: three frame equations ``w_q (x) e_alpha`` (q = 1..3), two
    ``w_q (x) e_beta`` and two ``xi (x) e_alpha,q`` (q = 1, 2), one ``xi (x) xi``,
    the trace, and the three components of ``xi^i f_ij``, with
    ``xi = (-sin b, cos b, 0)``. The coefficients are written out by hand.
    """
    sb, cb = math.sin(beta1), math.cos(beta1)
    rows = []
    for a in alphas[:3]:
        sa, ca = math.sin(a), math.cos(a)
        r = np.zeros(9)
        r[_idx(1, 1)] = sa * ca * cb * cb
        r[_idx(2, 2)] = sa * ca * sb * sb
        r[_idx(3, 3)] = -sa * ca
        r[_idx(1, 2)] = r[_idx(2, 1)] = sa * ca * sb * cb
        r[_idx(1, 3)] = -sa * sa * cb
        r[_idx(2, 3)] = -sa * sa * sb
        r[_idx(3, 1)] = ca * ca * cb
        r[_idx(3, 2)] = ca * ca * sb
        rows.append(r)
    for a in alphas[:2]:
        sa, ca = math.sin(a), math.cos(a)
        r = np.zeros(9)
        r[_idx(1, 1)] = sa * sb * cb
        r[_idx(2, 2)] = -sa * sb * cb
        r[_idx(1, 2)] = -sa * cb * cb
        r[_idx(2, 1)] = sa * sb * sb
        r[_idx(3, 1)] = ca * sb
        r[_idx(3, 2)] = -ca * cb
        rows.append(r)
    for a in alphas[:2]:
        sa, ca = math.sin(a), math.cos(a)
        r = np.zeros(9)
        r[_idx(1, 1)] = -ca * sb * cb
        r[_idx(2, 2)] = ca * sb * cb
        r[_idx(1, 2)] = -ca * sb * sb
        r[_idx(2, 1)] = ca * cb * cb
        r[_idx(1, 3)] = sa * sb
        r[_idx(2, 3)] = -sa * cb
        rows.append(r)
    r = np.zeros(9)
    r[_idx(1, 1)] = sb * sb
    r[_idx(2, 2)] = cb * cb
    r[_idx(1, 2)] = r[_idx(2, 1)] = -sb * cb
    rows.append(r)
    rows.append(np.eye(3).ravel())
    for j in (1, 2, 3):
        r = np.zeros(9)
        r[_idx(1, j)] = -sb
        r[_idx(2, j)] = cb
        rows.append(r)
    return np.array(rows)


@dataclass(frozen=True)
class EllipticityReport:
    alphas: tuple
    beta1: float
    min_singular: float
    det_a: float
    det_a_error: float
    det_b: float
    det_b_error: float

    @property
    def unique_zero(self) -> bool:
        return self.min_singular > 1e-8


def _check_admissible(alphas):
    for a, b in itertools.combinations(alphas, 2):
        if abs(math.sin(a - b)) <= ADMISSIBLE_TOL:
            raise AdmissibilityError(f"angles {a:g} and {b:g} differ by a multiple of pi")


def ellipticity_check(alpha1: float, alpha2: float, alpha3: float, beta1: float) -> EllipticityReport:
    """Smallest singular value of the row-normalised system and the two 2x2 determinants."""
    alphas = (float(alpha1), float(alpha2), float(alpha3))
    if not all(math.isfinite(a) for a in alphas + (beta1,)):
        raise ValueError("angles must be finite")
    _check_admissible(alphas)
    rows = constraint_rows(alphas, beta1)
    rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    smin = float(np.linalg.svd(rows, compute_uv=False)[-1])
    block_a = np.array([[-math.cos(alphas[0]), math.sin(alphas[0])],
                        [-math.cos(alphas[1]), math.sin(alphas[1])]])
    sb, cb = math.sin(beta1), math.cos(beta1)
    block_b = np.array([[sb, -cb], [cb, sb]])
    det_a = float(np.linalg.det(block_a))
    det_b = float(np.linalg.det(block_b))
    return EllipticityReport(alphas, float(beta1), smin, det_a, abs(det_a - math.sin(alphas[0] - alphas[1])),
                             det_b, abs(det_b - 1.0))


def sample_admissible(rng: np.random.Generator, n: int, min_gap: float = 1e-3) -> np.ndarray:
    """``n`` rows ``(alpha1, alpha2, alpha3, beta1)`` with pairwise ``|sin(a_i - a_j)| > min_gap``."""
    out = np.empty((n, 4))
    k = 0
    while k < n:
        a = rng.uniform(0.0, math.pi, 3)
        if all(abs(math.sin(p - q)) > min_gap for p, q in itertools.combinations(a, 2)):
            out[k, :3] = a
            out[k, 3] = rng.uniform(0.0, 2 * math.pi)
            k += 1
    return out
