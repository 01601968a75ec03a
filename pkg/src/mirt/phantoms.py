"""Closed-form test fields with compact support inside the unit ball.

Every phantom is built from ``phi = G * W`` where ``G`` is an (optionally
anisotropic) Gaussian about ``center`` and ``W`` is the smooth bump
``exp(1 - 1/(1 - rho^2))`` on the ball of radius ``1 - 2 h_max - |center|``.
Derivatives are evaluated analytically, so the fields vanish identically
outside that ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .fields import Grid3, ScalarField, SupportError, Tensor2Field, VectorField, _levi_civita

PHANTOM_KINDS = ("gaussian-tensor", "ball-tensor", "solenoidal-gaussian", "potential-dprime", "lambda-scalar")


@dataclass(frozen=True)
class Phantom:
    """Parameters of a test field.

    ``width`` is the Gaussian standard deviation (one value or one per axis);
    for ``ball-tensor`` it is the radius of the smooth ball. ``amplitude=None``
    draws a random symmetric matrix from the phantom stream of ``seed``.
    """

    kind: str = "solenoidal-gaussian"
    amplitude: tuple | None = None
    center: tuple = (0.0, 0.0, 0.0)
    width: tuple | float = 0.2

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}; expected one of {PHANTOM_KINDS}")
        w = np.broadcast_to(np.asarray(self.width, dtype=np.float64), (3,))
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValueError("width must be positive")
        c = np.asarray(self.center, dtype=np.float64)
        if c.shape != (3,) or not np.all(np.isfinite(c)):
            raise ValueError("center must be a finite 3-vector")
        if self.amplitude is not None:
            a = np.asarray(self.amplitude, dtype=np.float64)
            if a.size != 9 or not np.all(np.isfinite(a)):
                raise ValueError("amplitude must be 9 finite numbers")

    @property
    def widths(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.width, dtype=np.float64), (3,)).copy()

    def amplitude_matrix(self, seed: int = 0) -> np.ndarray:
        if self.amplitude is not None:
            return np.asarray(self.amplitude, dtype=np.float64).reshape(3, 3)
        g = rng_mod.stream(seed, rng_mod.OFFSET_PHANTOM)
        a = g.standard_normal((3, 3))
        return 0.5 * (a + a.T)


def support_radius(spec: Phantom, grid: Grid3) -> float:
    """Radius of the window ball, keeping a two-voxel gap to the unit sphere."""
    r = 1.0 - 2.0 * max(grid.spacing) - float(np.linalg.norm(spec.center))
    if r <= 0:
        raise SupportError("phantom center leaves no room inside the unit ball")
    return r


def _window(X: np.ndarray, radius: float):
    """Smooth bump on ``|X| < radius`` and its gradient."""
    rho2 = np.sum(X * X, axis=-1) / radius ** 2
    inside = rho2 < 1.0
    den = np.where(inside, 1.0 - rho2, 1.0)
    w = np.where(inside, np.exp(1.0 - 1.0 / den), 0.0)
    dw = np.where(inside, -2.0 * w / (den * den * radius ** 2), 0.0)[..., None] * X
    return w, dw


def bump(spec: Phantom, grid: Grid3):
    """``(phi, grad phi)`` on the grid."""
    X = grid.points() - np.asarray(spec.center)
    s = spec.widths
    g = np.exp(-0.5 * np.sum((X / s) ** 2, axis=-1))
    dg = -(X / s ** 2) * g[..., None]
    if spec.kind == "ball-tensor":
        return _window(X, min(float(s.max()), support_radius(spec, grid)))
    w, dw = _window(X, support_radius(spec, grid))
    return g * w, dg * w[..., None] + g[..., None] * dw


def make_phantom(spec: Phantom, grid: Grid3, seed: int = 0) -> Tensor2Field:
    """Evaluate the phantom on ``grid``.

    * ``gaussian-tensor``, ``ball-tensor``: ``A phi``
    * ``solenoidal-gaussian``: ``eps_ikl d_k (S phi) _lj`` with ``S = sym(A)``;
      divergence-free in the first slot and trace-free
    * ``potential-dprime``: ``d_i u_j`` with ``u_j = A_jj phi``
    * ``lambda-scalar``: ``(tr A / 3) phi Id``
    """
    a = spec.amplitude_matrix(seed)
    phi, dphi = bump(spec, grid)
    if spec.kind in ("gaussian-tensor", "ball-tensor"):
        vals = phi[..., None, None] * a
    elif spec.kind == "solenoidal-gaussian":
        s = 0.5 * (a + a.T)
        vals = np.einsum("ikl,...k,lj->...ij", _levi_civita(), dphi, s)
    elif spec.kind == "potential-dprime":
        vals = dphi[..., :, None] * np.diag(a)[None, None, None, None, :]
    else:
        vals = (np.trace(a) / 3.0) * phi[..., None, None] * np.eye(3)
    return Tensor2Field(grid, vals)


def potential_of(spec: Phantom, grid: Grid3, seed: int = 0) -> VectorField:
    """The vector field ``u`` whose ``d'`` is the ``potential-dprime`` phantom."""
    phi, _ = bump(spec, grid)
    return VectorField(grid, phi[..., None] * np.diag(spec.amplitude_matrix(seed)))


def scalar_of(spec: Phantom, grid: Grid3, seed: int = 0) -> ScalarField:
    """The scalar ``w`` whose ``lambda`` embedding is the ``lambda-scalar`` phantom."""
    phi, _ = bump(spec, grid)
    return ScalarField(grid, (np.trace(spec.amplitude_matrix(seed)) / 3.0) * phi)
