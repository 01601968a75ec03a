"""Fields on a regular 3D grid, the kernel-generating operators and the
solenoidal decomposition.

Differential operators are spectral: the field is treated as periodic on
its own grid (``pad=1``) or on a zero-padded extension (``pad=2``). The
derivative symbol is ``i*kappa`` where ``kappa`` is the DFT wavevector with
the Nyquist components set to zero, so every operator here, and the
projector used by :func:`decompose`, share one symbol and the algebraic
identities between them hold to rounding.

Tensors are indexed ``values[ix, iy, iz, i, j]`` with ``i`` the first slot
of ``f_ij``; flattening a 3x3 tensor to a 9-vector is row-major in ``(i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SupportError(ValueError):
    """A field is not zero in the margin required by a periodic operation."""


@dataclass(frozen=True)
class Grid3:
    """Regular sampling ``x = origin + index * spacing`` of a box."""

    shape: tuple[int, int, int]
    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        origin = tuple(float(o) for o in self.origin)
        spacing = tuple(float(h) for h in self.spacing)
        if len(shape) != 3 or len(origin) != 3 or len(spacing) != 3:
            raise ValueError("Grid3 needs three counts, origins and spacings")
        if min(shape) < 4:
            raise ValueError(f"grid counts must be >= 4, got {shape}")
        if not all(np.isfinite(origin)) or min(spacing) <= 0 or not all(np.isfinite(spacing)):
            raise ValueError("grid spacing must be positive and finite")
        lo = np.array(origin)
        hi = lo + (np.array(shape) - 1) * np.array(spacing)
        if np.any(lo > -1.0 + 1e-12) or np.any(hi < 1.0 - 1e-12):
            raise ValueError("grid bounding box must contain the closed unit ball")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def cube(cls, n: int, half_width: float = 1.2) -> "Grid3":
        h = 2.0 * half_width / (n - 1)
        return cls((n, n, n), (-half_width,) * 3, (h,) * 3)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def center(self) -> np.ndarray:
        return np.array(self.origin) + 0.5 * (np.array(self.shape) - 1) * np.array(self.spacing)

    @property
    def bounding_radius(self) -> float:
        """Radius of the sphere circumscribing the sampled box."""
        return float(0.5 * np.linalg.norm((np.array(self.shape) - 1) * np.array(self.spacing)))

    def axes(self) -> list[np.ndarray]:
        return [self.origin[d] + self.spacing[d] * np.arange(self.shape[d]) for d in range(3)]

    def points(self) -> np.ndarray:
        """Voxel positions, shape ``(nx, ny, nz, 3)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def wavevectors(self, pad: int = 1) -> np.ndarray:
        """Derivative wavevectors of the (padded) periodic grid, shape ``(Nx, Ny, Nz, 3)``.

        Nyquist components are zero so that ``i*kappa`` is the symbol of a
        real-to-real derivative.
        """
        ks = []
        for n, h in zip(self.shape, self.spacing):
            m = pad * n
            k = 2.0 * np.pi * np.fft.fftfreq(m, d=h)
            if m % 2 == 0:
                k[m // 2] = 0.0
            ks.append(k)
        return np.stack(np.meshgrid(*ks, indexing="ij"), axis=-1)


class _Field:
    _component_shape: tuple[int, ...] = ()

    def __init__(self, grid: Grid3, values):
        values = np.asarray(values, dtype=np.float64)
        expected = grid.shape + self._component_shape
        if values.shape != expected:
            raise ValueError(f"{type(self).__name__} values must have shape {expected}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{type(self).__name__} values must be finite")
        values = values.copy()
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def _new(self, values):
        return type(self)(self.grid, values)

    def _check_grid(self, other):
        if not isinstance(other, type(self)) or other.grid != self.grid:
            raise ValueError("fields live on different grids or have different kinds")

    def __add__(self, other):
        self._check_grid(other)
        return self._new(self.values + other.values)

    def __sub__(self, other):
        self._check_grid(other)
        return self._new(self.values - other.values)

    def __mul__(self, scalar: float):
        return self._new(float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self._new(-self.values)

    def dot(self, other) -> float:
        """L2 inner product including the voxel volume."""
        self._check_grid(other)
        return float(np.vdot(self.values, other.values)) * self.grid.voxel_volume

    def norm(self) -> float:
        return float(np.sqrt(max(self.dot(self), 0.0)))

    @classmethod
    def zeros(cls, grid: Grid3):
        return cls(grid, np.zeros(grid.shape + cls._component_shape))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.grid.shape}, norm={self.norm():.6g})"


class ScalarField(_Field):
    _component_shape = ()


class VectorField(_Field):
    _component_shape = (3,)


class Tensor2Field(_Field):
    _component_shape = (3, 3)

    def flat(self) -> np.ndarray:
        """View with the 3x3 components flattened row-major, shape ``(nx, ny, nz, 9)``."""
        return self.values.reshape(self.grid.shape + (9,))


# ---------------------------------------------------------------------------
# spectral plumbing

def _forward(values: np.ndarray, pad: int) -> np.ndarray:
    shape = tuple(pad * n for n in values.shape[:3])
    return np.fft.fftn(values, s=shape, axes=(0, 1, 2))


def _inverse(spec: np.ndarray, grid: Grid3) -> np.ndarray:
    nx, ny, nz = grid.shape
    out = np.fft.ifftn(spec, axes=(0, 1, 2))
    return out[:nx, :ny, :nz].real


def _check_pad(pad: int) -> int:
    if pad not in (1, 2):
        raise ValueError("pad must be 1 (periodic on the grid) or 2 (zero-padded)")
    return pad


def sym_derivative(u: VectorField, pad: int = 1) -> Tensor2Field:
    """Inner (symmetrised) derivative ``(du)_ij = (d_j u_i + d_i u_j) / 2``."""
    _check_pad(pad)
    k = u.grid.wavevectors(pad)
    uh = _forward(u.values, pad)
    grad = _inverse(1j * k[..., :, None] * uh[..., None, :], u.grid)  # grad[..., i, j] = d_i u_j
    return Tensor2Field(u.grid, 0.5 * (grad + grad.swapaxes(-1, -2)))


def dprime(u: VectorField, pad: int = 1) -> Tensor2Field:
    """``(d'u)_ij = d u_j / d x_i``; generally not symmetric."""
    _check_pad(pad)
    k = u.grid.wavevectors(pad)
    uh = _forward(u.values, pad)
    return Tensor2Field(u.grid, _inverse(1j * k[..., :, None] * uh[..., None, :], u.grid))


def lambda_embed(w: ScalarField) -> Tensor2Field:
    """``(lambda w)_ij = delta_ij w``."""
    return Tensor2Field(w.grid, w.values[..., None, None] * np.eye(3))


def delta_prime(f: Tensor2Field, pad: int = 1) -> VectorField:
    """Divergence in the first slot, ``(delta' f)_j = sum_i d f_ij / d x_i``."""
    _check_pad(pad)
    k = f.grid.wavevectors(pad)
    fh = _forward(f.values, pad)
    return VectorField(f.grid, _inverse(np.einsum("...i,...ij->...j", 1j * k, fh), f.grid))


def mu_trace(f: Tensor2Field) -> ScalarField:
    return ScalarField(f.grid, np.trace(f.values, axis1=-2, axis2=-1))


def gradient(w: ScalarField, pad: int = 1) -> VectorField:
    _check_pad(pad)
    k = w.grid.wavevectors(pad)
    wh = _forward(w.values, pad)
    return VectorField(w.grid, _inverse(1j * k * wh[..., None], w.grid))


def laplacian(u: VectorField, pad: int = 1) -> VectorField:
    """Componentwise Laplacian with the same (Nyquist-free) symbol ``-|kappa|^2``."""
    _check_pad(pad)
    k = u.grid.wavevectors(pad)
    uh = _forward(u.values, pad)
    return VectorField(u.grid, _inverse(-np.sum(k * k, axis=-1)[..., None] * uh, u.grid))


# ---------------------------------------------------------------------------
# solenoidal projector

def _as_direction(xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (3,):
        raise ValueError("xi must be a 3-vector")
    nrm = np.linalg.norm(xi)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("xi must be a nonzero finite vector")
    return xi


def sol_projector(xi) -> np.ndarray:
    """Orthogonal projector (9x9) onto ``{f : xi^i f_ij = 0, tr f = 0}``.

    Built as identity minus the Gram-solve projector onto the span of
    ``xi (x) e_1``, ``xi (x) e_2``, ``xi (x) e_3`` and the identity.
    """
    xi = _as_direction(xi)
    basis = np.empty((9, 4))
    for j in range(3):
        basis[:, j] = np.outer(xi, np.eye(3)[j]).ravel()
    basis[:, 3] = np.eye(3).ravel()
    gram = basis.T @ basis
    complement = basis @ np.linalg.solve(gram, basis.T)
    proj = np.eye(9) - complement
    return 0.5 * (proj + proj.T)


def solenoidal_basis(xi) -> np.ndarray:
    """Orthonormal 9x5 basis of the solenoidal subspace for direction ``xi``.

    With ``a, b`` an orthonormal pair spanning ``xi``'s orthogonal plane the
    columns are ``a(x)n, b(x)n, a(x)b, b(x)a, (a(x)a - b(x)b)/sqrt 2``.
    """
    n = _as_direction(xi)
    n = n / np.linalg.norm(n)
    a, b = _orthonormal_pair(n)
    cols = [np.outer(a, n), np.outer(b, n), np.outer(a, b), np.outer(b, a),
            (np.outer(a, a) - np.outer(b, b)) / np.sqrt(2.0)]
    return np.stack([c.ravel() for c in cols], axis=1)


def _orthonormal_pair(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    a = np.cross(n, helper)
    a /= np.linalg.norm(a)
    return a, np.cross(n, a)


def _split_spectrum(fh: np.ndarray, k: np.ndarray):
    """Per-frequency split ``fh = fs + i k (x) uh + wh Id``.

    ``fh`` has shape ``(..., 3, 3)``. At ``k = 0`` the trace part goes to
    ``wh`` and ``uh`` is zero.
    """
    knorm = np.linalg.norm(k, axis=-1)
    zero = knorm == 0.0
    n = np.where(zero[..., None], 0.0, k / np.where(zero, 1.0, knorm)[..., None])
    eye = np.eye(3)
    perp = eye - n[..., :, None] * n[..., None, :]
    # the perpendicular-plane trace; at k = 0 use the full-trace rule
    tr_perp = np.einsum("...ij,...ji->...", perp, fh)
    wh = np.where(zero, np.trace(fh, axis1=-2, axis2=-1) / 3.0, 0.5 * tr_perp)
    n_row = np.einsum("...i,...ij->...j", n, fh)  # n^T fh
    fs = np.einsum("...ik,...kj->...ij", perp, fh) - 0.5 * tr_perp[..., None, None] * perp
    fs = np.where(zero[..., None, None], fh - wh[..., None, None] * eye, fs)
    safe = np.where(zero, 1.0, knorm)
    uh = np.where(zero[..., None], 0.0, (n_row - wh[..., None] * n) / (1j * safe[..., None]))
    return fs, uh, wh


def check_margin(values: np.ndarray, width: int = 2, rtol: float = 1e-6) -> None:
    """Raise :class:`SupportError` unless ``values`` vanish in a border of ``width`` voxels."""
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    if scale == 0.0:
        return
    mask = np.zeros(values.shape[:3], dtype=bool)
    mask[:width] = mask[-width:] = True
    mask[:, :width] = mask[:, -width:] = True
    mask[:, :, :width] = mask[:, :, -width:] = True
    border = float(np.max(np.abs(values[mask])))
    if border > rtol * scale:
        raise SupportError(
            f"field is not supported away from the grid edge: border/max = {border / scale:.3e} > {rtol:g}")


def decompose(f: Tensor2Field, pad: int = 1, margin: int = 2, margin_rtol: float = 1e-6):
    """Split ``f = f_s + d'u + lambda w`` with ``f_s`` divergence- and trace-free.

    Returns ``(f_s, u, w)``. The split is exact per frequency, so
    ``f_s + dprime(u, pad) + lambda_embed(w)`` reproduces ``f`` to rounding
    when the same ``pad`` is used. Raises :class:`SupportError` when ``f``
    reaches into the ``margin``-voxel border.
    """
    _check_pad(pad)
    check_margin(f.values, margin, margin_rtol)
    grid = f.grid
    fs_h, uh, wh = _split_spectrum(_forward(f.values, pad), grid.wavevectors(pad))
    return (Tensor2Field(grid, _inverse(fs_h, grid)),
            VectorField(grid, _inverse(uh, grid)),
            ScalarField(grid, _inverse(wh, grid)))


def project_solenoidal(f: Tensor2Field, pad: int = 1) -> Tensor2Field:
    """Frequency-domain projection onto the solenoidal part, no margin check."""
    _check_pad(pad)
    fs_h, _, _ = _split_spectrum(_forward(f.values, pad), f.grid.wavevectors(pad))
    return Tensor2Field(f.grid, _inverse(fs_h, f.grid))


def curl_first(a: Tensor2Field, pad: int = 1) -> Tensor2Field:
    """``(curl a)_ij = eps_ikl d_k a_lj``: divergence-free in the first slot;
    trace-free when ``a`` is symmetric."""
    _check_pad(pad)
    k = a.grid.wavevectors(pad)
    ah = _forward(a.values, pad)
    eps = _levi_civita()
    return Tensor2Field(a.grid, _inverse(np.einsum("ikl,...k,...lj->...ij", eps, 1j * k, ah), a.grid))


def _levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


def tensor_from_flat(v: Sequence[float]) -> np.ndarray:
    return np.asarray(v, dtype=np.float64).reshape(3, 3)
