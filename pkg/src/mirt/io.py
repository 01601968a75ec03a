"""Binary volume and sinogram files (little-endian).

Volumes: 4-byte magic, ``u32 nx, ny, nz``, ``f64 origin[3]``, ``f64 spacing[3]``,
then ``nx*ny*nz*ncomp`` f64 values with the x index fastest and components
innermost (row-major ``(i, j)`` for tensors). Magics: ``MRT1`` tensor (9),
``MRV0`` vector (3), ``MRS0`` scalar (1).

Sinograms (``MSN1``): magic, ``u32 n_t, n_alpha, n_beta``, ``f64 t0, t1,
alpha_lo, alpha_hi``, then records ``(t, alpha, beta, A, B)`` as f64 with t
fastest, then alpha, then beta.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import Grid3, ScalarField, Tensor2Field, VectorField
from .transform import LineSet, Sinogram

_VOLUME = {b"MRT1": (Tensor2Field, 9, (3, 3)), b"MRV0": (VectorField, 3, (3,)), b"MRS0": (ScalarField, 1, ())}
_MAGIC_OF = {Tensor2Field: b"MRT1", VectorField: b"MRV0", ScalarField: b"MRS0"}
_HEAD = struct.Struct("<4s3I6d")
_SINO_HEAD = struct.Struct("<4s3I4d")


class FormatError(ValueError):
    pass


def write_volume(path, field) -> None:
    magic = _MAGIC_OF.get(type(field))
    if magic is None:
        raise TypeError(f"cannot write {type(field).__name__}")
    g = field.grid
    ncomp = _VOLUME[magic][1]
    # (nx, ny, nz, c) -> (nz, ny, nx, c) so that x runs fastest on disk
    data = np.ascontiguousarray(field.values.reshape(g.shape + (ncomp,)).transpose(2, 1, 0, 3), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(magic, *g.shape, *g.origin, *g.spacing))
        fh.write(data.tobytes())


def read_volume(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, nx, ny, nz, *geo = _HEAD.unpack_from(raw)
    if magic not in _VOLUME:
        raise FormatError(f"{path}: bad magic {magic!r}")
    cls, ncomp, tail = _VOLUME[magic]
    count = nx * ny * nz * ncomp
    if len(raw) != _HEAD.size + 8 * count:
        raise FormatError(f"{path}: expected {count} values, file size {len(raw)}")
    grid = Grid3((nx, ny, nz), tuple(geo[:3]), tuple(geo[3:]))
    data = np.frombuffer(raw, dtype="<f8", offset=_HEAD.size).reshape(nz, ny, nx, ncomp)
    vals = data.transpose(2, 1, 0, 3).astype(np.float64).reshape((nx, ny, nz) + tail)
    return cls(grid, vals)


@dataclass(frozen=True, eq=False)
class SinogramRecords:
    """Contents of an ``MSN1`` file, arrays shaped ``(n_t, n_alpha, n_beta)``."""

    interval: tuple
    alpha_range: tuple
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    chan_a: np.ndarray
    chan_b: np.ndarray

    def to_sinogram(self, lines: LineSet) -> Sinogram:
        """Attach to ``lines`` after checking that the sampling agrees."""
        t, a, b = np.meshgrid(lines.t, lines.alpha, lines.beta, indexing="ij")
        for name, want, got in (("t", t, self.t), ("alpha", a, self.alpha), ("beta", b, self.beta)):
            if want.shape != got.shape or not np.allclose(want, got, rtol=0, atol=1e-12):
                raise FormatError(f"sinogram {name} samples do not match the line set")
        return Sinogram(lines, self.chan_a, self.chan_b)


def write_sinogram(path, sino: Sinogram) -> None:
    lines = sino.lines
    t, a, b = np.meshgrid(lines.t, lines.alpha, lines.beta, indexing="ij")
    rec = np.stack([t, a, b, sino.chan_a, sino.chan_b], axis=-1)  # (n_t, n_a, n_b, 5)
    data = np.ascontiguousarray(rec.transpose(2, 1, 0, 3), dtype="<f8")
    t0, t1 = lines.curve.interval
    with open(path, "wb") as fh:
        fh.write(_SINO_HEAD.pack(b"MSN1", lines.n_t, lines.n_alpha, lines.n_beta, t0, t1,
                                 lines.pole_band, math.pi - lines.pole_band))
        fh.write(data.tobytes())


def read_sinogram(path) -> SinogramRecords:
    raw = Path(path).read_bytes()
    if len(raw) < _SINO_HEAD.size:
        raise FormatError(f"{path}: truncated header")
    magic, n_t, n_a, n_b, t0, t1, a0, a1 = _SINO_HEAD.unpack_from(raw)
    if magic != b"MSN1":
        raise FormatError(f"{path}: bad magic {magic!r}")
    count = n_t * n_a * n_b * 5
    if len(raw) != _SINO_HEAD.size + 8 * count:
        raise FormatError(f"{path}: expected {count} values, file size {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_SINO_HEAD.size).reshape(n_b, n_a, n_t, 5)
    rec = data.transpose(2, 1, 0, 3).astype(np.float64)
    return SinogramRecords((t0, t1), (a0, a1), *(rec[..., k] for k in range(5)))
