"""Orthonormal DCT-II / DCT-III transforms, per axis and 2-D, over (c, h, w) arrays.

The forward kernel along a length-L axis is

    S_k = sqrt(2/L) * c_k * sum_l z_l * cos(pi * k * (2l + 1) / (2L)),

with c_0 = 1/sqrt(2) and c_k = 1 otherwise; the inverse is its transpose.
The 2-D transform is the same kernel applied along width then height, which
gives the separable form

    S_{u,v} = 2/sqrt(hw) * m(u) m(v) * sum_{i,j} z_{i,j}
              * cos((2i+1) u pi / 2h) * cos((2j+1) v pi / 2w).

Transforms are realized as multiplications with precomputed orthonormal
basis matrices, one per axis length. That keeps roundtrips and Parseval
identities at ~1e-15 for the latent sizes this package targets (<= 256 per
axis) without FFT bookkeeping. The basis cache is append-only and safe for
concurrent lookup.
"""

from __future__ import annotations

import numpy as np

from .tensor_io import validate_feature

AXIS_WIDTH = "width"
AXIS_HEIGHT = "height"

_BASIS_CACHE: dict[int, np.ndarray] = {}


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis matrix B with S = B @ z for a length-n line."""
    if n < 1:
        raise ValueError(f"basis length must be >= 1, got {n}")
    basis = _BASIS_CACHE.get(n)
    if basis is None:
        k = np.arange(n).reshape(-1, 1)
        l = np.arange(n).reshape(1, -1)
        basis = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * l + 1) / (2 * n))
        basis[0, :] /= np.sqrt(2.0)
        basis.flags.writeable = False
        _BASIS_CACHE[n] = basis
    return basis


def dct2d(z) -> np.ndarray:
    """Per-channel orthonormal 2-D DCT-II of a (c, h, w) feature."""
    arr = np.ascontiguousarray(validate_feature(z))
    _, h, w = arr.shape
    return np.matmul(np.matmul(dct_basis(h), arr), dct_basis(w).T)


def idct2d(spectrum) -> np.ndarray:
    """Exact inverse of :func:`dct2d`."""
    arr = np.ascontiguousarray(validate_feature(spectrum, "spectrum"))
    _, h, w = arr.shape
    return np.matmul(np.matmul(dct_basis(h).T, arr), dct_basis(w))


def dct1d_axis(z, axis: str) -> np.ndarray:
    """Orthonormal DCT-II along one spatial axis for every (channel, line)."""
    # Layout normalized so bit-equal values give bit-equal coefficients
    # regardless of the caller's array strides (BLAS kernels are
    # layout-dependent in their summation order).
    arr = np.ascontiguousarray(validate_feature(z))
    if axis == AXIS_WIDTH:
        return np.matmul(arr, dct_basis(arr.shape[2]).T)
    if axis == AXIS_HEIGHT:
        return np.matmul(dct_basis(arr.shape[1]), arr)
    raise ValueError(f"axis must be {AXIS_WIDTH!r} or {AXIS_HEIGHT!r}, got {axis!r}")


def idct1d_axis(spectrum, axis: str) -> np.ndarray:
    """Exact inverse of :func:`dct1d_axis` along the same axis."""
    arr = np.ascontiguousarray(validate_feature(spectrum, "spectrum"))
    if axis == AXIS_WIDTH:
        return np.matmul(arr, dct_basis(arr.shape[2]))
    if axis == AXIS_HEIGHT:
        return np.matmul(dct_basis(arr.shape[1]).T, arr)
    raise ValueError(f"axis must be {AXIS_WIDTH!r} or {AXIS_HEIGHT!r}, got {axis!r}")
