"""Low-rank relative position encoding built from 2-D DCT-II columns.

The position matrix is ``L = E_hat @ E_hat.T``. Each column of ``E_hat``
is one orthonormal 2-D DCT-II basis image with frequency pair ``(u, v)``
taken from a low-frequency mask. Columns are scaled by ``|d|`` when the
mask carries weights. ``E_hat`` is evaluated directly from the cosine
closed form, so the full ``HW x HW`` transform is never built.

Column order is ``k = u * w_freqs + v``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import FeatureMap, ShapeError

__all__ = [
    "FrequencyMask",
    "DctBasis",
    "SizeError",
    "DENSE_LIMIT",
    "default_mask",
    "dct_matrix_1d",
    "build_basis",
    "dense_l",
    "position_term",
    "extract_filter",
]

DEFAULT_FREQS = 9
DENSE_LIMIT = 4096


class SizeError(ValueError):
    """A dense oracle was asked for a matrix larger than its guard."""


@dataclass(frozen=True)
class FrequencyMask:
    """Rectangle of retained frequencies ``0 <= u < h_freqs, 0 <= v < w_freqs``.

    ``weights`` is ``None`` for unit weights, otherwise a row-major tuple of
    ``h_freqs * w_freqs`` values.
    """

    h_freqs: int = DEFAULT_FREQS
    w_freqs: int = DEFAULT_FREQS
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.h_freqs < 1 or self.w_freqs < 1:
            raise ValueError(f"mask must keep at least one frequency, got {self.h_freqs}x{self.w_freqs}")
        if self.weights is not None:
            weights = tuple(float(v) for v in self.weights)
            if len(weights) != self.h_freqs * self.w_freqs:
                raise ValueError(
                    f"{len(weights)} weights for a {self.h_freqs}x{self.w_freqs} mask"
                )
            object.__setattr__(self, "weights", weights)

    @property
    def c_l(self) -> int:
        return self.h_freqs * self.w_freqs

    def weight_grid(self) -> np.ndarray:
        if self.weights is None:
            return np.ones((self.h_freqs, self.w_freqs))
        return np.asarray(self.weights).reshape(self.h_freqs, self.w_freqs)

    def clamp(self, height: int, width: int) -> FrequencyMask:
        """Restrict to frequencies that exist on an ``height x width`` grid.

        Weights of the surviving ``(u, v)`` pairs are kept in place.
        """
        h, w = min(self.h_freqs, height), min(self.w_freqs, width)
        if (h, w) == (self.h_freqs, self.w_freqs):
            return self
        weights = None
        if self.weights is not None:
            weights = tuple(self.weight_grid()[:h, :w].ravel())
        return FrequencyMask(h, w, weights)


def default_mask(height: int, width: int) -> FrequencyMask:
    """The 9x9 lowest-frequency unit mask, shrunk to fit small maps."""
    return FrequencyMask(min(DEFAULT_FREQS, height), min(DEFAULT_FREQS, width))


@dataclass(frozen=True, eq=False)
class DctBasis:
    height: int
    width: int
    mask: FrequencyMask
    e_hat: np.ndarray
    requested: FrequencyMask | None = None

    @property
    def hw(self) -> int:
        return self.height * self.width

    @property
    def c_l(self) -> int:
        return self.e_hat.shape[1]

    @property
    def clamped(self) -> bool:
        return self.requested is not None and self.requested != self.mask

    def astype(self, dtype) -> DctBasis:
        return DctBasis(self.height, self.width, self.mask, self.e_hat.astype(dtype), self.requested)


def dct_matrix_1d(n: int, freqs: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II basis vectors as columns: ``out[x, u]``."""
    freqs = n if freqs is None else freqs
    x = np.arange(n)[:, None]
    u = np.arange(freqs)[None, :]
    c = np.where(u == 0, np.sqrt(1.0 / n), np.sqrt(2.0 / n))
    return c * np.cos(np.pi * (2 * x + 1) * u / (2 * n))


@functools.lru_cache(maxsize=64)
def _cached_basis(height: int, width: int, mask: FrequencyMask) -> DctBasis:
    effective = mask.clamp(height, width)
    if effective != mask:
        warnings.warn(
            f"frequency mask {mask.h_freqs}x{mask.w_freqs} clamped to "
            f"{effective.h_freqs}x{effective.w_freqs} for a {height}x{width} map",
            stacklevel=3,
        )
    rows = dct_matrix_1d(height, effective.h_freqs)  # (H, u)
    cols = dct_matrix_1d(width, effective.w_freqs)  # (W, v)
    e_hat = (rows[:, None, :, None] * cols[None, :, None, :]).reshape(height * width, effective.c_l)
    if effective.weights is not None:
        e_hat = e_hat * np.abs(effective.weight_grid().ravel())[None, :]
    e_hat.setflags(write=False)
    return DctBasis(height, width, effective, e_hat, requested=mask)


def build_basis(height: int, width: int, mask: FrequencyMask | None = None) -> DctBasis:
    """Selected 2-D DCT columns for an ``height x width`` grid.

    A mask larger than the grid is clamped and a ``UserWarning`` is issued.
    Bases are cached per ``(height, width, mask)``.
    """
    if height < 1 or width < 1:
        raise ShapeError(f"grid must be at least 1x1, got {height}x{width}")
    if mask is None:
        mask = default_mask(height, width)
    return _cached_basis(int(height), int(width), mask)


def dense_l(basis: DctBasis) -> np.ndarray:
    """Materialise ``L = E_hat @ E_hat.T`` (oracle use only)."""
    if basis.hw > DENSE_LIMIT:
        raise SizeError(f"dense L would be {basis.hw}x{basis.hw}; limit is HW <= {DENSE_LIMIT}")
    return T.matmul(basis.e_hat, basis.e_hat.T, tag="inner")


def position_term(basis: DctBasis, g) -> np.ndarray:
    """``E_hat @ (E_hat.T @ g)``, never forming ``L``."""
    g = T.as_matrix(g)
    if g.shape[0] != basis.hw:
        raise ShapeError(f"g has {g.shape[0]} rows, basis is for HW = {basis.hw}")
    e_hat = basis.e_hat.astype(g.dtype, copy=False)
    coeffs = T.matmul(e_hat.T, g, tag="inner")
    return T.matmul(e_hat, coeffs, tag="term")


def extract_filter(basis: DctBasis, center: int | tuple[int, int]) -> FeatureMap:
    """Spatial kernel the position term applies around pixel ``center``.

    This is row ``center`` of ``L`` laid out on the ``H x W`` grid. It is
    computed as ``E_hat @ E_hat[center]``, so no dense matrix is needed.
    """
    if isinstance(center, tuple):
        h, w = center
        if not (0 <= h < basis.height and 0 <= w < basis.width):
            raise IndexError(f"center {center} outside {basis.height}x{basis.width}")
        center = h * basis.width + w
    if not 0 <= center < basis.hw:
        raise IndexError(f"center index {center} outside [0, {basis.hw})")
    row = T.matmul(basis.e_hat, basis.e_hat[center][:, None])
    return FeatureMap(basis.height, basis.width, row)
