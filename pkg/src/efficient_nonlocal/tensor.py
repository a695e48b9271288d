"""Dense linear-algebra substrate shared by every module.

Matrices are plain 2-D numpy arrays. Feature maps carry their spatial
shape next to a flattened ``(H*W, C)`` view, with pixel ``(h, w)`` stored at
row ``h * W + w``.

Two execution modes exist. The default *oracle* mode runs ``matmul`` with a
fixed left-to-right accumulation order so results are reproducible bit for
bit across machines. *Performance* mode (see :func:`performance_mode`)
hands products to BLAS, which may reorder and parallelise the summation.

Every op reports its result buffer and flop cost to the active
:class:`Instrument`, if any. The perf module relies on this to check its
closed-form counts against what the kernels actually do.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

__all__ = [
    "ShapeError",
    "FeatureMap",
    "Instrument",
    "Allocation",
    "instrument",
    "performance_mode",
    "is_performance_mode",
    "as_matrix",
    "matmul",
    "row_softmax",
    "add",
    "hadamard",
    "scale",
    "conv1x1",
    "bilinear_upsample2x",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


# ---------------------------------------------------------------------------
# instrumentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Allocation:
    op: str
    shape: tuple[int, ...]
    nbytes: int
    tag: str | None
    flops: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass
class Instrument:
    """Records every result buffer and flop produced by the ops below.

    Tags let callers separate the stages of a block (``"projection"``,
    ``"inner"``, ``"term"``, ...) so totals can be taken over a subset.
    """

    records: list[Allocation] = field(default_factory=list)

    def flops(self, tags: set[str] | None = None) -> int:
        return sum(r.flops for r in self.records if tags is None or r.tag in tags)

    def peak_bytes(self, tags: set[str] | None = None) -> int:
        sizes = [r.nbytes for r in self.records if tags is None or r.tag in tags]
        return max(sizes, default=0)

    def largest(self) -> Allocation | None:
        return max(self.records, key=lambda r: r.size, default=None)


_ACTIVE: contextvars.ContextVar[Instrument | None] = contextvars.ContextVar(
    "efficient_nonlocal_instrument", default=None
)
_PERF: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "efficient_nonlocal_perf_mode", default=False
)


@contextlib.contextmanager
def instrument() -> Iterator[Instrument]:
    """Collect allocations and flops of all ops run inside the block."""
    inst = Instrument()
    token = _ACTIVE.set(inst)
    try:
        yield inst
    finally:
        _ACTIVE.reset(token)


@contextlib.contextmanager
def performance_mode(enabled: bool = True) -> Iterator[None]:
    """Let ``matmul`` use BLAS (blocked, possibly multi-threaded)."""
    token = _PERF.set(enabled)
    try:
        yield
    finally:
        _PERF.reset(token)


def is_performance_mode() -> bool:
    return _PERF.get()


def _record(op: str, out: np.ndarray, tag: str | None, flops: int) -> None:
    inst = _ACTIVE.get()
    if inst is not None:
        inst.records.append(Allocation(op, tuple(out.shape), int(out.nbytes), tag, int(flops)))


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


def as_matrix(a, dtype=None) -> np.ndarray:
    m = np.asarray(a, dtype=dtype if dtype is not None else None)
    if m.dtype.kind not in "fiu":
        raise ShapeError(f"expected a real matrix, got dtype {m.dtype}")
    if m.dtype.kind in "iu":
        m = m.astype(np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """An ``H x W x C`` activation stored as its ``(H*W, C)`` matrix view."""

    height: int
    width: int
    data: np.ndarray

    def __post_init__(self):
        data = as_matrix(self.data)
        if self.height < 1 or self.width < 1:
            raise ShapeError(f"spatial size must be positive, got {self.height}x{self.width}")
        if data.shape[0] != self.height * self.width:
            raise ShapeError(
                f"data has {data.shape[0]} rows, expected H*W = {self.height * self.width}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def hw(self) -> int:
        return self.height * self.width

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @classmethod
    def from_image(cls, image) -> FeatureMap:
        img = np.asarray(image)
        if img.ndim == 2:
            img = img[:, :, None]
        if img.ndim != 3:
            raise ShapeError(f"expected H x W x C array, got shape {img.shape}")
        h, w, c = img.shape
        return cls(h, w, img.reshape(h * w, c))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int, dtype=np.float64) -> FeatureMap:
        return cls(height, width, np.zeros((height * width, channels), dtype=dtype))

    def image(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width, self.channels)

    def with_data(self, data: np.ndarray) -> FeatureMap:
        return FeatureMap(self.height, self.width, data)

    def astype(self, dtype) -> FeatureMap:
        return FeatureMap(self.height, self.width, self.data.astype(dtype))

    def permute_pixels(self, perm) -> FeatureMap:
        return FeatureMap(self.height, self.width, self.data[np.asarray(perm)])


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------


def matmul(a, b, *, tag: str | None = None) -> np.ndarray:
    """Matrix product ``a @ b``.

    In oracle mode the reduction index runs left to right and each output
    element is accumulated as ``((a0*b0 + a1*b1) + a2*b2) + ...``. Counted
    as ``2*n*k*m`` flops.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    n, k = a.shape
    m = b.shape[1]
    dtype = np.result_type(a, b)
    if _PERF.get():
        out = np.matmul(a, b)
    else:
        out = np.zeros((n, m), dtype=dtype)
        for t in range(k):
            out += a[:, t, None] * b[None, t, :]
    _record("matmul", out, tag, 2 * n * k * m)
    return out


def row_softmax(m, *, tag: str | None = None) -> np.ndarray:
    """Softmax along each row, max-shifted. Counted as 3 flops per entry."""
    m = as_matrix(m)
    if m.size == 0:
        raise ShapeError("row_softmax of an empty matrix")
    out = m - m.max(axis=1, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)
    _record("row_softmax", out, tag, 3 * m.size)
    return out


def _check_same(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: {a.shape} vs {b.shape}")


# Elementwise ops are recorded as allocations but carry no flop cost: the
# flop convention only counts products and the softmax.


def add(a, b, *, tag: str | None = None) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same(a, b, "add")
    out = a + b
    _record("add", out, tag, 0)
    return out


def hadamard(a, b, *, tag: str | None = None) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    _check_same(a, b, "hadamard")
    out = a * b
    _record("hadamard", out, tag, 0)
    return out


def scale(a, s: float, *, tag: str | None = None) -> np.ndarray:
    a = as_matrix(a)
    out = a * a.dtype.type(s)
    _record("scale", out, tag, 0)
    return out


def conv1x1(x: FeatureMap, w, *, tag: str | None = "projection") -> FeatureMap:
    """Per-pixel linear map ``C_in -> C_out`` (no bias)."""
    w = as_matrix(w)
    if w.shape[0] != x.channels:
        raise ShapeError(f"conv1x1: input has {x.channels} channels, weight expects {w.shape[0]}")
    return x.with_data(matmul(x.data, w, tag=tag))


def _upsample_axis(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centres: source coordinate of output index o is (o + 0.5) / 2 - 0.5
    src = (np.arange(2 * n) + 0.5) / 2.0 - 0.5
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_upsample2x(x: FeatureMap, *, tag: str | None = "resample") -> FeatureMap:
    """Double both spatial dimensions (align_corners=False convention)."""
    img = x.image()
    h0, h1, fh = _upsample_axis(x.height)
    w0, w1, fw = _upsample_axis(x.width)
    fh = fh.astype(img.dtype)[:, None, None]
    fw = fw.astype(img.dtype)[None, :, None]
    rows = img[h0] * (1 - fh) + img[h1] * fh
    out = rows[:, w0] * (1 - fw) + rows[:, w1] * fw
    result = FeatureMap(2 * x.height, 2 * x.width, out.reshape(-1, x.channels))
    _record("bilinear_upsample2x", result.data, tag, 0)
    return result
