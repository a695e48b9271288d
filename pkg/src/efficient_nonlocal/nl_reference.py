"""Dense non-local block.

This is the memory-hungry baseline: it materialises the full ``HW x HW``
affinity matrix on purpose. It serves as the forward oracle for the
reordered implementation in :mod:`efficient_nonlocal.enl`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import FeatureMap, ShapeError

__all__ = [
    "SimilarityKind",
    "Normalization",
    "Combine",
    "ModuleWeights",
    "nl_affinity",
    "nl_forward",
    "nl_forward_pos",
    "residual_wrap",
    "nl_module",
]

DEFAULT_INIT_SIGMA = 0.01


class SimilarityKind(str, enum.Enum):
    EMBEDDED_GAUSSIAN = "embedded_gaussian"
    DOT_PRODUCT = "dot_product"


class Normalization(str, enum.Enum):
    NONE = "none"
    ONE_OVER_HW = "one_over_hw"


class Combine(str, enum.Enum):
    ADD = "add"
    MUL = "mul"


@dataclass(frozen=True, eq=False)
class ModuleWeights:
    """The four 1x1-conv projections of one block.

    Shapes: ``w_theta`` and ``w_phi`` are ``C x C_theta``, ``w_g`` is
    ``C x C_g`` and ``w_out`` maps ``C_g`` back to ``C``.
    """

    w_theta: np.ndarray
    w_phi: np.ndarray
    w_g: np.ndarray
    w_out: np.ndarray
    seed: int | None = None
    init_sigma: float | None = None

    def __post_init__(self):
        for name in ("w_theta", "w_phi", "w_g", "w_out"):
            object.__setattr__(self, name, T.as_matrix(getattr(self, name)))
        c = self.w_theta.shape[0]
        if self.w_phi.shape != self.w_theta.shape:
            raise ShapeError(f"w_phi {self.w_phi.shape} must match w_theta {self.w_theta.shape}")
        if self.w_g.shape[0] != c:
            raise ShapeError(f"w_g has {self.w_g.shape[0]} input channels, expected {c}")
        if self.w_out.shape != (self.w_g.shape[1], c):
            raise ShapeError(f"w_out must be {(self.w_g.shape[1], c)}, got {self.w_out.shape}")

    @property
    def channels(self) -> int:
        return self.w_theta.shape[0]

    @property
    def c_theta(self) -> int:
        return self.w_theta.shape[1]

    @property
    def c_g(self) -> int:
        return self.w_g.shape[1]

    @classmethod
    def init(
        cls,
        channels: int,
        c_theta: int | None = None,
        c_g: int | None = None,
        *,
        seed: int = 0,
        sigma: float = DEFAULT_INIT_SIGMA,
        dtype=np.float64,
    ) -> ModuleWeights:
        """I.i.d. ``N(0, sigma^2)`` weights drawn from ``seed``.

        Embedding widths default to ``max(1, channels // 2)``.
        """
        half = max(1, channels // 2)
        c_theta = half if c_theta is None else c_theta
        c_g = half if c_g is None else c_g
        if min(channels, c_theta, c_g) < 1:
            raise ShapeError("channel widths must be >= 1")
        rng = np.random.default_rng(seed)
        return cls(
            rng.normal(0.0, sigma, (channels, c_theta)).astype(dtype),
            rng.normal(0.0, sigma, (channels, c_theta)).astype(dtype),
            rng.normal(0.0, sigma, (channels, c_g)).astype(dtype),
            rng.normal(0.0, sigma, (c_g, channels)).astype(dtype),
            seed=seed,
            init_sigma=sigma,
        )

    def astype(self, dtype) -> ModuleWeights:
        return ModuleWeights(
            self.w_theta.astype(dtype),
            self.w_phi.astype(dtype),
            self.w_g.astype(dtype),
            self.w_out.astype(dtype),
            seed=self.seed,
            init_sigma=self.init_sigma,
        )

    def replace(self, **changes) -> ModuleWeights:
        fields = dict(
            w_theta=self.w_theta,
            w_phi=self.w_phi,
            w_g=self.w_g,
            w_out=self.w_out,
            seed=self.seed,
            init_sigma=self.init_sigma,
        )
        fields.update(changes)
        return ModuleWeights(**fields)


def _check_input(x: FeatureMap, w: ModuleWeights) -> None:
    if x.channels != w.channels:
        raise ShapeError(f"input has {x.channels} channels, weights expect {w.channels}")


def nl_affinity(
    x: FeatureMap,
    w: ModuleWeights,
    kind: SimilarityKind = SimilarityKind.EMBEDDED_GAUSSIAN,
    normalization: Normalization = Normalization.NONE,
) -> np.ndarray:
    """The ``HW x HW`` pairwise affinity.

    Embedded Gaussian gives ``softmax(theta @ phi.T)`` row-wise. The dot
    product variant returns the raw ``theta @ phi.T``, optionally scaled by
    ``1/HW`` (the scale only applies to this variant).
    """
    _check_input(x, w)
    kind = SimilarityKind(kind)
    theta = T.conv1x1(x, w.w_theta).data
    phi = T.conv1x1(x, w.w_phi).data
    logits = T.matmul(theta, phi.T, tag="inner")
    if kind is SimilarityKind.EMBEDDED_GAUSSIAN:
        return T.row_softmax(logits, tag="inner")
    if Normalization(normalization) is Normalization.ONE_OVER_HW:
        return T.scale(logits, 1.0 / x.hw, tag="inner")
    return logits


def nl_forward(
    x: FeatureMap,
    w: ModuleWeights,
    kind: SimilarityKind = SimilarityKind.EMBEDDED_GAUSSIAN,
    normalization: Normalization = Normalization.NONE,
) -> FeatureMap:
    """``y = F @ g`` with ``g = conv1x1(x, w_g)``; output has ``C_g`` channels."""
    f = nl_affinity(x, w, kind, normalization)
    g = T.conv1x1(x, w.w_g).data
    return x.with_data(T.matmul(f, g, tag="term"))


def nl_forward_pos(
    x: FeatureMap,
    w: ModuleWeights,
    kind: SimilarityKind,
    l_dense,
    combine: Combine = Combine.ADD,
    normalization: Normalization = Normalization.NONE,
) -> FeatureMap:
    """``y = (F + L) @ g`` or ``y = (F * L) @ g`` with a dense position matrix.

    No renormalisation happens after ``L`` is combined in.
    """
    l_dense = T.as_matrix(l_dense)
    if l_dense.shape != (x.hw, x.hw):
        raise ShapeError(f"position matrix must be {(x.hw, x.hw)}, got {l_dense.shape}")
    f = nl_affinity(x, w, kind, normalization)
    if Combine(combine) is Combine.ADD:
        f = T.add(f, l_dense, tag="inner")
    else:
        f = T.hadamard(f, l_dense, tag="inner")
    g = T.conv1x1(x, w.w_g).data
    return x.with_data(T.matmul(f, g, tag="term"))


def residual_wrap(x: FeatureMap, y: FeatureMap, w_out) -> FeatureMap:
    """``z = conv1x1(y, w_out) + x``."""
    w_out = T.as_matrix(w_out)
    if (y.height, y.width) != (x.height, x.width):
        raise ShapeError(f"branch is {y.height}x{y.width}, input is {x.height}x{x.width}")
    if w_out.shape[1] != x.channels:
        raise ShapeError(f"w_out produces {w_out.shape[1]} channels, input has {x.channels}")
    branch = T.conv1x1(y, w_out, tag="output")
    return x.with_data(T.add(branch.data, x.data, tag="output"))


def nl_module(
    x: FeatureMap,
    w: ModuleWeights,
    kind: SimilarityKind = SimilarityKind.DOT_PRODUCT,
    l_dense=None,
    combine: Combine = Combine.ADD,
    normalization: Normalization = Normalization.NONE,
) -> FeatureMap:
    """Full dense block with residual, the drop-in oracle for ``enl_module``."""
    if l_dense is None:
        y = nl_forward(x, w, kind, normalization)
    else:
        y = nl_forward_pos(x, w, kind, l_dense, combine, normalization)
    return residual_wrap(x, y, w.w_out)
