"""Efficient non-local block.

For the dot-product affinity ``F = theta @ phi.T`` the aggregation
``F @ g`` is reassociated as ``theta @ (phi.T @ g)``. The only inner buffer
is then ``C_theta x C_g`` rather than ``HW x HW``. With position encoding
the low-rank term ``E_hat @ (E_hat.T @ g)`` is added in the same factored
way.

Shapes in row-major form, with ``N = H*W``::

    theta, phi : N x C_theta      g : N x C_g
    inner      : C_theta x C_g    y : N x C_g      z : N x C
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dct_pos import DctBasis, position_term
from .nl_reference import ModuleWeights, Normalization, residual_wrap
from .tensor import FeatureMap, ShapeError

__all__ = [
    "EnlConfig",
    "EnlGradients",
    "enl_forward",
    "enl_forward_pos",
    "enl_module",
    "enl_backward",
]


@dataclass(frozen=True)
class EnlConfig:
    c_theta: int | None = None
    c_g: int | None = None
    use_position: bool = False
    normalization: Normalization = Normalization.NONE

    def __post_init__(self):
        for name in ("c_theta", "c_g"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        object.__setattr__(self, "normalization", Normalization(self.normalization))

    def widths(self, channels: int) -> tuple[int, int]:
        half = max(1, channels // 2)
        return (self.c_theta or half, self.c_g or half)

    def init_weights(self, channels: int, *, seed: int = 0, **kwargs) -> ModuleWeights:
        c_theta, c_g = self.widths(channels)
        return ModuleWeights.init(channels, c_theta, c_g, seed=seed, **kwargs)


@dataclass(frozen=True, eq=False)
class EnlGradients:
    d_x: np.ndarray
    d_w_theta: np.ndarray
    d_w_phi: np.ndarray
    d_w_g: np.ndarray
    d_w_out: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {
            "x": self.d_x,
            "w_theta": self.d_w_theta,
            "w_phi": self.d_w_phi,
            "w_g": self.d_w_g,
            "w_out": self.d_w_out,
        }


def _check(x: FeatureMap, w: ModuleWeights, cfg: EnlConfig) -> None:
    if x.channels != w.channels:
        raise ShapeError(f"input has {x.channels} channels, weights expect {w.channels}")
    c_theta, c_g = cfg.widths(w.channels)
    if cfg.c_theta is not None and c_theta != w.c_theta:
        raise ShapeError(f"config c_theta={c_theta} but weights have {w.c_theta}")
    if cfg.c_g is not None and c_g != w.c_g:
        raise ShapeError(f"config c_g={c_g} but weights have {w.c_g}")


def _check_basis(x: FeatureMap, basis: DctBasis) -> None:
    if (basis.height, basis.width) != (x.height, x.width):
        raise ShapeError(
            f"basis built for {basis.height}x{basis.width}, feature map is {x.height}x{x.width}"
        )


def _appearance(x: FeatureMap, w: ModuleWeights, cfg: EnlConfig):
    theta = T.conv1x1(x, w.w_theta).data
    phi = T.conv1x1(x, w.w_phi).data
    g = T.conv1x1(x, w.w_g).data
    inner = T.matmul(phi.T, g, tag="inner")
    if cfg.normalization is Normalization.ONE_OVER_HW:
        inner = T.scale(inner, 1.0 / x.hw, tag="inner")
    return theta, phi, g, inner


def enl_forward(x: FeatureMap, w: ModuleWeights, cfg: EnlConfig = EnlConfig()) -> FeatureMap:
    """``y = theta @ (phi.T @ g)``, the reordered dot-product aggregation."""
    _check(x, w, cfg)
    if cfg.use_position:
        raise ValueError("enl_forward does not take a position term; use enl_forward_pos")
    theta, _, _, inner = _appearance(x, w, cfg)
    return x.with_data(T.matmul(theta, inner, tag="term"))


def enl_forward_pos(
    x: FeatureMap, w: ModuleWeights, cfg: EnlConfig, basis: DctBasis
) -> FeatureMap:
    """``y = theta @ (phi.T @ g) + E_hat @ (E_hat.T @ g)``."""
    _check(x, w, cfg)
    _check_basis(x, basis)
    theta, _, g, inner = _appearance(x, w, cfg)
    appearance = T.matmul(theta, inner, tag="term")
    position = position_term(basis, g)
    return x.with_data(T.add(appearance, position, tag="term"))


def enl_module(
    x: FeatureMap,
    w: ModuleWeights,
    cfg: EnlConfig = EnlConfig(),
    basis: DctBasis | None = None,
) -> FeatureMap:
    """Block output ``z = conv1x1(y, w_out) + x``.

    The position term is used when ``cfg.use_position`` is set or a basis is
    passed.
    """
    if cfg.use_position or basis is not None:
        if basis is None:
            raise ValueError("cfg.use_position is set but no basis was given")
        y = enl_forward_pos(x, w, cfg, basis)
    else:
        y = enl_forward(x, w, cfg)
    return residual_wrap(x, y, w.w_out)


def enl_backward(
    x: FeatureMap,
    w: ModuleWeights,
    cfg: EnlConfig,
    basis: DctBasis | None,
    upstream,
) -> EnlGradients:
    """Gradients of ``<upstream, enl_module(x, w, cfg, basis)>``.

    With ``s`` the optional ``1/HW`` scale, ``M = s * phi.T @ g`` and
    ``dy = upstream @ w_out.T``::

        d_theta = dy @ M.T
        dM      = s * theta.T @ dy
        d_phi   = g @ dM.T
        d_g     = phi @ dM + E_hat @ (E_hat.T @ dy)

    Each projection gradient is then pulled back through its 1x1 conv. The
    basis is a constant.
    """
    _check(x, w, cfg)
    upstream = T.as_matrix(upstream)
    if upstream.shape != x.data.shape:
        raise ShapeError(f"upstream is {upstream.shape}, block output is {x.data.shape}")
    use_pos = cfg.use_position or basis is not None
    if use_pos:
        if basis is None:
            raise ValueError("cfg.use_position is set but no basis was given")
        _check_basis(x, basis)

    theta, phi, g, inner = _appearance(x, w, cfg)
    y = T.matmul(theta, inner, tag="term")
    if use_pos:
        y = T.add(y, position_term(basis, g), tag="term")

    xd = x.data
    s = 1.0 / x.hw if cfg.normalization is Normalization.ONE_OVER_HW else 1.0
    d_w_out = T.matmul(y.T, upstream, tag="grad")
    dy = T.matmul(upstream, w.w_out.T, tag="grad")
    d_theta = T.matmul(dy, inner.T, tag="grad")
    d_inner = T.matmul(theta.T, dy, tag="grad")
    if s != 1.0:
        d_inner = T.scale(d_inner, s, tag="grad")
    d_phi = T.matmul(g, d_inner.T, tag="grad")
    d_g = T.matmul(phi, d_inner, tag="grad")
    if use_pos:
        d_g = T.add(d_g, position_term(basis, dy), tag="grad")

    d_x = upstream
    for dproj, wproj in ((d_theta, w.w_theta), (d_phi, w.w_phi), (d_g, w.w_g)):
        d_x = T.add(d_x, T.matmul(dproj, wproj.T, tag="grad"), tag="grad")

    return EnlGradients(
        d_x=d_x,
        d_w_theta=T.matmul(xd.T, d_theta, tag="grad"),
        d_w_phi=T.matmul(xd.T, d_phi, tag="grad"),
        d_w_g=T.matmul(xd.T, d_g, tag="grad"),
        d_w_out=d_w_out,
    )
