"""Forward-only coarse-to-fine top-down stream with one ENL per level.

Level ``k`` has spatial size ``base / 2**k``; index 0 is the finest. Levels
are processed coarse to fine::

    merged_top = lateral_top
    merged_k   = lateral_k + upsample2x(out_{k+1})
    out_k      = enl_module(merged_k)

The block runs on the merged map, before its output is upsampled into the
next finer level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dct_pos import build_basis, dense_l
from .enl import EnlConfig, enl_module
from .nl_reference import DEFAULT_INIT_SIGMA, ModuleWeights, SimilarityKind, nl_module
from .perf import PerfReport, Shape, count_enl
from .tensor import FeatureMap, ShapeError, add, bilinear_upsample2x

__all__ = ["PyramidConfig", "LevelTrace", "PyramidTrace", "synth_laterals", "pyramid_forward"]


@dataclass(frozen=True)
class PyramidConfig:
    base_height: int = 32
    base_width: int = 32
    levels: int = 3
    channels: int = 256
    seed: int = 0
    enl: EnlConfig = field(default_factory=EnlConfig)
    use_position: bool = True
    init_sigma: float = DEFAULT_INIT_SIGMA

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        step = 2 ** (self.levels - 1)
        if self.base_height % step or self.base_width % step:
            raise ShapeError(
                f"base {self.base_height}x{self.base_width} is not divisible by 2^{self.levels - 1}"
            )

    def level_size(self, k: int) -> tuple[int, int]:
        return self.base_height >> k, self.base_width >> k

    def sizes_coarse_to_fine(self) -> list[tuple[int, int]]:
        return [self.level_size(k) for k in reversed(range(self.levels))]

    def level_weights(self) -> list[ModuleWeights]:
        """Per-level block weights, coarse to fine."""
        seeds = np.random.SeedSequence(self.seed).spawn(self.levels + 1)[1:]
        return [
            self.enl.init_weights(
                self.channels,
                seed=int(s.generate_state(1)[0]),
                sigma=self.init_sigma,
            )
            for s in seeds
        ]


@dataclass(frozen=True, eq=False)
class LevelTrace:
    level: int
    merged: FeatureMap
    output: FeatureMap
    perf: PerfReport

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.output.height, self.output.width, self.output.channels)


@dataclass(frozen=True, eq=False)
class PyramidTrace:
    levels: list[LevelTrace]

    @property
    def outputs(self) -> list[FeatureMap]:
        return [lv.output for lv in self.levels]

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for lv in self.levels:
            h.update(np.ascontiguousarray(lv.output.data, dtype="<f8").tobytes())
        return h.hexdigest()


def synth_laterals(cfg: PyramidConfig) -> list[FeatureMap]:
    """Seeded standard-normal lateral maps, coarse to fine."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    return [
        FeatureMap(h, w, rng.standard_normal((h * w, cfg.channels)))
        for h, w in cfg.sizes_coarse_to_fine()
    ]


def pyramid_forward(
    laterals: list[FeatureMap],
    cfg: PyramidConfig,
    weights: list[ModuleWeights] | None = None,
    reference: bool = False,
) -> PyramidTrace:
    """Run the top-down stream.

    ``weights`` overrides the seeded per-level weights (coarse to fine).
    With ``reference=True`` every block is replaced by the dense
    dot-product module with an explicit ``L``.
    """
    sizes = cfg.sizes_coarse_to_fine()
    if len(laterals) != cfg.levels:
        raise ShapeError(f"expected {cfg.levels} laterals, got {len(laterals)}")
    for i, (lat, (h, w)) in enumerate(zip(laterals, sizes)):
        k = cfg.levels - 1 - i
        if (lat.height, lat.width, lat.channels) != (h, w, cfg.channels):
            raise ShapeError(
                f"level {k}: lateral is {lat.height}x{lat.width}x{lat.channels}, "
                f"expected {h}x{w}x{cfg.channels}"
            )
    if weights is None:
        weights = cfg.level_weights()
    if len(weights) != cfg.levels:
        raise ShapeError(f"expected {cfg.levels} weight sets, got {len(weights)}")

    enl_cfg = cfg.enl
    traces = []
    prev = None
    for i, (lat, wk) in enumerate(zip(laterals, weights)):
        k = cfg.levels - 1 - i
        merged = lat if prev is None else lat.with_data(add(lat.data, bilinear_upsample2x(prev).data))
        basis = build_basis(lat.height, lat.width) if cfg.use_position else None
        if reference:
            l_dense = dense_l(basis) if basis is not None else None
            out = nl_module(
                merged,
                wk,
                SimilarityKind.DOT_PRODUCT,
                l_dense,
                normalization=enl_cfg.normalization,
            )
        else:
            out = enl_module(merged, wk, enl_cfg, basis)
        shape = Shape(
            lat.height, lat.width, cfg.channels, wk.c_theta, wk.c_g, basis.c_l if basis else 0
        )
        traces.append(
            LevelTrace(k, merged, out, count_enl(shape, with_position=basis is not None))
        )
        prev = out
    return PyramidTrace(traces)
