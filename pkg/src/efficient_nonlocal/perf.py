"""Flop and memory accounting for the dense and reordered blocks.

Formula sheet (``N = H*W``, one multiply-add = 2 flops):

=============  =========================================  ====================
variant        aggregation flops                          peak intermediate
=============  =========================================  ====================
nl             2*N^2*C_theta + 2*N^2*C_g + 3*N^2          N^2
nl-dot         2*N^2*C_theta + 2*N^2*C_g                  N^2
nl-pos         2*N^2*C_theta + 2*N^2*C_g                  N^2
enl            4*N*C_theta*C_g                            C_theta*C_g
enl-pos        4*N*C_theta*C_g + 4*N*C_l*C_g              max(C_theta, C_l)*C_g
=============  =========================================  ====================

Peak intermediate is counted in elements and multiplied by the element
size. It is the largest single buffer produced between the projections and
the ``N x C_g`` output terms. Flops cover matrix products and the softmax
(3 per entry). Elementwise adds and scales are not counted. The 1x1
projections are reported separately as ``projection_flops`` =
``2*N*C*(2*C_theta + C_g)``.

``verify_counts`` runs the real kernels under :func:`tensor.instrument`
and checks that both numbers match the closed forms exactly.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .dct_pos import FrequencyMask, build_basis, default_mask, dense_l
from .enl import EnlConfig, enl_forward, enl_forward_pos
from .nl_reference import ModuleWeights, SimilarityKind, nl_forward, nl_forward_pos
from .tensor import FeatureMap

__all__ = [
    "VARIANTS",
    "DEFAULT_BUDGET_BYTES",
    "ContractViolation",
    "Shape",
    "PerfReport",
    "count_nl",
    "count_enl",
    "count_variant",
    "verify_counts",
    "run_variant",
    "benchmark",
]

VARIANTS = ("nl", "nl-dot", "nl-pos", "enl", "enl-pos")
DEFAULT_BUDGET_BYTES = 4 * 2**30
AGGREGATION_TAGS = {"inner", "term"}
INTERMEDIATE_TAGS = {"inner"}


class ContractViolation(AssertionError):
    """Analytic and instrumented counts disagree."""


@dataclass(frozen=True)
class Shape:
    h: int
    w: int
    c: int
    c_theta: int
    c_g: int
    c_l: int = 0

    def __post_init__(self):
        if min(self.h, self.w, self.c, self.c_theta, self.c_g) < 1 or self.c_l < 0:
            raise ValueError(f"dimensions must be positive: {self}")

    @property
    def hw(self) -> int:
        return self.h * self.w

    @classmethod
    def make(cls, h, w, c, c_theta=None, c_g=None, mask: FrequencyMask | None = None) -> Shape:
        c_theta_d, c_g_d = EnlConfig(c_theta, c_g).widths(c)
        mask = default_mask(h, w) if mask is None else mask.clamp(h, w)
        return cls(h, w, c, c_theta_d, c_g_d, mask.c_l)

    def as_tuple(self) -> tuple[int, ...]:
        return (self.h, self.w, self.c, self.c_theta, self.c_g, self.c_l)


@dataclass
class PerfReport:
    variant: str
    shape: Shape
    flops: int
    peak_intermediate_bytes: int
    elem_size: int
    projection_flops: int = 0
    wall_time: float | None = None
    samples: list[float] = field(default_factory=list)
    wall_time_is_median: bool = False
    status: str = "ok"
    reason: str | None = None

    def row(self) -> dict:
        s = self.shape
        return {
            "variant": self.variant,
            "H": s.h,
            "W": s.w,
            "C": s.c,
            "C_theta": s.c_theta,
            "C_g": s.c_g,
            "C_l": s.c_l,
            "flops": self.flops,
            "peak_bytes": self.peak_intermediate_bytes,
            "wall_time_s": self.wall_time,
            "status": self.status,
            "n_samples": len(self.samples),
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = asdict(self.shape)
        return d


def _projection_flops(shape: Shape) -> int:
    return 2 * shape.hw * shape.c * (2 * shape.c_theta + shape.c_g)


def count_nl(
    shape: Shape,
    kind: SimilarityKind = SimilarityKind.EMBEDDED_GAUSSIAN,
    elem_size: int = 8,
    variant: str | None = None,
) -> PerfReport:
    n = shape.hw
    flops = 2 * n * n * shape.c_theta + 2 * n * n * shape.c_g
    if SimilarityKind(kind) is SimilarityKind.EMBEDDED_GAUSSIAN:
        flops += 3 * n * n
    if variant is None:
        variant = "nl" if SimilarityKind(kind) is SimilarityKind.EMBEDDED_GAUSSIAN else "nl-dot"
    return PerfReport(
        variant=variant,
        shape=shape,
        flops=flops,
        peak_intermediate_bytes=n * n * elem_size,
        elem_size=elem_size,
        projection_flops=_projection_flops(shape),
    )


def count_enl(shape: Shape, with_position: bool = False, elem_size: int = 8) -> PerfReport:
    n = shape.hw
    flops = 4 * n * shape.c_theta * shape.c_g
    peak = shape.c_theta * shape.c_g
    if with_position:
        flops += 4 * n * shape.c_l * shape.c_g
        peak = max(peak, shape.c_l * shape.c_g)
    return PerfReport(
        variant="enl-pos" if with_position else "enl",
        shape=shape,
        flops=flops,
        peak_intermediate_bytes=peak * elem_size,
        elem_size=elem_size,
        projection_flops=_projection_flops(shape),
    )


def count_variant(variant: str, shape: Shape, elem_size: int = 8) -> PerfReport:
    if variant == "nl":
        return count_nl(shape, SimilarityKind.EMBEDDED_GAUSSIAN, elem_size)
    if variant in ("nl-dot", "nl-pos"):
        return count_nl(shape, SimilarityKind.DOT_PRODUCT, elem_size, variant=variant)
    if variant in ("enl", "enl-pos"):
        return count_enl(shape, variant == "enl-pos", elem_size)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def _inputs(shape: Shape, mask: FrequencyMask | None, seed: int, dtype):
    rng = np.random.default_rng(seed)
    x = FeatureMap(shape.h, shape.w, rng.standard_normal((shape.hw, shape.c)).astype(dtype))
    w = ModuleWeights.init(shape.c, shape.c_theta, shape.c_g, seed=seed + 1, sigma=1.0, dtype=dtype)
    basis = build_basis(shape.h, shape.w, None if mask is None else mask.clamp(shape.h, shape.w))
    if basis.c_l != shape.c_l:
        raise ValueError(f"mask gives C_l={basis.c_l} but shape says {shape.c_l}")
    return x, w, basis.astype(dtype)


def run_variant(variant: str, x: FeatureMap, w: ModuleWeights, basis, l_dense=None) -> FeatureMap:
    """Run the aggregation ``y`` of one variant (no residual)."""
    if variant == "nl":
        return nl_forward(x, w, SimilarityKind.EMBEDDED_GAUSSIAN)
    if variant == "nl-dot":
        return nl_forward(x, w, SimilarityKind.DOT_PRODUCT)
    if variant == "nl-pos":
        if l_dense is None:
            l_dense = dense_l(basis)
        return nl_forward_pos(x, w, SimilarityKind.DOT_PRODUCT, l_dense)
    if variant == "enl":
        return enl_forward(x, w, EnlConfig(w.c_theta, w.c_g))
    if variant == "enl-pos":
        return enl_forward_pos(x, w, EnlConfig(w.c_theta, w.c_g, use_position=True), basis)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class CountCheck:
    variant: str
    shape: Shape
    analytic_flops: int
    instrumented_flops: int
    analytic_peak_bytes: int
    instrumented_peak_bytes: int

    @property
    def ok(self) -> bool:
        return (
            self.analytic_flops == self.instrumented_flops
            and self.analytic_peak_bytes == self.instrumented_peak_bytes
        )


def verify_counts(
    shape: Shape,
    mask: FrequencyMask | None = None,
    variants=VARIANTS,
    seed: int = 0,
) -> list[CountCheck]:
    """Instrumented run of each variant; raises on any count mismatch."""
    if shape.hw > 4096:
        raise ValueError(f"HW={shape.hw} too large for an instrumented run (limit 4096)")
    x, w, basis = _inputs(shape, mask, seed, np.float64)
    checks = []
    for variant in variants:
        l_dense = dense_l(basis) if variant == "nl-pos" else None
        with T.instrument() as inst:
            run_variant(variant, x, w, basis, l_dense)
        expected = count_variant(variant, shape, elem_size=8)
        check = CountCheck(
            variant,
            shape,
            expected.flops,
            inst.flops(AGGREGATION_TAGS),
            expected.peak_intermediate_bytes,
            inst.peak_bytes(INTERMEDIATE_TAGS),
        )
        if not check.ok:
            raise ContractViolation(
                f"{variant} at {shape.as_tuple()}: flops analytic={check.analytic_flops} "
                f"instrumented={check.instrumented_flops}; peak bytes analytic="
                f"{check.analytic_peak_bytes} instrumented={check.instrumented_peak_bytes}"
            )
        checks.append(check)
    return checks


def benchmark(
    variants,
    shapes,
    repeats: int = 5,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    dtype=np.float32,
    seed: int = 0,
    masks: dict | None = None,
) -> list[PerfReport]:
    """Median wall time of each variant at each shape, in performance mode.

    Dense variants whose ``HW x HW`` affinity would exceed ``budget_bytes``
    are not run; their report has ``status="refused"``. With
    ``repeats < 5`` the samples are kept but the time is not flagged as a
    median.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    elem = np.dtype(dtype).itemsize
    reports = []
    for shape in shapes:
        mask = (masks or {}).get(shape)
        inputs = None
        for variant in variants:
            report = count_variant(variant, shape, elem_size=elem)
            if variant.startswith("nl"):
                needed = shape.hw * shape.hw * elem
                if needed > budget_bytes:
                    report.status = "refused"
                    report.reason = (
                        f"HW x HW affinity needs {needed} bytes, budget is {budget_bytes}"
                    )
                    reports.append(report)
                    continue
            if inputs is None:
                inputs = _inputs(shape, mask, seed, dtype)
            x, w, basis = inputs
            with T.performance_mode():
                l_dense = dense_l(basis) if variant == "nl-pos" else None
                run_variant(variant, x, w, basis, l_dense)  # warm-up
                samples = []
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    run_variant(variant, x, w, basis, l_dense)
                    samples.append(time.perf_counter() - t0)
            report.samples = samples
            report.wall_time = statistics.median(samples)
            report.wall_time_is_median = len(samples) >= 5
            reports.append(report)
    return reports
