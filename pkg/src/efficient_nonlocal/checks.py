"""Oracle suite behind ``enl check``.

Each check returns a :class:`CheckResult` holding the worst error seen and
the tolerance it was held to.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .dct_pos import FrequencyMask, build_basis, dense_l
from .enl import EnlConfig, enl_backward, enl_forward, enl_forward_pos
from .nl_reference import ModuleWeights, SimilarityKind, nl_forward, nl_forward_pos
from .oracles import block_loss, brute_force_nl, finite_difference_gradients, relative_error
from .perf import Shape, count_enl, count_nl, verify_counts
from .tensor import FeatureMap, instrument

__all__ = ["CheckResult", "random_instance", "ALL_CHECKS", "run_checks"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    cases: int
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: worst={self.value:.3e} tol={self.tolerance:.1e} "
            f"cases={self.cases} ({self.seconds:.2f}s){' ' + self.detail if self.detail else ''}"
        )

    def to_dict(self) -> dict:
        return asdict(self)


def random_instance(
    seed: int,
    max_hw: int = 8,
    max_c: int = 8,
    dtype=np.float64,
    hw: tuple[int, int] | None = None,
    widths: tuple[int, int, int] | None = None,
):
    """Unit-scale input and weights with ``N(0, 1/C)`` entries."""
    rng = np.random.default_rng(seed)
    h, w = hw if hw is not None else tuple(int(v) for v in rng.integers(1, max_hw + 1, size=2))
    if widths is None:
        c, c_theta, c_g = (int(v) for v in rng.integers(1, max_c + 1, size=3))
    else:
        c, c_theta, c_g = widths
    x = FeatureMap(h, w, rng.standard_normal((h * w, c)).astype(dtype))
    weights = ModuleWeights.init(
        c, c_theta, c_g, seed=seed + 10_000, sigma=1.0 / np.sqrt(c), dtype=dtype
    )
    return x, weights


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_enl_equivalence(n: int = 100, tol: float = 1e-10, dtype=np.float64) -> CheckResult:
    """Reordered product equals the dense dot-product block."""
    worst = 0.0
    for seed in range(n):
        x, w = random_instance(seed, dtype=dtype)
        y_fast = enl_forward(x, w, EnlConfig(w.c_theta, w.c_g)).data
        y_ref = nl_forward(x, w, SimilarityKind.DOT_PRODUCT).data
        worst = max(worst, float(np.max(np.abs(y_fast - y_ref))))
    name = "enl_equals_nl" + ("" if dtype == np.float64 else "_fp32")
    return CheckResult(name, worst <= tol, worst, tol, n)


MASKS = (FrequencyMask(1, 1), FrequencyMask(2, 2), FrequencyMask(3, 3), None)


@_timed
def check_positional_equivalence(n: int = 50, tol: float = 1e-8) -> CheckResult:
    """Factored position term equals the dense ``(F + L) @ g`` block."""
    worst = 0.0
    for seed in range(n):
        x, w = random_instance(seed + 500)
        mask = MASKS[seed % len(MASKS)]
        if mask is None:
            mask = FrequencyMask(x.height, x.width)
        basis = build_basis(x.height, x.width, mask.clamp(x.height, x.width))
        cfg = EnlConfig(w.c_theta, w.c_g, use_position=True)
        y_fast = enl_forward_pos(x, w, cfg, basis).data
        y_ref = nl_forward_pos(x, w, SimilarityKind.DOT_PRODUCT, dense_l(basis)).data
        worst = max(worst, float(np.max(np.abs(y_fast - y_ref))))
    return CheckResult("enl_pos_equals_dense", worst <= tol, worst, tol, n)


@_timed
def check_brute_force(tol: float = 1e-10) -> CheckResult:
    """Dense block against the literal per-pixel double loop, both kinds."""
    worst = 0.0
    cases = 0
    for h in (1, 2, 3, 5):
        for w_ in (1, 2, 4):
            for c in (1, 2, 4):
                x, w = random_instance(100 * h + 10 * w_ + c, hw=(h, w_), widths=(c, max(1, c - 1), c))
                for kind in SimilarityKind:
                    y = nl_forward(x, w, kind).data
                    worst = max(worst, float(np.max(np.abs(y - brute_force_nl(x, w, kind)))))
                    cases += 1
    return CheckResult("nl_equals_brute_force", worst <= tol, worst, tol, cases)


@_timed
def check_dct_structure(tol: float = 1e-10) -> CheckResult:
    """Full-mask L is the identity; trace equals C_l; L symmetric PSD."""
    worst = 0.0
    cases = 0
    for h in range(1, 9):
        for w_ in range(1, 9):
            full = dense_l(build_basis(h, w_, FrequencyMask(h, w_)))
            worst = max(worst, float(np.max(np.abs(full - np.eye(h * w_)))))
            for mh, mw in ((1, 1), (2, 2), (3, 2)):
                mask = FrequencyMask(mh, mw).clamp(h, w_)
                basis = build_basis(h, w_, mask)
                l = dense_l(basis)
                worst = max(
                    worst,
                    abs(float(np.trace(l)) - basis.c_l),
                    float(np.max(np.abs(l - l.T))),
                    max(0.0, -float(np.linalg.eigvalsh(l).min())),
                )
                cases += 1
    return CheckResult("dct_structure", worst <= tol, worst, tol, cases)


def gradient_error(seed: int, with_position: bool) -> float:
    rng = np.random.default_rng(seed + 7_000)
    h, w_ = (int(v) for v in rng.integers(2, 5, size=2))
    x = FeatureMap(h, w_, rng.standard_normal((h * w_, 3)))
    w = ModuleWeights.init(3, 3, 3, seed=seed + 7_000, sigma=1.0)
    upstream = rng.standard_normal(x.data.shape)
    basis = build_basis(h, w_, FrequencyMask(2, 2)) if with_position else None
    cfg = EnlConfig(3, 3, use_position=with_position)
    analytic = enl_backward(x, w, cfg, basis, upstream).as_dict()
    e_hat = None if basis is None else basis.e_hat
    numeric = finite_difference_gradients(
        lambda xx, ww: block_loss(xx, ww, e_hat, upstream), x.data, w, step=1e-5
    )
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        floor = 1e-3 * max(float(np.max(np.abs(a))), float(np.max(np.abs(n))))
        worst = max(worst, relative_error(a, n, floor=floor))
    return worst


@_timed
def check_gradients(n: int = 20, tol: float = 1e-6) -> CheckResult:
    """Hand-written backward against central finite differences."""
    worst = 0.0
    for seed in range(n):
        for with_position in (False, True):
            worst = max(worst, gradient_error(seed, with_position))
    return CheckResult("enl_backward_fd", worst <= tol, worst, tol, 2 * n)


@_timed
def check_memory_claim(threshold: float = 1e4) -> CheckResult:
    """HW x HW vs C_theta x C_g peak buffers at HW = 50,000, and no HW^2
    allocation on any ENL path at HW = 4096."""
    shape = Shape(250, 200, 256, 128, 128, 81)
    ratio = (
        count_nl(shape, elem_size=4).peak_intermediate_bytes
        / count_enl(shape, elem_size=4).peak_intermediate_bytes
    )
    x, w = random_instance(1, hw=(64, 64), widths=(8, 4, 4))
    basis = build_basis(64, 64)
    with instrument() as inst:
        enl_forward(x, w, EnlConfig(4, 4))
        enl_forward_pos(x, w, EnlConfig(4, 4, use_position=True), basis)
        enl_backward(x, w, EnlConfig(4, 4, use_position=True), basis, x.data)
    largest = inst.largest()
    hw2 = x.hw * x.hw
    no_dense = largest is not None and largest.size < hw2
    detail = f"ratio={ratio:.4g} largest_enl_alloc={largest.shape if largest else None}"
    return CheckResult("memory_reduction", ratio >= threshold and no_dense, ratio, threshold, 1, detail=detail)


def count_lattice():
    for h in (2, 4, 8):
        for w_ in (2, 4, 8):
            for c in (2, 4):
                for mask in (FrequencyMask(1, 1), FrequencyMask(2, 2), FrequencyMask(h, w_)):
                    yield Shape.make(h, w_, c, mask=mask), mask


@_timed
def check_counts() -> CheckResult:
    """Closed-form flops and peak bytes equal the instrumented values."""
    cases = 0
    failures = []
    for shape, mask in count_lattice():
        try:
            cases += len(verify_counts(shape, mask))
        except AssertionError as exc:
            failures.append(str(exc))
    return CheckResult(
        "count_exactness", not failures, float(len(failures)), 0.0, cases, detail="; ".join(failures[:3])
    )


ALL_CHECKS = {
    "enl_equals_nl": check_enl_equivalence,
    "enl_pos_equals_dense": check_positional_equivalence,
    "nl_equals_brute_force": check_brute_force,
    "dct_structure": check_dct_structure,
    "enl_backward_fd": check_gradients,
    "memory_reduction": check_memory_claim,
    "count_exactness": check_counts,
}


def run_checks(names=None) -> list[CheckResult]:
    names = list(ALL_CHECKS) if names is None else names
    return [ALL_CHECKS[name]() for name in names]
