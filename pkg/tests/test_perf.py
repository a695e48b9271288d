import numpy as np
import pytest

from efficient_nonlocal import perf
from efficient_nonlocal.dct_pos import FrequencyMask
from efficient_nonlocal.nl_reference import SimilarityKind
from efficient_nonlocal.perf import (
    ContractViolation,
    Shape,
    benchmark,
    count_enl,
    count_nl,
    count_variant,
    verify_counts,
)


def counting_matmul(a, b):
    """Triple loop that tallies each multiply and add separately."""
    n, k = len(a), len(a[0])
    m = len(b[0])
    mults = adds = 0
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i][t] * b[t][j]
                mults += 1
                adds += 1
            out[i][j] = acc
    return out, mults + adds


class TestCountNl:
    def test_single_pixel_peak(self):
        r = count_nl(Shape(1, 1, 2, 1, 1), elem_size=4)
        assert r.peak_intermediate_bytes == 4

    def test_4x4_dot(self):
        r = count_nl(Shape(4, 4, 4, 2, 2), SimilarityKind.DOT_PRODUCT)
        assert r.flops == 2 * 256 * 2 + 2 * 256 * 2 == 2048

    def test_4x4_dot_against_counting_multiplier(self):
        rng = np.random.default_rng(0)
        theta, phi, g = (rng.standard_normal((16, 2)).tolist() for _ in range(3))
        phi_t = [list(col) for col in zip(*phi)]
        f, ops1 = counting_matmul(theta, phi_t)
        _, ops2 = counting_matmul(f, g)
        assert ops1 + ops2 == count_nl(Shape(4, 4, 4, 2, 2), SimilarityKind.DOT_PRODUCT).flops

    def test_softmax_term(self):
        s = Shape(3, 3, 4, 2, 2)
        dot = count_nl(s, SimilarityKind.DOT_PRODUCT).flops
        assert count_nl(s, SimilarityKind.EMBEDDED_GAUSSIAN).flops == dot + 3 * 81

    def test_large_map_affinity_bytes(self):
        r = count_nl(Shape(250, 200, 256, 128, 128), elem_size=4)
        assert r.shape.hw == 50_000
        assert r.peak_intermediate_bytes == 10**10

    def test_wide_integers(self):
        r = count_nl(Shape(1000, 1000, 4096, 2048, 2048))
        assert r.flops == 2 * 10**12 * 2048 * 2 + 3 * 10**12


class TestCountEnl:
    def test_large_map_ratio(self):
        s = Shape(250, 200, 256, 128, 128)
        ratio = count_nl(s, elem_size=4).peak_intermediate_bytes / count_enl(s, elem_size=4).peak_intermediate_bytes
        assert ratio == pytest.approx(50_000**2 / 128**2)
        assert ratio >= 1e4

    def test_position_flag_off_ignores_c_l(self):
        a = count_enl(Shape(5, 5, 4, 2, 2, 81), with_position=False)
        b = count_enl(Shape(5, 5, 4, 2, 2, 0), with_position=False)
        assert (a.flops, a.peak_intermediate_bytes) == (b.flops, b.peak_intermediate_bytes)

    def test_minimal_shape(self):
        assert count_enl(Shape(2, 2, 2, 1, 1, 1)).flops == 16

    def test_minimal_shape_against_counting_multiplier(self):
        rng = np.random.default_rng(1)
        theta, phi, g = (rng.standard_normal((4, 1)).tolist() for _ in range(3))
        phi_t = [list(col) for col in zip(*phi)]
        inner, ops1 = counting_matmul(phi_t, g)
        _, ops2 = counting_matmul(theta, inner)
        assert ops1 + ops2 == 16

    def test_position_terms(self):
        r = count_enl(Shape(6, 6, 4, 2, 3, 4), with_position=True, elem_size=8)
        assert r.flops == 4 * 36 * 2 * 3 + 4 * 36 * 4 * 3
        assert r.peak_intermediate_bytes == max(2 * 3, 4 * 3) * 8


class TestMonotonicity:
    @pytest.mark.parametrize("h,w", [(4, 4), (8, 16), (32, 32)])
    def test_doubling_hw(self, h, w):
        small = Shape(h, w, 8, 4, 4, 9)
        big = Shape(2 * h, w, 8, 4, 4, 9)
        assert count_nl(big).peak_intermediate_bytes == 4 * count_nl(small).peak_intermediate_bytes
        for pos in (False, True):
            assert (
                count_enl(big, pos).peak_intermediate_bytes
                == count_enl(small, pos).peak_intermediate_bytes
            )


class TestVerifyCounts:
    @pytest.mark.parametrize("variant", perf.VARIANTS)
    def test_4x4(self, variant):
        mask = FrequencyMask(2, 2)
        (check,) = verify_counts(Shape.make(4, 4, 4, mask=mask), mask, variants=[variant])
        assert check.ok

    def test_enl_pos_6x6_mask2(self):
        mask = FrequencyMask(2, 2)
        (check,) = verify_counts(Shape.make(6, 6, 4, mask=mask), mask, variants=["enl-pos"])
        assert check.instrumented_flops == check.analytic_flops
        assert check.instrumented_peak_bytes == check.analytic_peak_bytes

    def test_lattice(self):
        for h in (2, 4, 8):
            for w in (2, 4, 8):
                for c in (2, 4):
                    for mask in (FrequencyMask(1, 1), FrequencyMask(2, 2), FrequencyMask(h, w)):
                        checks = verify_counts(Shape.make(h, w, c, mask=mask), mask)
                        assert len(checks) == len(perf.VARIANTS)

    def test_mismatch_raises(self, monkeypatch):
        real = perf.count_variant

        def off_by_one(variant, shape, elem_size=8):
            r = real(variant, shape, elem_size)
            r.flops += 1
            return r

        monkeypatch.setattr(perf, "count_variant", off_by_one)
        with pytest.raises(ContractViolation, match="analytic"):
            verify_counts(Shape.make(2, 2, 2), variants=["enl"])

    def test_size_limit(self):
        with pytest.raises(ValueError):
            verify_counts(Shape.make(65, 64, 2))


class TestBenchmark:
    def test_enl_faster_than_nl(self):
        shape = Shape(32, 32, 64, 32, 32, 81)
        reports = {r.variant: r for r in benchmark(["nl", "enl"], [shape], repeats=5)}
        assert reports["enl"].wall_time < reports["nl"].wall_time
        assert reports["nl"].wall_time_is_median and len(reports["nl"].samples) == 5
        assert reports["enl"].elem_size == 4

    def test_refusal_record(self):
        shape = Shape(250, 200, 256, 128, 128, 81)
        (report,) = benchmark(["nl"], [shape], repeats=1)
        assert report.status == "refused"
        assert report.wall_time is None and report.samples == []
        assert "10000000000" in report.reason

    def test_single_repeat_not_median(self):
        (report,) = benchmark(["enl"], [Shape(4, 4, 4, 2, 2, 16)], repeats=1)
        assert len(report.samples) == 1
        assert not report.wall_time_is_median
        assert report.wall_time == report.samples[0]

    def test_counts_reported_in_fp32(self):
        (report,) = benchmark(["enl-pos"], [Shape(8, 8, 4, 2, 2, 64)], repeats=1)
        assert report.peak_intermediate_bytes == 64 * 2 * 4

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            count_variant("nope", Shape(2, 2, 2, 1, 1))


def test_shape_make_defaults():
    s = Shape.make(16, 16, 256)
    assert s.as_tuple() == (16, 16, 256, 128, 128, 81)
    assert Shape.make(4, 4, 3, mask=FrequencyMask(9, 9)).c_l == 16
