"""Tests for the Nevanlinna functions m, N and T"""

import math

import mpmath
import numpy as np
import pytest

from nevanlinna_core.analysis.expr import MeromorphicMap
from nevanlinna_core.analysis.nevanlinna import (
    NevanlinnaAnalyzer,
    NevanlinnaProfile,
    format_target,
    radius_grid,
)
from nevanlinna_core.analysis.quadrature import QuadConfig
from nevanlinna_core.errors import (
    InsufficientGrowthError,
    NeedsDivisorOracleError,
    PreconditionError,
)

JENSEN_CORPUS = [
    "z - 0.7",
    "(z - 0.7)/(z - 1/3)",
    "exp(z)",
    "(z^2 + 2.25) * exp(z)",
    "(z + 1.5)/(z^2 - 0.09)",
    "3 * (z - 0.2i)^2 / (z + 4.5)",
    "z^3 - 2*z + 7",
    "exp(-z) * (z - 1.5i)",
    "(exp(z) + 3)/(z - 4)",
    "exp(0.5*z) + 2",
    "(z^2 + 0.36)/(z^2 + 9)",
    "exp(z) - 2",
]

JENSEN_RADII = [0.5, 1.0, 2.0, math.e, 10.0]

FMT_TARGETS = [1.0, None, 2.0 - 1.0j]


@pytest.fixture
def config():
    """Counting and growth configuration"""
    return {
        "counting": {
            "origin_policy": "recenter",
            "recenter_step": 0.0625,
            "recenter_max_rings": 64,
            "radius_jitter": 1e-9,
            "winding_residual_max": 0.25,
        },
        "growth": {"min_rows": 8, "hyper_transient_log": 3.0},
    }


@pytest.fixture
def analyzer(config):
    return NevanlinnaAnalyzer(QuadConfig(), config)


@pytest.fixture
def classical(config):
    """Analyzer using the leading Laurent coefficient at the origin"""
    counting = {**config["counting"], "origin_policy": "classical"}
    return NevanlinnaAnalyzer(QuadConfig(), {**config, "counting": counting})


@pytest.fixture
def loose_analyzer(config):
    """Analyzer for sphere integrals in C^2 with logarithmic singularities"""
    return NevanlinnaAnalyzer(QuadConfig(rel_tol=1e-3), config)


def mp_proximity(fn, r, samples=2048):
    """Extended-precision circle mean of max(fn(z), 0), split at the sign changes of fn"""
    on_circle = lambda t: fn(r * mpmath.expj(t))  # noqa: E731
    theta = [2 * mpmath.pi * k / samples for k in range(samples + 1)]
    values = [on_circle(t) for t in theta]
    breaks = [theta[0]]
    for k in range(samples):
        if values[k] * values[k + 1] < 0:
            breaks.append(mpmath.findroot(on_circle, (theta[k], theta[k + 1]), solver="illinois"))
    breaks.append(theta[-1])
    total = mpmath.quad(lambda t: max(on_circle(t), 0), breaks)
    return float(total / (2 * mpmath.pi))


class TestProximity:
    """Test m(r, f) and m(r, 1/(f - a))"""

    def test_exponential_at_pi(self, analyzer):
        """m(pi, e^z) = 1"""
        f = MeromorphicMap.from_text("exp(z)")
        assert analyzer.proximity(f, None, math.pi).value == pytest.approx(1.0, abs=1e-6)

    def test_exponential_at_zero_target(self, analyzer):
        """m(r, 1/e^z) = r / pi"""
        f = MeromorphicMap.from_text("exp(z)")
        assert analyzer.proximity(f, 0.0, 7.0).value == pytest.approx(7.0 / math.pi, rel=1e-6)

    def test_finite_target_against_mpmath(self, analyzer):
        """m(1.5, 1/(e^z - 2)) against an extended-precision quadrature"""
        f = MeromorphicMap.from_text("exp(z)")
        expected = mp_proximity(lambda z: -mpmath.log(abs(mpmath.exp(z) - 2)), 1.5)
        assert analyzer.proximity(f, 2.0, 1.5).value == pytest.approx(expected, abs=1e-5)

    def test_rational_against_mpmath(self, analyzer):
        """Test m(1.2, f) for a rational map against mpmath"""
        f = MeromorphicMap.from_text("(z^2 + 1)/(z - 0.5)")
        expected = mp_proximity(lambda z: mpmath.log(abs((z**2 + 1) / (z - 0.5))), 1.2)
        assert analyzer.proximity(f, None, 1.2).value == pytest.approx(expected, abs=1e-5)

    def test_double_exponential_in_log_domain(self, analyzer):
        """m(r, exp(exp z)) is finite even where exp(exp z) overflows"""
        f = MeromorphicMap.from_text("exp(exp(z))")
        estimate = analyzer.proximity(f, None, 8.0)
        expected = mp_proximity(lambda z: mpmath.re(mpmath.exp(z)), 8.0)
        assert estimate.value == pytest.approx(expected, rel=1e-5)

    def test_several_variables(self, loose_analyzer):
        """m(r, exp(z1 + z2)) = 2 sqrt(2) r / (3 pi) on the sphere in C^2"""
        f = MeromorphicMap.from_text("exp(z1 + z2)", n=2)
        expected = 2.0 * math.sqrt(2.0) * 2.0 / (3.0 * math.pi)
        assert loose_analyzer.proximity(f, None, 2.0).value == pytest.approx(expected, rel=5e-3)


class TestCounting:
    """Test n(r, a) and N(r, a)"""

    @pytest.mark.parametrize("a, r", [(0.5, 2.0), (1.0 / 3.0, 2.0), (0.5, math.e)])
    def test_single_zero(self, analyzer, a, r):
        """N(r, 0) of z - a is log(r / |a|)"""
        f = MeromorphicMap.from_text(f"z - {a!r}")
        assert analyzer.integrated_counting(f, 0.0, r) == pytest.approx(
            math.log(r / a), abs=1e-6
        )

    @pytest.mark.parametrize("a, r", [(0.5, 2.0), (1.0 / 3.0, 2.0), (0.5, math.e)])
    def test_single_pole(self, analyzer, a, r):
        """Test N(r, infinity) of 1/(z - a) = log(r / |a|)"""
        f = MeromorphicMap.from_text(f"1/(z - {a!r})")
        assert analyzer.integrated_counting(f, None, r) == pytest.approx(
            math.log(r / a), abs=1e-6
        )

    def test_point_outside_radius(self, analyzer):
        """Test a pole outside the circle"""
        f = MeromorphicMap.from_text("1/(z - 3)")
        assert analyzer.integrated_counting(f, None, 2.0) == 0.0

    def test_multiplicity(self, analyzer):
        """Test a double zero"""
        f = MeromorphicMap.from_text("(z - 0.5)^2 * (z + 3)")
        assert analyzer.integrated_counting(f, 0.0, 2.0) == pytest.approx(
            2.0 * math.log(4.0), abs=1e-6
        )
        assert analyzer.count_points_1d(f, 0.0, 2.0).count == 2
        assert analyzer.count_points_1d(f, 0.0, 4.0).count == 3

    def test_exponential_a_points(self, analyzer):
        """e^z = 1 at 2 pi i k; three of them lie in |z| < 10"""
        f = MeromorphicMap.from_text("exp(z)")
        assert analyzer.count_points_1d(f, 1.0, 10.0).count == 3

    def test_points_on_the_circle(self, analyzer):
        """The cube roots of unity sit on |z| = 1; the count moves just outside"""
        row = analyzer.count_points_1d(MeromorphicMap.from_text("z^3 - 1"), 0.0, 1.0)
        assert row.count == 3
        assert row.r == pytest.approx(1.0, abs=1e-6)
        assert row.r > 1.0

    @pytest.mark.parametrize(
        "text, fn, dfn, r, expected",
        [
            ("exp(z) - 2", lambda z: np.exp(z) - 2, np.exp, 20.0, 7),
            ("z^5 - 3*z + 1", lambda z: z**5 - 3 * z + 1, lambda z: 5 * z**4 - 3, 1.5, 5),
            (
                "exp(i*z) - exp(-i*z)",
                lambda z: np.exp(1j * z) - np.exp(-1j * z),
                lambda z: 1j * (np.exp(1j * z) + np.exp(-1j * z)),
                10.0,
                7,
            ),
        ],
    )
    def test_count_matches_newton_scan(self, analyzer, newton_scan, text, fn, dfn, r, expected):
        """Zeros counted by the winding integral agree with a brute-force Newton scan"""
        zeros = newton_scan(fn, dfn, (-r, r, -r, r))
        inside = sum(1 for z in zeros if abs(z) < r)
        assert inside == expected
        assert analyzer.count_points_1d(MeromorphicMap.from_text(text), 0.0, r).count == inside

    def test_zero_free_counts_nothing(self, analyzer):
        """Test e^z at 0 and infinity"""
        f = MeromorphicMap.from_text("exp(z)")
        assert analyzer.integrated_counting(f, 0.0, 50.0) == 0.0
        assert analyzer.integrated_counting(f, None, 50.0) == 0.0

    def test_origin_point_needs_regularization(self, analyzer):
        """Test a pole at the origin under the recenter policy"""
        f = MeromorphicMap.from_text("1/z")
        with pytest.raises(PreconditionError):
            analyzer.integrated_counting(f, None, 2.0)

    def test_classical_origin_policy(self, classical):
        """A pole at the origin contributes log r"""
        f = MeromorphicMap.from_text("1/z")
        assert classical.integrated_counting(f, None, math.e) == pytest.approx(1.0, abs=1e-9)
        assert classical.characteristic(f, math.e).T == pytest.approx(1.0, abs=1e-6)

    def test_unknown_origin_policy(self, config):
        """Test an unknown policy name"""
        with pytest.raises(PreconditionError):
            NevanlinnaAnalyzer(QuadConfig(), {**config, "counting": {"origin_policy": "shift"}})

    def test_identically_equal_to_target(self, analyzer):
        """Test a constant map equal to the target"""
        with pytest.raises(PreconditionError):
            analyzer.integrated_counting(MeromorphicMap.from_text("2"), 2.0, 1.0)

    def test_divisor_cache_reused(self, analyzer):
        """Test that a located divisor is reused at smaller radii"""
        f = MeromorphicMap.from_text("exp(z) - 2")
        analyzer.integrated_counting(f, 0.0, 20.0)
        assert f.f1.key in analyzer._divisors
        roots = analyzer.divisor_1d(f.f1, 7.0)
        assert len(roots) == 3

    def test_jensen_counting_in_c2(self, loose_analyzer):
        """N(2, 0) of z1 - 1 in C^2 is log 2 - 3/8"""
        f = MeromorphicMap.from_text("z1 - 1", n=2)
        value = loose_analyzer.integrated_counting(f, 0.0, 2.0)
        assert value == pytest.approx(math.log(2.0) - 0.375, abs=1e-2)

    def test_oracle_in_c2(self, analyzer, product_oracle):
        """Test counts supplied by a divisor oracle"""
        f = MeromorphicMap.from_text("z1*z2 - 1", n=2)
        value = analyzer.integrated_counting(f, 0.0, 2.0, product_oracle)
        assert value == pytest.approx(product_oracle.integrated(0.0, 2.0))

    def test_oracle_required_in_c2(self, analyzer):
        """Test that C^2 divisors need an oracle"""
        f = MeromorphicMap.from_text("(z1 - 1)/(z2 - 1)", n=2)
        with pytest.raises(NeedsDivisorOracleError):
            analyzer.integrated_counting(f, None, 2.0)


class TestCharacteristic:
    """Test T(r, f) and profiles"""

    def test_identity_at_e(self, analyzer):
        """T(e, z) = 1"""
        row = analyzer.characteristic(MeromorphicMap.from_text("z"), math.e)
        assert row.T == pytest.approx(1.0, abs=1e-6)
        assert row.N == 0.0

    @pytest.mark.parametrize("r", [1.0, 5.0, 25.0])
    def test_exponential(self, analyzer, r):
        """Test T(r, e^z) = r / pi"""
        row = analyzer.characteristic(MeromorphicMap.from_text("exp(z)"), r)
        assert row.T == pytest.approx(r / math.pi, rel=1e-5)

    def test_simple_pole(self, analyzer):
        """T(e, 1/(z - 1)) = N(e, 1/(z - 1)) = 1"""
        row = analyzer.characteristic(MeromorphicMap.from_text("1/(z - 1)"), math.e)
        assert row.m == pytest.approx(0.0, abs=1e-12)
        assert row.T == pytest.approx(1.0, abs=1e-6)

    def test_recentered_profile_records_offset(self, analyzer):
        """Test that a recentered profile records its translation"""
        profile = analyzer.profile(MeromorphicMap.from_text("1/z"), [1.0, 2.0, 4.0])
        assert profile.offset != [[0.0, 0.0]]
        assert all(b.T >= a.T for a, b in zip(profile.rows, profile.rows[1:]))

    def test_profile_is_non_decreasing(self, analyzer):
        """Test monotonicity of T up to the error estimates"""
        f = MeromorphicMap.from_text("(z^2 + 1)/(z - 0.5) * exp(z)")
        profile = analyzer.profile(f, radius_grid(0.6, 20.0, 12))
        for prev, row in zip(profile.rows, profile.rows[1:]):
            assert row.T >= prev.T - 2.0 * (row.err + prev.err) - 1e-12

    def test_profile_frame(self, analyzer):
        """Test the pandas view of a profile"""
        profile = analyzer.profile(MeromorphicMap.from_text("exp(z)"), [1.0, 2.0, 3.0])
        frame = profile.to_frame()
        assert list(frame.columns) == ["r", "m", "N", "T", "err"]
        assert np.allclose(profile.characteristic(), profile.radii() / math.pi, rtol=1e-5)

    def test_profile_round_trips_through_json(self, analyzer):
        """Test JSON serialization of a profile"""
        profile = analyzer.profile(MeromorphicMap.from_text("z^2"), [2.0, 3.0])
        restored = NevanlinnaProfile.model_validate_json(profile.model_dump_json())
        assert restored == profile

    def test_unsorted_grid(self, analyzer):
        """Test a decreasing radius grid"""
        with pytest.raises(PreconditionError):
            analyzer.profile(MeromorphicMap.from_text("z"), [2.0, 1.0])

    def test_invalid_radius_grid(self):
        """Test reversed bounds and a single point"""
        with pytest.raises(PreconditionError):
            radius_grid(5.0, 1.0, 10)
        with pytest.raises(PreconditionError):
            radius_grid(1.0, 5.0, 1)

    def test_radius_grids(self):
        """Test log and linear spacing"""
        assert radius_grid(1.0, 100.0, 3) == pytest.approx([1.0, 10.0, 100.0])
        assert radius_grid(1.0, 3.0, 3, log_grid=False) == pytest.approx([1.0, 2.0, 3.0])


class TestJensenAndFirstMainTheorem:
    """Test Jensen and first-main-theorem residuals"""

    @pytest.mark.parametrize("text", JENSEN_CORPUS)
    def test_jensen_residual(self, analyzer, text):
        """Test Jensen's formula over the corpus and the radii"""
        f = MeromorphicMap.from_text(text)
        for r in JENSEN_RADII:
            assert analyzer.jensen_residual(f, r) <= 1e-5

    @pytest.mark.parametrize("a", FMT_TARGETS)
    @pytest.mark.parametrize("text", JENSEN_CORPUS)
    def test_fmt_residual(self, analyzer, text, a):
        """No a-point of the corpus lies on a test circle, for a = 1, infinity and 2 - i"""
        f = MeromorphicMap.from_text(text)
        for r in JENSEN_RADII:
            assert analyzer.fmt_residual(f, a, r) <= 1e-5

    def test_fmt_residual_at_infinity(self, analyzer):
        """T(r, 1/f) = T(r, f) - log|f(0)| for f = 2 e^z"""
        f = MeromorphicMap.from_text("2 * exp(z)")
        r, log_two = 3.0, math.log(2.0)
        alpha = math.acos(-log_two / r)
        t_f = (r * math.sin(alpha) + log_two * alpha) / math.pi
        assert analyzer.fmt_residual(f, None, r) == pytest.approx(0.0, abs=1e-5)
        reciprocal = analyzer.characteristic(f.reciprocal(), r).T
        assert reciprocal == pytest.approx(t_f - log_two, abs=1e-5)

    def test_fmt_residual_recenters(self, analyzer):
        """e^z takes the value 1 at the origin"""
        f = MeromorphicMap.from_text("exp(z)")
        assert analyzer.fmt_residual(f, 1.0, 3.0) <= 1e-5

    def test_classical_jensen_with_zero_at_origin(self, classical):
        """Test a double zero at the origin"""
        f = MeromorphicMap.from_text("3 * z^2")
        assert classical.jensen_residual(f, 2.0) == pytest.approx(0.0, abs=1e-6)

    def test_classical_jensen_with_pole_at_origin(self, classical):
        """Test a double pole at the origin"""
        f = MeromorphicMap.from_text("(z - 0.5)/z^2")
        assert classical.jensen_residual(f, 2.0) == pytest.approx(0.0, abs=1e-6)

    def test_jensen_with_oracle(self, loose_analyzer, product_oracle):
        """Test Jensen's formula in C^2 with oracle counts"""
        f = MeromorphicMap.from_text("z1*z2 - 1", n=2)
        assert loose_analyzer.jensen_residual(f, 2.0, product_oracle) <= 1e-2

    def test_fmt_discrepancy_bound(self, analyzer):
        """Test |T(r, f - a) - T(r, f)| <= log+|a| + log 2"""
        f = MeromorphicMap.from_text("exp(z)")
        gap, bound = analyzer.fmt_discrepancy(f, 2.0, 5.0)
        assert bound == pytest.approx(2.0 * math.log(2.0))
        assert gap <= bound

    @pytest.mark.parametrize("r", [10.0, 30.0])
    def test_square_of_exponential(self, analyzer, r):
        """T(r, f^2) / (2 T(r, f)) = 1"""
        f = MeromorphicMap.from_text("exp(z)")
        two_t = 2.0 * analyzer.characteristic(f, r).T
        assert (analyzer.square_check(f, r) + two_t) / two_t == pytest.approx(1.0, abs=1e-3)

    def test_square_of_rational(self, analyzer):
        """Test T(r, f^2) = 2 T(r, f) for a Moebius map"""
        f = MeromorphicMap.from_text("(z - 0.7)/(z + 0.4)")
        assert analyzer.square_check(f, 5.0) == pytest.approx(0.0, abs=1e-5)


class TestGrowth:
    """Test order and hyper-order estimates"""

    def test_exponential_order(self, analyzer):
        """Test order one for e^z"""
        profile = analyzer.profile(MeromorphicMap.from_text("exp(z)"), radius_grid(5.0, 50.0, 16))
        assert analyzer.estimate_order(profile).slope == pytest.approx(1.0, abs=0.05)
        assert analyzer.estimate_hyper_order(profile).slope == pytest.approx(0.0, abs=0.1)

    def test_polynomial_order(self, analyzer):
        """Test order zero for a polynomial"""
        profile = analyzer.profile(MeromorphicMap.from_text("z^3"), radius_grid(3.0, 1e4, 16))
        assert analyzer.estimate_order(profile).slope == pytest.approx(0.0, abs=0.05)

    def test_rational_order(self, analyzer):
        """Test order zero for a rational map"""
        f = MeromorphicMap.from_text("(z^2 + 1)/(z - 0.5)")
        profile = analyzer.profile(f, radius_grid(3.0, 1e4, 16))
        assert analyzer.estimate_order(profile).slope == pytest.approx(0.0, abs=0.05)

    def test_double_exponential_hyper_order(self, analyzer):
        """Test hyper-order one for exp(exp z)"""
        f = MeromorphicMap.from_text("exp(exp(z))")
        profile = analyzer.profile(f, radius_grid(3.0, 20.0, 16))
        estimate = analyzer.estimate_hyper_order(profile)
        assert estimate.slope == pytest.approx(1.0, abs=0.2)
        assert estimate.raw_slope is not None

    def test_insufficient_growth(self, analyzer):
        """Test a profile with too few usable rows"""
        profile = analyzer.profile(MeromorphicMap.from_text("z"), radius_grid(1.1, 2.0, 10))
        with pytest.raises(InsufficientGrowthError):
            analyzer.estimate_order(profile)
        with pytest.raises(InsufficientGrowthError):
            analyzer.estimate_hyper_order(profile)


class TestFormatting:
    """Test target labels used in reports"""

    def test_format_target(self):
        """Test target formatting"""
        assert format_target(None) == "inf"
        assert format_target(2.0) == "2"
        assert format_target(1 + 2j) == "1+2i"
        assert format_target(1 - 0.5j) == "1-0.5i"
