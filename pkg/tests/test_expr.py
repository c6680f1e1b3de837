"""Tests for expression trees and meromorphic maps"""

import cmath
import math

import numpy as np
import pytest

from nevanlinna_core.analysis.expr import (
    MeromorphicMap,
    NodeKind,
    derivative,
    evaluate,
    evaluate_array,
    evaluate_logmag,
    is_zero_free,
    logmag_array,
    parse_expr,
    polynomial_coefficients,
    shift,
    to_fraction,
    to_text,
    vanishes_identically,
    var,
)
from nevanlinna_core.errors import (
    DimensionError,
    DivisionByZeroError,
    ExprOverflowError,
    ExprParseError,
    InputError,
)


class TestParsing:
    """Test the text grammar"""

    def test_polynomial(self):
        """Test a polynomial with implicit multiplication"""
        e = parse_expr("2z^2 - 3z + 1")
        assert evaluate(e, 2.0) == pytest.approx(3.0)

    def test_constants(self):
        """Test i, pi and e"""
        e = parse_expr("exp(i*pi) + e")
        assert evaluate(e, 0.0) == pytest.approx(-1.0 + math.e)

    def test_z_is_alias_of_z1(self):
        """Test z as the first coordinate"""
        e = parse_expr("z * z2", n=2)
        assert e.dimension == 2
        assert evaluate(e, [3.0, 4.0]) == pytest.approx(12.0)

    def test_imaginary_literal(self):
        """Test a literal with an i suffix"""
        assert evaluate(parse_expr("2.5i"), 0.0) == pytest.approx(2.5j)

    def test_negative_exponent(self):
        """Test z^(-2)"""
        e = parse_expr("z^(-2)")
        assert evaluate(e, 2.0) == pytest.approx(0.25)

    def test_unbalanced_parenthesis(self):
        """Test a missing closing parenthesis"""
        with pytest.raises(ExprParseError):
            parse_expr("(z + 1")

    def test_trailing_operator(self):
        """Test an expression ending in an operator"""
        with pytest.raises(ExprParseError):
            parse_expr("z +")

    def test_unknown_function(self):
        """Test a function outside the grammar"""
        with pytest.raises(ExprParseError):
            parse_expr("sin(z)")

    def test_fractional_exponent_rejected(self):
        """Only integer powers keep every map meromorphic"""
        with pytest.raises(ExprParseError):
            parse_expr("z^1.5")

    def test_variable_beyond_dimension(self):
        """Test z3 in C^2"""
        with pytest.raises(DimensionError):
            parse_expr("z1 + z3", n=2)

    def test_division_by_constant_stays_holomorphic(self):
        """exp(i pi z / 4) must be usable as a map component"""
        e = parse_expr("exp(i*pi*z/4)")
        assert e.holomorphic_safe
        assert evaluate(e, 2.0) == pytest.approx(1j)

    def test_text_reparses_to_same_values(self):
        """Test that printed text parses back to the same values"""
        e = parse_expr("exp(z1) * (z2 - 2.5i) / (z1^3 + 1e-05)", n=2)
        point = [1.0 + 0.5j, -0.3 + 2.0j]
        assert evaluate(parse_expr(to_text(e), n=2), point) == pytest.approx(evaluate(e, point))


class TestEvaluation:
    """Test direct and log-domain evaluation"""

    def test_operator_overloads(self):
        """Test building trees with Python operators"""
        e = var(1) * 2 + 1
        assert evaluate(e, 3.0) == pytest.approx(7.0)

    def test_vectorized_columns(self):
        """Test one value per column of points"""
        e = parse_expr("z1 + z2", n=2)
        Z = np.array([[1.0, 2.0, 3.0], [10.0, 20.0, 30.0]], dtype=complex)
        assert np.allclose(evaluate_array(e, Z), [11.0, 22.0, 33.0])

    def test_pole_raises(self):
        """Test evaluation at a pole"""
        with pytest.raises(DivisionByZeroError):
            evaluate(parse_expr("1/(z - 1)"), 1.0)

    def test_overflow_raises(self):
        """exp(exp(10)) is not a double"""
        with pytest.raises(ExprOverflowError):
            evaluate(parse_expr("exp(exp(z))"), 10.0)

    def test_logmag_of_double_exponential(self):
        """log|exp(exp(z))| = Re exp(z) without forming the value"""
        result = evaluate_logmag(parse_expr("exp(exp(z))"), 10.0)
        assert result.log_abs == pytest.approx(math.exp(10.0), rel=1e-12)

    def test_logmag_phase(self):
        """Test log modulus and phase of 2i z"""
        result = evaluate_logmag(parse_expr("2i * z"), 3.0)
        assert result.log_abs == pytest.approx(math.log(6.0))
        assert result.phase == pytest.approx(math.pi / 2)

    def test_logmag_of_cancelling_sum(self):
        """Sums of huge addends keep their relative accuracy"""
        result = evaluate_logmag(parse_expr("exp(z) - exp(z - 1)"), 800.0)
        assert result.log_abs == pytest.approx(800.0 + math.log(1.0 - math.exp(-1.0)))


class TestTransformations:
    """Test shift, derivative and fraction splitting"""

    def test_shift(self):
        """Test z1 z2 shifted by (1, 2)"""
        e = shift(parse_expr("z1 * z2", n=2), [1.0, 2.0])
        assert evaluate(e, [1.0, 1.0]) == pytest.approx(6.0)

    def test_derivative_of_power(self):
        """Test d/dz z^3"""
        assert evaluate(derivative(parse_expr("z^3"), 1), 2.0) == pytest.approx(12.0)

    def test_derivative_of_exponential(self):
        """Test the chain rule through exp"""
        d = derivative(parse_expr("exp(z^2)"), 1)
        assert evaluate(d, 1.0) == pytest.approx(2.0 * math.e)

    def test_partial_derivative(self):
        """Test the derivative in z2"""
        d = derivative(parse_expr("z1^2 * z2", n=2), 2)
        assert evaluate(d, [3.0, 5.0]) == pytest.approx(9.0)

    def test_to_fraction(self):
        """Test splitting into holomorphic numerator and denominator"""
        num, den = to_fraction(parse_expr("1/(z - 1) + z"))
        assert num.holomorphic_safe and den.holomorphic_safe
        assert evaluate(num, 3.0) / evaluate(den, 3.0) == pytest.approx(3.5)

    def test_exp_of_meromorphic_rejected(self):
        """exp(1/z) has an essential singularity"""
        with pytest.raises(InputError):
            to_fraction(parse_expr("exp(1/z)"))

    def test_zero_free_certificate(self):
        """Test the syntactic zero-free check"""
        assert is_zero_free(parse_expr("2 * exp(z)"))
        assert is_zero_free(parse_expr("exp(z)^3"))
        assert not is_zero_free(parse_expr("z - 1"))
        assert not is_zero_free(parse_expr("exp(z) - 1"))

    def test_polynomial_coefficients(self):
        """Test constant coefficients in u"""
        e = parse_expr("u^2 + 3u", extra={"u": 2})
        coeffs = polynomial_coefficients(e, 2)
        assert [c.kind for c in coeffs] == [NodeKind.CONST] * 3
        assert [c.value for c in coeffs] == [0, 3, 1]

    def test_coefficient_depending_on_z(self):
        """Test coefficients that depend on z"""
        e = parse_expr("exp(z) * u + z", extra={"u": 2})
        low, high = polynomial_coefficients(e, 2)
        assert evaluate(low, 2.0) == pytest.approx(2.0)
        assert evaluate(high, 0.0) == pytest.approx(1.0)

    def test_non_polynomial_rejected(self):
        """Test exp(u)"""
        with pytest.raises(InputError):
            polynomial_coefficients(parse_expr("exp(u)", extra={"u": 2}), 2)

    def test_vanishes_identically(self):
        """Test the randomized zero check"""
        assert vanishes_identically(parse_expr("z - z"), 1)
        assert not vanishes_identically(parse_expr("z - 1e-3"), 1)


PROPERTY_CORPUS = [
    "exp(z) * (z^2 - 1)",
    "(z + 1)/(z^2 + 4)",
    "exp(z^2 - z)/(z - 3)",
    "z^4 - 2i*z + 0.5",
    "exp(exp(z)) - z",
]


@pytest.fixture
def sample_points():
    """Seeded points in the square |Re z|, |Im z| < 1"""
    rng = np.random.default_rng(7)
    points = rng.uniform(-1.0, 1.0, 64) + 1j * rng.uniform(-1.0, 1.0, 64)
    return points[None, :]


class TestAlgebraicProperties:
    """Sweep identities of evaluation, shift and derivative over a corpus"""

    @pytest.mark.parametrize("text", PROPERTY_CORPUS)
    def test_logmag_agrees_with_direct_value(self, text, sample_points):
        """Test log-domain evaluation against log|value| and arg"""
        e = parse_expr(text)
        log_abs, phase = logmag_array(e, sample_points)
        direct = evaluate_array(e, sample_points)
        assert np.allclose(log_abs, np.log(np.abs(direct)), rtol=1e-10, atol=1e-9)
        assert np.allclose(np.exp(log_abs + 1j * phase), direct, rtol=1e-9)

    @pytest.mark.parametrize("text", PROPERTY_CORPUS)
    def test_shift_is_a_group_action(self, text, sample_points):
        """shift(shift(e, a), b) = shift(e, a + b) and shift(e, 0) = e"""
        e = parse_expr(text)
        a, b = 0.3 - 0.2j, -0.1 + 0.45j
        twice = evaluate_array(shift(shift(e, [a]), [b]), sample_points)
        once = evaluate_array(shift(e, [a + b]), sample_points)
        assert np.allclose(twice, once, rtol=1e-10)
        unmoved = evaluate_array(shift(e, [0.0]), sample_points)
        assert np.allclose(unmoved, evaluate_array(e, sample_points), rtol=1e-12)

    @pytest.mark.parametrize("text", PROPERTY_CORPUS)
    def test_derivative_commutes_with_shift(self, text, sample_points):
        """Test d/dz f(z + c) = f'(z + c)"""
        e = parse_expr(text)
        c = [0.25 + 0.5j]
        left = evaluate_array(derivative(shift(e, c), 1), sample_points)
        right = evaluate_array(shift(derivative(e, 1), c), sample_points)
        assert np.allclose(left, right, rtol=1e-10)

    @pytest.mark.parametrize("text", PROPERTY_CORPUS)
    def test_derivative_matches_central_difference(self, text, sample_points):
        """Central difference with step 1e-5, compared to 1e-6 of max(1, |f'|)"""
        e = parse_expr(text)
        h = 1e-5
        exact = evaluate_array(derivative(e, 1), sample_points)
        forward = evaluate_array(e, sample_points + h)
        backward = evaluate_array(e, sample_points - h)
        numeric = (forward - backward) / (2.0 * h)
        assert np.all(np.abs(numeric - exact) <= 1e-6 * np.maximum(1.0, np.abs(exact)))


class TestMeromorphicMap:
    """Test maps f = f1 / f0"""

    def test_from_text_splits_components(self):
        """Test f0 and f1 of a quotient"""
        f = MeromorphicMap.from_text("1/(z - 1)")
        assert evaluate(f.f0, 3.0) == pytest.approx(2.0)
        assert evaluate(f.f1, 3.0) == pytest.approx(1.0)
        assert f.value(3.0) == pytest.approx(0.5)

    def test_from_pair(self):
        """Test a map given as two components"""
        f = MeromorphicMap.from_pair("z2", "z1", n=2)
        assert f.value([6.0, 3.0]) == pytest.approx(2.0)

    def test_zero_denominator_rejected(self):
        """Test f0 = 0"""
        with pytest.raises(InputError):
            MeromorphicMap.from_pair("0", "1")

    def test_dimension_mismatch(self):
        """Test components in different dimensions"""
        with pytest.raises(DimensionError):
            MeromorphicMap.from_text("z1 * z2", n=1)

    def test_values_in_log_domain(self):
        """Test values of a map that overflows a double"""
        f = MeromorphicMap.from_text("exp(z)")
        Z = np.array([[0.5 + 1.0j]])
        assert f.values(Z)[0] == pytest.approx(cmath.exp(0.5 + 1.0j))
        assert f.log_modulus(Z)[0] == pytest.approx(0.5)

    def test_base_regular(self):
        """Test regularity at the origin"""
        assert MeromorphicMap.from_text("exp(z)").base_regular
        assert not MeromorphicMap.from_text("1/z").base_regular
        assert not MeromorphicMap.from_text("z - 0").base_regular

    def test_a_point_function(self):
        """Test f1 - a f0 and f0 for a = infinity"""
        f = MeromorphicMap.from_text("(z + 1)/(z - 2)")
        g = f.a_point_function(3.0)
        # (z + 1) - 3 (z - 2) vanishes at z = 3.5
        assert evaluate(g, 3.5) == pytest.approx(0.0)
        assert f.a_point_function(None) == f.f0

    def test_shifted(self):
        """Test a shifted map"""
        f = MeromorphicMap.from_text("z^2").shifted([1.0])
        assert f.value(2.0) == pytest.approx(9.0)

    def test_arithmetic(self):
        """Test sums, differences and powers of maps"""
        f = MeromorphicMap.from_text("z")
        g = MeromorphicMap.from_text("1/z")
        assert f.plus(g).value(2.0) == pytest.approx(2.5)
        assert f.power(3).value(2.0) == pytest.approx(8.0)
        assert f.reciprocal().value(4.0) == pytest.approx(0.25)
        assert f.minus(1.0).value(4.0) == pytest.approx(3.0)

    def test_constant_map(self):
        """Test a constant map"""
        assert MeromorphicMap.from_text("3").is_constant
        assert not MeromorphicMap.from_text("exp(z)").is_constant
