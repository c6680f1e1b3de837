"""
Difference Operators

Builds Delta_c f = f(z + c) - f(z), integrates the logarithmic difference
quotient over spheres and evaluates the explicit finite-radius bounds for it
in one and several variables, the difference second-main-theorem ledger and
the shift-invariance of the characteristic.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..errors import IdenticallyZeroError, NeedsDivisorOracleError, PreconditionError
from .expr import (
    Expr,
    MeromorphicMap,
    evaluate_array,
    is_zero_free,
    mul,
    shift,
    sub,
)
from .nevanlinna import DivisorOracle, NevanlinnaAnalyzer, format_target
from .quadrature import IntegralEstimate, QuadConfig, radial_ball_integral, sphere_integral

logger = logging.getLogger(__name__)


def format_shift(c: Sequence[complex]) -> str:
    return "(" + ", ".join(format_target(complex(v)) for v in c) + ")"


def _as_shift(c: Any, n: int) -> Tuple[complex, ...]:
    if isinstance(c, (int, float, complex)):
        c = [c]
    shift_vector = tuple(complex(v) for v in c)
    if len(shift_vector) != n:
        raise PreconditionError(f"Shift has {len(shift_vector)} components but n = {n}")
    return shift_vector


def _norm(c: Sequence[complex]) -> float:
    return math.sqrt(sum(abs(v) ** 2 for v in c))


class BoundReport(BaseModel):
    """One side-by-side evaluation of an inequality lhs <= rhs."""

    lhs: float
    rhs: float
    params: Dict[str, Any]
    margin: float
    holds: bool
    lhs_err: float = 0.0
    rhs_err: float = 0.0

    @classmethod
    def build(
        cls,
        lhs: float,
        rhs: float,
        params: Dict[str, Any],
        lhs_err: float = 0.0,
        rhs_err: float = 0.0,
    ) -> "BoundReport":
        return cls(
            lhs=lhs,
            rhs=rhs,
            params=params,
            margin=rhs - lhs,
            holds=lhs <= rhs + lhs_err + rhs_err,
            lhs_err=abs(lhs_err),
            rhs_err=abs(rhs_err),
        )


class SmtLedger(BaseModel):
    r: float
    lhs: float
    two_T: float
    n_delta: float
    slack: float
    m_f: float
    m_targets: List[float]
    N_f: float
    N_delta_poles: float
    N_delta_zeros: float
    offset: List[List[float]] = Field(default_factory=list)


class HolderParams(BaseModel):
    delta: float
    q: int
    C: float
    C_closed_form: float


class ShiftRow(BaseModel):
    r: float
    T: float
    T_shift: float
    ratio: Optional[float]
    N_shift: float
    N_bound: float
    counting_holds: bool
    upper: float
    upper_holds: bool


class DecayRow(BaseModel):
    r: float
    proximity: float
    T: float
    scaled: float


@dataclass
class DecayReport:
    rows: List[DecayRow]
    non_increasing: bool


class DifferenceAnalyzer:
    """
    Difference-operator computations on top of a NevanlinnaAnalyzer.

    Args:
        quad: quadrature configuration
        config: merged YAML configuration (sections "difference" and "tolerances")
        nevanlinna: analyzer to share (its divisor cache is reused)
    """

    def __init__(
        self,
        quad: QuadConfig,
        config: Dict[str, Any],
        nevanlinna: Optional[NevanlinnaAnalyzer] = None,
    ):
        self.quad = quad
        self.config = config
        self.nevanlinna = nevanlinna or NevanlinnaAnalyzer(quad, config)
        diff_cfg = config.get("difference", {})
        self.default_delta = float(diff_cfg.get("delta", 0.5))
        self.radius_factor = float(diff_cfg.get("radius_factor", 2.0))
        self.zero_samples = int(diff_cfg.get("zero_samples", 16))
        tolerances = config.get("tolerances", {})
        self.zero_rel = float(tolerances.get("identically_zero_rel", 1e-9))
        self.counting_tol = float(tolerances.get("counting_bound_tol", 1e-6))

    # ------------------------------------------------------------------
    # Operator
    # ------------------------------------------------------------------

    def delta_map(self, f: MeromorphicMap, c: Any) -> MeromorphicMap:
        """Delta_c f as a map: (shift(f1) f0 - f1 shift(f0)) / (shift(f0) f0).

        Raises:
            IdenticallyZeroError: f(z + c) = f(z) on a random grid
        """
        c = _as_shift(c, f.n)
        s0, s1 = shift(f.f0, c), shift(f.f1, c)
        left, right = mul(s1, f.f0), mul(f.f1, s0)
        if self._identically_equal(left, right, f.n):
            raise IdenticallyZeroError(f"{f.label} is periodic with period {format_shift(c)}")
        label = f"Delta_{format_shift(c)} {f.label}"
        return MeromorphicMap(f.n, mul(s0, f.f0), sub(left, right), label)

    def _identically_equal(self, left: Expr, right: Expr, n: int) -> bool:
        rng = np.random.default_rng(self.quad.rng_seed)
        size = (n, self.zero_samples)
        Z = rng.uniform(-1.0, 1.0, size) + 1j * rng.uniform(-1.0, 1.0, size)
        with np.errstate(all="ignore"):
            a = evaluate_array(left, Z)
            b = evaluate_array(right, Z)
        usable = np.isfinite(a) & np.isfinite(b)
        if not np.any(usable):
            return False
        a, b = a[usable], b[usable]
        scale = np.maximum(np.abs(a) + np.abs(b), np.finfo(float).tiny)
        return bool(np.all(np.abs(a - b) <= self.zero_rel * scale))

    def shifted(self, f: MeromorphicMap, c: Any) -> MeromorphicMap:
        c = _as_shift(c, f.n)
        return f.shifted(c, label=f"{f.label} at z + {format_shift(c)}")

    def diff_quotient_proximity(self, f: MeromorphicMap, c: Any, r: float) -> IntegralEstimate:
        """m(r, f(z + c) / f(z)), integrated in the log domain."""
        g = self.shifted(f, c)

        def integrand(Z: np.ndarray) -> np.ndarray:
            with np.errstate(invalid="ignore"):
                return np.maximum(g.log_modulus(Z) - f.log_modulus(Z), 0.0)

        return sphere_integral(integrand, f.n, r, self.quad)

    # ------------------------------------------------------------------
    # Explicit bounds
    # ------------------------------------------------------------------

    def _proximity_pair(self, f: MeromorphicMap, r: float) -> Tuple[float, float]:
        """(m(r, f) + m(r, 1/f), combined error estimate)."""
        at_inf = self.nevanlinna.proximity(f, None, r)
        at_zero = self.nevanlinna.proximity(f, 0.0, r)
        return at_inf.value + at_zero.value, at_inf.abs_error_estimate + at_zero.abs_error_estimate

    def lemma1_bound(
        self,
        f: MeromorphicMap,
        r: float,
        c: Any,
        s: Optional[float] = None,
        delta: Optional[float] = None,
    ) -> BoundReport:
        """Finite-radius bound on m(r, f(z+c)/f(z)) by counts and proximities at radius s."""
        if f.n != 1:
            raise PreconditionError("The one-variable bound needs n = 1")
        c = _as_shift(c, 1)
        h = abs(c[0])
        delta = self.default_delta if delta is None else float(delta)
        s = self.radius_factor * (r + h) if s is None else float(s)
        if not 0.0 < delta < 1.0:
            raise PreconditionError(f"delta must lie in (0, 1), got {delta}")
        if r <= 0 or s <= r + h:
            raise PreconditionError(f"Need r > 0 and s > r + |c|, got r={r}, s={s}, |c|={h}")

        lhs = self.diff_quotient_proximity(f, c, r)
        counts = sum(
            self.nevanlinna.count_points_1d(f, a, s).count
            for a in (None, 0.0)
            if not is_zero_free(f.a_point_function(a))
        )
        proximities, prox_err = self._proximity_pair(f, s)
        count_factor = 8.0 * math.pi * h**delta / (delta * (1.0 - delta) * r**delta)
        prox_factor = (
            4.0 * math.pi * h / ((1.0 - delta) * (s - r - h)) * (s / (s - r)) ** (1.0 - delta)
        )
        rhs = count_factor * counts + prox_factor * proximities
        return BoundReport.build(
            lhs.value,
            rhs,
            {"r": r, "s": s, "delta": delta, "c": format_shift(c), "n": 1, "counts": counts},
            lhs.abs_error_estimate,
            prox_factor * prox_err,
        )

    def holder_params(self, delta: float, n: int) -> HolderParams:
        """Exponent q and constant C of the Hoelder step for dimension n >= 2."""
        if not 0.25 < delta < 1.0:
            raise PreconditionError(f"delta must lie in (1/4, 1), got {delta}")
        if n < 2:
            raise PreconditionError(f"Hoelder constant needs n >= 2, got {n}")
        q = int(math.floor(1.0 / (1.0 - math.sqrt(delta))))
        beta = delta * q / (2.0 * (q - 1))
        m = n - 1
        estimate = radial_ball_integral(lambda u, gap: gap**-beta, m, 1.0, self.quad)
        log_beta = math.lgamma(m) + math.lgamma(1.0 - beta) - math.lgamma(m + 1.0 - beta)
        closed = m * math.exp(log_beta)
        if abs(estimate.value - closed) > 1e-6 * closed:
            logger.warning("Hoelder constant %.12g differs from %.12g", estimate.value, closed)
        return HolderParams(delta=delta, q=q, C=estimate.value, C_closed_form=closed)

    def _counts_nd(
        self, f: MeromorphicMap, R: float, divisor_oracle: Optional[DivisorOracle]
    ) -> float:
        total = 0.0
        for a in (None, 0.0):
            if is_zero_free(f.a_point_function(a)):
                continue
            if divisor_oracle is None:
                raise NeedsDivisorOracleError(
                    f"Counting {format_target(a)}-points of {f.label} in C^{f.n} needs an oracle"
                )
            total += float(divisor_oracle.counting(a, R))
        return total

    def lemma_nd_bound(
        self,
        f: MeromorphicMap,
        r: float,
        j: int,
        c_j: complex,
        R: Optional[float] = None,
        delta: Optional[float] = None,
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> BoundReport:
        """Finite-radius bound on m(r, f(z + c_j e_j)/f(z)) for n >= 2."""
        n = f.n
        if n < 2:
            raise PreconditionError("The several-variable bound needs n >= 2")
        if not 1 <= j <= n:
            raise PreconditionError(f"Coordinate index {j} out of range 1..{n}")
        h = abs(complex(c_j))
        delta = self.default_delta if delta is None else float(delta)
        R = self.radius_factor * (r + h) if R is None else float(R)
        if not (R > r + h > h):
            raise PreconditionError(f"Need R > r + |c_j| > |c_j|, got r={r}, R={R}, |c_j|={h}")
        holder = self.holder_params(delta, n)
        c = tuple(complex(c_j) if k == j else 0j for k in range(1, n + 1))

        counts = self._counts_nd(f, R, divisor_oracle)
        lhs = self.diff_quotient_proximity(f, c, r)
        proximities, prox_err = self._proximity_pair(f, R)
        volume = (R / r) ** (2 * n - 2)
        count_factor = 8.0 * math.pi * h**delta * holder.C / (delta * (1.0 - delta)) * volume
        prox_factor = (
            4.0
            * math.pi
            * h
            / (1.0 - delta)
            * volume
            * (R / (R - (r + h)))
            * (R / (R - r)) ** (1.0 - delta)
            / math.sqrt(R * R - r * r)
        )
        rhs = count_factor * counts / r**delta + prox_factor * proximities
        return BoundReport.build(
            lhs.value,
            rhs,
            {"r": r, "R": R, "delta": delta, "c": format_shift(c), "n": n, "counts": counts},
            lhs.abs_error_estimate,
            prox_factor * prox_err,
        )

    # ------------------------------------------------------------------
    # Second main theorem ledger
    # ------------------------------------------------------------------

    def smt_ledger(
        self,
        f: MeromorphicMap,
        c: Any,
        targets: Sequence[complex],
        r: float,
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> SmtLedger:
        """Terms of m(r,f) + sum m(r,1/(f-a_j)) <= 2T(r,f) - N_Delta(r,f) at one radius."""
        targets = [complex(a) for a in targets]
        if len(targets) < 2:
            raise PreconditionError("Need at least two targets")
        if len(set(targets)) != len(targets):
            raise PreconditionError("Targets must be distinct")
        c = _as_shift(c, f.n)
        nev = self.nevanlinna
        delta_f = self.delta_map(f, c)
        offset = nev.regular_offset([(f, targets), (delta_f, [0.0])])
        if any(offset):
            logger.info("SMT ledger recentered by %s", format_shift(offset))
            f = f.shifted(offset, label=f.label)
            delta_f = self.delta_map(f, c)

        m_f = nev.proximity(f, None, r).value
        m_targets = [nev.proximity(f, a, r).value for a in targets]
        N_f = nev.integrated_counting(f, None, r, divisor_oracle)
        N_poles = nev.integrated_counting(delta_f, None, r)
        N_zeros = nev.integrated_counting(delta_f, 0.0, r)
        two_T = 2.0 * (m_f + N_f)
        lhs = m_f + sum(m_targets)
        n_delta = 2.0 * N_f - N_poles + N_zeros
        return SmtLedger(
            r=r,
            lhs=lhs,
            two_T=two_T,
            n_delta=n_delta,
            slack=two_T - n_delta - lhs,
            m_f=m_f,
            m_targets=m_targets,
            N_f=N_f,
            N_delta_poles=N_poles,
            N_delta_zeros=N_zeros,
            offset=[[v.real, v.imag] for v in offset],
        )

    # ------------------------------------------------------------------
    # Shift invariance and decay
    # ------------------------------------------------------------------

    def shift_characteristic_check(
        self, f: MeromorphicMap, c: Any, r_grid: Sequence[float]
    ) -> List[ShiftRow]:
        """T(r, f(z+c)) against T(r, f), with N(r, f(z+c)) <= N(r+|c|, f) per row."""
        c = _as_shift(c, f.n)
        nev = self.nevanlinna
        moved = self.shifted(f, c)
        offset = nev.regular_offset([(f, []), (moved, [])])
        if any(offset):
            f = f.shifted(offset, label=f.label)
            moved = self.shifted(f, c)
        h = _norm(c)
        rows = []
        for r in r_grid:
            base = nev.characteristic_row(f, r, None)
            row = nev.characteristic_row(moved, r, None)
            bound = nev.integrated_counting(f, None, r + h)
            upper = bound + base.m + self.diff_quotient_proximity(f, c, r).value
            tol = self.counting_tol + row.err + base.err
            rows.append(
                ShiftRow(
                    r=r,
                    T=base.T,
                    T_shift=row.T,
                    ratio=row.T / base.T if base.T > 0 else None,
                    N_shift=row.N,
                    N_bound=bound,
                    counting_holds=row.N <= bound + self.counting_tol,
                    upper=upper,
                    upper_holds=row.T <= upper + tol,
                )
            )
        return rows

    def difference_corollary_check(
        self, f: MeromorphicMap, c: Any, a: complex, r: float
    ) -> BoundReport:
        """m(r, Delta_c f / (f - a)) against m(r, (f(z+c) - a)/(f(z) - a)) + log 2."""
        c = _as_shift(c, f.n)
        s0, s1 = shift(f.f0, c), shift(f.f1, c)
        numerator = sub(mul(s1, f.f0), mul(f.f1, s0))
        quotient = MeromorphicMap(
            f.n, mul(s0, f.a_point_function(a)), numerator, f"Delta f / (f - {format_target(a)})"
        )
        lhs = self.nevanlinna.proximity(quotient, None, r)
        rhs = self.diff_quotient_proximity(f.minus(a), c, r)
        return BoundReport.build(
            lhs.value,
            rhs.value + math.log(2.0),
            {"r": r, "c": format_shift(c), "a": format_target(a), "n": f.n},
            lhs.abs_error_estimate,
            rhs.abs_error_estimate,
        )

    def decay_ratios(
        self, f: MeromorphicMap, c: Any, r_grid: Sequence[float], eps: float = 0.1
    ) -> DecayReport:
        """Rows of m(r, f(z+c)/f(z)) r^(1-eps) / T(r, f) and whether they never increase."""
        rows = []
        errors = []
        for r in r_grid:
            prox = self.diff_quotient_proximity(f, c, r)
            row = self.nevanlinna.characteristic(f, r)
            scaled = prox.value * r ** (1.0 - eps) / row.T
            errors.append((prox.abs_error_estimate * r ** (1.0 - eps) + scaled * row.err) / row.T)
            rows.append(DecayRow(r=r, proximity=prox.value, T=row.T, scaled=scaled))
        non_increasing = all(
            b.scaled <= a.scaled + ea + eb
            for a, b, ea, eb in zip(rows, rows[1:], errors, errors[1:])
        )
        return DecayReport(rows=rows, non_increasing=non_increasing)
