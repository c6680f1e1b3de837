"""
Nevanlinna Functions

Proximity m(r, f), counting n(r, a), integrated counting N(r, a) and the
characteristic T(r, f) = m(r, f) + N(r, f) of a meromorphic map on the sphere
of radius r, together with Jensen and first-main-theorem residuals and growth
order / hyper-order estimators over a radius grid.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..errors import (
    DivisorSearchError,
    InsufficientGrowthError,
    NeedsDivisorOracleError,
    NoConvergenceError,
    PreconditionError,
    WindingAmbiguousError,
)
from .expr import Expr, MeromorphicMap, Target, derivative, is_zero_free, logmag_array
from .quadrature import IntegralEstimate, QuadConfig, circle_integral, sphere_integral
from .roots import Root, RootFinder

logger = logging.getLogger(__name__)

ORIGIN_TOL = 1e-10
NONZERO_LOG = math.log(1e-10)


def format_target(a: Target) -> str:
    if a is None:
        return "inf"
    a = complex(a)
    return f"{a.real:g}" if a.imag == 0 else f"{a.real:g}{a.imag:+g}i"


class DivisorOracle(Protocol):
    """Exact divisor data for maps whose a-points cannot be localized numerically."""

    def counting(self, a: Target, r: float) -> float: ...

    def integrated(self, a: Target, r: float) -> float: ...


@dataclass
class DivisorCount:
    r: float
    a: Target
    count: int
    winding_residual: float


@dataclass
class GrowthEstimate:
    """Fitted growth exponent over the usable rows of a profile."""

    slope: float
    residual: float
    rows_used: int
    raw_slope: Optional[float] = None


class ProfileRow(BaseModel):
    r: float
    m: float
    N: float
    T: float
    err: float = Field(ge=0.0)


class NevanlinnaProfile(BaseModel):
    f_id: str
    target: str = "function itself"
    offset: List[List[float]] = Field(default_factory=list)
    rows: List[ProfileRow]

    def radii(self) -> np.ndarray:
        return np.array([row.r for row in self.rows])

    def characteristic(self) -> np.ndarray:
        return np.array([row.T for row in self.rows])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [row.model_dump() for row in self.rows], columns=["r", "m", "N", "T", "err"]
        )


def radius_grid(rmin: float, rmax: float, points: int, log_grid: bool = True) -> List[float]:
    if not 0 < rmin < rmax or points < 2:
        raise PreconditionError(f"Invalid radius grid [{rmin}, {rmax}] with {points} points")
    grid = np.geomspace(rmin, rmax, points) if log_grid else np.linspace(rmin, rmax, points)
    return [float(r) for r in grid]


class NevanlinnaAnalyzer:
    """
    Computes the Nevanlinna functions of a meromorphic map.

    One-variable counting functions are exact sums over localized a-points
    (verified against the argument principle); in several variables N(r, a)
    comes from Jensen's formula for the entire function f1 - a f0 when f is
    zero-free or pole-free, or from a caller-supplied divisor oracle.
    """

    def __init__(self, quad: QuadConfig, config: Dict[str, Any]):
        self.quad = quad
        self.config = config
        counting = config.get("counting", {})
        self.origin_policy = counting.get("origin_policy", "recenter")
        if self.origin_policy not in ("recenter", "classical"):
            raise PreconditionError(f"Unknown origin policy {self.origin_policy!r}")
        self.recenter_step = float(counting.get("recenter_step", 1.0 / 16.0))
        self.recenter_rings = int(counting.get("recenter_max_rings", 64))
        self.radius_jitter = float(counting.get("radius_jitter", 1e-9))
        self.winding_residual_max = float(counting.get("winding_residual_max", 0.25))
        growth = config.get("growth", {})
        self.min_rows = int(growth.get("min_rows", 8))
        self.hyper_transient = float(growth.get("hyper_transient_log", 3.0))
        self.root_finder = RootFinder(config)
        self._count_quad = quad.model_copy(update={"rel_tol": max(quad.rel_tol, 1e-4)})
        self._divisors: Dict[str, Tuple[float, List[Root]]] = {}

    # ------------------------------------------------------------------
    # Proximity
    # ------------------------------------------------------------------

    @staticmethod
    def _log_modulus_fn(f: MeromorphicMap, a: Target) -> Callable[[np.ndarray], np.ndarray]:
        """Z -> log|f(Z) - a| (log|f| when a is infinity)."""
        g = f.a_point_function(a)

        def fn(Z: np.ndarray) -> np.ndarray:
            with np.errstate(invalid="ignore"):
                return logmag_array(g, Z)[0] - logmag_array(f.f0, Z)[0]

        return fn

    def proximity(self, f: MeromorphicMap, a: Target, r: float) -> IntegralEstimate:
        """m(r, f) for a = None, otherwise m(r, 1/(f - a))."""
        log_mod = self._log_modulus_fn(f, a)
        if a is None:
            integrand = lambda Z: np.maximum(log_mod(Z), 0.0)  # noqa: E731
        else:
            integrand = lambda Z: np.maximum(-log_mod(Z), 0.0)  # noqa: E731
        return sphere_integral(integrand, f.n, r, self.quad)

    def mean_log_modulus(self, f: MeromorphicMap, r: float, a: Target = None) -> IntegralEstimate:
        """Sphere average of log|f - a| (log|f| when a is None)."""
        return sphere_integral(self._log_modulus_fn(f, a), f.n, r, self.quad)

    def mean_log_entire(self, g: Expr, n: int, r: float) -> IntegralEstimate:
        return sphere_integral(lambda Z: logmag_array(g, Z)[0], n, r, self.quad)

    # ------------------------------------------------------------------
    # Counting in one variable
    # ------------------------------------------------------------------

    def _argument_integral(self, g: Expr, dg: Expr, r: float) -> float:
        def integrand(theta: np.ndarray) -> np.ndarray:
            z = r * np.exp(1j * theta)
            lg, pg = logmag_array(g, z[None, :])
            ld, pd_ = logmag_array(dg, z[None, :])
            with np.errstate(all="ignore"):
                return r * np.exp(ld - lg) * np.cos(theta + pd_ - pg)

        return circle_integral(integrand, r, self._count_quad).value

    def _winding_count(self, g: Expr, r: float, a: Target) -> DivisorCount:
        dg = derivative(g, 1)
        radii = (r, r * (1.0 + self.radius_jitter))
        last_error: Optional[Exception] = None
        for radius in radii:
            try:
                value = self._argument_integral(g, dg, radius)
            except NoConvergenceError as exc:
                logger.debug("Argument integral failed at r=%.12g: %s", radius, exc)
                last_error = exc
                continue
            count = int(round(value))
            residual = abs(value - count)
            if residual < self.winding_residual_max and count >= 0:
                return DivisorCount(r=radius, a=a, count=count, winding_residual=residual)
            last_error = WindingAmbiguousError(f"winding residual {residual:.3f}")
        raise WindingAmbiguousError(
            f"Cannot count {format_target(a)}-points on |z| = {r:g}: {last_error}"
        )

    @staticmethod
    def _require_1d(f: MeromorphicMap) -> None:
        if f.n != 1:
            raise PreconditionError(f"Operation requires n = 1, got n = {f.n}")

    def count_points_1d(self, f: MeromorphicMap, a: Target, r: float) -> DivisorCount:
        """n(r, a): number of a-points in |z| < r counted with multiplicity.

        When the argument principle cannot settle at r or r * (1 + radius_jitter),
        an a-point sits on the circle and the located divisor is counted at the
        jittered radius instead.
        """
        self._require_1d(f)
        g = f.a_point_function(a)
        if g.dimension == 0:
            if g.value == 0:
                raise PreconditionError(f"{f.label} is identically {format_target(a)}")
            return DivisorCount(r=r, a=a, count=0, winding_residual=0.0)
        try:
            return self._winding_count(g, r, a)
        except WindingAmbiguousError as exc:
            jittered = r * (1.0 + self.radius_jitter)
            logger.info(
                "Counting %s-points of %s on |z| < %.12g from located divisor: %s",
                format_target(a),
                f.label,
                jittered,
                exc,
            )
            roots = self.divisor_1d(g, jittered)
            count = sum(root.multiplicity for root in roots)
            return DivisorCount(r=jittered, a=a, count=count, winding_residual=0.0)

    def _safe_count(self, g: Expr, r: float) -> DivisorCount:
        """Argument-principle count on the first radius >= r that gives a clean answer."""
        for factor in (1.0 + self.radius_jitter, 1.001, 1.01, 1.05):
            try:
                return self._winding_count(g, r * factor, None)
            except WindingAmbiguousError:
                continue
        raise WindingAmbiguousError(f"No clean counting radius near {r:g}")

    def divisor_1d(self, g: Expr, r: float) -> List[Root]:
        """Zeros of the entire function g in |z| < r with multiplicities (cached per g)."""
        cached = self._divisors.get(g.key)
        if cached is None or cached[0] < r:
            if is_zero_free(g):
                roots: List[Root] = []
                reach = math.inf
            else:
                count = self._safe_count(g, r)
                reach = count.r
                if count.count == 0:
                    roots = []
                else:
                    found = self.root_finder.roots_with_total(
                        g,
                        (-reach, reach, -reach, reach),
                        lambda pts: np.abs(pts) < reach,
                        count.count,
                    )
                    if found is None:
                        raise DivisorSearchError(
                            f"Located zeros of {g.key} disagree with the count {count.count} "
                            f"on |z| < {reach:g}"
                        )
                    roots = found
                logger.debug("Divisor of %s within %.6g: %d point(s)", g.key, reach, len(roots))
            self._divisors[g.key] = (reach, roots)
            cached = (reach, roots)
        return [root for root in cached[1] if abs(root.point) < r]

    def _counting_1d(self, f: MeromorphicMap, a: Target, r: float) -> float:
        g = f.a_point_function(a)
        if g.dimension == 0:
            if g.value == 0:
                raise PreconditionError(f"{f.label} is identically {format_target(a)}")
            return 0.0
        total = 0.0
        at_origin = 0
        for root in self.divisor_1d(g, r):
            if abs(root.point) <= ORIGIN_TOL:
                at_origin += root.multiplicity
            else:
                total += root.multiplicity * math.log(r / abs(root.point))
        if at_origin:
            if self.origin_policy != "classical":
                raise PreconditionError(
                    f"{f.label} takes the value {format_target(a)} at the origin; "
                    "regularize the map or use the classical origin policy"
                )
            total += at_origin * math.log(r)
        return total

    # ------------------------------------------------------------------
    # Integrated counting in any dimension
    # ------------------------------------------------------------------

    def counting_with_error(
        self,
        f: MeromorphicMap,
        a: Target,
        r: float,
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> Tuple[float, float]:
        g = f.a_point_function(a)
        if g.dimension == 0 or is_zero_free(g):
            if g.dimension == 0 and g.value == 0:
                raise PreconditionError(f"{f.label} is identically {format_target(a)}")
            return 0.0, 0.0
        if f.n == 1:
            return self._counting_1d(f, a, r), 0.0
        if divisor_oracle is not None:
            return float(divisor_oracle.integrated(a, r)), 0.0
        if not (is_zero_free(f.f0) or is_zero_free(f.f1)):
            raise NeedsDivisorOracleError(
                f"{f.label} has zeros and poles in C^{f.n}; supply a divisor oracle"
            )
        la0, _ = logmag_array(g, f.origin)
        if not la0[0] > NONZERO_LOG:
            raise PreconditionError(
                f"{f.label} takes the value {format_target(a)} at the origin; regularize first"
            )
        estimate = self.mean_log_entire(g, f.n, r)
        return estimate.value - float(la0[0]), estimate.abs_error_estimate

    def integrated_counting(
        self,
        f: MeromorphicMap,
        a: Target,
        r: float,
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> float:
        """N(r, a) with the base point at the origin (a = None counts poles)."""
        return self.counting_with_error(f, a, r, divisor_oracle)[0]

    # ------------------------------------------------------------------
    # Base-point regularization
    # ------------------------------------------------------------------

    @staticmethod
    def _is_regular_at(f: MeromorphicMap, targets: Sequence[Target], point: np.ndarray) -> bool:
        parts = [f.f0] + [f.a_point_function(a) for a in targets if a is not None]
        for part in parts:
            la, _ = logmag_array(part, point)
            if not (np.isfinite(la[0]) and la[0] > NONZERO_LOG):
                return False
        return True

    def regular_offset(
        self, conditions: Sequence[Tuple[MeromorphicMap, Sequence[Target]]]
    ) -> Tuple[complex, ...]:
        """Smallest grid translation z* making every map regular for its targets at z*."""
        n = conditions[0][0].n
        origin = np.zeros((n, 1), dtype=complex)
        if all(self._is_regular_at(f, t, origin) for f, t in conditions):
            return tuple([0j] * n)
        k = self.recenter_rings
        grid = [complex(x, y) for x in range(-k, k + 1) for y in range(-k, k + 1) if x or y]
        grid.sort(key=lambda w: (abs(w), cmath.phase(w)))
        for w in grid:
            point = np.full((n, 1), w * self.recenter_step, dtype=complex)
            if all(self._is_regular_at(f, t, point) for f, t in conditions):
                return tuple(point[:, 0])
        raise PreconditionError("No regular base point found near the origin")

    def regularize(
        self, f: MeromorphicMap, targets: Sequence[Target]
    ) -> Tuple[MeromorphicMap, Tuple[complex, ...]]:
        """Translate f so that f(0) avoids the targets and infinity (recenter policy)."""
        if self.origin_policy == "classical" and f.n == 1:
            return f, (0j,)
        offset = self.regular_offset([(f, list(targets) + [None])])
        if any(offset):
            logger.info("Recentering %s by %s", f.label, [format_target(c) for c in offset])
            return f.shifted(offset, label=f.label), offset
        return f, offset

    # ------------------------------------------------------------------
    # Characteristic and profiles
    # ------------------------------------------------------------------

    def characteristic(
        self, f: MeromorphicMap, r: float, divisor_oracle: Optional[DivisorOracle] = None
    ) -> ProfileRow:
        """(m, N, T) at radius r, after base-point regularization."""
        f_reg, _ = self.regularize(f, [])
        return self.characteristic_row(f_reg, r, divisor_oracle)

    def characteristic_row(
        self, f: MeromorphicMap, r: float, divisor_oracle: Optional[DivisorOracle]
    ) -> ProfileRow:
        m = self.proximity(f, None, r)
        N, n_err = self.counting_with_error(f, None, r, divisor_oracle)
        return ProfileRow(r=r, m=m.value, N=N, T=m.value + N, err=m.abs_error_estimate + n_err)

    def profile(
        self,
        f: MeromorphicMap,
        r_grid: Sequence[float],
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> NevanlinnaProfile:
        """One characteristic row per radius of an increasing grid."""
        radii = [float(r) for r in r_grid]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise PreconditionError("Radius grid must be strictly increasing")
        f_reg, offset = self.regularize(f, [])
        if f_reg.n == 1 and radii:
            self.divisor_1d(f_reg.a_point_function(None), radii[-1])
        rows = [self.characteristic_row(f_reg, r, divisor_oracle) for r in radii]
        for prev, row in zip(rows, rows[1:]):
            if row.T < prev.T - 2.0 * (row.err + prev.err) - 1e-12:
                logger.warning(
                    "T decreased from %.12g at r=%.6g to %.12g at r=%.6g",
                    prev.T,
                    prev.r,
                    row.T,
                    row.r,
                )
        return NevanlinnaProfile(
            f_id=f.label,
            offset=[[c.real, c.imag] for c in offset],
            rows=rows,
        )

    # ------------------------------------------------------------------
    # Jensen and the first main theorem
    # ------------------------------------------------------------------

    def _log_leading_coefficient(self, f: MeromorphicMap, r: float) -> float:
        """log|c| for f(z) = c z^k + ... at the origin (classical convention)."""
        points = [
            abs(root.point)
            for a in (0.0, None)
            for root in self.divisor_1d(f.a_point_function(a), r)
            if abs(root.point) > ORIGIN_TOL
        ]
        rho = 0.5 * min(points + [r, 1.0])
        k = sum(
            root.multiplicity
            for root in self.divisor_1d(f.f1, r)
            if abs(root.point) <= ORIGIN_TOL
        ) - sum(
            root.multiplicity
            for root in self.divisor_1d(f.f0, r)
            if abs(root.point) <= ORIGIN_TOL
        )
        return self.mean_log_modulus(f, rho).value - k * math.log(rho)

    def _log_base_value(self, f: MeromorphicMap, r: float) -> float:
        """log|f(0)|, or log|c| of the leading term under the classical policy."""
        la, _ = f.logmag(f.origin)
        if np.isfinite(la[0]):
            return float(la[0])
        return self._log_leading_coefficient(f, r)

    def jensen_residual(
        self, f: MeromorphicMap, r: float, divisor_oracle: Optional[DivisorOracle] = None
    ) -> float:
        """|N(r, 1/f) - N(r, f) - mean log|f| + log|f(0)||."""
        f_reg, _ = self.regularize(f, [0.0])
        zeros = self.integrated_counting(f_reg, 0.0, r, divisor_oracle)
        poles = self.integrated_counting(f_reg, None, r, divisor_oracle)
        integral = self.mean_log_modulus(f_reg, r)
        residual = abs(zeros - poles - integral.value + self._log_base_value(f_reg, r))
        logger.debug("Jensen residual of %s at r=%.6g: %.3e", f.label, r, residual)
        return residual

    def fmt_residual(
        self,
        f: MeromorphicMap,
        a: Target,
        r: float,
        divisor_oracle: Optional[DivisorOracle] = None,
    ) -> float:
        """|T(r, f - a) - m(r, 1/(f - a)) - N(r, 1/(f - a)) + log 1/|f(0) - a||.

        For a = None the map f - a is replaced by 1/f, so the residual reads
        |T(r, 1/f) - m(r, f) - N(r, f) + log|f(0)||.
        """
        f_reg, _ = self.regularize(f, [a])
        shifted = f_reg.reciprocal() if a is None else f_reg.minus(a)
        t_shifted = self.proximity(shifted, None, r).value + self.integrated_counting(
            shifted, None, r, divisor_oracle
        )
        m_inv = self.proximity(f_reg, a, r).value
        n_inv = self.integrated_counting(f_reg, a, r, divisor_oracle)
        base = self._log_base_value(shifted, r)
        return abs(t_shifted - m_inv - n_inv - base)

    def fmt_discrepancy(self, f: MeromorphicMap, a: complex, r: float) -> Tuple[float, float]:
        """(|T(r, f - a) - T(r, f)|, log+|a| + log 2)."""
        f_reg, _ = self.regularize(f, [a])
        t_f = self.characteristic_row(f_reg, r, None).T
        t_shifted = self.characteristic_row(f_reg.minus(a), r, None).T
        bound = math.log(2.0) + (max(math.log(abs(a)), 0.0) if a != 0 else 0.0)
        return abs(t_shifted - t_f), bound

    def square_check(self, f: MeromorphicMap, r: float) -> float:
        """T(r, f^2) - 2 T(r, f)."""
        f_reg, _ = self.regularize(f, [])
        return (
            self.characteristic_row(f_reg.power(2), r, None).T
            - 2.0 * self.characteristic_row(f_reg, r, None).T
        )

    # ------------------------------------------------------------------
    # Growth
    # ------------------------------------------------------------------

    def estimate_order(self, profile: NevanlinnaProfile) -> GrowthEstimate:
        """Fit log T = rho log r + kappa log log r + c over the upper half of the usable rows."""
        rows = [row for row in profile.rows if row.T >= 1.0 and row.r > 1.0]
        if len(rows) < self.min_rows:
            raise InsufficientGrowthError(
                f"Need {self.min_rows} rows with T >= 1 and r > 1, got {len(rows)}"
            )
        top = rows[len(rows) // 2 :]
        log_r = np.log([row.r for row in top])
        design = np.column_stack([log_r, np.log(log_r), np.ones_like(log_r)])
        target = np.log([row.T for row in top])
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        fitted = design @ coef
        residual = float(np.sqrt(np.mean((fitted - target) ** 2)))
        return GrowthEstimate(slope=float(coef[0]), residual=residual, rows_used=len(top))

    def estimate_hyper_order(self, profile: NevanlinnaProfile) -> GrowthEstimate:
        """Slope of the log local order d log T / d log r against log r.

        The raw slope of log log T against log r is reported alongside.
        """
        rows = [row for row in profile.rows if row.T >= math.e]
        if len(rows) < self.min_rows:
            raise InsufficientGrowthError(f"Need {self.min_rows} rows with T >= e, got {len(rows)}")
        strong = [row for row in rows if row.T >= math.exp(self.hyper_transient)]
        usable = strong if len(strong) >= 4 else rows
        top = usable[len(usable) // 2 :]
        if len(top) < 3:
            top = usable[-3:]
        log_r = np.log([row.r for row in top])
        log_t = np.log([row.T for row in top])
        raw = float(np.polyfit(log_r, np.log(log_t), 1)[0])
        local = np.diff(log_t) / np.diff(log_r)
        mid = 0.5 * (log_r[1:] + log_r[:-1])
        if np.any(local <= 0.0):
            return GrowthEstimate(slope=0.0, residual=0.0, rows_used=len(top), raw_slope=raw)
        coef = np.polyfit(mid, np.log(local), 1)
        residual = float(np.sqrt(np.mean((np.polyval(coef, mid) - np.log(local)) ** 2)))
        return GrowthEstimate(
            slope=max(float(coef[0]), 0.0), residual=residual, rows_used=len(top), raw_slope=raw
        )
