"""
Applications of the Difference Analogues

Forward invariance of pre-images under a translation, periodicity tests, the
difference Picard dichotomy, degrees of rational functions in u and the
Valiron-Mohon'ko / Riccati degree analysis of difference equations
w(z + c) = R(z, w(z)).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..errors import (
    DegenerateRationalError,
    DivisorSearchError,
    InsufficientGrowthError,
    NotASolutionError,
    PreconditionError,
    WindingAmbiguousError,
)
from .expr import (
    Expr,
    MeromorphicMap,
    Target,
    add,
    const,
    derivative,
    evaluate_array,
    mul,
    parse_expr,
    polynomial_coefficients,
    power,
    to_fraction,
    vanishes_identically,
)
from .nevanlinna import NevanlinnaAnalyzer, format_target, radius_grid
from .quadrature import QuadConfig
from .roots import Box, RootFinder, rectangle_winding

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    CONSISTENT = "CONSISTENT"
    GROWTH_ESCAPE = "GROWTH_ESCAPE"
    CONTRADICTION = "CONTRADICTION"
    INCONSISTENT = "INCONSISTENT"


# ---------------------------------------------------------------------------
# Rational functions in u
# ---------------------------------------------------------------------------


def _trim(coefficients: Sequence[Expr], n: int) -> Tuple[Expr, ...]:
    """Drop identically vanishing leading coefficients."""
    coeffs = list(coefficients)
    while len(coeffs) > 1 and vanishes_identically(coeffs[-1], n):
        coeffs.pop()
    return tuple(coeffs)


def _sylvester(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Sylvester matrix of two coefficient vectors given highest degree first."""
    dp, dq = len(p) - 1, len(q) - 1
    size = dp + dq
    matrix = np.zeros((size, size), dtype=complex)
    for i in range(dq):
        matrix[i, i : i + dp + 1] = p
    for i in range(dp):
        matrix[dq + i, i : i + dq + 1] = q
    return matrix


@dataclass(frozen=True)
class RationalInU:
    """R(z, u) = P(z, u) / Q(z, u) with coefficients (lowest degree first) entire in z."""

    n: int
    numerator: Tuple[Expr, ...]
    denominator: Tuple[Expr, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "numerator", _trim(self.numerator, self.n))
        object.__setattr__(self, "denominator", _trim(self.denominator, self.n))
        if all(vanishes_identically(b, self.n) for b in self.denominator):
            name = self.label or "R"
            raise DegenerateRationalError(f"Denominator of {name} vanishes identically")
        for coeff in self.numerator + self.denominator:
            if coeff.dimension > self.n:
                raise PreconditionError(f"Coefficient {coeff.key} depends on u or on z beyond n")

    @classmethod
    def from_text(cls, text: str, n: int = 1) -> "RationalInU":
        """Parse R from text in z1..zn and the variable u."""
        u_index = n + 1
        num, den = to_fraction(parse_expr(text, n, extra={"u": u_index}))
        return cls(
            n=n,
            numerator=tuple(polynomial_coefficients(num, u_index)),
            denominator=tuple(polynomial_coefficients(den, u_index)),
            label=text,
        )

    @property
    def degrees(self) -> Tuple[int, int]:
        return len(self.numerator) - 1, len(self.denominator) - 1

    @property
    def coefficients(self) -> Tuple[Expr, ...]:
        return self.numerator + self.denominator

    def coefficient_values(self, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Coefficient arrays of shape (degree + 1, M), lowest degree first."""
        p = np.array([np.broadcast_to(evaluate_array(a, Z), Z.shape[1]) for a in self.numerator])
        q = np.array([np.broadcast_to(evaluate_array(b, Z), Z.shape[1]) for b in self.denominator])
        return p, q

    def evaluate(self, Z: np.ndarray, u: np.ndarray) -> np.ndarray:
        p, q = self.coefficient_values(Z)
        with np.errstate(all="ignore"):
            top = np.zeros(u.shape, dtype=complex)
            for row in p[::-1]:
                top = top * u + row
            bottom = np.zeros(u.shape, dtype=complex)
            for row in q[::-1]:
                bottom = bottom * u + row
            return top / bottom

    def gcd_degree(self, samples: int = 3, seed: int = 7) -> int:
        """Degree in u of gcd(P, Q) at generic z, from the rank of the Sylvester matrix."""
        dp, dq = self.degrees
        if dp == 0 or dq == 0:
            return 0
        rng = np.random.default_rng(seed)
        size = (self.n, samples)
        Z = rng.uniform(-1.0, 1.0, size) + 1j * rng.uniform(-1.0, 1.0, size)
        p, q = self.coefficient_values(Z)
        best = 0
        for k in range(samples):
            matrix = _sylvester(p[::-1, k], q[::-1, k])
            singular = np.linalg.svd(matrix, compute_uv=False)
            rank = int(np.sum(singular > 1e-9 * singular[0]))
            best = max(best, rank)
        return dp + dq - best

    def is_reduced(self) -> bool:
        return self.gcd_degree() == 0

    def compose(self, f: MeromorphicMap) -> MeromorphicMap:
        """R(z, f(z)) as a map, homogenized with powers of f0."""
        if f.n != self.n:
            raise PreconditionError(f"R is declared for n = {self.n}, f has n = {f.n}")
        d = max(self.degrees)

        def homogenize(coeffs: Sequence[Expr]) -> Expr:
            total = const(0)
            for k, a in enumerate(coeffs):
                total = add(total, mul(a, mul(power(f.f1, k), power(f.f0, d - k))))
            return total

        return MeromorphicMap(
            f.n,
            homogenize(self.denominator),
            homogenize(self.numerator),
            f"R({self.label}) of {f.label}",
        )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


class PreimagePoint(BaseModel):
    re: float
    im: float
    multiplicity: int = Field(ge=1)
    residual: float

    @property
    def point(self) -> complex:
        return complex(self.re, self.im)


class InvarianceReport(BaseModel):
    target: str
    shift: str
    region: str
    points: List[PreimagePoint]
    forward_hits: List[bool]
    violations: List[PreimagePoint]

    @property
    def invariant(self) -> bool:
        return not self.violations


class PicardVerdict(BaseModel):
    verdict: Verdict
    shift: str
    targets: List[str]
    all_invariant: bool
    periodic: bool
    max_dev: float
    hyper_order: Optional[float]
    threshold: float
    reports: List[InvarianceReport]


class ValironRow(BaseModel):
    r: float
    T_composite: float
    T_f: float
    degree: int
    ratio: Optional[float]
    coefficient_T: float


class AdmissibilityRow(BaseModel):
    r: float
    T_w: float
    coefficient_T: float
    ratio: Optional[float]


class RiccatiReport(BaseModel):
    degree: int
    residual: float
    admissibility_ratio: Optional[float]
    admissible: bool
    hyper_order: Optional[float]
    verdict: Verdict
    rows: List[AdmissibilityRow]


@dataclass
class _Preimages:
    g: Expr
    box: Box
    points: List[PreimagePoint] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Analyzer
# ---------------------------------------------------------------------------


class ApplicationsAnalyzer:
    """
    Picard-type invariance checks and degree analysis for difference equations.

    Args:
        quad: quadrature configuration
        config: merged YAML configuration ("applications", "growth", "tolerances", "roots")
        nevanlinna: analyzer to share
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
        self.root_finder = RootFinder(config)
        apps = config.get("applications", {})
        self.admissibility_ratio = float(apps.get("admissibility_ratio", 0.1))
        self.residual_samples = int(apps.get("residual_samples", 100))
        self.periodicity_samples = int(apps.get("periodicity_samples", 100))
        self.box_jitter = float(apps.get("box_jitter", 1e-7))
        self.forward_tol = float(apps.get("forward_tol", 1e-6))
        grid = apps.get("hyper_grid", {})
        self.hyper_grid = radius_grid(
            float(grid.get("rmin", 3.0)), float(grid.get("rmax", 20.0)), int(grid.get("points", 16))
        )
        tolerances = config.get("tolerances", {})
        self.periodicity_max_dev = float(tolerances.get("periodicity_max_dev", 1e-9))
        self.solution_residual_max = float(tolerances.get("solution_residual_max", 1e-8))
        growth = config.get("growth", {})
        self.hyper_threshold = float(growth.get("hyper_order_threshold", 2.0 / 3.0))

    def _rng(self) -> np.random.Generator:
        return np.random.default_rng(self.quad.rng_seed)

    # ------------------------------------------------------------------
    # Pre-images and forward invariance
    # ------------------------------------------------------------------

    def find_preimages_1d(self, f: MeromorphicMap, a: Target, box: Box) -> List[PreimagePoint]:
        """a-points of f inside the box with multiplicities, certified by the boundary winding."""
        return self._preimages(f, a, box).points

    def _preimages(self, f: MeromorphicMap, a: Target, box: Box) -> _Preimages:
        if f.n != 1:
            raise PreconditionError(f"Pre-image search needs n = 1, got n = {f.n}")
        g = f.a_point_function(a)
        if g.is_const:
            if g.value == 0:
                raise PreconditionError(f"{f.label} is identically {format_target(a)}")
            return _Preimages(g, box)

        used = box
        expected: Optional[int] = None
        for attempt in range(1, 4):
            try:
                expected = rectangle_winding(g, used)
                break
            except WindingAmbiguousError as exc:
                used = box.grown(self.box_jitter * attempt * max(1.0, box.size))
                logger.info("Boundary of %s jittered: %s", box.describe(), exc)
        if expected is None:
            raise WindingAmbiguousError(f"Boundary winding unresolved for {box.describe()}")
        if expected == 0:
            return _Preimages(g, used)

        stalled = self.root_finder.stalled
        roots = self.root_finder.roots_with_total(
            g, (used.re_min, used.re_max, used.im_min, used.im_max), used.contains, expected
        )
        if self.root_finder.stalled > stalled:
            logger.debug("%d Newton seeds stalled", self.root_finder.stalled - stalled)
        if roots is None:
            raise DivisorSearchError(
                f"{format_target(a)}-points of {f.label} in {used.describe()} do not add up "
                f"to the boundary winding {expected}"
            )
        points = [
            PreimagePoint(
                re=root.point.real,
                im=root.point.imag,
                multiplicity=root.multiplicity,
                residual=root.residual,
            )
            for root in roots
        ]
        return _Preimages(g, used, points)

    def forward_invariance_check(
        self, f: MeromorphicMap, c: complex, a: Target, box: Box
    ) -> InvarianceReport:
        """Whether z0 + c is an a-point of at least the same multiplicity for every a-point z0."""
        c = complex(c)
        found = self._preimages(f, a, box)
        g = found.g
        dg = derivative(g, 1)
        hits: List[bool] = []
        violations: List[PreimagePoint] = []
        for point in found.points:
            start = point.point + c
            polished, accepted = self.root_finder.newton(g, dg, np.array([start]))
            moved = abs(polished[0] - start)
            hit = bool(accepted[0]) and moved <= self.forward_tol * max(1.0, abs(start))
            if hit:
                order = self.root_finder.multiplicity(g, complex(polished[0]), [])
                hit = order >= point.multiplicity
            hits.append(hit)
            if not hit:
                violations.append(point)
        report = InvarianceReport(
            target=format_target(a),
            shift=format_target(c),
            region=found.box.describe(),
            points=found.points,
            forward_hits=hits,
            violations=violations,
        )
        logger.info(
            "Forward invariance of %s-points under z + %s: %d of %d",
            report.target,
            report.shift,
            sum(hits),
            len(hits),
        )
        return report

    def periodicity_test(
        self, f: MeromorphicMap, c: Any, samples: Optional[int] = None
    ) -> Tuple[bool, float]:
        """(is_periodic, max |f(z + c) - f(z)|) over seeded random points with |Re|, |Im| <= 1."""
        shift_vector = [complex(c)] if np.isscalar(c) else [complex(v) for v in c]
        count = samples or self.periodicity_samples
        rng = self._rng()
        Z = rng.uniform(-1.0, 1.0, (f.n, count)) + 1j * rng.uniform(-1.0, 1.0, (f.n, count))
        moved = f.shifted(shift_vector)
        la, pa = f.logmag(Z)
        lb, pb = moved.logmag(Z)
        usable = np.isfinite(la) & np.isfinite(lb)
        if not np.any(usable):
            raise PreconditionError("No sample point is regular for f and its translate")
        la, pa, lb, pb = la[usable], pa[usable], lb[usable], pb[usable]
        top = np.maximum(la, lb)
        with np.errstate(all="ignore"):
            rest = np.exp(np.minimum(la, lb) - top)
            turn = np.where(la >= lb, pb - pa, pa - pb)
            log_dev = top + np.log(np.abs(1.0 - rest * np.exp(1j * turn)))
        max_log = float(np.max(log_dev))
        max_dev = math.exp(min(max_log, 700.0))
        return max_dev < self.periodicity_max_dev, max_dev

    def _hyper_order(self, f: MeromorphicMap, r_grid: Optional[Sequence[float]]) -> Optional[float]:
        profile = self.nevanlinna.profile(f, self.hyper_grid if r_grid is None else r_grid)
        try:
            return self.nevanlinna.estimate_hyper_order(profile).slope
        except InsufficientGrowthError as exc:
            logger.info("Hyper-order of %s not estimated: %s", f.label, exc)
            return None

    def picard_verdict(
        self,
        f: MeromorphicMap,
        c: complex,
        targets: Sequence[Target],
        box: Box,
        r_grid: Optional[Sequence[float]] = None,
    ) -> PicardVerdict:
        """Difference Picard dichotomy on a bounded region.

        Three values with forward invariant pre-images force periodicity when the
        hyper-order is below the threshold; otherwise growth must escape it.
        """
        if len(targets) != 3 or len(set(targets)) != 3:
            raise PreconditionError("Picard verdict needs three distinct targets")
        reports = [self.forward_invariance_check(f, c, a, box) for a in targets]
        all_invariant = all(report.invariant for report in reports)
        periodic, max_dev = self.periodicity_test(f, c)
        hyper = self._hyper_order(f, r_grid)
        slow = hyper is None or hyper < self.hyper_threshold
        if not all_invariant or periodic:
            verdict = Verdict.CONSISTENT
        elif slow:
            verdict = Verdict.CONTRADICTION
        else:
            verdict = Verdict.GROWTH_ESCAPE
        logger.info("Picard verdict for %s: %s", f.label, verdict.value)
        return PicardVerdict(
            verdict=verdict,
            shift=format_target(complex(c)),
            targets=[format_target(a) for a in targets],
            all_invariant=all_invariant,
            periodic=periodic,
            max_dev=max_dev,
            hyper_order=hyper,
            threshold=self.hyper_threshold,
            reports=reports,
        )

    # ------------------------------------------------------------------
    # Degrees and difference equations
    # ------------------------------------------------------------------

    @staticmethod
    def degree_in_u(R: RationalInU) -> int:
        """max(deg P, deg Q) after cancelling the common factor of P and Q."""
        dp, dq = R.degrees
        return max(dp, dq) - R.gcd_degree()

    def coefficient_characteristic(self, R: RationalInU, r: float) -> float:
        """max_j T(r, a_j) over the coefficients of R."""
        best = 0.0
        for coeff in R.coefficients:
            if coeff.is_const:
                value = max(math.log(abs(coeff.value)), 0.0) if coeff.value != 0 else 0.0
            else:
                value = self.nevanlinna.characteristic(MeromorphicMap(R.n, const(1), coeff), r).T
            best = max(best, value)
        return best

    def valiron_mohonko_check(
        self, R: RationalInU, f: MeromorphicMap, r_grid: Sequence[float]
    ) -> List[ValironRow]:
        """Rows of T(r, R(z, f)) / (deg T(r, f)) with the coefficient growth alongside."""
        if f.is_constant:
            raise PreconditionError("f must be non-constant")
        degree = self.degree_in_u(R)
        if degree == 0:
            raise PreconditionError(f"{R.label} does not depend on u")
        composite = R.compose(f)
        rows = []
        for r in r_grid:
            t_f = self.nevanlinna.characteristic(f, r).T
            t_comp = self.nevanlinna.characteristic(composite, r).T
            rows.append(
                ValironRow(
                    r=r,
                    T_composite=t_comp,
                    T_f=t_f,
                    degree=degree,
                    ratio=t_comp / (degree * t_f) if t_f > 0 else None,
                    coefficient_T=self.coefficient_characteristic(R, r),
                )
            )
        return rows

    def solution_residual(self, R: RationalInU, w: MeromorphicMap, c: Any) -> float:
        """max relative |w(z + c) - R(z, w(z))| over seeded random points."""
        shift_vector = [complex(c)] if np.isscalar(c) else [complex(v) for v in c]
        rng = self._rng()
        size = (w.n, self.residual_samples)
        Z = rng.uniform(-1.0, 1.0, size) + 1j * rng.uniform(-1.0, 1.0, size)
        lhs = w.shifted(shift_vector).values(Z)
        rhs = R.evaluate(Z, w.values(Z))
        usable = np.isfinite(lhs) & np.isfinite(rhs)
        if not np.any(usable):
            raise PreconditionError("No sample point is regular for the equation")
        diff = np.abs(lhs[usable] - rhs[usable]) / np.maximum(1.0, np.abs(lhs[usable]))
        return float(np.max(diff))

    def riccati_analysis(
        self,
        R: RationalInU,
        w: MeromorphicMap,
        c: Any,
        r_grid: Sequence[float],
    ) -> RiccatiReport:
        """Degree analysis of w(z + c) = R(z, w(z)).

        Raises:
            NotASolutionError: the residual on the sample grid exceeds the tolerance
        """
        residual = self.solution_residual(R, w, c)
        if residual > self.solution_residual_max:
            raise NotASolutionError(
                f"{w.label} does not solve w(z + c) = {R.label}: residual {residual:.3e}"
            )
        degree = self.degree_in_u(R)
        rows = []
        for r in r_grid:
            t_w = self.nevanlinna.characteristic(w, r).T
            t_coeff = self.coefficient_characteristic(R, r)
            ratio = t_coeff / t_w if t_w > 0 else None
            rows.append(AdmissibilityRow(r=r, T_w=t_w, coefficient_T=t_coeff, ratio=ratio))
        final_ratio = rows[-1].ratio if rows else None
        admissible = final_ratio is not None and final_ratio < self.admissibility_ratio
        hyper = self._hyper_order(w, r_grid)
        slow = hyper is None or hyper < self.hyper_threshold
        consistent = not (admissible and slow and degree != 1)
        verdict = Verdict.CONSISTENT if consistent else Verdict.INCONSISTENT
        return RiccatiReport(
            degree=degree,
            residual=residual,
            admissibility_ratio=final_ratio,
            admissible=admissible,
            hyper_order=hyper,
            verdict=verdict,
            rows=rows,
        )
