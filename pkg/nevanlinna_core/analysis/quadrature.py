"""
Quadrature on Circles, Spheres and Balls

Normalized integrals over the circle of radius r (measure dtheta / 2pi), over
the sphere of radius r in C^n (total measure one, reduced to circle fibers of
radius sqrt(r^2 - |w|^2) over the ball of radius r in C^(n-1)), and over
balls with the measure of total mass r^(2m).

Circle integrals use the nested trapezoid rule, the n = 2 outer ball uses a
tanh-sinh rule in |w|^2 times a trapezoid rule in arg w, and n >= 3 uses
seeded Monte Carlo stratified over |w| shells. Evaluation is chunked with a
fixed chunk shape, so results do not depend on the number of worker threads.

On a single circle, samples that are non-finite or exceed 1e3 times the median
magnitude mark singular angles. Later nodes within jitter_radius of one move by
half a sub-interval, and a circle whose trapezoid sum does not settle is cut at
the singular angles and integrated arc by arc with tanh-sinh.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..errors import NoConvergenceError, PreconditionError

logger = logging.getLogger(__name__)

AngleFn = Callable[[np.ndarray], np.ndarray]
PointFn = Callable[[np.ndarray], np.ndarray]
RadialFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

CHUNK_POINTS = 1 << 16
TANH_SINH_T_MAX = 3.0
JITTER_FRACTIONS = (0.5, 0.25, 0.375)
SINGULAR_FACTOR = 1e3
LOCALIZE_POINTS = 32
LOCALIZE_ROUNDS = 5
MAX_CUTS = 32


class QuadConfig(BaseModel):
    """Quadrature resolution, tolerance and Monte Carlo settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    circle_nodes: int = Field(64, ge=64)
    max_refinement_levels: int = Field(10, ge=1, le=16)
    rel_tol: float = Field(1e-6, gt=0.0)
    jitter_radius: float = Field(1e-6, ge=0.0, le=1e-3)
    mc_samples: int = Field(20000, ge=1)
    rng_seed: int = Field(42, ge=0, lt=2**64)
    stratification_levels: int = Field(16, ge=1)
    ball_angle_nodes: int = Field(16, ge=4)
    ball_max_levels: int = Field(4, ge=1, le=8)
    threads: int = Field(1, ge=1)

    @field_validator("circle_nodes", "ball_angle_nodes")
    @classmethod
    def _quarter_divisible(cls, v: int) -> int:
        if v % 4:
            raise ValueError("node counts must be divisible by 4")
        return v

    @classmethod
    def from_yaml(cls, path: Union[str, Path], **overrides: Any) -> "QuadConfig":
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
        data = dict(data.get("quadrature", data))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class IntegralEstimate:
    """Result of a quadrature together with its error estimate."""

    value: float
    abs_error_estimate: float
    nodes_used: int
    refined: bool
    history: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.abs_error_estimate = abs(self.abs_error_estimate)


def _tolerance(value: float, cfg: QuadConfig) -> float:
    return cfg.rel_tol * max(abs(value), 1.0)


def tanh_sinh_unit(level: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tanh-sinh nodes on (0, 1).

    Returns:
        (t, 1 - t, weights) with the complement computed without cancellation
    """
    h = 0.5 * 2.0**-level
    k_max = int(math.ceil(TANH_SINH_T_MAX / h))
    s = h * np.arange(-k_max, k_max + 1)
    y = 0.5 * np.pi * np.sinh(s)
    t = 1.0 / (np.exp(-2.0 * y) + 1.0)
    gap = 1.0 / (np.exp(2.0 * y) + 1.0)
    weights = 0.5 * h * 0.5 * np.pi * np.cosh(s) / np.cosh(y) ** 2
    return t, gap, weights


def _angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % (2.0 * np.pi)
    return np.minimum(d, 2.0 * np.pi - d)


def singular_mask(values: np.ndarray) -> np.ndarray:
    """Samples that are non-finite or exceed SINGULAR_FACTOR times the median magnitude.

    When more than half the samples vanish (log+ integrands) the mean magnitude
    replaces the median.
    """
    finite = np.isfinite(values)
    mask = ~finite
    magnitudes = np.abs(values[finite])
    if magnitudes.size:
        scale = float(np.median(magnitudes))
        if scale == 0.0:
            scale = float(np.mean(magnitudes))
        if scale > 0.0:
            mask[finite] = magnitudes > SINGULAR_FACTOR * scale
    return mask


class _Sampler:
    """Evaluates integrands on batches of circle fibers in fixed-size chunks.

    With ``track=True`` (single circles) the angles of detected singular samples
    are collected, and later nodes within ``jitter_radius`` of one of them are
    moved by half a sub-interval before evaluation.
    """

    def __init__(self, cfg: QuadConfig, track: bool = False):
        self.cfg = cfg
        self.track = track
        self.singular: List[Tuple[float, float]] = []

    def _map(
        self, fn: Callable[[Tuple[int, int]], np.ndarray], spans: List[Tuple[int, int]]
    ) -> List[np.ndarray]:
        if self.cfg.threads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as executor:
                return list(executor.map(fn, spans))
        return [fn(span) for span in spans]

    def singular_angles(self) -> np.ndarray:
        return np.array([angle for angle, _ in self.singular], dtype=float)

    def sample(
        self,
        point_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        idx: np.ndarray,
        theta: np.ndarray,
        spacing: float,
    ) -> np.ndarray:
        """Evaluate point_fn(fiber index, angle); non-finite samples are moved along the fiber."""
        theta = np.array(theta, dtype=float)
        if self.track and self.singular and self.cfg.jitter_radius > 0.0:
            known = self.singular_angles()
            close = _angular_distance(theta[:, None], known[None, :]).min(axis=1)
            near = close <= self.cfg.jitter_radius
            if np.any(near):
                logger.debug("Moving %d node(s) away from known singularities", near.sum())
                theta[near] += 0.5 * spacing
        with np.errstate(all="ignore"):
            values = np.array(point_fn(idx, theta), dtype=float)
        if self.track:
            flagged = singular_mask(values)
            self.singular.extend((float(a), spacing) for a in theta[flagged])
        bad = ~np.isfinite(values)
        for fraction in JITTER_FRACTIONS:
            if not np.any(bad):
                break
            logger.debug("Jittering %d singular node(s) by %.3g step", bad.sum(), fraction)
            with np.errstate(all="ignore"):
                values[bad] = point_fn(idx[bad], theta[bad] + fraction * spacing)
            bad = ~np.isfinite(values)
        if np.any(bad):
            raise NoConvergenceError(
                f"Integrand not finite at {int(bad.sum())} node(s) after jitter"
            )
        return values

    def fiber_sums(
        self,
        point_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        fibers: int,
        theta: np.ndarray,
        spacing: float,
    ) -> np.ndarray:
        """Per-fiber sums of samples at the given angles."""
        per_chunk = max(1, CHUNK_POINTS // theta.size)
        spans = [(lo, min(lo + per_chunk, fibers)) for lo in range(0, fibers, per_chunk)]

        def run(span: Tuple[int, int]) -> np.ndarray:
            lo, hi = span
            idx = np.repeat(np.arange(lo, hi), theta.size)
            angles = np.tile(theta, hi - lo)
            values = self.sample(point_fn, idx, angles, spacing)
            return values.reshape(hi - lo, theta.size).sum(axis=1)

        return np.concatenate(self._map(run, spans))

    def fiber_means(
        self,
        point_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        weights: np.ndarray,
    ) -> Tuple[np.ndarray, float, int, List[float]]:
        """Nested trapezoid refinement of every fiber mean, stopped on the weighted total.

        Returns:
            (means, error estimate of the weighted total, nodes per fiber, level errors)
        """
        cfg = self.cfg
        fibers = weights.size
        nodes = cfg.circle_nodes
        theta = 2.0 * np.pi * np.arange(nodes) / nodes
        sums = self.fiber_sums(point_fn, fibers, theta, 2.0 * np.pi / nodes)
        total = float(np.sum(weights * sums / nodes))
        history: List[float] = []
        err = math.inf
        for _ in range(cfg.max_refinement_levels):
            theta = (2.0 * np.arange(nodes) + 1.0) * np.pi / nodes
            sums = sums + self.fiber_sums(point_fn, fibers, theta, np.pi / nodes)
            nodes *= 2
            refined_total = float(np.sum(weights * sums / nodes))
            err = abs(refined_total - total)
            total = refined_total
            history.append(err)
            if err <= _tolerance(total, cfg):
                break
        else:
            if err > 10.0 * _tolerance(total, cfg):
                raise NoConvergenceError(
                    f"Trapezoid rule did not converge: change {err:.3e} at {nodes} nodes"
                )
            logger.warning("Trapezoid rule stopped at %d nodes with change %.3e", nodes, err)
        return sums / nodes, err, nodes, history


def _localize(g: AngleFn, angle: float, spacing: float) -> float:
    """Zoom onto the largest |g| within one node spacing of a flagged angle."""
    center, width = angle, spacing
    for _ in range(LOCALIZE_ROUNDS):
        grid = center + np.linspace(-width, width, 2 * LOCALIZE_POINTS + 1)
        with np.errstate(all="ignore"):
            magnitude = np.abs(np.asarray(g(grid), dtype=float))
        magnitude[np.isnan(magnitude)] = np.inf
        center = float(grid[int(np.argmax(magnitude))])
        width /= LOCALIZE_POINTS
    return center % (2.0 * np.pi)


def _cut_angles(g: AngleFn, flagged: List[Tuple[float, float]]) -> np.ndarray:
    cuts: List[float] = []
    for angle, spacing in sorted(flagged, key=lambda item: item[1], reverse=True):
        if any(_angular_distance(np.array(angle), np.array(cut)) <= spacing for cut in cuts):
            continue
        cuts.append(_localize(g, angle, spacing))
        if len(cuts) > MAX_CUTS:
            raise NoConvergenceError(
                f"More than {MAX_CUTS} singular angles; integrand is not log-integrable"
            )
    return np.unique(np.array(cuts))


def _arc_nodes(edges: np.ndarray, level: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tanh-sinh nodes on each arc between consecutive cut angles.

    Returns:
        (angles, half sub-interval steps signed away from the nearest cut, weights)
    """
    t, gap, w = tanh_sinh_unit(level)
    lengths = np.diff(edges)[:, None]
    upper = t > 0.5
    near = np.where(upper, gap, t)
    forward = np.diff(t)
    backward = -np.diff(gap)
    unit_step = np.where(
        upper, np.insert(backward, 0, backward[0]), np.append(forward, forward[-1])
    )
    step = lengths * unit_step[None, :]
    distance = lengths * near[None, :]
    sign = np.where(upper, -1.0, 1.0)[None, :]
    theta = np.where(upper[None, :], edges[1:, None] - distance, edges[:-1, None] + distance)
    weights = lengths * w[None, :] / (2.0 * np.pi)
    return theta.ravel(), (0.5 * sign * step).ravel(), weights.ravel()


def _split_circle_integral(g: AngleFn, cuts: np.ndarray, cfg: QuadConfig) -> IntegralEstimate:
    """Mean of g with tanh-sinh on every arc between singular angles."""
    edges = np.append(cuts, cuts[0] + 2.0 * np.pi)
    previous: Optional[float] = None
    history: List[float] = []
    value = math.nan
    err = math.inf
    nodes = 0
    for level in range(cfg.max_refinement_levels + 1):
        theta, half_step, weights = _arc_nodes(edges, level)
        with np.errstate(all="ignore"):
            values = np.asarray(g(theta), dtype=float)
        for fraction in (1.0, 0.5, 0.75):
            bad = ~np.isfinite(values)
            if not np.any(bad):
                break
            with np.errstate(all="ignore"):
                values[bad] = g(theta[bad] + fraction * half_step[bad])
        if not np.all(np.isfinite(values)):
            raise NoConvergenceError("Integrand not finite next to a singular angle")
        value = float(np.sum(weights * values))
        nodes = theta.size
        if previous is not None:
            err = abs(value - previous)
            history.append(err)
            if err <= _tolerance(value, cfg):
                return IntegralEstimate(value, err, nodes, True, history)
        previous = value
    if err > 10.0 * _tolerance(value, cfg):
        raise NoConvergenceError(f"Split circle rule did not converge: change {err:.3e}")
    logger.warning("Split circle rule stopped at %d nodes with change %.3e", nodes, err)
    return IntegralEstimate(value, err, nodes, True, history)


def circle_integral(g: AngleFn, r: float, cfg: QuadConfig) -> IntegralEstimate:
    """(1/2pi) * integral of g(theta) over [0, 2pi).

    Nested trapezoid first. Samples that are non-finite or larger than
    SINGULAR_FACTOR times the median magnitude mark singular angles; nodes
    within jitter_radius * r of one (an angle of jitter_radius) are moved by half
    a sub-interval. If the trapezoid rule does not settle and singular angles
    were seen, the circle is cut at them and every arc is integrated with
    tanh-sinh, which resolves logarithmic endpoint singularities.

    Args:
        g: vectorized real function of the angle; may blow up logarithmically
        r: radius of the circle the angle parametrizes
        cfg: quadrature configuration

    Returns:
        IntegralEstimate of the normalized mean
    """
    if r <= 0:
        raise PreconditionError(f"Radius must be positive, got {r}")
    sampler = _Sampler(cfg, track=True)
    try:
        means, err, nodes, history = sampler.fiber_means(lambda idx, theta: g(theta), np.ones(1))
    except NoConvergenceError as exc:
        if not sampler.singular:
            raise
        cuts = _cut_angles(g, sampler.singular)
        logger.info("Cutting circle of radius %g at %d singular angle(s): %s", r, cuts.size, exc)
        return _split_circle_integral(g, cuts, cfg)
    return IntegralEstimate(
        value=float(means[0]),
        abs_error_estimate=err,
        nodes_used=nodes,
        refined=nodes > cfg.circle_nodes,
        history=history,
    )


def _fiber_point_fn(
    h: PointFn, w: np.ndarray, p: np.ndarray
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    def point_fn(idx: np.ndarray, theta: np.ndarray) -> np.ndarray:
        last = p[idx] * np.exp(1j * theta)
        Z = np.vstack([w[:, idx], last[None, :]])
        return h(Z)

    return point_fn


def _ball_samples(
    m: int, r: float, cfg: QuadConfig
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stratified uniform samples of the ball of radius r in C^m.

    Returns:
        (points (m, S), r^2 - |w|^2, weights summing to one, stratum label)
    """
    if cfg.mc_samples < 1000:
        raise PreconditionError("mc_samples must be at least 1000 for Monte Carlo integration")
    rng = np.random.default_rng(cfg.rng_seed)
    strata = cfg.stratification_levels
    per = int(math.ceil(cfg.mc_samples / strata))
    total = strata * per
    label = np.repeat(np.arange(strata), per)
    v = (label + rng.random(total)) / strata
    t = v ** (1.0 / m)
    gap = r * r * (1.0 - t)
    gauss = rng.standard_normal((2 * m, total))
    directions = gauss[0::2] + 1j * gauss[1::2]
    directions /= np.sqrt(np.sum(np.abs(directions) ** 2, axis=0))
    points = r * np.sqrt(t) * directions
    return points, gap, np.full(total, 1.0 / total), label


def _stratified_error(values: np.ndarray, label: np.ndarray, strata: int) -> float:
    per = values.size // strata
    grouped = values.reshape(strata, per)
    variances = grouped.var(axis=1, ddof=1) if per > 1 else np.zeros(strata)
    return float(math.sqrt(np.sum(variances / per)) / strata)


def sphere_integral(h: PointFn, n: int, r: float, cfg: QuadConfig) -> IntegralEstimate:
    """Normalized integral of h over the sphere of radius r in C^n.

    Args:
        h: vectorized real function of points Z with shape (n, P)
        n: complex dimension
        r: radius
        cfg: quadrature configuration

    Returns:
        IntegralEstimate; total measure of the sphere is one
    """
    if n < 1:
        raise PreconditionError(f"Dimension must be >= 1, got {n}")
    if r <= 0:
        raise PreconditionError(f"Radius must be positive, got {r}")
    if n == 1:
        return circle_integral(lambda theta: h((r * np.exp(1j * theta))[None, :]), r, cfg)

    sampler = _Sampler(cfg)
    if n >= 3:
        w, gap, weights, label = _ball_samples(n - 1, r, cfg)
        point_fn = _fiber_point_fn(h, w, np.sqrt(gap))
        means, inner_err, nodes, _ = sampler.fiber_means(point_fn, weights)
        value = float(np.sum(weights * means))
        mc_err = _stratified_error(means, label, cfg.stratification_levels)
        logger.debug("Sphere n=%d Monte Carlo: %.12g +/- %.3g", n, value, mc_err)
        return IntegralEstimate(value, mc_err + inner_err, weights.size * nodes, True)

    previous: Optional[float] = None
    history: List[float] = []
    value = math.nan
    err = math.inf
    nodes_used = 0
    for level in range(cfg.ball_max_levels + 1):
        t, gap_t, t_weights = tanh_sinh_unit(level)
        angles = cfg.ball_angle_nodes * 2**level
        phi = 2.0 * np.pi * np.arange(angles) / angles
        w = (r * np.sqrt(t)[:, None] * np.exp(1j * phi)[None, :]).ravel()
        p = np.repeat(r * np.sqrt(gap_t), angles)
        weights = np.repeat(t_weights / angles, angles)
        means, inner_err, nodes, _ = sampler.fiber_means(_fiber_point_fn(h, w[None, :], p), weights)
        value = float(np.sum(weights * means))
        nodes_used = weights.size * nodes
        if previous is not None:
            err = abs(value - previous) + inner_err
            history.append(err)
            if err <= _tolerance(value, cfg):
                return IntegralEstimate(value, err, nodes_used, level > 1, history)
        previous = value
    if err > 10.0 * _tolerance(value, cfg):
        raise NoConvergenceError(f"Fiber integration did not converge: change {err:.3e}")
    return IntegralEstimate(value, err, nodes_used, True, history)


def ball_integral(h: PointFn, m: int, r: float, cfg: QuadConfig) -> IntegralEstimate:
    """Integral of h over the closed ball of radius r in C^m, total measure r^(2m).

    Args:
        h: vectorized real function of points W with shape (m, P)
    """
    if m < 1:
        raise PreconditionError(f"Ball dimension must be >= 1, got {m}")
    if r <= 0:
        raise PreconditionError(f"Radius must be positive, got {r}")
    mass = r ** (2 * m)
    if m >= 2:
        points, _, weights, label = _ball_samples(m, r, cfg)
        values = np.asarray(h(points), dtype=float)
        if not np.all(np.isfinite(values)):
            raise NoConvergenceError("Ball integrand not finite at a Monte Carlo sample")
        value = mass * float(np.sum(weights * values))
        err = mass * _stratified_error(values, label, cfg.stratification_levels)
        return IntegralEstimate(value, err, values.size, True)

    previous: Optional[float] = None
    history: List[float] = []
    value = math.nan
    err = math.inf
    for level in range(cfg.ball_max_levels + 1):
        t, _, t_weights = tanh_sinh_unit(level)
        angles = cfg.ball_angle_nodes * 2**level
        phi = 2.0 * np.pi * np.arange(angles) / angles
        points = (r * np.sqrt(t)[:, None] * np.exp(1j * phi)[None, :]).ravel()
        weights = np.repeat(t_weights / angles, angles)
        values = np.asarray(h(points[None, :]), dtype=float)
        if not np.all(np.isfinite(values)):
            raise NoConvergenceError("Ball integrand not finite at a quadrature node")
        value = mass * float(np.sum(weights * values))
        if previous is not None:
            err = abs(value - previous)
            history.append(err)
            if err <= _tolerance(value, cfg):
                return IntegralEstimate(value, err, points.size, level > 1, history)
        previous = value
    if err > 10.0 * _tolerance(value, cfg):
        raise NoConvergenceError(f"Ball quadrature did not converge: change {err:.3e}")
    return IntegralEstimate(value, err, points.size, True, history)


def radial_ball_integral(g: RadialFn, m: int, r: float, cfg: QuadConfig) -> IntegralEstimate:
    """Ball integral of a radial integrand g(|xi|^2, r^2 - |xi|^2) over the ball of radius r in C^m.

    Reduces to r^(2m) * integral over t in (0, 1) of g(r^2 t, r^2 (1 - t)) m t^(m-1) dt,
    integrated with tanh-sinh so endpoint singularities in the gap stay resolved.
    """
    if m < 1:
        raise PreconditionError(f"Ball dimension must be >= 1, got {m}")
    mass = r ** (2 * m)
    previous: Optional[float] = None
    history: List[float] = []
    value = math.nan
    err = math.inf
    for level in range(cfg.max_refinement_levels + 1):
        t, gap_t, weights = tanh_sinh_unit(level)
        values = np.asarray(g(r * r * t, r * r * gap_t), dtype=float) * m * t ** (m - 1)
        value = mass * float(np.sum(weights * values))
        if previous is not None:
            err = abs(value - previous)
            history.append(err)
            if err <= _tolerance(value, cfg):
                return IntegralEstimate(value, err, t.size, level > 1, history)
        previous = value
    raise NoConvergenceError(f"Radial quadrature did not converge: change {err:.3e}")
