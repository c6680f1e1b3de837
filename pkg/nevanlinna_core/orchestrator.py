"""
Nevanlinna Lab Orchestrator
Builds the analyzers from YAML configuration and runs the command-line surface
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape

from nevanlinna_core.analysis.applications import ApplicationsAnalyzer, RationalInU
from nevanlinna_core.analysis.difference import DifferenceAnalyzer
from nevanlinna_core.analysis.expr import MeromorphicMap, Target, parse_expr
from nevanlinna_core.analysis.nevanlinna import NevanlinnaAnalyzer, format_target, radius_grid
from nevanlinna_core.analysis.quadrature import QuadConfig
from nevanlinna_core.analysis.reporting import ReportWriter, models_to_frame, render_table
from nevanlinna_core.analysis.roots import Box
from nevanlinna_core.errors import InputError, NevanlinnaError, NumericError, PreconditionError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4

VERIFY_CHECKS = ("jensen", "fmt", "lemma1", "lemma-nd", "smt", "shift-T")


def parse_value(text: str) -> Target:
    """A constant such as '2', '-0.5+1i', 'pi' or 'inf'."""
    text = text.strip()
    if text.lower() in ("inf", "infinity", "oo"):
        return None
    value = parse_expr(text)
    if not value.is_const:
        raise InputError(f"Expected a constant, got {text!r}")
    return value.value


def parse_values(text: str) -> List[Target]:
    return [parse_value(part) for part in text.split(",") if part.strip()]


class RunSpec(BaseModel):
    """Validated command-line request."""

    model_config = ConfigDict(extra="forbid")

    command: Literal["profile", "verify", "picard", "riccati", "hyper-order"]
    check: Optional[str] = None
    f: Optional[str] = None
    f0: Optional[str] = None
    f1: Optional[str] = None
    n: int = Field(1, ge=1)
    c: str = "1"
    targets: Optional[str] = None
    rmin: float = Field(1.0, gt=0.0)
    rmax: float = Field(50.0, gt=0.0)
    rpoints: int = Field(32, ge=2)
    log_grid: bool = True
    delta: Optional[float] = None
    outer: Optional[float] = None
    j: int = Field(1, ge=1)
    R: Optional[str] = None
    box: Optional[str] = None
    origin: Optional[Literal["recenter", "classical"]] = None
    seed: int = Field(42, ge=0, lt=2**64)
    tol: Optional[float] = Field(None, gt=0.0)
    threads: int = Field(1, ge=1)
    out: Optional[Path] = None
    format: Literal["csv", "json", "svg"] = "csv"

    @model_validator(mode="after")
    def _check(self) -> "RunSpec":
        if self.rmin >= self.rmax:
            raise ValueError(f"rmin ({self.rmin}) must be below rmax ({self.rmax})")
        if self.f is None and (self.f0 is None or self.f1 is None):
            raise ValueError("give --f, or both --f0 and --f1")
        if self.command == "verify" and self.check not in VERIFY_CHECKS:
            raise ValueError(f"verify needs one of {', '.join(VERIFY_CHECKS)}")
        return self

    @property
    def label(self) -> str:
        return f"{self.command} {self.check}" if self.check else self.command

    def grid(self) -> List[float]:
        return radius_grid(self.rmin, self.rmax, self.rpoints, self.log_grid)

    def shift(self) -> List[complex]:
        values = parse_values(self.c)
        if any(v is None for v in values):
            raise InputError("Shift components must be finite")
        return [complex(v) for v in values if v is not None]

    def target_list(self, default: Sequence[Target] = ()) -> List[Target]:
        return parse_values(self.targets) if self.targets else list(default)


class ResidualRow(BaseModel):
    r: float
    target: str
    residual: float
    tolerance: float
    holds: bool

    @classmethod
    def check(cls, r: float, target: str, residual: float, tolerance: float) -> "ResidualRow":
        return cls(
            r=r, target=target, residual=residual, tolerance=tolerance, holds=residual <= tolerance
        )


class GrowthRow(BaseModel):
    order: Optional[float]
    order_residual: Optional[float]
    hyper_order: Optional[float]
    hyper_residual: Optional[float]
    raw_log_log_slope: Optional[float]
    rows_used: int


class NevanlinnaOrchestrator:
    """
    Coordinates the analysis modules

    Module Flow:
    expr -> quadrature -> nevanlinna -> difference / applications -> reporting
    """

    def __init__(
        self,
        config_dir: Path | None = None,
        quad_overrides: Optional[Dict[str, Any]] = None,
        counting_overrides: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize orchestrator with configuration

        Args:
            config_dir: Path to config directory (defaults to nevanlinna_core/configs)
            quad_overrides: QuadConfig fields taking precedence over quadrature.yml
            counting_overrides: entries merged into the "counting" section
        """
        if config_dir is None:
            config_dir = Path(__file__).parent / "configs"

        self.config = self._load_config(config_dir)
        if counting_overrides:
            self.config["counting"] = {**self.config.get("counting", {}), **counting_overrides}
        quad_values = dict(self.config.get("quadrature", {}))
        quad_values.update({k: v for k, v in (quad_overrides or {}).items() if v is not None})
        self.quad = QuadConfig(**quad_values)
        self._initialize_analyzers()

    def _load_config(self, config_dir: Path) -> Dict[str, Any]:
        """Load configuration files"""
        with open(config_dir / "thresholds.yml") as f:
            thresholds = yaml.safe_load(f) or {}

        with open(config_dir / "quadrature.yml") as f:
            quadrature = yaml.safe_load(f) or {}

        return {**thresholds, "quadrature": quadrature.get("quadrature", {})}

    def _initialize_analyzers(self) -> None:
        """Initialize the analyzers; difference and applications share the divisor cache"""
        self.nevanlinna = NevanlinnaAnalyzer(self.quad, self.config)
        self.difference = DifferenceAnalyzer(self.quad, self.config, self.nevanlinna)
        self.applications = ApplicationsAnalyzer(self.quad, self.config, self.nevanlinna)

    def default_grid(self) -> Dict[str, Any]:
        """Radius grid used when the CLI leaves --rmin, --rmax, --rpoints or the spacing unset"""
        grid = self.config.get("reporting", {}).get("default_grid", {})
        return {
            "rmin": float(grid.get("rmin", 1.0)),
            "rmax": float(grid.get("rmax", 50.0)),
            "rpoints": int(grid.get("points", 32)),
            "log_grid": bool(grid.get("log_grid", True)),
        }

    @property
    def residual_tolerance(self) -> float:
        return float(self.config.get("tolerances", {}).get("jensen_residual_max", 1e-5))

    def echo_config(self) -> Dict[str, Any]:
        """Configuration echoed into reports; the worker cap is left out."""
        quad = self.quad.model_dump(exclude={"threads"})
        return {**{k: v for k, v in self.config.items() if k != "quadrature"}, "quadrature": quad}

    @staticmethod
    def build_map(spec: RunSpec) -> MeromorphicMap:
        if spec.f is not None:
            return MeromorphicMap.from_text(spec.f, spec.n)
        assert spec.f0 is not None and spec.f1 is not None
        return MeromorphicMap.from_pair(spec.f0, spec.f1, spec.n)

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------

    def run_profile(self, spec: RunSpec) -> Tuple[List[BaseModel], Dict[str, List[float]]]:
        f = self.build_map(spec)
        profile = self.nevanlinna.profile(f, spec.grid())
        if profile.offset and any(v != 0 for pair in profile.offset for v in pair):
            logger.info("Profile base point moved to %s", profile.offset)
        series = {"T(r)": [row.T for row in profile.rows], "m(r)": [row.m for row in profile.rows]}
        return list(profile.rows), series

    def run_verify(self, spec: RunSpec) -> Tuple[List[BaseModel], bool, Dict[str, List[float]]]:
        """One report per grid radius.

        Returns:
            (rows, failed, plot series); failed marks a hard inequality or residual violation
        """
        f = self.build_map(spec)
        check = spec.check
        tol = self.residual_tolerance
        rows: List[BaseModel] = []
        failed = False

        if check == "jensen":
            for r in spec.grid():
                residual = self.nevanlinna.jensen_residual(f, r)
                rows.append(ResidualRow.check(r, "0", residual, tol))
        elif check == "fmt":
            for a in spec.target_list([0.0]):
                for r in spec.grid():
                    residual = self.nevanlinna.fmt_residual(f, a, r)
                    rows.append(ResidualRow.check(r, format_target(a), residual, tol))
        elif check == "lemma1":
            c = spec.shift()
            for r in spec.grid():
                rows.append(self.difference.lemma1_bound(f, r, c, s=spec.outer, delta=spec.delta))
        elif check == "lemma-nd":
            c_j = spec.shift()[0]
            bound = self.difference.lemma_nd_bound
            for r in spec.grid():
                rows.append(bound(f, r, spec.j, c_j, R=spec.outer, delta=spec.delta))
        elif check == "smt":
            c = spec.shift()
            targets = [a for a in spec.target_list() if a is not None]
            for r in spec.grid():
                rows.append(self.difference.smt_ledger(f, c, targets, r))
        else:
            rows.extend(self.difference.shift_characteristic_check(f, spec.shift(), spec.grid()))

        if check in ("jensen", "fmt", "lemma1", "lemma-nd"):
            failed = not all(row.model_dump()["holds"] for row in rows)
        series = self._verify_series(check, rows)
        return rows, failed, series

    @staticmethod
    def _verify_series(check: Optional[str], rows: Sequence[BaseModel]) -> Dict[str, List[float]]:
        dumps = [row.model_dump() for row in rows]
        if check in ("jensen", "fmt"):
            return {"residual": [d["residual"] for d in dumps]}
        if check in ("lemma1", "lemma-nd"):
            return {"lhs": [d["lhs"] for d in dumps], "rhs": [d["rhs"] for d in dumps]}
        if check == "smt":
            return {"slack": [d["slack"] for d in dumps]}
        return {"ratio": [d["ratio"] for d in dumps]}

    def run_picard(self, spec: RunSpec) -> List[BaseModel]:
        f = self.build_map(spec)
        targets = spec.target_list()
        if len(targets) != 3:
            raise PreconditionError("picard needs exactly three --targets")
        box = Box.parse(spec.box) if spec.box else Box(-4.0, 4.0, -4.0, 4.0)
        verdict = self.applications.picard_verdict(f, spec.shift()[0], targets, box)
        return [verdict]

    def run_riccati(self, spec: RunSpec) -> List[BaseModel]:
        if spec.R is None:
            raise PreconditionError("riccati needs --R, a rational function of z and u")
        w = self.build_map(spec)
        R = RationalInU.from_text(spec.R, spec.n)
        c = spec.shift()
        return [self.applications.riccati_analysis(R, w, c if spec.n > 1 else c[0], spec.grid())]

    def run_hyper_order(self, spec: RunSpec) -> List[BaseModel]:
        f = self.build_map(spec)
        profile = self.nevanlinna.profile(f, spec.grid())
        order = self.nevanlinna.estimate_order(profile)
        hyper = self.nevanlinna.estimate_hyper_order(profile)
        return [
            GrowthRow(
                order=order.slope,
                order_residual=order.residual,
                hyper_order=hyper.slope,
                hyper_residual=hyper.residual,
                raw_log_log_slope=hyper.raw_slope,
                rows_used=hyper.rows_used,
            )
        ]

    def run(self, spec: RunSpec, console: Console) -> int:
        """Execute a request, write its output and return the exit code."""
        failed = False
        series: Dict[str, List[float]] = {}
        if spec.command == "profile":
            rows, series = self.run_profile(spec)
        elif spec.command == "verify":
            rows, failed, series = self.run_verify(spec)
        elif spec.command == "picard":
            rows = self.run_picard(spec)
        elif spec.command == "riccati":
            rows = self.run_riccati(spec)
        else:
            rows = self.run_hyper_order(spec)

        render_table(console, spec.label, models_to_frame(rows))
        if spec.out is not None:
            writer = ReportWriter(spec.label, spec.seed, self.echo_config())
            if spec.format == "json":
                writer.write_json(rows, spec.out)
            elif spec.format == "csv":
                writer.write_csv(models_to_frame(rows), spec.out)
            else:
                if not series:
                    raise PreconditionError(f"{spec.label} has no plot; use csv or json")
                radii = [_row_radius(row) for row in rows]
                writer.write_svg(radii, series, spec.out, title=spec.label)
        if failed:
            console.print(f"[red]{spec.label}: invariant violated[/red]")
            return EXIT_INVARIANT
        return EXIT_OK


def _row_radius(row: BaseModel) -> float:
    data = row.model_dump()
    return float(data["r"] if "r" in data else data["params"]["r"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nevanlinna-lab",
        description="Numerical Nevanlinna theory for meromorphic maps on C^n",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--f", type=str, help="Map in the expression grammar, e.g. 'exp(z)'")
    common.add_argument("--f0", type=str, help="Denominator component (with --f1)")
    common.add_argument("--f1", type=str, help="Numerator component (with --f0)")
    common.add_argument("--n", type=int, default=1, help="Complex dimension")
    common.add_argument("--c", type=str, default="1", help="Shift a+bi[,a+bi...]")
    common.add_argument("--targets", type=str, help="Comma-separated values; 'inf' allowed")
    common.add_argument("--rmin", type=float, help="Smallest radius (reporting.default_grid)")
    common.add_argument("--rmax", type=float, help="Largest radius (reporting.default_grid)")
    common.add_argument("--rpoints", type=int, help="Grid size (reporting.default_grid)")
    grid = common.add_mutually_exclusive_group()
    grid.add_argument("--log-grid", dest="log_grid", action="store_true", default=None)
    grid.add_argument("--linear-grid", dest="log_grid", action="store_false")
    common.add_argument("--delta", type=float, help="Exponent delta of the difference bounds")
    common.add_argument("--outer", type=float, help="Outer radius s (n = 1) or R (n >= 2)")
    common.add_argument("--j", type=int, default=1, help="Shifted coordinate for lemma-nd")
    common.add_argument("--R", type=str, help="Rational function of z and u for riccati")
    common.add_argument("--box", type=str, help="re_min,re_max,im_min,im_max")
    common.add_argument("--origin", choices=["recenter", "classical"], help="Origin policy")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--tol", type=float, help="Quadrature relative tolerance")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", type=Path, help="Output file")
    common.add_argument("--format", choices=["csv", "json", "svg"], default="csv")
    common.add_argument("--config-dir", type=Path, help="Path to configuration directory")
    common.add_argument("--verbose", action="store_true", help="Debug logging")

    sub.add_parser("profile", parents=[common], help="Characteristic profile over a radius grid")
    verify = sub.add_parser("verify", parents=[common], help="Residual and inequality checks")
    verify.add_argument("check", choices=VERIFY_CHECKS)
    sub.add_parser("picard", parents=[common], help="Difference Picard verdict")
    sub.add_parser("riccati", parents=[common], help="Difference Riccati degree analysis")
    sub.add_parser("hyper-order", parents=[common], help="Order and hyper-order estimates")
    return parser


def _configure_logging(verbose: bool, console: Console) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_time=False, show_path=verbose)],
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)
    console = Console(stderr=True)
    _configure_logging(args.verbose, console)

    values = vars(args)
    config_dir = values.pop("config_dir")
    values.pop("verbose")
    try:
        orchestrator = NevanlinnaOrchestrator(
            config_dir=config_dir,
            quad_overrides={
                "rng_seed": values["seed"],
                "rel_tol": values["tol"],
                "threads": values["threads"],
            },
            counting_overrides={"origin_policy": values["origin"]} if values["origin"] else None,
        )
        for key, value in orchestrator.default_grid().items():
            if values.get(key) is None:
                values[key] = value
        spec = RunSpec(**values)
        return orchestrator.run(spec, console)
    except ValidationError as exc:
        console.print(f"[red]Invalid request:[/red] {escape(str(exc))}")
        return EXIT_INPUT
    except InputError as exc:
        console.print(f"[red]Input error ({type(exc).__name__}):[/red] {escape(str(exc))}")
        return EXIT_INPUT
    except NumericError as exc:
        console.print(f"[red]Numeric failure ({type(exc).__name__}):[/red] {escape(str(exc))}")
        return EXIT_NUMERIC
    except NevanlinnaError as exc:
        console.print(f"[red]{type(exc).__name__}:[/red] {escape(str(exc))}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
