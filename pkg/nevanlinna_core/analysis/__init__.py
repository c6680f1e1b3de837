"""
Nevanlinna Lab Analysis
Expression trees, sphere quadrature, Nevanlinna functions, difference bounds and applications
"""

from .expr import Expr, MeromorphicMap, parse_expr
from .quadrature import IntegralEstimate, QuadConfig
from .nevanlinna import NevanlinnaAnalyzer, NevanlinnaProfile, DivisorOracle
from .difference import DifferenceAnalyzer, BoundReport, SmtLedger, HolderParams
from .applications import ApplicationsAnalyzer, RationalInU, Verdict
from .roots import Box
from .reporting import ReportWriter, load_report

__all__ = [
    "Expr",
    "MeromorphicMap",
    "parse_expr",
    "IntegralEstimate",
    "QuadConfig",
    "NevanlinnaAnalyzer",
    "NevanlinnaProfile",
    "DivisorOracle",
    "DifferenceAnalyzer",
    "BoundReport",
    "SmtLedger",
    "HolderParams",
    "ApplicationsAnalyzer",
    "RationalInU",
    "Verdict",
    "Box",
    "ReportWriter",
    "load_report",
]
