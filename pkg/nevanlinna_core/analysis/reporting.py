"""
Report Output

CSV, JSON and SVG emitters for analysis results plus rich tables for the
terminal. Files are byte-deterministic for a given seed: no timestamps, fixed
float formatting and a seeded SVG id salt.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, TypeVar, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from pydantic import BaseModel  # noqa: E402
from rich.console import Console  # noqa: E402
from rich.table import Table  # noqa: E402

from .. import __version__  # noqa: E402

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def flatten_record(record: Dict[str, Any]) -> Dict[str, Any]:
    """Expand list-valued fields into numbered columns; nested structures become JSON text."""
    flat: Dict[str, Any] = {}
    for key, value in record.items():
        if isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
            for i, v in enumerate(value, start=1):
                flat[f"{key}_{i}"] = v
        elif isinstance(value, (list, dict)):
            flat[key] = json.dumps(value, sort_keys=True)
        else:
            flat[key] = value
    return flat


def models_to_frame(rows: Sequence[BaseModel]) -> pd.DataFrame:
    return pd.DataFrame([flatten_record(row.model_dump(mode="json")) for row in rows])


class ReportWriter:
    """
    Writes one command's results.

    Args:
        command: command line summary echoed in the metadata
        seed: random seed echoed in every file header
        config: configuration echoed in JSON metadata
    """

    def __init__(self, command: str, seed: int, config: Optional[Dict[str, Any]] = None):
        self.command = command
        self.seed = seed
        self.config = config or {}

    @property
    def header(self) -> str:
        return f"# nevanlinna-lab {__version__} seed={self.seed}"

    def meta(self) -> Dict[str, Any]:
        return {
            "version": __version__,
            "seed": self.seed,
            "command": self.command,
            "config": self.config,
        }

    def write_csv(self, frame: pd.DataFrame, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            f.write(self.header + "\r\n")
            frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\r\n")
        logger.info("Wrote %d CSV rows to %s", len(frame), path)
        return path

    def write_json(self, rows: Sequence[BaseModel], path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"meta": self.meta(), "rows": [row.model_dump(mode="json") for row in rows]}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        logger.info("Wrote %d JSON rows to %s", len(rows), path)
        return path

    def write_svg(
        self,
        x: Sequence[float],
        series: Dict[str, Sequence[float]],
        path: Union[str, Path],
        xlabel: str = "r",
        ylabel: str = "T(r)",
        loglog: bool = True,
        title: str = "",
    ) -> Path:
        """Static line chart of one or more series against x."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with plt.rc_context({"svg.hashsalt": str(self.seed), "svg.fonttype": "path"}):
            fig, ax = plt.subplots(figsize=(6.4, 4.8))
            for name, values in series.items():
                ax.plot(list(x), list(values), marker="o", markersize=3, label=name)
            if loglog:
                ax.set_xscale("log")
                ax.set_yscale("symlog", linthresh=1e-3)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if title:
                ax.set_title(title)
            ax.grid(True, which="both", alpha=0.3)
            ax.legend()
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
        logger.info("Wrote plot to %s", path)
        return path


def load_report(path: Union[str, Path], model: Type[ModelT]) -> Tuple[Dict[str, Any], List[ModelT]]:
    """Read a JSON report back into its row model."""
    payload = json.loads(Path(path).read_text())
    return payload["meta"], [model.model_validate(row) for row in payload["rows"]]


def read_csv_report(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def render_table(console: Console, title: str, frame: pd.DataFrame, digits: int = 6) -> None:
    """Print a DataFrame as a rich table."""
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for _, row in frame.iterrows():
        cells = []
        for value in row:
            if isinstance(value, float):
                cells.append(f"{value:.{digits}g}")
            else:
                cells.append(str(value))
        table.add_row(*cells)
    console.print(table)
