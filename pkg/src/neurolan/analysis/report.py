"""Experiment reports: per-replicate rows, summary statistics and verdicts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _jsonable(v):
    if hasattr(v, "tolist"):
        return v.tolist()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


@dataclass
class Verdict:
    criterion: str
    passed: bool
    value: object
    threshold: str


@dataclass
class ExperimentReport:
    experiment_id: str
    config: dict
    rows: list
    summary: dict
    verdicts: list = field(default_factory=list)
    figures: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def failing(self) -> list:
        return [v.criterion for v in self.verdicts if not v.passed]

    def columns(self) -> list:
        cols = []
        for row in self.rows:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        w.writerow(cols)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in cols])
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {
            "experiment": self.experiment_id,
            "summary": _jsonable(self.summary),
            "verdicts": [_jsonable(vars(v)) for v in self.verdicts],
            "passed": self.passed,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def write(self, directory, formats=("csv", "json")) -> dict:
        """Write rows.csv and summary.json, plus figure CSVs when ``gnuplot`` is requested.

        Wall-clock time goes to timing.json so the other files stay reproducible.
        """
        os.makedirs(directory, exist_ok=True)
        paths = {"rows": os.path.join(directory, "rows.csv"),
                 "summary": os.path.join(directory, "summary.json")}
        with open(paths["rows"], "w") as fh:
            fh.write(self.rows_csv())
        with open(paths["summary"], "w") as fh:
            fh.write(self.summary_json() + "\n")
        with open(os.path.join(directory, "timing.json"), "w") as fh:
            json.dump({"wall_clock_s": round(self.wall_clock, 3)}, fh)
            fh.write("\n")
        if "gnuplot" not in formats:
            return paths
        for name, pairs in self.figures.items():
            p = os.path.join(directory, f"{name}.csv")
            with open(p, "w") as fh:
                for x, y in pairs:
                    fh.write(f"{_fmt(float(x))},{_fmt(float(y))}\n")
            paths[name] = p
        return paths
