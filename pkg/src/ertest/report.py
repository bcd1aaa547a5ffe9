"""Text tables and plot-data CSV for evaluation reports."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

CSV_FIELDS = ("config", "dataset", "metric", "mean", "std", "p")
# metrics shown in the summary table, per dataset family
_TABLE_METRICS = {
    "accuracy",
    "fprd",
    "original_acc",
    "contrast_acc",
    "consistency",
    "norm_failure_rate",
}


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _unnum(s: str):
    return None if s == "" else float(s)


def _cell(row) -> str:
    text = f"{100 * row.mean:.2f}"
    if row.std is not None:
        text += f" ±{100 * row.std:.2f}"
    if row.p_value is not None and row.p_value < 0.05:
        text += "*"
    return text


def render_report(report, metrics=None) -> tuple[str, str]:
    """(aligned text table, plot-data CSV).

    Table columns follow the report's dataset order (seen before unseen) and
    values are percentages; ``*`` marks p < 0.05 against the baseline.
    """
    wanted = _TABLE_METRICS if metrics is None else set(metrics)
    columns = []
    for r in report.rows:
        key = (r.dataset, r.metric)
        if r.metric in wanted and key not in columns:
            columns.append(key)
    header = ["model"] + [f"{d}:{m}" for d, m in columns]
    lines = [header]
    for model in report.models:
        line = [model]
        for d, m in columns:
            try:
                line.append(_cell(report.row(model, d, m)))
            except KeyError:
                line.append("-")
        lines.append(line)
    widths = [max(len(l[i]) for l in lines) for i in range(len(header))]
    text_rows = ["  ".join(c.ljust(w) for c, w in zip(l, widths)).rstrip() for l in lines]
    text_rows.insert(1, "  ".join("-" * w for w in widths))
    notes = [f"config {report.config_hash}; seeds {report.seeds}; baseline {report.baseline}; * p < 0.05 (Welch)"]
    for f in report.failures:
        notes.append(f"FAILED {f['model']} seed {f['seed']}: {f['error']}")
    table = "\n".join(text_rows + [""] + notes) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in report.rows:
        writer.writerow([r.model, r.dataset, r.metric, _num(r.mean), _num(r.std), _num(r.p_value)])
    return table, buf.getvalue()


def read_report_csv(source) -> list[dict]:
    """Parse plot-data CSV text (or a path) back into typed rows."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        source = Path(source).read_text()
    rows = []
    for r in csv.DictReader(io.StringIO(source)):
        rows.append(
            {
                "config": r["config"],
                "dataset": r["dataset"],
                "metric": r["metric"],
                "mean": float(r["mean"]),
                "std": _unnum(r["std"]),
                "p": _unnum(r["p"]),
            }
        )
    return rows


def significant_rows(report, alpha: float = 0.05) -> list:
    return [r for r in report.rows if r.p_value is not None and not math.isnan(r.p_value) and r.p_value < alpha]
