"""CSV and SVG emission for evaluation, sweep and runtime results.

Every CSV starts with ``#`` comment lines carrying the effective configuration
as JSON, followed by an ordinary header row. ``read_csv_comments`` recovers
the configuration; the CSV module handles the rest.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

from .experiments import CLASS_NAMES, EvalReport, RuntimeCell, SweepCell, SweepReport

EVAL_HEADER = ["class", "before", "after", "abs_delta"]
SWEEP_HEADER = ["padding", "stride", "total_abs_delta", "condition_ok"]
RUNTIME_HEADER = ["padding", "stride", "mean_epoch_seconds", "epochs"]


class EmptyReportError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def _comment_block(meta: dict | None) -> str:
    if not meta:
        return ""
    return "".join(f"# {k}: {json.dumps(v, sort_keys=True, default=str)}\n" for k, v in sorted(meta.items()))


def _write_atomic(path: Path, text: str) -> None:
    """Write via a temporary sibling so a failed write leaves no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def eval_csv_text(report: EvalReport, meta: dict | None = None) -> str:
    if not report.before:
        raise EmptyReportError("evaluation report has no classes")
    buf = io.StringIO()
    buf.write(_comment_block({**report.metadata, **(meta or {})}))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_HEADER)
    for name, before, after, delta in report.rows():
        w.writerow([name, _fmt(before), _fmt(after), _fmt(delta)])
    w.writerow(["total", "", "", _fmt(report.total_abs_delta)])
    return buf.getvalue()


def write_eval_csv(report: EvalReport, path, meta: dict | None = None) -> Path:
    text = eval_csv_text(report, meta)
    _write_atomic(Path(path), text)
    return Path(path)


def sweep_csv_text(report: SweepReport, meta: dict | None = None, timing: bool = True) -> str:
    if not report.cells:
        raise EmptyReportError("sweep report has no cells")
    classes = [c for c in CLASS_NAMES if c in report.cells[0].abs_delta]
    buf = io.StringIO()
    buf.write(_comment_block({**report.metadata, **(meta or {})}))
    w = csv.writer(buf, lineterminator="\n")
    header = SWEEP_HEADER + [f"abs_delta_{c}" for c in classes] + [f"before_{c}" for c in classes]
    if timing:
        header.append("epoch_seconds")
    w.writerow(header)
    for cell in report.cells:
        row = [cell.padding, cell.stride, _fmt(cell.total_abs_delta), str(cell.condition_ok).lower()]
        row += [_fmt(cell.abs_delta[c]) for c in classes] + [_fmt(cell.before[c]) for c in classes]
        if timing:
            row.append(f"{cell.epoch_seconds:.4f}")
        w.writerow(row)
    return buf.getvalue()


def write_sweep_csv(report: SweepReport, path, meta: dict | None = None) -> Path:
    _write_atomic(Path(path), sweep_csv_text(report, meta))
    return Path(path)


def write_runtime_csv(cells: Sequence[RuntimeCell], path, meta: dict | None = None) -> Path:
    if not cells:
        raise EmptyReportError("runtime table is empty")
    buf = io.StringIO()
    buf.write(_comment_block(meta))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNTIME_HEADER)
    for c in cells:
        w.writerow([c.padding, c.stride, f"{c.mean_seconds:.6f}", len(c.epoch_seconds)])
    _write_atomic(Path(path), buf.getvalue())
    return Path(path)


def read_csv_comments(path) -> dict:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = json.loads(value)
    return meta


def _data_lines(path) -> Iterable[str]:
    with open(path, encoding="utf-8") as fh:
        return [line for line in fh if not line.startswith("#")]


def read_sweep_csv(path) -> SweepReport:
    rows = list(csv.DictReader(_data_lines(path)))
    if not rows:
        raise EmptyReportError(f"{path}: no sweep rows")
    missing = set(SWEEP_HEADER) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: not a sweep CSV (missing {sorted(missing)})")
    cells = []
    for r in rows:
        delta = {k[len("abs_delta_"):]: float(v) for k, v in r.items() if k.startswith("abs_delta_")}
        before = {k[len("before_"):]: float(v) for k, v in r.items() if k.startswith("before_")}
        cells.append(SweepCell(int(r["padding"]), int(r["stride"]), float(r["total_abs_delta"]),
                               r["condition_ok"] == "true", delta, before,
                               float(r.get("epoch_seconds") or "nan")))
    return SweepReport(cells, read_csv_comments(path))


def read_eval_csv(path) -> dict[str, tuple[float, float, float]]:
    out = {}
    for r in csv.DictReader(_data_lines(path)):
        if r["class"] == "total":
            continue
        out[r["class"]] = (float(r["before"]), float(r["after"]), float(r["abs_delta"]))
    if not out:
        raise EmptyReportError(f"{path}: no evaluation rows")
    return out


# ------------------------------------------------------------------------ SVG

def _plot_lines(series: dict[int, list[tuple[int, float]]], title: str, ylabel: str, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for stride in sorted(series):
        pts = sorted(series[stride])
        ax.plot([p for p, _ in pts], [v for _, v in pts], marker="o", label=f"stride {stride}")
    ax.set_xlabel("padding p")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "doppler-cnn"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    _write_atomic(path, buf.getvalue())


def write_sweep_svgs(report: SweepReport, out_dir) -> list[Path]:
    """One line plot per class (plus the total): |delta| against padding, one line per stride."""
    if not report.cells:
        raise EmptyReportError("sweep report has no cells")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = [c for c in CLASS_NAMES if c in report.cells[0].abs_delta]
    paths = []
    for name in classes + ["total"]:
        series: dict[int, list[tuple[int, float]]] = {}
        for cell in report.cells:
            val = cell.total_abs_delta if name == "total" else cell.abs_delta[name]
            series.setdefault(cell.stride, []).append((cell.padding, val))
        path = out_dir / f"abs_delta_{name}.svg"
        _plot_lines(series, f"Absolute accuracy change ({name}) vs padding", "|delta accuracy|", path)
        paths.append(path)
    return paths


def write_runtime_svg(cells: Sequence[RuntimeCell], path) -> Path:
    if not cells:
        raise EmptyReportError("runtime table is empty")
    series: dict[int, list[tuple[int, float]]] = {}
    for c in cells:
        series.setdefault(c.stride, []).append((c.padding, c.mean_seconds))
    _plot_lines(series, "Average epoch time vs padding", "seconds per epoch", Path(path))
    return Path(path)
