import csv

import numpy as np
import pytest

from doppler_cnn.experiments import RuntimeCell, SweepCell, SweepReport, compare_predictions
from doppler_cnn.report import (
    EVAL_HEADER,
    EmptyReportError,
    read_csv_comments,
    read_eval_csv,
    read_sweep_csv,
    sweep_csv_text,
    write_eval_csv,
    write_runtime_csv,
    write_runtime_svg,
    write_sweep_csv,
    write_sweep_svgs,
)

CLASSES = ["tone", "hopping_tone", "chirp", "noise", "bpsk", "qpsk", "8psk"]


def sample_eval():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(7), 20)
    before = np.where(rng.random(140) < 0.7, labels, rng.integers(0, 7, 140))
    after = np.where(rng.random(140) < 0.9, before, rng.integers(0, 7, 140))
    return compare_predictions(labels, before, after, metadata={"seed": 3})


def sample_sweep():
    cells = []
    for s in (2, 3):
        for p in (0, 20, 40):
            d = {c: 0.01 * (p + s + i) for i, c in enumerate(CLASSES)}
            cells.append(SweepCell(p, s, sum(d.values()), s == 2, d, {c: 0.5 for c in CLASSES}, 1.5))
    return SweepReport(cells, {"seed": 0})


def data_rows(path):
    return list(csv.reader(line for line in open(path) if not line.startswith("#")))


def test_eval_csv_schema(tmp_path):
    rep = sample_eval()
    path = write_eval_csv(rep, tmp_path / "eval.csv", meta={"config": {"p": 280}})
    rows = data_rows(path)
    assert rows[0] == EVAL_HEADER
    assert [r[0] for r in rows[1:]] == CLASSES + ["total"]
    assert float(rows[-1][3]) == pytest.approx(rep.total_abs_delta)
    assert read_csv_comments(path) == {"config": {"p": 280}, "seed": 3}


def test_eval_csv_consistent_with_confusion(tmp_path):
    rep = sample_eval()
    parsed = read_eval_csv(write_eval_csv(rep, tmp_path / "e.csv"))
    for i, name in enumerate(CLASSES):
        conf_b, conf_a = rep.confusion_before[i], rep.confusion_after[i]
        before, after, delta = parsed[name]
        assert before == pytest.approx(conf_b[i] / conf_b.sum())
        assert after == pytest.approx(conf_a[i] / conf_a.sum())
        assert delta == pytest.approx(abs(after - before))


def test_empty_eval_report_writes_nothing(tmp_path):
    rep = compare_predictions(np.array([], int), np.array([], int), np.array([], int))
    with pytest.raises(EmptyReportError):
        write_eval_csv(rep, tmp_path / "e.csv")
    assert not list(tmp_path.iterdir())


def test_sweep_csv_round_trip(tmp_path):
    rep = sample_sweep()
    path = write_sweep_csv(rep, tmp_path / "sweep.csv")
    rows = data_rows(path)
    assert rows[0][:4] == ["padding", "stride", "total_abs_delta", "condition_ok"]
    assert len(rows) == 1 + 6
    back = read_sweep_csv(path)
    assert [(c.padding, c.stride, c.condition_ok) for c in back.cells] == \
        [(c.padding, c.stride, c.condition_ok) for c in rep.cells]
    assert back.cells[4].abs_delta == rep.cells[4].abs_delta


def test_sweep_csv_without_timing_is_stable():
    a = sample_sweep()
    b = sample_sweep()
    b.cells[0].epoch_seconds = 99.0
    assert sweep_csv_text(a, timing=False) == sweep_csv_text(b, timing=False)


def test_sweep_svgs_one_per_class_one_line_per_stride(tmp_path):
    paths = write_sweep_svgs(sample_sweep(), tmp_path / "svg")
    names = sorted(p.name for p in paths)
    assert names == sorted([f"abs_delta_{c}.svg" for c in CLASSES] + ["abs_delta_total.svg"])
    text = (tmp_path / "svg" / "abs_delta_chirp.svg").read_text()
    assert text.startswith("<?xml") and "stride 2" in text and "stride 3" in text


def test_svg_output_deterministic(tmp_path):
    write_sweep_svgs(sample_sweep(), tmp_path / "a")
    write_sweep_svgs(sample_sweep(), tmp_path / "b")
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_empty_sweep_writes_nothing(tmp_path):
    with pytest.raises(EmptyReportError):
        write_sweep_csv(SweepReport([]), tmp_path / "s.csv")
    with pytest.raises(EmptyReportError):
        write_sweep_svgs(SweepReport([]), tmp_path / "svg")
    assert not list(tmp_path.iterdir())


def test_runtime_outputs(tmp_path):
    cells = [RuntimeCell(p, 2, [0.1 * (p + 1)] * 3) for p in (0, 150, 300)]
    rows = data_rows(write_runtime_csv(cells, tmp_path / "rt.csv"))
    assert rows[0] == ["padding", "stride", "mean_epoch_seconds", "epochs"]
    assert len(rows) == 4
    assert write_runtime_svg(cells, tmp_path / "rt.svg").exists()
    with pytest.raises(EmptyReportError):
        write_runtime_csv([], tmp_path / "none.csv")


def test_io_failure_surfaces(tmp_path):
    with pytest.raises(OSError):
        write_eval_csv(sample_eval(), tmp_path / "missing" / "e.csv")
