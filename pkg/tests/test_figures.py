"""Figure rendering smoke tests: files appear, are PNGs, and re-render
identically within a process."""

from __future__ import annotations

from deskvla.evaluation import EvalReport, compare
from deskvla.figures import plot_comparison, plot_loss_curves, plot_per_dim_accuracy

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def sample_report(tag="baseline", top1=0.0662, kbin=0.4076):
    return EvalReport(
        model_tag=tag,
        dataset_tag="test-d",
        ks=(0, 5),
        n_records=100,
        pooled={0: top1, 5: kbin},
        per_dim={0: (top1,) * 7, 5: (kbin,) * 7},
    )


def assert_png(path):
    data = path.read_bytes()
    assert data[:8] == PNG_MAGIC
    assert len(data) > 2000  # an actual plot, not an empty canvas


def test_loss_curves(tmp_path):
    curves = {
        "pretrain": [(i, 5.0 / (i + 1)) for i in range(10)],
        "lora": [(i, 3.0 / (i + 2)) for i in range(10)],
    }
    out = plot_loss_curves(curves, tmp_path / "loss.png")
    assert out == tmp_path / "loss.png"
    assert_png(out)


def test_per_dim_accuracy(tmp_path):
    out = plot_per_dim_accuracy(sample_report(), tmp_path / "acc.png")
    assert_png(out)


def test_comparison_figure(tmp_path):
    result = compare(sample_report(), sample_report("augmented", 0.0509, 0.4247))
    out = plot_comparison(result, tmp_path / "cmp.png")
    assert_png(out)


def test_render_is_deterministic(tmp_path):
    report = sample_report()
    a = plot_per_dim_accuracy(report, tmp_path / "a.png")
    b = plot_per_dim_accuracy(report, tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
