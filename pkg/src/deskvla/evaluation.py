"""k-bin tolerance accuracy scoring and comparison reports.

A prediction is scored per action dimension: hit iff the predicted bin
lies within k of the ground-truth bin (inclusive). Top-1 is k=0; the
headline tolerance metric is k=5. Reports pool over all scalar
comparisons and keep the per-dimension breakdown.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import ACTION_DIMS, DIM_NAMES, NormalizationStats, normalize, quantize, validate_bins
from .instructions import canonical_instruction
from .policy import PolicyModel
from .trajectories import Trajectory


def metric_name(k: int) -> str:
    return "Top-1" if k == 0 else f"{k}-Bin"


@dataclass(frozen=True)
class PredictionRecord:
    trajectory_id: str
    step: int
    truth: np.ndarray
    pred: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "truth", validate_bins(self.truth))
        object.__setattr__(self, "pred", validate_bins(self.pred))


def kbin_accuracy(records: list[PredictionRecord], k: int):
    """Per-dimension and pooled accuracy at tolerance k (Eq. |a - a_hat| <= k).

    Returns (per_dim (7,), pooled scalar); both are plain hit fractions.
    """
    if not records:
        raise ValueError("no records")
    if k < 0:
        raise ValueError("k must be non-negative")
    truth = np.stack([r.truth for r in records])
    pred = np.stack([r.pred for r in records])
    hits = np.abs(truth.astype(np.int64) - pred.astype(np.int64)) <= k
    return hits.mean(axis=0), float(hits.mean())


@dataclass(frozen=True)
class EvalReport:
    model_tag: str
    dataset_tag: str
    ks: tuple[int, ...]
    n_records: int
    pooled: dict[int, float] = field(default_factory=dict)
    per_dim: dict[int, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_records <= 0:
            raise ValueError("report needs at least one record")
        for k in self.ks:
            if not 0.0 <= self.pooled[k] <= 1.0:
                raise ValueError("accuracies must lie in [0, 1]")

    @property
    def n_comparisons(self) -> int:
        return self.n_records * ACTION_DIMS

    def to_payload(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "dataset_tag": self.dataset_tag,
            "ks": list(self.ks),
            "n_records": self.n_records,
            "n_comparisons": self.n_comparisons,
            "pooled": {str(k): self.pooled[k] for k in self.ks},
            "per_dim": {str(k): list(self.per_dim[k]) for k in self.ks},
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "EvalReport":
        ks = tuple(payload["ks"])
        return cls(
            model_tag=payload["model_tag"],
            dataset_tag=payload["dataset_tag"],
            ks=ks,
            n_records=payload["n_records"],
            pooled={k: payload["pooled"][str(k)] for k in ks},
            per_dim={k: tuple(payload["per_dim"][str(k)]) for k in ks},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_payload(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_payload(json.loads(Path(path).read_text()))

    def render_text(self) -> str:
        """Aligned table, percentages with two decimals."""
        lines = [
            f"model {self.model_tag} on {self.dataset_tag} "
            f"({self.n_records} records, {self.n_comparisons} comparisons)",
        ]
        header = f"{'metric':<12}{'pooled':>9}" + "".join(f"{d:>9}" for d in DIM_NAMES)
        lines.append(header)
        for k in self.ks:
            row = f"{metric_name(k) + ' (%)':<12}{self.pooled[k] * 100:>9.2f}"
            row += "".join(f"{v * 100:>9.2f}" for v in self.per_dim[k])
            lines.append(row)
        return "\n".join(lines) + "\n"


def collect_records(model: PolicyModel, trajs: list[Trajectory],
                    stats: NormalizationStats, instruction_for=None,
                    batch_size: int = 128) -> list[PredictionRecord]:
    """Greedy-decode every step of every trajectory and pair with ground truth.

    instruction_for(traj, step) supplies the evaluation instruction;
    the default is the canonical phrasing.
    """
    if instruction_for is None:
        instruction_for = lambda traj, step: canonical_instruction(traj.metadata)

    pending = []  # (trajectory_id, step, observation, instruction, truth_bins)
    for traj in trajs:
        for step, (obs, action) in enumerate(traj.frames):
            truth = quantize(normalize(action, stats))
            pending.append((traj.id, step, obs,
                            instruction_for(traj, step), truth))

    records = []
    for lo in range(0, len(pending), batch_size):
        chunk = pending[lo : lo + batch_size]
        preds = model.predict_batch([c[2] for c in chunk], [c[3] for c in chunk])
        for (tid, step, _, _, truth), pred in zip(chunk, preds):
            records.append(PredictionRecord(tid, step, truth, pred))
    return records


def score_records(records: list[PredictionRecord], ks, model_tag: str,
                  dataset_tag: str) -> EvalReport:
    pooled = {}
    per_dim = {}
    for k in ks:
        dims, pool = kbin_accuracy(records, k)
        pooled[int(k)] = pool
        per_dim[int(k)] = tuple(float(v) for v in dims)
    return EvalReport(model_tag=model_tag, dataset_tag=dataset_tag,
                      ks=tuple(int(k) for k in ks), n_records=len(records),
                      pooled=pooled, per_dim=per_dim)


def evaluate(model: PolicyModel, trajs: list[Trajectory], stats: NormalizationStats,
             ks=(0, 5), instruction_for=None, model_tag: str = "model",
             dataset_tag: str = "test") -> EvalReport:
    """Score a finalized model over a trajectory split."""
    if not trajs:
        raise ValueError("empty test split")
    records = collect_records(model, trajs, stats, instruction_for)
    return score_records(records, ks, model_tag, dataset_tag)


def compare(report_a: EvalReport, report_b: EvalReport) -> dict:
    """Per-metric deltas (b minus a) with the better method marked."""
    if tuple(report_a.ks) != tuple(report_b.ks):
        raise ValueError("reports disagree on k values")
    metrics = {}
    for k in report_a.ks:
        a = report_a.pooled[k]
        b = report_b.pooled[k]
        better = "tie" if a == b else (report_a.model_tag if a > b else report_b.model_tag)
        metrics[metric_name(k)] = {"a": a, "b": b, "delta": b - a, "better": better}
    return {
        "model_a": report_a.model_tag,
        "model_b": report_b.model_tag,
        "dataset": report_b.dataset_tag,
        "metrics": metrics,
    }


def render_compare_text(comparison: dict) -> str:
    tag_a = comparison["model_a"]
    tag_b = comparison["model_b"]
    width = max(len(tag_a), len(tag_b), 8) + 2
    lines = [f"{'metric':<12}{tag_a:>{width}}{tag_b:>{width}}{'delta':>9}  better"]
    for name, row in comparison["metrics"].items():
        lines.append(
            f"{name + ' (%)':<12}{row['a'] * 100:>{width}.2f}{row['b'] * 100:>{width}.2f}"
            f"{row['delta'] * 100:>+9.2f}  {row['better']}")
    return "\n".join(lines) + "\n"


def save_report_csv(report: EvalReport, path: str | Path) -> None:
    """Delimited counterpart of render_text (percent values, 4 decimals)."""
    lines = ["metric,pooled," + ",".join(DIM_NAMES)]
    for k in report.ks:
        cells = [metric_name(k), f"{report.pooled[k] * 100:.4f}"]
        cells += [f"{v * 100:.4f}" for v in report.per_dim[k]]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
