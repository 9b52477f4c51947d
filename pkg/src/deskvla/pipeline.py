"""End-to-end pipeline steps behind the CLI.

Each cmd_* function is a plain library call so tests can drive the whole
workflow in-process. Commands take a lock on the output directory,
validate referenced paths up front, and embed seed/config provenance in
every artifact they write. Provenance never contains filesystem paths or
timestamps, so identical seeds reproduce byte-identical artifacts in any
location.
"""

from __future__ import annotations

import json
import logging
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import evaluation, figures, trajectories
from .actions import NormalizationStats, fit_stats
from .instructions import (
    CuratedSet,
    InstructionStore,
    build_prompt,
    canonical_instruction,
    pair,
    parse_candidates,
    utc_timestamp,
)
from .llm import generate_all
from .policy import PolicyConfig, PolicyModel
from .training import TrainConfig, pretrain_base, save_loss_curve, train
from .trajectories import DatasetSplit, Trajectory, by_id, load, split, synthesize

log = logging.getLogger(__name__)

LOCK_NAME = ".pipeline.lock"


@dataclass(frozen=True)
class PipelineConfig:
    dataset_root: str
    out_dir: str
    train: TrainConfig = TrainConfig()
    pretrain_epochs: int = 40
    pretrain_lr: float = 1e-3
    test_fraction: float = 0.25
    split_seed: int = 0
    eval_seed: int = 1234
    ks: tuple[int, ...] = (0, 5)

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie strictly between 0 and 1")

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        payload = json.loads(Path(path).read_text())
        train_cfg = TrainConfig(**payload.pop("train", {}))
        payload["ks"] = tuple(payload.get("ks", (0, 5)))
        return cls(train=train_cfg, **payload)


@contextmanager
def pipeline_lock(out_dir: str | Path):
    """One command at a time per output directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError(
            f"lock file present at {lock}; another pipeline command may be "
            "running (delete the lock if it is stale)")
    with os.fdopen(fd, "w") as fh:
        fh.write(str(os.getpid()))
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _require_path(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def dataset_checksum(root: str | Path) -> str:
    manifest = json.loads((Path(root) / "manifest.json").read_text())
    return manifest["checksum"]


def load_dataset(root: str | Path) -> list[Trajectory]:
    result = load(root)
    for tid, reason in result.failures:
        log.warning("skipping %s: %s", tid, reason)
    if not result.trajectories:
        raise ValueError("dataset contains no valid trajectories")
    return result.trajectories


# ---- synth ----------------------------------------------------------------


def cmd_synth(root: str | Path, n: int, steps: int, seed: int) -> Path:
    """Generate and export a synthetic dataset; deterministic per seed."""
    with pipeline_lock(root):
        trajs = synthesize(n, steps=steps, seed=seed)
        provenance = {"command": "synth", "n": n, "steps": steps, "seed": seed}
        out = trajectories.export(trajs, root, provenance=provenance)
    log.info("wrote %d trajectories to %s (checksum %s)",
             len(trajs), out, dataset_checksum(out))
    return out


# ---- gen ------------------------------------------------------------------


def cmd_gen(dataset_root: str | Path, store_root: str | Path, client,
            max_parallel: int = 4, force: bool = False) -> tuple[int, int]:
    """Build prompts, call the LLM, parse and persist candidate sets.

    Returns (generated, failed). Trajectories with existing candidates
    are skipped unless force is set; parse failures persist nothing.
    """
    dataset_root = _require_path(dataset_root, "dataset root")
    with pipeline_lock(store_root):
        store = InstructionStore(store_root)
        trajs = load_dataset(dataset_root)

        prompts = []
        for traj in trajs:
            if not force and traj.id in set(store.candidate_ids()):
                continue
            prompts.append(build_prompt(traj))
        if not prompts:
            log.info("all %d trajectories already have candidates", len(trajs))
            return 0, 0

        raw_by_id = generate_all(client, prompts, max_parallel=max_parallel)
        generated = 0
        failed = 0
        for prompt in prompts:
            raw = raw_by_id.get(prompt.trajectory_id)
            if raw is None:
                failed += 1
                continue
            try:
                store.save_candidates(parse_candidates(raw, prompt.trajectory_id))
                generated += 1
            except ValueError as exc:
                log.error("parse failed for %s: %s", prompt.trajectory_id, exc)
                failed += 1
    log.info("candidates generated for %d trajectories (%d failed)", generated, failed)
    return generated, failed


# ---- curate ----------------------------------------------------------------


def cmd_accept_all(store_root: str | Path, curator: str = "auto") -> int:
    """Curate every candidate set by accepting all five instructions."""
    with pipeline_lock(store_root):
        store = InstructionStore(store_root)
        count = 0
        for tid in store.candidate_ids():
            candidates = store.load_candidates(tid)
            store.save_curation(CuratedSet(
                trajectory_id=tid,
                selected=tuple(candidates.texts),
                curator=curator,
                timestamp=utc_timestamp(),
            ))
            count += 1
    log.info("accepted all candidates for %d trajectories", count)
    return count


# ---- train ------------------------------------------------------------------


def _stats_path(out_dir: Path) -> Path:
    return out_dir / "stats.json"


def resolve_split(trajs: list[Trajectory], cfg: PipelineConfig) -> DatasetSplit:
    return split(trajs, cfg.test_fraction, cfg.split_seed)


def save_policy_dir(model: PolicyModel, out: Path, meta: dict) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "model")
    if model.adapters:
        model.save_adapters(out / "adapters")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return out


def load_policy_dir(model_dir: str | Path) -> PolicyModel:
    model_dir = _require_path(model_dir, "model dir")
    meta = json.loads((model_dir / "meta.json").read_text())
    model = PolicyModel.load(model_dir / "model")
    if meta["kind"] == "lora":
        lora = meta["lora"]
        model.attach_adapters(rank=lora["r"], alpha=lora["alpha"], seed=lora["seed"])
        model.load_adapters(model_dir / "adapters")
    return model


def cmd_train(cfg: PipelineConfig, store_root: str | Path | None = None,
              single_instruction: bool = False, base_dir: str | Path | None = None,
              tag: str | None = None) -> Path:
    """Fit stats, then train the baseline base or the LoRA-augmented model.

    single_instruction: full-parameter pretraining on the canonical
    phrasing only (the desk-scale "zero-shot" baseline). Otherwise a
    frozen base (pretrained here, or loaded from base_dir) is adapted
    with LoRA on per-epoch paraphrase draws, which requires curations
    for every training trajectory.
    """
    dataset_root = _require_path(cfg.dataset_root, "dataset root")
    out_dir = Path(cfg.out_dir)
    tag = tag or ("baseline" if single_instruction else "augmented")

    with pipeline_lock(out_dir):
        trajs = load_dataset(dataset_root)
        dataset_split = resolve_split(trajs, cfg)
        lookup = by_id(trajs)
        train_trajs = [lookup[tid] for tid in dataset_split.train]

        # Normalization stats come from the training split only.
        stats = fit_stats([action for t in train_trajs for action in t.actions])
        checksum = dataset_checksum(dataset_root)

        common_meta = {
            "dataset_checksum": checksum,
            "split": {"test_fraction": cfg.test_fraction, "seed": cfg.split_seed,
                      "n_train": len(dataset_split.train), "n_test": len(dataset_split.test)},
        }

        if single_instruction:
            pre_cfg = replace(cfg.train, learning_rate=cfg.pretrain_lr,
                              epochs=cfg.pretrain_epochs)
            model = PolicyModel(PolicyConfig(seed=cfg.train.seed))
            curve = pretrain_base(model, train_trajs, stats, pre_cfg)
            meta = dict(common_meta, kind="base", train=asdict(pre_cfg), tag=tag)
        else:
            store = InstructionStore(_require_path(store_root, "instruction store"))
            curated = store.all_curations()
            missing = [tid for tid in dataset_split.train if tid not in curated]
            if missing:
                raise ValueError(
                    "uncurated training trajectories: " + ", ".join(sorted(missing)) +
                    " (run the gen and curate commands first)")
            if base_dir is None:
                pre_cfg = replace(cfg.train, learning_rate=cfg.pretrain_lr,
                                  epochs=cfg.pretrain_epochs)
                base_model = PolicyModel(PolicyConfig(seed=cfg.train.seed))
                pretrain_base(base_model, train_trajs, stats, pre_cfg)
                base_dir = out_dir / "models" / f"{tag}-base"
                save_policy_dir(base_model, base_dir,
                                dict(common_meta, kind="base", train=asdict(pre_cfg),
                                     tag=f"{tag}-base"))
            # Reload so the adapted base is exactly the f32 checkpoint on disk.
            model = load_policy_dir(base_dir)
            curve = train(model, train_trajs, stats, curated, cfg.train)
            meta = dict(common_meta, kind="lora", train=asdict(cfg.train), tag=tag,
                        lora={"r": cfg.train.r, "alpha": cfg.train.alpha,
                              "seed": cfg.train.seed})

        stats.save(_stats_path(out_dir))
        model_dir = out_dir / "models" / tag
        save_policy_dir(model, model_dir, meta)
        save_loss_curve(curve, model_dir / "loss_curve.csv")
        figures.plot_loss_curves({tag: curve}, model_dir / "loss_curve.png")
    log.info("model %s written to %s", tag, model_dir)
    return model_dir


# ---- eval -------------------------------------------------------------------


def _instruction_provider(mode: str, store_root, eval_seed: int):
    if mode == "canonical":
        return lambda traj, step: canonical_instruction(traj.metadata)
    if mode == "paraphrase":
        store = InstructionStore(_require_path(store_root, "instruction store"))
        curated = store.all_curations()

        def provider(traj: Trajectory, step: int) -> str:
            # Per-step deterministic draw over the curated paraphrases.
            return pair(curated, traj.id, epoch=step, seed=eval_seed)

        return provider
    raise ValueError(f"unknown instruction mode {mode!r}")


def write_report(report: evaluation.EvalReport, out_base: Path, provenance: dict) -> Path:
    payload = report.to_payload()
    payload["provenance"] = provenance
    json_path = out_base.with_suffix(".json")
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    evaluation.save_report_csv(report, out_base.with_suffix(".csv"))
    out_base.with_suffix(".txt").write_text(report.render_text())
    figures.plot_per_dim_accuracy(report, out_base.with_suffix(".png"))
    return json_path


def cmd_eval(cfg: PipelineConfig, model_dir: str | Path, store_root=None,
             instructions: str = "canonical", split_name: str = "test",
             tag: str | None = None) -> Path:
    """Evaluate a trained model dir on one side of the dataset split."""
    dataset_root = _require_path(cfg.dataset_root, "dataset root")
    out_dir = Path(cfg.out_dir)
    with pipeline_lock(out_dir):
        stats = NormalizationStats.load(_stats_path(out_dir))
        model = load_policy_dir(model_dir)
        model_tag = tag or json.loads((Path(model_dir) / "meta.json").read_text())["tag"]

        trajs = load_dataset(dataset_root)
        dataset_split = resolve_split(trajs, cfg)
        ids = dataset_split.test if split_name == "test" else dataset_split.train
        lookup = by_id(trajs)
        eval_trajs = [lookup[tid] for tid in ids]
        checksum = dataset_checksum(dataset_root)

        provider = _instruction_provider(instructions, store_root, cfg.eval_seed)
        report = evaluation.evaluate(
            model, eval_trajs, stats, ks=cfg.ks, instruction_for=provider,
            model_tag=model_tag, dataset_tag=f"{split_name}-{checksum[:8]}")

        provenance = {
            "command": "eval",
            "dataset_checksum": checksum,
            "split": {"name": split_name, "test_fraction": cfg.test_fraction,
                      "seed": cfg.split_seed},
            "instructions": instructions,
            "eval_seed": cfg.eval_seed,
            "ks": list(cfg.ks),
            "model_tag": model_tag,
        }
        reports_dir = out_dir / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        json_path = write_report(report, reports_dir / f"{model_tag}-{split_name}", provenance)
    log.info("report written to %s", json_path)
    return json_path


# ---- compare ------------------------------------------------------------------


def cmd_compare(report_a: str | Path, report_b: str | Path, out_dir: str | Path,
                name: str = "compare") -> Path:
    """Diff two eval reports; writes JSON, text, and a figure."""
    a = evaluation.EvalReport.load(_require_path(report_a, "report"))
    b = evaluation.EvalReport.load(_require_path(report_b, "report"))
    comparison = evaluation.compare(a, b)
    out_dir = Path(out_dir)
    with pipeline_lock(out_dir):
        reports_dir = out_dir / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        base = reports_dir / name
        base.with_suffix(".json").write_text(json.dumps(comparison, indent=2, sort_keys=True))
        base.with_suffix(".txt").write_text(evaluation.render_compare_text(comparison))
        figures.plot_comparison(comparison, base.with_suffix(".png"))
    log.info("comparison written to %s", base.with_suffix(".json"))
    return base.with_suffix(".json")
