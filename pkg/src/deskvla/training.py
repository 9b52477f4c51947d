"""Training loops: full-parameter pretraining and LoRA fine-tuning.

Both phases share the AdamW optimizer and the batched cross-entropy in
PolicyModel.loss_and_grads; they differ in which parameters receive
updates and where each epoch's instructions come from. Pretraining uses
the fixed canonical phrasing; fine-tuning re-draws one curated
paraphrase per trajectory every epoch.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import NormalizationStats, bins_to_tokens, normalize, quantize
from .instructions import CuratedSet, canonical_instruction, pair
from .policy import PolicyModel, TrainingExample
from .trajectories import Trajectory

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    r: int = 32
    alpha: float = 64.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.r < 1 or self.alpha <= 0:
            raise ValueError("r and alpha must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs and batch_size out of range")


class AdamW:
    """AdamW with decoupled weight decay over a named parameter dict.

    Weight decay applies to matrices only; vectors (biases, layer norm
    gains) and any parameter without a gradient in a step are left alone.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, grad in grads.items():
            param = self.params[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if param.ndim >= 2 and self.weight_decay > 0.0:
                update = update + self.weight_decay * param
            param -= self.lr * update


def step_targets(traj: Trajectory, stats: NormalizationStats, token_map) -> list[tuple[int, ...]]:
    """Pre-tokenized action targets for every step of a trajectory."""
    targets = []
    for _, action in traj.frames:
        bins = quantize(normalize(action, stats))
        targets.append(tuple(int(t) for t in bins_to_tokens(bins, token_map)))
    return targets


def build_examples(trajs: list[Trajectory], stats: NormalizationStats,
                   token_map, instruction_for) -> list[TrainingExample]:
    """Materialize one TrainingExample per (trajectory, step).

    instruction_for maps a Trajectory to the single instruction used for
    all of its steps in this epoch.
    """
    examples = []
    for traj in trajs:
        instruction = instruction_for(traj)
        for (obs, _), target in zip(traj.frames, step_targets(traj, stats, token_map)):
            examples.append(TrainingExample(
                observation=obs,
                instruction=instruction,
                target_tokens=target,
            ))
    return examples


def _run_epochs(model: PolicyModel, trajs, stats, cfg: TrainConfig,
                instruction_for_epoch, optimizer: AdamW, train_base: bool,
                label: str) -> list[tuple[int, float]]:
    token_map = model.vocab.token_map
    # Observations and targets are fixed across epochs; only instructions
    # get re-drawn, so cache the per-step tensors once.
    per_traj = [(traj, [(obs, t) for (obs, _), t in
                        zip(traj.frames, step_targets(traj, stats, token_map))])
                for traj in trajs]

    curve: list[tuple[int, float]] = []
    for epoch in range(cfg.epochs):
        examples = []
        for traj, steps in per_traj:
            instruction = instruction_for_epoch(traj, epoch)
            examples.extend(TrainingExample(obs, instruction, target)
                            for obs, target in steps)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(examples))

        total = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [examples[i] for i in order[lo : lo + cfg.batch_size]]
            loss, grads = model.loss_and_grads(batch, train_base=train_base)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss {loss} at epoch {epoch} ({label}); "
                    f"lr={optimizer.lr}, batch of {len(batch)}")
            optimizer.step(grads)
            total += loss * len(batch)
        mean_loss = total / len(examples)
        curve.append((epoch, mean_loss))
        log.info("%s epoch %d/%d loss %.4f", label, epoch + 1, cfg.epochs, mean_loss)
    return curve


def pretrain_base(model: PolicyModel, trajs: list[Trajectory],
                  stats: NormalizationStats, cfg: TrainConfig) -> list[tuple[int, float]]:
    """Train every parameter on canonical single instructions.

    This builds the frozen "pretrained" base that LoRA later adapts; it
    must run before attach_adapters.
    """
    if model.adapters:
        raise ValueError("base is already frozen; pretrain before attaching adapters")
    if not trajs:
        raise ValueError("empty dataset")
    optimizer = AdamW(model.params, lr=cfg.learning_rate, betas=cfg.betas,
                      weight_decay=cfg.weight_decay)
    return _run_epochs(
        model, trajs, stats, cfg,
        lambda traj, epoch: canonical_instruction(traj.metadata),
        optimizer, train_base=True, label="pretrain")


def train(model: PolicyModel, trajs: list[Trajectory], stats: NormalizationStats,
          curated: dict[str, CuratedSet], cfg: TrainConfig) -> list[tuple[int, float]]:
    """LoRA fine-tuning: adapter factors only, paraphrase re-draw per epoch."""
    if not trajs:
        raise ValueError("empty dataset")
    if not model.adapters:
        model.attach_adapters(rank=cfg.r, alpha=cfg.alpha, seed=cfg.seed)
    frozen_before = model.frozen_hash()
    optimizer = AdamW(model.adapter_params(), lr=cfg.learning_rate, betas=cfg.betas,
                      weight_decay=cfg.weight_decay)
    curve = _run_epochs(
        model, trajs, stats, cfg,
        lambda traj, epoch: pair(curated, traj.id, epoch, cfg.seed),
        optimizer, train_base=False, label="lora")
    if model.frozen_hash() != frozen_before:
        raise RuntimeError("frozen base weights changed during adapter training")
    return curve


def save_loss_curve(curve: list[tuple[int, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in curve:
            writer.writerow([epoch, f"{loss:.6f}"])
