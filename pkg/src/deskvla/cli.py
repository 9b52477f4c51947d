"""Command-line pipeline: synth -> gen -> curate -> train -> eval -> compare.

Logs go to stderr; machine-readable results are written only to files.
A JSON config file can pre-populate per-command flag defaults:
{"train": {"epochs": 30}, "synth": {"n": 100}}.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import pipeline
from .llm import HttpLlmClient, LlmConfig, MockLlmClient
from .training import TrainConfig

log = logging.getLogger("deskvla")


def _pipeline_config(dataset, out, epochs, lr, batch_size, seed, r, alpha,
                     pretrain_epochs, pretrain_lr, test_fraction, split_seed,
                     eval_seed=1234, ks=(0, 5)) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        dataset_root=str(dataset),
        out_dir=str(out),
        train=TrainConfig(learning_rate=lr, epochs=epochs, batch_size=batch_size,
                          seed=seed, r=r, alpha=alpha),
        pretrain_epochs=pretrain_epochs,
        pretrain_lr=pretrain_lr,
        test_fraction=test_fraction,
        split_seed=split_seed,
        eval_seed=eval_seed,
        ks=tuple(ks),
    )


@click.group()
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with per-command flag defaults.")
@click.pass_context
def main(ctx, log_level: str, config_path):
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text())


@main.command()
@click.option("--root", required=True, type=click.Path(), help="Dataset output directory.")
@click.option("--n", default=100, show_default=True, type=int)
@click.option("--steps", default=25, show_default=True, type=int)
@click.option("--seed", default=7, show_default=True, type=int)
def synth(root, n, steps, seed):
    """Write a synthetic scripted pick-and-place dataset."""
    pipeline.cmd_synth(root, n=n, steps=steps, seed=seed)


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--store", required=True, type=click.Path(), help="Instruction store root.")
@click.option("--mock/--http", default=True, show_default=True,
              help="Mock paraphrase client vs HTTP endpoint from the environment.")
@click.option("--max-parallel", default=4, show_default=True, type=int)
@click.option("--force", is_flag=True, help="Regenerate existing candidate sets.")
def gen(dataset, store, mock, max_parallel, force):
    """Generate candidate instructions for every trajectory."""
    if mock:
        client = MockLlmClient()
    else:
        config = LlmConfig.from_env()
        client = HttpLlmClient(config, dataset_root=dataset)
        max_parallel = config.max_parallel
    generated, failed = pipeline.cmd_gen(dataset, store, client,
                                         max_parallel=max_parallel, force=force)
    if failed:
        raise click.ClickException(f"{failed} trajectories failed generation")
    click.echo(f"generated candidates for {generated} trajectories", err=True)


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--store", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8712, show_default=True, type=int)
@click.option("--ui", "ui_dist", type=click.Path(file_okay=False), default=None,
              help="Static UI bundle to host at /.")
@click.option("--accept-all", is_flag=True,
              help="Accept all candidates for every trajectory and exit.")
def curate(dataset, store, host, port, ui_dist, accept_all):
    """Serve the curation API (or bulk-accept candidates with --accept-all)."""
    if accept_all:
        count = pipeline.cmd_accept_all(store)
        click.echo(f"curated {count} trajectories", err=True)
        return
    from .curation_api import serve
    from .instructions import InstructionStore

    if ui_dist is None:
        default_dist = Path("frontend") / "dist"
        ui_dist = default_dist if default_dist.exists() else None
    serve(InstructionStore(store), dataset, host=host, port=port, ui_dist=ui_dist)


def _train_options(fn):
    fn = click.option("--test-fraction", default=0.25, show_default=True, type=float)(fn)
    fn = click.option("--split-seed", default=0, show_default=True, type=int)(fn)
    fn = click.option("--pretrain-lr", default=1e-3, show_default=True, type=float)(fn)
    fn = click.option("--pretrain-epochs", default=40, show_default=True, type=int)(fn)
    fn = click.option("--alpha", default=64.0, show_default=True, type=float)(fn)
    fn = click.option("--r", default=32, show_default=True, type=int)(fn)
    fn = click.option("--seed", default=0, show_default=True, type=int)(fn)
    fn = click.option("--batch-size", default=32, show_default=True, type=int)(fn)
    fn = click.option("--lr", default=5e-5, show_default=True, type=float)(fn)
    fn = click.option("--epochs", default=30, show_default=True, type=int)(fn)
    return fn


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--store", type=click.Path(), default=None,
              help="Instruction store with curations (augmented training).")
@click.option("--single-instruction", is_flag=True,
              help="Train the canonical-phrasing baseline (no paraphrases).")
@click.option("--base", "base_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Reuse a pretrained base model dir.")
@click.option("--tag", default=None, help="Model directory name under <out>/models/.")
@_train_options
def train(dataset, out, store, single_instruction, base_dir, tag, epochs, lr,
          batch_size, seed, r, alpha, pretrain_epochs, pretrain_lr,
          split_seed, test_fraction):
    """Fit stats and train the baseline or the LoRA-augmented policy."""
    if not single_instruction and store is None:
        raise click.UsageError("augmented training needs --store (or pass --single-instruction)")
    cfg = _pipeline_config(dataset, out, epochs, lr, batch_size, seed, r, alpha,
                           pretrain_epochs, pretrain_lr, test_fraction, split_seed)
    model_dir = pipeline.cmd_train(cfg, store_root=store,
                                   single_instruction=single_instruction,
                                   base_dir=base_dir, tag=tag)
    click.echo(f"model written to {model_dir}", err=True)


@main.command("eval")
@click.option("--dataset", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--store", type=click.Path(), default=None)
@click.option("--instructions", default="canonical", show_default=True,
              type=click.Choice(["canonical", "paraphrase"]))
@click.option("--split", "split_name", default="test", show_default=True,
              type=click.Choice(["test", "train"]))
@click.option("--tag", default=None, help="Override the report's model tag.")
@click.option("--eval-seed", default=1234, show_default=True, type=int)
@click.option("--ks", default="0,5", show_default=True,
              help="Comma-separated tolerance thresholds.")
@click.option("--test-fraction", default=0.25, show_default=True, type=float)
@click.option("--split-seed", default=0, show_default=True, type=int)
def eval_cmd(dataset, out, model_dir, store, instructions, split_name, tag,
             eval_seed, ks, test_fraction, split_seed):
    """Score a trained model over one side of the dataset split."""
    if instructions == "paraphrase" and store is None:
        raise click.UsageError("paraphrase evaluation needs --store")
    ks_tuple = tuple(int(part) for part in ks.split(","))
    cfg = pipeline.PipelineConfig(
        dataset_root=str(dataset), out_dir=str(out),
        test_fraction=test_fraction, split_seed=split_seed,
        eval_seed=eval_seed, ks=ks_tuple)
    report_path = pipeline.cmd_eval(cfg, model_dir, store_root=store,
                                    instructions=instructions,
                                    split_name=split_name, tag=tag)
    click.echo(f"report written to {report_path}", err=True)


@main.command()
@click.option("--report-a", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report-b", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--name", default="compare", show_default=True)
def compare(report_a, report_b, out, name):
    """Diff two eval reports (text, JSON, and a bar figure)."""
    path = pipeline.cmd_compare(report_a, report_b, out, name=name)
    click.echo(f"comparison written to {path}", err=True)


if __name__ == "__main__":
    main()
