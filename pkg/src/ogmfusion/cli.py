"""Command line interface: generate, fuse-baseline, train, eval, aggregate, render."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import click
import yaml

from . import __version__
from .evaluation import baseline_predictor, evaluate_pairs, model_predictor
from .grid import GridGeometry
from .io import (
    Dataset,
    DatasetManifest,
    load_grid,
    load_templates,
    render,
    save_sample,
    write_manifest,
)
from .metrics import SUMMARY_FIELDS, aggregate, read_csv, write_csv, write_eval_csv
from .neural.loss import LossConfig
from .neural.train import TrainConfig, load_checkpoint, save_checkpoint, train, train_config_dict, write_log
from .simworld import CONFIGS, generate_sample_pairs, split_scenes

CONFIG_CHOICE = click.Choice(sorted(CONFIGS), case_sensitive=True)
SPLIT_CHOICE = click.Choice(["train", "val", "test", "all"])


def _split_pairs(ds: Dataset, split: str):
    names = ds.names(None if split == "all" else split)
    if not names:
        raise click.ClickException(f"split {split!r} of {ds.root} is empty")
    return names, [ds.load(n) for n in names]


def _load_train_cfg(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text("utf-8")
    doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return doc or {}


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Evidential occupancy grid fusion toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command()
@click.option("--templates", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scenario template YAML (default: bundled set).")
@click.option("--count", type=click.IntRange(min=1), required=True, help="Number of scenes.")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--overlap-max-distance", type=float, default=40.0, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
def generate(templates, count, seed, out, overlap_max_distance, workers):
    """Simulate COUNT scenes; two sample pairs per scene."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tpl = load_templates(templates)
    split = split_scenes(count, seed)
    geometry = GridGeometry()
    samples = {}
    with click.progressbar(generate_sample_pairs(tpl, count, overlap_max_distance, seed, geometry,
                                                 workers=workers),
                           length=2 * count, label="scenes", file=click.get_text_stream("stderr")) as bar:
        for pair in bar:
            samples[save_sample(pair, out)] = split[pair.scene]
    # the manifest is the commit point
    manifest = DatasetManifest(geometry, seed, samples,
                               extra={"overlap_max_distance": overlap_max_distance,
                                      "templates": [t.id for t in tpl]})
    write_manifest(manifest, out)
    click.echo(f"wrote {len(samples)} samples to {out}")


@main.command("fuse-baseline")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--config", type=CONFIG_CHOICE, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--split", type=SPLIT_CHOICE, default="test", show_default=True)
def fuse_baseline_cmd(dataset, config, seed, out, split):
    """Score the rule-based fusion under pose noise CONFIG."""
    ds = Dataset(dataset)
    names, pairs = _split_pairs(ds, split)
    recs = evaluate_pairs(names, pairs, config, ds.manifest.configs[config], seed,
                          {"baseline": baseline_predictor})
    write_eval_csv(recs, out)
    click.echo(f"wrote {len(recs)} rows to {out}")


@main.command("train")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--config", type=CONFIG_CHOICE, required=True)
@click.option("--train-cfg", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML or JSON with TrainConfig fields (and optional occupied_weight).")
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Per-epoch CSV (default: OUT.log.csv).")
def train_cmd(dataset, config, train_cfg, seed, out, log_path):
    """Train the fusion network on the train split under noise CONFIG."""
    ds = Dataset(dataset)
    raw = _load_train_cfg(train_cfg)
    loss_cfg = LossConfig(float(raw.pop("occupied_weight", 3.0)))
    try:
        cfg = TrainConfig.from_dict({**raw, "seed": seed})
    except TypeError as exc:
        raise click.BadParameter(str(exc), param_hint="--train-cfg") from exc
    _, train_pairs = _split_pairs(ds, "train")
    _, val_pairs = _split_pairs(ds, "val")
    params, rows = train(train_pairs, val_pairs, cfg, loss_cfg, ds.manifest.configs[config])
    save_checkpoint(params, out)
    write_log(rows, log_path or f"{out}.log.csv")
    Path(f"{out}.json").write_text(json.dumps({"config": config, "train": train_config_dict(cfg),
                                               "occupied_weight": loss_cfg.occupied_weight}, indent=2) + "\n")
    click.echo(f"best val loss {min(r['val_loss'] for r in rows):.5f}; checkpoint {out}")


@main.command("eval")
@click.option("--dataset", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--config", type=CONFIG_CHOICE, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--split", type=SPLIT_CHOICE, default="test", show_default=True)
@click.option("--with-baseline", is_flag=True, help="Also score the baseline on the same noise draws.")
def eval_cmd(dataset, checkpoint, config, seed, out, split, with_baseline):
    """Score a trained checkpoint under pose noise CONFIG."""
    ds = Dataset(dataset)
    names, pairs = _split_pairs(ds, split)
    predictors = {"ours": model_predictor(load_checkpoint(checkpoint))}
    if with_baseline:
        predictors["baseline"] = baseline_predictor
    recs = evaluate_pairs(names, pairs, config, ds.manifest.configs[config], seed, predictors)
    write_eval_csv(recs, out)
    click.echo(f"wrote {len(recs)} rows to {out}")


@main.command("aggregate")
@click.option("--in", "inputs", type=click.Path(exists=True, dir_okay=False), multiple=True, required=True)
@click.argument("more", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def aggregate_cmd(inputs, more, out):
    """Summarize eval CSVs per (config, method)."""
    rows = [r for path in (*inputs, *more) for r in read_csv(path)]
    if not rows:
        raise click.ClickException("input files contain no rows")
    write_csv(aggregate(rows), out, SUMMARY_FIELDS)
    click.echo(f"wrote {out}")


@main.command("render")
@click.option("--grid", "grid_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def render_cmd(grid_path, out):
    """Write a grid file as a PPM image (red occupied, green free)."""
    render(load_grid(grid_path), out)


if __name__ == "__main__":
    main()
