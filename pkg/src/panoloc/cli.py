"""Command-line entry point: prepare-data, train, embed, eval, query and ablate."""

from __future__ import annotations

import csv
import logging
import sys
from pathlib import Path

import click
import torch
import yaml

from .config import RunConfig, load_config, save_config
from .data.io import load_image, read_manifest
from .data.poses import PoseFormatError
from .pipeline import DatasetError, prepare_sequences, prepare_synthetic
from .retrieval import (build_database, evaluate_direction, query_topk, read_descriptors,
                        select_eval_queries, write_descriptors, write_report)
from .training import (CheckpointMismatchError, NonFiniteLossError, PairDataset, embed_images,
                       embed_points, load_checkpoint, train)

logger = logging.getLogger("panoloc")

_EXPECTED = (DatasetError, PoseFormatError, CheckpointMismatchError, NonFiniteLossError,
             FileNotFoundError, ValueError)

ABLATION_VARIANTS = (  # (label, backbone, attention)
    ("base", "planar", False),
    ("+SCNN", "spherical", False),
    ("+Attention", "planar", True),
    ("both", "spherical", True),
)


def _config(ctx) -> RunConfig:
    return ctx.obj["config"]


def _checkpoint(ctx, path):
    """Load a checkpoint; an explicitly given config must match its architecture."""
    return load_checkpoint(path, _config(ctx) if ctx.obj["explicit"] else None)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML file with RunConfig keys.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Override one config key (YAML-parsed value); repeatable.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config_path, overrides, verbose):
    """Cross-modal place recognition between panoramas and LiDAR sub-maps."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    extra = {}
    for item in overrides:
        if "=" not in item:
            raise click.UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        extra[key.strip()] = yaml.safe_load(value)
    try:
        ctx.obj = {"config": load_config(config_path, **extra),
                   "explicit": bool(config_path or extra)}
    except (ValueError, TypeError) as exc:
        raise click.UsageError(f"bad configuration: {exc}") from exc


@cli.command("prepare-data")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--synthetic", nargs=2, type=int, metavar="N_PLACES SEED",
              help="Generate a procedural world instead of reading raw sequences.")
@click.option("--heldout", default=0, show_default=True,
              help="Synthetic only: number of perturbed viewpoints written to heldout.json.")
@click.option("--sequence", "sequences", multiple=True, help="Sequence directory name; repeatable.")
@click.pass_context
def prepare_data(ctx, out_dir, synthetic, heldout, sequences):
    """Cut ground-free sub-maps, pair them with images and write a manifest."""
    cfg = _config(ctx)
    if synthetic:
        n, seed = synthetic
        if n < 1:
            raise click.BadParameter("need at least one place", param_hint="--synthetic")
        path = prepare_synthetic(out_dir, n, seed, cfg, heldout)
    else:
        root = cfg.resolved_data_root()
        if root is None:
            raise click.UsageError("no data root: set data_root in the config or PANOLOC_DATA_ROOT")
        path = prepare_sequences(root, out_dir, cfg, sequences or None)
    entries, _, _ = read_manifest(path)
    click.echo(f"wrote {path} ({len(entries)} samples)")


@cli.command("train")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), help="Checkpoint to continue from.")
@click.pass_context
def train_cmd(ctx, manifest, out_dir, resume):
    """Jointly train both encoders; one checkpoint per epoch plus loss_log.csv."""
    cfg = _config(ctx)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    save_config(cfg, Path(out_dir) / "config.yaml")
    dataset = PairDataset.from_manifest(manifest, cfg.image_size)
    result = train(cfg, dataset, out_dir, resume,
                   progress=lambda row: click.echo(f"epoch {row['epoch']}: loss {row['total']:.4f}"))
    click.echo(f"checkpoint: {result.checkpoint}")


@cli.command("embed")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--modality", required=True, type=click.Choice(["image", "point"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def embed_cmd(ctx, checkpoint, manifest, modality, out_path):
    """Write one unit-norm descriptor per manifest sample."""
    model, state = _checkpoint(ctx, checkpoint)
    cfg = RunConfig.from_dict({**state["config"], "pretrained": None})
    dataset = PairDataset.from_manifest(manifest, cfg.image_size)
    if modality == "image":
        desc = embed_images(model, dataset.images, state["image_mean"], state["image_std"])
    else:
        desc = embed_points(model, dataset.points, cfg)
    write_descriptors(out_path, dataset.ids, dataset.positions, desc, modality)
    click.echo(f"wrote {len(dataset)} {modality} descriptors to {out_path}")


def _direction(query_modality, db_modality) -> str:
    code = {"image": "2d", "point": "3d"}
    return f"{code.get(query_modality, query_modality)}-{code.get(db_modality, db_modality)}"


@cli.command("eval")
@click.option("--queries", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--database", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--direction", help="Report label; defaults to <query modality>-<database modality>.")
@click.option("--all-queries", is_flag=True, help="Skip the query-spacing filter.")
@click.pass_context
def eval_cmd(ctx, queries, database, out_dir, direction, all_queries):
    """Recall@1..25 and recall@1% for one retrieval direction."""
    cfg = _config(ctx)
    q_ids, q_pos, q_desc, q_mod = read_descriptors(queries)
    d_ids, d_pos, d_desc, d_mod = read_descriptors(database)
    db = build_database(zip(d_ids, d_desc, d_pos))
    keep = list(range(len(q_ids))) if all_queries else select_eval_queries(q_pos, cfg.eval_spacing)
    report = evaluate_direction(direction or _direction(q_mod, d_mod), q_desc[keep], q_pos[keep], db,
                                same_place=cfg.same_place)
    path = write_report([report], out_dir)
    click.echo(path.read_text(), nl=False)


@cli.command("query")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--database", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-k", "--top", "k", default=5, show_default=True)
@click.pass_context
def query_cmd(ctx, checkpoint, image_path, database, k):
    """Localize one panorama against a descriptor database."""
    model, state = _checkpoint(ctx, checkpoint)
    cfg = RunConfig.from_dict({**state["config"], "pretrained": None})
    desc = embed_images(model, [load_image(image_path, cfg.image_size)], state["image_mean"], state["image_std"])[0]
    ids, pos, d, _ = read_descriptors(database)
    db = build_database(zip(ids, d, pos))
    where = db.position_map()
    click.echo("rank,id,distance,x,y,z")
    for rank, (i, dist) in enumerate(query_topk(db, desc, min(k, len(db))), 1):
        x, y, z = where[i]
        click.echo(f"{rank},{i},{dist:.6f},{x:.3f},{y:.3f},{z:.3f}")


@cli.command("ablate")
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--queries", "query_manifest", type=click.Path(exists=True, dir_okay=False),
              help="Manifest of query samples; defaults to the training manifest.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def ablate_cmd(ctx, manifest, query_manifest, out_dir):
    """Train and evaluate the four spherical-sampling / attention variants."""
    cfg = _config(ctx)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, backbone, attention in ABLATION_VARIANTS:
        vcfg = cfg.replace(backbone=backbone, attention=attention)
        run_dir = out / label.replace("+", "plus_")
        data = PairDataset.from_manifest(manifest, vcfg.image_size)
        queries = PairDataset.from_manifest(query_manifest, vcfg.image_size) if query_manifest else data
        result = train(vcfg, data, run_dir)
        state = torch.load(result.checkpoint, map_location="cpu", weights_only=False)
        vp = embed_points(result.model, data.points, vcfg)
        vi = embed_images(result.model, queries.images, state["image_mean"], state["image_std"])
        db = build_database(zip(data.ids, vp, data.positions))
        keep = select_eval_queries(queries.positions, vcfg.eval_spacing)
        rep = evaluate_direction("2d-3d", vi[keep], queries.positions[keep], db, same_place=vcfg.same_place)
        rows.append({"variant": label, "spherical": backbone == "spherical", "attention": attention,
                     "recall@1": rep.recalls[0], "recall@5": rep.recalls[min(4, len(rep.recalls) - 1)],
                     "recall@1%": rep.recall_1pct, "final_loss": result.history[-1]["total"]})
        click.echo(f"{label}: recall@1 {rep.recalls[0]:.2f}")
    write_ablation_table(rows, out)
    click.echo((out / "ablation.txt").read_text(), nl=False)


def write_ablation_table(rows, out_dir) -> None:
    out_dir = Path(out_dir)
    keys = ["variant", "spherical", "attention", "recall@1", "recall@5", "recall@1%", "final_loss"]
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})
    mark = {True: "x", False: ""}
    lines = [f"{'variant':<12}{'SCNN':^6}{'Attn':^6}{'R@1':>8}{'R@5':>8}{'R@1%':>8}{'loss':>9}"]
    for r in rows:
        lines.append(f"{r['variant']:<12}{mark[r['spherical']]:^6}{mark[r['attention']]:^6}"
                     f"{r['recall@1']:8.2f}{r['recall@5']:8.2f}{r['recall@1%']:8.2f}{r['final_loss']:9.4f}")
    (out_dir / "ablation.txt").write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="panoloc", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except _EXPECTED as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
