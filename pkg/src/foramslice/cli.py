"""Command-line entry points for the full pipeline.

Exit codes: 0 success, 1 domain error (bad data, empty foreground, corrupt
index, ...), 2 usage error (click's default).
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .classify import EnsembleConfig, HuNearestProvider, combine_patch_ensemble, top_k
from .curation import SpecimenStats, split_specimens
from .errors import ForamsliceError
from .evaluation import evaluate, load_labels_tsv, load_predictions_tsv, records_from_files
from .image_metrics import MetricScore, dice, hu_distance, hu_moments, ncc, ssim
from .matcher import MatchParams, build_or_load_index, load_index, match_query
from .orb import OrbParams, orb_detect, orb_match_score
from .phantom import make_phantom_corpus, write_phantom_dataset
from .pngio import load_image, save_png
from .preprocess import PreprocessParams, preprocess_pipeline, segment_foreground
from .volume_io import extract_slice, load_manifest, load_volume


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_corpus(manifest_path):
    manifest = load_manifest(manifest_path)
    return [load_volume(e.path, e) for e in manifest.entries]


@click.group()
@click.option("--verbose", is_flag=True, help="Chatty progress output.")
@click.pass_context
def main(ctx, verbose):
    """Micro-CT slice analysis toolkit."""
    ctx.ensure_object(dict)
    ctx.obj["verbose"] = verbose


@main.command()
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--count", default=5, show_default=True)
@click.option("--shape", default="64,64,80", show_default=True)
@click.option("--seed", default=1234, show_default=True)
def phantom(out, count, shape, seed):
    """Generate a synthetic volume corpus with a manifest."""
    try:
        dims = tuple(int(x) for x in shape.split(","))
        if len(dims) != 3 or any(d < 4 for d in dims):
            raise ValueError("shape must be three integers >= 4")
        volumes = make_phantom_corpus(count, shape=dims, seed=seed)
        manifest = write_phantom_dataset(out, volumes)
    except (ValueError, OSError) as e:
        _fail(str(e))
    click.echo(f"wrote {len(manifest.entries)} volumes to {out}")


@main.command(name="slice")
@click.argument("volume_path", type=click.Path(exists=True))
@click.option("--axis", default="Z", show_default=True, type=click.Choice(["X", "Y", "Z"], case_sensitive=False))
@click.option("--index", "slice_index", required=True, type=int)
@click.option("--out", required=True, type=click.Path(), help="Output PNG path.")
def slice_cmd(volume_path, axis, slice_index, out):
    """Export one axis-aligned plane of a volume as a grayscale PNG."""
    try:
        volume = load_volume(volume_path)
        image = extract_slice(volume, axis, slice_index)
        save_png(image, out)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    click.echo(f"wrote {image.pixels.shape[1]}x{image.pixels.shape[0]} slice to {out}")


@main.command()
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--sensitivity", default=0.0, show_default=True)
@click.option("--size", default=224, show_default=True)
@click.option("--out", type=click.Path(), help="Write the processed image PNG here.")
@click.option("--mask-out", type=click.Path(), help="Write the mask PNG here.")
@click.option("--json", "as_json", is_flag=True)
def preprocess(image_path, sensitivity, size, out, mask_out, as_json):
    """Segment and normalize a single slice image."""
    try:
        image = load_image(image_path)
        params = PreprocessParams(sensitivity=sensitivity, target_size=size)
        result = preprocess_pipeline(image, params)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    if as_json:
        click.echo(json.dumps(result.report.to_dict(), indent=2))
    else:
        r = result.report
        status = "rejected: " + (r.reason or "?") if r.rejected else "ok"
        click.echo(f"{status}  content={r.content_score:.4f} threshold={r.threshold}")
    if result.image is None:
        sys.exit(1)
    if out:
        save_png(result.image, out)
    if mask_out:
        save_png(result.mask.bits, mask_out)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--budget", default=200_000, show_default=True)
@click.option("--out", type=click.Path(), help="Write the assignment JSON here.")
@click.option("--json", "as_json", is_flag=True)
def split(manifest_path, seed, budget, out, as_json):
    """Assign specimens to train/val/test, balancing per-split counts."""
    try:
        volumes = _load_corpus(manifest_path)
        stats = [
            SpecimenStats(
                specimen_id=v.specimen_id,
                species=v.species,
                usable_slice_count=v.header.dims[2],
            )
            for v in volumes
        ]
        assignment = split_specimens(stats, seed=seed, budget=budget)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    text = assignment.to_json()
    if out:
        Path(out).write_text(text)
    if as_json or not out:
        click.echo(text)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Index file path.")
@click.option("--axes", default="Z", show_default=True, help="Comma-separated subset of X,Y,Z.")
@click.option("--match-size", default=64, show_default=True)
@click.pass_context
def index(ctx, manifest_path, out, axes, match_size):
    """Build (or reuse) the slice-matching corpus index."""
    try:
        volumes = _load_corpus(manifest_path)
        axes_t = tuple(a.strip().upper() for a in axes.split(","))
        progress = None
        if ctx.obj.get("verbose"):
            progress = lambda f: click.echo(f"\rindexing {f * 100:5.1f}%", nl=False, err=True)
        idx = build_or_load_index(
            out, volumes, match_size=match_size, axes=axes_t, progress=progress
        )
        if progress:
            click.echo("", err=True)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    click.echo(f"index: {len(idx)} slices from {len(volumes)} volumes -> {out}")


@main.command()
@click.argument("query_path", type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--volumes", help="Comma-separated candidate volume ids.")
@click.option("--top", default=5, show_default=True)
@click.option("--sensitivity", default=0.0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def match(query_path, index_path, volumes, top, sensitivity, as_json):
    """Find the most similar indexed slices for a query image."""
    try:
        idx = load_index(index_path)
        image = load_image(query_path)
        mask = segment_foreground(image, PreprocessParams(sensitivity=sensitivity))
        params = MatchParams(
            candidate_volume_ids=(
                frozenset(v.strip() for v in volumes.split(",")) if volumes else None
            )
        )
        results, timing = match_query(image, mask, idx, params)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    results = results[:top]
    if as_json:
        click.echo(json.dumps(
            {"results": [r.to_dict() for r in results], "timing": timing.to_dict()},
            indent=2,
        ))
        return
    click.echo("volume  axis  index  rotation  combined  ssim    ncc     orb")
    for r in results:
        click.echo(
            f"{r.volume_id:<7} {r.axis:<5} {r.slice_index:<6} "
            f"{r.best_rotation:<9.1f} {r.combined:<9.4f} "
            f"{r.ssim:<7.4f} {r.ncc:<7.4f} {r.orb:.4f}"
        )


@main.command()
@click.argument("query_path", type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(exists=True))
@click.option("--ensemble-config", type=click.Path(exists=True),
              help="JSON ensemble config; defaults to the built-in baseline alone.")
@click.option("--top", default=5, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def classify(query_path, index_path, ensemble_config, top, as_json):
    """Rank species for a slice image with the built-in baseline provider."""
    try:
        idx = load_index(index_path)
        image = load_image(query_path)
        provider = HuNearestProvider.from_corpus_index(idx)
        if ensemble_config:
            config = EnsembleConfig.from_json(Path(ensemble_config).read_text())
        else:
            config = EnsembleConfig(
                labels=provider.labels, primary_provider_id=provider.provider_id
            )
        predictions = {provider.provider_id: provider.predict(image)}
        combined = combine_patch_ensemble(predictions, config)
        ranked = top_k(combined, min(top, len(config.labels)), config.labels)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    if as_json:
        click.echo(json.dumps(
            [{"label": l, "confidence": c} for l, c in ranked], indent=2
        ))
        return
    for label, conf in ranked:
        click.echo(f"{label:<24} {conf:.4f}")


@main.command(name="eval")
@click.option("--pred", required=True, type=click.Path(exists=True),
              help="TSV: slice_id, then one probability per class.")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True),
              help="TSV: slice_id, true label.")
@click.option("--label-order", help="Comma-separated class order; default sorted.")
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(pred, labels_path, label_order, as_json):
    """Score predictions: confusion, P/R/F1, top-k, AUC."""
    try:
        predictions = load_predictions_tsv(pred)
        label_map = load_labels_tsv(labels_path)
        records = records_from_files(predictions, label_map)
        if label_order:
            labels = [l.strip() for l in label_order.split(",")]
        else:
            labels = sorted(set(label_map.values()))
        report = evaluate(records, labels)
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    click.echo(report.to_json() if as_json else report.to_markdown())


@main.command()
@click.option("--kind", required=True,
              type=click.Choice(["ssim", "ncc", "dice", "hu", "orb"]))
@click.argument("path_a", type=click.Path(exists=True))
@click.argument("path_b", type=click.Path(exists=True))
def metric(kind, path_a, path_b):
    """Score two grayscale images with one similarity metric."""
    try:
        a = load_image(path_a)
        b = load_image(path_b)
        if kind == "ssim":
            score = ssim(a.pixels, b.pixels)
        elif kind == "ncc":
            score = ncc(a.pixels, b.pixels)
        elif kind == "dice":
            pp = PreprocessParams()
            score = dice(
                segment_foreground(a, pp).bits, segment_foreground(b, pp).bits
            )
        elif kind == "hu":
            pp = PreprocessParams()
            d = hu_distance(
                hu_moments(segment_foreground(a, pp).bits),
                hu_moments(segment_foreground(b, pp).bits),
            )
            score = MetricScore(value=d, kind="hu_distance")
        else:
            params = OrbParams()
            score = orb_match_score(
                orb_detect(a, params), orb_detect(b, params), params
            )
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    click.echo(json.dumps(
        {"kind": score.kind, "value": score.value, "valid": score.valid}, indent=2
    ))


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--index", "index_path", required=True, type=click.Path(),
              help="Index file; built here if missing or stale.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8501, show_default=True)
@click.option("--workers", default=2, show_default=True)
@click.option("--static", "static_dir", type=click.Path(),
              help="Directory of built dashboard assets to serve at /.")
def serve(manifest_path, index_path, host, port, workers, static_dir):
    """Start the HTTP service over a volume corpus."""
    import uvicorn

    from .service import ServiceConfig, create_app

    def loader():
        volumes = _load_corpus(manifest_path)
        return build_or_load_index(index_path, volumes)

    try:
        idx = loader()
        provider = HuNearestProvider.from_corpus_index(idx)
        config = ServiceConfig(
            labels=provider.labels,
            index=idx,
            providers={provider.provider_id: provider},
            ensembles={
                "default": EnsembleConfig(
                    labels=provider.labels,
                    primary_provider_id=provider.provider_id,
                )
            },
            workers=workers,
            host=host,
            port=port,
            static_dir=static_dir,
        )
    except (ForamsliceError, ValueError, OSError) as e:
        _fail(str(e))
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
