"""End-to-end command-line tests driving the full pipeline on a small
synthetic dataset. Exit codes: 0 ok, 1 domain error, 2 usage error."""
import json

import numpy as np
import pytest
from click.testing import CliRunner

from foramslice.cli import main
from foramslice.pngio import save_png
from foramslice.volume_io import extract_slice, load_manifest, load_volume


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, runner):
    """Phantom corpus written to disk once for all CLI tests."""
    root = tmp_path_factory.mktemp("cli-data")
    result = runner.invoke(
        main,
        ["phantom", "--out", str(root / "vols"), "--count", "3",
         "--shape", "48,48,56", "--seed", "7"],
    )
    assert result.exit_code == 0, result.output
    manifest_path = root / "vols" / "manifest.tsv"
    assert manifest_path.exists()

    # a query PNG taken straight from the first volume
    manifest = load_manifest(manifest_path)
    vol = load_volume(manifest.entries[0].path, manifest.entries[0])
    query = root / "query.png"
    save_png(extract_slice(vol, "Z", 25), query)

    index_path = root / "corpus.fsix"
    result = runner.invoke(
        main, ["index", "--manifest", str(manifest_path), "--out", str(index_path)]
    )
    assert result.exit_code == 0, result.output
    return {
        "root": root,
        "manifest": manifest_path,
        "index": index_path,
        "query": query,
        "volume": vol,
    }


def test_slice_export_round_trip(runner, dataset, tmp_path):
    out = tmp_path / "z25.png"
    result = runner.invoke(
        main,
        ["slice", str(dataset["root"] / "vols" / "V1.nii"),
         "--axis", "z", "--index", "25", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    from foramslice.pngio import load_image

    expect = extract_slice(dataset["volume"], "Z", 25)
    got = load_image(out)
    # PNG quantizes to 8 bits
    assert np.abs(got.pixels - expect.pixels).max() <= 1 / 255 + 1e-6

    result = runner.invoke(
        main,
        ["slice", str(dataset["root"] / "vols" / "V1.nii"),
         "--axis", "z", "--index", "999", "--out", str(out)],
    )
    assert result.exit_code == 1


def test_phantom_rejects_bad_shape(runner, tmp_path):
    result = runner.invoke(main, ["phantom", "--out", str(tmp_path), "--shape", "8,8"])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_preprocess_json_report(runner, dataset, tmp_path):
    out_png = tmp_path / "proc.png"
    result = runner.invoke(
        main,
        ["preprocess", str(dataset["query"]), "--size", "64",
         "--out", str(out_png), "--json"],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert not report["rejected"]
    assert report["bbox"] is not None
    assert out_png.exists()


def test_preprocess_rejects_flat_image(runner, tmp_path):
    flat = tmp_path / "flat.png"
    save_png(np.full((32, 32), 0.5, dtype=np.float32), flat)
    result = runner.invoke(main, ["preprocess", str(flat)])
    assert result.exit_code == 1
    assert "rejected" in result.output


def test_split_outputs_valid_json(runner, dataset, tmp_path):
    out = tmp_path / "splits.json"
    result = runner.invoke(
        main, ["split", "--manifest", str(dataset["manifest"]), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    body = json.loads(out.read_text())
    assert set(body["assignment"]) == {"V1", "V2", "V3"}
    assert body["split_totals"]["train"] > 0


def test_index_reuse_is_idempotent(runner, dataset):
    before = dataset["index"].stat().st_mtime_ns
    result = runner.invoke(
        main,
        ["index", "--manifest", str(dataset["manifest"]),
         "--out", str(dataset["index"])],
    )
    assert result.exit_code == 0
    assert dataset["index"].stat().st_mtime_ns == before


def test_match_table_and_json(runner, dataset):
    result = runner.invoke(
        main,
        ["match", str(dataset["query"]), "--index", str(dataset["index"]), "--top", "3"],
    )
    assert result.exit_code == 0, result.output
    lines = [l for l in result.output.splitlines() if l.strip()]
    assert lines[0].startswith("volume")
    assert len(lines) == 4

    result = runner.invoke(
        main,
        ["match", str(dataset["query"]), "--index", str(dataset["index"]),
         "--top", "3", "--json"],
    )
    assert result.exit_code == 0
    body = json.loads(result.output)
    top = body["results"][0]
    assert top["volume_id"] == dataset["volume"].volume_id
    assert top["slice_index"] == 25
    # PNG round trip quantizes to 8 bits, so near-1 rather than exactly 1
    assert top["combined"] > 0.99
    assert body["timing"]["corpus_slices"] > 0


def test_match_volume_subset(runner, dataset):
    result = runner.invoke(
        main,
        ["match", str(dataset["query"]), "--index", str(dataset["index"]),
         "--volumes", "V2", "--json"],
    )
    assert result.exit_code == 0
    body = json.loads(result.output)
    assert {r["volume_id"] for r in body["results"]} == {"V2"}

    result = runner.invoke(
        main,
        ["match", str(dataset["query"]), "--index", str(dataset["index"]),
         "--volumes", "ghost"],
    )
    assert result.exit_code == 1


def test_match_corrupt_index_is_domain_error(runner, dataset, tmp_path):
    broken = tmp_path / "broken.fsix"
    data = bytearray(dataset["index"].read_bytes())
    data[60] ^= 0xFF
    broken.write_bytes(bytes(data))
    result = runner.invoke(
        main, ["match", str(dataset["query"]), "--index", str(broken)]
    )
    assert result.exit_code == 1
    assert "error:" in result.output


def test_classify_ranks_true_species_first(runner, dataset):
    result = runner.invoke(
        main,
        ["classify", str(dataset["query"]), "--index", str(dataset["index"]),
         "--json"],
    )
    assert result.exit_code == 0, result.output
    ranked = json.loads(result.output)
    assert ranked[0]["label"] == dataset["volume"].species
    assert sum(r["confidence"] for r in ranked) == pytest.approx(1.0, abs=1e-6)


def test_metric_subcommand(runner, dataset, tmp_path):
    result = runner.invoke(
        main, ["metric", "--kind", "ssim", str(dataset["query"]), str(dataset["query"])]
    )
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert body["kind"] == "ssim" and body["value"] == pytest.approx(1.0)

    for kind in ("ncc", "dice", "hu", "orb"):
        result = runner.invoke(
            main,
            ["metric", "--kind", kind, str(dataset["query"]), str(dataset["query"])],
        )
        assert result.exit_code == 0, (kind, result.output)

    result = runner.invoke(
        main, ["metric", "--kind", "nope", str(dataset["query"]), str(dataset["query"])]
    )
    assert result.exit_code == 2  # click usage error


def test_eval_subcommand(runner, tmp_path):
    preds = tmp_path / "p.tsv"
    # default label order is sorted: columns are (blue, red)
    preds.write_text("s1\t0.2\t0.8\ns2\t0.7\t0.3\ns3\t0.4\t0.6\n")
    labels = tmp_path / "l.tsv"
    labels.write_text("s1\tred\ns2\tblue\ns3\tblue\n")
    result = runner.invoke(
        main, ["eval", "--pred", str(preds), "--labels", str(labels), "--json"]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["accuracy"] == pytest.approx(2 / 3)

    result = runner.invoke(main, ["eval", "--pred", str(preds), "--labels", str(labels)])
    assert result.exit_code == 0
    assert "| Species |" in result.output


def test_usage_errors_exit_2(runner):
    assert runner.invoke(main, ["match"]).exit_code == 2
    assert runner.invoke(main, ["no-such-command"]).exit_code == 2


def test_missing_file_is_domain_or_usage_error(runner, dataset):
    result = runner.invoke(
        main, ["match", "/no/such.png", "--index", str(dataset["index"])]
    )
    assert result.exit_code == 2  # click validates exists=True
