"""Provider contract and ensemble combiner tests."""
import json
import stat
import sys

import numpy as np
import pytest

from foramslice.classify import (
    ClassProbabilities,
    EnsembleConfig,
    ExternalProcessProvider,
    HuNearestProvider,
    PatchRule,
    PrecomputedProvider,
    combine_majority,
    combine_patch_ensemble,
    top_k,
    validate_probs,
)
from foramslice.errors import (
    ContractViolation,
    MissingProvider,
    ProviderUnavailable,
)
from foramslice.volume_io import SliceImage, extract_slice

LABELS = ["alpha", "beta", "gamma"]


def probs(vec, provider_id="p"):
    return ClassProbabilities(np.asarray(vec, dtype=np.float64), provider_id)


# --- contract validation ---

def test_validate_probs_accepts_valid_and_rejects_invalid():
    validate_probs(np.array([0.2, 0.3, 0.5]))
    with pytest.raises(ContractViolation):
        validate_probs(np.array([[0.5, 0.5]]))  # not 1-D
    with pytest.raises(ContractViolation):
        validate_probs(np.array([0.6, 0.6]))  # sum > 1
    with pytest.raises(ContractViolation):
        validate_probs(np.array([-0.1, 1.1]))  # negative entry
    with pytest.raises(ContractViolation):
        validate_probs(np.array([0.5, 0.5]), n_classes=3)  # wrong length


def test_class_probabilities_validates_on_construction():
    with pytest.raises(ContractViolation):
        ClassProbabilities(np.array([0.9, 0.3]), "p")
    assert probs([0.1, 0.2, 0.7]).argmax() == 2


# --- providers ---

def test_precomputed_provider(tmp_path):
    path = tmp_path / "preds.tsv"
    path.write_text("# comment\ns1\t0.7\t0.2\t0.1\ns2\t0.1\t0.1\t0.8\n")
    provider = PrecomputedProvider(path, LABELS)
    out = provider.predict(None, slice_id="s1")
    np.testing.assert_allclose(out.probs, [0.7, 0.2, 0.1])
    assert out.provider_id == "precomputed"
    with pytest.raises(ProviderUnavailable):
        provider.predict(None, slice_id="missing")
    with pytest.raises(ProviderUnavailable):
        provider.predict(None)


def test_precomputed_provider_rejects_bad_rows(tmp_path):
    path = tmp_path / "preds.tsv"
    path.write_text("s1\t0.9\t0.9\t0.9\n")
    with pytest.raises(ContractViolation):
        PrecomputedProvider(path, LABELS)


def stub_provider_script(tmp_path, body):
    path = tmp_path / "stub.py"
    path.write_text("import sys, json\n" + body)
    return [sys.executable, str(path)]


def test_external_process_provider_round_trip(tmp_path, rng):
    cmd = stub_provider_script(
        tmp_path,
        "req = json.load(sys.stdin)\n"
        "h, w = req['size']\n"
        "print(json.dumps({'probs': [0.25, 0.25, 0.5] if h == w else [1, 0, 0]}))\n",
    )
    provider = ExternalProcessProvider(cmd, LABELS)
    image = SliceImage(pixels=rng.random((16, 16)).astype(np.float32))
    out = provider.predict(image, slice_id="q")
    np.testing.assert_allclose(out.probs, [0.25, 0.25, 0.5])


def test_external_process_provider_failure_modes(tmp_path, rng):
    image = SliceImage(pixels=rng.random((8, 8)).astype(np.float32))
    crash = ExternalProcessProvider(
        stub_provider_script(tmp_path, "sys.exit(3)\n"), LABELS
    )
    with pytest.raises(ProviderUnavailable):
        crash.predict(image)
    garbled = ExternalProcessProvider(
        stub_provider_script(tmp_path, "print('not json')\n"), LABELS
    )
    with pytest.raises(ContractViolation):
        garbled.predict(image)
    bad_vec = ExternalProcessProvider(
        stub_provider_script(tmp_path, "print(json.dumps({'probs': [0.9, 0.9, 0.9]}))\n"),
        LABELS,
    )
    with pytest.raises(ContractViolation):
        bad_vec.predict(image)
    missing = ExternalProcessProvider(["/nonexistent/binary"], LABELS)
    with pytest.raises(ProviderUnavailable):
        missing.predict(image)


def test_hu_nearest_provider_recovers_species(small_volumes, small_index):
    provider = HuNearestProvider.from_corpus_index(small_index)
    assert provider.labels == sorted({v.species for v in small_volumes})
    hits = 0
    picks = [(0, 20), (1, 25), (2, 30)]
    for vi, z in picks:
        sl = extract_slice(small_volumes[vi], "Z", z)
        out = provider.predict(sl)
        validate_probs(out.probs, len(provider.labels))
        hits += provider.labels[out.argmax()] == small_volumes[vi].species
    assert hits >= 2  # a geometry-only baseline, not a CNN


# --- patch ensemble ---

def test_patch_ensemble_identity_when_no_rule_fires():
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main")
    primary = probs([0.6, 0.3, 0.1], "main")
    out = combine_patch_ensemble({"main": primary}, config)
    assert out is primary  # bitwise identity, not a copy


def test_patch_ensemble_trigger_class_switch():
    rule = PatchRule(frozenset({"beta"}), "spec")
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[rule])
    primary = probs([0.2, 0.7, 0.1], "main")
    specialist = probs([0.1, 0.1, 0.8], "spec")
    out = combine_patch_ensemble({"main": primary, "spec": specialist}, config)
    np.testing.assert_allclose(out.probs, specialist.probs)
    assert out.provider_id == "patch-ensemble"


def test_patch_ensemble_confidence_floor():
    rule = PatchRule(frozenset(), "spec", confidence_floor=0.5)
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[rule])
    weak = probs([0.4, 0.35, 0.25], "main")
    strong = probs([0.8, 0.1, 0.1], "main")
    specialist = probs([0.0, 1.0, 0.0], "spec")
    fired = combine_patch_ensemble({"main": weak, "spec": specialist}, config)
    np.testing.assert_allclose(fired.probs, [0, 1, 0])
    kept = combine_patch_ensemble({"main": strong, "spec": specialist}, config)
    assert kept is strong


def test_patch_ensemble_blend_arithmetic():
    rule = PatchRule(frozenset({"alpha"}), "spec", blend=0.25)
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[rule])
    primary = probs([0.6, 0.3, 0.1], "main")
    specialist = probs([0.2, 0.2, 0.6], "spec")
    out = combine_patch_ensemble({"main": primary, "spec": specialist}, config)
    expect = 0.25 * specialist.probs + 0.75 * primary.probs
    expect /= expect.sum()
    np.testing.assert_allclose(out.probs, expect, atol=1e-12)
    assert out.probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_patch_ensemble_first_matching_rule_wins():
    r1 = PatchRule(frozenset({"alpha"}), "s1")
    r2 = PatchRule(frozenset({"alpha"}), "s2")
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[r1, r2])
    preds = {
        "main": probs([0.9, 0.05, 0.05], "main"),
        "s1": probs([0.0, 1.0, 0.0], "s1"),
        "s2": probs([0.0, 0.0, 1.0], "s2"),
    }
    out = combine_patch_ensemble(preds, config)
    np.testing.assert_allclose(out.probs, [0, 1, 0])


def test_patch_ensemble_missing_providers_raise():
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main")
    with pytest.raises(MissingProvider):
        combine_patch_ensemble({"other": probs([1, 0, 0], "other")}, config)
    rule = PatchRule(frozenset({"alpha"}), "spec")
    config2 = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[rule])
    with pytest.raises(MissingProvider):
        combine_patch_ensemble({"main": probs([1, 0, 0], "main")}, config2)


def test_patch_ensemble_rejects_unknown_trigger_class():
    rule = PatchRule(frozenset({"delta"}), "spec")
    config = EnsembleConfig(labels=LABELS, primary_provider_id="main", rules=[rule])
    with pytest.raises(ValueError):
        combine_patch_ensemble({"main": probs([1, 0, 0], "main")}, config)


def test_ensemble_config_json_round_trip():
    config = EnsembleConfig(
        labels=LABELS,
        primary_provider_id="main",
        rules=[PatchRule(frozenset({"beta", "gamma"}), "spec", 0.4, 0.5)],
        fallback="majority",
    )
    back = EnsembleConfig.from_json(config.to_json())
    assert back.labels == config.labels
    assert back.primary_provider_id == "main"
    assert back.fallback == "majority"
    assert back.rules == config.rules


# --- majority vote and top-k ---

def test_majority_vote_plurality_and_tie_break():
    preds = [
        probs([0.9, 0.05, 0.05], "a"),
        probs([0.8, 0.1, 0.1], "b"),
        probs([0.1, 0.8, 0.1], "c"),
    ]
    out = combine_majority(preds, LABELS)
    assert out.winner == "alpha" and out.votes == 2
    # 1-1 tie: break toward higher mean probability
    tie = combine_majority(
        [probs([0.9, 0.1, 0.0], "a"), probs([0.2, 0.8, 0.0], "b")], LABELS
    )
    assert tie.winner == "alpha"  # mean 0.55 vs 0.45
    assert tie.probs.probs.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        combine_majority([probs([1, 0, 0], "a")], LABELS)


def test_top_k_order_and_ties():
    p = probs([0.2, 0.5, 0.3])
    assert top_k(p, 2, LABELS) == [("beta", 0.5), ("gamma", 0.3)]
    tied = probs([0.4, 0.4, 0.2])
    assert [l for l, _ in top_k(tied, 3, LABELS)] == ["alpha", "beta", "gamma"]
    with pytest.raises(ValueError):
        top_k(p, 0, LABELS)
    with pytest.raises(ValueError):
        top_k(p, 4, LABELS)
