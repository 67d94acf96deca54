"""HTTP service tests using an in-process test client over the small
synthetic corpus."""
import base64
import threading
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from foramslice.classify import ClassProbabilities, EnsembleConfig, HuNearestProvider
from foramslice.errors import ProviderUnavailable
from foramslice.pngio import decode_image, encode_png
from foramslice.service import ServiceConfig, create_app
from foramslice.volume_io import extract_slice


class _BrokenProvider:
    provider_id = "broken"

    def predict(self, image, slice_id=None):
        raise ProviderUnavailable("offline")


class _FixedProvider:
    def __init__(self, provider_id, vec):
        self.provider_id = provider_id
        self.vec = np.asarray(vec, dtype=np.float64)

    def predict(self, image, slice_id=None):
        return ClassProbabilities(self.vec, self.provider_id)


@pytest.fixture(scope="module")
def service(small_volumes, small_index):
    provider = HuNearestProvider.from_corpus_index(small_index)
    labels = provider.labels
    config = ServiceConfig(
        labels=labels,
        index=small_index,
        providers={
            provider.provider_id: provider,
            "broken": _BrokenProvider(),
        },
        ensembles={
            "default": EnsembleConfig(
                labels=labels, primary_provider_id=provider.provider_id
            )
        },
        max_upload_bytes=512 * 1024,
    )
    with TestClient(create_app(config)) as client:
        yield client


def slice_png_b64(small_volumes, vi=0, z=25) -> str:
    sl = extract_slice(small_volumes[vi], "Z", z)
    return base64.b64encode(encode_png(sl)).decode()


def upload(service, small_volumes, vi=0, z=25) -> str:
    body = {"image_b64": slice_png_b64(small_volumes, vi, z)}
    r = service.post("/api/preprocess", json=body)
    assert r.status_code == 200, r.text
    return r.json()["upload_id"]


# --- volumes ---

def test_volumes_endpoint(service, small_volumes, small_index):
    r = service.get("/api/volumes")
    assert r.status_code == 200
    body = r.json()
    assert {v["id"] for v in body["volumes"]} == {v.volume_id for v in small_volumes}
    assert sum(body["species_totals"].values()) == len(small_index)
    for v in body["volumes"]:
        assert v["slice_count"] == sum(v["per_axis"].values())


def test_index_not_ready_returns_503(small_index):
    release = threading.Event()

    def slow_loader():
        release.wait(5)
        return small_index

    config = ServiceConfig(index=None, index_loader=slow_loader)
    with TestClient(create_app(config)) as client:
        r = client.get("/api/volumes")
        assert r.status_code == 503
        assert r.json()["code"] == "index_not_ready"
        release.set()
        deadline = time.monotonic() + 5
        while time.monotonic() < deadline:
            r = client.get("/api/volumes")
            if r.status_code == 200:
                break
            time.sleep(0.05)
        assert r.status_code == 200


# --- preprocess ---

def test_preprocess_happy_path(service, small_volumes):
    body = {"image_b64": slice_png_b64(small_volumes), "target_size": 96}
    r = service.post("/api/preprocess", json=body)
    assert r.status_code == 200
    out = r.json()
    assert out["upload_id"]
    assert not out["report"]["rejected"]
    preview = decode_image(base64.b64decode(out["preview_png_b64"]))
    assert preview.pixels.shape == (96, 96)
    mask = decode_image(base64.b64decode(out["mask_png_b64"]))
    assert mask.pixels.shape == (96, 96)


def test_preprocess_error_paths(service, small_volumes):
    r = service.post("/api/preprocess", json={"image_b64": "@@not-base64@@"})
    assert r.status_code == 400 and r.json()["code"] == "bad_payload"

    r = service.post(
        "/api/preprocess",
        json={"image_b64": base64.b64encode(b"plain text").decode()},
    )
    assert r.status_code == 400 and r.json()["code"] == "undecodable"

    huge = base64.b64encode(b"\x00" * (600 * 1024)).decode()
    r = service.post("/api/preprocess", json={"image_b64": huge})
    assert r.status_code == 413 and r.json()["code"] == "too_large"

    # out-of-range sensitivity is schema-rejected
    r = service.post(
        "/api/preprocess",
        json={"image_b64": slice_png_b64(small_volumes), "sensitivity": 1.5},
    )
    assert r.status_code == 422


def test_preprocess_max_sensitivity_hint(service):
    # dim blob: max sensitivity pushes the threshold above every pixel
    pixels = np.zeros((64, 64), dtype=np.float32)
    pixels[20:44, 20:44] = 0.35
    b64 = base64.b64encode(encode_png(pixels)).decode()
    r = service.post("/api/preprocess", json={"image_b64": b64, "sensitivity": 1.0})
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "empty_foreground"
    assert "sensitivity" in body["hint"]


# --- classify ---

def test_classify_happy_path(service, small_volumes):
    upload_id = upload(service, small_volumes, vi=0, z=25)
    r = service.post("/api/classify", json={"upload_id": upload_id, "top_k": 2})
    assert r.status_code == 200
    out = r.json()
    assert len(out["predictions"]) == 2
    confs = [p["confidence"] for p in out["predictions"]]
    assert confs == sorted(confs, reverse=True)
    # the broken provider is skipped, not fatal
    assert list(out["provider_vectors"]) == ["hu-nearest"]
    assert sum(out["provider_vectors"]["hu-nearest"]) == pytest.approx(1.0)


def test_classify_error_paths(service, small_volumes):
    r = service.post("/api/classify", json={"upload_id": "nope"})
    assert r.status_code == 404 and r.json()["code"] == "unknown_upload"

    upload_id = upload(service, small_volumes)
    r = service.post(
        "/api/classify", json={"upload_id": upload_id, "ensemble_config_id": "nope"}
    )
    assert r.status_code == 404 and r.json()["code"] == "unknown_ensemble"


def test_classify_all_providers_down(small_index):
    labels = ["x", "y"]
    config = ServiceConfig(
        labels=labels,
        index=small_index,
        providers={"broken": _BrokenProvider()},
        ensembles={
            "default": EnsembleConfig(labels=labels, primary_provider_id="broken")
        },
    )
    with TestClient(create_app(config)) as client:
        pixels = np.zeros((64, 64), dtype=np.float32)
        pixels[16:48, 16:48] = 0.9
        b64 = base64.b64encode(encode_png(pixels)).decode()
        upload_id = client.post(
            "/api/preprocess", json={"image_b64": b64}
        ).json()["upload_id"]
        r = client.post("/api/classify", json={"upload_id": upload_id})
        assert r.status_code == 424 and r.json()["code"] == "no_providers"


def test_classify_missing_specialist(small_index):
    from foramslice.classify import PatchRule

    labels = ["x", "y"]
    config = ServiceConfig(
        labels=labels,
        index=small_index,
        providers={"fixed": _FixedProvider("fixed", [0.9, 0.1])},
        ensembles={
            "default": EnsembleConfig(
                labels=labels,
                primary_provider_id="fixed",
                rules=[PatchRule(frozenset({"x"}), "absent")],
            )
        },
    )
    with TestClient(create_app(config)) as client:
        pixels = np.zeros((64, 64), dtype=np.float32)
        pixels[16:48, 16:48] = 0.9
        b64 = base64.b64encode(encode_png(pixels)).decode()
        upload_id = client.post(
            "/api/preprocess", json={"image_b64": b64}
        ).json()["upload_id"]
        r = client.post("/api/classify", json={"upload_id": upload_id})
        assert r.status_code == 424 and r.json()["code"] == "missing_provider"


# --- match jobs ---

def poll_until_done(service, job_id, timeout=120.0):
    deadline = time.monotonic() + timeout
    progress_seen = []
    while time.monotonic() < deadline:
        r = service.get(f"/api/match/{job_id}")
        assert r.status_code == 200
        body = r.json()
        progress_seen.append(body["progress"])
        if body["state"] in ("done", "failed"):
            return body, progress_seen
        time.sleep(0.1)
    raise AssertionError("job did not finish in time")


def test_match_job_flow(service, small_volumes):
    upload_id = upload(service, small_volumes, vi=1, z=30)
    r = service.post("/api/match", json={"upload_id": upload_id, "top_n": 3})
    assert r.status_code == 200
    handle = r.json()
    assert handle["state"] in ("queued", "running")

    body, progress = poll_until_done(service, handle["job_id"])
    assert body["state"] == "done", body
    assert progress == sorted(progress)  # monotone progress
    assert body["progress"] == 1.0
    results = body["results"]
    assert 1 <= len(results) <= 3
    top = results[0]
    assert top["volume_id"] == small_volumes[1].volume_id
    assert top["slice_index"] == 30
    assert top["thumbnail_png_b64"]
    ctx = body["matched_context"]
    assert ctx["volume_id"] == top["volume_id"]
    assert ctx["species"] == small_volumes[1].species
    assert tuple(ctx["dims"]) == tuple(small_volumes[1].header.dims)
    assert body["timing"]["corpus_slices"] > 0


def test_match_subset_filter(service, small_volumes):
    upload_id = upload(service, small_volumes, vi=0, z=20)
    only = small_volumes[2].volume_id
    r = service.post(
        "/api/match",
        json={"upload_id": upload_id, "candidate_volume_ids": [only], "top_n": 5},
    )
    body, _ = poll_until_done(service, r.json()["job_id"])
    assert body["state"] == "done"
    assert {row["volume_id"] for row in body["results"]} == {only}


def test_match_error_paths(service, small_volumes):
    r = service.get("/api/match/doesnotexist")
    assert r.status_code == 410 and r.json()["code"] == "unknown_job"

    r = service.post("/api/match", json={"upload_id": "nope"})
    assert r.status_code == 404

    upload_id = upload(service, small_volumes)
    r = service.post("/api/match", json={"upload_id": upload_id, "top_n": 99})
    assert r.status_code == 422  # schema bound: top_n <= 50


def test_match_empty_subset_fails_job(service, small_volumes):
    upload_id = upload(service, small_volumes)
    r = service.post(
        "/api/match",
        json={"upload_id": upload_id, "candidate_volume_ids": ["ghost"]},
    )
    body, _ = poll_until_done(service, r.json()["job_id"])
    assert body["state"] == "failed"
    assert body["error"]


def test_queue_limit_returns_409(small_index, small_volumes):
    config = ServiceConfig(
        index=small_index,
        workers=1,
        queue_limit=1,
        ensembles={},
    )
    with TestClient(create_app(config)) as client:
        sl = extract_slice(small_volumes[0], "Z", 25)
        b64 = base64.b64encode(encode_png(sl)).decode()
        upload_id = client.post(
            "/api/preprocess", json={"image_b64": b64}
        ).json()["upload_id"]
        first = client.post("/api/match", json={"upload_id": upload_id})
        assert first.status_code == 200
        second = client.post("/api/match", json={"upload_id": upload_id})
        assert second.status_code == 409
        assert second.json()["code"] == "queue_full"


def test_upload_ttl_expiry(small_index, small_volumes):
    config = ServiceConfig(index=small_index, upload_ttl_seconds=0.05, ensembles={})
    with TestClient(create_app(config)) as client:
        sl = extract_slice(small_volumes[0], "Z", 25)
        b64 = base64.b64encode(encode_png(sl)).decode()
        upload_id = client.post(
            "/api/preprocess", json={"image_b64": b64}
        ).json()["upload_id"]
        time.sleep(0.1)
        r = client.post("/api/match", json={"upload_id": upload_id})
        assert r.status_code == 404 and r.json()["code"] == "unknown_upload"


# --- static assets ---

def test_static_assets_served_without_shadowing_api(small_index, tmp_path):
    (tmp_path / "index.html").write_text("<html><body>dashboard</body></html>")
    config = ServiceConfig(index=small_index, ensembles={}, static_dir=str(tmp_path))
    with TestClient(create_app(config)) as client:
        r = client.get("/")
        assert r.status_code == 200
        assert "dashboard" in r.text
        assert client.get("/api/volumes").status_code == 200


def test_missing_static_dir_is_ignored(small_index):
    config = ServiceConfig(
        index=small_index, ensembles={}, static_dir="/no/such/dir"
    )
    with TestClient(create_app(config)) as client:
        assert client.get("/api/volumes").status_code == 200


# --- spec ---

def test_spec_endpoint_lists_routes(service):
    r = service.get("/api/spec")
    assert r.status_code == 200
    paths = r.json()["paths"]
    for route in ("/api/volumes", "/api/preprocess", "/api/classify", "/api/match"):
        assert route in paths
