"""Procedural synthetic micro-CT-like volumes for tests and demos.

Three shape families, caricatures of real specimen morphologies:
  * ``spiky``  — sphere with cone-shaped radial spikes of uneven length
  * ``spiral`` — chambered helical spiral of growing blobs
  * ``disk``   — layered oblate ellipsoid with punched holes

All shapes are deliberately asymmetric in-plane and vary along z so each
slice is distinct. Fully deterministic under a fixed seed.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .volume_io import (
    Manifest,
    ManifestEntry,
    Volume,
    VolumeHeader,
    write_manifest,
    write_volume,
)

KINDS = ("spiky", "spiral", "disk")


def _grid(shape):
    nx, ny, nz = shape
    x = np.linspace(-1.0, 1.0, nx)
    y = np.linspace(-1.0, 1.0, ny)
    z = np.linspace(-1.0, 1.0, nz)
    return np.meshgrid(x, y, z, indexing="ij")


def _soft(d: np.ndarray, softness: float = 0.04) -> np.ndarray:
    """Smooth inside-ness of a signed distance-like field (d > 0 = inside)."""
    return 1.0 / (1.0 + np.exp(-d / softness))


def _spiky(shape, rng) -> np.ndarray:
    X, Y, Z = _grid(shape)
    r = np.sqrt(X**2 + Y**2 + Z**2)
    # asymmetric body: radius modulated by first and second azimuthal
    # harmonics so no slice is rotationally symmetric
    phi = np.arctan2(Y, X)
    p1, p2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
    body_r = 0.42 * (1.0 + 0.14 * np.cos(phi + p1) + 0.09 * np.cos(2 * phi + p2))
    body = _soft(body_r - r)
    # interior voids give neighboring slices distinct signatures
    for _ in range(int(rng.integers(8, 12))):
        c = rng.uniform(-0.3, 0.3, size=3)
        rho = rng.uniform(0.05, 0.12)
        d = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
        body = body * (1.0 - 0.9 * _soft(rho - d))
    n_spikes = int(rng.integers(9, 14))
    dirs = rng.normal(size=(n_spikes, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lengths = rng.uniform(0.62, 0.92, size=n_spikes)
    base_r = rng.uniform(0.07, 0.13, size=n_spikes)
    density = body
    for u, L, rb in zip(dirs, lengths, base_r):
        t = X * u[0] + Y * u[1] + Z * u[2]
        perp = np.sqrt(np.maximum(r**2 - t**2, 0.0))
        frac = np.clip(t / L, 0.0, 1.0)
        cone = _soft(rb * (1.0 - frac) - perp) * ((t > 0.0) & (t < L))
        density = np.maximum(density, cone)
    return density


def _spiral(shape, rng) -> np.ndarray:
    X, Y, Z = _grid(shape)
    density = np.zeros(shape, dtype=np.float64)
    n_chambers = int(rng.integers(12, 17))
    growth = rng.uniform(0.10, 0.14)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    z_pitch = rng.uniform(0.09, 0.12)
    for i in range(n_chambers):
        t = 0.9 * i
        rad = 0.12 * np.exp(growth * t)
        cx = rad * np.cos(t + phase)
        cy = rad * np.sin(t + phase)
        cz = -0.7 + z_pitch * i
        rho = 0.09 + 0.018 * i
        d = np.sqrt((X - cx) ** 2 + (Y - cy) ** 2 + (Z - cz) ** 2)
        density = np.maximum(density, _soft(rho - d))
    return density


def _disk(shape, rng) -> np.ndarray:
    X, Y, Z = _grid(shape)
    tilt = rng.uniform(-0.3, 0.3)
    # azimuthal radius modulation keeps the in-plane outline asymmetric
    phi = np.arctan2(Y, X)
    p1, p2 = rng.uniform(0.0, 2.0 * np.pi, size=2)
    rx = 0.75 * (1.0 + 0.12 * np.cos(phi + p1))
    ry = 0.60 * (1.0 + 0.10 * np.cos(2.0 * phi + p2))
    e = np.sqrt((X / rx) ** 2 + (Y / ry) ** 2 + ((Z + tilt * X) / 0.35) ** 2)
    body = _soft(1.0 - e)
    # concentric layer bands
    bands = 0.75 + 0.25 * np.cos(10.0 * np.pi * e)
    density = body * bands
    n_holes = int(rng.integers(4, 8))
    for _ in range(n_holes):
        c = rng.uniform(-0.5, 0.5, size=3) * np.array([1.0, 1.0, 0.5])
        rho = rng.uniform(0.08, 0.16)
        d = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
        density = density * (1.0 - _soft(rho - d))
    return density


_GENERATORS = {"spiky": _spiky, "spiral": _spiral, "disk": _disk}


def make_phantom_volume(
    kind: str,
    shape: tuple[int, int, int] = (64, 64, 80),
    seed: int = 0,
    specimen_id: str = "V0",
) -> Volume:
    if kind not in _GENERATORS:
        raise ValueError(f"unknown phantom kind {kind!r}")
    rng = np.random.default_rng(seed)
    density = _GENERATORS[kind](shape, rng)

    X, Y, Z = _grid(shape)
    texture = 0.75 + 0.2 * np.sin(5.5 * np.pi * X) * np.sin(4.5 * np.pi * Y) * np.sin(
        3.5 * np.pi * Z + 1.0
    )
    # blotchy intensity field, like the granular internal structure of a
    # real scan; gives corner detectors something to latch onto
    coarse = rng.random((10, 10, 27))
    blotch = ndimage.zoom(
        coarse, [s / c for s, c in zip(shape, coarse.shape)], order=1
    )
    texture = texture + 0.45 * (blotch - 0.5)
    values = density * np.clip(texture, 0.05, 1.0)
    values += 0.015 * rng.random(shape)  # faint background noise
    values = np.clip(values, 0.0, 1.0)

    raw = np.round(values * 255.0).astype(np.uint8)
    lo, hi = int(raw.min()), int(raw.max())
    voxels = (
        (raw.astype(np.float32) - lo) / (hi - lo)
        if hi > lo
        else np.zeros(shape, dtype=np.float32)
    )
    header = VolumeHeader(
        dims=shape,
        datatype="u8",
        scale_slope=1.0,
        scale_inter=0.0,
        voxel_size=(5.0, 5.0, 5.0),
    )
    return Volume(
        header=header,
        voxels=voxels.astype(np.float32),
        specimen_id=specimen_id,
        species=kind,
        raw_voxels=raw,
        degenerate=hi == lo,
    )


def make_phantom_corpus(
    n_volumes: int = 5,
    shape: tuple[int, int, int] = (64, 64, 80),
    seed: int = 1234,
) -> list[Volume]:
    volumes = []
    for i in range(n_volumes):
        kind = KINDS[i % len(KINDS)]
        volumes.append(
            make_phantom_volume(
                kind, shape=shape, seed=seed + i, specimen_id=f"V{i + 1}"
            )
        )
    return volumes


def write_phantom_dataset(out_dir, volumes: list[Volume]) -> Manifest:
    """Write volumes as .nii files plus a manifest.tsv next to them."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in volumes:
        path = out / f"{v.specimen_id}.nii"
        write_volume(v, path)
        entries.append(
            ManifestEntry(path=str(path), specimen_id=v.specimen_id, species=v.species)
        )
    manifest = Manifest(
        entries=entries,
        species_set=sorted({v.species for v in volumes}),
    )
    write_manifest(manifest, out / "manifest.tsv")
    return manifest
