"""NIfTI-1 subset reader/writer, manifest handling, and axis-aligned slice extraction.

Only single-file ``.nii`` volumes with u8/i16/f32 voxels are supported; both
endiannesses are accepted (detected from the ``sizeof_hdr == 348`` probe).
Affine orientation (qform/sform), NIfTI-2 and compressed files are out of scope.

Slice orientation convention:
  * Z slice at index k: the (x, y) plane, x -> columns, y -> rows.
  * Y slice at index j: the (x, z) plane, x -> columns, z -> rows.
  * X slice at index i: the (y, z) plane, y -> columns, z -> rows.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    BadMagic,
    IndexOutOfRange,
    ManifestError,
    SizeMismatch,
    TruncatedHeader,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
MIN_FILE_SIZE = 352  # header + 4-byte extension flag

# NIfTI-1 datatype codes for the supported subset.
_DTYPE_CODES = {2: "u8", 4: "i16", 16: "f32"}
_DTYPE_TO_CODE = {v: k for k, v in _DTYPE_CODES.items()}
_NUMPY_DTYPES = {"u8": np.uint8, "i16": np.int16, "f32": np.float32}
_BYTES_PER_VOXEL = {"u8": 1, "i16": 2, "f32": 4}

AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class VolumeHeader:
    dims: tuple[int, int, int]
    datatype: str  # "u8" | "i16" | "f32"
    scale_slope: float
    scale_inter: float
    voxel_size: tuple[float, float, float]
    endian: str = "<"  # "<" little, ">" big
    vox_offset: int = MIN_FILE_SIZE

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def payload_bytes(self) -> int:
        return self.voxel_count * _BYTES_PER_VOXEL[self.datatype]


@dataclass(frozen=True)
class Provenance:
    volume_id: str
    axis: str  # "X" | "Y" | "Z"
    index: int


@dataclass
class SliceImage:
    """2D grayscale raster with values in [0, 1]."""

    pixels: np.ndarray  # float32, shape (height, width)
    provenance: Optional[Provenance] = None

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass
class Volume:
    header: VolumeHeader
    voxels: np.ndarray  # float32 normalized to [0,1], shape (nx, ny, nz)
    specimen_id: str
    species: str
    raw_voxels: np.ndarray = None  # original dtype values, pre-rescale
    degenerate: bool = False  # constant (zero-range) volume

    @property
    def volume_id(self) -> str:
        return self.specimen_id


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    specimen_id: str
    species: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    species_set: list[str] = field(default_factory=list)


def parse_header(data: bytes) -> VolumeHeader:
    """Decode the fixed 348-byte NIfTI-1 header layout."""
    if len(data) < MIN_FILE_SIZE:
        raise TruncatedHeader(
            f"need at least {MIN_FILE_SIZE} bytes, got {len(data)}"
        )
    magic = data[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise BadMagic(f"bad magic {magic!r}")

    # Endianness probe: sizeof_hdr must read 348 in the file's byte order.
    endian = None
    for cand in ("<", ">"):
        if struct.unpack_from(cand + "i", data, 0)[0] == HEADER_SIZE:
            endian = cand
            break
    if endian is None:
        raise BadMagic("sizeof_hdr != 348 in either byte order")

    dim = struct.unpack_from(endian + "8h", data, 40)
    datatype_code = struct.unpack_from(endian + "h", data, 70)[0]
    pixdim = struct.unpack_from(endian + "8f", data, 76)
    vox_offset = struct.unpack_from(endian + "f", data, 108)[0]
    scl_slope = struct.unpack_from(endian + "f", data, 112)[0]
    scl_inter = struct.unpack_from(endian + "f", data, 116)[0]

    if datatype_code not in _DTYPE_CODES:
        raise UnsupportedDatatype(f"datatype code {datatype_code}")

    nx, ny, nz = (max(1, int(d)) for d in dim[1:4])
    voxel_size = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])
    offset = int(vox_offset) if vox_offset >= MIN_FILE_SIZE else MIN_FILE_SIZE

    return VolumeHeader(
        dims=(nx, ny, nz),
        datatype=_DTYPE_CODES[datatype_code],
        scale_slope=float(scl_slope),
        scale_inter=float(scl_inter),
        voxel_size=voxel_size,
        endian=endian,
        vox_offset=offset,
    )


def load_volume_bytes(
    data: bytes, specimen_id: str = "", species: str = ""
) -> Volume:
    """Parse a whole .nii byte string into a normalized Volume."""
    header = parse_header(data)
    nx, ny, nz = header.dims
    payload = data[header.vox_offset:]
    if len(payload) < header.payload_bytes:
        raise SizeMismatch(
            f"payload {len(payload)} bytes, expected {header.payload_bytes}"
        )
    dtype = np.dtype(_NUMPY_DTYPES[header.datatype]).newbyteorder(header.endian)
    raw = np.frombuffer(
        payload[: header.payload_bytes], dtype=dtype
    ).reshape((nx, ny, nz), order="F")

    slope = header.scale_slope if header.scale_slope != 0.0 else 1.0
    scaled = raw.astype(np.float64) * slope + header.scale_inter
    lo, hi = float(scaled.min()), float(scaled.max())
    degenerate = hi == lo
    if degenerate:
        voxels = np.zeros_like(scaled, dtype=np.float32)
    else:
        voxels = ((scaled - lo) / (hi - lo)).astype(np.float32)
    return Volume(
        header=header,
        voxels=voxels,
        specimen_id=specimen_id,
        species=species,
        raw_voxels=np.asarray(raw),
        degenerate=degenerate,
    )


def load_volume(path, entry: Optional[ManifestEntry] = None) -> Volume:
    data = Path(path).read_bytes()
    specimen_id = entry.specimen_id if entry else Path(path).stem
    species = entry.species if entry else ""
    return load_volume_bytes(data, specimen_id=specimen_id, species=species)


def write_volume(volume: Volume, path) -> None:
    """Write the raw voxel payload back out as a little-endian .nii file."""
    Path(path).write_bytes(volume_to_bytes(volume))


def volume_to_bytes(volume: Volume) -> bytes:
    header = volume.header
    buf = bytearray(MIN_FILE_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    nx, ny, nz = header.dims
    struct.pack_into("<8h", buf, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, _DTYPE_TO_CODE[header.datatype])
    struct.pack_into("<h", buf, 72, 8 * _BYTES_PER_VOXEL[header.datatype])
    dx, dy, dz = header.voxel_size
    struct.pack_into("<8f", buf, 76, 1.0, dx, dy, dz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", buf, 108, float(MIN_FILE_SIZE))
    struct.pack_into("<f", buf, 112, header.scale_slope)
    struct.pack_into("<f", buf, 116, header.scale_inter)
    buf[344:348] = b"n+1\x00"
    raw = np.ascontiguousarray(
        volume.raw_voxels.astype(_NUMPY_DTYPES[header.datatype]), dtype=None
    )
    payload = raw.astype(raw.dtype.newbyteorder("<")).tobytes(order="F")
    return bytes(buf) + payload


def extract_slice(volume: Volume, axis: str, index: int) -> SliceImage:
    """Extract one axis-aligned plane (see module docstring for orientation)."""
    axis = axis.upper()
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    dim = volume.header.dims[AXES.index(axis)]
    if not 0 <= index < dim:
        raise IndexOutOfRange(f"index {index} out of range for axis {axis} (dim {dim})")
    if axis == "Z":
        plane = volume.voxels[:, :, index].T  # rows=y, cols=x
    elif axis == "Y":
        plane = volume.voxels[:, index, :].T  # rows=z, cols=x
    else:
        plane = volume.voxels[index, :, :].T  # rows=z, cols=y
    return SliceImage(
        pixels=np.ascontiguousarray(plane, dtype=np.float32),
        provenance=Provenance(volume.volume_id, axis, index),
    )


def load_manifest(path) -> Manifest:
    """Parse the line-oriented `path<TAB>specimen_id<TAB>species` manifest."""
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    species_order: list[str] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(f"line {lineno}: expected 3 tab-separated fields")
        p, specimen_id, species = parts
        if specimen_id in seen:
            raise ManifestError(f"line {lineno}: duplicate specimen_id {specimen_id!r}")
        seen.add(specimen_id)
        if species not in species_order:
            species_order.append(species)
        entries.append(ManifestEntry(path=p, specimen_id=specimen_id, species=species))
    return Manifest(entries=entries, species_set=species_order)


def write_manifest(manifest: Manifest, path) -> None:
    lines = [f"{e.path}\t{e.specimen_id}\t{e.species}" for e in manifest.entries]
    Path(path).write_text("\n".join(lines) + "\n")
