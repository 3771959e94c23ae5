"""Readers and writers for the on-disk formats.

* OBJ subset: ``v x y z`` and triangular ``f i j k`` (1-based); ``#`` comments.
* XYZ: one ``x y z`` per line.
* PCF1: ``b"PCF1"``, u32 LE count, then count x 3 f32 LE.
* IFS1: ``b"IFS1"``, u8 kind, u32 LE count, then count x (3 f32 position, f32 value).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .geometry import TriangleMesh, as_cloud

PCF_MAGIC = b"PCF1"
IFS_MAGIC = b"IFS1"
FIELD_KINDS = ("sdf", "udf", "occ")


def read_obj(path, watertight: bool = False) -> TriangleMesh:
    verts, faces = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        tag, args = line[0], line[1:]
        if tag == "v":
            if len(args) < 3:
                raise InvalidInput(f"{path}:{lineno}: vertex needs 3 coordinates")
            verts.append([float(a) for a in args[:3]])
        elif tag == "f":
            if len(args) != 3:
                raise InvalidInput(f"{path}:{lineno}: only triangular faces are supported")
            # tolerate v/vt/vn references, keep the vertex index
            faces.append([int(a.split("/")[0]) - 1 for a in args])
        else:
            continue
    if not faces:
        raise InvalidInput(f"{path}: no faces")
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64), watertight)


def write_obj(path, mesh: TriangleMesh) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_xyz(path) -> np.ndarray:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if len(parts) < 3:
            raise InvalidInput(f"{path}:{lineno}: expected 'x y z'")
        rows.append([float(p) for p in parts[:3]])
    return as_cloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


def write_xyz(path, cloud) -> None:
    pts = as_cloud(cloud)
    Path(path).write_text("".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()))


def encode_pcf(cloud) -> bytes:
    pts = as_cloud(cloud)
    return PCF_MAGIC + struct.pack("<I", len(pts)) + pts.astype("<f4").tobytes()


def decode_pcf(data: bytes) -> np.ndarray:
    if data[:4] != PCF_MAGIC:
        raise InvalidInput("not a PCF1 file")
    (count,) = struct.unpack_from("<I", data, 4)
    body = data[8:]
    if len(body) != count * 12:
        raise InvalidInput(f"PCF1 body has {len(body)} bytes, expected {count * 12}")
    return np.frombuffer(body, dtype="<f4").reshape(count, 3).astype(np.float64)


def read_pcf(path) -> np.ndarray:
    return decode_pcf(Path(path).read_bytes())


def write_pcf(path, cloud) -> None:
    Path(path).write_bytes(encode_pcf(cloud))


def read_cloud(path) -> np.ndarray:
    """Read a point cloud, choosing XYZ or PCF1 by magic bytes."""
    data = Path(path).read_bytes()
    if data[:4] == PCF_MAGIC:
        return decode_pcf(data)
    return read_xyz(path)


@dataclass
class SampleFile:
    kind: str
    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise InvalidInput(f"unknown field kind {self.kind!r}")
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.positions) != len(self.values):
            raise InvalidInput("positions and values differ in length")


def encode_ifs(samples: SampleFile) -> bytes:
    rec = np.empty((len(samples.values), 4), dtype="<f4")
    rec[:, :3] = samples.positions
    rec[:, 3] = samples.values
    head = IFS_MAGIC + struct.pack("<BI", FIELD_KINDS.index(samples.kind), len(rec))
    return head + rec.tobytes()


def decode_ifs(data: bytes) -> SampleFile:
    if data[:4] != IFS_MAGIC:
        raise InvalidInput("not an IFS1 file")
    kind, count = struct.unpack_from("<BI", data, 4)
    if kind >= len(FIELD_KINDS):
        raise InvalidInput(f"IFS1 kind byte {kind} out of range")
    body = data[9:]
    if len(body) != count * 16:
        raise InvalidInput(f"IFS1 body has {len(body)} bytes, expected {count * 16}")
    rec = np.frombuffer(body, dtype="<f4").reshape(count, 4).astype(np.float64)
    return SampleFile(FIELD_KINDS[kind], rec[:, :3], rec[:, 3])


def read_ifs(path) -> SampleFile:
    return decode_ifs(Path(path).read_bytes())


def write_ifs(path, samples: SampleFile) -> None:
    Path(path).write_bytes(encode_ifs(samples))
