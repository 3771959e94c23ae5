"""TAE1 binary checkpoints.

Layout (little-endian)::

    b"TAE1" | u16 version | u8 paradigm (0 iae, 1 eae) | u8 field (0 sdf, 1 udf, 2 occ)
    u16 number of MLPs, then per MLP: u16 layer count,
        per layer: u32 in, u32 out, u8 activation
    f64 parameters, layer by layer: W (row-major) then b
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InvalidInput
from .models import FIELD_KINDS, AutoEncoder, ExplicitDecoder, ImplicitDecoder, PointEncoder
from .nn import ACTIVATIONS, MLP, DenseLayer

MAGIC = b"TAE1"
VERSION = 1


def encode_checkpoint(model: AutoEncoder) -> bytes:
    field = model.decoder.field if isinstance(model.decoder, ImplicitDecoder) else "sdf"
    mlps = model.mlps()
    head = [MAGIC, struct.pack("<HBBH", VERSION, 0 if model.paradigm == "iae" else 1,
                               FIELD_KINDS.index(field), len(mlps))]
    body = []
    for mlp in mlps:
        head.append(struct.pack("<H", len(mlp.layers)))
        for layer in mlp.layers:
            n_out, n_in = layer.W.shape
            head.append(struct.pack("<IIB", n_in, n_out, ACTIVATIONS.index(layer.activation)))
            body.append(layer.W.astype("<f8").tobytes())
            body.append(layer.b.astype("<f8").tobytes())
    return b"".join(head + body)


def decode_checkpoint(data: bytes) -> AutoEncoder:
    if data[:4] != MAGIC:
        raise InvalidInput("not a TAE1 checkpoint")
    version, paradigm, field, n_mlps = struct.unpack_from("<HBBH", data, 4)
    if version != VERSION:
        raise InvalidInput(f"unsupported TAE1 version {version}")
    if paradigm > 1 or field >= len(FIELD_KINDS) or n_mlps != 3:
        raise InvalidInput("malformed TAE1 header")
    off = 10
    shapes = []
    for _ in range(n_mlps):
        (n_layers,) = struct.unpack_from("<H", data, off)
        off += 2
        layers = []
        for _ in range(n_layers):
            n_in, n_out, act = struct.unpack_from("<IIB", data, off)
            off += 9
            if act >= len(ACTIVATIONS):
                raise InvalidInput(f"unknown activation code {act}")
            layers.append((n_in, n_out, ACTIVATIONS[act]))
        shapes.append(layers)
    mlps = []
    for layers in shapes:
        built = []
        for n_in, n_out, act in layers:
            w_bytes, b_bytes = 8 * n_in * n_out, 8 * n_out
            if off + w_bytes + b_bytes > len(data):
                raise InvalidInput("truncated TAE1 parameters")
            W = np.frombuffer(data, "<f8", n_in * n_out, off).reshape(n_out, n_in).astype(np.float64)
            off += w_bytes
            b = np.frombuffer(data, "<f8", n_out, off).astype(np.float64)
            off += b_bytes
            built.append(DenseLayer(W, b, act))
        mlps.append(MLP(built))
    if off != len(data):
        raise InvalidInput("trailing bytes after TAE1 parameters")
    encoder = PointEncoder(mlps[0], mlps[1])
    if paradigm == 0:
        decoder = ImplicitDecoder(mlps[2], FIELD_KINDS[field])
    else:
        decoder = ExplicitDecoder(mlps[2])
    return AutoEncoder(encoder, decoder)


def save_checkpoint(path, model: AutoEncoder) -> None:
    Path(path).write_bytes(encode_checkpoint(model))


def load_checkpoint(path) -> AutoEncoder:
    return decode_checkpoint(Path(path).read_bytes())
