"""Flat binary dataset container.

Byte layout (all integers little-endian):

    offset 0   magic            8 bytes, b"SEQDAT01"
    offset 8   header length    uint32
    offset 12  header           UTF-8 JSON
    then       section payloads back to back, in header order

The JSON header carries ``format_version``, ``generator``, ``seed``,
``modality`` and a ``sections`` list of ``{name, dtype, shape}`` entries.
Section payloads are raw little-endian C-order arrays, so any language can
read the file from the header alone.  See docs/dataset_format.md.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import SequenceBatch, SequenceLabels
from .errors import ContractViolation

MAGIC = b"SEQDAT01"
FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8", "int64": "<i8", "int32": "<i4"}


def write_batch(path, batch: SequenceBatch, seed: int | None = None) -> None:
    sections = [("frames", np.ascontiguousarray(batch.frames, dtype=np.float32))]
    if batch.labels is not None:
        sections.append(("static_label",
                         np.ascontiguousarray(batch.labels.static_label, dtype=np.int64)))
        sections.append(("dynamic_track",
                         np.ascontiguousarray(batch.labels.dynamic_track, dtype=np.float32)))
        if batch.labels.regression_target is not None:
            sections.append(("regression_target",
                             np.ascontiguousarray(batch.labels.regression_target,
                                                  dtype=np.float32)))
    header = {
        "format_version": FORMAT_VERSION,
        "generator": batch.generator,
        "seed": seed,
        "modality": batch.modality,
        "sections": [{"name": name, "dtype": str(arr.dtype.name), "shape": list(arr.shape)}
                     for name, arr in sections],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in sections:
            fh.write(arr.astype(_DTYPES[arr.dtype.name], copy=False).tobytes(order="C"))


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ContractViolation(f"{path}: not a dataset container (bad magic {magic!r})")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ContractViolation(
            f"{path}: unsupported container version {header.get('format_version')}")
    return header


def read_batch(path) -> SequenceBatch:
    header = read_header(path)
    arrays = {}
    offset = 12 + len(json.dumps(header, sort_keys=True).encode("utf-8"))
    raw = Path(path).read_bytes()
    for section in header["sections"]:
        dtype = np.dtype(_DTYPES[section["dtype"]])
        count = int(np.prod(section["shape"]))
        end = offset + count * dtype.itemsize
        arr = np.frombuffer(raw[offset:end], dtype=dtype).reshape(section["shape"])
        arrays[section["name"]] = arr.astype(section["dtype"])
        offset = end
    labels = None
    if "static_label" in arrays:
        labels = SequenceLabels(
            static_label=arrays["static_label"],
            dynamic_track=arrays["dynamic_track"],
            regression_target=arrays.get("regression_target"))
    return SequenceBatch(frames=arrays["frames"], modality=header["modality"],
                         labels=labels, generator=header.get("generator"))


def container_seed(path) -> int | None:
    return read_header(path).get("seed")
