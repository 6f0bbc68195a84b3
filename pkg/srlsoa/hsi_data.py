#!/usr/bin/env python3
#
#   Copyright 2021 MultisampledNight
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.
"""
Loading, storing and preparing hyperspectral cubes and their label maps.

Cubes are stored in the HSIC format, label maps in the HSIL format. Both are
little-endian:

    HSIC: b"HSIC", version u8 = 1, height u32, width u32, bands u32,
          then height * width * bands float32 values, band-sequential
    HSIL: b"HSIL", version u8 = 1, height u32, width u32,
          then height * width u16 labels, row-major

So the HSIC header is 17 bytes and the HSIL header 13 bytes.
"""
import os
import struct

import numpy as np
import pandas as pd

from . import dogelog
from ._models import BandList, HsiCube, LabelMap, SplitIndices
from .errors import (BadMagic, DimMismatch, EmptyAnnotation, IndexOutOfRange,
    IoFailure, MissingFile, NonFiniteValue, ParseError, TruncatedPayload)
from .helpers import STREAM_SPLIT, atomic_write, make_rng


CUBE_MAGIC = b"HSIC"
LABEL_MAGIC = b"HSIL"
FORMAT_VERSION = 1

CUBE_HEADER = struct.Struct("<4sBIII")
LABEL_HEADER = struct.Struct("<4sBII")


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError:
        raise MissingFile(f"file not found: {path}") from None
    except OSError as exc:
        raise IoFailure(f"can't read {path}: {exc}") from exc


def _check_header(raw: bytes, header: struct.Struct, magic: bytes,
        path: str) -> tuple:
    if len(raw) < header.size:
        if raw[:4] != magic[:len(raw[:4])]:
            raise BadMagic(f"{path} is not a {magic.decode()} file")
        raise TruncatedPayload(
            f"{path} is only {len(raw)} bytes, shorter than the "
            f"{header.size} byte header")

    fields = header.unpack_from(raw)
    if fields[0] != magic:
        raise BadMagic(
            f"{path} starts with {fields[0]!r} instead of {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise BadMagic(
            f"{path} has format version {fields[1]}, only "
            f"{FORMAT_VERSION} is supported")
    return fields[2:]


def decode_cube(raw: bytes, path: str = "<bytes>") -> HsiCube:
    """Parses the bytes of an HSIC file."""
    height, width, bands = _check_header(raw, CUBE_HEADER, CUBE_MAGIC, path)

    expected = height * width * bands * 4
    payload = raw[CUBE_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path} announces {height} x {width} x {bands} values "
            f"({expected} bytes) but carries {len(payload)} bytes")

    values = np.frombuffer(payload, dtype="<f4")
    if not np.isfinite(values).all():
        raise NonFiniteValue(f"{path} contains NaN or infinite values")
    return HsiCube(height, width, bands, values)


def encode_cube(cube: HsiCube) -> bytes:
    """The bytes of the HSIC file for the given cube."""
    header = CUBE_HEADER.pack(CUBE_MAGIC, FORMAT_VERSION, cube.height,
            cube.width, cube.bands)
    return header + cube.data.astype("<f4", copy=False).tobytes()


def load_cube(path: str) -> HsiCube:
    """
    Loads a cube from an HSIC file. The values come back exactly like they
    were stored.
    """
    cube = decode_cube(_read_file(path), path)
    dogelog.debug(f"Loaded {cube} from {path}")
    return cube


def save_cube(cube: HsiCube, path: str):
    """Stores the cube as HSIC file, atomically replacing existing files."""
    atomic_write(path, encode_cube(cube))


def decode_labels(raw: bytes, path: str = "<bytes>") -> LabelMap:
    """Parses the bytes of an HSIL file."""
    height, width = _check_header(raw, LABEL_HEADER, LABEL_MAGIC, path)

    expected = height * width * 2
    payload = raw[LABEL_HEADER.size:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path} announces {height} x {width} labels ({expected} bytes) "
            f"but carries {len(payload)} bytes")

    labels = np.frombuffer(payload, dtype="<u2")
    return LabelMap(height, width, labels)


def encode_labels(labels: LabelMap) -> bytes:
    header = LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, labels.height,
            labels.width)
    return header + labels.labels.astype("<u2", copy=False).tobytes()


def load_labels(path: str) -> LabelMap:
    """Loads a label map from an HSIL file."""
    labels = decode_labels(_read_file(path), path)
    dogelog.debug(f"Loaded {labels.class_count} classes from {path}")
    return labels


def save_labels(labels: LabelMap, path: str):
    atomic_write(path, encode_labels(labels))


def remove_bands(cube: HsiCube, drop: BandList) -> HsiCube:
    """
    Returns the cube without the given bands. The remaining bands keep their
    order and their values.
    """
    if len(drop) == 0:
        return cube
    if drop.indices[-1] >= cube.bands:
        raise IndexOutOfRange(
            f"can't drop band {drop.indices[-1]}, the cube only has "
            f"{cube.bands} bands")
    if len(drop) >= cube.bands:
        raise IndexOutOfRange("can't drop every band of the cube")

    kept = np.delete(cube.data, drop.indices, axis=0)
    return HsiCube(cube.height, cube.width, kept.shape[0], kept)


def normalize(cube: HsiCube) -> HsiCube:
    """
    Scales every band on its own to [0, 1] (min-max). Bands that are constant
    end up all zero.
    """
    data = cube.data.astype(np.float64)
    low = data.min(axis=(1, 2), keepdims=True)
    span = data.max(axis=(1, 2), keepdims=True) - low

    # constant bands would divide 0 by 0, let them divide 0 by 1 instead
    scaled = (data - low) / np.where(span > 0.0, span, 1.0)
    return HsiCube(cube.height, cube.width, cube.bands,
            scaled.astype(np.float32))


def flatten_pixels(cube: HsiCube) -> np.ndarray:
    """
    The cube as M x N float64 matrix: row r * width + c is the spectrum of the
    pixel in row r, column c.
    """
    return cube.data.reshape(cube.bands, -1).T.astype(np.float64)


def sample_split(labels: LabelMap, fraction: float, seed: int) -> SplitIndices:
    """
    Splits the annotated pixels randomly into a training and a test part.

    round(fraction * annotated) pixels (half rounded up, at least one) are
    drawn without replacement for training. If that leaves a class with at
    least two annotated pixels without any training pixel, its lowest pixel
    index is swapped in for the highest-index training pixel of the class that
    currently has the most training pixels. The swaps stop early if no class
    has two training pixels left to give.
    """
    flat = labels.flat
    annotated = np.flatnonzero(flat)
    if annotated.size == 0:
        raise EmptyAnnotation("the label map has no annotated pixel")

    count = int(np.floor(fraction * annotated.size + 0.5))
    count = min(max(count, 1), annotated.size)

    rng = make_rng(seed, STREAM_SPLIT)
    train = set(rng.choice(annotated, size=count, replace=False).tolist())

    class_ids, class_sizes = np.unique(flat[annotated], return_counts=True)
    for class_id, size in zip(class_ids.tolist(), class_sizes.tolist()):
        if size < 2:
            continue
        members = annotated[flat[annotated] == class_id]
        if any(int(pixel) in train for pixel in members):
            continue

        # which class can give a pixel away?
        in_train = np.array(sorted(train), dtype=np.int64)
        train_classes, train_counts = np.unique(flat[in_train],
                return_counts=True)
        # argmax takes the lowest class id on ties
        donor_position = int(np.argmax(train_counts))
        if train_counts[donor_position] < 2:
            dogelog.debug(f"Class {class_id} stays without training pixel, "
                    "no class can spare one")
            break
        donor = train_classes[donor_position]
        victim = int(in_train[flat[in_train] == donor].max())

        train.remove(victim)
        train.add(int(members.min()))

    train = np.array(sorted(train), dtype=np.int64)
    test = np.setdiff1d(annotated, train, assume_unique=True)
    dogelog.debug(f"Split {annotated.size} annotated pixels into "
            f"{train.size} training and {test.size} test pixels")
    return SplitIndices(train, test)


def unlabeled_pixels(labels: LabelMap) -> np.ndarray:
    """Flat indices of all pixels without annotation."""
    return np.flatnonzero(labels.flat == 0)


def _read_csv(path: str) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingFile(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=np.float64)
    except (ValueError, pd.errors.ParserError,
            pd.errors.EmptyDataError) as exc:
        raise ParseError(f"can't read {path} as numeric CSV: {exc}") from exc
    return frame.to_numpy()


def cube_from_csv(path: str, height: int, width: int, bands: int) -> HsiCube:
    """
    Reads a CSV file with one pixel spectrum per row (row-major pixel order,
    no header) into a cube.
    """
    spectra = _read_csv(path)
    if spectra.shape != (height * width, bands):
        raise DimMismatch(
            f"{path} has {spectra.shape[0]} rows of {spectra.shape[1]} "
            f"values, {height} x {width} x {bands} needs {height * width} rows "
            f"of {bands}")
    data = spectra.T.reshape(bands, height, width).astype(np.float32)
    return HsiCube(height, width, bands, data)


def cube_from_raw(path: str, height: int, width: int, bands: int) -> HsiCube:
    """
    Reads headerless little-endian float32 values, band-sequential, into a
    cube.
    """
    if not os.path.exists(path):
        raise MissingFile(f"file not found: {path}")
    values = np.fromfile(path, dtype="<f4")
    if values.size != height * width * bands:
        raise DimMismatch(
            f"{path} holds {values.size} float32 values, {height} x {width} x "
            f"{bands} needs {height * width * bands}")
    return HsiCube(height, width, bands, values)


def labels_from_csv(path: str, height: int, width: int) -> LabelMap:
    """
    Reads labels from CSV, either one label per row or a height x width grid.
    """
    grid = _read_csv(path)
    if grid.size != height * width:
        raise DimMismatch(
            f"{path} holds {grid.size} labels, {height} x {width} needs "
            f"{height * width}")
    if np.any(grid != np.round(grid)) or np.any(grid < 0):
        raise ParseError(f"{path} contains labels that aren't class ids")
    return LabelMap(height, width, grid.reshape(-1).astype(np.int64))


# vim:textwidth=80:
