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
Some helper functions for easier parsing of values, writing files and getting
random number generators.
"""
import os
import tempfile
from typing import Callable, Dict, List, Tuple, Union

import numpy as np

from .errors import BadConfig, IoFailure, MissingFile, ParseError


# Every consumer of randomness gets its own stream, so that e.g. changing the
# number of epochs doesn't change which pixels end up in the training split.
STREAM_SPLIT = 0
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_RANDOM_BANDS = 3
STREAM_SYNTHETIC = 4
STREAM_GRADCHECK = 5

_SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """
    Returns a PCG64 generator for the given seed and stream.

    The seed is taken modulo 2**64, so negative 64-bit seeds work as well. The
    stream and the seed are combined through numpy's SeedSequence, which is
    what makes the sequences reproducible on every platform numpy runs on.
    """
    entropy = [int(stream), int(seed) & _SEED_MASK]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def parse_band_ranges(text: str) -> List[int]:
    """
    Converts 1-based inclusive band ranges into sorted 0-based indices.

    As an example, "[104-108], [150-163]" and "104-108,150-163" both give
    103..107 and 149..162. Single bands like "224" are fine too. An empty
    string gives an empty list.
    """
    indices = set()
    # brackets are only decoration, like the ranges are usually written down
    cleaned = text.replace("[", " ").replace("]", " ").replace(";", ",")
    for part in cleaned.split(","):
        part = part.strip()
        if not part:
            continue

        try:
            if "-" in part:
                start, stop = (int(value) for value in part.split("-", 1))
            else:
                start = stop = int(part)
        except ValueError:
            raise ParseError(f"can't read band range '{part}'") from None

        if start < 1 or stop < start:
            raise ParseError(
                f"band range '{part}' must be 1-based and ascending")
        indices.update(range(start - 1, stop))

    return sorted(indices)


def parse_number_list(text: Union[str, int, float],
        kind: Callable = int) -> list:
    """
    Converts "1,3, 5" into [1, 3, 5]. Ranges like "5-50:5" (start-stop:step,
    inclusive) are expanded, which is handy for sweeping the band count.
    """
    if isinstance(text, (int, float)):
        return [kind(text)]

    values = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:] and kind is int:
                bounds, _, step = part.partition(":")
                start, stop = (int(value) for value in bounds.split("-", 1))
                values.extend(range(start, stop + 1, int(step or 1)))
            else:
                values.append(kind(part))
        except ValueError:
            raise ParseError(f"can't read '{part}' as a number") from None
    return values


def parse_dims(text: str) -> Tuple[int, ...]:
    """Converts "145x145x220" (or "145,145,220") into (145, 145, 220)."""
    parts = text.lower().replace(",", "x").split("x")
    try:
        dims = tuple(int(part) for part in parts)
    except ValueError:
        raise ParseError(f"can't read dimensions '{text}'") from None
    if any(dim <= 0 for dim in dims):
        raise ParseError(f"dimensions must be positive, got '{text}'")
    return dims


def parse_bool(text: Union[str, bool]) -> bool:
    if isinstance(text, bool):
        return text
    folded = str(text).strip().casefold()
    if folded in ("1", "true", "yes", "on"):
        return True
    if folded in ("0", "false", "no", "off"):
        return False
    raise ParseError(f"can't read '{text}' as a boolean")


def read_config_file(path: str) -> Dict[str, str]:
    """
    Reads a flat key=value text file into a dict.

    Keys are the long CLI flag names without the leading dashes, and "-" and
    "_" mean the same, so "include-unlabeled" and "include_unlabeled" are the
    same key. Lines starting with "#" and blank lines are skipped.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        raise MissingFile(f"config file not found: {path}") from None

    config = {}
    for number, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise BadConfig(f"{path}:{number}: expected key=value, got "
                    f"'{line}'")
        key, value = line.split("=", 1)
        key = key.strip().lstrip("-").replace("-", "_")
        config[key] = value.strip()
    return config


def atomic_write(path: str, content: Union[bytes, str]):
    """
    Writes the content to a temporary file next to path and renames it over
    path afterwards, so readers see either the old or the complete new file.
    """
    if isinstance(content, str):
        content = content.encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, temporary = tempfile.mkstemp(dir=directory, prefix=".srlsoa-",
                suffix=".tmp")
    except OSError as exc:
        raise IoFailure(f"can't write to {directory}: {exc}") from exc

    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(content)
        os.replace(temporary, path)
    except OSError as exc:
        # the rename failed or the disk is full, don't leave litter behind
        if os.path.exists(temporary):
            os.remove(temporary)
        raise IoFailure(f"can't write {path}: {exc}") from exc


# vim:textwidth=80:
