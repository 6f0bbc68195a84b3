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
Synthetic cubes where the right answer is known: a few planted bands generate
all the others, so a good band selector has to find exactly those.
"""
import itertools
from typing import Tuple

import numpy as np

from . import dogelog
from ._models import BandList, HsiCube, LabelMap
from .errors import BadConfig, ShapeMismatch
from .helpers import STREAM_SYNTHETIC, make_rng


def _mixes(sources: np.ndarray, count: int, noise: float,
        rng: np.random.Generator) -> np.ndarray:
    """
    count random convex combinations of the source columns, each scaled to
    [0, 1] and then disturbed by gaussian noise of the given deviation.
    """
    weights = rng.dirichlet(np.full(sources.shape[1], 2.0), size=count)
    mixed = sources @ weights.T
    low = mixed.min(axis=0)
    span = mixed.max(axis=0) - low
    mixed = (mixed - low) / np.where(span > 0.0, span, 1.0)
    return mixed + rng.normal(0.0, noise, size=mixed.shape)


def _to_cube(height: int, width: int, spectra: np.ndarray) -> HsiCube:
    """spectra is pixels x bands, row-major over the pixels."""
    bands = spectra.shape[1]
    data = spectra.T.reshape(bands, height, width).astype(np.float32)
    return HsiCube(height, width, bands, data)


def planted_band_cube(seed: int, height: int = 32, width: int = 32,
        bands: int = 40, planted: int = 3,
        noise: float = 0.05) -> Tuple[HsiCube, BandList]:
    """
    A cube where `planted` bands hold independent uniform sources, and every
    other band is a noisy linear mix of them.

    Returns the cube and the planted bands.
    """
    if planted >= bands:
        raise BadConfig(f"can't plant {planted} of only {bands} bands")
    rng = make_rng(seed, STREAM_SYNTHETIC)
    pixels = height * width

    positions = np.sort(rng.choice(bands, size=planted, replace=False))
    sources = rng.uniform(0.0, 1.0, size=(pixels, planted))

    spectra = np.empty((pixels, bands))
    spectra[:, positions] = sources
    others = np.setdiff1d(np.arange(bands), positions)
    spectra[:, others] = _mixes(sources, others.size, noise, rng)

    dogelog.debug(f"Planted bands {positions.tolist()} in a {height}x{width}x"
            f"{bands} cube")
    return _to_cube(height, width, spectra), BandList(positions, bands)


def planted_classification(seed: int, height: int = 50, width: int = 50,
        classes: int = 10, planted: int = 3, noise_bands: int = 197,
        spread: float = 0.03,
        noise: float = 0.25) -> Tuple[HsiCube, LabelMap, BandList]:
    """
    A labelled cube whose classes are separable on the planted bands alone.

    Every class gets its own center on a 3-level grid over the planted bands,
    and its pixels scatter around it by `spread`. The other bands are noisy
    mixes of the planted ones, so they carry some class information too, just
    much less of it. Every pixel is annotated, classes are equally large up to
    one pixel. The default 50 x 50 leaves about 12 pixels per class in a 5 %
    training split, so kNN with k = 5 sees every class clearly.
    """
    levels = np.array([0.15, 0.5, 0.85])
    if classes > levels.size ** planted:
        raise BadConfig(
            f"{planted} planted bands only separate {levels.size ** planted} "
            f"classes, {classes} requested")
    rng = make_rng(seed, STREAM_SYNTHETIC)
    pixels = height * width
    bands = planted + noise_bands

    grid = np.array(list(itertools.product(levels, repeat=planted)))
    centers = grid[rng.permutation(grid.shape[0])[:classes]]

    labels = rng.permutation(np.arange(pixels) % classes) + 1
    sources = centers[labels - 1] \
        + rng.normal(0.0, spread, size=(pixels, planted))

    positions = np.sort(rng.choice(bands, size=planted, replace=False))
    spectra = np.empty((pixels, bands))
    spectra[:, positions] = sources
    others = np.setdiff1d(np.arange(bands), positions)
    spectra[:, others] = _mixes(sources, others.size, noise, rng)

    return (_to_cube(height, width, spectra),
            LabelMap(height, width, labels),
            BandList(positions, bands))


def best_subset(X, size: int = 3) -> Tuple[Tuple[int, ...], float]:
    """
    Exhaustively searches the band subset of the given size that reconstructs
    all bands best in the least-squares sense, an intercept included.

    Returns the subset and its residual sum of squares. Every subset costs one
    small solve, all of them are batched through the Gram matrix of the
    centered data.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < size:
        raise ShapeMismatch(
            f"need a samples x bands matrix with at least {size} bands, got "
            f"shape {X.shape}")

    centered = X - X.mean(axis=0)
    gram = centered.T @ centered
    subsets = np.array(list(itertools.combinations(range(X.shape[1]), size)))

    # residual = trace(G) - trace(G_SS^-1 G_S. G_.S) per subset
    inner = gram[subsets[:, :, None], subsets[:, None, :]]     # s, size, size
    cross = gram[subsets]                                      # s, size, N
    solved = np.linalg.solve(inner, cross)
    explained = np.einsum("sin,sin->s", cross, solved)
    residuals = np.trace(gram) - explained

    best = int(np.argmin(residuals))
    return tuple(subsets[best].tolist()), float(residuals[best])


# vim:textwidth=80:
