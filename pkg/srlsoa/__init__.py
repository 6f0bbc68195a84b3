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
Library for selecting the most informative bands of a hyperspectral cube.

A sparse 1D-operational autoencoder learns to write every pixel spectrum as a
combination of its own bands, and the bands that are used the most get
selected. As an example, see this interactive session, where 25 bands of
Indian Pines are selected:

    In [1]: import srlsoa

    In [2]: preset = srlsoa.find_preset("indian_pines")

    In [3]: raw = srlsoa.load_cube("indian_pines.hsic")

    In [4]: cube = srlsoa.remove_bands(srlsoa.normalize(raw),
       ...:     preset.drop_bands)

    In [5]: X = srlsoa.flatten_pixels(cube)

    In [6]: X.shape
    Out[6]: (21025, 200)

    In [7]: params, history = srlsoa.train(X[:512], srlsoa.TrainConfig(seed=7))

    In [8]: ranking = srlsoa.rank_bands(params, X[:512])

    In [9]: len(srlsoa.select_top_k(ranking, 25))
    Out[9]: 25

    In [10]: # and how well do they classify?

    In [11]: labels = srlsoa.load_labels("indian_pines.hsil")

    In [12]: report = srlsoa.run_experiment(raw, labels, "srl_soa", 25,
        ...:     srlsoa.TrainConfig(), seed=7, settings=preset.settings())

Most of the work is numpy, in float64. Everything that can go wrong raises a
subclass of srlsoa.errors.SrlSoaError.
"""


__all__ = [
    "HsiCube", "LabelMap", "BandList", "OperationalLayerParams",
    "TrainConfig", "BandRanking", "EvalReport", "ExperimentSettings",
    "load_cube", "save_cube", "load_labels", "save_labels", "remove_bands",
    "normalize", "flatten_pixels", "sample_split",
    "encoder_forward", "decoder_reconstruct", "backward", "grad_check",
    "train", "rank_bands", "select_top_k",
    "pca_fit", "pca_project", "issc_rank",
    "knn_classify", "compute_metrics", "run_experiment", "sweep",
    "find_preset", "planted_band_cube", "planted_classification",
]

__author__ = "MultisampledNight"
__version__ = "0.1.0"


from ._models import (BandList, BandRanking, EvalReport, ExperimentSettings,
    HsiCube, LabelMap, OperationalLayerParams, TrainConfig)
from .baselines import issc_rank, pca_fit, pca_project
from .data import find_preset
from .evaluation import compute_metrics, knn_classify, run_experiment, sweep
from .hsi_data import (flatten_pixels, load_cube, load_labels, normalize,
    remove_bands, sample_split, save_cube, save_labels)
from .operational import (backward, decoder_reconstruct, encoder_forward,
    grad_check)
from .synthetic import planted_band_cube, planted_classification
from .trainer import rank_bands, select_top_k, train


# vim:textwidth=80:
