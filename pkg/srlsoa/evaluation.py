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
How good is a band selection? Classify the test pixels with kNN on the
selected bands only and see how many come out right.

The methods that can be compared:

- srl_soa: the sparse operational autoencoder with the configured Q, and
  srl_soa1, srl_soa3, ... with the given Q instead
- issc: the ridge self-representation ranker
- pca: k principal components instead of k bands
- random: k bands drawn at random, the control
- all_bands: no selection at all
"""
import json
import math
import re
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import dogelog
from ._models import (BandList, ConfusionMatrix, EvalReport,
    ExperimentSettings, HsiCube, LabelMap, PcaModel, TrainConfig)
from .baselines import issc_rank, pca_fit, pca_project
from .errors import (BadConfig, DimMismatch, EmptyConfusion, EmptyTrainSet,
    KTooLarge, ShapeMismatch)
from .helpers import STREAM_RANDOM_BANDS, atomic_write, make_rng
from .hsi_data import (flatten_pixels, normalize, remove_bands, sample_split,
    unlabeled_pixels)
from .platform_info import platform_descriptor
from .trainer import rank_bands, select_top_k, train


METHODS = ("srl_soa", "issc", "pca", "random", "all_bands")
SWEEP_COLUMNS = ["method", "k_bands", "seed_count", "oa_mean", "oa_std",
        "aa_mean", "aa_std", "kappa_mean", "kappa_std"]

KNN_CHUNK = 1024

_SRL_SOA_PATTERN = re.compile(r"srl_soa(\d+)?")


def parse_method(name: str) -> Tuple[str, Optional[int]]:
    """
    Splits a method name into the method and the polynomial order it asks
    for, like "srl_soa5" into ("srl_soa", 5). Only srl_soa has an order.
    """
    name = name.strip().casefold().replace("-", "_")
    match = _SRL_SOA_PATTERN.fullmatch(name)
    if match is not None:
        order = match.group(1)
        if order is not None and int(order) < 1:
            raise BadConfig(f"polynomial order in '{name}' must be positive")
        return "srl_soa", None if order is None else int(order)
    if name in METHODS:
        return name, None
    raise BadConfig(
        f"unknown method '{name}' (known: {', '.join(METHODS)}, srl_soa<Q>)")


def knn_classify(train_X, train_y, test_X, k: int = 5) -> np.ndarray:
    """
    Euclidean k-nearest-neighbor majority vote.

    Among equally voted classes, the one whose neighbors are closer in sum
    wins, and if that's equal too, the smallest class id. Neighbors at equal
    distance are taken in training order.
    """
    train_X = np.atleast_2d(np.asarray(train_X, dtype=np.float64))
    test_X = np.atleast_2d(np.asarray(test_X, dtype=np.float64))
    train_y = np.asarray(train_y).reshape(-1)
    if train_X.shape[0] == 0 or train_X.size == 0:
        raise EmptyTrainSet("kNN needs at least one training sample")
    if train_y.size != train_X.shape[0]:
        raise ShapeMismatch(
            f"{train_X.shape[0]} training samples but {train_y.size} labels")
    if test_X.shape[1] != train_X.shape[1]:
        raise ShapeMismatch(
            f"training samples have {train_X.shape[1]} features, test samples "
            f"{test_X.shape[1]}")
    if k < 1:
        raise BadConfig(f"kNN k must be positive, got {k}")

    classes, encoded = np.unique(train_y, return_inverse=True)
    k = min(k, train_X.shape[0])
    train_norms = np.sum(train_X ** 2, axis=1)

    predictions = np.empty(test_X.shape[0], dtype=classes.dtype)
    for start in range(0, test_X.shape[0], KNN_CHUNK):
        chunk = test_X[start:start + KNN_CHUNK]
        squared = np.sum(chunk ** 2, axis=1)[:, None] + train_norms[None, :] \
            - 2.0 * chunk @ train_X.T
        distances = np.sqrt(np.clip(squared, 0.0, None))

        nearest = np.argsort(distances, axis=1, kind="stable")[:, :k]
        rows = np.repeat(np.arange(chunk.shape[0]), k)
        votes = np.zeros((chunk.shape[0], classes.size))
        closeness = np.zeros((chunk.shape[0], classes.size))
        np.add.at(votes, (rows, encoded[nearest].reshape(-1)), 1.0)
        np.add.at(closeness, (rows, encoded[nearest].reshape(-1)),
                np.take_along_axis(distances, nearest, axis=1).reshape(-1))

        tied = votes == votes.max(axis=1, keepdims=True)
        # argmin returns the first, so the smallest class id, on equal sums
        winner = np.argmin(np.where(tied, closeness, np.inf), axis=1)
        predictions[start:start + chunk.shape[0]] = classes[winner]

    return predictions


def confusion(truth, predicted, class_count: int) -> ConfusionMatrix:
    return ConfusionMatrix.from_labels(truth, predicted, class_count)


def compute_metrics(conf: ConfusionMatrix) -> EvalReport:
    """
    Overall accuracy, average per-class accuracy and Cohen's kappa of a
    confusion matrix.

    Classes without any test pixel get a NaN accuracy and are left out of the
    average. If the expected agreement is already perfect, kappa is 0.
    """
    counts = conf.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyConfusion("confusion matrix doesn't count any pixel")

    rows = counts.sum(axis=1)
    columns = counts.sum(axis=0)
    diagonal = np.diag(counts)

    oa = diagonal.sum() / total
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, diagonal / rows, np.nan)
    aa = float(np.nanmean(per_class))

    expected = float(np.sum(rows * columns)) / (total * total)
    if expected >= 1.0:
        kappa = 0.0
    else:
        kappa = (oa - expected) / (1.0 - expected)

    return EvalReport(oa, aa, kappa, per_class)


def _prepare(cube: HsiCube, labels: LabelMap, settings: ExperimentSettings
        ) -> np.ndarray:
    if not labels.matches(cube):
        raise DimMismatch(
            f"label map is {labels.height} x {labels.width}, cube is "
            f"{cube.height} x {cube.width}")
    prepared = normalize(cube)
    if settings.drop_bands:
        prepared = remove_bands(prepared,
                BandList(sorted(settings.drop_bands), cube.bands))
    return flatten_pixels(prepared)


def _random_bands(bands: int, k: int, seed: int) -> BandList:
    if k < 1:
        raise BadConfig(f"k must be positive, got {k}")
    if k > bands:
        raise KTooLarge(f"can't select {k} bands out of {bands}")
    rng = make_rng(seed, STREAM_RANDOM_BANDS)
    return BandList.from_unsorted(rng.choice(bands, size=k, replace=False),
            bands)


def _truncate(model: PcaModel, k: int) -> PcaModel:
    if k < 1:
        raise BadConfig(f"k must be positive, got {k}")
    if k > model.k:
        raise KTooLarge(f"can't extract {k} components, at most {model.k}")
    return PcaModel(model.mean, model.components[:k],
            model.explained_variance[:k])


def run_experiment(cube: HsiCube,
        labels: LabelMap,
        method: str,
        k_bands: int,
        config: TrainConfig,
        seed: int,
        settings: Optional[ExperimentSettings] = None,
        cache: Optional[Dict] = None) -> EvalReport:
    """
    One evaluation run: normalize, drop the configured bands, split, fit the
    selector on the training pixels (plus the unannotated ones if the settings
    say so), select k_bands bands or components, classify the test pixels.

    The seed drives the split, the training and the random control. cache, if
    given, keeps what a method learned per seed, so further calls with another
    k don't fit again: the ranking or PcaModel under (method, seed), and for
    srl_soa also the trained parameters under (method, seed, "params").
    """
    settings = (settings or ExperimentSettings()).validate()
    config = config.validate()
    kind, order = parse_method(method)

    X = _prepare(cube, labels, settings)
    bands = X.shape[1]
    split = sample_split(labels, settings.train_fraction, seed)
    fit_rows = split.train
    if settings.include_unlabeled_in_fit:
        fit_rows = np.concatenate([fit_rows, unlabeled_pixels(labels)])
    X_fit = X[fit_rows]

    key = (method, seed)
    cache = {} if cache is None else cache
    selected = None

    if kind == "srl_soa":
        if key not in cache:
            run_config = config.replace(seed=seed)
            if order is not None:
                run_config = run_config.replace(order_q=order)
            params, _ = train(X_fit, run_config, settings.threads)
            cache[key + ("params",)] = params
            cache[key] = rank_bands(params, X_fit, settings.chunk,
                    settings.threads)
        selected = select_top_k(cache[key], k_bands)
    elif kind == "issc":
        if key not in cache:
            cache[key] = issc_rank(X_fit, settings.ridge_lambda)
        selected = select_top_k(cache[key], k_bands)
    elif kind == "random":
        selected = _random_bands(bands, k_bands, seed)
    elif kind == "all_bands":
        selected = BandList(np.arange(bands), bands)
        k_bands = bands

    if kind == "pca":
        if key not in cache:
            cache[key] = pca_fit(X_fit, min(X_fit.shape))
        model = _truncate(cache[key], k_bands)
        train_features = pca_project(model, X[split.train])
        test_features = pca_project(model, X[split.test])
    else:
        train_features = X[split.train][:, selected.indices]
        test_features = X[split.test][:, selected.indices]

    truth = labels.flat[split.test]
    predicted = knn_classify(train_features, labels.flat[split.train],
            test_features, settings.knn_k)
    report = compute_metrics(confusion(truth, predicted, labels.class_count))
    report = report.with_run(k_bands, method, seed, selected)

    dogelog.debug(str(report))
    return report


def run_record(report: EvalReport, platform: Optional[dict] = None) -> dict:
    """One line of the per-run JSON-lines log, NaN written as null."""
    def plain(value):
        return None if value is None or math.isnan(value) else value

    return {
        "method": report.method,
        "k_bands": report.k_bands,
        "seed": report.seed,
        "bands": None if report.bands is None else list(report.bands),
        "oa": plain(report.oa),
        "aa": plain(report.aa),
        "kappa": plain(report.kappa),
        "per_class_accuracy": [plain(float(value))
                for value in report.per_class_accuracy],
        "platform": platform,
    }


def runs_jsonl(reports: Sequence[EvalReport]) -> str:
    platform = platform_descriptor()
    return "".join(json.dumps(run_record(report, platform)) + "\n"
            for report in reports)


def sweep(cube: HsiCube,
        labels: LabelMap,
        methods: Sequence[str],
        k_list: Sequence[int],
        seeds: Sequence[int],
        config: Optional[TrainConfig] = None,
        settings: Optional[ExperimentSettings] = None,
        cache: Optional[Dict] = None
        ) -> Tuple[pd.DataFrame, List[EvalReport]]:
    """
    Runs every method for every k and every seed, and averages over the seeds.

    Returns one row per (method, k), in the order given, with mean and
    population standard deviation of OA, AA and kappa, plus all single
    reports. A cache passed in is filled as run_experiment describes and can
    be written out afterwards.
    """
    if not methods or not k_list or not seeds:
        raise BadConfig("methods, k list and seeds must not be empty")
    config = config or TrainConfig()
    for method in methods:
        parse_method(method)

    cache = {} if cache is None else cache
    reports = []
    rows = []
    started = time.perf_counter()
    for method in methods:
        for k in k_list:
            runs = [run_experiment(cube, labels, method, k, config, seed,
                    settings, cache) for seed in seeds]
            reports.extend(runs)

            metrics = np.array([(run.oa, run.aa, run.kappa) for run in runs])
            means = metrics.mean(axis=0)
            stds = metrics.std(axis=0)
            rows.append((method, runs[0].k_bands, len(runs), means[0], stds[0],
                    means[1], stds[1], means[2], stds[2]))
            dogelog.info(f"{method} @ {k} bands over {len(runs)} seeds: OA "
                    f"{means[0]:.4f} +- {stds[0]:.4f}")

    dogelog.debug(f"Sweep took {time.perf_counter() - started:.1f} s")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS), reports


def table(cube: HsiCube,
        labels: LabelMap,
        methods: Sequence[str],
        k_bands: int,
        seeds: Sequence[int],
        config: Optional[TrainConfig] = None,
        settings: Optional[ExperimentSettings] = None
        ) -> Tuple[pd.DataFrame, List[EvalReport]]:
    """
    The fixed-k comparison: every method at k_bands, averaged over the seeds.
    Same columns as the sweep.
    """
    return sweep(cube, labels, methods, [k_bands], seeds, config, settings)


def sweep_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, float_format="%.17g")


def write_results(frame: pd.DataFrame, reports: Sequence[EvalReport],
        csv_path: str, log_path: Optional[str] = None):
    """Writes the sweep CSV and, if asked, the JSON-lines run log."""
    atomic_write(csv_path, sweep_csv(frame))
    if log_path is not None:
        atomic_write(log_path, runs_jsonl(reports))


# vim:textwidth=80:
