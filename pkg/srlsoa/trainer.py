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
Training the sparse operational autoencoder with ADAM, and reading the band
ranking off the trained encoder.

The usual flow is

    params, history = train(X_t, TrainConfig(seed=7))
    ranking = rank_bands(params, X_t)
    selected = select_top_k(ranking, 25)
"""
import math
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import dogelog
from ._models import (AdamState, BandList, BandRanking, Gradients,
    OperationalLayerParams, TrainConfig)
from .errors import (BadConfig, KTooLarge, NonFiniteLoss, ShapeMismatch)
from .helpers import STREAM_INIT, STREAM_SHUFFLE, make_rng
from .operational import _encode, _check_batch, backward_parts, map_chunks


CSV_FLOAT_FORMAT = "%.17g"


class LossRecord:
    """The loss of one update step, split into its two terms."""
    __slots__ = ("epoch", "batch", "loss", "fidelity", "regularizer")

    def __init__(self, epoch: int, batch: int, fidelity: float,
            regularizer: float):
        self.epoch = epoch
        self.batch = batch
        self.fidelity = fidelity
        self.regularizer = regularizer
        self.loss = fidelity + regularizer

    def as_tuple(self) -> tuple:
        return (self.epoch, self.batch, self.loss, self.fidelity,
                self.regularizer)

    def __repr__(self) -> str:
        return (f"LossRecord(epoch = {self.epoch}, batch = {self.batch}, "
                f"loss = {self.loss})")


def init_params(n_bands: int, config: TrainConfig) -> OperationalLayerParams:
    """
    Fresh encoder parameters for n_bands bands: weights uniform in [-s, s]
    with s = sqrt(6 / (fan_in + fan_out)), fan_in = Q * f_s and
    fan_out = f_s, all biases zero.
    """
    config.validate()
    if n_bands < config.filter_size:
        raise BadConfig(
            f"filter size {config.filter_size} needs at least as many bands, "
            f"got {n_bands}")

    fan_in = config.order_q * config.filter_size
    fan_out = config.filter_size
    scale = math.sqrt(6.0 / (fan_in + fan_out))

    rng = make_rng(config.seed, STREAM_INIT)
    weights = rng.uniform(-scale, scale,
            size=(n_bands, config.order_q, config.filter_size))
    biases = np.zeros((n_bands, config.order_q))
    return OperationalLayerParams(weights, biases)


def adam_step(params: OperationalLayerParams, grads: Gradients,
        state: AdamState, config: TrainConfig
        ) -> Tuple[OperationalLayerParams, AdamState]:
    """
    One bias-corrected ADAM update. Returns the new parameters and the new
    state, the given ones stay untouched.
    """
    if (grads.d_weights.shape != params.weights.shape
            or grads.d_biases.shape != params.biases.shape
            or state.m_weights.shape != params.weights.shape
            or state.m_biases.shape != params.biases.shape
            or grads.d_untied_biases.shape != params.untied_biases.shape
            or state.m_untied.shape != params.untied_biases.shape):
        raise ShapeMismatch("parameters, gradients and ADAM state must have "
                "matching shapes")

    t = state.t + 1
    beta1, beta2 = config.beta1, config.beta2
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    def update(theta, g, m, v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        theta = theta - config.learning_rate * m_hat \
            / (np.sqrt(v_hat) + config.epsilon)
        return theta, m, v

    weights, m_w, v_w = update(params.weights, grads.d_weights,
            state.m_weights, state.v_weights)
    biases, m_b, v_b = update(params.biases, grads.d_biases,
            state.m_biases, state.v_biases)
    untied, m_u, v_u = update(params.untied_biases, grads.d_untied_biases,
            state.m_untied, state.v_untied)

    return (OperationalLayerParams(weights, biases, untied),
            AdamState(m_w, m_b, v_w, v_b, t, m_u, v_u))


def train(X_t, config: TrainConfig, threads: int = 1,
        on_step: Optional[Callable] = None
        ) -> Tuple[OperationalLayerParams, List[LossRecord]]:
    """
    Trains the encoder on the rows of X_t, which should be normalized to
    [0, 1].

    Every epoch visits the samples in a freshly shuffled order, in consecutive
    batches of config.batch_size; the last, shorter batch is trained on too.
    Returns the final parameters and one LossRecord per update step.

    on_step, if given, is called after every update as
    on_step(record, batch, params_before_update).
    """
    config.validate()
    X_t = np.asarray(X_t, dtype=np.float64)
    if X_t.ndim != 2:
        raise ShapeMismatch(f"expected a samples x bands matrix, got shape "
                f"{X_t.shape}")
    sample_count, bands = X_t.shape
    if sample_count < config.batch_size:
        raise BadConfig(
            f"{sample_count} training samples can't fill a batch of "
            f"{config.batch_size}")

    params = init_params(bands, config)
    state = AdamState.zeros_like(params)
    history = []

    batches = math.ceil(sample_count / config.batch_size)
    dogelog.info(f"Training on {sample_count} samples of {bands} bands, "
            f"Q = {config.order_q}, f_s = {config.filter_size}, "
            f"{config.epochs} epochs of {batches} batches")

    rng = make_rng(config.seed, STREAM_SHUFFLE)
    progress = dogelog.Progress("Training", config.epochs)
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(sample_count)
            epoch_loss = 0.0

            for batch in range(batches):
                rows = order[batch * config.batch_size:
                        (batch + 1) * config.batch_size]
                X_s = X_t[rows]

                fidelity, sparsity, grads = backward_parts(X_s, params,
                        config.lambda_, threads)
                record = LossRecord(epoch, batch, fidelity,
                        config.lambda_ * sparsity)
                if not math.isfinite(record.loss):
                    raise NonFiniteLoss(epoch, batch, len(history),
                            record.loss)

                if on_step is not None:
                    on_step(record, X_s, params)

                params, state = adam_step(params, grads, state, config)
                history.append(record)
                epoch_loss += record.loss

            progress.stack()
            dogelog.debug(f"epoch {epoch + 1}/{config.epochs}: mean loss "
                    f"{epoch_loss / batches:.6g}")
    finally:
        progress.finish()

    return params, history


def rank_bands(params: OperationalLayerParams, X_t, chunk: int = 64,
        threads: int = 1, keep_matrix: bool = False) -> BandRanking:
    """
    Runs the trained encoder over every sample of X_t, averages the absolute
    coefficient matrices into A and weighs band i by the row sum of A.

    The samples are encoded `chunk` at a time and at most `threads` chunks
    are in flight, so memory stays bounded by threads * chunk * N * N values.
    The chunk sums are added up in sample order whatever the thread count.
    keep_matrix stores A on the ranking.
    """
    X_t = _check_batch(X_t, params)
    if X_t.shape[0] == 0:
        raise ShapeMismatch("can't rank bands without samples")
    if chunk < 1:
        raise BadConfig(f"chunk must be positive, got {chunk}")

    def absolute_sum(rows):
        _, _, A = _encode(rows, params)
        return np.abs(A).sum(axis=0)

    starts = range(0, X_t.shape[0], chunk)
    wave = max(threads, 1)
    total = np.zeros((params.filter_count, params.filter_count))
    for first in range(0, len(starts), wave):
        pieces = [X_t[start:start + chunk]
                for start in starts[first:first + wave]]
        for part in map_chunks(absolute_sum, pieces, threads):
            total += part

    mean_abs = total / X_t.shape[0]
    # row sums: row k is what band k contributes to all the others
    alpha = mean_abs.sum(axis=1)

    ranking = BandRanking(alpha, matrix=mean_abs if keep_matrix else None)
    dogelog.debug(f"Top bands: {ranking.order[:10].tolist()}")
    return ranking


def select_top_k(ranking: BandRanking, k: int) -> BandList:
    """The k highest ranked bands, sorted ascending by band index."""
    if k < 1:
        raise BadConfig(f"k must be positive, got {k}")
    if k > ranking.bands:
        raise KTooLarge(
            f"can't select {k} bands out of {ranking.bands}")
    return BandList.from_unsorted(ranking.order[:k], ranking.bands)


def history_frame(history: List[LossRecord]) -> pd.DataFrame:
    return pd.DataFrame(
            [record.as_tuple() for record in history],
            columns=["epoch", "batch", "loss", "fidelity", "regularizer"],
        )


def history_csv(history: List[LossRecord]) -> str:
    """The loss history as CSV text, one row per update step."""
    return history_frame(history).to_csv(index=False,
            float_format=CSV_FLOAT_FORMAT)


def ranking_frame(ranking: BandRanking) -> pd.DataFrame:
    """band_index, alpha and 1-based rank, most important band first."""
    return pd.DataFrame({
            "band_index": ranking.order,
            "alpha": ranking.alpha[ranking.order],
            "rank": np.arange(1, ranking.bands + 1),
        })


def ranking_csv(ranking: BandRanking) -> str:
    return ranking_frame(ranking).to_csv(index=False,
            float_format=CSV_FLOAT_FORMAT)


# vim:textwidth=80:
