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
The sparse 1D-operational autoencoder: encoder, decoder, loss and the
gradients of the loss, all written out by hand in numpy.

The encoder is a single layer of L = N generative neurons. Neuron k computes,
for a spectrum x of N bands,

    z_k = sum over q = 1..Q of corr(x ** q, w[k, q - 1]) + b[k, q - 1]
    z_k[j] += u[k, j]
    row k of A = tanh(z_k), with A[k, k] forced to 0

where corr is a "same"-padded cross-correlation, so every neuron produces N
values and A is N x N. The kernels only see the spectrum around position j,
the untied bias u[k, j] is the one part of z_k[j] that belongs to the band
pair (k, j) itself. The decoder has no parameters, it reconstructs the
spectrum as x @ A. The loss is

    0.5 * ||X - X_hat||^2  +  lambda * sum(mean over samples of |A_i|)

Everything is float64.
"""
import functools
import struct
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._models import Gradients, OperationalLayerParams, RepresentationBatch
from .errors import (BadKernelSize, BadMagic, ShapeMismatch, TruncatedPayload)
from .helpers import STREAM_GRADCHECK, make_rng


PARAMS_MAGIC = b"SOAP"
PARAMS_VERSION = 2
PARAMS_HEADER = struct.Struct("<4sBIII")


def taylor_transform(x: float, w) -> float:
    """
    Evaluates the truncated Taylor series w[0] + w[1] x + ... + w[Q] x^Q, the
    nonlinearity a generative neuron applies per kernel tap.
    """
    return float(np.polynomial.polynomial.polyval(x, np.asarray(w,
            dtype=np.float64)))


def _check_kernel(bands: int, filter_size: int):
    if filter_size < 1 or filter_size % 2 == 0:
        raise BadKernelSize(f"filter size must be odd, got {filter_size}")
    if filter_size > bands:
        raise BadKernelSize(
            f"filter size {filter_size} is wider than the {bands} bands")


def _windows(signal: np.ndarray, filter_size: int) -> np.ndarray:
    """
    Zero-pads the last axis by (filter_size - 1) / 2 on both sides and returns
    the sliding windows, shape (..., N, filter_size):
    windows[..., n, j] == signal[..., n + j - half] (0 outside the signal).
    """
    half = (filter_size - 1) // 2
    padding = [(0, 0)] * (signal.ndim - 1) + [(half, half)]
    padded = np.pad(signal, padding)
    return sliding_window_view(padded, filter_size, axis=-1)


def conv1d_same(signal, kernel) -> np.ndarray:
    """
    Cross-correlates the signal with the kernel, zero padded so the output is
    as long as the signal: out[n] = sum_j signal[n + j - half] * kernel[j].
    """
    signal = np.asarray(signal, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    _check_kernel(signal.size, kernel.size)
    return _windows(signal, kernel.size) @ kernel


def _check_batch(X: np.ndarray, params: OperationalLayerParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"expected an m x N batch, got shape {X.shape}")
    if params.filter_count != X.shape[1]:
        raise ShapeMismatch(
            f"encoder has {params.filter_count} filters but the data has "
            f"{X.shape[1]} bands, they must be equal")
    _check_kernel(X.shape[1], params.filter_size)
    return X


def _patches(X: np.ndarray, order: int, filter_size: int) -> np.ndarray:
    """
    The input of every neuron, flattened for a matrix product: shape
    (m, N, Q * f_s), entry [i, n, q * f_s + j] is X[i, n + j - half] ** (q + 1).
    """
    powers = X[:, None, :] ** np.arange(1, order + 1)[None, :, None]
    windows = _windows(powers, filter_size)                 # m, Q, N, f_s
    m, _, bands, _ = windows.shape
    return windows.transpose(0, 2, 1, 3).reshape(m, bands, order * filter_size)


def _preactivation(patches: np.ndarray,
        params: OperationalLayerParams) -> np.ndarray:
    """z of every neuron and sample, shape (m, L, N)."""
    kernels = params.weights.reshape(params.filter_count, -1)
    z = np.matmul(patches, kernels.T).transpose(0, 2, 1)
    # every power brings its own bias, and they all add up
    z += params.biases.sum(axis=1)[None, :, None]
    return z + params.untied_biases[None, :, :]


def _mask_diagonal(A: np.ndarray) -> np.ndarray:
    diagonal = np.arange(A.shape[1])
    A[:, diagonal, diagonal] = 0.0
    return A


def _encode(X: np.ndarray, params: OperationalLayerParams):
    patches = _patches(X, params.order, params.filter_size)
    activation = np.tanh(_preactivation(patches, params))
    return patches, activation, _mask_diagonal(activation.copy())


def encoder_forward(X_s, params: OperationalLayerParams) -> RepresentationBatch:
    """
    Runs the operational layer over every sample of the batch and returns one
    N x N coefficient matrix per sample, diagonal zeroed, plus their absolute
    mean.
    """
    X_s = _check_batch(X_s, params)
    _, _, A = _encode(X_s, params)
    return RepresentationBatch(A)


def decoder_reconstruct(X_s, rep: RepresentationBatch) -> np.ndarray:
    """Row i of the result is X_s[i] @ A_i."""
    X_s = np.asarray(X_s, dtype=np.float64)
    if X_s.shape != rep.per_sample.shape[:2]:
        raise ShapeMismatch(
            f"batch of shape {X_s.shape} doesn't match representations of "
            f"shape {rep.per_sample.shape}")
    return np.matmul(X_s[:, None, :], rep.per_sample)[:, 0, :]


def loss(X_s, X_hat, rep: RepresentationBatch, lambda_: float) -> float:
    """
    Half the squared reconstruction error plus lambda times the l1 norm of the
    mean absolute representation.
    """
    fidelity, sparsity = loss_parts(X_s, X_hat, rep)
    return fidelity + lambda_ * sparsity


def loss_parts(X_s, X_hat, rep: RepresentationBatch) -> Tuple[float, float]:
    """The two terms of the loss, without lambda: (fidelity, l1 norm)."""
    X_s = np.asarray(X_s, dtype=np.float64)
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if X_s.shape != X_hat.shape:
        raise ShapeMismatch(
            f"can't compare batches of shape {X_s.shape} and {X_hat.shape}")
    fidelity = 0.5 * float(np.sum((X_s - X_hat) ** 2))
    return fidelity, float(np.sum(rep.mean_abs))


class _Partial:
    """Per-sample contributions of a chunk of the batch."""
    def __init__(self, fidelity, absolute, d_kernels, d_biases, d_untied):
        self.fidelity = fidelity
        self.absolute = absolute
        self.d_kernels = d_kernels
        self.d_biases = d_biases
        self.d_untied = d_untied


def _backward_chunk(X: np.ndarray, params: OperationalLayerParams,
        lambda_: float, batch_size: int) -> _Partial:
    patches, activation, A = _encode(X, params)
    residual = np.matmul(X[:, None, :], A)[:, 0, :] - X

    # dL/dA_i[k, j] = x_i[k] * r_i[j] + lambda / m * sign(A_i[k, j])
    d_A = X[:, :, None] * residual[:, None, :] \
        + (lambda_ / batch_size) * np.sign(A)
    _mask_diagonal(d_A)
    d_z = d_A * (1.0 - activation ** 2)

    d_kernels = np.matmul(d_z, patches)                     # m, L, Q * f_s
    d_bias = d_z.sum(axis=2)                                # m, L

    return _Partial(
            0.5 * np.sum(residual ** 2, axis=1),
            np.abs(A).sum(axis=(1, 2)),
            d_kernels,
            d_bias,
            d_z,
        )


@functools.lru_cache(maxsize=None)
def _executor(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=threads,
            thread_name_prefix="srlsoa")


def map_chunks(function: Callable, chunks: List, threads: int = 1) -> List:
    """
    Applies the function to every chunk, on up to `threads` worker threads,
    and returns the results in chunk order.
    """
    if threads <= 1 or len(chunks) <= 1:
        return [function(chunk) for chunk in chunks]
    return list(_executor(threads).map(function, chunks))


def backward_parts(X_s, params: OperationalLayerParams, lambda_: float,
        threads: int = 1) -> Tuple[float, float, Gradients]:
    """
    Returns (fidelity, l1 norm, gradients of the full loss).

    The batch is cut into one chunk per thread, but the per-sample
    contributions are always summed up in sample order, so the result doesn't
    depend on the thread count.
    """
    X_s = _check_batch(X_s, params)
    batch_size = X_s.shape[0]

    bounds = np.linspace(0, batch_size, min(threads, batch_size) + 1)
    bounds = bounds.astype(int)
    chunks = [X_s[start:stop] for start, stop in zip(bounds[:-1], bounds[1:])
            if stop > start]
    partials = map_chunks(
            lambda chunk: _backward_chunk(chunk, params, lambda_, batch_size),
            chunks, threads)

    fidelity = 0.0
    absolute = 0.0
    d_kernels = np.zeros((params.filter_count,
            params.order * params.filter_size))
    d_bias = np.zeros(params.filter_count)
    d_untied = np.zeros_like(params.untied_biases)
    for partial in partials:
        for i in range(partial.fidelity.size):
            fidelity += partial.fidelity[i]
            absolute += partial.absolute[i]
            d_kernels += partial.d_kernels[i]
            d_bias += partial.d_biases[i]
            d_untied += partial.d_untied[i]

    grads = Gradients(
            d_kernels.reshape(params.weights.shape),
            np.repeat(d_bias[:, None], params.order, axis=1),
            d_untied,
        )
    return float(fidelity), float(absolute / batch_size), grads


def backward(X_s, params: OperationalLayerParams, lambda_: float,
        threads: int = 1) -> Tuple[float, Gradients]:
    """
    The loss of the batch and its exact gradient with respect to every weight
    and bias.

    The gradient flows through the decoder, tanh, the correlation and the
    input powers. Masked diagonal entries pass no gradient, and the l1 term
    uses sign(A) / m as subgradient, which is 0 at 0.
    """
    fidelity, sparsity, grads = backward_parts(X_s, params, lambda_, threads)
    return fidelity + lambda_ * sparsity, grads


def evaluate_loss(X_s, params: OperationalLayerParams, lambda_: float) -> float:
    """Forward pass, decoder and loss in one go."""
    rep = encoder_forward(X_s, params)
    return loss(X_s, decoder_reconstruct(X_s, rep), rep, lambda_)


def grad_check(params: OperationalLayerParams, X_s, lambda_: float,
        step: float = 1e-5) -> float:
    """
    Compares the analytic gradient with central finite differences, parameter
    by parameter, and returns the worst relative error
    |a - b| / max(|a|, |b|, 1e-8).
    """
    if not step > 0.0:
        raise ValueError(f"finite difference step must be positive, got {step}")

    _, grads = backward(X_s, params, lambda_)

    worst = 0.0
    for name, analytic in (("weights", grads.d_weights),
            ("biases", grads.d_biases),
            ("untied_biases", grads.d_untied_biases)):
        base = getattr(params, name)
        for index in np.ndindex(base.shape):
            values = {
                "weights": params.weights.copy(),
                "biases": params.biases.copy(),
                "untied_biases": params.untied_biases.copy(),
            }

            values[name][index] = base[index] + step
            plus = evaluate_loss(X_s, OperationalLayerParams(**values),
                    lambda_)

            values[name][index] = base[index] - step
            minus = evaluate_loss(X_s, OperationalLayerParams(**values),
                    lambda_)

            numeric = (plus - minus) / (2.0 * step)
            a = analytic[index]
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, error)

    return worst


def gradcheck_instance(n_bands: int, order_q: int, filter_size: int,
        batch_size: int, seed: int):
    """
    A random (params, X_s) pair for gradient checks.

    The biases of every filter add up to at least 0.85 in magnitude, the
    untied biases stay within 0.1 and the correlation part can contribute at
    most 0.5, so every z stays at least 0.25 away from 0. That keeps |A|
    away from its kink, where finite differences and the subgradient would
    legitimately disagree.
    """
    _check_kernel(n_bands, filter_size)
    rng = make_rng(seed, STREAM_GRADCHECK)

    X = rng.uniform(0.0, 1.0, size=(batch_size, n_bands))

    scale = 0.5 / (order_q * filter_size)
    weights = rng.uniform(-scale, scale,
            size=(n_bands, order_q, filter_size))

    signs = rng.choice([-1.0, 1.0], size=n_bands)
    magnitudes = rng.uniform(0.85, 1.5, size=n_bands)
    shares = rng.dirichlet(np.ones(order_q), size=n_bands)
    biases = (signs * magnitudes)[:, None] * shares
    untied = rng.uniform(-0.1, 0.1, size=(n_bands, n_bands))

    return OperationalLayerParams(weights, biases, untied), X


def encode_params(params: OperationalLayerParams) -> bytes:
    """
    The SOAP file bytes: header, then weights, biases and untied biases as
    float64.
    """
    header = PARAMS_HEADER.pack(PARAMS_MAGIC, PARAMS_VERSION,
            params.filter_count, params.order, params.filter_size)
    return header \
        + params.weights.astype("<f8", copy=False).tobytes() \
        + params.biases.astype("<f8", copy=False).tobytes() \
        + params.untied_biases.astype("<f8", copy=False).tobytes()


def decode_params(raw: bytes, path: str = "<bytes>") -> OperationalLayerParams:
    """
    Reads SOAP file bytes. Version 1 files predate the untied biases, they
    load with all of them zero.
    """
    if len(raw) < PARAMS_HEADER.size:
        raise TruncatedPayload(f"{path} is too short for a parameter file")
    magic, version, bands, order, filter_size = PARAMS_HEADER.unpack_from(raw)
    if magic != PARAMS_MAGIC or version not in (1, PARAMS_VERSION):
        raise BadMagic(f"{path} is not a version 1 or {PARAMS_VERSION} SOAP "
                "file")

    weight_count = bands * order * filter_size
    bias_count = bands * order
    untied_count = bands * bands if version >= 2 else 0
    expected = weight_count + bias_count + untied_count
    if len(raw) - PARAMS_HEADER.size != 8 * expected:
        raise TruncatedPayload(
            f"{path} doesn't hold the {expected} values its header announces")

    payload = np.frombuffer(raw, dtype="<f8", offset=PARAMS_HEADER.size)
    weights = payload[:weight_count].reshape(bands, order, filter_size)
    biases = payload[weight_count:weight_count + bias_count] \
        .reshape(bands, order)
    untied = None
    if untied_count:
        untied = payload[weight_count + bias_count:].reshape(bands, bands)
    return OperationalLayerParams(weights, biases, untied)


# vim:textwidth=80:
