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
The methods the autoencoder ranking gets compared against: PCA, which
extracts features instead of selecting bands, and a ridge self-representation
ranker in the spirit of ISSC.

Only the self-representation and row-energy ranking core of ISSC is here, the
spectral clustering step that ISSC runs on top of the coefficients is not.
"""
import math
import struct
from typing import Tuple

import numpy as np

from . import dogelog
from ._models import BandRanking, PcaModel, RidgeSelfRepresentation
from .errors import (BadMagic, DegenerateData, KTooLarge, ShapeMismatch,
    SingularSystem, TruncatedPayload)


JACOBI_TOLERANCE = 1e-10
JACOBI_MAX_SWEEPS = 100

PCA_MAGIC = b"PCAM"
PCA_VERSION = 1
PCA_HEADER = struct.Struct("<4sBII")


def jacobi_eigh(matrix, tolerance: float = JACOBI_TOLERANCE,
        max_sweeps: int = JACOBI_MAX_SWEEPS) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigenvalues and eigenvectors (as columns) of a symmetric matrix, with the
    cyclic Jacobi method.

    Sweeps go over the pairs (p, q), p < q, in row order, until the Frobenius
    norm of the off-diagonal part drops below tolerance * max(1, ||matrix||).
    The eigenvalues come back unsorted.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"need a square matrix, got shape {a.shape}")
    n = a.shape[0]
    v = np.eye(n)

    threshold = tolerance * max(1.0, float(np.linalg.norm(a)))
    for sweep in range(max_sweeps):
        off = math.sqrt(max(0.0,
                float(np.sum(a * a) - np.sum(np.diag(a) ** 2))))
        if off < threshold:
            break

        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(a[p, q])
                if apq == 0.0:
                    continue

                # negligible against both diagonal entries: rotating would
                # change nothing but the rounding
                g = 100.0 * abs(apq)
                app, aqq = float(a[p, p]), float(a[q, q])
                if abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    a[p, q] = a[q, p] = 0.0
                    continue

                # the rotation angle that zeroes a[p, q]
                h = aqq - app
                if abs(h) + g == abs(h):
                    # huge theta, t = 1 / (2 theta) to double precision
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = math.copysign(1.0, theta) \
                        / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                column_p = a[:, p].copy()
                column_q = a[:, q].copy()
                a[:, p] = c * column_p - s * column_q
                a[:, q] = s * column_p + c * column_q

                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q

                # exactly zero, rounding leaves a little residue otherwise
                a[p, q] = a[q, p] = 0.0

                vector_p = v[:, p].copy()
                vector_q = v[:, q].copy()
                v[:, p] = c * vector_p - s * vector_q
                v[:, q] = s * vector_p + c * vector_q

    dogelog.debug(f"Jacobi eigendecomposition of {n} x {n} took "
            f"{sweep + 1} sweeps")
    return np.diag(a).copy(), v


def pca_fit(X, k: int) -> PcaModel:
    """
    Fits a PCA with k components on the rows of X.

    The sample covariance (divisor M - 1) is decomposed with cyclic Jacobi,
    components are sorted by variance, descending, and each one is flipped so
    that its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeMismatch(f"expected a samples x bands matrix, got shape "
                f"{X.shape}")
    samples, bands = X.shape
    if samples < 2:
        raise DegenerateData(f"PCA needs at least 2 samples, got {samples}")
    if k < 1 or k > min(samples, bands):
        raise KTooLarge(
            f"can't extract {k} components from {samples} samples of "
            f"{bands} bands")

    mean = X.mean(axis=0)
    centered = X - mean
    covariance = centered.T @ centered / (samples - 1)
    if not np.any(covariance):
        raise DegenerateData("all samples are equal, the covariance is zero")

    values, vectors = jacobi_eigh(covariance)
    # stable sort keeps the lower index first on equal eigenvalues
    order = np.argsort(-values, kind="stable")[:k]
    components = vectors[:, order].T

    for component in components:
        if component[np.argmax(np.abs(component))] < 0.0:
            component *= -1.0

    explained = np.clip(values[order], 0.0, None)
    return PcaModel(mean, components, explained)


def pca_project(model: PcaModel, X) -> np.ndarray:
    """(X - mean) @ components.T, shape M x k."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.mean.size:
        raise ShapeMismatch(
            f"model was fitted on {model.mean.size} bands, data has "
            f"{X.shape[1]}")
    return (X - model.mean) @ model.components.T


def encode_pca(model: PcaModel) -> bytes:
    """
    The PCAM file bytes: magic, version u8, N u32, k u32, then mean,
    components (row-major) and explained variances as float64.
    """
    header = PCA_HEADER.pack(PCA_MAGIC, PCA_VERSION, model.mean.size, model.k)
    payload = np.concatenate([model.mean, model.components.reshape(-1),
            model.explained_variance])
    return header + payload.astype("<f8").tobytes()


def decode_pca(raw: bytes, path: str = "<bytes>") -> PcaModel:
    if len(raw) < PCA_HEADER.size:
        raise TruncatedPayload(f"{path} is too short for a PCA model")
    magic, version, bands, k = PCA_HEADER.unpack_from(raw)
    if magic != PCA_MAGIC or version != PCA_VERSION:
        raise BadMagic(f"{path} is not a version {PCA_VERSION} PCAM file")

    count = bands + k * bands + k
    if len(raw) - PCA_HEADER.size != 8 * count:
        raise TruncatedPayload(
            f"{path} doesn't hold the {count} values its header announces")
    payload = np.frombuffer(raw, dtype="<f8", offset=PCA_HEADER.size)
    return PcaModel(
            payload[:bands],
            payload[bands:bands + k * bands].reshape(k, bands),
            payload[bands + k * bands:],
        )


def ridge_self_representation(X, ridge_lambda: float
        ) -> RidgeSelfRepresentation:
    """
    Writes every band as ridge-regularized combination of the others:
    column j of the result minimizes ||x_j - X_{-j} w||^2 + lambda ||w||^2.

    The Gram matrix is computed once, every column is then one Cholesky
    solve of the normal equations (Gram_{-j} + lambda I) w = X_{-j}^T x_j.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeMismatch(f"expected a nonempty samples x bands matrix, "
                f"got shape {X.shape}")
    if not ridge_lambda > 0.0:
        raise ValueError(f"ridge lambda must be positive, got {ridge_lambda}")

    bands = X.shape[1]
    gram = X.T @ X
    coefficients = np.zeros((bands, bands))

    for j in range(bands):
        others = np.delete(np.arange(bands), j)
        system = gram[np.ix_(others, others)] + ridge_lambda * np.eye(bands - 1)
        rhs = gram[others, j]
        try:
            lower = np.linalg.cholesky(system)
        except np.linalg.LinAlgError:
            raise SingularSystem(
                f"normal equations of band {j} are not positive definite")
        coefficients[others, j] = np.linalg.solve(lower.T,
                np.linalg.solve(lower, rhs))

    return RidgeSelfRepresentation(coefficients, ridge_lambda)


def issc_rank(X, ridge_lambda: float = 1e-3) -> BandRanking:
    """
    Ranks bands by the row sums of the absolute ridge self-representation:
    alpha_i = sum_j |W[i, j]|, how much band i helps to rebuild the others.
    """
    representation = ridge_self_representation(X, ridge_lambda)
    alpha = np.abs(representation.coefficients).sum(axis=1)
    return BandRanking(alpha, matrix=representation.coefficients)


# vim:textwidth=80:
