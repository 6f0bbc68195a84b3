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
Data models, like hyperspectral cubes, the encoder parameters or a band
ranking.

All of them are values: the arrays inside are marked read-only after
construction, so they can be handed around (and across threads) freely.
"""
import dataclasses
from typing import Optional, Sequence

import numpy as np

from .errors import (BadConfig, BadKernelSize, DataError, DimMismatch,
    IndexOutOfRange, NonFiniteValue, ShapeMismatch)


def _frozen(array, dtype) -> np.ndarray:
    """
    Returns the given array as a contiguous, read-only array of the given
    dtype. Arrays that are already read-only are shared, everything else is
    copied so the caller's buffer stays writable.
    """
    array = np.ascontiguousarray(array, dtype=dtype)
    if array.flags.writeable:
        array = array.copy()
        array.setflags(write=False)
    return array


class HsiCube:
    """
    A hyperspectral image cube, height x width pixels with `bands` spectral
    channels each.

    The values are kept band-sequential, exactly like on disk: `data` has the
    shape (bands, height, width), so all pixels of band 0 come first. Use
    `hsi_data.flatten_pixels` to get the samples x bands matrix instead.
    """
    def __init__(self, height: int, width: int, bands: int, values):
        if height <= 0 or width <= 0 or bands <= 0:
            raise DimMismatch(
                f"cube dimensions must be positive (got {height} x {width} x "
                f"{bands})")
        values = np.asarray(values, dtype=np.float32)
        if values.size != height * width * bands:
            raise DimMismatch(
                f"cube of {height} x {width} x {bands} needs "
                f"{height * width * bands} values, got {values.size}")
        if not np.isfinite(values).all():
            raise NonFiniteValue("cube contains NaN or infinite values")

        self.height = int(height)
        self.width = int(width)
        self.bands = int(bands)
        self.data = _frozen(values.reshape(bands, height, width), np.float32)

    @property
    def values(self) -> np.ndarray:
        """The flat, band-sequential value array."""
        return self.data.reshape(-1)

    @property
    def pixel_count(self) -> int:
        return self.height * self.width

    def __repr__(self) -> str:
        return f'''\tHsiCube(
\t\theight = {self.height},
\t\twidth = {self.width},
\t\tbands = {self.bands},
\t\trange = [{self.data.min()}, {self.data.max()}]
\t)'''

    def __str__(self) -> str:
        return f"{self.height}x{self.width}x{self.bands} cube"

    def __eq__(self, other) -> bool:
        if not isinstance(other, HsiCube):
            return False
        # bit-exact, so -0.0 != 0.0 and NaN payloads would count
        return (self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes())


class LabelMap:
    """
    Ground truth for a cube: one unsigned 16-bit class id per pixel, row-major.
    0 means "not annotated", everything else is a class id starting at 1.
    """
    def __init__(self, height: int, width: int, labels):
        labels = np.asarray(labels)
        if labels.size != height * width:
            raise DimMismatch(
                f"label map of {height} x {width} needs {height * width} "
                f"labels, got {labels.size}")
        if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
            raise DataError("labels must fit into an unsigned 16-bit integer")

        self.height = int(height)
        self.width = int(width)
        self.labels = _frozen(labels.reshape(height, width), np.uint16)

        present = self.classes
        if present.size and present[-1] != present.size:
            raise DataError(
                f"class ids must be contiguous from 1, found "
                f"{present.tolist()}")

    @property
    def classes(self) -> np.ndarray:
        """Sorted class ids that occur, unannotated excluded."""
        unique = np.unique(self.labels)
        return unique[unique > 0]

    @property
    def class_count(self) -> int:
        return int(self.classes.size)

    @property
    def flat(self) -> np.ndarray:
        return self.labels.reshape(-1)

    def matches(self, cube: HsiCube) -> bool:
        return self.height == cube.height and self.width == cube.width

    def __repr__(self) -> str:
        return f'''\tLabelMap(
\t\theight = {self.height},
\t\twidth = {self.width},
\t\tclasses = {self.class_count},
\t\tannotated = {int(np.count_nonzero(self.labels))}
\t)'''

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelMap):
            return False
        return np.array_equal(self.labels, other.labels)


class SplitIndices:
    """
    Flat pixel indices of the training and the test part of the annotated
    pixels. Both are sorted ascending.
    """
    def __init__(self, train, test):
        self.train = _frozen(train, np.int64)
        self.test = _frozen(test, np.int64)

    def __repr__(self) -> str:
        return (f"SplitIndices(train = {self.train.size} pixels, "
                f"test = {self.test.size} pixels)")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitIndices):
            return False
        return (np.array_equal(self.train, other.train)
                and np.array_equal(self.test, other.test))


class BandList:
    """
    A sorted set of 0-based band indices, either the bands to drop or the
    bands that got selected.
    """
    def __init__(self, indices: Sequence[int], n_bands: Optional[int] = None):
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        if indices.size and np.any(np.diff(indices) <= 0):
            raise IndexOutOfRange(
                f"band indices must be strictly increasing, got "
                f"{indices.tolist()}")
        if indices.size and indices[0] < 0:
            raise IndexOutOfRange(f"negative band index {indices[0]}")
        if n_bands is not None and indices.size and indices[-1] >= n_bands:
            raise IndexOutOfRange(
                f"band index {indices[-1]} out of range for {n_bands} bands")
        self.indices = _frozen(indices, np.int64)

    @staticmethod
    def from_unsorted(indices: Sequence[int], n_bands: Optional[int] = None):
        """Sorts and deduplicates before constructing."""
        return BandList(np.unique(np.asarray(indices, dtype=np.int64)),
                n_bands)

    def __len__(self) -> int:
        return int(self.indices.size)

    def __iter__(self):
        return iter(self.indices.tolist())

    def __contains__(self, band) -> bool:
        return int(band) in set(self.indices.tolist())

    def __repr__(self) -> str:
        return f"BandList({self.indices.tolist()})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, BandList):
            return False
        return np.array_equal(self.indices, other.indices)


class OperationalLayerParams:
    """
    The trainable part of the encoder: L generative neurons, each with a
    polynomial kernel of order Q over f_s taps.

    weights has the shape (L, Q, f_s): weights[k, q - 1] is the kernel that
    gets applied to the q-th power of the input in filter k. biases has the
    shape (L, Q), one bias per filter and power. untied_biases has the shape
    (L, L): untied_biases[k, j] is added to filter k at output position j
    only, all zero if not given. Always float64.
    """
    def __init__(self, weights, biases, untied_biases=None):
        weights = np.asarray(weights, dtype=np.float64)
        biases = np.asarray(biases, dtype=np.float64)
        if weights.ndim != 3:
            raise ShapeMismatch(
                f"weights must be L x Q x f_s, got shape {weights.shape}")
        if biases.shape != weights.shape[:2]:
            raise ShapeMismatch(
                f"biases must be {weights.shape[0]} x {weights.shape[1]}, got "
                f"shape {biases.shape}")
        filters = weights.shape[0]
        if untied_biases is None:
            untied_biases = np.zeros((filters, filters))
        untied_biases = np.asarray(untied_biases, dtype=np.float64)
        if untied_biases.shape != (filters, filters):
            raise ShapeMismatch(
                f"untied biases must be {filters} x {filters}, got shape "
                f"{untied_biases.shape}")
        if weights.shape[2] % 2 == 0:
            raise BadKernelSize(
                f"filter size must be odd, got {weights.shape[2]}")
        if not (np.isfinite(weights).all() and np.isfinite(biases).all()
                and np.isfinite(untied_biases).all()):
            raise NonFiniteValue("encoder parameters contain NaN or infinity")

        self.weights = _frozen(weights, np.float64)
        self.biases = _frozen(biases, np.float64)
        self.untied_biases = _frozen(untied_biases, np.float64)

    @property
    def filter_count(self) -> int:
        return self.weights.shape[0]

    @property
    def order(self) -> int:
        return self.weights.shape[1]

    @property
    def filter_size(self) -> int:
        return self.weights.shape[2]

    def __repr__(self) -> str:
        return f'''\tOperationalLayerParams(
\t\tfilter_count = {self.filter_count},
\t\torder = {self.order},
\t\tfilter_size = {self.filter_size},
\t\tweight_norm = {np.linalg.norm(self.weights)}
\t)'''

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperationalLayerParams):
            return False
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases)
                and np.array_equal(self.untied_biases, other.untied_biases))


class RepresentationBatch:
    """
    What the encoder makes out of a batch: one N x N coefficient matrix per
    sample (per_sample, shape m x N x N) and the mean of their absolute values
    (mean_abs, N x N). Row k of a matrix is the output of filter k.
    """
    def __init__(self, per_sample, mean_abs=None):
        per_sample = np.asarray(per_sample, dtype=np.float64)
        if (per_sample.ndim != 3
                or per_sample.shape[1] != per_sample.shape[2]):
            raise ShapeMismatch(
                f"representation must be m x N x N, got {per_sample.shape}")
        if mean_abs is None:
            mean_abs = np.abs(per_sample).mean(axis=0)
        self.per_sample = _frozen(per_sample, np.float64)
        self.mean_abs = _frozen(mean_abs, np.float64)

    @property
    def batch_size(self) -> int:
        return self.per_sample.shape[0]

    @property
    def bands(self) -> int:
        return self.per_sample.shape[1]

    def __repr__(self) -> str:
        return (f"RepresentationBatch(m = {self.batch_size}, "
                f"N = {self.bands})")


class Gradients:
    """Partial derivatives of the loss, shaped like OperationalLayerParams."""
    def __init__(self, d_weights, d_biases, d_untied_biases=None):
        self.d_weights = _frozen(d_weights, np.float64)
        self.d_biases = _frozen(d_biases, np.float64)
        if d_untied_biases is None:
            filters = self.d_weights.shape[0]
            d_untied_biases = np.zeros((filters, filters))
        self.d_untied_biases = _frozen(d_untied_biases, np.float64)

    def __repr__(self) -> str:
        return (f"Gradients(|d_weights| = {np.linalg.norm(self.d_weights)}, "
                f"|d_biases| = {np.linalg.norm(self.d_biases)}, "
                f"|d_untied_biases| = "
                f"{np.linalg.norm(self.d_untied_biases)})")


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    Every knob of the training loop. The defaults are the ones the method
    was published with, except filter_size, which was never stated; 11 is
    our own choice.
    """
    lambda_: float = 0.01
    order_q: int = 3
    filter_size: int = 11
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 5
    seed: int = 0
    init_scale_mode: str = "fan_avg_uniform"

    def validate(self) -> "TrainConfig":
        """Raises BadConfig on the first field out of its range."""
        if not (self.lambda_ >= 0.0 and np.isfinite(self.lambda_)):
            raise BadConfig(f"lambda must be nonnegative, got {self.lambda_}")
        if self.order_q < 1:
            raise BadConfig(f"order Q must be positive, got {self.order_q}")
        if self.filter_size < 1 or self.filter_size % 2 == 0:
            raise BadConfig(
                f"filter size must be odd and positive, got "
                f"{self.filter_size}")
        if not self.learning_rate > 0.0:
            raise BadConfig(
                f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise BadConfig(
                f"ADAM betas must lie in [0, 1), got {self.beta1}, "
                f"{self.beta2}")
        if not self.epsilon > 0.0:
            raise BadConfig(f"epsilon must be positive, got {self.epsilon}")
        if self.epochs < 0:
            raise BadConfig(f"epochs must not be negative, got {self.epochs}")
        if self.batch_size < 1:
            raise BadConfig(
                f"batch size must be positive, got {self.batch_size}")
        if self.init_scale_mode != "fan_avg_uniform":
            raise BadConfig(
                f"unknown init scale mode '{self.init_scale_mode}'")
        return self

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


class AdamState:
    """
    First and second moment estimates for every parameter array, and how many
    updates have been applied so far.
    """
    def __init__(self, m_weights, m_biases, v_weights, v_biases, t: int = 0,
            m_untied=None, v_untied=None):
        self.m_weights = _frozen(m_weights, np.float64)
        self.m_biases = _frozen(m_biases, np.float64)
        self.v_weights = _frozen(v_weights, np.float64)
        self.v_biases = _frozen(v_biases, np.float64)

        filters = self.m_weights.shape[0]
        self.m_untied = _frozen(np.zeros((filters, filters))
                if m_untied is None else m_untied, np.float64)
        self.v_untied = _frozen(np.zeros((filters, filters))
                if v_untied is None else v_untied, np.float64)
        self.t = int(t)

    @staticmethod
    def zeros_like(params: OperationalLayerParams) -> "AdamState":
        return AdamState(
                np.zeros_like(params.weights),
                np.zeros_like(params.biases),
                np.zeros_like(params.weights),
                np.zeros_like(params.biases),
            )

    def __repr__(self) -> str:
        return f"AdamState(t = {self.t})"


class BandRanking:
    """
    Importance weight alpha for every band, and the band indices sorted by
    it, most important first. Ties go to the lower band index.

    matrix is the averaged absolute coefficient matrix the weights were read
    off from, if the ranker was asked to keep it.
    """
    def __init__(self, alpha, order=None, matrix=None):
        alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
        if order is None:
            order = order_by_weight(alpha)
        order = np.asarray(order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(alpha.size)):
            raise ShapeMismatch("ranking order must be a permutation of bands")
        self.alpha = _frozen(alpha, np.float64)
        self.order = _frozen(order, np.int64)
        self.matrix = None if matrix is None else _frozen(matrix, np.float64)

    @property
    def bands(self) -> int:
        return self.alpha.size

    def __repr__(self) -> str:
        head = self.order[:5].tolist()
        return f'''\tBandRanking(
\t\tbands = {self.bands},
\t\ttop = {head}{" ..." if self.bands > 5 else ""}
\t)'''


def order_by_weight(alpha) -> np.ndarray:
    """
    Band indices sorted by weight, descending, ties broken by ascending index.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    # lexsort sorts by the last key first
    return np.lexsort((np.arange(alpha.size), -alpha)).astype(np.int64)


class PcaModel:
    """
    A fitted principal component analysis: the training mean, k orthonormal
    components as rows, and the variance each one explains (descending).
    """
    def __init__(self, mean, components, explained_variance):
        mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        components = np.atleast_2d(np.asarray(components, dtype=np.float64))
        explained_variance = np.asarray(explained_variance,
                dtype=np.float64).reshape(-1)
        if components.shape[1] != mean.size:
            raise ShapeMismatch(
                f"components have {components.shape[1]} columns, mean has "
                f"{mean.size} entries")
        if explained_variance.size != components.shape[0]:
            raise ShapeMismatch(
                "one explained variance per component is needed")
        self.mean = _frozen(mean, np.float64)
        self.components = _frozen(components, np.float64)
        self.explained_variance = _frozen(explained_variance, np.float64)

    @property
    def k(self) -> int:
        return self.components.shape[0]

    def __repr__(self) -> str:
        return f'''\tPcaModel(
\t\tN = {self.mean.size},
\t\tk = {self.k},
\t\texplained_variance = {self.explained_variance.sum()}
\t)'''


class RidgeSelfRepresentation:
    """
    Every band written as a ridge-regularized linear combination of the other
    bands: column j of coefficients reconstructs band j, the diagonal is 0.
    """
    def __init__(self, coefficients, ridge_lambda: float):
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if np.any(np.diag(coefficients) != 0.0):
            raise DataError("self-representation must have a zero diagonal")
        if not np.isfinite(coefficients).all():
            raise NonFiniteValue("self-representation is not finite")
        self.coefficients = _frozen(coefficients, np.float64)
        self.ridge_lambda = float(ridge_lambda)

    def __repr__(self) -> str:
        return (f"RidgeSelfRepresentation(N = {self.coefficients.shape[0]}, "
                f"ridge_lambda = {self.ridge_lambda})")


class ConfusionMatrix:
    """
    counts[true - 1, predicted - 1] is the number of test pixels of class
    `true` that were classified as `predicted`.
    """
    def __init__(self, counts):
        counts = np.asarray(counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ShapeMismatch(
                f"confusion matrix must be C x C (it is "
                f"{' x '.join(map(str, counts.shape))})")
        if not np.issubdtype(counts.dtype, np.integer):
            if np.any(counts != np.round(counts)):
                raise DataError("confusion counts must be integers")
        if np.any(counts < 0):
            raise DataError("confusion counts must be non-negative")
        self.counts = _frozen(counts, np.int64)

    @staticmethod
    def from_labels(truth, predicted, class_count: int) -> "ConfusionMatrix":
        truth = np.asarray(truth, dtype=np.int64)
        predicted = np.asarray(predicted, dtype=np.int64)
        if truth.shape != predicted.shape:
            raise ShapeMismatch(
                f"{truth.size} true labels but {predicted.size} predictions")
        counts = np.zeros((class_count, class_count), dtype=np.int64)
        np.add.at(counts, (truth - 1, predicted - 1), 1)
        return ConfusionMatrix(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    def __repr__(self) -> str:
        return (f"ConfusionMatrix(C = {self.class_count}, "
                f"total = {self.total})")


class EvalReport:
    """
    Classification quality of one run: overall accuracy, average per-class
    accuracy, Cohen's kappa, plus what produced them.

    per_class_accuracy is NaN for classes without any test pixel; those are
    left out of aa.
    """
    def __init__(self,
            oa: float,
            aa: float,
            kappa: float,
            per_class_accuracy,
            k_bands: Optional[int] = None,
            method: Optional[str] = None,
            seed: Optional[int] = None,
            bands: Optional[BandList] = None):
        self.oa = float(oa)
        self.aa = float(aa)
        self.kappa = float(kappa)
        self.per_class_accuracy = _frozen(per_class_accuracy, np.float64)
        self.k_bands = k_bands
        self.method = method
        self.seed = seed
        self.bands = bands

    def with_run(self, k_bands: int, method: str, seed: int,
            bands: Optional[BandList]) -> "EvalReport":
        return EvalReport(self.oa, self.aa, self.kappa,
                self.per_class_accuracy, k_bands, method, seed, bands)

    def __repr__(self) -> str:
        return f'''\tEvalReport(
\t\tmethod = "{self.method}",
\t\tk_bands = {self.k_bands},
\t\tseed = {self.seed},
\t\toa = {self.oa},
\t\taa = {self.aa},
\t\tkappa = {self.kappa}
\t)'''

    def __str__(self) -> str:
        return (f"{self.method} @ {self.k_bands} bands: OA {self.oa:.4f}, "
                f"AA {self.aa:.4f}, Kappa {self.kappa:.4f}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, EvalReport):
            return False
        return (self.oa == other.oa and self.aa == other.aa
                and self.kappa == other.kappa
                and np.array_equal(self.per_class_accuracy,
                    other.per_class_accuracy, equal_nan=True))


@dataclasses.dataclass(frozen=True)
class ExperimentSettings:
    """
    How a cube is prepared and evaluated: which bands get dropped first, how
    many annotated pixels are used for training, whether unannotated pixels
    join the (unsupervised) selector fit, and the knobs of the baselines and
    the classifier.
    """
    drop_bands: tuple = ()
    train_fraction: float = 0.05
    include_unlabeled_in_fit: bool = False
    knn_k: int = 5
    ridge_lambda: float = 1e-3
    chunk: int = 64
    threads: int = 1

    def validate(self) -> "ExperimentSettings":
        if not 0.0 < self.train_fraction <= 1.0:
            raise BadConfig(
                f"train fraction must lie in (0, 1], got "
                f"{self.train_fraction}")
        if self.knn_k < 1 or self.knn_k % 2 == 0:
            raise BadConfig(f"kNN k must be odd and positive, got {self.knn_k}")
        if not self.ridge_lambda > 0.0:
            raise BadConfig(
                f"ridge lambda must be positive, got {self.ridge_lambda}")
        if self.chunk < 1:
            raise BadConfig(f"chunk must be positive, got {self.chunk}")
        if self.threads < 1:
            raise BadConfig(f"threads must be positive, got {self.threads}")
        return self

    def replace(self, **changes) -> "ExperimentSettings":
        return dataclasses.replace(self, **changes)


# vim:textwidth=80:
