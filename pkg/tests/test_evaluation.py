import json

import numpy as np
import pandas as pd
import pytest

from srlsoa import evaluation
from srlsoa._models import (BandRanking, ConfusionMatrix, ExperimentSettings,
    HsiCube, LabelMap, PcaModel, TrainConfig)
from srlsoa.errors import (BadConfig, DimMismatch, EmptyConfusion,
    EmptyTrainSet, KTooLarge)
from srlsoa.hsi_data import flatten_pixels, normalize, sample_split
from srlsoa.synthetic import planted_classification


TINY = TrainConfig(order_q=2, filter_size=3, epochs=2, batch_size=5)


@pytest.mark.parametrize("name, expected", [
    ("srl_soa", ("srl_soa", None)),
    ("srl_soa5", ("srl_soa", 5)),
    ("SRL-SOA1", ("srl_soa", 1)),
    ("issc", ("issc", None)),
    ("all_bands", ("all_bands", None)),
])
def test_method_names(name, expected):
    assert evaluation.parse_method(name) == expected


@pytest.mark.parametrize("name", ["svm", "srl_soa0", "srl_soax", ""])
def test_unknown_methods(name):
    with pytest.raises(BadConfig):
        evaluation.parse_method(name)


def test_knn_finds_the_equal_point():
    train = [[0.0, 0.0], [1.0, 1.0], [5.0, 2.0]]
    predicted = evaluation.knn_classify(train, [3, 1, 2], [[1.0, 1.0]], k=1)
    assert predicted.tolist() == [1]


def test_knn_separates_blobs(rng):
    def blob(center, size):
        return rng.normal(0.0, 0.1, size=(size, 2)) + center

    train_X = np.concatenate([blob([0.0, 0.0], 50), blob([10.0, 0.0], 50)])
    train_y = np.repeat([1, 2], 50)
    test_X = np.concatenate([blob([0.0, 0.0], 50), blob([10.0, 0.0], 50)])

    predicted = evaluation.knn_classify(train_X, train_y, test_X)
    np.testing.assert_array_equal(predicted, train_y)


def test_knn_with_duplicates_is_deterministic(rng):
    train_X = np.repeat(rng.uniform(size=(4, 3)), 3, axis=0)
    train_y = np.repeat([1, 2, 1, 2], 3)
    test_X = rng.uniform(size=(20, 3))

    first = evaluation.knn_classify(train_X, train_y, test_X)
    second = evaluation.knn_classify(train_X, train_y, test_X)
    np.testing.assert_array_equal(first, second)


def test_knn_tie_breaks():
    train = [[0.0], [3.0]]

    # one vote each: the closer class wins
    assert evaluation.knn_classify(train, [1, 2], [[1.0]], k=2).tolist() == [1]
    assert evaluation.knn_classify(train, [1, 2], [[2.0]], k=2).tolist() == [2]
    # equally close too: the smaller class id wins
    assert evaluation.knn_classify(train, [5, 2], [[1.5]], k=2).tolist() == [2]


def test_knn_caps_k_at_the_training_size():
    predicted = evaluation.knn_classify([[0.0], [1.0], [0.2]], [1, 2, 1],
            [[0.9]], k=7)
    assert predicted.tolist() == [1]


def test_knn_needs_training_samples():
    with pytest.raises(EmptyTrainSet):
        evaluation.knn_classify(np.zeros((0, 2)), [], [[0.0, 0.0]])


def test_perfect_confusion():
    report = evaluation.compute_metrics(ConfusionMatrix(np.diag([3, 7, 2])))
    assert (report.oa, report.aa, report.kappa) == (1.0, 1.0, 1.0)


def test_two_class_confusion():
    report = evaluation.compute_metrics(ConfusionMatrix([[40, 10], [20, 30]]))

    assert report.oa == pytest.approx(0.7)
    assert report.aa == pytest.approx(0.7)
    assert report.kappa == pytest.approx(0.4)
    np.testing.assert_allclose(report.per_class_accuracy, [0.8, 0.6])


def test_random_predictions_have_no_agreement(rng):
    truth = rng.integers(1, 5, size=10 ** 4)
    predicted = rng.integers(1, 5, size=10 ** 4)

    report = evaluation.compute_metrics(
            evaluation.confusion(truth, predicted, 4))
    assert abs(report.kappa) < 0.1


def test_classes_without_test_pixels_are_left_out():
    report = evaluation.compute_metrics(
            ConfusionMatrix([[4, 1, 0], [0, 0, 0], [1, 0, 4]]))

    assert np.isnan(report.per_class_accuracy[1])
    assert report.aa == pytest.approx(0.8)


def test_kappa_without_chance_agreement_margin():
    report = evaluation.compute_metrics(ConfusionMatrix([[5, 0], [0, 0]]))
    assert report.oa == 1.0
    assert report.kappa == 0.0


def test_empty_confusion():
    with pytest.raises(EmptyConfusion):
        evaluation.compute_metrics(ConfusionMatrix(np.zeros((2, 2), int)))


def test_metrics_ignore_class_order(rng):
    counts = rng.integers(0, 30, size=(5, 5))
    permutation = rng.permutation(5)

    first = evaluation.compute_metrics(ConfusionMatrix(counts))
    second = evaluation.compute_metrics(
            ConfusionMatrix(counts[permutation][:, permutation]))

    assert second.oa == pytest.approx(first.oa)
    assert second.aa == pytest.approx(first.aa)
    assert second.kappa == pytest.approx(first.kappa)


def test_metrics_stay_in_range(rng):
    for _ in range(20):
        report = evaluation.compute_metrics(
                ConfusionMatrix(rng.integers(0, 10, size=(4, 4))))
        assert 0.0 <= report.oa <= 1.0
        assert 0.0 <= report.aa <= 1.0
        assert report.kappa <= 1.0


def test_all_bands_ignores_k(small_classification):
    cube, labels, _ = small_classification
    first = evaluation.run_experiment(cube, labels, "all_bands", 3, TINY, 0)
    second = evaluation.run_experiment(cube, labels, "all_bands", 20, TINY, 0)

    assert first == second
    assert first.k_bands == second.k_bands == 30


def test_random_bands_depend_on_the_seed(small_classification):
    cube, labels, _ = small_classification
    selections = [evaluation.run_experiment(cube, labels, "random", 5, TINY,
            seed).bands for seed in range(6)]

    assert any(selections[i] != selections[i + 1] for i in range(5))
    assert all(len(bands) == 5 for bands in selections)


def test_every_band_selected_is_no_selection(small_classification):
    cube, labels, _ = small_classification
    everything = evaluation.run_experiment(cube, labels, "all_bands", 30,
            TINY, 4)
    ranked = evaluation.run_experiment(cube, labels, "issc", 30, TINY, 4)

    assert ranked == everything


def test_experiments_are_deterministic(small_classification):
    cube, labels, _ = small_classification
    for method in ("issc", "pca", "random", "srl_soa"):
        first = evaluation.run_experiment(cube, labels, method, 4, TINY, 2)
        second = evaluation.run_experiment(cube, labels, method, 4, TINY, 2)
        assert first == second
        assert first.bands == second.bands


def test_pca_extracts_components(small_classification):
    cube, labels, _ = small_classification
    report = evaluation.run_experiment(cube, labels, "pca", 6, TINY, 1)

    assert report.method == "pca"
    assert report.k_bands == 6
    assert report.bands is None
    assert 0.0 <= report.oa <= 1.0


def test_srl_soa_with_an_order(small_classification):
    cube, labels, _ = small_classification
    cache = {}
    report = evaluation.run_experiment(cube, labels, "srl_soa1", 5, TINY, 0,
            cache=cache)

    assert report.method == "srl_soa1"
    assert len(report.bands) == 5
    assert list(cache) == [("srl_soa1", 0)]

    # the cached ranking gives a nested selection
    larger = evaluation.run_experiment(cube, labels, "srl_soa1", 8, TINY, 0,
            cache=cache)
    assert set(report.bands) < set(larger.bands)


def test_unlabeled_pixels_can_join_the_fit(small_classification):
    cube, labels, _ = small_classification
    flat = labels.flat.copy()
    flat[:40] = 0
    labels = LabelMap(labels.height, labels.width, flat)
    settings = ExperimentSettings(include_unlabeled_in_fit=True)

    report = evaluation.run_experiment(cube, labels, "issc", 5, TINY, 0,
            settings)
    assert report.per_class_accuracy.size == labels.class_count


def test_experiment_errors(small_classification):
    cube, labels, _ = small_classification
    with pytest.raises(KTooLarge):
        evaluation.run_experiment(cube, labels, "random", 31, TINY, 0)
    with pytest.raises(BadConfig):
        evaluation.run_experiment(cube, labels, "svm", 5, TINY, 0)

    other = HsiCube(10, 40, cube.bands, np.zeros(cube.values.size))
    with pytest.raises(DimMismatch):
        evaluation.run_experiment(other, labels, "issc", 5, TINY, 0)


def test_dropped_bands_are_not_offered(small_classification):
    cube, labels, _ = small_classification
    settings = ExperimentSettings(drop_bands=(0, 1, 2, 3))

    report = evaluation.run_experiment(cube, labels, "all_bands", 1, TINY, 0,
            settings)
    assert report.k_bands == 26


def test_sweep_table(small_classification):
    cube, labels, _ = small_classification
    frame, reports = evaluation.sweep(cube, labels, ["random", "all_bands"],
            [3, 5], [0, 1, 2], TINY)

    assert list(frame.columns) == evaluation.SWEEP_COLUMNS
    assert len(frame) == 4
    assert len(reports) == 12
    assert frame["method"].tolist() == ["random", "random", "all_bands",
            "all_bands"]
    assert frame["seed_count"].tolist() == [3, 3, 3, 3]

    oa = [report.oa for report in reports[:3]]
    assert frame["oa_mean"][0] == pytest.approx(np.mean(oa))
    assert frame["oa_std"][0] == pytest.approx(np.std(oa))
    # no selection, so the spread over k is zero
    assert frame["oa_mean"][2] == frame["oa_mean"][3]


def test_sweep_fills_a_given_cache(small_classification):
    cube, labels, _ = small_classification
    cache = {}

    evaluation.sweep(cube, labels, ["srl_soa", "pca", "random"], [3, 4], [0],
            TINY, cache=cache)

    assert set(cache) == {("srl_soa", 0), ("srl_soa", 0, "params"),
            ("pca", 0)}
    assert isinstance(cache[("pca", 0)], PcaModel)
    assert isinstance(cache[("srl_soa", 0)], BandRanking)
    assert cache[("srl_soa", 0, "params")].order == TINY.order_q


def test_sweep_needs_something_to_do(small_classification):
    cube, labels, _ = small_classification
    with pytest.raises(BadConfig):
        evaluation.sweep(cube, labels, [], [3], [0], TINY)


def test_results_files(tmp_path, small_classification):
    cube, labels, _ = small_classification
    frame, reports = evaluation.table(cube, labels, ["random", "issc"], 4,
            [0, 1], TINY)
    csv_path = str(tmp_path / "sweep.csv")
    log_path = str(tmp_path / "runs.jsonl")

    evaluation.write_results(frame, reports, csv_path, log_path)

    written = pd.read_csv(csv_path)
    assert list(written.columns) == evaluation.SWEEP_COLUMNS
    np.testing.assert_allclose(written["oa_mean"], frame["oa_mean"],
            rtol=1e-15)

    lines = open(log_path).read().splitlines()
    assert len(lines) == 4
    record = json.loads(lines[0])
    assert record["method"] == "random"
    assert record["seed"] == 0
    assert len(record["bands"]) == 4
    assert "cpu" in record["platform"]


def test_nan_becomes_null():
    report = evaluation.compute_metrics(
            ConfusionMatrix([[4, 1], [0, 0]])).with_run(2, "issc", 0, None)
    record = evaluation.run_record(report)

    assert record["per_class_accuracy"] == [0.8, None]
    assert record["bands"] is None
    json.dumps(record, allow_nan=False)


def test_planted_bands_separate_the_default_scene():
    cube, labels, planted = planted_classification(seed=0)
    assert (cube.height, cube.width, cube.bands) == (50, 50, 200)
    X = flatten_pixels(normalize(cube))

    split = sample_split(labels, 0.05, seed=0)
    predicted = evaluation.knn_classify(X[split.train][:, planted.indices],
            labels.flat[split.train], X[split.test][:, planted.indices])
    assert np.mean(predicted == labels.flat[split.test]) >= 0.9


def test_selection_beats_random_on_a_small_scene():
    cube, labels, planted = planted_classification(seed=0, noise_bands=37)

    selected = evaluation.run_experiment(cube, labels, "srl_soa", 5,
            TrainConfig(), seed=0)
    drawn = evaluation.run_experiment(cube, labels, "random", 5,
            TrainConfig(), seed=0)

    assert set(planted) & set(selected.bands)
    assert selected.oa > drawn.oa


@pytest.mark.slow
def test_selection_beats_random():
    cube, labels, planted = planted_classification(seed=0)
    X = flatten_pixels(normalize(cube))

    # the planted bands alone must separate the classes
    split = sample_split(labels, 0.05, seed=0)
    predicted = evaluation.knn_classify(X[split.train][:, planted.indices],
            labels.flat[split.train], X[split.test][:, planted.indices])
    truth = labels.flat[split.test]
    assert np.mean(predicted == truth) >= 0.9

    selected = [evaluation.run_experiment(cube, labels, "srl_soa", 5,
            TrainConfig(), seed).oa for seed in range(10)]
    drawn = [evaluation.run_experiment(cube, labels, "random", 5,
            TrainConfig(), seed).oa for seed in range(10)]

    assert np.mean(selected) >= np.mean(drawn) + 0.1
