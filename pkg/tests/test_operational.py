import numpy as np
import pytest

from srlsoa import operational
from srlsoa._models import (Gradients, OperationalLayerParams,
    RepresentationBatch)
from srlsoa.errors import BadKernelSize, BadMagic, ShapeMismatch


def _random_params(rng, bands, order, filter_size, scale=0.3):
    return OperationalLayerParams(
            rng.normal(0.0, scale, size=(bands, order, filter_size)),
            rng.normal(0.0, scale, size=(bands, order)),
            rng.normal(0.0, scale, size=(bands, bands)),
        )


def _encoder_oracle(X, params):
    """Evaluates the operational layer term by term with plain loops."""
    m, bands = X.shape
    half = (params.filter_size - 1) // 2
    A = np.zeros((m, bands, bands))
    for i in range(m):
        for k in range(bands):
            for n in range(bands):
                z = 0.0
                for q in range(params.order):
                    z += params.biases[k, q]
                    for j in range(params.filter_size):
                        position = n + j - half
                        if 0 <= position < bands:
                            z += params.weights[k, q, j] \
                                * X[i, position] ** (q + 1)
                z += params.untied_biases[k, n]
                A[i, k, n] = 0.0 if k == n else np.tanh(z)
    return A


def test_taylor_identity_polynomial():
    for x in (-3.0, 0.0, 0.25, 17.0):
        assert operational.taylor_transform(x, [0.0, 1.0]) == x


def test_taylor_quadratic():
    assert operational.taylor_transform(2.0, [1.0, 1.0, 1.0]) == 7.0


def test_taylor_matches_horner(rng):
    tol = 1e-12
    for _ in range(100):
        x = rng.uniform(-2.0, 2.0)
        w = rng.normal(size=rng.integers(1, 7))
        horner = 0.0
        for coefficient in w[::-1]:
            horner = horner * x + coefficient
        value = operational.taylor_transform(x, w)
        assert abs(value - horner) <= tol * max(1.0, abs(horner))


def test_conv_with_impulse_is_identity(rng):
    signal = rng.normal(size=9)
    np.testing.assert_array_equal(
            operational.conv1d_same(signal, [0.0, 1.0, 0.0]), signal)


def test_conv_hand_expansion():
    np.testing.assert_array_equal(
            operational.conv1d_same([1.0, 2.0, 3.0], [1.0, 1.0, 1.0]),
            [3.0, 6.0, 5.0])


def test_conv_is_cross_correlation():
    # no flip: the right tap looks at the next entry
    np.testing.assert_array_equal(
            operational.conv1d_same([1.0, 2.0, 3.0], [0.0, 0.0, 1.0]),
            [2.0, 3.0, 0.0])


def test_conv_of_zero_signal():
    np.testing.assert_array_equal(
            operational.conv1d_same(np.zeros(5), [1.0, -2.0, 3.0]),
            np.zeros(5))


def test_conv_is_linear(rng):
    tol = 1e-12
    kernel = rng.normal(size=5)
    x, y = rng.normal(size=(2, 11))
    a, b = 1.7, -0.4

    left = operational.conv1d_same(a * x + b * y, kernel)
    right = a * operational.conv1d_same(x, kernel) \
        + b * operational.conv1d_same(y, kernel)
    assert np.max(np.abs(left - right)) < tol


@pytest.mark.parametrize("kernel_size", [2, 7])
def test_conv_rejects_bad_kernels(kernel_size):
    with pytest.raises(BadKernelSize):
        operational.conv1d_same(np.ones(5), np.ones(kernel_size))


def test_encoder_matches_loop_oracle(rng):
    tol = 1e-12
    for _ in range(50):
        params = _random_params(rng, 6, 3, 3)
        X = rng.uniform(size=(int(rng.integers(1, 4)), 6))

        rep = operational.encoder_forward(X, params)
        assert np.max(np.abs(rep.per_sample - _encoder_oracle(X, params))) \
            < tol


def test_encoder_with_impulse_kernels():
    bands = 5
    weights = np.zeros((bands, 1, 3))
    weights[:, 0, 1] = 1.0
    params = OperationalLayerParams(weights, np.zeros((bands, 1)))
    X = np.array([[0.1, 0.5, 0.2, 0.9, 0.4]])

    A = operational.encoder_forward(X, params).per_sample[0]

    expected = np.tile(np.tanh(X[0]), (bands, 1))
    np.fill_diagonal(expected, 0.0)
    np.testing.assert_array_equal(A, expected)


def test_encoder_with_first_order_is_conv_and_tanh(rng):
    tol = 1e-12
    params = _random_params(rng, 8, 1, 5)
    x = rng.uniform(size=8)

    A = operational.encoder_forward(x[None, :], params).per_sample[0]
    for k in range(8):
        row = np.tanh(operational.conv1d_same(x, params.weights[k, 0])
                + params.biases[k, 0] + params.untied_biases[k])
        row[k] = 0.0
        assert np.max(np.abs(A[k] - row)) < tol


def test_encoder_with_zero_params(rng):
    params = OperationalLayerParams(np.zeros((6, 2, 3)), np.zeros((6, 2)))
    rep = operational.encoder_forward(rng.uniform(size=(3, 6)), params)
    assert not np.any(rep.per_sample)
    assert not np.any(rep.mean_abs)


def test_encoder_with_untied_biases_only(rng):
    untied = rng.normal(size=(5, 5))
    params = OperationalLayerParams(np.zeros((5, 2, 3)), np.zeros((5, 2)),
            untied)

    rep = operational.encoder_forward(rng.uniform(size=(3, 5)), params)

    expected = np.tanh(untied)
    np.fill_diagonal(expected, 0.0)
    for A in rep.per_sample:
        np.testing.assert_array_equal(A, expected)


def test_encoder_structure(rng):
    params = _random_params(rng, 10, 3, 5, scale=1.0)
    rep = operational.encoder_forward(rng.uniform(size=(4, 10)), params)

    assert np.all(np.abs(rep.per_sample) < 1.0)
    for A in rep.per_sample:
        assert not np.any(np.diag(A))
    assert np.all(rep.mean_abs >= 0.0)
    assert not np.any(np.diag(rep.mean_abs))


def test_encoder_rejects_band_mismatch(rng):
    params = _random_params(rng, 6, 2, 3)
    with pytest.raises(ShapeMismatch):
        operational.encoder_forward(rng.uniform(size=(2, 7)), params)


def test_decoder_with_zero_representation(rng):
    X = rng.uniform(size=(3, 4))
    rep = RepresentationBatch(np.zeros((3, 4, 4)))
    assert not np.any(operational.decoder_reconstruct(X, rep))


def test_decoder_routes_coordinates():
    # derangement 0 -> 1 -> 2 -> 3 -> 0
    A = np.zeros((4, 4))
    for j in range(4):
        A[j, (j + 1) % 4] = 1.0
    x = np.array([[1.0, 2.0, 3.0, 4.0]])

    x_hat = operational.decoder_reconstruct(x, RepresentationBatch(A[None]))
    np.testing.assert_array_equal(x_hat, [[4.0, 1.0, 2.0, 3.0]])


def test_decoder_matches_loop_oracle(rng):
    tol = 1e-12
    X = rng.uniform(size=(5, 6))
    per_sample = rng.uniform(-1.0, 1.0, size=(5, 6, 6))

    x_hat = operational.decoder_reconstruct(X,
            RepresentationBatch(per_sample))

    for i in range(5):
        for k in range(6):
            expected = sum(X[i, j] * per_sample[i, j, k] for j in range(6))
            assert abs(x_hat[i, k] - expected) < tol


def test_decoder_is_linear(rng):
    tol = 1e-12
    X, Y = rng.uniform(size=(2, 3, 5))
    A, B = rng.uniform(-1.0, 1.0, size=(2, 3, 5, 5))
    decode = operational.decoder_reconstruct

    mixed = decode(2.0 * X - Y, RepresentationBatch(A))
    assert np.max(np.abs(mixed - (2.0 * decode(X, RepresentationBatch(A))
            - decode(Y, RepresentationBatch(A))))) < tol

    mixed = decode(X, RepresentationBatch(A + 3.0 * B))
    assert np.max(np.abs(mixed - (decode(X, RepresentationBatch(A))
            + 3.0 * decode(X, RepresentationBatch(B))))) < tol


def test_loss_of_perfect_sparse_fit():
    X = np.array([[0.3, 0.7]])
    rep = RepresentationBatch(np.zeros((1, 2, 2)))
    assert operational.loss(X, X, rep, 0.01) == 0.0


def test_loss_without_regularizer(rng):
    X, X_hat = rng.uniform(size=(2, 3, 4))
    rep = RepresentationBatch(rng.uniform(-1.0, 1.0, size=(3, 4, 4)))
    expected = 0.5 * np.sum((X - X_hat) ** 2)
    assert operational.loss(X, X_hat, rep, 0.0) == pytest.approx(expected,
            rel=1e-15)


def test_loss_hand_evaluation():
    tol = 1e-12
    rep = RepresentationBatch(np.array([[[0.0, 0.5], [0.5, 0.0]]]))
    value = operational.loss(np.array([[1.0, 0.0]]), np.zeros((1, 2)), rep,
            0.01)
    assert abs(value - 0.51) < tol


def test_loss_ignores_sample_order(rng):
    tol = 1e-12
    params = _random_params(rng, 8, 3, 3)
    X = rng.uniform(size=(5, 8))

    forward = operational.evaluate_loss(X, params, 0.01)
    backward = operational.evaluate_loss(X[::-1], params, 0.01)
    assert abs(forward - backward) <= tol * abs(forward)


def test_backward_loss_matches_forward(rng):
    params = _random_params(rng, 7, 2, 3)
    X = rng.uniform(size=(3, 7))

    value, _ = operational.backward(X, params, 0.05)
    assert value == pytest.approx(operational.evaluate_loss(X, params, 0.05),
            rel=1e-12)


def test_gradients_match_finite_differences():
    params, X = operational.gradcheck_instance(16, 3, 5, 2, seed=0)
    assert operational.grad_check(params, X, 0.01) <= 1e-4


def test_gradients_from_zero_params(rng):
    params = OperationalLayerParams(np.zeros((8, 2, 3)), np.zeros((8, 2)))
    X = rng.uniform(size=(2, 8))

    _, grads = operational.backward(X, params, 0.01)
    assert operational.grad_check(params, X, 0.01) <= 1e-4
    # the fidelity term reaches every parameter at zero
    assert np.any(grads.d_weights)
    assert np.any(grads.d_biases)
    assert np.any(grads.d_untied_biases)


@pytest.mark.parametrize("bands, order, filter_size, batch", [
    (5, 1, 3, 1),
    (9, 5, 7, 2),
    (12, 3, 3, 5),
])
def test_gradients_for_several_shapes(bands, order, filter_size, batch):
    params, X = operational.gradcheck_instance(bands, order, filter_size,
            batch, seed=bands)
    assert operational.grad_check(params, X, 0.01) <= 1e-4


@pytest.mark.slow
def test_gradients_over_many_random_instances():
    rng = np.random.default_rng(99)
    worst = 0.0
    for trial in range(100):
        filter_size = int(rng.choice([3, 5, 7]))
        order = int(rng.choice([1, 3, 5]))
        batch = int(rng.choice([1, 2, 5]))
        bands = int(rng.integers(filter_size, 17))
        params, X = operational.gradcheck_instance(bands, order, filter_size,
                batch, seed=trial)
        worst = max(worst, operational.grad_check(params, X, 0.01))
    assert worst <= 1e-4


def test_regularizer_gradient_is_linear_in_lambda():
    tol = 1e-12
    params, X = operational.gradcheck_instance(10, 2, 3, 3, seed=4)
    _, zero = operational.backward(X, params, 0.0)
    _, single = operational.backward(X, params, 0.05)
    _, double = operational.backward(X, params, 0.1)

    for name in ("d_weights", "d_biases", "d_untied_biases"):
        step = getattr(single, name) - getattr(zero, name)
        second_step = getattr(double, name) - getattr(single, name)
        assert np.max(np.abs(step - second_step)) < tol


def test_gradients_do_not_depend_on_threads():
    params, X = operational.gradcheck_instance(12, 3, 5, 7, seed=2)
    loss_single, single = operational.backward(X, params, 0.01, threads=1)
    loss_multi, multi = operational.backward(X, params, 0.01, threads=3)

    assert loss_multi == pytest.approx(loss_single, rel=1e-10)
    np.testing.assert_allclose(multi.d_weights, single.d_weights, rtol=1e-10,
            atol=1e-14)
    np.testing.assert_allclose(multi.d_biases, single.d_biases, rtol=1e-10,
            atol=1e-14)
    np.testing.assert_allclose(multi.d_untied_biases, single.d_untied_biases,
            rtol=1e-10, atol=1e-14)


def test_grad_check_is_deterministic():
    params, X = operational.gradcheck_instance(8, 2, 3, 2, seed=5)
    assert operational.grad_check(params, X, 0.01) \
        == operational.grad_check(params, X, 0.01)


def test_grad_check_reports_large_steps_honestly():
    params, X = operational.gradcheck_instance(8, 3, 3, 2, seed=6)
    small = operational.grad_check(params, X, 0.01, step=1e-5)
    large = operational.grad_check(params, X, 0.01, step=1e-1)
    assert large > small


def test_grad_check_catches_corrupted_gradients(monkeypatch):
    original = operational.backward

    def corrupted(X_s, params, lambda_, threads=1):
        value, grads = original(X_s, params, lambda_, threads)
        return value, Gradients(grads.d_weights * 1.01, grads.d_biases,
                grads.d_untied_biases)

    monkeypatch.setattr(operational, "backward", corrupted)
    params, X = operational.gradcheck_instance(8, 2, 3, 2, seed=7)
    assert operational.grad_check(params, X, 0.01) > 1e-4


def test_grad_check_needs_positive_step():
    params, X = operational.gradcheck_instance(5, 1, 3, 1, seed=0)
    with pytest.raises(ValueError):
        operational.grad_check(params, X, 0.01, step=0.0)


def test_params_survive_encoding(rng):
    params = _random_params(rng, 6, 3, 5)
    raw = operational.encode_params(params)

    assert raw[:4] == b"SOAP"
    assert len(raw) == 17 + 8 * (6 * 3 * 5 + 6 * 3 + 6 * 6)
    assert operational.decode_params(raw) == params


def test_params_with_wrong_magic(rng):
    raw = bytearray(operational.encode_params(_random_params(rng, 3, 1, 3)))
    raw[:4] = b"SOAQ"
    with pytest.raises(BadMagic):
        operational.decode_params(bytes(raw))


def test_params_from_version_one(rng):
    weights = rng.normal(size=(4, 2, 3))
    biases = rng.normal(size=(4, 2))
    raw = operational.PARAMS_HEADER.pack(b"SOAP", 1, 4, 2, 3) \
        + weights.astype("<f8").tobytes() + biases.astype("<f8").tobytes()

    params = operational.decode_params(raw)

    np.testing.assert_array_equal(params.weights, weights)
    np.testing.assert_array_equal(params.biases, biases)
    assert not np.any(params.untied_biases)


def test_params_with_unknown_version(rng):
    raw = bytearray(operational.encode_params(_random_params(rng, 3, 1, 3)))
    raw[4] = 3
    with pytest.raises(BadMagic):
        operational.decode_params(bytes(raw))
