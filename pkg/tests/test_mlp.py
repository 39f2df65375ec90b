import math

import numpy as np
import pytest

from lvvc.demand import DEFAULT_START
from lvvc.features import FeatureDataset, MeterSet, SampleSplit, input_width
from lvvc.mlp import (
    MLP,
    SELU_ALPHA,
    SELU_LAMBDA,
    TrainConfig,
    TrainingError,
    forward,
    init_model,
    layer_sizes,
    load_model,
    loss_and_gradients,
    predict,
    save_model,
    selu,
    train,
)


def naive_forward(model, x):
    """Straightforward per-neuron re-implementation used as an oracle."""
    a = list(x)
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = [
            sum(a[j] * w[j, k] for j in range(w.shape[0])) + b[k]
            for k in range(w.shape[1])
        ]
        if i == last and not model.selu_output:
            a = z
        else:
            a = [
                SELU_LAMBDA * v if v > 0 else SELU_LAMBDA * SELU_ALPHA * (math.exp(v) - 1.0)
                for v in z
            ]
    return a[0]


def toy_dataset(rng, n_train=96, n_val=48, width=8, target_fn=None):
    """Hand-assembled FeatureDataset for exercising the trainer."""
    if target_fn is None:
        target_fn = lambda X: X[:, 0] * 0.5 + 0.2  # noqa: E731

    def split(n):
        X = rng.uniform(0.0, 1.0, size=(n, width))
        y = target_fn(X)
        return SampleSplit(
            inputs=X,
            targets=y,
            times=np.arange(n) + 49,
            pair_index=np.zeros(n, dtype=np.int64),
        )

    train_split = split(n_train)
    val_split = split(n_val)
    return FeatureDataset(
        width=width,
        meter_count=0,
        include_power=False,
        names=tuple(f"f{i}" for i in range(width)),
        pair_table=(("X", 1),),
        meters=MeterSet(meters=(), strategy="explicit", seed=None),
        total_impedance_ohm=1.0,
        start=DEFAULT_START,
        train=train_split,
        validation=val_split,
        evaluation=val_split,
        input_min=train_split.inputs.min(axis=0),
        input_max=train_split.inputs.max(axis=0),
        target_min=float(train_split.targets.min()),
        target_max=float(train_split.targets.max()),
    )


class TestSelu:
    def test_zero(self):
        assert selu(0.0) == 0.0

    def test_one_is_lambda(self):
        assert selu(1.0) == SELU_LAMBDA == 1.0507009873554805

    def test_negative_asymptote(self):
        assert selu(-40.0) == pytest.approx(-SELU_LAMBDA * SELU_ALPHA, abs=1e-12)
        assert -SELU_LAMBDA * SELU_ALPHA == pytest.approx(-1.758099, abs=1e-6)

    def test_continuous_at_zero(self):
        assert selu(-1e-12) == pytest.approx(0.0, abs=1e-11)


class TestInit:
    def test_deterministic(self):
        a = init_model(16, seed=3)
        b = init_model(16, seed=3)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_layer_sizes_with_power_case(self):
        assert layer_sizes(124) == (124, 62, 31, 31, 31, 1)
        model = init_model(124, seed=0)
        assert model.sizes == (124, 62, 31, 31, 31, 1)

    def test_layer_sizes_floor_division(self):
        assert layer_sizes(109) == (109, 54, 27, 27, 27, 1)

    def test_too_small(self):
        with pytest.raises(TrainingError, match="too small"):
            init_model(7, seed=0)

    def test_biases_zero_weights_scaled(self):
        model = init_model(64, seed=1)
        for b in model.biases:
            assert np.all(b == 0.0)
        # fan-in scaling: empirical std close to 1/sqrt(fan_in)
        w = model.weights[0]
        assert w.std() == pytest.approx(1.0 / math.sqrt(64), rel=0.2)

    @pytest.mark.parametrize("count", [1, 4, 10, 30])
    @pytest.mark.parametrize("include_power", [True, False])
    def test_shapes_for_every_coverage(self, count, include_power):
        width = input_width(count, include_power)
        model = init_model(width, seed=0)
        sizes = layer_sizes(width)
        assert model.sizes == sizes
        for w, b, fan_in, fan_out in zip(model.weights, model.biases, sizes, sizes[1:]):
            assert w.shape == (fan_in, fan_out)
            assert b.shape == (fan_out,)
        assert np.isfinite(forward(model, np.zeros(width)))


class TestForward:
    def test_zero_parameters_zero_output(self):
        model = init_model(8, seed=0)
        for w in model.weights:
            w[:] = 0.0
        assert forward(model, np.ones(8)) == 0.0

    def test_positive_identity_path(self):
        model = init_model(8, seed=0)
        for w in model.weights:
            w[:] = 0.0
            w[0, 0] = 1.0
        x = np.zeros(8)
        x[0] = 2.0
        assert forward(model, x) == pytest.approx(SELU_LAMBDA**5 * 2.0, rel=1e-12)

    def test_length_mismatch(self):
        model = init_model(8, seed=0)
        with pytest.raises(TrainingError, match="does not match"):
            forward(model, np.ones(9))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_naive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        model = init_model(9, seed=seed)
        x = rng.normal(size=9)
        assert forward(model, x) == pytest.approx(naive_forward(model, x), rel=1e-12)

    def test_batch_order_preserved(self):
        model = init_model(8, seed=1)
        batch = np.random.default_rng(0).normal(size=(6, 8))
        out = forward(model, batch)
        assert out.shape == (6,)
        for k in range(6):
            # matrix and vector BLAS paths may differ in the last ulp
            assert out[k] == pytest.approx(forward(model, batch[k]), rel=1e-12)


class TestGradients:
    def test_analytic_matches_central_differences(self):
        rng = np.random.default_rng(12)
        model = init_model(8, seed=12)  # [8, 4, 2, 2, 2, 1]
        assert model.sizes == (8, 4, 2, 2, 2, 1)
        X = rng.uniform(0, 1, size=(5, 8))
        y = rng.uniform(0, 1, size=5)
        _, grad_w, grad_b = loss_and_gradients(model, X, y)
        eps = 1e-5
        worst = 0.0
        for analytic, params in ((grad_w, model.weights), (grad_b, model.biases)):
            for g, p in zip(analytic, params):
                it = np.nditer(p, flags=["multi_index"])
                for _ in it:
                    idx = it.multi_index
                    p[idx] += eps
                    hi = loss_and_gradients(model, X, y)[0]
                    p[idx] -= 2 * eps
                    lo = loss_and_gradients(model, X, y)[0]
                    p[idx] += eps
                    numeric = (hi - lo) / (2 * eps)
                    rel = abs(g[idx] - numeric) / max(1.0, abs(numeric))
                    worst = max(worst, rel)
        assert worst < 1e-4


class TestTrain:
    def test_constant_target_converges(self, rng):
        dataset = toy_dataset(rng, target_fn=lambda X: np.full(len(X), 0.31))
        model = init_model(8, seed=2)
        config = TrainConfig(learning_rate=0.03, max_epochs=500, patience=500, seed=2)
        trained, history = train(model, dataset, config)
        assert min(history.validation_loss) < 1e-6
        predictions = predict(trained, dataset.normalize_inputs(dataset.validation.inputs))
        assert np.allclose(predictions, 0.31, atol=1e-3)

    def test_patience_zero_stops_one_epoch_after_first_non_improvement(self, rng):
        dataset = toy_dataset(rng, target_fn=lambda X: X[:, 0] + 0.05 * np.sin(40 * X[:, 1]))
        model = init_model(8, seed=4)
        config = TrainConfig(learning_rate=0.05, max_epochs=300, patience=0, seed=4)
        _, history = train(model, dataset, config)
        val = history.validation_loss
        assert history.stopped_epoch < config.max_epochs - 1, "needs a non-improving epoch"
        best = val[0]
        first_flat = None
        for epoch, loss in enumerate(val[1:], start=1):
            if loss >= best:
                first_flat = epoch
                break
            best = loss
        assert first_flat == history.stopped_epoch

    def test_returned_model_hits_best_validation_loss(self, rng):
        from lvvc.mlp import _mse

        dataset = toy_dataset(rng)
        model = init_model(8, seed=5)
        trained, history = train(model, dataset, TrainConfig(max_epochs=60, patience=5, seed=5))
        x_val = dataset.normalize_inputs(dataset.validation.inputs)
        y_val = dataset.normalize_targets(dataset.validation.targets)
        assert _mse(trained, x_val, y_val) == min(history.validation_loss)
        assert history.validation_loss[history.best_epoch] == min(history.validation_loss)

    def test_training_is_deterministic(self, rng):
        dataset = toy_dataset(rng)
        config = TrainConfig(max_epochs=20, patience=20, seed=9)
        a, _ = train(init_model(8, seed=9), dataset, config)
        b, _ = train(init_model(8, seed=9), dataset, config)
        for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
            assert np.array_equal(wa, wb)

    def test_input_model_untouched(self, rng):
        dataset = toy_dataset(rng)
        model = init_model(8, seed=6)
        before = [w.copy() for w in model.weights]
        train(model, dataset, TrainConfig(max_epochs=5, seed=6))
        for w, w0 in zip(model.weights, before):
            assert np.array_equal(w, w0)

    def test_parameters_stay_finite(self, rng):
        dataset = toy_dataset(rng)
        trained, history = train(
            init_model(8, seed=7), dataset, TrainConfig(max_epochs=500, patience=500, seed=7)
        )
        assert len(history.train_loss) == 500
        assert all(np.isfinite(w).all() for w in trained.weights + trained.biases)
        assert np.all(np.isfinite(history.train_loss))
        assert np.all(np.isfinite(history.validation_loss))


class TestPredict:
    def test_denormalizes_forward(self, rng):
        dataset = toy_dataset(rng)
        trained, _ = train(init_model(8, seed=1), dataset, TrainConfig(max_epochs=3, seed=1))
        x = dataset.normalize_inputs(dataset.validation.inputs)
        scale = dataset.target_max - dataset.target_min
        expected = forward(trained, x) * scale + dataset.target_min
        assert np.array_equal(predict(trained, x), expected)

    def test_batch_order(self, rng):
        dataset = toy_dataset(rng)
        trained, _ = train(init_model(8, seed=1), dataset, TrainConfig(max_epochs=3, seed=1))
        x = dataset.normalize_inputs(dataset.validation.inputs)
        batch = predict(trained, x)
        assert batch.shape == (len(x),)
        assert batch[3] == predict(trained, x[3])

    def test_missing_normalization_rejected(self):
        model = init_model(8, seed=0)
        with pytest.raises(TrainingError, match="normalization"):
            predict(model, np.zeros(8))


class TestModelFile:
    def test_round_trip(self, tmp_path, rng):
        dataset = toy_dataset(rng)
        trained, _ = train(init_model(8, seed=3), dataset, TrainConfig(max_epochs=4, seed=3))
        path = tmp_path / "model.lvv"
        save_model(trained, path, metadata={"note": "test"})
        again = load_model(path)
        assert again.sizes == trained.sizes
        assert again.selu_output == trained.selu_output
        assert again.target_min == trained.target_min
        for wa, wb in zip(again.weights + again.biases, trained.weights + trained.biases):
            assert np.array_equal(wa, wb)
        x = dataset.normalize_inputs(dataset.validation.inputs)
        assert np.array_equal(predict(again, x), predict(trained, x))

    def test_format_checked(self, tmp_path):
        path = tmp_path / "bad.lvv"
        path.write_text('{"format": "other"}')
        with pytest.raises(TrainingError, match="unsupported model format"):
            load_model(path)
