import math

import numpy as np
import pytest

from vmdcast.errors import AlignmentError, ConfigError, TrainingDivergedError
from vmdcast.lstm import (
    AdamState,
    LstmLayerParams,
    LstmModel,
    LstmRegressor,
    NetworkConfig,
    TrainConfig,
    adam_step,
    backward,
    cell_forward,
    forward,
    load_history,
    load_model,
    loss,
    predict,
    save_history,
    save_model,
    train,
)


def small_model(seed=0, layers=2, hidden=4, input_dim=3, **net_kw):
    cfg = NetworkConfig(layers=layers, hidden=hidden, dropout=0.0, l1=0.0, l2=0.0,
                        **net_kw)
    return LstmModel.init(input_dim, cfg, np.random.default_rng(seed)), cfg


def numerical_grads(model, X, y, eps=1e-5):
    out = []
    for p in model.parameters():
        g = np.zeros_like(p)
        flat, gflat = p.ravel(), g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss(predict(model, X), y, model)
            flat[i] = orig - eps
            lm = loss(predict(model, X), y, model)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * eps)
        out.append(g)
    return out


def assert_grads_close(analytic, numeric, rel=1e-4):
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-5)
        np.testing.assert_array_less(np.abs(a - n) / denom, rel)


class TestCellForward:
    def test_zero_parameters_give_zero_state(self):
        # sigmoid(0)=0.5 and tanh(0)=0, so g=0 forces c=0 and then h=0
        # from the standard zero initial state, whatever the input.
        params = LstmLayerParams(np.zeros((12, 2)), np.zeros((12, 3)), np.zeros(12))
        h, c, _ = cell_forward(np.array([5.0, -2.0]), np.ones(3), np.zeros(3), params)
        np.testing.assert_array_equal(h, np.zeros(3))
        np.testing.assert_array_equal(c, np.zeros(3))

    def test_saturated_forget_gate_is_pure_memory(self):
        rng = np.random.default_rng(1)
        params = LstmLayerParams(
            rng.normal(size=(12, 2)) * 0.01, rng.normal(size=(12, 3)) * 0.01,
            np.zeros(12),
        )
        params.b[3:6] = 20.0  # forget gate saturated open
        params.b[0:3] = -20.0  # input gate saturated closed
        c_prev = np.array([0.3, -0.7, 1.2])
        _, c, _ = cell_forward(rng.normal(size=2), rng.normal(size=3), c_prev, params)
        np.testing.assert_allclose(c, c_prev, atol=1e-7)

    def test_matches_straight_line_oracle(self):
        rng = np.random.default_rng(2)
        hidden, dim = 3, 2
        params = LstmLayerParams(
            rng.normal(size=(12, dim)), rng.normal(size=(12, hidden)),
            rng.normal(size=12),
        )
        x = rng.normal(size=dim)
        h_prev = rng.normal(size=hidden)
        c_prev = rng.normal(size=hidden)
        h, c, _ = cell_forward(x, h_prev, c_prev, params)

        # Independent evaluation: plain loops and the exp-based sigmoid.
        for unit in range(hidden):
            z = [
                sum(params.w_x[row, d] * x[d] for d in range(dim))
                + sum(params.w_h[row, j] * h_prev[j] for j in range(hidden))
                + params.b[row]
                for row in (unit, hidden + unit, 2 * hidden + unit, 3 * hidden + unit)
            ]
            i_u = 1.0 / (1.0 + math.exp(-z[0]))
            f_u = 1.0 / (1.0 + math.exp(-z[1]))
            g_u = math.tanh(z[2])
            o_u = 1.0 / (1.0 + math.exp(-z[3]))
            c_u = f_u * c_prev[unit] + i_u * g_u
            assert c[unit] == pytest.approx(c_u, abs=1e-12)
            assert h[unit] == pytest.approx(o_u * math.tanh(c_u), abs=1e-12)

    def test_shape_mismatch(self):
        params = LstmLayerParams(np.zeros((12, 2)), np.zeros((12, 3)), np.zeros(12))
        with pytest.raises(AlignmentError):
            cell_forward(np.zeros(5), np.zeros(3), np.zeros(3), params)


class TestForward:
    def test_dropout_off_train_equals_eval(self):
        model, _ = small_model()
        X = np.random.default_rng(3).normal(size=(4, 5, 3))
        train_preds, _ = forward(X, model, mode="train", seed=7)
        eval_preds, _ = forward(X, model, mode="eval")
        np.testing.assert_array_equal(train_preds, eval_preds)

    def test_single_step_equals_cell_plus_head(self):
        model, _ = small_model(layers=1, hidden=4, input_dim=2)
        x = np.random.default_rng(4).normal(size=(1, 1, 2))
        preds, _ = forward(x, model, mode="eval")
        h, _, _ = cell_forward(x[0, 0], np.zeros(4), np.zeros(4), model.layers[0])
        expected = h @ model.head["w"] + model.head["b"][0]
        assert preds[0] == pytest.approx(expected, abs=1e-15)

    def test_train_mode_seeded_determinism(self):
        cfg = NetworkConfig(layers=2, hidden=4, dropout=0.4, l1=0.0, l2=0.0)
        model = LstmModel.init(3, cfg, np.random.default_rng(5))
        X = np.random.default_rng(6).normal(size=(4, 5, 3))
        a, _ = forward(X, model, mode="train", seed=11)
        b, _ = forward(X, model, mode="train", seed=11)
        np.testing.assert_array_equal(a, b)
        c, _ = forward(X, model, mode="train", seed=12)
        assert not np.array_equal(a, c)

    def test_gate_ranges(self):
        model, _ = small_model(seed=7)
        X = np.random.default_rng(8).normal(size=(6, 7, 3)) * 3.0
        _, caches = forward(X, model, mode="eval")
        for layer_cache in caches["layers"]:
            for gate in ("i", "f", "o"):
                assert np.all(layer_cache[gate] > 0.0)
                assert np.all(layer_cache[gate] < 1.0)
            h = layer_cache["o"] * np.tanh(layer_cache["c"])
            assert np.all(np.abs(h) <= 1.0)

    def test_dropout_expectation_matches_eval(self):
        # Inverted dropout on a single layer feeding a linear head is
        # unbiased: averaging over masks recovers the eval output.
        cfg = NetworkConfig(layers=1, hidden=8, dropout=0.3, l1=0.0, l2=0.0)
        model = LstmModel.init(2, cfg, np.random.default_rng(9))
        X = np.random.default_rng(10).normal(size=(1, 3, 2))
        eval_pred = predict(model, X)[0]
        draws = np.array(
            [forward(X, model, mode="train", seed=s)[0][0] for s in range(10_000)]
        )
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - eval_pred) <= 3.0 * se

    def test_bad_feature_width(self):
        model, _ = small_model()
        with pytest.raises(AlignmentError):
            forward(np.zeros((2, 3, 5)), model)


class TestLoss:
    def test_perfect_predictions_no_penalty(self):
        model, _ = small_model()
        assert loss([1.0, 2.0], [1.0, 2.0], model) == 0.0

    def test_simple_arithmetic(self):
        model, _ = small_model()
        assert loss([2.0], [0.0], model) == 4.0

    def test_penalties_match_summation_oracle(self):
        cfg = NetworkConfig(layers=2, hidden=4, dropout=0.0, l1=0.013, l2=0.021)
        model = LstmModel.init(3, cfg, np.random.default_rng(11))
        preds = np.array([0.5, -1.0, 2.0])
        targets = np.array([0.0, 1.0, 2.5])
        mse = sum((p - t) ** 2 for p, t in zip(preds, targets)) / 3.0
        pen = 0.0
        for layer in model.layers:
            for w in (layer.w_x, layer.w_h):
                pen += 0.013 * sum(abs(v) for v in w.ravel())
                pen += 0.021 * sum(v * v for v in w.ravel())
        pen += 0.013 * sum(abs(v) for v in model.head["w"])
        pen += 0.021 * sum(v * v for v in model.head["w"])
        assert loss(preds, targets, model) == pytest.approx(mse + pen, abs=1e-12)

    def test_empty_batch(self):
        model, _ = small_model()
        with pytest.raises(AlignmentError):
            loss([], [], model)


class TestBackward:
    def test_gradcheck_plain(self):
        cfg = NetworkConfig(layers=2, hidden=4, dropout=0.0, l1=0.0, l2=0.0)
        model = LstmModel.init(3, cfg, np.random.default_rng(12))
        X = np.random.default_rng(13).normal(size=(2, 3, 3))
        y = np.random.default_rng(14).normal(size=2)
        _, caches = forward(X, model, mode="train")
        assert_grads_close(backward(caches, y, model), numerical_grads(model, X, y))

    def test_gradcheck_with_penalties(self):
        cfg = NetworkConfig(layers=2, hidden=4, dropout=0.0, l1=0.01, l2=0.01)
        model = LstmModel.init(3, cfg, np.random.default_rng(15))
        X = np.random.default_rng(16).normal(size=(2, 3, 3))
        y = np.random.default_rng(17).normal(size=2)
        _, caches = forward(X, model, mode="train")
        assert_grads_close(backward(caches, y, model), numerical_grads(model, X, y))

    def test_gradcheck_relu_head(self):
        cfg = NetworkConfig(
            layers=1, hidden=4, dropout=0.0, l1=0.0, l2=0.0, head_hidden=5
        )
        model = LstmModel.init(2, cfg, np.random.default_rng(18))
        X = np.random.default_rng(19).normal(size=(3, 2, 2))
        y = np.random.default_rng(20).normal(size=3)
        _, caches = forward(X, model, mode="train")
        # keep the check away from the ReLU kink
        assert np.min(np.abs(caches["head_pre"])) > 1e-3
        assert_grads_close(backward(caches, y, model), numerical_grads(model, X, y))

    def test_head_bias_gradient_zero_at_perfect_fit(self):
        model, _ = small_model(seed=21)
        X = np.random.default_rng(22).normal(size=(2, 3, 3))
        preds, caches = forward(X, model, mode="train")
        grads = backward(caches, preds.copy(), model)
        head_b = grads[model.parameter_names().index("head.b")]
        np.testing.assert_allclose(head_b, 0.0, atol=1e-15)

    def test_l2_term_gradient(self):
        # With predictions equal to targets, only penalties contribute.
        cfg = NetworkConfig(layers=1, hidden=3, dropout=0.0, l1=0.0, l2=0.05)
        model = LstmModel.init(2, cfg, np.random.default_rng(23))
        X = np.random.default_rng(24).normal(size=(2, 2, 2))
        preds, caches = forward(X, model, mode="train")
        grads = backward(caches, preds.copy(), model)
        names = model.parameter_names()
        w_x = model.layers[0].w_x
        data_part = grads[names.index("layer0.w_x")]
        np.testing.assert_allclose(data_part, 2 * 0.05 * w_x, atol=1e-15)


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        model, _ = small_model(seed=25)
        before = [p.copy() for p in model.parameters()]
        zeros = [np.zeros_like(p) for p in model.parameters()]
        adam_step(model, zeros, AdamState.like(model), lr=0.1)
        for b, p in zip(before, model.parameters()):
            np.testing.assert_array_equal(b, p)

    def test_first_step_closed_form(self):
        model, _ = small_model(seed=26)
        before = [p.copy() for p in model.parameters()]
        grads = [np.random.default_rng(27 + i).normal(size=p.shape)
                 for i, p in enumerate(model.parameters())]
        adam_step(model, grads, AdamState.like(model), lr=0.01)
        for b, g, p in zip(before, grads, model.parameters()):
            expected = b - 0.01 * g / (np.abs(g) + 1e-8)
            np.testing.assert_allclose(p, expected, atol=1e-12)

    def test_two_steps_match_hand_iteration(self):
        model, _ = small_model(seed=28)
        start = [p.copy() for p in model.parameters()]
        grads = [np.random.default_rng(29 + i).normal(size=p.shape)
                 for i, p in enumerate(model.parameters())]
        state = AdamState.like(model)
        adam_step(model, grads, state, lr=0.02)
        adam_step(model, grads, state, lr=0.02)

        # straight-line re-derivation of two textbook Adam steps
        for s, g, p in zip(start, grads, model.parameters()):
            theta = s.copy()
            m = np.zeros_like(s)
            v = np.zeros_like(s)
            for t in (1, 2):
                m = 0.9 * m + 0.1 * g
                v = 0.999 * v + 0.001 * g**2
                m_hat = m / (1.0 - 0.9**t)
                v_hat = v / (1.0 - 0.999**t)
                theta = theta - 0.02 * m_hat / (np.sqrt(v_hat) + 1e-8)
            np.testing.assert_allclose(p, theta, atol=1e-12)

    def test_shape_mismatch(self):
        model, _ = small_model()
        grads = [np.zeros_like(p) for p in model.parameters()]
        grads[0] = np.zeros((1, 1))
        with pytest.raises(AlignmentError):
            adam_step(model, grads, AdamState.like(model), lr=0.1)


def sinusoid_task(n_samples=32, lookback=8):
    t = np.arange(n_samples + lookback, dtype=float)
    s = np.sin(2 * np.pi * t / 16.0)
    X = np.stack([s[i : i + lookback, None] for i in range(n_samples)])
    y = np.array([s[i + lookback] for i in range(n_samples)])
    return X, y


class TestTrain:
    def test_overfits_noiseless_sinusoid(self):
        X, y = sinusoid_task()
        net = NetworkConfig(layers=1, hidden=16, dropout=0.0, l1=0.0, l2=0.0)
        cfg = TrainConfig(batch=32, max_epochs=2000, lr0=0.01, patience=2000, seed=0)
        _, history = train((X, y), (X, y), net, cfg)
        assert min(history.train_mse) < 1e-3

    def test_patience_zero_runs_one_epoch(self):
        X, y = sinusoid_task()
        net = NetworkConfig(layers=1, hidden=4, dropout=0.0, l1=0.0, l2=0.0)
        cfg = TrainConfig(batch=8, max_epochs=100, lr0=0.01, patience=0, seed=1)
        _, history = train((X, y), (X, y), net, cfg)
        assert len(history.train_mse) == 1
        assert len(history.val_mse) == 1

    def test_seeded_determinism(self):
        X, y = sinusoid_task()
        net = NetworkConfig(layers=1, hidden=8, dropout=0.2, l1=0.001, l2=0.001)
        cfg = TrainConfig(batch=8, max_epochs=15, lr0=0.01, patience=50, seed=3)
        model_a, hist_a = train((X, y), (X, y), net, cfg)
        model_b, hist_b = train((X, y), (X, y), net, cfg)
        assert hist_a.train_mse == hist_b.train_mse
        assert hist_a.val_mse == hist_b.val_mse
        for pa, pb in zip(model_a.parameters(), model_b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_divergence_aborts_with_epoch(self):
        X, y = sinusoid_task()
        net = NetworkConfig(layers=1, hidden=4, dropout=0.0, l1=0.0, l2=0.0)
        cfg = TrainConfig(batch=32, max_epochs=50, lr0=1e160, lr_floor=1e159,
                          patience=50, seed=4)
        with pytest.raises(TrainingDivergedError) as err:
            train((X, y), (X, y), net, cfg)
        assert err.value.epoch >= 1

    def test_history_lengths_match_epochs(self):
        X, y = sinusoid_task()
        net = NetworkConfig(layers=1, hidden=4, dropout=0.0, l1=0.0, l2=0.0)
        cfg = TrainConfig(batch=8, max_epochs=7, lr0=0.01, patience=100, seed=5)
        _, history = train((X, y), (X, y), net, cfg)
        assert len(history.train_mse) == len(history.val_mse) == 7

    def test_empty_train_set(self):
        with pytest.raises(AlignmentError):
            train((np.zeros((0, 3, 1)), np.zeros(0)), None,
                  NetworkConfig(layers=1, hidden=2), TrainConfig())

    def test_lr_schedule(self):
        cfg = TrainConfig(lr0=0.0015, decay=0.99, decay_every=50, lr_floor=1e-4)
        assert cfg.lr_at(0) == 0.0015
        assert cfg.lr_at(49) == 0.0015
        assert cfg.lr_at(50) == pytest.approx(0.0015 * 0.99)
        assert cfg.lr_at(10_000_000) == 1e-4


class TestPersistence:
    def test_checkpoint_round_trip_bitwise(self, tmp_path):
        cfg = NetworkConfig(layers=2, hidden=4, dropout=0.1, l1=0.01, l2=0.01)
        model = LstmModel.init(3, cfg, np.random.default_rng(30))
        save_model(tmp_path / "model", model, extra={"seed": 30})
        clone = load_model(tmp_path / "model")
        assert clone.net_config == model.net_config
        assert clone.input_dim == model.input_dim
        for a, b in zip(model.parameters(), clone.parameters()):
            np.testing.assert_array_equal(a, b)
        X = np.random.default_rng(31).normal(size=(2, 3, 3))
        np.testing.assert_array_equal(predict(model, X), predict(clone, X))

    def test_relu_head_round_trip(self, tmp_path):
        cfg = NetworkConfig(layers=1, hidden=4, dropout=0.0, head_hidden=6)
        model = LstmModel.init(2, cfg, np.random.default_rng(32))
        save_model(tmp_path / "m", model)
        clone = load_model(tmp_path / "m")
        X = np.random.default_rng(33).normal(size=(2, 2, 2))
        np.testing.assert_array_equal(predict(model, X), predict(clone, X))

    def test_history_csv_round_trip(self, tmp_path):
        from vmdcast.lstm import LossHistory

        hist = LossHistory(train_mse=[0.5, 0.25, 0.1], val_mse=[0.6, 0.3, 0.2])
        save_history(tmp_path / "h.csv", hist)
        back = load_history(tmp_path / "h.csv")
        assert back.train_mse == hist.train_mse
        assert back.val_mse == hist.val_mse


class TestRegressor:
    def test_fit_predict(self):
        X, y = sinusoid_task()
        reg = LstmRegressor(layers=1, hidden=8, dropout=0.0, l1=0.0, l2=0.0,
                            batch=16, max_epochs=200, lr0=0.01, patience=200, seed=6)
        reg.fit(X, y, X_val=X, y_val=y)
        preds = reg.predict(X)
        assert preds.shape == y.shape
        assert np.mean((preds - y) ** 2) < 0.05

    def test_requires_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            LstmRegressor().predict(np.zeros((1, 2, 1)))

    def test_get_params_round_trip(self):
        reg = LstmRegressor(hidden=32, seed=9)
        params = reg.get_params()
        assert params["hidden"] == 32 and params["seed"] == 9
        from sklearn.base import clone

        assert clone(reg).get_params() == params

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            NetworkConfig(dropout=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(lr0=0.0)
