import numpy as np
import pytest

from vtinv._rng import Xoshiro256pp
from vtinv.corpus import ContourScaler, ContourSequence
from vtinv.errors import ContractError
from vtinv.net import (
    ContourRegressor,
    ModelConfig,
    TrainConfig,
    TrainHistory,
    adam_init,
    adam_step,
    init_params,
    load_checkpoint,
    model_forward,
    predict_contours,
    save_checkpoint,
    train_model,
    zeros_params,
)

CFG = ModelConfig(input_dim=3, dense_units=6, lstm_units=6, output_dim=5, seed=0)


def make_dataset(n_seqs, T, cfg=CFG, seed=0, target_fn=None):
    """Learnable toy mapping: target = smooth linear function of inputs."""
    rng = Xoshiro256pp(seed)
    mix = rng.uniform_matrix(-1.0, 1.0, (cfg.input_dim, cfg.output_dim))
    xs, ys = [], []
    for _ in range(n_seqs):
        x = rng.normals(T * cfg.input_dim).reshape(T, cfg.input_dim)
        y = x @ mix if target_fn is None else target_fn(x)
        xs.append(x)
        ys.append(y)
    return xs, ys


# ---------------------------------------------------------------------------
# Adam

def test_adam_zero_gradient_no_op():
    params = init_params(CFG)
    before = params.copy()
    state = adam_init(params)
    adam_step(params, params.zeros_like(), state)
    for (name, a), (_, b) in zip(params.named_arrays(), before.named_arrays()):
        assert np.array_equal(a, b), name
    assert state.step_count == 1


def test_adam_first_step_unit_gradient():
    params = zeros_params(CFG)
    grads = params.zeros_like()
    for _, g in grads.named_arrays():
        g[...] = 1.0
    state = adam_init(params, lr=1e-3)
    adam_step(params, grads, state)
    # m_hat = v_hat = 1 exactly on the first step: update = -lr / (1 + eps)
    expected = -1e-3 / (1.0 + 1e-8)
    for name, theta in params.named_arrays():
        assert np.allclose(theta, expected, atol=1e-15), name
    assert abs(expected + 9.99999e-4) < 1e-8  # matches the hand computation


def test_adam_constant_unit_gradient_updates_stay_at_lr():
    # bias-corrected m_hat / sqrt(v_hat) is exactly 1 for a constant unit
    # gradient, so every step moves parameters by about -lr
    params = zeros_params(CFG)
    grads = params.zeros_like()
    for _, g in grads.named_arrays():
        g[...] = 1.0
    state = adam_init(params, lr=1e-3)
    prev = params.dense1.W[0, 0]
    for _ in range(10):
        adam_step(params, grads, state)
        step = params.dense1.W[0, 0] - prev
        prev = params.dense1.W[0, 0]
        assert step == pytest.approx(-1e-3, rel=1e-7)


def test_adam_shape_mismatch_rejected():
    params = init_params(CFG)
    other = init_params(ModelConfig(**{**CFG.__dict__, "input_dim": 4}))
    with pytest.raises(ContractError):
        adam_step(params, other, adam_init(params))


# ---------------------------------------------------------------------------
# training loop

def test_fifty_steps_halve_training_loss():
    # 5 sequences, batch 1 -> 5 steps/epoch; 10 epochs = 50 Adam steps
    xs, ys = make_dataset(5, 12, seed=3)
    tcfg = TrainConfig(max_epochs=10, batch_sequences=1, patience=9,
                       seed=0, learning_rate=0.02)
    params, history = train_model(xs, ys, xs[:1], ys[:1], CFG, tcfg)
    assert history.stopped_epoch == 10
    assert history.train_mse[-1] <= 0.5 * history.train_mse[0]


def test_training_deterministic_bit_identical():
    xs, ys = make_dataset(6, 10, seed=5)
    tcfg = TrainConfig(max_epochs=4, batch_sequences=2, patience=3, seed=9)
    p1, h1 = train_model(xs[:4], ys[:4], xs[4:], ys[4:], CFG, tcfg)
    p2, h2 = train_model(xs[:4], ys[:4], xs[4:], ys[4:], CFG, tcfg)
    assert h1.train_mse == h2.train_mse
    assert h1.val_mse == h2.val_mse
    for (name, a), (_, b) in zip(p1.named_arrays(), p2.named_arrays()):
        assert np.array_equal(a, b), name


def test_best_epoch_definition():
    xs, ys = make_dataset(6, 10, seed=7)
    tcfg = TrainConfig(max_epochs=6, batch_sequences=3, patience=5, seed=1,
                       learning_rate=5e-3)
    _, history = train_model(xs[:4], ys[:4], xs[4:], ys[4:], CFG, tcfg)
    best = history.best_epoch
    assert history.val_mse[best - 1] == min(history.val_mse)
    assert history.val_mse[best - 1] <= history.val_mse[0]


def test_early_stopping_at_patience_after_best():
    """Controlled harness: zeroing the learning rate after epoch 1 freezes
    validation, so training must stop exactly patience epochs later and
    return the epoch-1 snapshot."""
    xs, ys = make_dataset(6, 10, seed=11)
    tcfg = TrainConfig(max_epochs=50, batch_sequences=2, patience=4, seed=2)
    snapshots = {}

    def harness(epoch, train_mse, val_mse, state):
        state.lr = 0.0
        snapshots[epoch] = val_mse

    params, history = train_model(xs[:4], ys[:4], xs[4:], ys[4:], CFG, tcfg,
                                  epoch_callback=harness)
    assert history.best_epoch == 1
    assert history.stopped_epoch == 1 + tcfg.patience
    assert history.stopped_epoch - history.best_epoch == tcfg.patience
    # frozen optimizer: validation identical every epoch after the first
    assert len(set(history.val_mse)) == 1
    assert history.best_val_mse == history.val_mse[0]


def test_empty_split_rejected():
    xs, ys = make_dataset(2, 8)
    with pytest.raises(ContractError, match="non-empty"):
        train_model(xs, ys, [], [], CFG, TrainConfig(max_epochs=2, patience=1))


def test_mismatched_lengths_rejected():
    xs, ys = make_dataset(2, 8)
    bad_ys = [y[:-1] for y in ys]
    with pytest.raises(ContractError, match="frame counts"):
        train_model(xs, bad_ys, xs, ys, CFG, TrainConfig(max_epochs=2, patience=1))


def test_history_csv_roundtrip():
    hist = TrainHistory(train_mse=[0.5, 0.25, 0.3], val_mse=[0.6, 0.28, 0.31])
    hist.best_epoch = 2
    hist.stopped_epoch = 3
    back = TrainHistory.from_csv(hist.to_csv())
    assert back.train_mse == hist.train_mse
    assert back.val_mse == hist.val_mse
    assert back.best_epoch == 2
    assert back.stopped_epoch == 3


# ---------------------------------------------------------------------------
# prediction back to pixel space

def contour_fixture(T=6, seed=21):
    rng = Xoshiro256pp(seed)
    return ContourSequence(rng.uniform_matrix(20, 120, (T, 8, 50, 2)))


def test_predict_inverts_exact_network_output():
    seq = contour_fixture()
    scaler = ContourScaler().fit(seq)
    cfg = ModelConfig(input_dim=4, dense_units=6, lstm_units=6, output_dim=800, seed=0)
    params = init_params(cfg)
    rng = Xoshiro256pp(3)
    x = rng.normals(6 * 4).reshape(6, 4)
    z = model_forward(params, x)
    target = scaler.inverse_transform(z)
    predicted = predict_contours(params, x, scaler)
    assert np.max(np.abs(predicted.frames - target.frames)) < 1e-9


def test_zero_network_outputs_training_mean():
    seq = contour_fixture(T=10, seed=22)
    scaler = ContourScaler().fit(seq)
    cfg = ModelConfig(input_dim=4, dense_units=6, lstm_units=6, output_dim=800, seed=0)
    params = zeros_params(cfg)
    predicted = predict_contours(params, np.ones((3, 4)), scaler)
    mean_frame = scaler.mean_frame().points
    for t in range(3):
        assert np.allclose(predicted.frames[t], mean_frame, atol=1e-12)


def test_predict_shape():
    seq = contour_fixture()
    scaler = ContourScaler().fit(seq)
    cfg = ModelConfig(input_dim=2, dense_units=4, lstm_units=4, output_dim=800, seed=1)
    out = predict_contours(init_params(cfg), np.zeros((9, 2)), scaler)
    assert out.n_frames == 9


# ---------------------------------------------------------------------------
# checkpoint format

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = init_params(CFG)
    rng = Xoshiro256pp(17)
    extras = {
        "contour.mean": rng.uniform_matrix(0, 136, (800,)),
        "contour.std": rng.uniform_matrix(0.1, 5, (800,)),
    }
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, params, CFG, {"experiment": "baseline"}, extras)
    with open(path) as fh:
        assert fh.readline() == "VTINV1\n"
    ckpt = load_checkpoint(path)
    assert ckpt.model_config == CFG
    assert ckpt.config["experiment"] == "baseline"
    for (name, a), (_, b) in zip(params.named_arrays(), ckpt.params.named_arrays()):
        assert np.array_equal(a, b), name
    assert np.array_equal(ckpt.arrays["contour.mean"].ravel(), extras["contour.mean"])
    assert np.array_equal(ckpt.arrays["contour.std"].ravel(), extras["contour.std"])


def test_checkpoint_roundtrip_randomized_values(tmp_path):
    # adversarial floats: denormals-adjacent, long mantissas
    params = zeros_params(CFG)
    rng = Xoshiro256pp(23)
    for _, arr in params.named_arrays():
        arr[...] = rng.normals(arr.size).reshape(arr.shape) * 1e-7
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(path, params, CFG)
    ckpt = load_checkpoint(path)
    for (name, a), (_, b) in zip(params.named_arrays(), ckpt.params.named_arrays()):
        assert np.array_equal(a, b), name


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("NOTAMAGIC\n")
    from vtinv.errors import FormatError
    with pytest.raises(FormatError, match="VTINV1"):
        load_checkpoint(str(path))


def test_checkpoint_missing_array(tmp_path):
    path = str(tmp_path / "m.ckpt")
    save_checkpoint(path, init_params(CFG), CFG)
    with open(path) as fh:
        text = fh.read()
    truncated = text[: text.index("[array out.W")]
    path2 = str(tmp_path / "t.ckpt")
    with open(path2, "w") as fh:
        fh.write(truncated)
    from vtinv.errors import FormatError
    with pytest.raises(FormatError, match="out.W"):
        load_checkpoint(path2)


# ---------------------------------------------------------------------------
# sklearn-style estimator

def test_regressor_get_params_clone():
    from sklearn.base import clone
    reg = ContourRegressor(dense_units=6, lstm_units=6, output_dim=5,
                           max_epochs=3, patience=2, seed=4)
    cloned = clone(reg)
    assert cloned.get_params() == reg.get_params()


def test_regressor_fit_predict_score():
    xs, ys = make_dataset(6, 10, seed=31)
    reg = ContourRegressor(dense_units=6, lstm_units=6, output_dim=5,
                           max_epochs=3, batch_sequences=2, patience=2, seed=0)
    reg.fit(xs[:4], ys[:4], validation_data=(xs[4:], ys[4:]))
    preds = reg.predict(xs[4:])
    assert len(preds) == 2
    assert preds[0].shape == (10, 5)
    assert reg.score(xs[4:], ys[4:]) <= 0.0
    assert reg.history_.stopped_epoch >= 1


def test_regressor_requires_validation_data():
    xs, ys = make_dataset(2, 8)
    reg = ContourRegressor(dense_units=4, lstm_units=4, output_dim=5, max_epochs=2, patience=1)
    with pytest.raises(ContractError, match="validation_data"):
        reg.fit(xs, ys)


def test_regressor_not_fitted():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        ContourRegressor().predict([np.zeros((3, 2))])
