import numpy as np
import pytest

from mmsizing import dataset, rfmodel
from mmsizing.errors import (ConvergenceError, DomainError, ModelFormatError, ModelKindError, SchemaError,
                             TrainingDivergence)
from mmsizing.regress import container, model as rm
from mmsizing.regress.forest import RandomForest
from mmsizing.regress.gradcheck import check_gradients
from mmsizing.regress.networks import MLPNet, TrainConfig, TransformerNet, train_network
from mmsizing.regress.standardize import Standardizer
from mmsizing.regress.svr import SVR, solve_eps_svr

FAST = {
    "rf": {"n_estimators": 20},
    "svr": {},
    "mlp": {"dim_layers": [16, 16], "num_layers": 3},
    "transformer": {"dim_model": 8, "dim_hidden": 16, "num_encoder_layers": 1},
}


@pytest.fixture(scope="module")
def cascode():
    return dataset.generate_dataset(dataset.builtin_plan("cascode"))


@pytest.fixture(scope="module")
def mixer():
    return dataset.generate_dataset(dataset.builtin_plan("mixer"))


def mse(a, b):
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


# random forest


def test_forest_constant_target():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 2))
    Y = np.full((30, 2), 3.25)
    rf = RandomForest(n_estimators=10, seed=1).fit(X, Y)
    np.testing.assert_array_equal(rf.predict(rng.normal(size=(5, 2))), 3.25)


def test_forest_train_error_below_oob(cascode):
    std = Standardizer.fit(cascode.specs, cascode.params)
    X, Y = std.transform_x(cascode.specs), std.transform_y(cascode.params)
    rf = RandomForest(seed=0).fit(X, Y)
    assert mse(rf.predict(X), Y) <= mse(rf.oob_predict(X), Y)


def test_forest_multi_output_leaf_means():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    Y = np.array([[1.0, 10.0], [3.0, 30.0], [5.0, 50.0], [7.0, 70.0]])
    rf = RandomForest(n_estimators=1, bootstrap=False, seed=0).fit(X, Y)
    np.testing.assert_allclose(rf.predict(np.array([[0.0], [1.0]])), [[2, 20], [6, 60]])


# support vector regression


def test_svr_single_point():
    svr = SVR().fit(np.array([[0.3, -1.0]]), np.array([[2.0]]))
    grid = np.random.default_rng(0).normal(size=(7, 2)) * 5
    assert np.all(np.abs(svr.predict(grid)[:, 0] - 2.0) <= 0.1 + 1e-9)


def test_svr_large_gamma_interpolates(mixer):
    std = Standardizer.fit(mixer.specs, mixer.params)
    X, Y = std.transform_x(mixer.specs), std.transform_y(mixer.params)
    sp = dataset.split(mixer, 0)
    tr, te = list(sp.train), list(sp.test)
    svr = SVR(gamma=100.0, C=100.0, epsilon=0.01).fit(X[tr], Y[tr])
    assert mse(svr.predict(X[tr]), Y[tr]) < mse(svr.predict(X[te]), Y[te])


def test_svr_duplicate_rows():
    # duplicating every row doubles C; with no bounded support vectors the fit is unchanged
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(25, 2))
    Y = np.sin(2 * X[:, :1]) + X[:, 1:] ** 2
    a = SVR(C=1e3, tol=1e-6).fit(X, Y)
    b = SVR(C=1e3, tol=1e-6).fit(np.vstack([X, X]), np.vstack([Y, Y]))
    grid = rng.uniform(-1, 1, size=(50, 2))
    np.testing.assert_allclose(a.predict(grid), b.predict(grid), atol=1e-5)


def test_svr_convergence_error_reports_gap():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    with pytest.raises(ConvergenceError, match="duality gap") as info:
        solve_eps_svr(X, rng.normal(size=40), C=10.0, max_iter=3)
    assert info.value.gap > 1e-3


# networks


def test_mlp_zero_weights_predict_bias():
    net = MLPNet(3, 2, (4, 5))
    for _, layer, key in net.named_parameters():
        layer.params[key][...] = 0.0
    net.body.layers[-1].params["b"][...] = [1.5, -2.0]
    out = net.predict(np.random.default_rng(0).normal(size=(6, 3)))
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (6, 1)))


@pytest.mark.parametrize("seed", range(3))
def test_mlp_gradients(seed):
    rng = np.random.default_rng(seed)
    net = MLPNet(5, 2, (7, 6), np.random.default_rng(seed))
    errs = check_gradients(net, rng.normal(size=(4, 5)), rng.normal(size=(4, 2)), h=1e-5)
    assert max(errs.values()) < 1e-4, errs


@pytest.mark.parametrize("seed", range(3))
def test_transformer_gradients(seed):
    rng = np.random.default_rng(seed)
    net = TransformerNet(3, 2, 8, 2, 10, 0.1, 2, np.random.default_rng(seed), np.random.default_rng(seed + 1))
    errs = check_gradients(net, rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), h=1e-5)
    assert max(errs.values()) < 1e-4, errs


def test_mlp_training_reduces_loss(cascode):
    std = Standardizer.fit(cascode.specs, cascode.params)
    X, Y = std.transform_x(cascode.specs), std.transform_y(cascode.params)
    net = MLPNet(1, 3, (32, 32), np.random.default_rng(0))
    hist = train_network(net, X, Y, TrainConfig(max_iter=200))
    assert hist[-1] < hist[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_is_reported():
    net = MLPNet(1, 1, (4,), np.random.default_rng(0))
    X = np.ones((4, 1))
    with pytest.raises(TrainingDivergence, match="non-finite"):
        train_network(net, X, np.array([[np.inf]] * 4), TrainConfig(max_iter=5))


def _tiny_transformer(seed=0, p=0.1):
    return TransformerNet(4, 2, 8, 2, 12, p, 2, np.random.default_rng(seed), np.random.default_rng(seed + 1))


def test_attention_rows_sum_to_one():
    net = _tiny_transformer()
    X = np.random.default_rng(3).normal(size=(5, 4))
    for attn in net.attention_weights(X):
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-6)


def test_eval_mode_is_deterministic():
    net = _tiny_transformer(p=0.5)
    X = np.random.default_rng(3).normal(size=(5, 4))
    np.testing.assert_array_equal(net.predict(X), net.predict(X))
    net.train()
    assert not np.array_equal(net.forward(X), net.forward(X))


def test_token_permutation_invariance():
    net = _tiny_transformer()
    X = np.random.default_rng(3).normal(size=(5, 4))
    before = net.predict(X)
    perm = np.array([2, 0, 3, 1])
    net.params["proj"] = net.params["proj"][perm]
    net.params["ident"] = net.params["ident"][perm]
    after = net.predict(X[:, perm])
    np.testing.assert_allclose(after, before, atol=1e-6)


# fitted models and the container


@pytest.mark.parametrize("kind", ["rf", "svr", "mlp", "transformer", "lookup"])
def test_fit_is_seed_deterministic_and_roundtrips(kind, cascode, tmp_path):
    cfg = TrainConfig(max_iter=30, seed=5)
    a = rm.fit(kind, cascode, cfg, **FAST.get(kind, {}))
    b = rm.fit(kind, cascode, cfg, **FAST.get(kind, {}))
    q = cascode.specs[:5]
    np.testing.assert_array_equal(a.predict_array(q)[0], b.predict_array(q)[0])
    assert container.dumps(a) == container.dumps(b)
    path = tmp_path / "m.bin"
    container.save_model(a, path)
    back = container.load_model(path, kind=kind)
    np.testing.assert_array_equal(back.predict_array(q)[0], a.predict_array(q)[0])


def test_container_rejects_bad_files(cascode, tmp_path):
    m = rm.fit("rf", cascode, n_estimators=5)
    blob = container.dumps(m)
    with pytest.raises(ModelFormatError, match="truncated|checksum"):
        container.loads(blob[:-40])
    with pytest.raises(ModelFormatError, match="magic"):
        container.loads(b"junk" + blob)
    with pytest.raises(ModelKindError):
        container.loads(blob, kind="svr")


def test_predict_checks_schema(cascode):
    m = rm.fit("rf", cascode, n_estimators=5)
    with pytest.raises(SchemaError):
        rm.predict(m, rfmodel.SpecVector.from_values("vco", [-100.0, 1e9]))
    with pytest.raises(SchemaError):
        m.predict_array(np.zeros((1, 2)))


def test_rf_training_row_resimulates_close(cascode):
    m = rm.fit("rf", cascode, TrainConfig(seed=0))
    for i in range(len(cascode)):
        y = cascode.spec_vector(i)
        p = rm.predict(m, y)
        got = rfmodel.evaluate(p)["gain"]
        assert abs(got - y["gain"]) / abs(y["gain"]) < 0.02
        low, high = m.bounds[:, 0], m.bounds[:, 1]
        assert np.all((np.array(p.as_tuple()) >= low) & (np.array(p.as_tuple()) <= high))


def test_constant_column_rejected():
    with pytest.raises(DomainError, match="constant"):
        Standardizer.fit(np.ones((4, 1)), np.arange(4.0)[:, None], ["gain"], ["R_D"])


def test_depth_one_forest_two_points():
    X = np.array([[0.0], [1.0]])
    Y = np.array([[2.0, -1.0], [5.0, 4.0]])
    rf = RandomForest(n_estimators=5, max_depth=1, bootstrap=False, seed=0).fit(X, Y)
    np.testing.assert_array_equal(rf.predict(X), Y)


def test_forest_predictions_within_target_range(cascode):
    m = rm.fit("rf", cascode, n_estimators=10)
    rng = np.random.default_rng(0)
    q = rng.uniform(cascode.specs.min() - 5, cascode.specs.max() + 5, size=(40, 1))
    raw = m.standardizer.inverse_y(m.estimator.predict(m.standardizer.transform_x(q)))
    assert np.all(raw >= cascode.params.min(axis=0) - 1e-9)
    assert np.all(raw <= cascode.params.max(axis=0) + 1e-9)


def test_clamp_returns_exact_bound(cascode):
    m = rm.fit("rf", cascode, n_estimators=5)
    m.bounds = m.bounds.copy()
    m.bounds[0, 0] = 350.0                     # above every R_D the forest can return at low gain
    out, mask = m.predict_array(cascode.specs[:1])
    assert out[0, 0] == 350.0 and mask[0, 0]


def test_standardizer_roundtrip_and_scale_invariance(cascode):
    std = Standardizer.fit(cascode.specs, cascode.params)
    np.testing.assert_allclose(std.inverse_x(std.transform_x(cascode.specs)), cascode.specs, rtol=1e-12)
    np.testing.assert_allclose(std.inverse_y(std.transform_y(cascode.params)), cascode.params, rtol=1e-12)
    scaled = Standardizer.fit(10 * cascode.specs, cascode.params)
    np.testing.assert_allclose(scaled.transform_x(10 * cascode.specs), std.transform_x(cascode.specs), atol=1e-9)
    cfg = TrainConfig(max_iter=1)
    a = rm.fit("mlp", cascode, cfg, dim_layers=[8], num_layers=2)
    b_ds = dataset.Dataset(cascode.block, cascode.param_names, cascode.spec_names, cascode.params,
                           10 * cascode.specs)
    b = rm.fit("mlp", b_ds, cfg, dim_layers=[8], num_layers=2)
    assert abs(a.history[0] - b.history[0]) < 1e-9


def test_single_row_rejected(cascode):
    with pytest.raises(ValueError, match="at least 2"):
        rm.fit("rf", cascode.subset([0]))


def test_tx_system_constant_bandwidth_rejected():
    ds = dataset.generate_dataset(dataset.builtin_plan("tx_system")).subset(range(50))
    with pytest.raises(DomainError, match="bandwidth"):
        rm.fit("rf", ds, n_estimators=2)
