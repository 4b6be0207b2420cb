"""Inverse models mapping specifications to circuit parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mmsizing import rfmodel
from mmsizing.errors import SchemaError
from mmsizing.regress.forest import RandomForest
from mmsizing.regress.lookup import NearestRowLookup
from mmsizing.regress.networks import MLP_DIMS, MLPNet, TrainConfig, TransformerNet, train_network
from mmsizing.regress.standardize import Standardizer
from mmsizing.regress.svr import SVR


class MLPRegressor:
    kind = "mlp"
    standardized_output = True

    def __init__(self, num_layers=7, dim_layers=MLP_DIMS, activation="relu", seed=0, train_config=None):
        dim_layers = tuple(int(d) for d in dim_layers)
        if num_layers != len(dim_layers) + 1:
            raise ValueError("num_layers counts the hidden layers plus the output layer")
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        self.num_layers = num_layers
        self.dim_layers = dim_layers
        self.activation = activation
        self.seed = seed
        self.train_config = train_config or TrainConfig(seed=seed)

    def hyperparameters(self):
        return {"num_layers": self.num_layers, "dim_layers": list(self.dim_layers),
                "activation": self.activation}

    def build(self, n_in, n_out):
        self.net_ = MLPNet(n_in, n_out, self.dim_layers, np.random.default_rng(self.seed))
        return self.net_

    def fit(self, X, Y):
        X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
        self.build(X.shape[1], Y.shape[1])
        self.history_ = train_network(self.net_, X, Y, self.train_config)
        return self

    def predict(self, X):
        return self.net_.predict(X)

    def get_state(self):
        first = self.net_.body.layers[0].params["W"]
        last = self.net_.body.layers[-1].params["W"]
        meta = {**self.hyperparameters(), "n_in": first.shape[0], "n_out": last.shape[1]}
        return meta, dict(self.net_.state_dict())

    @classmethod
    def from_state(cls, meta, arrays):
        meta = dict(meta)
        n_in, n_out = meta.pop("n_in"), meta.pop("n_out")
        self = cls(**meta)
        self.build(n_in, n_out).load_state_dict(arrays)
        return self


class TransformerRegressor:
    kind = "transformer"
    standardized_output = True

    def __init__(self, dim_model=200, num_heads=2, dim_hidden=200, dropout_p=0.1,
                 num_encoder_layers=6, activation="relu", seed=0, train_config=None):
        if activation != "relu":
            raise ValueError(f"unsupported activation {activation!r}")
        self.dim_model = dim_model
        self.num_heads = num_heads
        self.dim_hidden = dim_hidden
        self.dropout_p = dropout_p
        self.num_encoder_layers = num_encoder_layers
        self.activation = activation
        self.seed = seed
        self.train_config = train_config or TrainConfig(seed=seed)

    def hyperparameters(self):
        return {"dim_model": self.dim_model, "num_heads": self.num_heads, "dim_hidden": self.dim_hidden,
                "dropout_p": self.dropout_p, "num_encoder_layers": self.num_encoder_layers,
                "activation": self.activation}

    def build(self, n_in, n_out):
        self.net_ = TransformerNet(n_in, n_out, self.dim_model, self.num_heads, self.dim_hidden,
                                   self.dropout_p, self.num_encoder_layers,
                                   rng=np.random.default_rng(self.seed),
                                   drop_rng=np.random.default_rng(self.seed + 1))
        return self.net_

    def fit(self, X, Y):
        X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
        self.build(X.shape[1], Y.shape[1])
        self.history_ = train_network(self.net_, X, Y, self.train_config)
        return self

    def predict(self, X):
        return self.net_.predict(X)

    def get_state(self):
        meta = {**self.hyperparameters(), "n_in": self.net_.n_tokens,
                "n_out": self.net_.head.params["W"].shape[1]}
        return meta, dict(self.net_.state_dict())

    @classmethod
    def from_state(cls, meta, arrays):
        meta = dict(meta)
        n_in, n_out = meta.pop("n_in"), meta.pop("n_out")
        self = cls(**meta)
        self.build(n_in, n_out).load_state_dict(arrays)
        return self


ESTIMATORS = {
    "rf": RandomForest,
    "svr": SVR,
    "mlp": MLPRegressor,
    "transformer": TransformerRegressor,
    "lookup": NearestRowLookup,
}
KINDS = ("rf", "svr", "mlp", "transformer")


@dataclass
class Regressor:
    """A fitted inverse model together with its schema, scaling and clamp box."""

    kind: str
    block: str
    spec_names: tuple
    param_names: tuple
    seed: int
    standardizer: Standardizer
    bounds: np.ndarray            # (n_params, 2) low/high in table units
    estimator: object
    history: list = field(default_factory=list)
    sim_hash: str | None = None
    split: dict | None = None

    @property
    def hyperparameters(self):
        return self.estimator.hyperparameters()

    def predict_array(self, specs):
        """Raw spec rows -> (clamped parameter rows, boolean clamp mask)."""
        specs = np.atleast_2d(np.asarray(specs, dtype=float))
        if specs.shape[1] != len(self.spec_names):
            raise SchemaError(f"expected {len(self.spec_names)} spec columns, got {specs.shape[1]}")
        out = self.estimator.predict(self.standardizer.transform_x(specs))
        if self.estimator.standardized_output:
            out = self.standardizer.inverse_y(out)
        low, high = self.bounds[:, 0], self.bounds[:, 1]
        clamped = (out < low) | (out > high) | ~np.isfinite(out)
        out = np.where(np.isnan(out), 0.5 * (low + high), out)
        return np.clip(out, low, high), clamped


def _estimator(kind, seed, cfg, hyper):
    try:
        cls = ESTIMATORS[kind]
    except KeyError:
        raise SchemaError(f"unknown model kind {kind!r}; expected one of {', '.join(ESTIMATORS)}") from None
    if kind in ("mlp", "transformer"):
        return cls(seed=seed, train_config=cfg, **hyper)
    if kind == "rf":
        return cls(seed=seed, **hyper)
    return cls(**hyper)


def plan_bounds(block):
    from mmsizing.dataset import builtin_plan

    return np.array(builtin_plan(block).bounds(), dtype=float)


def fit(kind, train, cfg=None, **hyper):
    """Fit an inverse model of ``kind`` on the rows of dataset ``train``."""
    cfg = cfg or TrainConfig()
    if len(train) < 2 and kind != "lookup":
        raise ValueError(f"{kind} needs at least 2 training rows, got {len(train)}")
    std = Standardizer.fit(train.specs, train.params, train.spec_names, train.param_names)
    est = _estimator(kind, cfg.seed, cfg, hyper)
    Xs = std.transform_x(train.specs)
    Ys = std.transform_y(train.params) if est.standardized_output else train.params
    est.fit(Xs, Ys)
    history = list(getattr(est, "history_", []))
    if not history:
        history = [float(np.mean((est.predict(Xs) - Ys) ** 2))]
    return Regressor(kind, train.block, tuple(train.spec_names), tuple(train.param_names), cfg.seed,
                     std, plan_bounds(train.block), est, history, train.sim_hash)


def fit_random_forest(train, cfg=None, **hyper):
    return fit("rf", train, cfg, **hyper)


def fit_svr(train, cfg=None, **hyper):
    return fit("svr", train, cfg, **hyper)


def fit_mlp(train, cfg=None, **hyper):
    return fit("mlp", train, cfg, **hyper)


def fit_transformer(train, cfg=None, **hyper):
    return fit("transformer", train, cfg, **hyper)


def predict(model, specs):
    """Predict the parameter vector for a desired :class:`~mmsizing.rfmodel.SpecVector`."""
    params, _ = predict_with_flags(model, specs)
    return params


def predict_with_flags(model, specs):
    if specs.block != model.block or specs.names() != tuple(model.spec_names):
        raise SchemaError(
            f"model expects {model.block} specs {list(model.spec_names)}, got {specs.block} {list(specs.names())}")
    values, clamped = model.predict_array([specs.as_tuple()])
    return rfmodel.ParamVector.from_values(model.block, values[0].tolist()), bool(clamped.any())
