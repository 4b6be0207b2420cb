"""Train an inverse model, predict parameters, re-simulate and score the errors."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from mmsizing import rfmodel
from mmsizing.errors import DomainError, SchemaError, SizingError
from mmsizing.regress import model as regress_model
from mmsizing.regress.networks import TrainConfig

AGGREGATE_MODES = ("norm", "mean")


class ConfigMismatch(SizingError):
    """The simulator differs from the one that produced the dataset."""


def spec_errors(y, y_hat, mode="norm"):
    """Individual and aggregated relative errors between desired and achieved specs.

    Returns ``(individual, aggregated, zero_flags)``. Each individual error is
    ``|y_i - y_hat_i| / |y_i|``; where ``y_i == 0`` the absolute error is used
    and flagged. ``mode="norm"`` aggregates as ``||y - y_hat|| / ||y||``,
    ``mode="mean"`` as the mean of the individual errors.
    """
    y = [float(v) for v in y]
    y_hat = [float(v) for v in y_hat]
    if len(y) != len(y_hat):
        raise SchemaError("desired and achieved specs differ in length")
    individual, flags = [], []
    for a, b in zip(y, y_hat):
        if a == 0:
            individual.append(abs(b))
            flags.append(True)
        else:
            individual.append(abs(a - b) / abs(a))
            flags.append(False)
    if mode == "norm":
        num = math.sqrt(sum((a - b) ** 2 for a, b in zip(y, y_hat)))
        den = math.sqrt(sum(a * a for a in y))
        aggregated = num / den if den > 0 else num
    elif mode == "mean":
        aggregated = sum(individual) / len(individual)
    else:
        raise DomainError(f"unknown aggregation mode {mode!r}; expected one of {AGGREGATE_MODES}")
    return individual, aggregated, flags


@dataclass
class RowResult:
    index: int
    feasible: bool
    errors: tuple = ()
    aggregated: float = math.nan
    zero_flags: tuple = ()
    clamped: bool = False
    message: str = ""


@dataclass
class EvalReport:
    kind: str
    block: str
    seed: int
    spec_names: tuple
    rows: list = field(default_factory=list)
    mode: str = "norm"
    sim_hash: str | None = None

    @property
    def scored(self):
        return [r for r in self.rows if r.feasible]

    @property
    def n_excluded(self):
        return sum(not r.feasible for r in self.rows)

    def summary(self):
        """Mean, median and max per spec and for the aggregated error over scored rows."""
        scored = self.scored
        out = {
            "kind": self.kind,
            "block": self.block,
            "seed": self.seed,
            "mode": self.mode,
            "sim_hash": self.sim_hash or "",
            "rows": len(self.rows),
            "scored": len(scored),
            "excluded": self.n_excluded,
            "clamped": sum(r.clamped for r in self.rows),
        }
        columns = [(f"err.{name}", [r.errors[i] for r in scored]) for i, name in enumerate(self.spec_names)]
        columns.append(("err", [r.aggregated for r in scored]))
        for key, vals in columns:
            if vals:
                out[f"{key}.mean"] = statistics.fmean(vals)
                out[f"{key}.median"] = statistics.median(vals)
                out[f"{key}.max"] = max(vals)
            else:
                out[f"{key}.mean"] = out[f"{key}.median"] = out[f"{key}.max"] = math.nan
        return out

    @property
    def median_error(self):
        return self.summary()["err.median"]

    def to_csv(self):
        head = ["row", "feasible", "clamped"] + [f"err:{n}" for n in self.spec_names] + ["err", "zero_denominator", "message"]
        lines = [",".join(head)]
        for r in sorted(self.rows, key=lambda r: r.index):
            errs = [repr(e) for e in r.errors] if r.feasible else [""] * len(self.spec_names)
            agg = repr(r.aggregated) if r.feasible else ""
            zeros = ";".join(n for n, z in zip(self.spec_names, r.zero_flags) if z)
            msg = r.message.replace(",", ";").replace("\n", " ")
            lines.append(",".join([str(r.index), str(int(r.feasible)), str(int(r.clamped))] + errs + [agg, zeros, msg]))
        return "\n".join(lines) + "\n"

    def summary_text(self):
        return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in self.summary().items())

    def write(self, path):
        """Write the per-row CSV to ``path`` and the summary to ``<path>.summary``."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())
        with open(str(path) + ".summary", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.summary_text())


def train(kind, ds, split, cfg=None, **hyper):
    """Fit ``kind`` on the training rows of ``split``; the split is stored on the model."""
    split.validate(len(ds))
    cfg = cfg or TrainConfig(seed=split.seed)
    model = regress_model.fit(kind, ds.subset(split.train), cfg, **hyper)
    model.split = split.to_dict()
    return model


def _check_simulator(model, ds, simulator):
    if not simulator.supports(ds.block):
        raise SchemaError(f"simulator does not handle block {ds.block!r}")
    if model.block != ds.block:
        raise SchemaError(f"model was trained for {model.block!r}, dataset is {ds.block!r}")
    sim = getattr(simulator, "config_hash", None)
    for origin, h in (("dataset", ds.sim_hash), ("model", model.sim_hash)):
        if h and sim and h != sim:
            raise ConfigMismatch(f"{origin} was produced with simulator config {h}, simulator is {sim}")


def evaluate(model, ds, split, simulator, mode="norm"):
    """Predict parameters for every test row, re-simulate and score them."""
    split.validate(len(ds))
    _check_simulator(model, ds, simulator)
    test = list(split.test)
    predicted, clamped = model.predict_array(ds.specs[test])
    report = EvalReport(model.kind, ds.block, split.seed, tuple(ds.spec_names), mode=mode,
                        sim_hash=getattr(simulator, "config_hash", None))
    for row, x_hat, was_clamped in zip(test, predicted, clamped):
        y = ds.specs[row].tolist()
        try:
            p = rfmodel.ParamVector.from_values(ds.block, x_hat.tolist())
            y_hat = simulator.run(p).as_tuple()
        except SizingError as exc:
            report.rows.append(RowResult(row, False, clamped=bool(was_clamped.any()),
                                         message=f"{type(exc).__name__}: {exc}"))
            continue
        errs, agg, flags = spec_errors(y, y_hat, mode)
        report.rows.append(RowResult(row, True, tuple(errs), agg, tuple(flags), bool(was_clamped.any())))
    return report


@dataclass
class DesignResult:
    params: rfmodel.ParamVector
    achieved: rfmodel.SpecVector | None
    errors: tuple | None
    aggregated: float | None
    feasible: bool
    clamped: bool
    message: str = ""


def inverse_design(model, desired, simulator, mode="norm"):
    """Single query: predicted parameters, re-simulated specs and their errors."""
    params, clamped = regress_model.predict_with_flags(model, desired)
    try:
        achieved = simulator.run(params)
    except SizingError as exc:
        return DesignResult(params, None, None, None, False, clamped, f"{type(exc).__name__}: {exc}")
    errs, agg, _ = spec_errors(desired.as_tuple(), achieved.as_tuple(), mode)
    return DesignResult(params, achieved, tuple(errs), agg, True, clamped)


def summarize_rows(rows, n_specs):
    """Recompute summary statistics from rows; independent of :meth:`EvalReport.summary`."""
    scored = [r for r in rows if r.feasible]
    arr = np.array([list(r.errors) + [r.aggregated] for r in scored]).reshape(-1, n_specs + 1)
    return arr.mean(axis=0), np.median(arr, axis=0), arr.max(axis=0)
