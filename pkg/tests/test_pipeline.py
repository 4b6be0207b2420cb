import math

import pytest

from mmsizing import dataset, pipeline, rfmodel
from mmsizing.errors import DomainError, OscillationFailure
from mmsizing.oceangen import AnalyticSimulator, SimulatorAdapter
from mmsizing.regress import model as rm
from mmsizing.regress.networks import TrainConfig


@pytest.fixture(scope="module")
def cascode():
    return dataset.generate_dataset(dataset.builtin_plan("cascode"))


@pytest.fixture(scope="module")
def vco():
    return dataset.generate_dataset(dataset.builtin_plan("vco"))


def test_spec_errors_identity():
    ind, agg, flags = pipeline.spec_errors([1.0, -2.0], [1.0, -2.0])
    assert ind == [0.0, 0.0] and agg == 0.0 and flags == [False, False]


def test_spec_errors_values():
    ind, agg, _ = pipeline.spec_errors([3.0, 4.0], [3.0, 0.0])
    assert ind == [0.0, 1.0]
    assert agg == pytest.approx(4.0 / 5.0)
    _, agg_mean, _ = pipeline.spec_errors([3.0, 4.0], [3.0, 0.0], mode="mean")
    assert agg_mean == pytest.approx(0.5)


def test_spec_errors_zero_target_flagged():
    ind, _, flags = pipeline.spec_errors([0.0, 2.0], [0.5, 2.0])
    assert ind[0] == 0.5 and flags == [True, False]
    with pytest.raises(DomainError):
        pipeline.spec_errors([1.0], [1.0], mode="max")


def test_train_error_below_test_error(cascode):
    sp = dataset.split(cascode, 1)
    model = pipeline.train("rf", cascode, sp, TrainConfig(seed=1))
    sim = AnalyticSimulator()
    test = pipeline.evaluate(model, cascode, sp, sim)
    swapped = dataset.Split(sp.test, sp.train, sp.seed, 1 - sp.test_fraction)
    train = pipeline.evaluate(model, cascode, swapped, sim)
    assert train.median_error < test.median_error
    assert model.split == sp.to_dict()


def test_invalid_split_rejected(cascode):
    bad = dataset.Split((0, 1), (1, 2), 0, 0.2)
    with pytest.raises(DomainError):
        pipeline.train("rf", cascode, bad)


def test_training_log_is_deterministic(cascode):
    sp = dataset.split(cascode, 2)
    cfg = TrainConfig(max_iter=40, seed=2)
    a = pipeline.train("mlp", cascode, sp, cfg, dim_layers=[8, 8], num_layers=3)
    b = pipeline.train("mlp", cascode, sp, cfg, dim_layers=[8, 8], num_layers=3)
    assert a.history == b.history and len(a.history) == 40


def test_report_counts_and_determinism(vco, tmp_path):
    sp = dataset.split(vco, 7)
    model = pipeline.train("rf", vco, sp, TrainConfig(seed=7))
    sim = AnalyticSimulator()
    r1 = pipeline.evaluate(model, vco, sp, sim)
    r2 = pipeline.evaluate(model, vco, sp, sim)
    s = r1.summary()
    assert s["scored"] + s["excluded"] == len(sp.test)
    r1.write(tmp_path / "a.csv")
    r2.write(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.summary").read_bytes() == (tmp_path / "b.csv.summary").read_bytes()
    mean, median, worst = pipeline.summarize_rows(r1.rows, 2)
    assert median[-1] == pytest.approx(s["err.median"], rel=1e-12)
    assert worst[0] == pytest.approx(s["err.phase_noise.max"], rel=1e-12)


class FlakySimulator(SimulatorAdapter):
    """Fails on every other call."""

    blocks = rfmodel.BLOCKS

    def __init__(self):
        self.inner = AnalyticSimulator()
        self.config_hash = self.inner.config_hash
        self.calls = 0

    def run(self, p):
        self.calls += 1
        if self.calls % 2:
            raise OscillationFailure("startup condition violated")
        return self.inner.run(p)


def test_failed_rows_are_excluded(cascode):
    sp = dataset.split(cascode, 0, 0.5)
    model = pipeline.train("rf", cascode, sp)
    report = pipeline.evaluate(model, cascode, sp, FlakySimulator())
    s = report.summary()
    assert s["excluded"] == math.ceil(len(sp.test) / 2)
    assert s["scored"] + s["excluded"] == len(sp.test)
    assert all(not math.isnan(r.aggregated) for r in report.scored)
    assert "OscillationFailure" in report.to_csv()


def test_config_mismatch_detected(cascode):
    sp = dataset.split(cascode, 0)
    model = pipeline.train("rf", cascode, sp)
    other = AnalyticSimulator(rfmodel.DeviceConstants(k_gm=900.0))
    with pytest.raises(pipeline.ConfigMismatch):
        pipeline.evaluate(model, cascode, sp, other)


def test_lookup_sanity_is_exact(cascode):
    full = rm.fit("lookup", cascode)
    sp = dataset.split(cascode, 0)
    report = pipeline.evaluate(full, cascode, sp, AnalyticSimulator())
    assert report.summary()["err.max"] == 0.0


def test_inverse_design_within_test_error(vco):
    sp = dataset.split(vco, 7)
    model = pipeline.train("rf", vco, sp, TrainConfig(seed=7))
    sim = AnalyticSimulator()
    median = pipeline.evaluate(model, vco, sp, sim).median_error
    res = pipeline.inverse_design(model, vco.spec_vector(sp.train[0]), sim)
    assert res.feasible and res.aggregated <= max(median, 1e-12) * 5


def test_inverse_design_infeasible():
    vco = dataset.generate_dataset(dataset.builtin_plan("vco"))
    model = rm.fit("rf", vco, n_estimators=5)
    weak = AnalyticSimulator(rfmodel.DeviceConstants(k_gm=1.0))
    res = pipeline.inverse_design(model, vco.spec_vector(0), weak)
    assert not res.feasible and "startup" in res.message and res.achieved is None


def test_single_spec_aggregate_equals_individual(cascode):
    sp = dataset.split(cascode, 0)
    report = pipeline.evaluate(pipeline.train("rf", cascode, sp), cascode, sp, AnalyticSimulator())
    for row in report.scored:
        assert row.aggregated == pytest.approx(row.errors[0], rel=1e-12)


def test_error_scale_invariance():
    y, y_hat = [-110.0, 3e9], [-108.0, 2.5e9]
    ind, agg, _ = pipeline.spec_errors(y, y_hat)
    ind2, agg2, _ = pipeline.spec_errors([7 * v for v in y], [7 * v for v in y_hat])
    assert agg2 == pytest.approx(agg, rel=1e-12)
    assert ind2 == pytest.approx(ind, rel=1e-12)


def test_inverse_design_repeatable(vco):
    model = rm.fit("rf", vco, n_estimators=10)
    sim = AnalyticSimulator()
    a = pipeline.inverse_design(model, vco.spec_vector(3), sim)
    b = pipeline.inverse_design(model, vco.spec_vector(3), sim)
    assert a == b
