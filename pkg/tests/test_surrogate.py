import numpy as np
import pandas as pd
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dhsflow.data import split_7_1
from dhsflow.experiments import synthetic_dataset
from dhsflow.plant import PUMP_COEFFS, PlantParams, pump_flow, steady_heat_batch
from dhsflow.surrogate import (MODEL_INPUTS, MlpRegressor, SchemaError, arch_sweep,
                               fit_pump_poly, fit_surrogate, fit_surrogate_set,
                               load_surrogates, predict_q, save_surrogates,
                               select_architecture)


@pytest.fixture(scope="module")
def season():
    return synthetic_dataset(96, seed=3, noise=True)


@pytest.fixture(scope="module")
def fitted(season):
    train, test = split_7_1(season)
    return fit_surrogate_set(train, (4, 64), 4000, seed=0), train, test


def test_schema_matches_model_table():
    assert MODEL_INPUTS == {"tdp": ("flow1", "flow2", "t1_supply"),
                            "swts": ("t1_supply", "flow1", "flow2"),
                            "tds": ("swts", "flow2", "t_out")}


def test_regressor_is_a_clonable_estimator():
    reg = MlpRegressor(hidden_layers=(8,), steps=10, seed=4)
    assert clone(reg).get_params() == reg.get_params()
    with pytest.raises(NotFittedError):
        reg.predict(np.zeros((2, 3)))


def test_constant_target_is_learned():
    X = np.random.default_rng(0).normal(size=(200, 3))
    reg = MlpRegressor((16,), steps=300, seed=0).fit(X, np.full(200, 4.2))
    assert np.allclose(reg.predict(X), 4.2, atol=1e-9)


def test_regressor_seeded_and_rejects_width():
    X = np.random.default_rng(0).normal(size=(50, 3))
    y = X @ [1.0, -2.0, 0.5]
    a = MlpRegressor((8,), steps=50, seed=1).fit(X, y).predict(X)
    b = MlpRegressor((8,), steps=50, seed=1).fit(X, y).predict(X)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        MlpRegressor((8,), steps=50).fit(X, y).predict(X[:, :2])


def test_scaling_uses_training_rows_only(fitted, season):
    surro, train, _ = fitted
    cols = list(MODEL_INPUTS["tds"])
    assert np.array_equal(surro.tds.x_mean_, train[cols].to_numpy().mean(axis=0))
    assert not np.allclose(surro.tds.x_mean_, season[cols].to_numpy().mean(axis=0),
                           rtol=1e-12, atol=0)


def test_missing_column_is_schema_error(season):
    with pytest.raises(SchemaError):
        fit_surrogate(season.drop(columns="swts"), "tds", steps=5)


def test_tds_golden_fit():
    """Noise-free season, 4 x 64 network, 20000 steps: test MSE recorded at 2.6e-4."""
    data = synthetic_dataset(96, seed=0, noise=False)
    reg, mse, mae = fit_surrogate(data, "tds", (4, 64), 20000, seed=0)
    assert mse <= 0.05
    assert mse == pytest.approx(2.5976e-4, rel=0.05)
    assert len(reg.net_.weights) == 5


def test_pump_fit_recovers_generator():
    f = np.linspace(20, 50, 25)
    coeffs = fit_pump_poly(np.column_stack([f, pump_flow(f)]))
    assert np.allclose(coeffs, PUMP_COEFFS, rtol=0, atol=1e-9)
    assert np.allclose(fit_pump_poly([(1, 1), (2, 2), (3, 3)]), (0, 1, 0), atol=1e-12)
    with pytest.raises(np.linalg.LinAlgError):
        fit_pump_poly([(20, 1), (20, 2), (30, 3), (30, 4)])


def test_pump_fit_with_noise():
    rng = np.random.default_rng(11)
    f = rng.uniform(20, 50, 50)
    coeffs = fit_pump_poly(np.column_stack([f, pump_flow(f) + rng.normal(0, 2, 50)]))
    assert np.allclose(coeffs, PUMP_COEFFS, rtol=0.05)


def test_zero_networks_give_zero_heat(fitted):
    surro, _, test = fitted
    zeroed = type(surro)(*(_zeroed(r) for r in (surro.tdp, surro.swts, surro.tds)),
                         surro.pump_coeffs)
    p = predict_q(zeroed, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    assert np.all(p.q1 == 0) and np.all(p.q2 == 0)


def _zeroed(reg):
    r = MlpRegressor(reg.hidden_layers)
    r.__dict__.update({k: v for k, v in reg.__dict__.items() if k.endswith("_")})
    r._single_output = True
    r.net_ = reg.net_.copy()
    for p in r.net_.params():
        p[...] = 0.0
    r.y_mean_ = np.zeros(1)
    return r


def test_heat_is_linear_in_tdp(fitted):
    surro, _, test = fitted
    row = test.iloc[:5]
    p = predict_q(surro, row.t1_supply, row.t_out, row.flow1, row.pump_f)
    assert np.allclose(p.q1, surro.c * row.flow1.to_numpy() * p.tdp, rtol=1e-14)
    assert np.all(p.tdp >= 0) and np.all(p.tds >= 0)


def test_chain_tracks_plant_within_noise(fitted):
    surro, _, test = fitted
    plant = PlantParams()
    p = predict_q(surro, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    q1, q2, _, _ = steady_heat_batch(plant, test.t1_supply, test.flow1,
                                     pump_flow(test.pump_f), test.t_out)
    for pred, truth, recorded in ((p.q1, q1, test.q1), (p.q2, q2, test.q2)):
        noise = np.std(recorded.to_numpy() - truth)
        assert np.mean(np.abs(pred - truth) <= 3 * noise) >= 0.9


def test_extrapolation_flag(fitted):
    surro, _, test = fitted
    row = test.iloc[:1]
    assert not predict_q(surro, row.t1_supply, row.t_out, row.flow1, row.pump_f).any_extrapolated
    far = predict_q(surro, 200.0, row.t_out, row.flow1, row.pump_f)
    assert far.any_extrapolated


def test_prediction_is_pure(fitted):
    surro, _, test = fitted
    a = predict_q(surro, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    b = predict_q(surro, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    assert np.array_equal(a.q1, b.q1) and np.array_equal(a.q2, b.q2)


def test_surrogate_persistence(fitted, tmp_path):
    surro, _, test = fitted
    save_surrogates(surro, tmp_path / "s")
    back = load_surrogates(tmp_path / "s")
    assert back.pump_coeffs == surro.pump_coeffs
    a = predict_q(surro, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    b = predict_q(back, test.t1_supply, test.t_out, test.flow1, test.pump_f)
    assert np.array_equal(a.q1, b.q1) and np.array_equal(a.q2, b.q2)


def test_selection_rule():
    rows = [(2, 50, 0.5, 1.0), (3, 100, 0.2, 1.4), (5, 300, 0.1, 9.0)]
    assert select_architecture(rows) == 1
    assert select_architecture(rows[:1]) == 0
    tie = [(3, 100, 0.2, 1.0), (3, 50, 0.2, 1.0)]
    assert select_architecture(tie) == 1
    with pytest.raises(ValueError):
        select_architecture([])


def test_sweep_table_and_reproducible_cost(season):
    grid = [(1, 8), (2, 8)]
    a = arch_sweep(season, "tds", grid, 40, seed=0, timing="flops")
    b = arch_sweep(season, "tds", grid, 40, seed=0, timing="flops")
    frame = a.to_frame()
    assert list(frame.columns) == ["layers", "nodes", "final_loss", "train_flops", "chosen"]
    pd.testing.assert_frame_equal(frame, b.to_frame())
    assert frame.chosen.sum() == 1
    one = arch_sweep(season, "tds", [(2, 8)], 10, timing="wall")
    assert one.chosen == 0 and "wall_time" in one.to_frame()
