import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mglstm.diagnostics import (PredictionRun, ScalerMismatchWarning, contribution_alpha,
                                impulse_experiment, noise_sweep, nrmse, relaxation_timescale,
                                run_nrmse, sequential_predict, zeroth_order)
from mglstm.errors import DegenerateRelaxationError, UndefinedAlphaError
from mglstm.lstm_core import Model, init_params, zero_params
from mglstm.mg_dynamics import MgConfig, add_noise, fit_scaler, integrate_mg
from mglstm.training import TrainConfig, train


@pytest.fixture(scope="module")
def traj():
    return integrate_mg(MgConfig(t_end=1000.0 + 11000.0))


@pytest.fixture(scope="module")
def random_model(traj):
    params = init_params(6, seed=21, init_scale=1.0)
    return Model(params, fit_scaler(traj), 0.0, 21)


@pytest.fixture(scope="module")
def small_trained(traj):
    cfg = TrainConfig(n_cells=6, seq_len=50, batch_size=8, n_epochs=100, max_steps=300,
                      learning_rate=1e-2, seed=1)
    return train(0.0, add_noise(traj.window(0, 3000), 0.0, 0), cfg).model


def test_constant_zero_model(traj):
    model = Model(zero_params(4), fit_scaler(traj))
    run = sequential_predict(model, traj.values[:50])
    np.testing.assert_allclose(run.preds, model.scaler.invert(0.0))


def test_feeds_observations_not_predictions(traj, random_model):
    obs = add_noise(traj.window(0, 300), 0.32, seed=1).values
    run = sequential_predict(random_model, obs)
    # perturbing a late observation must leave earlier forecasts untouched
    obs2 = obs.copy()
    obs2[200] += 0.3
    run2 = sequential_predict(random_model, obs2)
    np.testing.assert_array_equal(run.preds[:200], run2.preds[:200])
    assert run.preds[200] != run2.preds[200]


def test_determinism(traj, random_model):
    a = sequential_predict(random_model, traj.values[:200], capture_traces=True)
    b = sequential_predict(random_model, traj.values[:200], capture_traces=True)
    assert np.array_equal(a.preds, b.preds) and np.array_equal(a.wh_h, b.wh_h)


def test_scaler_mismatch_warning(traj, random_model):
    far = traj.values[:20] + 10.0
    with pytest.warns(ScalerMismatchWarning):
        sequential_predict(random_model, far, nu=traj.nu)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sequential_predict(random_model, traj.values[:20], nu=traj.nu)


def test_nrmse_basics():
    truth = np.array([0.5, 1.0, 1.5])
    assert nrmse(truth, truth, 0.3) == 0.0
    assert nrmse(truth + 0.3, truth, 0.3) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        nrmse(truth[:2], truth, 0.3)


def test_zeroth_order_shift():
    np.testing.assert_array_equal(zeroth_order([1.0, 2.0, 3.0]), [1.0, 2.0])


def test_zeroth_order_noiseless_oracle(traj):
    # direct evaluation from the sampled series: RMS one-step change / nu
    v = traj.values
    expected = math.sqrt(sum((v[k + 1] - v[k]) ** 2 for k in range(len(v) - 1)) / (len(v) - 1))
    assert nrmse(zeroth_order(v), v[1:], traj.nu) == pytest.approx(expected / traj.nu, rel=1e-12)


@pytest.mark.parametrize("sigma, lo, hi", [(0.02, 0.13, 0.165), (0.64, 0.60, 0.72)])
def test_zeroth_order_paper_levels(traj, sigma, lo, hi):
    y = add_noise(traj, sigma, seed=77).values
    e = nrmse(zeroth_order(y), traj.values[1:], traj.nu)
    assert lo <= e <= hi


def _run(wh, wy):
    wh, wy = np.asarray(wh, float), np.asarray(wy, float)
    return PredictionRun(np.zeros(len(wh)), np.zeros(len(wh)), wh_h=wh, wy_y=wy)


def test_alpha_hand_built():
    res = contribution_alpha(_run([[1, 1], [3, -1]], [[1, -1], [1, 3]]))
    terms = [1 / 2, 1 / 2, 3 / 4, 1 / 4]
    assert res.alpha == sum(terms) / 4 == 0.5
    assert res.ratio == 1.0 and res.n_skipped == 0


def test_alpha_limits():
    assert contribution_alpha(_run([[0.0, 0.0]], [[0.4, -0.1]])).alpha == 0.0
    res = contribution_alpha(_run([[0.2, -0.3]], [[0.0, 0.0]]))
    assert res.alpha == 1.0 and res.ratio_overflow
    skipped = contribution_alpha(_run([[0.0, 1.0]], [[0.0, 1.0]]))
    assert skipped.n_skipped == 1 and skipped.alpha == 0.5
    with pytest.raises(UndefinedAlphaError):
        contribution_alpha(_run([[0.0, 0.0]], [[0.0, 0.0]]))


def test_alpha_zero_data_weight(traj):
    params = init_params(4, seed=5, init_scale=1.0)
    params.W_y[:] = 0.0
    model = Model(params, fit_scaler(traj))
    run = sequential_predict(model, traj.values[:100], capture_traces=True)
    res = contribution_alpha(run, skip=1)
    assert res.alpha == 1.0 and math.isinf(res.ratio)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**31))
def test_alpha_bounds(t, n, seed):
    rng = np.random.default_rng(seed)
    res = contribution_alpha(_run(rng.normal(size=(t, n)), rng.normal(size=(t, n))),
                             keep_terms=True)
    assert 0.0 <= res.alpha <= 1.0
    assert np.all((res.per_step >= 0) & (res.per_step <= 1))
    assert res.ratio == pytest.approx(res.alpha / (1 - res.alpha))


def test_lambda_single_term():
    e_mu, e_0 = 0.1, 0.9
    profile = np.full(150, e_mu)
    profile[0] = e_0
    assert relaxation_timescale(profile, e_mu) == 1.0


def test_lambda_geometric_closed_form():
    r, e_mu, e_0 = 0.8, 0.05, 1.3
    profile = e_mu + (e_0 - e_mu) * r ** np.arange(150)
    closed = (1 - r**150) / (1 - r)
    assert relaxation_timescale(profile, e_mu) == pytest.approx(closed, abs=1e-9)
    assert closed == pytest.approx(5.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=149, max_size=149), st.floats(0.01, 0.5),
       st.floats(0.1, 3.0))
def test_lambda_bounds(fractions, e_mu, height):
    profile = np.concatenate([[e_mu + height], e_mu + height * np.array(fractions)])
    lam = relaxation_timescale(profile, e_mu)
    assert 1.0 - 1e-12 <= lam <= 150.0 + 1e-9


def test_lambda_degenerate():
    with pytest.raises(DegenerateRelaxationError):
        relaxation_timescale(np.full(150, 0.2), 0.2)


def test_impulse_ignoring_input_is_degenerate(traj):
    params = init_params(4, seed=2, init_scale=1.0)
    params.W_y[:] = 0.0
    model = Model(params, fit_scaler(traj))
    with pytest.raises(DegenerateRelaxationError):
        impulse_experiment(model, traj.window(0, 2000), n_ensembles=10)


def test_impulse_windows_and_profile(traj, small_trained):
    model = small_trained
    clean = traj.window(0, 66 * 150 + 1)
    res = impulse_experiment(model, clean)
    assert res.n_ensembles == 65
    assert res.e_n.shape == (150,)
    assert np.all(res.e_n >= 0)
    assert res.e_0 == res.e_n[0]
    # warm-up kicks are applied too, so the very first forecast already sees an impulse
    base = sequential_predict(model, clean.values)
    assert res.run.preds[0] != base.preds[0]
    # kicks land on every period boundary up to the last measured window
    offsets = np.zeros(len(clean))
    offsets[::150] = 1.0
    offsets[66 * 150:] = 0.0
    manual = sequential_predict(model, clean.values, offsets=offsets)
    np.testing.assert_array_equal(manual.preds, res.run.preds)
    # hand recomputation of e_0 from the run
    kicks = np.arange(150, len(clean) - 150, 150)
    err0 = res.run.preds[kicks] - clean.values[kicks + 1]
    assert res.e_0 == pytest.approx(np.sqrt(np.mean(err0**2)) / clean.nu, rel=1e-12)
    assert res.e_0_impulse_units == pytest.approx(
        res.e_0 * clean.nu / model.scaler.span, rel=1e-12)
    assert res.lam == pytest.approx(relaxation_timescale(res.e_n, res.e_mu_baseline))
    assert 1.0 <= res.lam <= 150.0
    # the unperturbed baseline is measured on exactly the impulse-window samples
    idx = kicks[:, None] + np.arange(150)
    assert res.e_mu_baseline == pytest.approx(
        nrmse(base.preds[idx], clean.values[idx + 1], clean.nu), rel=1e-12)


def test_impulse_ensemble_count(traj, small_trained):
    res = impulse_experiment(small_trained, traj.window(0, 66 * 150 + 1), n_ensembles=10)
    assert res.n_ensembles == 10
    with pytest.raises(ValueError):
        impulse_experiment(small_trained, traj.window(0, 1000), n_ensembles=10)


def test_impulse_requires_noiseless(traj, random_model):
    with pytest.raises(ValueError):
        impulse_experiment(random_model, add_noise(traj.window(0, 2000), 0.1, seed=1))


def test_noise_sweep_shape_and_fresh_noise(traj, random_model):
    other = Model(random_model.params, random_model.scaler, 0.64, 1)
    ev = traj.window(0, 1500)
    table = noise_sweep([random_model, other], ev, [0.0, 0.32], seed=3)
    assert table.shape == (2, 2)
    # same parameters, different train_sigma label: noiseless column identical, noisy one not
    assert table[0, 0] == table[1, 0]
    assert table[0, 1] != table[1, 1]


def test_refitting_scaler_changes_error(traj, random_model):
    # the evaluation must reuse the training scaler; a re-fit on test data is a different map
    ev = traj.window(5000, 6000)
    refit = Model(random_model.params, fit_scaler(ev.values))
    assert refit.scaler != random_model.scaler
    e_train_scaler = run_nrmse(sequential_predict(random_model, ev.values, ev.values), ev.nu)
    e_refit = run_nrmse(sequential_predict(refit, ev.values, ev.values), ev.nu)
    assert e_train_scaler != pytest.approx(e_refit, rel=1e-6)
