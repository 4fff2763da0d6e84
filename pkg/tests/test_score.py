import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize
from scipy.special import expit, logit

from acdesign.data import Dataset, RngSpec
from acdesign.errors import (
    BadFraction,
    DimensionMismatch,
    EmptyPilot,
    MissingOutcome,
    NoControls,
    NoVariation,
    SeparationWarning,
)
from acdesign.score import (
    PilotSplit,
    ScoreModel,
    deviance,
    dump_models,
    fit_lasso,
    fit_logistic_irls,
    fit_prognostic,
    fit_propensity,
    lambda_max,
    load_models,
    predict,
    read_scored_csv,
    score_dataset,
    score_from_truth,
    split_pilot,
    write_scored_csv,
)
from acdesign.simulate import SimConfig, generate, link


def toy(n, p, controls, seed=0):
    g = np.random.default_rng(seed)
    T = np.zeros(n, dtype=int)
    T[controls:] = 1
    return Dataset(g.standard_normal((n, p)), T, g.standard_normal(n))


# --- pilot split -------------------------------------------------------------


def test_split_count_matches_reported_pilot_and_analysis_sizes():
    n, controls = 301_438, 294_494
    d = Dataset(np.zeros((n, 1)), np.r_[np.zeros(controls, int), np.ones(n - controls, int)])
    s = split_pilot(d, 0.05, rng=RngSpec(1))
    assert abs(s.pilot_indices.size - 14_726) <= 2
    assert abs(s.analysis_indices.size - 286_712) <= 2


def test_zero_fraction_keeps_everyone():
    d = toy(50, 2, 30)
    s = split_pilot(d, 0.0)
    assert s.pilot_indices.size == 0
    np.testing.assert_array_equal(s.analysis_indices, np.arange(50))


@given(
    n=st.integers(2, 200),
    frac=st.floats(0.0, 0.99),
    seed=st.integers(0, 2**32),
    treated_share=st.floats(0.0, 0.9),
)
def test_split_properties(n, frac, seed, treated_share):
    controls = max(1, int(n * (1 - treated_share)))
    d = toy(n, 1, controls, seed % 1000)
    s = split_pilot(d, frac, rng=RngSpec(seed))
    pilot, rest = set(s.pilot_indices.tolist()), set(s.analysis_indices.tolist())
    assert not pilot & rest and pilot | rest == set(range(n))
    assert np.all(d.T[s.pilot_indices] == 0)
    assert len(pilot) == int(np.ceil(round(frac * controls, 9)))


def test_ceiling_is_not_fooled_by_float_error():
    # 0.1 * 30 evaluates to 3.0000000000000004
    d = toy(40, 1, 30)
    assert split_pilot(d, 0.1).pilot_indices.size == 3


def test_stratified_split_allocates_by_largest_remainder():
    n = 100
    strata = np.repeat([0.0, 1.0, 2.0], [50, 30, 20])
    d = Dataset(strata[:, None], np.zeros(n, int), covariate_names=["state"])
    s = split_pilot(d, 0.15, strata="state", rng=RngSpec(3))
    counts = np.bincount(strata[s.pilot_indices].astype(int), minlength=3)
    # 15 split as 7.5 / 4.5 / 3.0 -> ties broken towards the first stratum
    assert counts.tolist() == [8, 4, 3]
    assert s.strata_column == "state"


def test_split_errors():
    with pytest.raises(BadFraction):
        split_pilot(toy(10, 1, 5), 1.0)
    with pytest.raises(BadFraction):
        split_pilot(toy(10, 1, 5), -0.1)
    with pytest.raises(NoControls):
        split_pilot(toy(10, 1, 0), 0.1)


def test_split_is_reproducible():
    d = toy(300, 1, 200)
    a = split_pilot(d, 0.2, rng=RngSpec(5)).pilot_indices
    b = split_pilot(d, 0.2, rng=RngSpec(5)).pilot_indices
    c = split_pilot(d, 0.2, rng=RngSpec(6)).pilot_indices
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# --- propensity (IRLS) ------------------------------------------------------------


def _ml_oracle(X, t):
    # independent maximum-likelihood fit by quasi-Newton on the raw scale
    A = np.column_stack([np.ones(len(t)), X])

    def nll(b):
        eta = A @ b
        return float(np.sum(np.logaddexp(0, eta) - t * eta)) / len(t)

    def grad(b):
        return A.T @ (expit(A @ b) - t) / len(t)

    return minimize(nll, np.zeros(A.shape[1]), jac=grad, method="BFGS", options={"gtol": 1e-10}).x


@pytest.fixture(scope="module")
def big_linear():
    return generate(SimConfig(n=100_000, c1=1.0, c0=0.5, rho=0.3, rng=RngSpec(21)))


def test_irls_recovers_truth(big_linear):
    data, _ = big_linear
    m = fit_propensity(data)
    b, b0 = m.original_coefficients(), m.original_intercept()
    assert m.converged
    assert 0.95 <= b[0] <= 1.05
    assert -0.55 <= b0 <= -0.45
    assert np.all(np.abs(b[1:]) <= 0.05)
    oracle = _ml_oracle(data.X, data.T.astype(float))
    np.testing.assert_allclose(np.r_[b0, b], oracle, atol=1e-4)


def test_irls_loglik_is_monotone(big_linear):
    data, _ = big_linear
    h = np.array(fit_propensity(data).diagnostics["loglik_history"])
    assert np.all(np.diff(h) >= -1e-9 * np.abs(h[1:]))


def test_irls_small_problem_matches_oracle():
    g = np.random.default_rng(3)
    X = g.standard_normal((300, 3)) * [1.0, 5.0, 0.1]
    t = (g.random(300) < expit(0.4 * X[:, 0] - 0.1 * X[:, 1] + 3 * X[:, 2])).astype(float)
    m = fit_logistic_irls(X, t)
    oracle = _ml_oracle(X, t)
    np.testing.assert_allclose(np.r_[m.original_intercept(), m.original_coefficients()], oracle, atol=1e-5)


def test_single_class_is_rejected():
    d = toy(20, 2, 0)
    with pytest.raises(NoVariation):
        fit_propensity(d)


def test_separation_is_flagged():
    x = np.linspace(-1, 1, 20)
    x = x[x != 0]
    X = np.column_stack([x, np.random.default_rng(0).standard_normal(x.size)])
    d = Dataset(X, (x > 0).astype(int))
    with pytest.warns(SeparationWarning):
        m = fit_propensity(d)
    assert not m.converged and m.diagnostics["separation"]


def test_rank_deficient_design_uses_ridge():
    g = np.random.default_rng(1)
    x = g.standard_normal(200)
    d = Dataset(np.column_stack([x, 2 * x]), (g.random(200) < expit(x)).astype(int))
    with pytest.warns(RuntimeWarning, match="ridge"):
        m = fit_propensity(d)
    assert m.diagnostics["ridge"] > 0
    assert np.all(np.isfinite(m.coefficients))


# --- lasso ------------------------------------------------------------------------


def _problem(seed, family, n=120, p=8):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p)) * g.uniform(0.5, 3.0, p) + g.normal(0, 2, p)
    beta = np.where(np.arange(p) < 3, g.normal(0, 1, p), 0.0)
    eta = (X - X.mean(0)) / X.std(0) @ beta
    if family == "linear":
        y = eta + g.standard_normal(n)
    else:
        y = (g.random(n) < expit(eta)).astype(float)
    return X, y


def _kkt_violation(model, X, y):
    Xs = (X - model.center) / model.scale
    eta = model.intercept + Xs @ model.coefficients
    resid = y - (eta if model.family == "linear" else expit(eta))
    g = Xs.T @ resid / len(y)
    lam, b = model.lam, model.coefficients
    active = b != 0
    v = np.zeros_like(g)
    v[active] = np.abs(g[active] - lam * np.sign(b[active]))
    v[~active] = np.maximum(np.abs(g[~active]) - lam, 0)
    return float(max(v.max(), abs(resid.mean())))


@pytest.mark.parametrize("family", ["linear", "logistic"])
def test_kkt_conditions_along_path(family):
    worst = 0.0
    for seed in range(20):
        X, y = _problem(seed, family)
        Xs = (X - X.mean(0)) / X.std(0)
        lmax = lambda_max(Xs, y)
        for frac in (1.2, 0.9, 0.5, 0.2, 0.05, 0.01, 1e-3):
            m = fit_lasso(X, y, family, lam=frac * lmax)
            worst = max(worst, _kkt_violation(m, X, y))
    assert worst <= 1e-6


def test_zero_penalty_is_least_squares():
    for seed in range(5):
        X, y = _problem(seed, "linear", n=200)
        m = fit_lasso(X, y, "linear", lam=0.0)
        A = np.column_stack([np.ones(len(y)), X])
        ols = np.linalg.lstsq(A, y, rcond=None)[0]
        np.testing.assert_allclose(m.original_coefficients(), ols[1:], atol=1e-6)
        assert abs(m.original_intercept() - ols[0]) <= 1e-6


@pytest.mark.parametrize("family", ["linear", "logistic"])
def test_full_shrinkage(family):
    X, y = _problem(4, family)
    Xs = (X - X.mean(0)) / X.std(0)
    m = fit_lasso(X, y, family, lam=lambda_max(Xs, y) * 1.0)
    assert np.all(m.coefficients == 0)
    expected = y.mean() if family == "linear" else logit(y.mean())
    assert m.intercept == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("family", ["linear", "logistic"])
def test_objective_never_increases(family):
    X, y = _problem(7, family)
    Xs = (X - X.mean(0)) / X.std(0)
    m = fit_lasso(X, y, family, lam=0.05 * lambda_max(Xs, y))
    h = np.array(m.diagnostics["objective_history"])
    assert len(h) > 2
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[:-1]))


@pytest.mark.parametrize("family", ["linear", "logistic"])
@pytest.mark.parametrize("lam", [0.02, "cv"])
def test_standardization_invariance(family, lam):
    X, y = _problem(9, family)
    c = np.array([1e3, 1.0, 1e-3, 7.0, 1.0, 1.0, 0.5, 2.0])
    a = fit_lasso(X, y, family, lam=lam, rng=RngSpec(1))
    b = fit_lasso(X * c, y, family, lam=lam, rng=RngSpec(1))
    np.testing.assert_allclose(a.linear_predictor(X), b.linear_predictor(X * c), atol=1e-8)


def test_cv_is_deterministic_and_on_grid():
    X, y = _problem(2, "linear")
    a = fit_lasso(X, y, "linear", rng=RngSpec(3))
    b = fit_lasso(X, y, "linear", rng=RngSpec(3))
    assert a.lam == b.lam
    grid = a.diagnostics["cv_lambdas"]
    assert len(grid) == 50
    assert grid[-1] / grid[0] == pytest.approx(1e-4)
    assert a.lam in set(np.asarray(grid).tolist())
    assert int(np.argmin(a.diagnostics["cv_deviance"])) == list(grid).index(a.lam)


def _pilot_of(seed, controls=5000):
    data, _ = generate(SimConfig(n=12_000, c1=1, c0=1, rho=0.5, rng=RngSpec(seed)))
    nc = int((data.T == 0).sum())
    return data, split_pilot(data, controls / nc, rng=RngSpec(seed, 1))


@pytest.mark.parametrize("seed", range(5))
def test_cv_lasso_recovers_prognostic_coefficients(seed):
    data, pilot = _pilot_of(seed)
    assert pilot.pilot_indices.size == 5000
    b = fit_prognostic(data, pilot, "linear", "cv", RngSpec(seed, 2)).original_coefficients()
    assert 0.4 <= b[0] <= 0.6 and 0.76 <= b[1] <= 0.96
    assert np.all(np.abs(b[2:]) < np.abs(b[:2]).min())
    # oracle: unpenalized regression on ten times as many controls
    big, _ = generate(SimConfig(n=50_000, rho=0.5, c1=0.0, c0=0.0, rng=RngSpec(seed, 9)))
    A = np.column_stack([np.ones(big.n), big.X])
    ols = np.linalg.lstsq(A, big.Y, rcond=None)[0]
    assert 0.4 <= ols[1] <= 0.6 and 0.76 <= ols[2] <= 0.96


@pytest.mark.parametrize("seed", range(5))
def test_one_standard_error_rule_selects_exact_support(seed):
    data, pilot = _pilot_of(seed)
    b = fit_prognostic(data, pilot, "linear", "cv", RngSpec(seed, 2), cv_rule="1se").original_coefficients()
    assert np.flatnonzero(b).tolist() == [0, 1]


# --- prognostic fitting discipline ---------------------------------------------------


def test_prognostic_fit_reads_only_pilot_rows():
    g = np.random.default_rng(0)
    n = 400
    X = g.standard_normal((n, 3))
    T = (g.random(n) < 0.4).astype(int)
    Y = X @ [1.0, -0.5, 0.0] + g.standard_normal(n)
    clean = Dataset(X, T, Y)
    pilot = split_pilot(clean, 0.3, rng=RngSpec(2))
    # poison everything outside the pilot
    Xp, Yp = X.copy(), Y.copy()
    Xp[T == 1] = np.nan
    Yp[pilot.analysis_indices] = np.nan
    poisoned = Dataset(Xp, T, Yp)
    a = fit_prognostic(clean, pilot, "linear", 0.01)
    b = fit_prognostic(poisoned, pilot, "linear", 0.01)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)


def test_prognostic_errors():
    d = toy(30, 2, 20)
    with pytest.raises(EmptyPilot):
        fit_prognostic(d, split_pilot(d, 0.0))
    no_y = Dataset(d.X, d.T)
    with pytest.raises(MissingOutcome):
        fit_prognostic(no_y, split_pilot(no_y, 0.5))


# --- prediction -----------------------------------------------------------------------


def test_zero_model_predicts_one_half():
    m = ScoreModel("propensity", "logistic", np.zeros(2), 0.0, np.zeros(2), np.ones(2))
    np.testing.assert_array_equal(predict(m, toy(5, 2, 3)), 0.5)


def test_predict_dimension_mismatch():
    m = ScoreModel("propensity", "logistic", np.zeros(2), 0.0, np.zeros(2), np.ones(2))
    with pytest.raises(DimensionMismatch):
        predict(m, toy(5, 3, 3))


def test_training_deviance_is_reproduced(big_linear):
    data, _ = big_linear
    idx = np.arange(5000)
    m = fit_propensity(data, idx)
    assert deviance(m, data, idx) == pytest.approx(m.diagnostics["deviance"], abs=1e-8)
    p = predict(m, data, idx)
    assert np.all((p > 0) & (p < 1))


def test_extrapolation_to_treated_units():
    data, _ = generate(SimConfig(n=2000, c1=1, c0=0, rho=0.5, rng=RngSpec(1)))
    pilot = split_pilot(data, 0.3, rng=RngSpec(1))
    m = fit_prognostic(data, pilot, "linear", "cv", RngSpec(2))
    treated = np.flatnonzero(data.T == 1)
    assert np.all(np.isfinite(predict(m, data, treated)))


# --- scored datasets ---------------------------------------------------------------------


def test_score_dataset_restricts_to_analysis_set(tmp_path):
    data, _ = generate(SimConfig(n=1500, c1=1, c0=0.5, rho=0.5, rng=RngSpec(4)))
    pilot = split_pilot(data, 0.1, rng=RngSpec(4))
    pm = fit_propensity(data)
    gm = fit_prognostic(data, pilot, "linear", "cv", RngSpec(5))
    scored = score_dataset(data, pilot, pm, gm)
    assert scored.n == pilot.analysis_indices.size
    assert not set(scored.index.tolist()) & set(pilot.pilot_indices.tolist())
    np.testing.assert_allclose(scored.propensity, expit(scored.propensity_lp))

    f = tmp_path / "scored.csv"
    write_scored_csv(scored, f)
    back = read_scored_csv(f)
    assert back.data == scored.data
    for attr in ("index", "propensity", "prognostic", "propensity_lp"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(scored, attr))

    j = tmp_path / "scores.json"
    dump_models({"propensity": pm, "prognostic": gm}, j)
    payload = json.loads(j.read_text())
    assert list(payload["prognostic"]) == [
        "kind", "family", "coefficients", "intercept", "standardization", "lambda", "diagnostics",
    ]
    loaded = load_models(j)
    np.testing.assert_array_equal(loaded["prognostic"].linear_predictor(data.X), gm.linear_predictor(data.X))


def test_true_score_bypass():
    data, truth = generate(SimConfig(n=300, c1=1, c0=0.2, rho=0.4, eta=0.5, rng=RngSpec(8)))
    idx = np.arange(0, 300, 3)
    s = score_from_truth(data, truth, idx)
    np.testing.assert_array_equal(s.propensity, link(truth.phi[idx]))
    np.testing.assert_array_equal(s.prognostic, truth.psi[idx])
    obs = score_from_truth(data, truth, idx, observed_only=True)
    np.testing.assert_array_equal(obs.prognostic, truth.psi_observed[idx])
    assert s.source == "true" and obs.source == "observed"
