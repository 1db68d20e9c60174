import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from idid.core import Dataset, PanelDataset
from idid.nuisance import (
    BaggedTreesBackend,
    ConvergenceError,
    DegenerateCellError,
    EmptyCellError,
    InsufficientDataError,
    crossfit,
    delta,
    double_difference,
    fit_logistic,
    fit_nonparametric,
    fit_panel,
    fit_parametric,
    floor_delta,
    fold_split,
    parse_formula,
)
from idid.simulation import Scenario, simulate_cross_section


def test_pi_close_to_quarter(main_data):
    # Pointwise at the covariate centre and averaged over the sample; far in
    # the tails slope noise alone moves the fit by more than 0.03.
    data, _ = main_data
    nuis = fit_parametric(data)
    assert np.max(np.abs(nuis.predict_pi_raw(np.zeros((1, 2))) - 0.25)) < 0.03
    avg = nuis.predict_pi_raw(data.covariates).mean(axis=0)
    assert np.max(np.abs(avg - 0.25)) < 0.03


def test_pi_sums_to_one(main_data):
    data, _ = main_data
    grid = np.random.default_rng(0).normal(scale=3, size=(500, 2))
    pi = fit_parametric(data).predict_pi_raw(grid)
    np.testing.assert_allclose(pi.sum(axis=(1, 2)), 1.0, atol=1e-8)


def test_constant_outcome_is_exact(main_data):
    data, _ = main_data
    flat = Dataset(data.x, data.a, np.full(data.n, 7.0), data.t, data.z)
    nuis = fit_parametric(flat)
    for t in (0, 1):
        for z in (0, 1):
            assert np.all(nuis.predict_mu("Y", t, z, data.covariates[:50]) == 7.0)


def test_degenerate_cell(main_data):
    data, _ = main_data
    a = data.a.copy()
    a[(data.t == 1) & (data.z == 0)] = 1
    with pytest.raises(DegenerateCellError, match=r"t=1, z=0"):
        fit_parametric(Dataset(data.x, a, data.y, data.t, data.z))


def test_empty_cell_named(main_data):
    data, _ = main_data
    keep = ~((data.t == 0) & (data.z == 1))
    with pytest.raises(EmptyCellError, match=r"t=0, z=1"):
        fit_parametric(data.subset(np.flatnonzero(keep)))


def test_separation_reports_iterations():
    x = np.linspace(-1, 1, 40)[:, None]
    with pytest.raises(ConvergenceError, match=r"\d+ iterations"):
        fit_logistic(x, (x[:, 0] > 0).astype(float))


def test_double_difference_arithmetic():
    cells = np.array([[1.0, 3.0], [2.0, 5.0]])  # [t, z]
    assert double_difference(cells) == 5 - 3 - 2 + 1


def test_floor_delta():
    d, k = floor_delta(np.array([0.0, 0.01, -0.01, 0.3]), 0.05)
    np.testing.assert_array_equal(d, [0.05, 0.05, -0.05, 0.3])
    assert k == 3


def test_delta_matches_cells(main_data):
    data, _ = main_data
    nuis = fit_parametric(data)
    x = data.covariates[:200]
    for target in ("A", "Y"):
        cells = np.empty((200, 2, 2))
        for t in (0, 1):
            for z in (0, 1):
                cells[:, t, z] = nuis.predict_mu(target, t, z, x)
        dd = cells[:, 1, 1] - cells[:, 0, 1] - cells[:, 1, 0] + cells[:, 0, 0]
        if target == "A":
            dd = floor_delta(dd, nuis.delta_floor)[0]
        np.testing.assert_array_equal(delta(nuis, target, x), dd)
        pred = nuis.predict(x)
        np.testing.assert_array_equal(pred.delta_a if target == "A" else pred.delta_y, dd)


def test_delta_a_sign_matches_monte_carlo(main_data):
    # Brute-force E[A | T, Z, X = 0] from the structural treatment models.
    rng = np.random.default_rng(2)
    v = rng.random(10**6)
    u = 2 * np.log(np.tan(np.pi * v / 2))
    cell = {
        (0, 0): expit(2 + 0.2 * u).mean(), (0, 1): expit(-5 + 0.2 * u).mean(),
        (1, 0): expit(-1.5 - 0.15 * u).mean(), (1, 1): expit(3.5 - 0.15 * u).mean(),
    }
    mc = cell[(1, 1)] - cell[(0, 1)] - cell[(1, 0)] + cell[(0, 0)]
    data, _ = main_data
    fitted = delta(fit_parametric(data), "A", data.covariates)
    assert np.sign(fitted.mean()) == np.sign(mc)
    assert mc > 0


def test_formula_restricts_columns(main_data):
    data, _ = main_data
    assert parse_formula("y ~ x2", ("x1", "x2")) == ("y", (1,))
    nuis = fit_parametric(data, ["y ~ x2", "a ~ x1 + x2", "tz ~ 1"])
    x = np.array([[0.0, 1.0], [5.0, 1.0]])
    # y no longer depends on x1
    np.testing.assert_allclose(nuis.predict_mu("Y", 1, 1, x)[0], nuis.predict_mu("Y", 1, 1, x)[1])
    with pytest.raises(ValueError, match="unknown covariate"):
        parse_formula("y ~ x9", ("x1", "x2"))


def test_coefficient_recovery_improves_with_n():
    alpha = np.array([0.5, -1.0, 2.0])
    errs = {}
    for n in (10**3, 10**4, 10**5):
        out = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(n, 2))
            y = (rng.random(n) < expit(alpha[0] + x @ alpha[1:])).astype(float)
            out.append(np.max(np.abs(fit_logistic(x, y).coef - alpha)))
        errs[n] = np.median(out)
    assert errs[10**3] >= errs[10**4] >= errs[10**5]


def test_bagged_trees_step_function():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2000, 2))
    y = np.where(x[:, 0] > 0.3, 5.0, -1.0)
    model = BaggedTreesBackend(n_trees=50).regression(x, y)
    assert np.mean((model.predict(x) - y) ** 2) <= 0.05 * y.var()


def test_bagged_trees_constant_target():
    x = np.random.default_rng(5).normal(size=(300, 2))
    pred = BaggedTreesBackend(n_trees=20).regression(x, np.full(300, 3.3)).predict(x)
    assert np.ptp(pred) < 1e-9


def test_bagged_trees_insufficient():
    data, _ = simulate_cross_section(Scenario("main", 10, 0))
    with pytest.raises(InsufficientDataError, match="insufficient data for backend config"):
        fit_nonparametric(data, config={"min_leaf": 50})


def test_nonparametric_predictions_in_range(main_data):
    data, _ = main_data
    pred = fit_nonparametric(data, config={"n_trees": 20}).predict(data.covariates[:300])
    assert np.all((pred.mu_a >= 0) & (pred.mu_a <= 1))
    np.testing.assert_allclose(pred.pi.sum(axis=(1, 2)), 1.0, atol=1e-8)


def test_fold_split_balanced_and_deterministic():
    f = fold_split(10**4, 4, seed=9)
    assert np.bincount(f).tolist() == [2500] * 4
    np.testing.assert_array_equal(f, fold_split(10**4, 4, seed=9))
    sizes = np.bincount(fold_split(103, 4, 1))
    assert sizes.max() - sizes.min() <= 1


def test_crossfit_four_folds():
    data, _ = simulate_cross_section(Scenario("main", 10**4, 3))
    cf = crossfit(data, 4, seed=1)
    assert cf.k == 4
    assert np.bincount(cf.fold_assignment).tolist() == [2500] * 4
    pred = cf.predict(data.covariates)
    # unit i uses the fit that excluded its fold
    i = 17
    own = cf.fits[cf.fold_assignment[i]].predict(data.covariates[i:i + 1])
    assert pred.mu_y[i, 1, 1] == own.mu_y[0, 1, 1]


def test_crossfit_leave_one_out():
    rng = np.random.default_rng(0)
    n = 40
    x = rng.normal(size=(n, 1))
    t = np.tile([0, 0, 1, 1], 10)
    z = np.tile([0, 1, 0, 1], 10)
    a = np.tile([0, 1, 1, 0, 1, 0, 0, 1], 5)
    data = Dataset(x, a, rng.normal(size=n), t, z)
    cf = crossfit(data, n, seed=0)
    assert cf.k == n
    pred = cf.predict(data.covariates)
    assert np.all(np.isfinite(pred.mu_y)) and np.all(np.isfinite(pred.pi))


def test_crossfit_empty_cell_names_fold():
    data, _ = simulate_cross_section(Scenario("main", 400, 3))
    idx = np.flatnonzero(~((data.t == 1) & (data.z == 1)))
    with pytest.raises(EmptyCellError, match=r"fold 1: .*t=1, z=1"):
        crossfit(data.subset(idx), 4, seed=0)


def test_out_of_fold_prediction_unchanged_by_permuting_own_fold():
    data, _ = simulate_cross_section(Scenario("main", 2000, 8))
    cf = crossfit(data, 4, seed=2)
    fold0 = np.flatnonzero(cf.fold_assignment == 0)
    perm = np.arange(data.n)
    perm[fold0] = fold0[np.random.default_rng(1).permutation(fold0.size)]
    # rows of fold 0 are reshuffled; fit 0 never saw them, so its
    # prediction at any fixed x is unchanged
    shuffled = data.subset(perm)
    x = data.covariates[fold0[:5]]
    refit = crossfit(shuffled, 4, seed=2)
    np.testing.assert_array_equal(refit.fold_assignment, cf.fold_assignment)
    np.testing.assert_allclose(refit.fits[0].predict(x).mu_y, cf.fits[0].predict(x).mu_y, rtol=1e-12)


def test_panel_fair_coin(panel_data):
    data, _ = panel_data
    fit = fit_panel(data)
    assert abs(fit.predict(np.zeros((1, 2))).pi_z[0] - 0.5) < 0.03
    assert abs(fit.predict(data.covariates).pi_z.mean() - 0.5) < 0.03


def test_panel_identities(panel_data):
    data, _ = panel_data
    same = PanelDataset(data.x, data.z, data.a0, data.y0, data.a1, data.y0)
    np.testing.assert_allclose(fit_panel(same).predict(data.covariates[:20]).dy, 0, atol=1e-10)
    ones = PanelDataset(data.x, data.z, np.zeros(data.n), data.y0, np.ones(data.n), data.y1)
    np.testing.assert_allclose(fit_panel(ones).predict(data.covariates[:20]).da, 1, atol=1e-10)


def test_panel_empty_group(panel_data):
    data, _ = panel_data
    with pytest.raises(EmptyCellError, match="z=1"):
        fit_panel(data.subset(np.flatnonzero(data.z == 0)))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(20, 200), st.integers(0, 2**31))
def test_fold_split_partitions(k, n, seed):
    f = fold_split(n, k, seed)
    counts = np.bincount(f, minlength=k)
    assert counts.sum() == n and counts.max() - counts.min() <= 1
