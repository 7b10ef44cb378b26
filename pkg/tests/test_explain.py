import itertools
import math

import numpy as np
import pytest

from macrocast.dates import QuarterDate
from macrocast.evaluation import PeriodSlice
from macrocast.explain import (
    Attribution,
    aggregate_importance,
    default_grouping,
    dependence_curve,
    shapley_exact,
    shapley_sampled,
    time_curve,
)
from macrocast.learners import Dataset, LossKind, ModelSpec, fit_random_forest, fit_tree


def oracle_shapley(predict, instance, background):
    """Independent implementation: itertools over subsets, direct weights."""
    d = len(instance)
    idx = list(range(d))

    def v(S):
        Z = np.array(background, dtype=float, copy=True)
        for i in S:
            Z[:, i] = instance[i]
        return float(np.mean(predict(Z)))

    phi = np.zeros(d)
    for i in idx:
        rest = [j for j in idx if j != i]
        for size in range(d):
            for S in itertools.combinations(rest, size):
                w = math.factorial(size) * math.factorial(d - size - 1) / math.factorial(d)
                phi[i] += w * (v(set(S) | {i}) - v(set(S)))
    return phi, v(set())


class LinearToy:
    def __init__(self, w):
        self.w = np.asarray(w, dtype=float)

    def predict(self, X):
        return np.atleast_2d(X) @ self.w


def test_linear_model_single_background_row():
    w = np.array([2.0, -1.0, 0.5])
    model = LinearToy(w)
    x = np.array([1.0, 2.0, 3.0])
    b = np.array([[0.5, 0.5, 0.5]])
    att = shapley_exact(model, x, b)
    assert att.phi == pytest.approx(w * (x - b[0]), abs=1e-12)
    assert att.base_value == pytest.approx(float(model.predict(b)[0]))


def test_unread_feature_gets_zero(rng):
    model = LinearToy([1.5, 0.0])  # second feature never read
    x = rng.normal(size=2)
    bg = rng.normal(size=(6, 2))
    att = shapley_exact(model, x, bg)
    assert att.phi[1] == pytest.approx(0.0, abs=1e-12)


def test_tree_matches_independent_enumeration_oracle(rng):
    X = rng.normal(size=(30, 3))
    y = X[:, 0] * 2 + (X[:, 1] > 0) * 3 + rng.normal(size=30)
    tree = fit_tree(Dataset(X, y, ("a", "b", "c")), LossKind.squared(), max_depth=2)
    x = X[4]
    bg = X[:4]
    att = shapley_exact(tree, x, bg)
    phi, base = oracle_shapley(tree.predict, x, bg)
    assert att.phi == pytest.approx(phi, abs=1e-12)
    assert att.base_value == pytest.approx(base, abs=1e-12)


def test_exact_efficiency(rng):
    X = rng.normal(size=(40, 4))
    y = rng.normal(size=40)
    forest = fit_random_forest(
        Dataset(X, y, tuple("abcd")),
        ModelSpec("random_forest", LossKind.squared(),
                  {"n_trees": 10, "max_depth": 2, "min_leaf": 2, "feature_fraction": 0.75}, seed=3),
    )
    for i in range(5):
        att = shapley_exact(forest, X[i], X[10:30])
        assert att.reconstructed == pytest.approx(att.prediction, abs=1e-9)


def test_exact_symmetry_for_duplicate_features(rng):
    # two features identical in background and instance receive equal phi
    w = np.array([1.0, 1.0, -2.0])

    class SymToy:
        def predict(self, X):
            X = np.atleast_2d(X)
            return X[:, 0] * X[:, 1] + w[2] * X[:, 2]

    bg = rng.normal(size=(8, 3))
    bg[:, 1] = bg[:, 0]
    x = rng.normal(size=3)
    x[1] = x[0]
    att = shapley_exact(SymToy(), x, bg)
    assert att.phi[0] == pytest.approx(att.phi[1], abs=1e-12)


def test_exact_linearity_of_model_sums(rng):
    m1, m2 = LinearToy([1.0, 2.0]), LinearToy([-0.5, 0.25])

    class SumToy:
        def predict(self, X):
            return m1.predict(X) + m2.predict(X)

    x = rng.normal(size=2)
    bg = rng.normal(size=(5, 2))
    a1 = shapley_exact(m1, x, bg)
    a2 = shapley_exact(m2, x, bg)
    a12 = shapley_exact(SumToy(), x, bg)
    assert a12.phi == pytest.approx(a1.phi + a2.phi, abs=1e-12)


def test_exact_rejects_large_d(rng):
    with pytest.raises(ValueError, match="sampled"):
        shapley_exact(LinearToy(np.ones(15)), rng.normal(size=15), rng.normal(size=(3, 15)))


# ---------------------------------------------------------------- sampled


def test_sampled_matches_exact_for_linear(rng):
    model = LinearToy(rng.normal(size=5))
    x = rng.normal(size=5)
    bg = rng.normal(size=(16, 5))
    exact = shapley_exact(model, x, bg)
    sampled = shapley_sampled(model, x, bg, n_permutations=256, seed=1)
    for i in range(5):
        tol = 3 * max(sampled.mc_se[i], 1e-12)
        assert abs(sampled.phi[i] - exact.phi[i]) <= tol + 1e-9


def test_sampled_tree_model_within_band(rng):
    X = rng.normal(size=(60, 8))
    y = X @ rng.normal(size=8) + rng.normal(size=60)
    forest = fit_random_forest(
        Dataset(X, y, tuple(f"f{i}" for i in range(8))),
        ModelSpec("random_forest", LossKind.squared(),
                  {"n_trees": 15, "max_depth": 2, "min_leaf": 2, "feature_fraction": 0.5}, seed=5),
    )
    x = X[0]
    bg = X[20:36]
    exact = shapley_exact(forest, x, bg)
    sampled = shapley_sampled(forest, x, bg, n_permutations=4096, seed=2)
    prange = float(np.ptp(forest.predict(X)))
    assert np.abs(sampled.phi - exact.phi).max() <= 0.02 * prange


def test_sampled_constant_model(rng):
    class Const:
        def predict(self, X):
            return np.full(np.atleast_2d(X).shape[0], 7.0)

    att = shapley_sampled(Const(), rng.normal(size=4), rng.normal(size=(6, 4)),
                          n_permutations=64, seed=0)
    assert att.phi == pytest.approx(np.zeros(4), abs=1e-12)
    assert att.base_value == pytest.approx(7.0)


def test_sampled_deterministic_given_seed(rng):
    class InteractionToy:  # non-additive, so permutations genuinely vary
        def predict(self, X):
            X = np.atleast_2d(X)
            return X[:, 0] * X[:, 1] + np.maximum(X[:, 2], 0.0) * X[:, 3]

    model = InteractionToy()
    x = rng.normal(size=4)
    bg = rng.normal(size=(8, 4))
    a = shapley_sampled(model, x, bg, n_permutations=128, seed=9)
    b = shapley_sampled(model, x, bg, n_permutations=128, seed=9)
    assert np.array_equal(a.phi, b.phi)
    c = shapley_sampled(model, x, bg, n_permutations=128, seed=10)
    assert not np.array_equal(a.phi, c.phi)


def test_sampled_efficiency_enforced(rng):
    model = LinearToy(rng.normal(size=6))
    x = rng.normal(size=6)
    bg = rng.normal(size=(10, 6))
    att = shapley_sampled(model, x, bg, n_permutations=64, seed=3)
    assert att.reconstructed == pytest.approx(att.prediction, abs=1e-9)


def test_sampled_minimum_permutations(rng):
    with pytest.raises(ValueError, match="64"):
        shapley_sampled(LinearToy([1.0]), np.ones(1), np.ones((2, 1)), n_permutations=32)


def test_sampled_unbiasedness_over_seeds(rng):
    model = LinearToy(rng.normal(size=8))
    x = rng.normal(size=8)
    bg = rng.normal(size=(12, 8))
    exact = shapley_exact(model, x, bg)
    samples = np.stack([
        shapley_sampled(model, x, bg, n_permutations=64, seed=s).phi for s in range(200)
    ])
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(200)
    for i in range(8):
        assert abs(mean[i] - exact.phi[i]) <= 3 * max(se[i], 1e-12)


# ----------------------------------------------------------- aggregation


def att_of(phi, names, model_id="M", date=None, values=None):
    phi = np.asarray(phi, dtype=float)
    values = np.asarray(values if values is not None else np.zeros_like(phi), dtype=float)
    return Attribution(
        model_id=model_id, target_date=date, feature_names=tuple(names),
        feature_values=values, base_value=0.0, phi=phi,
        prediction=float(phi.sum()),
    )


def test_importance_absolute_value_single():
    table = aggregate_importance([att_of([-0.4], ["Imports_lag0"])], top_k=1)
    row = table.lookup("M", "Imports", "full")
    assert row.value == pytest.approx(0.4)
    assert row.top


def test_importance_signed_sum_cancellation():
    table = aggregate_importance(
        [att_of([0.3, -0.3], ["Imports_lag0", "Imports_lag1"])], top_k=1
    )
    assert table.lookup("M", "Imports", "full").value == pytest.approx(0.0)


def test_importance_planted_dominant_variable(rng):
    atts = []
    for mid in ("M1", "M2", "M3"):
        for i in range(10):
            phi = rng.normal(scale=0.05, size=3)
            phi[1] = 2.0 + rng.normal(scale=0.1)  # planted dominant
            atts.append(att_of(phi, ["A_lag0", "B_lag0", "C_lag0"], model_id=mid,
                               date=QuarterDate(2010, 1).advance(i)))
    table = aggregate_importance(atts, top_k=1)
    for mid in ("M1", "M2", "M3"):
        assert table.lookup(mid, "B", "full").top


def test_importance_respects_period_slices(rng):
    early = att_of([1.0], ["A_lag0"], date=QuarterDate(2000, 1))
    late = att_of([3.0], ["A_lag0"], date=QuarterDate(2020, 1))
    period = PeriodSlice("early", QuarterDate(1999, 1), QuarterDate(2001, 4))
    table = aggregate_importance([early, late], periods=[period], top_k=1)
    assert table.lookup("M", "A", "early").value == pytest.approx(1.0)


def test_importance_unknown_feature_in_grouping():
    with pytest.raises(ValueError, match="missing from grouping"):
        aggregate_importance([att_of([1.0], ["A_lag0"])], grouping={"other": "O"})


def test_importance_top_k_flags_exactly_k(rng):
    names = [f"V{i}_lag0" for i in range(8)]
    atts = [att_of(rng.normal(size=8), names, date=QuarterDate(2010, 1))]
    table = aggregate_importance(atts, top_k=5)
    flags = [r for r in table.rows if r.top]
    assert len(flags) == 5


def test_default_grouping():
    g = default_grouping(("Imports_lag0", "Imports_lag1", "y_lag2", "F1_lag0", "PMI"))
    assert g["Imports_lag0"] == g["Imports_lag1"] == "Imports"
    assert g["y_lag2"] == "y"
    assert g["F1_lag0"] == "F1"
    assert g["PMI"] == "PMI"


# ------------------------------------------------------------- dependence


def test_dependence_monotone_slope_sign(rng):
    xs = np.linspace(-2, 2, 40)
    atts = [att_of([0.8 * x], ["A_lag0"], values=[x]) for x in xs]
    pts = dependence_curve(atts, "A_lag0")
    smooth = [s for _, _, s in pts]
    assert smooth[-1] > smooth[0]


def test_dependence_constant_phi_flat(rng):
    xs = rng.normal(size=20)
    atts = [att_of([0.5], ["A_lag0"], values=[x]) for x in xs]
    pts = dependence_curve(atts, "A_lag0")
    smooth = np.array([s for _, _, s in pts])
    assert np.allclose(smooth, 0.5, atol=1e-9)


def test_dependence_noisy_quadratic_within_band():
    rng = np.random.default_rng(5)
    xs = np.linspace(-1.5, 1.5, 120)
    noise = rng.normal(scale=0.05, size=xs.size)
    atts = [att_of([x * x + n], ["A_lag0"], values=[x]) for x, n in zip(xs, noise)]
    pts = dependence_curve(atts, "A_lag0")
    interior = [(x, s) for x, _, s in pts if -1.0 <= x <= 1.0]
    for x, s in interior:
        assert abs(s - x * x) <= 0.15


def test_dependence_needs_five_points():
    atts = [att_of([1.0], ["A_lag0"], values=[0.1])] * 4
    with pytest.raises(ValueError, match="5 points"):
        dependence_curve(atts, "A_lag0")


def test_time_curve_sorted(rng):
    dates = [QuarterDate(2010, 1).advance(i) for i in (3, 0, 2, 1, 4)]
    atts = [att_of([float(i)], ["A_lag0"], date=d) for i, d in enumerate(dates)]
    pts = time_curve(atts, "A_lag0")
    assert [str(d) for d, _ in pts] == ["2010Q1", "2010Q2", "2010Q3", "2010Q4", "2011Q1"]
