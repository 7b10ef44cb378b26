import numpy as np
import pytest

from macrocast.factors import RankRule, fit_factors, transform


def names(n):
    return tuple(f"v{i}" for i in range(n))


def rank_one_panel(rng, T=40, n=6, noise=0.0):
    f = rng.normal(size=T)
    lam = rng.normal(size=n) + np.sign(rng.normal(size=n)) * 0.5
    X = np.outer(f, lam)
    if noise:
        X = X + rng.normal(scale=noise, size=X.shape)
    return X, f, lam


def test_rank_one_panel_caught_by_one_factor(rng):
    X, f, _ = rank_one_panel(rng)
    fit = fit_factors(X, names(X.shape[1]), RankRule.fixed(1))
    assert fit.rank == 1
    assert fit.explained_variance_ratio[0] >= 0.999
    corr = np.corrcoef(fit.factors[:, 0], f)[0, 1]
    assert abs(corr) >= 0.999


def test_two_identical_columns_one_factor_explains_everything(rng):
    col = rng.normal(size=30)
    X = np.column_stack([col, col])
    fit = fit_factors(X, names(2), RankRule.fixed(1))
    assert fit.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-12)


def test_full_rank_reconstruction_is_lossless(rng):
    # oracle: with r = n_vars the standardized panel is exactly F @ V.T
    X = rng.normal(size=(50, 10)) @ rng.normal(size=(10, 10)) + rng.normal(size=(50, 10))
    n = X.shape[1]
    fit = fit_factors(X, names(n), RankRule.fixed(n))
    Z = (X - fit.col_means) / fit.col_stds
    recon = fit.factors @ fit.loadings.T
    assert np.linalg.norm(Z - recon) <= 1e-8


def test_constant_column_is_named(rng):
    X = rng.normal(size=(20, 3))
    X[:, 1] = 7.0
    with pytest.raises(ValueError, match="v1"):
        fit_factors(X, names(3), RankRule.fixed(1))


def test_bad_threshold_rejected():
    with pytest.raises(ValueError, match="threshold"):
        RankRule.variance_threshold(0.0)
    with pytest.raises(ValueError, match="threshold"):
        RankRule.variance_threshold(1.5)


def test_variance_threshold_picks_smallest_sufficient_rank(rng):
    X, _, _ = rank_one_panel(rng, noise=0.05)
    fit = fit_factors(X, names(X.shape[1]), RankRule.variance_threshold(0.8))
    assert fit.rank == 1


def test_transform_training_rows_reproduces_factors(rng):
    X = rng.normal(size=(30, 5))
    fit = fit_factors(X, names(5), RankRule.fixed(3))
    again = transform(fit, X, names(5))
    assert np.abs(again - fit.factors).max() <= 1e-8


def test_transform_of_column_means_is_zero(rng):
    X = rng.normal(size=(30, 5))
    fit = fit_factors(X, names(5), RankRule.fixed(2))
    score = transform(fit, fit.col_means.reshape(1, -1), names(5))
    assert np.abs(score).max() <= 1e-12


def test_transform_linearity_against_direct_algebra(rng):
    # rank-1 synthetic with centered factor; oracle is the explicit formula
    X, _, lam = rank_one_panel(rng, T=60)
    fit = fit_factors(X, names(X.shape[1]), RankRule.fixed(1))
    row1 = lam.reshape(1, -1)
    row2 = 2 * row1
    direct = lambda R: ((R - fit.col_means) / fit.col_stds) @ fit.loadings  # noqa: E731
    assert transform(fit, row1, names(X.shape[1])) == pytest.approx(direct(row1))
    assert transform(fit, row2, names(X.shape[1])) == pytest.approx(direct(row2))
    # with near-zero column means, doubling the row roughly doubles the score
    s1 = transform(fit, row1, names(X.shape[1]))[0, 0]
    s2 = transform(fit, row2, names(X.shape[1]))[0, 0]
    shift = (fit.col_means / fit.col_stds) @ fit.loadings[:, 0]
    assert s2 + shift == pytest.approx(2 * (s1 + shift), rel=1e-9, abs=1e-9)


def test_variance_ratios_equal_eigenvalue_shares(rng):
    X = rng.normal(size=(40, 6))
    fit = fit_factors(X, names(6), RankRule.fixed(6))
    Z = (X - fit.col_means) / fit.col_stds
    eig = np.sort(np.linalg.eigvalsh(Z.T @ Z / len(Z)))[::-1]
    assert fit.explained_variance_ratio == pytest.approx(eig / eig.sum(), abs=1e-9)


def test_reordering_variables_only_permutes_loadings(rng):
    X = rng.normal(size=(40, 5))
    perm = [3, 1, 4, 0, 2]
    fit_a = fit_factors(X, names(5), RankRule.fixed(2))
    fit_b = fit_factors(X[:, perm], tuple(f"v{i}" for i in perm), RankRule.fixed(2))
    assert fit_b.explained_variance_ratio == pytest.approx(fit_a.explained_variance_ratio)
    for k in range(2):
        a = fit_a.loadings[perm, k]
        b = fit_b.loadings[:, k]
        agree = np.allclose(a, b, atol=1e-9) or np.allclose(a, -b, atol=1e-9)
        assert agree


def test_no_leakage_from_rows_outside_window(rng):
    X = rng.normal(size=(40, 5))
    fit_a = fit_factors(X[:30], names(5), RankRule.fixed(2))
    X_perturbed = X.copy()
    X_perturbed[30:] += 100.0
    fit_b = fit_factors(X_perturbed[:30], names(5), RankRule.fixed(2))
    assert np.array_equal(fit_a.loadings, fit_b.loadings)
    assert np.array_equal(fit_a.col_means, fit_b.col_means)


def test_sign_convention_largest_magnitude_entry_positive(rng):
    X = rng.normal(size=(40, 5))
    fit = fit_factors(X, names(5), RankRule.fixed(3))
    for k in range(3):
        top = np.argmax(np.abs(fit.loadings[:, k]))
        assert fit.loadings[top, k] > 0


def test_column_mismatch_raises(rng):
    X = rng.normal(size=(30, 4))
    fit = fit_factors(X, names(4), RankRule.fixed(1))
    with pytest.raises(ValueError, match="column mismatch"):
        transform(fit, X, ("a", "b", "c", "d"))


def test_serialization_roundtrip(rng):
    X = rng.normal(size=(25, 4))
    fit = fit_factors(X, names(4), RankRule.fixed(2))
    doc = fit.to_json_dict()
    assert doc["rank"] == 2
    assert np.array(doc["loadings"]).shape == (4, 2)
