"""Model specs, covariance diagonalization, volatility matrices."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochastica import (
    CovarianceSpec,
    diagonalize_covariance,
    load_model_config,
    make_bm,
    make_correlated_gbm,
    make_custom_grid,
    make_gbm,
    make_vasicek,
    model_hash,
    volatility_matrix,
)


# ---------------------------------------------------------------------------
# eigendecomposition (hand oracles first)


def test_identity_covariance():
    eig = diagonalize_covariance(CovarianceSpec(np.eye(3)))
    np.testing.assert_allclose(eig.eigenvalues, [1.0, 1.0, 1.0], atol=1e-14)
    v = eig.eigenvectors
    np.testing.assert_allclose(v @ v.T, np.eye(3), atol=1e-12)


def test_rank_one_covariance():
    # hand solve: [[1,1],[1,1]] has eigenpairs 2 -> (1,1)/sqrt2, 0 -> (1,-1)/sqrt2
    eig = diagonalize_covariance(CovarianceSpec(np.array([[1.0, 1.0],
                                                          [1.0, 1.0]])))
    np.testing.assert_allclose(eig.eigenvalues, [2.0, 0.0], atol=1e-12)
    lead = eig.eigenvectors[:, 0]
    np.testing.assert_allclose(np.abs(lead), [np.sqrt(0.5)] * 2, atol=1e-12)
    assert eig.rank == 1


def test_half_correlation_eigenvalues():
    # characteristic polynomial of [[1,.5],[.5,1]]: (1-l)^2 = 1/4
    eig = diagonalize_covariance(CovarianceSpec(np.array([[1.0, 0.5],
                                                          [0.5, 1.0]])))
    np.testing.assert_allclose(eig.eigenvalues, [1.5, 0.5], atol=1e-12)


def test_covariance_validation():
    with pytest.raises(ValueError):
        CovarianceSpec(np.array([[1.0, 0.2], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        diagonalize_covariance(CovarianceSpec(np.array([[1.0, 2.0],
                                                        [2.0, 1.0]])))


def test_reconstruction_and_orthonormality():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    c = a @ a.T
    eig = diagonalize_covariance(CovarianceSpec(c))
    v, lam = eig.eigenvectors, eig.eigenvalues
    np.testing.assert_allclose((v * lam) @ v.T, c, atol=1e-10)
    np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-12)
    assert np.all(np.diff(lam) <= 1e-12)


# ---------------------------------------------------------------------------
# volatility matrix


def test_volatility_matrix_scalar_case():
    eig = diagonalize_covariance(CovarianceSpec(np.array([[1.0]])))
    z = volatility_matrix(np.array([0.3]), eig)
    np.testing.assert_allclose(z @ z.T, [[0.09]], atol=1e-14)


def test_volatility_matrix_cross_terms():
    # direct multiplication oracle for z=(0.2,0.3), corr 0.5
    c = np.array([[1.0, 0.5], [0.5, 1.0]])
    eig = diagonalize_covariance(CovarianceSpec(c))
    z = volatility_matrix(np.array([0.2, 0.3]), eig)
    np.testing.assert_allclose(z @ z.T, [[0.04, 0.03], [0.03, 0.09]],
                               atol=1e-12)
    with pytest.raises(ValueError):
        volatility_matrix(np.array([0.2, 0.3, 0.4]), eig)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_full_covariance_reproduced(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n + 1))
    c = a @ a.T
    scale = np.sqrt(np.outer(np.diag(c), np.diag(c)))
    corr = c / np.where(scale == 0, 1.0, scale)
    np.fill_diagonal(corr, 1.0)
    corr = 0.5 * (corr + corr.T)
    vols = rng.uniform(0.05, 0.8, size=n)
    eig = diagonalize_covariance(CovarianceSpec(corr))
    z = volatility_matrix(vols, eig)
    np.testing.assert_allclose(z @ z.T, np.outer(vols, vols) * corr,
                               atol=1e-9)


# ---------------------------------------------------------------------------
# built-in models


def test_bm_maps():
    m = make_bm(0.0, 1.0)
    assert m.drift(0.0, np.array([5.0]))[0] == 0.0
    assert m.vol(0.0, np.array([5.0]))[0, 0] == 1.0
    assert m.dim == 1 and m.noise_dim == 1


def test_gbm_maps():
    m = make_gbm(0.05, 0.2)
    assert m.vol(0.0, np.array([100.0]))[0, 0] == pytest.approx(20.0)
    assert m.drift(0.3, np.array([100.0]))[0] == pytest.approx(5.0)


def test_vasicek_maps():
    m = make_vasicek(1.0, 0.03, 0.01)
    assert m.drift(0.0, np.array([0.03]))[0] == 0.0
    assert m.drift(0.0, np.array([0.05]))[0] == pytest.approx(-0.02)
    assert m.vol(0.0, np.array([0.05]))[0, 0] == 0.01
    with pytest.raises(ValueError):
        make_vasicek(0.0, 0.03, 0.01)
    with pytest.raises(ValueError):
        make_gbm(0.05, -0.2)


def test_maps_are_pure():
    m = make_gbm(0.1, 0.3)
    s = np.array([42.0])
    a = m.drift(1.0, s)
    b = m.drift(1.0, s)
    np.testing.assert_array_equal(a, b)


def test_correlated_model_covariance():
    c = [[1.0, 0.5], [0.5, 1.0]]
    m = make_correlated_gbm([0.05, 0.05], [0.2, 0.3], c)
    assert m.dim == 2
    s = np.array([100.0, 50.0])
    z = m.vol(0.0, s)
    cov = z @ z.T
    expect = np.outer([0.2 * 100, 0.3 * 50], [0.2 * 100, 0.3 * 50]) * np.array(c)
    np.testing.assert_allclose(cov, expect, rtol=1e-10)


def test_custom_grid_model():
    s = np.linspace(1.0, 10.0, 10)
    m = make_custom_grid(s, 0.5 * s, 0.1 * s)
    assert m.drift(0.0, np.array([2.0]))[0] == pytest.approx(1.0)
    assert m.vol(0.0, np.array([4.0]))[0, 0] == pytest.approx(0.4)


# ---------------------------------------------------------------------------
# hashing and config


def test_model_hash_stability():
    a = make_gbm(0.05, 0.2)
    b = make_gbm(0.05, 0.2)
    c = make_gbm(0.05, 0.21)
    assert model_hash(a) == model_hash(b)
    assert model_hash(a) != model_hash(c)
    assert len(model_hash(a)) == 64


def test_load_model_config():
    m = load_model_config({"type": "vasicek",
                           "params": {"a": 1.0, "b": 0.05, "sigma": 0.02}})
    assert m.kind == "vasicek"
    with pytest.raises(ValueError):
        load_model_config({"params": {}})
    with pytest.raises(ValueError):
        load_model_config({"type": "heston", "params": {}})
    with pytest.raises(ValueError):
        load_model_config({"type": "gbm", "params": {"mu": 0.1}})
