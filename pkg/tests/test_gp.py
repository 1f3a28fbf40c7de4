import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpattitude.gp import (
    Dataset,
    GPDim,
    GPModel,
    Hyperparams,
    beta_bound,
    cross_kernel,
    gp_fit,
    gp_predict,
    gram,
    info_gain,
    initial_hyperparams,
    kernel_seard,
    log_marginal_likelihood,
)
from gpattitude.linalg import FactorizationError, jittered_cholesky


def _rand_hyp(rng, d):
    return Hyperparams(
        np.exp(rng.uniform(-3, 0)), np.exp(rng.uniform(-1, 1)), np.exp(rng.uniform(-0.5, 1.0, d))
    )


def _fd_grad(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


# kernel -----------------------------------------------------------------

def test_kernel_examples():
    h = Hyperparams(0.1, 1.0, np.ones(9))
    x = np.zeros(9)
    assert kernel_seard(x, x, Hyperparams(0.1, 2.5, np.ones(9))) == 2.5
    y = np.zeros(9)
    y[:2] = 1.0
    assert kernel_seard(x, y, h) == pytest.approx(0.367879441171442321, rel=1e-15)
    far = [kernel_seard(x, s * y, h) for s in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(far, far[1:])) and far[-1] < 1e-20


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_kernel_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    h = _rand_hyp(rng, 9)
    a, b = rng.normal(size=(2, 9))
    assert kernel_seard(a, b, h) == kernel_seard(b, a, h)


def test_cross_kernel_matches_pointwise():
    rng = np.random.default_rng(1)
    h = _rand_hyp(rng, 9)
    A, B = rng.normal(size=(4, 9)), rng.normal(size=(3, 9))
    K = cross_kernel(A, B, h)
    ref = np.array([[kernel_seard(a, b, h) for b in B] for a in A])
    np.testing.assert_allclose(K, ref, rtol=1e-12)


def test_gram_properties():
    rng = np.random.default_rng(2)
    h = _rand_hyp(rng, 9)
    assert gram(np.zeros((1, 9)), h).tolist() == [[h.sigma_f2]]
    X = rng.normal(size=(30, 9))
    K = gram(X, h)
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(np.diag(K), h.sigma_f2)
    assert np.linalg.eigvalsh(K).min() >= -1e-10 * h.sigma_f2


def test_duplicate_rows_give_singular_block():
    h = Hyperparams(0.1, 1.0, np.ones(9))
    X = np.zeros((2, 9))
    assert abs(np.linalg.det(gram(X, h))) < 1e-12


# jitter -----------------------------------------------------------------

def test_jitter_ladder_rescues_semidefinite_matrix():
    K = np.ones((3, 3))
    L, jitter = jittered_cholesky(K, 1.0)
    assert 0 < jitter <= 1e-6
    np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(3), atol=1e-12)


def test_jitter_ladder_gives_up_on_indefinite_matrix():
    with pytest.raises(FactorizationError):
        jittered_cholesky(np.diag([1.0, -1.0]), 1.0)


# marginal likelihood ----------------------------------------------------

def test_lml_single_zero_observation():
    h = Hyperparams(0.3, 1.7, np.ones(9))
    v, _ = log_marginal_likelihood(h, np.zeros((1, 9)), [0.0])
    assert v == pytest.approx(-0.5 * np.log(2 * np.pi * 2.0), rel=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_lml_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(10, 9))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=10)
    theta = _rand_hyp(rng, 9).to_log()
    f = lambda th: log_marginal_likelihood(Hyperparams.from_log(th), X, y)[0]
    g = log_marginal_likelihood(Hyperparams.from_log(theta), X, y)[1]
    fd = _fd_grad(f, theta)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-5


def test_lml_with_zero_outputs_has_no_data_fit_term():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(8, 9))
    h = _rand_hyp(rng, 9)
    v, _ = log_marginal_likelihood(h, X, np.zeros(8))
    K = gram(X, h) + h.sigma_eps2 * np.eye(8)
    assert v == pytest.approx(-0.5 * np.linalg.slogdet(K)[1] - 4 * np.log(2 * np.pi), rel=1e-12)


# fitting ----------------------------------------------------------------

def test_initial_hyperparams_from_data_spread():
    X = np.column_stack([np.arange(4.0), 2 * np.arange(4.0)])
    y = np.array([0.0, 2.0, 0.0, 2.0])
    h = initial_hyperparams(X, y)
    assert h.sigma_f2 == pytest.approx(1.0)
    assert h.sigma_eps2 == pytest.approx(0.01)
    np.testing.assert_allclose(h.lengthscales, np.std(X, axis=0))


def test_fit_never_lowers_evidence():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 3))
    ds = Dataset(X, np.column_stack([np.sin(X[:, 0]), X[:, 1] ** 2]) + 0.05 * rng.normal(size=(40, 2)))
    model = gp_fit(ds)
    for d in model.dims:
        assert d.fit.lml_final >= d.fit.lml_init


def test_fit_prunes_inactive_inputs():
    # sample from an SE-ARD prior with two active inputs out of five
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(100, 5))
    truth = Hyperparams(1e-4, 1.0, [1.0, 1.0, 1e3, 1e3, 1e3])
    K = gram(X, truth) + 1e-8 * np.eye(100)
    y = np.linalg.cholesky(K) @ rng.normal(size=100) + 0.01 * rng.normal(size=100)
    model = gp_fit(Dataset(X, y))
    ls = np.log(model.dims[0].hyp.lengthscales)
    assert ls[2:].min() > ls[:2].max()


def test_duplicate_inputs_force_noise():
    ds = Dataset(np.zeros((2, 1)), [1.0, -1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = gp_fit(ds)
    assert model.dims[0].hyp.sigma_eps2 > 0.1


def test_fit_rejects_single_point():
    with pytest.raises(ValueError):
        gp_fit(Dataset(np.zeros((1, 9)), np.zeros((1, 3))))


# prediction -------------------------------------------------------------

def _model(X, Y, h):
    return GPModel([GPDim(X, Y[:, j], h) for j in range(Y.shape[1])], "")


def test_prediction_reverts_to_prior_far_away():
    rng = np.random.default_rng(6)
    h = Hyperparams(0.01, 0.7, np.ones(9))
    X = rng.normal(size=(15, 9))
    model = _model(X, rng.normal(size=(15, 3)), h)
    mu, var = gp_predict(model, np.full(9, 100.0))
    np.testing.assert_allclose(mu, 0.0, atol=1e-6)
    np.testing.assert_allclose(var, 0.7, atol=1e-6)


def test_single_point_closed_form():
    h = Hyperparams(0.2, 1.3, np.full(9, 0.8))
    x1, xs = np.zeros(9), np.full(9, 0.3)
    model = _model(x1[None], np.array([[2.0, -1.0, 0.5]]), h)
    mu, var = gp_predict(model, xs)
    k = kernel_seard(xs, x1, h)
    np.testing.assert_allclose(mu, k * np.array([2.0, -1.0, 0.5]) / 1.5, rtol=1e-12)
    np.testing.assert_allclose(var, 1.3 - k * k / 1.5, rtol=1e-12)


def test_interpolation_limit():
    rng = np.random.default_rng(7)
    h = Hyperparams(1e-12, 1.0, np.ones(9))
    X = rng.normal(size=(6, 9))
    Y = rng.normal(size=(6, 3))
    model = _model(X, Y, h)
    for i in range(6):
        np.testing.assert_allclose(gp_predict(model, X[i])[0], Y[i], atol=1e-4)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_variance_bounded_and_decreasing_with_data(seed):
    rng = np.random.default_rng(seed)
    h = _rand_hyp(rng, 9)
    X = rng.normal(size=(12, 9))
    y = rng.normal(size=12)
    xs = rng.normal(size=(5, 9))
    v_small = GPDim(X[:8], y[:8], h).predict(xs)[1]
    v_big = GPDim(X, y, h).predict(xs)[1]
    assert np.all(v_small <= h.sigma_f2 + 1e-9)
    assert np.all(v_big <= v_small + 1e-9)


def test_mean_is_linear_in_outputs():
    rng = np.random.default_rng(8)
    h = _rand_hyp(rng, 9)
    X, y, xs = rng.normal(size=(10, 9)), rng.normal(size=10), rng.normal(size=(4, 9))
    np.testing.assert_array_equal(GPDim(X, 2 * y, h).predict_mean(xs), 2 * GPDim(X, y, h).predict_mean(xs))


def test_predict_requires_fitted_model():
    with pytest.raises(RuntimeError):
        gp_predict(GPModel([], ""), np.zeros(9))


# information gain and confidence scaling --------------------------------

def test_info_gain_single_point_and_limits():
    h = Hyperparams(0.25, 2.0, np.ones(9))
    model = _model(np.zeros((1, 9)), np.zeros((1, 1)), h)
    assert info_gain(model)[0] == pytest.approx(0.5 * np.log(1 + 8.0), rel=1e-12)
    tiny = _model(np.random.default_rng(0).normal(size=(5, 9)), np.zeros((5, 1)), Hyperparams(0.25, 1e-14, np.ones(9)))
    assert info_gain(tiny)[0] < 1e-12


def test_info_gain_grows_with_data():
    rng = np.random.default_rng(9)
    h = _rand_hyp(rng, 9)
    X = rng.normal(size=(10, 9))
    gains = [GPDim(X[:n], np.zeros(n), h).info_gain() for n in range(1, 11)]
    assert all(b >= a - 1e-12 for a, b in zip(gains, gains[1:]))


def test_beta_bound_examples():
    np.testing.assert_array_equal(beta_bound([0, 0, 0], [0, 0, 0], 10, 0.1), 0.0)
    assert beta_bound([1.0], [1.0], 499, 0.05)[0] == pytest.approx(484.145612220340646, rel=1e-13)
    base = beta_bound([1.0], [1.0], 100, 0.1)[0]
    assert beta_bound([2.0], [1.0], 100, 0.1)[0] >= base
    assert beta_bound([1.0], [2.0], 100, 0.1)[0] >= base
    assert beta_bound([1.0], [1.0], 200, 0.1)[0] >= base
    assert beta_bound([1.0], [1.0], 100, 0.05)[0] >= base
    for bad in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            beta_bound([1.0], [1.0], 100, bad)


# persistence ------------------------------------------------------------

def test_dataset_csv_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    ds = Dataset(rng.normal(size=(7, 9)), rng.normal(size=(7, 3)), np.arange(7) * 0.1)
    ds.save(tmp_path / "d.csv")
    back = Dataset.load(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.Y, ds.Y)
    assert back.sha256() == ds.sha256()
    assert back.X.flags["C_CONTIGUOUS"]


def test_model_round_trip_and_hash_check(tmp_path):
    rng = np.random.default_rng(11)
    ds = Dataset(rng.normal(size=(20, 9)), rng.normal(size=(20, 3)))
    model = gp_fit(ds, maxiter=20)
    model.save(tmp_path / "gp.json")
    back = GPModel.load(tmp_path / "gp.json", ds)
    xs = rng.normal(size=(3, 9))
    for a, b in zip(model.predict(xs), back.predict(xs)):
        np.testing.assert_array_equal(a, b)
    other = Dataset(ds.X, ds.Y + 1.0)
    with pytest.raises(ValueError):
        GPModel.load(tmp_path / "gp.json", other)
    d = json.loads((tmp_path / "gp.json").read_text())
    d["kind"] = "spgp"
    with pytest.raises(ValueError):
        GPModel.from_dict(d, ds)


def test_hyperparams_reject_nonpositive():
    with pytest.raises(ValueError):
        Hyperparams(0.0, 1.0, np.ones(3))
    with pytest.raises(ValueError):
        Hyperparams(0.1, 1.0, [1.0, -1.0])
