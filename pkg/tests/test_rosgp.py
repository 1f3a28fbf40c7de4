import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpattitude.gp import Dataset, Hyperparams
from gpattitude.rosgp import RosgpState, rosgp_init, rosgp_predict, rosgp_update
from gpattitude.sparse import SPGPDim, SPGPModel, spgp_fit, spgp_predict


def _model(rng, M=6, n_out=3, y_scale=1.0, d=4):
    X = rng.normal(size=(30, d))
    h = Hyperparams(0.05, 1.0, np.full(d, 1.5))
    dims = [SPGPDim(X, np.sin(X[:, j % d]) * y_scale, X[:M], h, y_scale) for j in range(n_out)]
    return SPGPModel(dims, dataset_hash="abc")


def _batch_oracle(alpha0, K, y, lam, varsigma):
    """Direct minimizer of the weighted, regularized least-squares cost."""
    k, M = K.shape
    w = lam ** (k - 1 - np.arange(k))
    Phi = (K * w[:, None]).T @ K + varsigma * lam**k * np.eye(M)
    rho = (K * w[:, None]).T @ y + varsigma * lam**k * alpha0
    return np.linalg.solve(Phi, rho), Phi


@pytest.mark.parametrize("lam", [1.0, 0.99, 0.9])
@pytest.mark.parametrize("seed", range(3))
def test_recursion_matches_batch_minimizer(lam, seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 11))
    model = _model(rng, M=M, n_out=1, y_scale=1.7)
    varsigma = 0.05
    st_ = rosgp_init(model, varsigma, lam)
    X = rng.normal(size=(200, 4))
    Y = np.cos(X[:, :1]) + 0.05 * rng.normal(size=(200, 1))
    dim = model.dims[0]
    for x, y in zip(X, Y):
        rosgp_update(st_, x, y)
    K = dim.kvec(X)
    alpha, Phi = _batch_oracle(dim.alpha0, K, Y[:, 0] / dim.y_scale, lam, varsigma)
    np.testing.assert_allclose(st_.alpha[0], alpha, rtol=1e-8, atol=1e-8 * np.abs(alpha).max())
    np.testing.assert_allclose(st_.P[0] @ Phi, np.eye(M), atol=1e-6)
    assert st_.k == 200


def test_scalar_stream_hand_solution():
    # M = 1, lam = 1: alpha = (s a0 + k1 y1 + k2 y2) / (s + k1^2 + k2^2)
    X = np.array([[0.0], [1.0], [2.0]])
    h = Hyperparams(0.1, 1.0, [1.0])
    dim = SPGPDim(X, [0.0, 0.0, 0.0], X[:1], h)
    model = SPGPModel([dim])
    s, a0 = 0.5, dim.alpha0[0]
    st_ = rosgp_init(model, s, 1.0)
    x1, x2, y1, y2 = np.array([0.3]), np.array([-0.8]), 0.7, -0.2
    st_.update(x1, [y1]).update(x2, [y2])
    k1, k2 = np.exp(-0.5 * 0.09), np.exp(-0.5 * 0.64)
    expect = (s * a0 + k1 * y1 + k2 * y2) / (s + k1**2 + k2**2)
    assert st_.alpha[0][0] == pytest.approx(expect, rel=1e-13)
    assert st_.P[0][0, 0] == pytest.approx(1.0 / (s + k1**2 + k2**2), rel=1e-13)


def test_init_contract():
    rng = np.random.default_rng(1)
    model = _model(rng)
    st_ = rosgp_init(model, 0.01)
    np.testing.assert_array_equal(st_.P[0], 100.0 * np.eye(6))
    for a, d in zip(st_.alpha, model.dims):
        np.testing.assert_array_equal(a, d.alpha0)
        assert a is not d.alpha0
    x = rng.normal(size=4)
    mu, var = rosgp_predict(st_, x)
    mu_s, var_s = spgp_predict(model, x)
    np.testing.assert_allclose(mu, mu_s, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(var, var_s, rtol=1e-12)


def test_init_rejects_bad_arguments():
    model = _model(np.random.default_rng(2))
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(ValueError):
            rosgp_init(model, bad)
    with pytest.raises(ValueError):
        rosgp_init(model, 0.1, lam=0.0)
    with pytest.raises(ValueError):
        rosgp_init(model, 0.1, lam=1.01)
    with pytest.warns(RuntimeWarning):
        rosgp_init(model, 2.0)


def test_zero_residual_keeps_weights_and_contracts_P():
    rng = np.random.default_rng(3)
    model = _model(rng)
    st_ = rosgp_init(model, 0.1, 1.0)
    x = rng.normal(size=4)
    y = st_.predict_mean(x)
    alpha = [a.copy() for a in st_.alpha]
    P0 = st_.P[0].copy()
    st_.update(x, y)
    for a, b in zip(alpha, st_.alpha):
        np.testing.assert_allclose(b, a, atol=1e-14)
    assert np.trace(st_.P[0]) < np.trace(P0)


def test_variance_is_frozen():
    rng = np.random.default_rng(4)
    model = _model(rng)
    st_ = rosgp_init(model, 0.1, 0.95)
    x = rng.normal(size=4)
    v0 = st_.predict(x)[1]
    for _ in range(50):
        st_.update(rng.normal(size=4), rng.normal(size=3))
    np.testing.assert_array_equal(st_.predict(x)[1], v0)
    for P in st_.P:
        np.testing.assert_array_equal(P, P.T)


def test_mean_tracks_shifted_target():
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(200, 2))
    f = lambda X: np.sin(X[:, 0]) + 0.5 * X[:, 1]
    ds = Dataset(X, f(X) + 0.02 * rng.normal(size=200))
    model = spgp_fit(ds, 20, seed=0, maxiter=50)
    st_ = rosgp_init(model, 0.1, 0.98)
    err_online, err_frozen = [], []
    for _ in range(400):
        x = rng.uniform(-2, 2, size=2)
        truth = f(x[None])[0] + 0.8           # the target moved after training
        err_online.append(abs(st_.predict_mean(x)[0] - truth))
        err_frozen.append(abs(model.predict(x[None])[0][0, 0] - truth))
        st_.update(x, [truth + 0.02 * rng.normal()])
    assert np.mean(err_online) < np.mean(err_frozen)


def test_non_finite_measurement_skips_that_dimension():
    rng = np.random.default_rng(6)
    model = _model(rng)
    st_ = rosgp_init(model, 0.1)
    before = st_.copy()
    st_.update(rng.normal(size=4), [np.nan, 0.3, np.inf])
    np.testing.assert_array_equal(st_.alpha[0], before.alpha[0])
    np.testing.assert_array_equal(st_.P[2], before.P[2])
    assert not np.array_equal(st_.alpha[1], before.alpha[1])
    assert st_.skipped == 1 and st_.k == 1


def test_update_cost_independent_of_stream_length():
    rng = np.random.default_rng(7)
    st_ = rosgp_init(_model(rng), 0.1)
    sizes = set()
    for _ in range(300):
        st_.update(rng.normal(size=4), rng.normal(size=3))
        sizes.add((len(st_.alpha), st_.alpha[0].shape, st_.P[0].shape))
    assert sizes == {(3, (6,), (6, 6))}


def test_large_prior_covariance_gives_plain_least_squares():
    rng = np.random.default_rng(8)
    model = _model(rng, M=4, n_out=1)
    st_ = rosgp_init(model, 1e-10, 1.0)
    X = rng.normal(size=(60, 4))
    y = rng.normal(size=60)
    for x, yi in zip(X, y):
        st_.update(x, [yi])
    K = model.dims[0].kvec(X)
    ls = np.linalg.lstsq(K, y, rcond=None)[0]
    np.testing.assert_allclose(st_.alpha[0], ls, rtol=1e-4)


@given(st.integers(0, 2**32 - 1), st.floats(0.9, 1.0))
@settings(max_examples=15, deadline=None)
def test_P_stays_symmetric_positive_definite(seed, lam):
    rng = np.random.default_rng(seed)
    st_ = rosgp_init(_model(rng, n_out=1), 0.2, lam)
    for _ in range(100):
        st_.update(rng.normal(size=4), rng.normal(size=1))
    P = st_.P[0]
    np.testing.assert_array_equal(P, P.T)
    assert np.linalg.eigvalsh(P).min() > 0


def test_snapshot_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(9)
    model = _model(rng)
    st_ = rosgp_init(model, [0.1, 0.2, 0.3], 0.99)
    for _ in range(20):
        st_.update(rng.normal(size=4), rng.normal(size=3))
    st_.save(tmp_path / "s.json")
    back = RosgpState.load(tmp_path / "s.json", model)
    for a, b in zip(st_.alpha + st_.P, back.alpha + back.P):
        np.testing.assert_array_equal(a, b)
    assert (back.k, back.lam, back.varsigma) == (20, 0.99, [0.1, 0.2, 0.3])
    x, y = rng.normal(size=4), rng.normal(size=3)
    st_.update(x, y)
    back.update(x, y)
    np.testing.assert_array_equal(st_.alpha[2], back.alpha[2])
    other = SPGPModel(model.dims, dataset_hash="different")
    with pytest.raises(ValueError):
        RosgpState.load(tmp_path / "s.json", other)
