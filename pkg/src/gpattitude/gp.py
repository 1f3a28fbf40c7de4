"""Exact GP regression with an ARD squared-exponential kernel.

Each output dimension gets its own independent GP (diagonal multi-output
covariance).  Hyperparameters are optimized in log space::

    theta = [log sigma_eps2, log sigma_f2, log l_1, ..., log l_D]

Outputs may optionally be rescaled by their standard deviation before fitting
(``normalize_y=True``); hyperparameters then live in the scaled units and
predictions are mapped back.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize

from .linalg import FactorizationError, chol_logdet, chol_solve, jittered_cholesky, solve_lower

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Hyperparams:
    """SEARD hyperparameters of one output dimension."""

    sigma_eps2: float
    sigma_f2: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel().copy()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "sigma_eps2", float(self.sigma_eps2))
        object.__setattr__(self, "sigma_f2", float(self.sigma_f2))
        if not (self.sigma_eps2 > 0 and self.sigma_f2 > 0 and np.all(ls > 0)):
            raise ValueError("hyperparameters must be strictly positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_log(self) -> np.ndarray:
        return np.concatenate([[np.log(self.sigma_eps2), np.log(self.sigma_f2)], np.log(self.lengthscales)])

    @classmethod
    def from_log(cls, theta) -> "Hyperparams":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[0]), np.exp(theta[1]), np.exp(theta[2:]))

    def to_dict(self) -> dict:
        return {
            "sigma_eps2": self.sigma_eps2,
            "sigma_f2": self.sigma_f2,
            "lengthscales": [float(v) for v in self.lengthscales],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(d["sigma_eps2"], d["sigma_f2"], np.array(d["lengthscales"], dtype=float))


@dataclass
class Dataset:
    """Training pairs: inputs ``X`` (N, D) and outputs ``Y`` (N, P)."""

    X: np.ndarray
    Y: np.ndarray
    t: Optional[np.ndarray] = None

    def __post_init__(self):
        # C order keeps BLAS results independent of how the arrays were built
        self.X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=float)))
        Y = np.asarray(self.Y, dtype=float)
        self.Y = np.ascontiguousarray(Y.reshape(-1, 1) if Y.ndim == 1 else Y)
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(f"X has {self.X.shape[0]} rows but Y has {self.Y.shape[0]}")
        if self.X.shape[0] < 1:
            raise ValueError("dataset is empty")
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=float).ravel()

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.Y.shape[1]

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.Y).tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        path = Path(path)
        cols = {f"x{i}": self.X[:, i] for i in range(self.X.shape[1])}
        cols.update({f"y{j}": self.Y[:, j] for j in range(self.Y.shape[1])})
        if self.t is not None:
            cols = {"t": self.t, **cols}
        header = ",".join(cols)
        data = np.column_stack(list(cols.values()))
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "Dataset":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xi = [i for i, h in enumerate(header) if h.startswith("x")]
        yi = [i for i, h in enumerate(header) if h.startswith("y")]
        t = data[:, header.index("t")] if "t" in header else None
        return cls(data[:, xi], data[:, yi], t)


# --------------------------------------------------------------------------
# kernel


def kernel_seard(x, x2, h: Hyperparams) -> float:
    """``sigma_f2 * exp(-0.5 * sum((x - x2)^2 / l^2))``."""
    r = (np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)) / h.lengthscales
    return float(h.sigma_f2 * np.exp(-0.5 * (r @ r)))


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    a2 = np.einsum("ij,ij->i", A, A)
    b2 = np.einsum("ij,ij->i", B, B)
    d = a2[:, None] + b2[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def cross_kernel(A, B, h: Hyperparams) -> np.ndarray:
    """Kernel matrix ``[k(a_i, b_j)]`` between row sets ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float)) / h.lengthscales
    B = np.atleast_2d(np.asarray(B, dtype=float)) / h.lengthscales
    return h.sigma_f2 * np.exp(-0.5 * _sqdist(A, B))


def gram(X, h: Hyperparams) -> np.ndarray:
    """Symmetric Gram matrix with an exact ``sigma_f2`` diagonal."""
    K = cross_kernel(X, X, h)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, h.sigma_f2)
    return K


# --------------------------------------------------------------------------
# marginal likelihood


def log_marginal_likelihood(h: Hyperparams, X, y):
    """Log evidence of ``y`` under ``N(0, K + sigma_eps2 I)`` and its gradient.

    The gradient is taken w.r.t. ``h.to_log()``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    N = y.size
    K = gram(X, h)
    Ky = K + h.sigma_eps2 * np.eye(N)
    L, _ = jittered_cholesky(Ky, h.sigma_f2)
    a = chol_solve(L, y)
    value = -0.5 * y @ a - 0.5 * chol_logdet(L) - 0.5 * N * LOG_2PI

    W = np.outer(a, a) - chol_solve(L, np.eye(N))
    WK = W * K
    grad = np.empty(2 + h.dim)
    grad[0] = 0.5 * h.sigma_eps2 * np.trace(W)
    grad[1] = 0.5 * WK.sum()
    r = WK.sum(axis=1)
    for d in range(h.dim):
        x = X[:, d]
        s = 2.0 * (x * x) @ r - 2.0 * x @ WK @ x
        grad[2 + d] = 0.5 * s / h.lengthscales[d] ** 2
    return float(value), grad


def initial_hyperparams(X, y) -> Hyperparams:
    """Data-driven starting point: noise std = std(y)/10, signal std = std(y), l = std(X)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sy = float(np.std(y))
    if not sy > 0:
        sy = 1.0
    sx = np.std(X, axis=0)
    sx = np.where(sx > 0, sx, 1.0)
    return Hyperparams((sy / 10.0) ** 2, sy**2, sx)


@dataclass
class FitResult:
    """Optimizer bookkeeping for one output dimension."""

    lml_init: float
    lml_final: float
    n_iter: int
    converged: bool
    fallback: bool = False
    message: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


LS_LOG_BOUNDS = (-8.0, 8.0)


def _log_bounds(theta0: np.ndarray, ls_log_bounds=LS_LOG_BOUNDS):
    """Box around the initial point in log space.

    Lengthscales may move ``ls_log_bounds`` (natural-log offsets) away from
    their initial values, which are the input standard deviations.
    """
    lo, hi = ls_log_bounds
    b = [(theta0[0] - 18.0, theta0[0] + 10.0), (theta0[1] - 14.0, theta0[1] + 10.0)]
    b += [(t + lo, t + hi) for t in theta0[2:]]
    return b


def maximize_evidence(objective, theta0, bounds, maxiter=200, gtol=1e-6):
    """Bounded quasi-Newton ascent on a ``theta -> (value, grad)`` objective.

    Returns ``(theta, FitResult)``; falls back to ``theta0`` if no improvement.
    """

    def neg(theta):
        try:
            v, g = objective(theta)
        except (FactorizationError, np.linalg.LinAlgError, FloatingPointError):
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(v):
            return 1e25, np.zeros_like(theta)
        return -v, -g

    f0, _ = neg(theta0)
    res = optimize.minimize(
        neg, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": maxiter, "gtol": gtol},
    )
    fit = FitResult(-f0, -res.fun, int(res.nit), bool(res.success), message=str(res.message))
    if not res.fun <= f0:
        warnings.warn("hyperparameter optimization did not improve on the initial guess", RuntimeWarning)
        fit.fallback = True
        fit.lml_final = fit.lml_init
        return np.asarray(theta0, dtype=float), fit
    return res.x, fit


# --------------------------------------------------------------------------
# model


class GPDim:
    """Exact GP posterior for a single output dimension."""

    def __init__(self, X, y, h: Hyperparams, y_scale: float = 1.0, fit: Optional[FitResult] = None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        self.hyp = h
        self.y_scale = float(y_scale)
        self.fit = fit
        Ky = gram(self.X, h) + h.sigma_eps2 * np.eye(self.y.size)
        self.L, self.jitter = jittered_cholesky(Ky, h.sigma_f2)
        self.alpha = chol_solve(self.L, self.y / self.y_scale)

    def predict(self, Xs):
        """Mean and variance (in output units) at the rows of ``Xs``."""
        Ks = cross_kernel(Xs, self.X, self.hyp)
        mu = Ks @ self.alpha
        V = solve_lower(self.L, Ks.T)
        var = self.hyp.sigma_f2 - np.einsum("ij,ij->j", V, V)
        var = np.clip(var, 0.0, self.hyp.sigma_f2)
        return mu * self.y_scale, var * self.y_scale**2

    def predict_mean(self, Xs):
        return cross_kernel(Xs, self.X, self.hyp) @ self.alpha * self.y_scale

    def info_gain(self) -> float:
        K = gram(self.X, self.hyp)
        A = np.eye(K.shape[0]) + K / self.hyp.sigma_eps2
        L, _ = jittered_cholesky(A, 1.0)
        return 0.5 * chol_logdet(L)


@dataclass
class GPModel:
    """Independent exact GPs, one per output dimension."""

    dims: List[GPDim]
    dataset_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_outputs(self) -> int:
        return len(self.dims)

    @property
    def N(self) -> int:
        return self.dims[0].X.shape[0]

    @property
    def hyperparams(self) -> List[Hyperparams]:
        return [d.hyp for d in self.dims]

    def predict(self, Xs):
        """Batch prediction; returns ``(mu, var)`` of shape (n, P)."""
        out = [d.predict(Xs) for d in self.dims]
        return np.column_stack([o[0] for o in out]), np.column_stack([o[1] for o in out])

    def prior_variance(self) -> np.ndarray:
        return np.array([d.hyp.sigma_f2 * d.y_scale**2 for d in self.dims])

    def to_dict(self) -> dict:
        return {
            "kind": "gp",
            "dataset_sha256": self.dataset_hash,
            "dims": [
                {
                    "hyperparams": d.hyp.to_dict(),
                    "y_scale": d.y_scale,
                    "jitter": d.jitter,
                    "fit": d.fit.to_dict() if d.fit else None,
                }
                for d in self.dims
            ],
            "meta": self.meta,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path, dataset: Dataset) -> "GPModel":
        d = json.loads(Path(path).read_text())
        return cls.from_dict(d, dataset)

    @classmethod
    def from_dict(cls, d: dict, dataset: Dataset) -> "GPModel":
        if d.get("kind") != "gp":
            raise ValueError(f"not a full-GP model file (kind={d.get('kind')!r})")
        if d["dataset_sha256"] and d["dataset_sha256"] != dataset.sha256():
            raise ValueError("dataset does not match the model's dataset hash")
        dims = []
        for j, e in enumerate(d["dims"]):
            fit = FitResult(**e["fit"]) if e.get("fit") else None
            dims.append(GPDim(dataset.X, dataset.Y[:, j], Hyperparams.from_dict(e["hyperparams"]), e["y_scale"], fit))
        return cls(dims, d["dataset_sha256"], d.get("meta", {}))


def _y_scale(y, normalize: bool) -> float:
    if not normalize:
        return 1.0
    s = float(np.std(y))
    return s if s > 0 else 1.0


def gp_fit(
    D: Dataset,
    init: Optional[Sequence[Hyperparams]] = None,
    *,
    optimize_hyperparams: bool = True,
    normalize_y: bool = False,
    maxiter: int = 200,
    gtol: float = 1e-6,
    ls_log_bounds=LS_LOG_BOUNDS,
) -> GPModel:
    """Fit one exact GP per output column of ``D`` by evidence maximization."""
    if D.N < 2:
        raise ValueError("gp_fit needs at least two training points")
    dims = []
    for j in range(D.n_outputs):
        s = _y_scale(D.Y[:, j], normalize_y)
        y = D.Y[:, j] / s
        h0 = init[j] if init is not None else initial_hyperparams(D.X, y)
        fit = None
        if optimize_hyperparams:
            theta0 = h0.to_log()
            theta, fit = maximize_evidence(
                lambda th: log_marginal_likelihood(Hyperparams.from_log(th), D.X, y),
                theta0, _log_bounds(theta0, ls_log_bounds), maxiter=maxiter, gtol=gtol,
            )
            h = Hyperparams.from_log(theta)
            logger.debug("dim %d: lml %.4g -> %.4g (%d it)", j, fit.lml_init, fit.lml_final, fit.n_iter)
        else:
            h = h0
        dims.append(GPDim(D.X, D.Y[:, j], h, s, fit))
    return GPModel(dims, D.sha256())


def gp_predict(model: GPModel, x):
    """Posterior mean and variance at a single input; both of shape (P,)."""
    if model is None or not getattr(model, "dims", None):
        raise RuntimeError("GP model is not fitted")
    mu, var = model.predict(np.atleast_2d(x))
    return mu[0], var[0]


def info_gain(model: GPModel) -> np.ndarray:
    """``0.5 log det(I + K / sigma_eps2)`` per dimension on the training set.

    This is the training-set surrogate of the maximum information gain; the
    maximum over all subsets is not computed.
    """
    return np.array([d.info_gain() for d in model.dims])


def beta_bound(rkhs_norm, gamma, N: int, delta: float) -> np.ndarray:
    """Confidence scaling ``sqrt(2 B^2 + 300 gamma log^3((N + 1) / delta))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    rkhs_norm = np.asarray(rkhs_norm, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(rkhs_norm < 0) or np.any(gamma < 0):
        raise ValueError("rkhs_norm and gamma must be nonnegative")
    return np.sqrt(2.0 * rkhs_norm**2 + 300.0 * gamma * np.log((N + 1) / delta) ** 3)
