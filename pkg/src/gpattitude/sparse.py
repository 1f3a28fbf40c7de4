"""FITC sparse GP with M inducing inputs.

With ``V = L_M^-1 K_MN`` (``K_M = L_M L_M^T``) the approximate prior covariance
is ``Q_N = V^T V`` and the independent-conditional correction is
``Gamma = diag(K_N - Q_N)``.  Everything is evaluated through

    B = I + V Lam^-1 V^T,      Lam = Gamma + sigma_eps2 I,

so that ``Q_M = K_M + K_MN Lam^-1 K_NM = L_M B L_M^T`` never has to be formed
explicitly.  Costs are O(N M^2) for fitting, O(M) per predictive mean and
O(M^2) per predictive variance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .gp import (
    LOG_2PI,
    Dataset,
    FitResult,
    LS_LOG_BOUNDS,
    Hyperparams,
    _log_bounds,
    _y_scale,
    cross_kernel,
    gram,
    initial_hyperparams,
    maximize_evidence,
)
from .linalg import chol_logdet, jittered_cholesky, solve_lower, solve_lower_t

FIXED_SUBSET = "fixed-subset"
OPTIMIZED = "optimized"


def _fitc_factors(Z, X, h: Hyperparams):
    K_M = gram(Z, h)
    L_M, jitter = jittered_cholesky(K_M, h.sigma_f2)
    K_MN = cross_kernel(Z, X, h)
    V = solve_lower(L_M, K_MN)
    gamma = np.maximum(h.sigma_f2 - np.einsum("ij,ij->j", V, V), 0.0)
    lam = gamma + h.sigma_eps2
    B = np.eye(Z.shape[0]) + (V / lam) @ V.T
    L_B, _ = jittered_cholesky(B, 1.0)
    return K_M, L_M, K_MN, V, gamma, lam, L_B, jitter


def fitc_log_likelihood(h: Hyperparams, Z, X, y, grad_inducing: bool = False):
    """FITC log evidence ``log N(y | 0, Q_N + Gamma + sigma_eps2 I)``.

    Returns ``(value, grad)`` where ``grad`` is taken w.r.t. ``h.to_log()``,
    followed by ``Z.ravel()`` when ``grad_inducing`` is set.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    N, D = X.shape
    K_M, L_M, K_MN, V, gamma, lam, L_B, _ = _fitc_factors(Z, X, h)

    U = solve_lower(L_B, V / lam)                   # C^-1 = Lam^-1 - U^T U
    Uy = U @ y
    a = y / lam - U.T @ Uy                          # C^-1 y
    value = -0.5 * (y @ (y / lam) - Uy @ Uy) - 0.5 * (chol_logdet(L_B) + np.sum(np.log(lam))) - 0.5 * N * LOG_2PI

    w = a * a - (1.0 / lam - np.einsum("ij,ij->j", U, U))   # diag(W), W = aa^T - C^-1
    R = solve_lower_t(L_M, V)                       # K_M^-1 K_MN
    RCinv = R / lam - (R @ U.T) @ U
    P = np.outer(R @ a, a) - RCinv - R * w          # R (W - diag w)
    S = P @ R.T
    S = 0.5 * (S + S.T)

    ell2 = h.lengthscales**2
    PK = P * K_MN
    SK = S * K_M
    grad = np.empty(2 + D)
    grad[0] = 0.5 * h.sigma_eps2 * w.sum()
    grad[1] = 0.5 * (2.0 * PK.sum() - SK.sum() + h.sigma_f2 * w.sum())
    for d in range(D):
        z, x = Z[:, d], X[:, d]
        dmn = (z[:, None] - x[None, :]) ** 2 / ell2[d]
        dmm = (z[:, None] - z[None, :]) ** 2 / ell2[d]
        grad[2 + d] = 0.5 * (2.0 * np.sum(PK * dmn) - np.sum(SK * dmm))
    if not grad_inducing:
        return float(value), grad

    G1 = 2.0 * (PK @ X - PK.sum(axis=1)[:, None] * Z) / ell2
    G2 = -2.0 * (SK @ Z - SK.sum(axis=1)[:, None] * Z) / ell2
    gZ = 0.5 * (G1 + G2)
    return float(value), np.concatenate([grad, gZ.ravel()])


class SPGPDim:
    """FITC posterior for a single output dimension."""

    def __init__(self, X, y, Z, h: Hyperparams, y_scale: float = 1.0, fit: Optional[FitResult] = None):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        self.Z = np.atleast_2d(np.asarray(Z, dtype=float)).copy()
        self.hyp = h
        self.y_scale = float(y_scale)
        self.fit = fit
        (self.K_M, self.L_M, self.K_MN, V, self.gamma, lam, self.L_B, self.jitter) = _fitc_factors(self.Z, self.X, h)
        ys = self.y / self.y_scale
        # alpha0 = Q_M^-1 K_MN Lam^-1 y = L_M^-T B^-1 V Lam^-1 y
        c = solve_lower(self.L_B, V @ (ys / lam))
        self.alpha0 = solve_lower_t(self.L_M, solve_lower_t(self.L_B, c))
        self.lam = lam

    @property
    def M(self) -> int:
        return self.Z.shape[0]

    def kvec(self, Xs) -> np.ndarray:
        """Kernel slices ``[k(z_i, x)]``; shape (n, M)."""
        return cross_kernel(Xs, self.Z, self.hyp)

    def variance_from_kvec(self, Ks) -> np.ndarray:
        """Predictive variance (scaled units) given kernel slices."""
        a = solve_lower(self.L_M, Ks.T)
        b = solve_lower(self.L_B, a)
        var = self.hyp.sigma_f2 - np.einsum("ij,ij->j", a, a) + np.einsum("ij,ij->j", b, b)
        return np.clip(var, 0.0, self.hyp.sigma_f2)

    def predict(self, Xs):
        Ks = self.kvec(Xs)
        return Ks @ self.alpha0 * self.y_scale, self.variance_from_kvec(Ks) * self.y_scale**2

    def variance_reduction_matrix(self) -> np.ndarray:
        """``K_M^-1 - Q_M^-1`` (scaled units)."""
        I = np.eye(self.M)
        Kinv = np.linalg.solve(self.L_M.T, np.linalg.solve(self.L_M, I))
        LA_inv = np.linalg.solve(self.L_B, np.linalg.solve(self.L_M, I))
        return Kinv - LA_inv.T @ LA_inv

    def log_likelihood(self) -> float:
        return fitc_log_likelihood(self.hyp, self.Z, self.X, self.y / self.y_scale)[0]


@dataclass
class SPGPModel:
    """Independent FITC models, one per output dimension."""

    dims: List[SPGPDim]
    mode: str = FIXED_SUBSET
    dataset_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.dims[0].M

    @property
    def n_outputs(self) -> int:
        return len(self.dims)

    @property
    def hyperparams(self) -> List[Hyperparams]:
        return [d.hyp for d in self.dims]

    def predict(self, Xs):
        out = [d.predict(Xs) for d in self.dims]
        return np.column_stack([o[0] for o in out]), np.column_stack([o[1] for o in out])

    def prior_variance(self) -> np.ndarray:
        return np.array([d.hyp.sigma_f2 * d.y_scale**2 for d in self.dims])

    def to_dict(self) -> dict:
        return {
            "kind": "spgp",
            "mode": self.mode,
            "dataset_sha256": self.dataset_hash,
            "dims": [
                {
                    "hyperparams": d.hyp.to_dict(),
                    "y_scale": d.y_scale,
                    "inducing": d.Z.tolist(),
                    "alpha0": d.alpha0.tolist(),
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
    def load(cls, path, dataset: Dataset) -> "SPGPModel":
        return cls.from_dict(json.loads(Path(path).read_text()), dataset)

    @classmethod
    def from_dict(cls, d: dict, dataset: Dataset) -> "SPGPModel":
        if d.get("kind") != "spgp":
            raise ValueError(f"not a sparse-GP model file (kind={d.get('kind')!r})")
        if d["dataset_sha256"] and d["dataset_sha256"] != dataset.sha256():
            raise ValueError("dataset does not match the model's dataset hash")
        dims = []
        for j, e in enumerate(d["dims"]):
            fit = FitResult(**e["fit"]) if e.get("fit") else None
            dim = SPGPDim(dataset.X, dataset.Y[:, j], np.array(e["inducing"]),
                          Hyperparams.from_dict(e["hyperparams"]), e["y_scale"], fit)
            stored = np.array(e["alpha0"])
            if not np.allclose(stored, dim.alpha0, rtol=1e-9, atol=1e-12 * max(1.0, np.abs(stored).max())):
                raise ValueError(f"dimension {j}: recomputed alpha0 disagrees with the stored one")
            dim.alpha0 = stored
            dims.append(dim)
        return cls(dims, d.get("mode", FIXED_SUBSET), d["dataset_sha256"], d.get("meta", {}))


def spgp_fit(
    D: Dataset,
    M: int,
    mode: str = FIXED_SUBSET,
    *,
    seed: int = 0,
    inducing: Optional[np.ndarray] = None,
    init: Optional[Sequence[Hyperparams]] = None,
    optimize_hyperparams: bool = True,
    normalize_y: bool = False,
    maxiter: int = 200,
    gtol: float = 1e-6,
    ls_log_bounds=LS_LOG_BOUNDS,
) -> SPGPModel:
    """Fit a FITC model per output column.

    In ``fixed-subset`` mode the inducing inputs are a seeded random subset of
    the training inputs (or ``inducing`` when given) and only the kernel
    hyperparameters are optimized.  In ``optimized`` mode the inducing inputs
    are optimized jointly with them.
    """
    if mode not in (FIXED_SUBSET, OPTIMIZED):
        raise ValueError(f"unknown inducing mode {mode!r}")
    if not 1 <= M <= D.N:
        raise ValueError(f"need 1 <= M <= N, got M={M}, N={D.N}")
    if inducing is None:
        rng = np.random.default_rng(seed)
        Z0 = D.X[np.sort(rng.choice(D.N, size=M, replace=False))]
    else:
        Z0 = np.atleast_2d(np.asarray(inducing, dtype=float))
        if Z0.shape != (M, D.X.shape[1]):
            raise ValueError(f"inducing inputs must have shape {(M, D.X.shape[1])}")

    dims = []
    for j in range(D.n_outputs):
        s = _y_scale(D.Y[:, j], normalize_y)
        y = D.Y[:, j] / s
        h0 = init[j] if init is not None else initial_hyperparams(D.X, y)
        Z, h, fit = Z0, h0, None
        if optimize_hyperparams:
            theta0 = h0.to_log()
            nh = theta0.size
            if mode == FIXED_SUBSET:
                theta, fit = maximize_evidence(
                    lambda th: fitc_log_likelihood(Hyperparams.from_log(th), Z0, D.X, y),
                    theta0, _log_bounds(theta0, ls_log_bounds), maxiter=maxiter, gtol=gtol,
                )
                h = Hyperparams.from_log(theta)
            else:
                p0 = np.concatenate([theta0, Z0.ravel()])
                bounds = _log_bounds(theta0, ls_log_bounds) + [(None, None)] * Z0.size

                def obj(p):
                    return fitc_log_likelihood(Hyperparams.from_log(p[:nh]), p[nh:].reshape(Z0.shape), D.X, y, True)

                p, fit = maximize_evidence(obj, p0, bounds, maxiter=maxiter, gtol=gtol)
                h = Hyperparams.from_log(p[:nh])
                Z = p[nh:].reshape(Z0.shape)
        dims.append(SPGPDim(D.X, D.Y[:, j], Z, h, s, fit))
    return SPGPModel(dims, mode, D.sha256())


def spgp_predict(model: SPGPModel, x):
    """FITC predictive mean and variance at a single input; shapes (P,)."""
    if model is None or not getattr(model, "dims", None):
        raise RuntimeError("sparse GP model is not fitted")
    mu, var = model.predict(np.atleast_2d(x))
    return mu[0], var[0]
