"""Recursive online sparse GP (ROSGP).

The sparse posterior mean is a weighted sum of M kernel functions centred on
the inducing inputs, ``mu(x) = alpha^T k_M(x)``.  Online, the weights are
re-estimated by exponentially weighted regularized least squares on the
streaming pairs ``(x[k], y[k])``::

    W(alpha) = sum_i lam^(k-i) (y[i] - alpha^T k_M(x[i]))^2 + varsigma lam^k |alpha - alpha[0]|^2

The minimizer is propagated in O(M^2) per sample with the usual rank-one
(Woodbury) update of ``P = Phi^-1``.  Hyperparameters, inducing inputs and the
predictive variance stay frozen at their offline values.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import numpy as np

from .linalg import solve_lower
from .sparse import SPGPModel

DEFAULT_FORGETTING = 0.995


class _Frozen:
    """Per-dimension constants of the sparse model, stacked along axis 0."""

    def __init__(self, model: SPGPModel):
        dims = model.dims
        self.inv_ell = np.array([1.0 / d.hyp.lengthscales for d in dims])          # (P, D)
        self.Z = np.array([d.Z for d in dims]) * self.inv_ell[:, None, :]            # (P, M, D)
        self.sf2 = np.array([d.hyp.sigma_f2 for d in dims])
        self.y_scale = np.array([d.y_scale for d in dims])
        # var = sf2 - |A k|^2 + |C k|^2 with A = L_M^-1 and C = L_B^-1 L_M^-1
        I = np.eye(model.M)
        self.A = np.array([solve_lower(d.L_M, I) for d in dims])
        self.C = np.array([solve_lower(d.L_B, a) for d, a in zip(dims, self.A)])

    def kvecs(self, x) -> np.ndarray:
        """Kernel slices for one input; shape (P, M)."""
        r = self.Z - (np.asarray(x, dtype=float).ravel() * self.inv_ell)[:, None, :]
        return self.sf2[:, None] * np.exp(-0.5 * np.einsum("pmd,pmd->pm", r, r))

    def variance(self, K) -> np.ndarray:
        a = np.einsum("pij,pj->pi", self.A, K)
        b = np.einsum("pij,pj->pi", self.C, K)
        var = self.sf2 - np.einsum("pi,pi->p", a, a) + np.einsum("pi,pi->p", b, b)
        return np.clip(var, 0.0, self.sf2)


@dataclass
class RosgpState:
    """Weights and inverse information matrices for every output dimension.

    ``alpha`` and ``P`` are lists of views into stacked arrays so that all
    output dimensions are updated together.
    """

    model: SPGPModel
    alpha: List[np.ndarray]
    P: List[np.ndarray]
    lam: float = DEFAULT_FORGETTING
    varsigma: object = 1.0
    k: int = 0
    skipped: int = 0
    last_residual: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self._alpha = np.array(self.alpha, dtype=float)
        self._P = np.array(self.P, dtype=float)
        self.alpha, self.P = list(self._alpha), list(self._P)
        self._frozen = _Frozen(self.model)

    @property
    def M(self) -> int:
        return self.model.M

    def copy(self) -> "RosgpState":
        return RosgpState(
            self.model, [a.copy() for a in self.alpha], [p.copy() for p in self.P],
            self.lam, self.varsigma, self.k, self.skipped, self.last_residual.copy(),
        )

    def kvecs(self, x) -> np.ndarray:
        return self._frozen.kvecs(x)

    def update(self, x, y) -> "RosgpState":
        """Absorb one sample in place; returns ``self``."""
        y = np.asarray(y, dtype=float).ravel()
        ok = np.isfinite(y)
        if ok.all():
            ok = slice(None)            # plain slicing avoids copying P
        else:
            self.skipped += 1
        K = self._frozen.kvecs(x)[ok]
        P = self._P[ok]
        Pk = np.einsum("pij,pj->pi", P, K)
        gain = Pk / (self.lam + np.einsum("pi,pi->p", K, Pk))[:, None]
        P = (P - gain[:, :, None] * Pk[:, None, :]) / self.lam
        r = y[ok] / self._frozen.y_scale[ok] - np.einsum("pi,pi->p", self._alpha[ok], K)
        self._P[ok] = 0.5 * (P + P.transpose(0, 2, 1))
        self._alpha[ok] += gain * r[:, None]
        self.last_residual[ok] = r * self._frozen.y_scale[ok]
        self.k += 1
        return self

    def predict(self, x):
        """Online mean and frozen sparse-GP variance at one input; shapes (P,)."""
        f = self._frozen
        K = f.kvecs(x)
        mu = np.einsum("pi,pi->p", K, self._alpha) * f.y_scale
        return mu, f.variance(K) * f.y_scale**2

    def predict_mean(self, x) -> np.ndarray:
        f = self._frozen
        return np.einsum("pi,pi->p", f.kvecs(x), self._alpha) * f.y_scale

    # snapshots -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "kind": "rosgp",
            "dataset_sha256": self.model.dataset_hash,
            "lambda": self.lam,
            "varsigma": self.varsigma,
            "k": self.k,
            "skipped": self.skipped,
            "alpha": [a.tolist() for a in self.alpha],
            "P": [p.tolist() for p in self.P],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_dict(cls, d: dict, model: SPGPModel) -> "RosgpState":
        if d.get("kind") != "rosgp":
            raise ValueError("not a ROSGP snapshot")
        if d["dataset_sha256"] and model.dataset_hash and d["dataset_sha256"] != model.dataset_hash:
            raise ValueError("snapshot was taken with a different sparse model")
        return cls(
            model,
            [np.array(a, dtype=float) for a in d["alpha"]],
            [np.array(p, dtype=float) for p in d["P"]],
            float(d["lambda"]), d["varsigma"], int(d["k"]), int(d.get("skipped", 0)),
        )

    @classmethod
    def load(cls, path, model: SPGPModel) -> "RosgpState":
        return cls.from_dict(json.loads(Path(path).read_text()), model)


def rosgp_init(model: SPGPModel, varsigma, lam: float = DEFAULT_FORGETTING) -> RosgpState:
    """Start from the offline weights with ``P[0] = I / varsigma``.

    ``varsigma`` is a scalar or one value per output dimension.
    """
    vs = np.broadcast_to(np.asarray(varsigma, dtype=float), (model.n_outputs,))
    if np.any(np.isnan(vs)) or np.any(vs <= 0):
        raise ValueError("varsigma must be positive")
    if np.any(vs > 1):
        warnings.warn(f"varsigma={varsigma} is outside (0, 1]", RuntimeWarning)
    if not 0 < lam <= 1:
        raise ValueError("forgetting factor must lie in (0, 1]")
    M = model.M
    return RosgpState(
        model,
        [d.alpha0.copy() for d in model.dims],
        [np.eye(M) / v for v in vs],
        float(lam), vs.tolist() if np.ndim(varsigma) else float(varsigma), 0, 0, np.zeros(model.n_outputs),
    )


def rosgp_update(state: RosgpState, x_tilde, y) -> RosgpState:
    return state.update(x_tilde, y)


def rosgp_predict(state: RosgpState, x_tilde):
    return state.predict(x_tilde)
