"""GP-compensating attitude controller with variance-scheduled PD gains.

The feedback law is::

    u = -zeta_p(Sigma) q_e - zeta_d(Sigma) omega - J_c0 mu + omega x J_c0 omega

where ``mu`` and ``Sigma`` are the GP predictive mean and (diagonal) variance
of the angular-acceleration uncertainty.  Each gain grows linearly with the
predictive standard deviation, capped at ``clamp`` so it stays bounded for
any input.  ``ultimate_bounds`` evaluates the Lyapunov-based ultimate bound
on ``|q_e|`` and ``|omega|`` for a given model-error level ``epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .attitude import AttitudeState, _cross


@dataclass(frozen=True)
class GainSchedule:
    """``zeta = J_c0 (k + c * min(Sigma^1/2, clamp))`` for the p and d channels.

    ``clamp`` may be a scalar or a per-axis 3-vector (in the units of the
    predictive standard deviation).
    """

    J_c0: np.ndarray = field(default_factory=lambda: np.diag([600.0, 450.0, 600.0]))
    k_p_breve: float = 0.02
    k_d_breve: float = 0.05
    c_p: float = 0.1
    c_d: float = 0.2
    clamp: object = np.inf

    def __post_init__(self):
        J = np.asarray(self.J_c0, dtype=float).reshape(3, 3)
        object.__setattr__(self, "J_c0", J)
        if not (self.k_p_breve > 0 and self.k_d_breve > 0):
            raise ValueError("base gains must be positive")
        if self.c_p < 0 or self.c_d < 0:
            raise ValueError("variance coefficients must be nonnegative")
        clamp = np.broadcast_to(np.asarray(self.clamp, dtype=float), (3,)).copy()
        if np.any(clamp < 0) or np.any(np.isnan(clamp)):
            raise ValueError("clamp must be nonnegative")
        object.__setattr__(self, "clamp", clamp)

    def _coeffs(self, which: str):
        if which == "p":
            return self.k_p_breve, self.c_p
        if which == "d":
            return self.k_d_breve, self.c_d
        raise ValueError(f"which must be 'p' or 'd', got {which!r}")

    def bounds(self, which: str):
        """Eigenvalue bounds ``(zeta_min, zeta_max)`` over all admissible Sigma."""
        k, c = self._coeffs(which)
        eig = np.linalg.eigvalsh(self.J_c0)
        return float(eig[0] * k), float(eig[-1] * (k + c * self.clamp.max()))


def _variance_vector(Sigma) -> np.ndarray:
    S = np.asarray(Sigma, dtype=float)
    if S.shape == (3, 3):
        if np.any(S - np.diag(np.diag(S))):
            raise ValueError("Sigma must be diagonal")
        S = np.diag(S)
    S = S.reshape(3)
    if np.any(np.isnan(S)) or np.any(S < 0):
        raise ValueError("variance must be nonnegative")
    return S


def zeta(schedule: GainSchedule, which: str, Sigma) -> np.ndarray:
    """Scheduled gain matrix for channel ``which`` ('p' or 'd').

    ``Sigma`` is the predictive variance, either as a diagonal matrix or as
    the 3-vector of its diagonal.
    """
    k, c = schedule._coeffs(which)
    s = np.minimum(np.sqrt(_variance_vector(Sigma)), schedule.clamp)
    return schedule.J_c0 * (k + c * s)[None, :]


def control(x: AttitudeState, mu, Sigma, schedule: GainSchedule) -> np.ndarray:
    """Feedback torque for error state ``x = (Q_e, omega)``."""
    J0 = schedule.J_c0
    w = x.omega
    S = _variance_vector(Sigma)
    u = -zeta(schedule, "p", S) @ x.q - zeta(schedule, "d", S) @ w
    u = u - J0 @ np.asarray(mu, dtype=float) + _cross(w, J0 @ w)
    if not np.all(np.isfinite(u)):
        raise ValueError("control torque is not finite")
    return u


def baseline_pd(x: AttitudeState, K_p, K_d) -> np.ndarray:
    """Fixed-gain PD law ``-K_p q_e - K_d omega``."""
    return -np.asarray(K_p, dtype=float) @ x.q - np.asarray(K_d, dtype=float) @ x.omega


# ultimate bounds --------------------------------------------------------

@dataclass(frozen=True)
class BoundConfig:
    """Constants of the ultimate-bound analysis.

    ``nu`` couples attitude and rate in the Lyapunov function; it must be
    small enough that ``zeta_d_min - nu * lambda_J / 2 > 0``.
    """

    nu: float = 0.01
    delta: float = 0.05
    rkhs_norm: tuple = (1.0, 1.0, 1.0)
    lambda_J: float = 600.0
    lambda_c: float = 450.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not (self.lambda_J > 0 and self.lambda_c > 0):
            raise ValueError("inertia bounds must be positive")


@dataclass(frozen=True)
class UltimateBounds:
    q_bound: float
    omega_bound: float
    s1: float
    s2: float
    q_bound_direct: float
    q_bound_scalar: float
    probability: float


def bound_matrices(cfg: BoundConfig, schedule: GainSchedule):
    """Return ``(M_l, M_s, zeta_bar_sum)`` for the given gains."""
    zp_min, zp_max = schedule.bounds("p")
    zd_min, zd_max = schedule.bounds("d")
    nu, lJ = cfg.nu, cfg.lambda_J
    M_l = np.diag([nu * zp_min, zd_min - 0.5 * nu * lJ])
    zsum = zp_max + nu * zd_max
    M_s = np.array([[2.0 * zsum, 0.5 * nu * lJ], [0.5 * nu * lJ, 0.5 * lJ]])
    return M_l, M_s, zsum


def ultimate_bounds(cfg: BoundConfig, schedule: GainSchedule, epsilon: float) -> UltimateBounds:
    """Ultimate bounds on ``|q_e|`` and ``|omega|``.

    The attitude bound is reported both from the Lyapunov level set directly
    (``q_bound_direct``) and through the scalar quaternion part
    (``q_bound_scalar``); ``q_bound`` is the smaller of the two.  Both hold
    with probability ``(1 - delta)^3``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    M_l, M_s, zsum = bound_matrices(cfg, schedule)
    if M_l[1, 1] <= 0:
        raise ValueError(
            f"M_l is not positive definite: zeta_d_min - nu*lambda_J/2 = {M_l[1, 1]:.4g} <= 0; reduce nu"
        )
    lmin_l = float(np.linalg.eigvalsh(M_l)[0])
    lmax_s = float(np.linalg.eigvalsh(M_s)[-1])
    theta = np.sqrt(1.0 / (2.0 * cfg.lambda_c)) + cfg.nu * np.sqrt(1.0 / (2.0 * zsum))
    s1 = np.sqrt(2.0) * cfg.lambda_J * epsilon * theta * lmax_s / lmin_l
    s2 = lmin_l / (2.0 * lmax_s)
    q_direct = s1 / np.sqrt(zsum)
    r = 1.0 - s1**2 / (2.0 * zsum)
    q_scalar = float(np.sqrt(1.0 - r**2)) if r > 0 else 1.0
    return UltimateBounds(
        q_bound=float(min(q_direct, q_scalar)),
        omega_bound=float(np.sqrt(2.0 / cfg.lambda_c) * s1),
        s1=float(s1),
        s2=float(s2),
        q_bound_direct=float(q_direct),
        q_bound_scalar=q_scalar,
        probability=float((1.0 - cfg.delta) ** 3),
    )


def epsilon_from_grid(beta, variance: Callable[[np.ndarray], np.ndarray], grid: Iterable) -> float:
    """``|beta| * max_x |Sigma(x)^1/2|`` over a user-supplied input grid.

    ``variance`` maps an (n, D) array of inputs to (n, P) predictive variances.
    """
    G = np.atleast_2d(np.asarray(list(grid) if not isinstance(grid, np.ndarray) else grid, dtype=float))
    var = np.atleast_2d(variance(G))
    sup_std = float(np.sqrt(np.max(var)))
    return float(np.linalg.norm(np.asarray(beta, dtype=float)) * sup_std)
