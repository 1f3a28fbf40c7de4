"""Quaternion rigid-body plant for the combined (servicer + target) spacecraft.

Quaternions are plain ``(4,)`` arrays, scalar first: ``Q = [q0, q1, q2, q3]``.
The body rate ``omega`` is expressed in the body frame and the attitude
kinematics are ``Qdot = 0.5 * Q (x) [0, omega]``.

``rotation_matrix(Q)`` returns ``C(Q) = I - 2 q0 [q]x + 2 [q]x [q]x``, the
matrix mapping reference-frame coordinates into body coordinates.

The plant integrates the nominal dynamics plus a hidden uncertainty term
built from the true inertia deviation, an external disturbance torque and
the counter-torque of a still-active target.  The controller never sees
any of it except through sampled states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "AttitudeState",
    "DivergenceError",
    "PlantTruth",
    "SinusoidalDisturbance",
    "conjugate",
    "euler_zyx_to_quat",
    "nominal_dynamics",
    "quat_error",
    "quat_product",
    "random_unit_quaternion",
    "rotation_matrix",
    "skew",
    "step",
    "target_torque",
    "true_uncertainty",
]

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


class DivergenceError(RuntimeError):
    """Raised when the integrated state stops being finite."""

    def __init__(self, t: float, message: str = "plant state diverged"):
        super().__init__(f"{message} at t={t:.6g} s")
        self.t = t


def _as_quat(Q, name="Q", tol=1e-6) -> np.ndarray:
    Q = np.asarray(Q, dtype=float).reshape(4)
    if not np.all(np.isfinite(Q)):
        raise ValueError(f"{name} has non-finite components")
    if abs(np.linalg.norm(Q) - 1.0) > tol:
        raise ValueError(f"{name} is not unit norm (|{name}| = {np.linalg.norm(Q):.3e})")
    return Q


def skew(a) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == cross(a, b)``."""
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


def _cross(a, b) -> np.ndarray:
    # np.cross carries a lot of overhead for 3-vectors inside the RK4 loop
    return np.array(
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    )


def _product(Qi, Qj) -> np.ndarray:
    qi0, qi = Qi[0], Qi[1:]
    qj0, qj = Qj[0], Qj[1:]
    out = np.empty(4)
    out[0] = qi0 * qj0 - qi @ qj
    out[1:] = qi0 * qj + qj0 * qi + _cross(qi, qj)
    return out


def conjugate(Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return np.array([Q[0], -Q[1], -Q[2], -Q[3]])


def quat_product(Qi, Qj) -> np.ndarray:
    """Hamilton product ``Qi (x) Qj`` of two unit quaternions, renormalized."""
    Qi = _as_quat(Qi, "Qi")
    Qj = _as_quat(Qj, "Qj")
    out = _product(Qi, Qj)
    return out / np.linalg.norm(out)


def quat_error(Q_d, Q) -> np.ndarray:
    """Attitude error ``Q_d* (x) Q`` with the scalar part made nonnegative."""
    Qe = quat_product(conjugate(_as_quat(Q_d, "Q_d")), Q)
    if Qe[0] < 0.0:
        Qe = -Qe
    return Qe


def rotation_matrix(Q) -> np.ndarray:
    Q = _as_quat(Q)
    qx = skew(Q[1:])
    return np.eye(3) - 2.0 * Q[0] * qx + 2.0 * qx @ qx


def euler_zyx_to_quat(angles_deg: Sequence[float]) -> np.ndarray:
    """Quaternion from ``[roll, pitch, yaw]`` in degrees, Z-Y-X intrinsic sequence.

    The result is ``Qz(yaw) (x) Qy(pitch) (x) Qx(roll)``.
    """
    roll, pitch, yaw = np.deg2rad(np.asarray(angles_deg, dtype=float))
    qx = np.array([np.cos(roll / 2), np.sin(roll / 2), 0.0, 0.0])
    qy = np.array([np.cos(pitch / 2), 0.0, np.sin(pitch / 2), 0.0])
    qz = np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])
    return quat_product(quat_product(qz, qy), qx)


def random_unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion, scalar part nonnegative."""
    Q = rng.standard_normal(4)
    Q /= np.linalg.norm(Q)
    return -Q if Q[0] < 0 else Q


@dataclass(frozen=True)
class AttitudeState:
    """Attitude quaternion and body rate (rad/s).

    Inside the plant ``quat`` is the inertial attitude; in controller code it
    is the error quaternion w.r.t. the desired frame.  The kinematics are the
    same either way because the desired rate is zero.
    """

    quat: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4).copy()
        w = np.asarray(self.omega, dtype=float).reshape(3).copy()
        q.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "quat", q)
        object.__setattr__(self, "omega", w)

    @property
    def q0(self) -> float:
        return float(self.quat[0])

    @property
    def q(self) -> np.ndarray:
        return self.quat[1:]

    def vector(self) -> np.ndarray:
        """``vec(q, omega)``, the 6-vector fed to the GP."""
        return np.concatenate([self.quat[1:], self.omega])


@dataclass(frozen=True)
class SinusoidalDisturbance:
    """``tau_i(t) = amplitude_i * sin(frequency_i * t + phase_i)`` for ``t >= start``."""

    amplitude: tuple = (0.5, -1.0, 1.5)
    frequency: tuple = (0.1, 0.15, -0.15)
    phase: tuple = (0.0, 0.0, 1.5)
    start: float = 0.0

    def __call__(self, t: float) -> np.ndarray:
        if t < self.start:
            return np.zeros(3)
        a, w, p = self._arrays
        return a * np.sin(w * t + p)

    @property
    def _arrays(self):
        try:
            return self.__dict__["_cache"]
        except KeyError:
            arrs = tuple(np.asarray(v, dtype=float) for v in (self.amplitude, self.frequency, self.phase))
            object.__setattr__(self, "_cache", arrs)
            return arrs


def _zero_torque(t: float) -> np.ndarray:
    return np.zeros(3)


@dataclass
class PlantTruth:
    """Hidden plant parameters.

    Parameters
    ----------
    J_c0 : (3, 3) array
        Nominal inertia known to the controller.
    J_tilde : (3, 3) array
        Inertia deviation; the true inertia is ``J_c0 + J_tilde``.
    tau_d : callable
        External disturbance torque ``t -> (3,)`` in body axes.
    K_pt, K_dt : (3, 3) arrays
        PD gains of the target's own attitude controller.
    target_ref_quat : (4,) array
        Attitude the target tries to hold (inertial).
    target_active : bool
        Whether the target counter-torque acts on the stack.
    mount_quat : (4,) array
        Target frame relative to the combined body frame.
    include_quadratic_term : bool
        Keep the ``-J_c0 J* (w x J* w)`` term of the uncertainty.
    """

    J_c0: np.ndarray
    J_tilde: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    tau_d: Callable[[float], np.ndarray] = _zero_torque
    K_pt: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    K_dt: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    target_ref_quat: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    target_active: bool = False
    mount_quat: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    include_quadratic_term: bool = True
    lambda_J: Optional[float] = None
    lambda_c: Optional[float] = None

    def __post_init__(self):
        self.J_c0 = np.asarray(self.J_c0, dtype=float).reshape(3, 3)
        self.J_tilde = np.asarray(self.J_tilde, dtype=float).reshape(3, 3)
        self.K_pt = np.asarray(self.K_pt, dtype=float).reshape(3, 3)
        self.K_dt = np.asarray(self.K_dt, dtype=float).reshape(3, 3)
        self.target_ref_quat = _as_quat(self.target_ref_quat, "target_ref_quat")
        self.mount_quat = _as_quat(self.mount_quat, "mount_quat")

        if not np.allclose(self.J_c0, self.J_c0.T, rtol=0, atol=1e-9 * np.abs(self.J_c0).max()):
            raise ValueError("J_c0 must be symmetric")
        if not np.allclose(self.J_tilde, self.J_tilde.T, rtol=0, atol=1e-9 * max(1.0, np.abs(self.J_tilde).max())):
            raise ValueError("J_tilde must be symmetric")
        eig = np.linalg.eigvalsh(self.J_c0)
        if self.lambda_c is None:
            self.lambda_c = float(eig[0])
        if self.lambda_J is None:
            self.lambda_J = float(eig[-1])
        if not (eig[0] >= self.lambda_c > 0.0 and eig[-1] <= self.lambda_J * (1 + 1e-12)):
            raise ValueError(
                f"J_c0 eigenvalues {eig} violate lambda_c={self.lambda_c}, lambda_J={self.lambda_J}"
            )

        self.J_c0_inv = np.linalg.inv(self.J_c0)
        A = np.eye(3) + self.J_c0_inv @ self.J_tilde
        if np.linalg.cond(A) > 1e12:
            raise ValueError("I + J_c0^-1 J_tilde is not invertible")
        # J* such that (J_c0 + J_tilde)^-1 = J_c0^-1 + J*
        self.J_star = -np.linalg.solve(A, self.J_c0_inv @ self.J_tilde @ self.J_c0_inv)
        self.J0_J_star = self.J_c0 @ self.J_star
        self._mount_C = rotation_matrix(self.mount_quat)
        self._mount_identity = bool(np.all(self.mount_quat == IDENTITY_QUAT))
        self._ref_conj = conjugate(self.target_ref_quat)

    @property
    def J_true(self) -> np.ndarray:
        return self.J_c0 + self.J_tilde


def nominal_dynamics(x: AttitudeState, u, J_c0) -> np.ndarray:
    """Known part of the error dynamics, ``vec(q_dot, omega_dot)`` (6,)."""
    J_c0 = np.asarray(J_c0, dtype=float)
    if np.linalg.cond(J_c0) > 1e12:
        raise ValueError("J_c0 is singular")
    w = x.omega
    q_dot = 0.5 * (x.q0 * w + _cross(x.q, w))
    w_dot = np.linalg.solve(J_c0, np.asarray(u, dtype=float) - _cross(w, J_c0 @ w))
    return np.concatenate([q_dot, w_dot])


def target_torque(Q_t, omega_t, plant: PlantTruth) -> np.ndarray:
    """PD counter-torque of the target, in target axes."""
    q_et = quat_error(plant.target_ref_quat, Q_t)[1:]
    return -plant.K_pt @ q_et - plant.K_dt @ np.asarray(omega_t, dtype=float)


def _external_torque(Q, omega, t, plant: PlantTruth) -> np.ndarray:
    tau = np.asarray(plant.tau_d(t), dtype=float)
    if plant.target_active:
        # unchecked path: RK4 stages carry slightly non-unit quaternions
        C = plant._mount_C
        Q_t = Q if plant._mount_identity else _product(Q, plant.mount_quat)
        Q_et = _product(plant._ref_conj, Q_t)
        Q_et /= np.sqrt(Q_et @ Q_et)
        if Q_et[0] < 0.0:
            Q_et = -Q_et
        u_t = -plant.K_pt @ Q_et[1:] - plant.K_dt @ (C @ omega)
        tau = tau + C.T @ u_t
    return tau


def _uncertainty(Q, omega, u, t, plant: PlantTruth) -> np.ndarray:
    Js, J0Js, J0 = plant.J_star, plant.J0_J_star, plant.J_c0
    w = omega
    Jsw = Js @ w
    tau = _external_torque(Q, w, t, plant)
    d = -J0Js @ _cross(w, J0 @ w) - _cross(w, Jsw) + J0Js @ u + tau + J0Js @ tau
    if plant.include_quadratic_term:
        d -= J0Js @ _cross(w, Jsw)
    return plant.J_c0_inv @ d


def true_uncertainty(x: AttitudeState, u, t: float, plant: PlantTruth) -> np.ndarray:
    """Hidden angular-acceleration uncertainty ``J_c0^-1 d(omega, u, t)`` (rad/s^2).

    ``x.quat`` must be the inertial attitude; it only matters when the target
    is active.
    """
    return _uncertainty(x.quat, x.omega, np.asarray(u, dtype=float), t, plant)


def _rhs(s: np.ndarray, u: np.ndarray, t: float, plant: PlantTruth) -> np.ndarray:
    Q, w = s[:4], s[4:]
    out = np.empty(7)
    out[0] = -0.5 * (Q[1:] @ w)
    out[1:4] = 0.5 * (Q[0] * w + _cross(Q[1:], w))
    J0 = plant.J_c0
    out[4:] = plant.J_c0_inv @ (u - _cross(w, J0 @ w)) + _uncertainty(Q, w, u, t, plant)
    return out


def step(state: AttitudeState, u, t: float, T_s: float, plant: PlantTruth, substeps: int = 10) -> AttitudeState:
    """Advance the plant by one zero-order-hold period with fixed-step RK4."""
    if not T_s > 0:
        raise ValueError("T_s must be positive")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    u = np.asarray(u, dtype=float).reshape(3)
    s = np.concatenate([state.quat, state.omega])
    h = T_s / substeps
    for i in range(substeps):
        ti = t + i * h
        k1 = _rhs(s, u, ti, plant)
        k2 = _rhs(s + 0.5 * h * k1, u, ti + 0.5 * h, plant)
        k3 = _rhs(s + 0.5 * h * k2, u, ti + 0.5 * h, plant)
        k4 = _rhs(s + h * k3, u, ti + h, plant)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(s)) or np.abs(s[4:]).max() > 1e6:
            raise DivergenceError(ti + h)
    Q = s[:4] / np.linalg.norm(s[:4])
    return AttitudeState(Q, s[4:])
