"""Scenario configuration.

A ``ScenarioConfig`` is a tree of small dataclasses that round-trips through
YAML.  Every field has a default; a YAML file only needs the keys it changes.
``stabilization()`` and ``remaneuver()`` return the two reference scenarios.

Schema (defaults in brackets)::

    seed [0]                      RNG seed for training noise and inducing subset
    T_s [0.1]                     sampling period, s
    collect_end [50]              end of the baseline collection phase, s
    retarget_time [null]          time of the re-maneuver, s (null = none)
    total [150]                   simulated duration, s
    substeps [10]                 RK4 substeps per sampling period
    initial_euler_deg [15, 5, -20]  Z-Y-X intrinsic [roll, pitch, yaw]
    initial_quat [null]           overrides initial_euler_deg when set
    omega0 [0.01, 0.02, -0.01]    rad/s
    Q_d [1, 0, 0, 0]              desired attitude before retarget_time
    Q_d_retarget [0.899, -0.3, 0.2, -0.1]   desired attitude after (normalized)
    steady_window_fraction [0.2]  final fraction of the phase used for steady-state metrics
    record_timing [false]         store per-cycle compute time (non-deterministic column)
    plant:
      J_c0 [600, 450, 600]        nominal inertia (diagonal or 3x3), kg m^2
      J_servicer [405, 405, 405]  servicer body inertia about its own centre of mass
      m_servicer [1080]           kg
      arm_mass [18]               lumped manipulator mass, kg
      arm_inertia [0.09, 2.19, 2.19]
      arm_offset [1.0, 0, 0]      arm centre of mass from servicer centre, m
      m_target [75]               kg
      J_target [36.8, 37.5, 36.8]
      target_offset [2.0, 0, 0]   target centre of mass from servicer centre, m
      J_tilde [null]              explicit inertia deviation; overrides the assembly above
      target_active [true]
      K_pt_scale [0.02]           target P gain as a multiple of J_target
      K_dt_scale [0.05]           target D gain as a multiple of J_target
      mount_euler_deg [0, 0, 0]   target frame relative to the combined body frame
      include_quadratic_term [true]
    disturbance:
      enabled [false]
      amplitude [0.5, -1.0, 1.5]  N m
      frequency [0.1, 0.15, -0.15]  rad/s
      phase [0, 0, 1.5]           rad
      start [0]                   s
    baseline:
      K_p_scale [0.1]             K_p = K_p_scale * J_c0
      K_d_scale [0.3]
    gp:
      M [50]                      inducing inputs
      noise_std [0.05]            training-output noise, rad/s^2
      online_noise_std [0]        noise on the online ROSGP measurements
      inducing_mode [fixed-subset]
      normalize_y [true]
      maxiter [200]
      lengthscale_log_bounds [-2, 8]  log-offsets of the lengthscale box around std(X_d)
      train_full_gp [true]        also fit the full GP used by frozen-gp mode
    rosgp:
      lam [0.995]                 forgetting factor
      varsigma [0.01]             P[0] = I / varsigma
      normalized_features [true]  read P[0] in units of the unit-amplitude kernel,
                                  i.e. use varsigma * sigma_f^4 per dimension
    controller:
      k_p_breve [0.02]
      k_d_breve [0.05]
      c_p [0.1]
      c_d [0.2]
      clamp [null]                null = prior standard deviation of the model
      nu [0.01]
      delta [0.05]
      rkhs_norm [1, 1, 1]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .attitude import (
    PlantTruth,
    SinusoidalDisturbance,
    euler_zyx_to_quat,
)


@dataclass
class PlantConfig:
    J_c0: list = field(default_factory=lambda: [600.0, 450.0, 600.0])
    J_servicer: list = field(default_factory=lambda: [405.0, 405.0, 405.0])
    m_servicer: float = 1080.0
    arm_mass: float = 18.0
    arm_inertia: list = field(default_factory=lambda: [0.09, 2.19, 2.19])
    arm_offset: list = field(default_factory=lambda: [1.0, 0.0, 0.0])
    m_target: float = 75.0
    J_target: list = field(default_factory=lambda: [36.8, 37.5, 36.8])
    target_offset: list = field(default_factory=lambda: [2.0, 0.0, 0.0])
    J_tilde: Optional[list] = None
    target_active: bool = True
    K_pt_scale: float = 0.02
    K_dt_scale: float = 0.05
    mount_euler_deg: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    include_quadratic_term: bool = True

    def J_c0_matrix(self) -> np.ndarray:
        return _as_inertia(self.J_c0)

    def J_target_matrix(self) -> np.ndarray:
        return _as_inertia(self.J_target)

    def assembly_inertia(self) -> np.ndarray:
        """Inertia of servicer + arm + target about the common centre of mass."""
        bodies = [
            (self.m_servicer, _as_inertia(self.J_servicer), np.zeros(3)),
            (self.arm_mass, _as_inertia(self.arm_inertia), np.asarray(self.arm_offset, dtype=float)),
            (self.m_target, self.J_target_matrix(), np.asarray(self.target_offset, dtype=float)),
        ]
        m_tot = sum(b[0] for b in bodies)
        c = sum(m * r for m, _, r in bodies) / m_tot
        J = np.zeros((3, 3))
        for m, Jb, r in bodies:
            d = r - c
            J += Jb + m * (d @ d * np.eye(3) - np.outer(d, d))
        return J

    def J_tilde_matrix(self) -> np.ndarray:
        if self.J_tilde is not None:
            return _as_inertia(self.J_tilde)
        return self.assembly_inertia() - self.J_c0_matrix()


@dataclass
class DisturbanceConfig:
    enabled: bool = False
    amplitude: list = field(default_factory=lambda: [0.5, -1.0, 1.5])
    frequency: list = field(default_factory=lambda: [0.1, 0.15, -0.15])
    phase: list = field(default_factory=lambda: [0.0, 0.0, 1.5])
    start: float = 0.0


@dataclass
class BaselineConfig:
    K_p_scale: float = 0.1
    K_d_scale: float = 0.3


@dataclass
class GPConfig:
    M: int = 50
    noise_std: float = 0.05
    online_noise_std: float = 0.0
    inducing_mode: str = "fixed-subset"
    normalize_y: bool = True
    maxiter: int = 200
    lengthscale_log_bounds: list = field(default_factory=lambda: [-2.0, 8.0])
    train_full_gp: bool = True


@dataclass
class RosgpConfig:
    lam: float = 0.995
    varsigma: float = 0.01
    normalized_features: bool = True


@dataclass
class ControllerConfig:
    k_p_breve: float = 0.02
    k_d_breve: float = 0.05
    c_p: float = 0.1
    c_d: float = 0.2
    clamp: Optional[float] = None
    nu: float = 0.01
    delta: float = 0.05
    rkhs_norm: list = field(default_factory=lambda: [1.0, 1.0, 1.0])


@dataclass
class ScenarioConfig:
    seed: int = 0
    T_s: float = 0.1
    collect_end: float = 50.0
    retarget_time: Optional[float] = None
    total: float = 150.0
    substeps: int = 10
    initial_euler_deg: list = field(default_factory=lambda: [15.0, 5.0, -20.0])
    initial_quat: Optional[list] = None
    omega0: list = field(default_factory=lambda: [0.01, 0.02, -0.01])
    Q_d: list = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    Q_d_retarget: list = field(default_factory=lambda: [0.899, -0.3, 0.2, -0.1])
    steady_window_fraction: float = 0.2
    record_timing: bool = False
    plant: PlantConfig = field(default_factory=PlantConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    gp: GPConfig = field(default_factory=GPConfig)
    rosgp: RosgpConfig = field(default_factory=RosgpConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        self.validate()

    # derived quantities -----------------------------------------------

    @property
    def n_steps(self) -> int:
        return _count(self.total, self.T_s)

    @property
    def k_switch(self) -> int:
        return _count(self.collect_end, self.T_s)

    @property
    def k_retarget(self) -> Optional[int]:
        return None if self.retarget_time is None else _count(self.retarget_time, self.T_s)

    @property
    def N(self) -> int:
        """Training-set size implied by the collection phase."""
        return self.k_switch

    def validate(self) -> None:
        if not self.T_s > 0:
            raise ValueError("T_s must be positive")
        times = [0.0, self.collect_end] + ([self.retarget_time] if self.retarget_time is not None else []) + [self.total]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"phase times must be strictly increasing, got {times}")
        for name, v in [("collect_end", self.collect_end), ("total", self.total), ("retarget_time", self.retarget_time)]:
            if v is not None and abs(v / self.T_s - round(v / self.T_s)) > 1e-9:
                raise ValueError(f"{name}={v} is not a multiple of T_s={self.T_s}")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not 0 < self.steady_window_fraction <= 1:
            raise ValueError("steady_window_fraction must lie in (0, 1]")
        if not 1 <= self.gp.M <= self.N:
            raise ValueError(f"gp.M={self.gp.M} must lie in [1, N={self.N}]")

    def initial_attitude(self) -> np.ndarray:
        if self.initial_quat is not None:
            Q = np.asarray(self.initial_quat, dtype=float)
            return Q / np.linalg.norm(Q)
        return euler_zyx_to_quat(self.initial_euler_deg)

    def desired_attitude(self, k: int) -> np.ndarray:
        kr = self.k_retarget
        Q = self.Q_d_retarget if kr is not None and k >= kr else self.Q_d
        Q = np.asarray(Q, dtype=float)
        return Q / np.linalg.norm(Q)

    def build_plant(self) -> PlantTruth:
        p = self.plant
        J_t = p.J_target_matrix()
        d = self.disturbance
        tau = SinusoidalDisturbance(tuple(d.amplitude), tuple(d.frequency), tuple(d.phase), d.start) if d.enabled else None
        kwargs = {} if tau is None else {"tau_d": tau}
        return PlantTruth(
            J_c0=p.J_c0_matrix(),
            J_tilde=p.J_tilde_matrix(),
            K_pt=p.K_pt_scale * J_t,
            K_dt=p.K_dt_scale * J_t,
            target_ref_quat=self.initial_attitude(),
            target_active=p.target_active,
            mount_quat=euler_zyx_to_quat(p.mount_euler_deg),
            include_quadratic_term=p.include_quadratic_term,
            **kwargs,
        )

    def baseline_gains(self):
        J0 = self.plant.J_c0_matrix()
        return self.baseline.K_p_scale * J0, self.baseline.K_d_scale * J0

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "ScenarioConfig":
        d = dict(d or {})
        nested = {
            "plant": PlantConfig, "disturbance": DisturbanceConfig, "baseline": BaselineConfig,
            "gp": GPConfig, "rosgp": RosgpConfig, "controller": ControllerConfig,
        }
        kwargs = {}
        for key, value in d.items():
            if key in nested:
                kwargs[key] = _build(nested[key], value or {})
            elif key in _field_names(cls):
                kwargs[key] = value
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def _field_names(cls):
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, d: dict):
    unknown = set(d) - _field_names(cls)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


def _count(t: float, T_s: float) -> int:
    return int(round(t / T_s))


def _as_inertia(J) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape == (3,):
        return np.diag(J)
    return J.reshape(3, 3)


def stabilization(**overrides) -> ScenarioConfig:
    """Attitude stabilization from Euler [15, 5, -20] deg to the identity."""
    return ScenarioConfig(**overrides)


def remaneuver(**overrides) -> ScenarioConfig:
    """Stabilization, then a re-maneuver at 150 s with the sinusoidal disturbance on."""
    base = dict(
        retarget_time=150.0,
        total=400.0,
        disturbance=DisturbanceConfig(enabled=True, start=150.0),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


PRESETS = {"stabilization": stabilization, "remaneuver": remaneuver}
