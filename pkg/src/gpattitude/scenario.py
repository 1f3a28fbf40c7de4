"""Closed-loop scenarios: data collection, training, and online control.

A run has up to three phases on one sampling grid ``t_k = k T_s``:

1. ``0 <= t < collect_end``: baseline PD; samples form the training set.
2. ``collect_end <= t``: the selected controller takes over.
3. ``t >= retarget_time`` (optional): new desired attitude.

At each step ``k`` the loop samples ``x[k]``, optionally absorbs the
previous measurement into the ROSGP model, predicts at
``(q_e[k], omega[k], u[k-1])`` (``u[k]`` is not known yet), computes
``u[k]`` and holds it over the next period.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from .attitude import AttitudeState, DivergenceError, PlantTruth, _cross, quat_error, step, true_uncertainty
from .config import ScenarioConfig
from .controller import GainSchedule, baseline_pd, control, zeta
from .gp import Dataset, GPModel, gp_fit
from .rosgp import RosgpState, rosgp_init
from .runlog import RunLog
from .sparse import SPGPModel, spgp_fit

logger = logging.getLogger(__name__)

MODES = ("baseline", "frozen-gp", "rosgp")


class ScenarioError(RuntimeError):
    """The collection phase could not be completed."""


def _seeds(seed: int):
    """Independent integer seeds for noise, inducing subset and online noise."""
    ss = np.random.SeedSequence(seed).spawn(3)
    return [int(s.generate_state(1)[0]) for s in ss]


def residual_outputs(omega_dot, omega, u, J_c0) -> np.ndarray:
    """``omega_dot - J_c0^-1 (u - omega x J_c0 omega)`` row by row."""
    Jw = omega @ J_c0.T
    f = np.linalg.solve(J_c0, (u - np.cross(omega, Jw)).T).T
    return omega_dot - f


def dataset_from_records(cfg: ScenarioConfig, t, Q_e, omega, u) -> Dataset:
    """Training pairs from the collection-phase records.

    Angular acceleration is estimated by central differences (one-sided at
    the ends), then seeded Gaussian noise is added to the outputs.
    """
    N = cfg.N
    t, Q_e, omega, u = t[:N], Q_e[:N], omega[:N], u[:N]
    J0 = cfg.plant.J_c0_matrix()
    omega_dot = np.gradient(omega, cfg.T_s, axis=0, edge_order=1)
    Y = residual_outputs(omega_dot, omega, u, J0)
    rng = np.random.default_rng(_seeds(cfg.seed)[0])
    Y = Y + cfg.gp.noise_std * rng.standard_normal(Y.shape)
    X = np.column_stack([Q_e[:, 1:], omega, u])
    return Dataset(X, Y, np.asarray(t, dtype=float))


def dataset_from_runlog(log: RunLog, cfg: ScenarioConfig) -> Dataset:
    return dataset_from_records(cfg, log.t, log.Q_e, log.omega, log.u)


# simulation core --------------------------------------------------------

@dataclass
class CollectionPhase:
    """Records of the baseline phase plus the plant state at the switch."""

    log: RunLog
    state: AttitudeState
    plant: PlantTruth
    dataset: Dataset


@dataclass
class TrainedModels:
    spgp: SPGPModel
    gp: Optional[GPModel] = None


def _new_log(cfg: ScenarioConfig, mode: str) -> RunLog:
    return RunLog.empty(
        cfg.n_steps, mode=mode, T_s=cfg.T_s, switch_time=cfg.collect_end,
        retarget_time=cfg.retarget_time, meta={"seed": cfg.seed},
    )


def _phase(cfg: ScenarioConfig, k: int) -> int:
    kr = cfg.k_retarget
    if kr is not None and k >= kr:
        return 2
    return 1 if k >= cfg.k_switch else 0


def _record(log: RunLog, k, t, phase, x, Qe, u, mu, var, plant, gain_norm):
    log.t[k] = t
    log.phase[k] = phase
    log.Q[k] = x.quat
    log.Q_e[k] = Qe
    log.omega[k] = x.omega
    log.u[k] = u
    log.mu[k] = mu
    log.var[k] = var
    log.delta[k] = true_uncertainty(x, u, t, plant)
    log.gain_norm[k] = gain_norm


def collect(cfg: ScenarioConfig) -> CollectionPhase:
    """Run the baseline phase and build the training set."""
    plant = cfg.build_plant()
    K_p, K_d = cfg.baseline_gains()
    gain_norm = float(np.hypot(np.linalg.norm(K_p, 2), np.linalg.norm(K_d, 2)))
    log = _new_log(cfg, "collect")
    x = AttitudeState(cfg.initial_attitude(), np.asarray(cfg.omega0, dtype=float))
    zeros = np.zeros(3)
    try:
        for k in range(cfg.k_switch):
            t = k * cfg.T_s
            Qe = quat_error(cfg.desired_attitude(k), x.quat)
            u = baseline_pd(AttitudeState(Qe, x.omega), K_p, K_d)
            _record(log, k, t, 0, x, Qe, u, zeros, zeros, plant, gain_norm)
            x = step(x, u, t, cfg.T_s, plant, cfg.substeps)
    except DivergenceError as exc:
        raise ScenarioError(f"collection phase diverged: {exc}") from exc
    ds = dataset_from_records(cfg, log.t, log.Q_e, log.omega, log.u)
    return CollectionPhase(log, x, plant, ds)


def collect_training_data(cfg: ScenarioConfig) -> Dataset:
    return collect(cfg).dataset


def train_models(cfg: ScenarioConfig, dataset: Dataset, full_gp: Optional[bool] = None) -> TrainedModels:
    """Fit the sparse model (and, optionally, the full GP) on the training set."""
    g = cfg.gp
    seed_inducing = _seeds(cfg.seed)[1]
    spgp = spgp_fit(dataset, g.M, g.inducing_mode, seed=seed_inducing,
                    normalize_y=g.normalize_y, maxiter=g.maxiter,
                    ls_log_bounds=tuple(g.lengthscale_log_bounds))
    gp = None
    if g.train_full_gp if full_gp is None else full_gp:
        gp = gp_fit(dataset, normalize_y=g.normalize_y, maxiter=g.maxiter,
                    ls_log_bounds=tuple(g.lengthscale_log_bounds))
    return TrainedModels(spgp, gp)


def gain_schedule(cfg: ScenarioConfig, prior_variance) -> GainSchedule:
    c = cfg.controller
    clamp = np.sqrt(np.asarray(prior_variance, dtype=float)) if c.clamp is None else c.clamp
    return GainSchedule(cfg.plant.J_c0_matrix(), c.k_p_breve, c.k_d_breve, c.c_p, c.c_d, clamp)


def rosgp_varsigma(cfg: ScenarioConfig, spgp: SPGPModel):
    """Initial precision per dimension.

    With ``normalized_features`` the configured ``P[0]`` applies to kernel
    slices divided by the signal variance, which makes it independent of the
    fitted kernel amplitude.
    """
    if not cfg.rosgp.normalized_features:
        return cfg.rosgp.varsigma
    return np.array([cfg.rosgp.varsigma * d.hyp.sigma_f2**2 for d in spgp.dims])


def _continue(cfg: ScenarioConfig, phase1: CollectionPhase, models: Optional[TrainedModels], mode: str) -> RunLog:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    log = _new_log(cfg, mode)
    n1 = cfg.k_switch
    for name in ["t", "phase", "Q", "Q_e", "omega", "u", "mu", "var", "delta", "gain_norm", "cycle_time"]:
        getattr(log, name)[:n1] = getattr(phase1.log, name)[:n1]

    plant = phase1.plant
    J0 = cfg.plant.J_c0_matrix()
    J0_inv = np.linalg.inv(J0)
    T_s = cfg.T_s
    K_p, K_d = cfg.baseline_gains()

    rosgp: Optional[RosgpState] = None
    frozen = None
    schedule = None
    if mode == "rosgp":
        rosgp = rosgp_init(models.spgp, rosgp_varsigma(cfg, models.spgp), cfg.rosgp.lam)
        schedule = gain_schedule(cfg, models.spgp.prior_variance())
    elif mode == "frozen-gp":
        frozen = models.gp if models.gp is not None else models.spgp
        schedule = gain_schedule(cfg, frozen.prior_variance())
    online_rng = np.random.default_rng(_seeds(cfg.seed)[2])
    noise = cfg.gp.online_noise_std

    x = phase1.state
    x_prev, u_prev, Qe_prev = phase1.log.omega[n1 - 1], phase1.log.u[n1 - 1], phase1.log.Q_e[n1 - 1]
    k = n1
    try:
        for k in range(n1, cfg.n_steps):
            t = k * T_s
            Qe = quat_error(cfg.desired_attitude(k), x.quat)
            xe = AttitudeState(Qe, x.omega)
            tic = time.perf_counter() if cfg.record_timing else 0.0
            if mode == "baseline":
                mu = var = np.zeros(3)
                u = baseline_pd(xe, K_p, K_d)
                gn = float(np.hypot(np.linalg.norm(K_p, 2), np.linalg.norm(K_d, 2)))
            else:
                if rosgp is not None:
                    w_prev = x_prev
                    f_prev = J0_inv @ (u_prev - _cross(w_prev, J0 @ w_prev))
                    y = (x.omega - w_prev) / T_s - f_prev
                    if noise > 0:
                        y = y + noise * online_rng.standard_normal(3)
                    rosgp.update(np.concatenate([Qe_prev[1:], w_prev, u_prev]), y)
                x_tilde = np.concatenate([Qe[1:], x.omega, u_prev])
                if rosgp is not None:
                    mu, var = rosgp.predict(x_tilde)
                else:
                    m, v = frozen.predict(x_tilde[None, :])
                    mu, var = m[0], v[0]
                u = control(xe, mu, var, schedule)
                gn = float(np.hypot(np.linalg.norm(zeta(schedule, "p", var), 2),
                                    np.linalg.norm(zeta(schedule, "d", var), 2)))
            if cfg.record_timing:
                log.cycle_time[k] = time.perf_counter() - tic
            _record(log, k, t, _phase(cfg, k), x, Qe, u, mu, var, plant, gn)
            x_prev, u_prev, Qe_prev = x.omega, u, Qe
            x = step(x, u, t, T_s, plant, cfg.substeps)
    except (DivergenceError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("%s run diverged at step %d: %s", mode, k, exc)
        out = log.truncate(k)
        out.diverged = True
        out.divergence_time = k * T_s
        return out
    if rosgp is not None:
        log.meta["rosgp_skipped"] = rosgp.skipped
    return log


def run_scenario(cfg: ScenarioConfig, mode: str, models: Optional[TrainedModels] = None,
                 phase1: Optional[CollectionPhase] = None) -> RunLog:
    """Simulate one full run in ``mode``; trains models from phase 1 when not given."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    phase1 = phase1 or collect(cfg)
    if mode != "baseline" and models is None:
        models = train_models(cfg, phase1.dataset, full_gp=(mode == "frozen-gp" and cfg.gp.train_full_gp))
    return _continue(cfg, phase1, models, mode)


def run_paired(cfg: ScenarioConfig, modes: Iterable[str] = MODES) -> Dict[str, RunLog]:
    """Run several modes sharing one collection phase and one set of models."""
    modes = list(modes)
    phase1 = collect(cfg)
    models = None
    if any(m != "baseline" for m in modes):
        models = train_models(cfg, phase1.dataset, full_gp="frozen-gp" in modes and cfg.gp.train_full_gp)
    return {m: _continue(cfg, phase1, models, m) for m in modes}
