"""Randomized-parameter sweeps of the ROSGP closed loop."""

from __future__ import annotations

import copy
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .attitude import random_unit_quaternion
from .config import ScenarioConfig
from .metrics import metrics, steady_window
from .scenario import ScenarioError, run_scenario

logger = logging.getLogger(__name__)

Range = Tuple[float, float]

Q_THRESHOLD = 1e-2
OMEGA_THRESHOLD = 1e-2
MSE_THRESHOLD = 1e-4


@dataclass
class Ranges:
    """Uniform sampling ranges; ``lo == hi`` pins a parameter.

    Gains are multiples of ``J_c0`` (baseline) or of the drawn ``J_t``
    (target).  ``random_attitude`` draws the initial attitude uniformly on
    the unit quaternions; otherwise the base config's attitude is kept.
    """

    m_target: Range = (50.0, 100.0)
    J_target: Range = (0.0, 100.0)
    random_attitude: bool = True
    omega0: Range = (-0.1, 0.1)
    K_p_scale: Range = (0.08, 0.25)
    K_d_scale: Range = (0.28, 0.55)
    P0: Range = (1.0, 1000.0)
    K_pt_scale: Range = (0.01, 0.3)
    K_dt_scale: Range = (0.02, 0.8)
    tau_amplitude: Range = (-0.5, 0.5)

    @classmethod
    def fixed(cls, cfg: ScenarioConfig) -> "Ranges":
        """Degenerate ranges reproducing ``cfg`` in every draw."""
        p = cfg.plant
        pin = lambda v: (float(v), float(v))
        return cls(
            m_target=pin(p.m_target), J_target=pin(p.J_target[0]), random_attitude=False,
            omega0=pin(cfg.omega0[0]), K_p_scale=pin(cfg.baseline.K_p_scale),
            K_d_scale=pin(cfg.baseline.K_d_scale), P0=pin(1.0 / cfg.rosgp.varsigma),
            K_pt_scale=pin(p.K_pt_scale), K_dt_scale=pin(p.K_dt_scale),
            tau_amplitude=pin(cfg.disturbance.amplitude[0]),
        )


def draw_config(base: ScenarioConfig, ranges: Ranges, rng: np.random.Generator) -> ScenarioConfig:
    """One randomized scenario; the scenario seed is left unchanged."""
    cfg = copy.deepcopy(base)
    u = lambda r, n=None: rng.uniform(r[0], r[1], n)
    cfg.plant.m_target = float(u(ranges.m_target))
    cfg.plant.J_target = u(ranges.J_target, 3).tolist()
    if ranges.random_attitude:
        cfg.initial_quat = random_unit_quaternion(rng).tolist()
    else:
        rng.standard_normal(4)  # keep the stream aligned with the random case
    cfg.omega0 = u(ranges.omega0, 3).tolist()
    cfg.baseline.K_p_scale = float(u(ranges.K_p_scale))
    cfg.baseline.K_d_scale = float(u(ranges.K_d_scale))
    cfg.rosgp.varsigma = float(1.0 / u(ranges.P0))
    cfg.plant.K_pt_scale = float(u(ranges.K_pt_scale))
    cfg.plant.K_dt_scale = float(u(ranges.K_dt_scale))
    cfg.disturbance.enabled = True
    cfg.disturbance.amplitude = u(ranges.tau_amplitude, 3).tolist()
    cfg.validate()
    return cfg


@dataclass
class RunSummary:
    index: int
    steady_q: float
    steady_omega: float
    mse_q: float
    mse_omega: float
    diverged: bool
    error: Optional[str] = None
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            not self.diverged and self.error is None
            and self.steady_q < Q_THRESHOLD and self.steady_omega < OMEGA_THRESHOLD
            and self.mse_q < MSE_THRESHOLD
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _params(cfg: ScenarioConfig) -> dict:
    return {
        "m_target": cfg.plant.m_target, "J_target": cfg.plant.J_target,
        "initial_quat": cfg.initial_quat, "omega0": cfg.omega0,
        "K_p_scale": cfg.baseline.K_p_scale, "K_d_scale": cfg.baseline.K_d_scale,
        "P0": 1.0 / cfg.rosgp.varsigma, "K_pt_scale": cfg.plant.K_pt_scale,
        "K_dt_scale": cfg.plant.K_dt_scale, "tau_amplitude": cfg.disturbance.amplitude,
    }


def _run_one(args) -> RunSummary:
    i, cfg = args
    try:
        log = run_scenario(cfg, "rosgp")
    except (ScenarioError, ValueError, np.linalg.LinAlgError) as exc:
        return RunSummary(i, np.nan, np.nan, np.nan, np.nan, True, str(exc), _params(cfg))
    if log.diverged:
        return RunSummary(i, np.nan, np.nan, np.nan, np.nan, True, None, _params(cfg))
    m = metrics(log, steady_window(log, cfg.steady_window_fraction))
    return RunSummary(i, m.steady_q, m.steady_omega, m.mse_q, m.mse_omega, False, None, _params(cfg))


@dataclass
class MonteCarloResult:
    runs: List[RunSummary]

    @property
    def pass_fraction(self) -> float:
        return float(np.mean([r.passed for r in self.runs])) if self.runs else float("nan")

    def summary(self) -> dict:
        ok = [r for r in self.runs if not r.diverged and r.error is None]
        n = max(len(self.runs), 1)
        q = np.array([r.steady_q for r in ok])
        w = np.array([r.steady_omega for r in ok])
        mse = np.array([r.mse_q for r in ok])

        def quant(a):
            return {k: float(np.quantile(a, p)) for k, p in [("p50", 0.5), ("p90", 0.9), ("max", 1.0)]} if a.size else {}

        return {
            "n_runs": len(self.runs),
            "n_diverged": len(self.runs) - len(ok),
            "pass_fraction": self.pass_fraction,
            "frac_steady_ok": float(np.sum((q < Q_THRESHOLD) & (w < OMEGA_THRESHOLD))) / n,
            "frac_mse_ok": float(np.sum(mse < MSE_THRESHOLD)) / n,
            "steady_q": quant(q), "steady_omega": quant(w), "mse_q": quant(mse),
        }

    def table(self) -> List[dict]:
        return [r.to_dict() for r in self.runs]

    def save_csv(self, path) -> None:
        """One row per draw: index, metrics, diverged and passed flags."""
        cols = ["index", "steady_q", "steady_omega", "mse_q", "mse_omega", "diverged", "passed"]
        rows = [[r.index, r.steady_q, r.steady_omega, r.mse_q, r.mse_omega, int(r.diverged), int(r.passed)]
                for r in self.runs]
        np.savetxt(path, np.array(rows, dtype=float).reshape(-1, len(cols)), delimiter=",",
                   header=",".join(cols), comments="", fmt="%.17g")


def monte_carlo(base_cfg: ScenarioConfig, ranges: Optional[Ranges] = None, n_runs: int = 50,
                workers: Optional[int] = None) -> MonteCarloResult:
    """Draw ``n_runs`` scenarios and run each in rosgp mode.

    Draw ``i`` uses ``default_rng([base_cfg.seed, i])``, so results do not
    depend on the number of workers.  Diverged runs are recorded, not raised.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    ranges = ranges or Ranges()
    cfgs = [(i, draw_config(base_cfg, ranges, np.random.default_rng([base_cfg.seed, i]))) for i in range(n_runs)]
    workers = workers or os.cpu_count() or 1
    if workers == 1:
        runs = [_run_one(a) for a in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, cfgs))
    runs.sort(key=lambda r: r.index)
    return MonteCarloResult(runs)
