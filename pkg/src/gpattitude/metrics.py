"""Summary metrics of a RunLog."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .runlog import RunLog


@dataclass
class Metrics:
    steady_q: float
    steady_omega: float
    mse_q: float
    mse_omega: float
    est_error: np.ndarray            # final-window mean |mu_j - delta_j|, (3,)
    cycle_time: dict                 # mean per-cycle compute time per phase (NaN when not recorded)
    window: float
    diverged: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["est_error"] = [float(v) for v in self.est_error]
        return d


def estimation_error(log: RunLog) -> np.ndarray:
    """Per-step ``|mu_j - delta_j|``; shape (n, 3)."""
    return np.abs(log.mu - log.delta)


def metrics(log: RunLog, window: float, start: Optional[float] = None) -> Metrics:
    """Steady-state and MSE metrics.

    Steady-state values average ``|q_e|`` and ``|omega|`` over the final
    ``window`` seconds; the MSE averages ``|q_e|^2`` and ``|omega|^2`` over
    ``t >= start`` (default: the controller switch time).
    """
    if len(log) == 0:
        raise ValueError("empty RunLog")
    t_end = log.t[-1] + log.T_s
    if not 0 < window <= t_end - log.t[0] + 1e-9:
        raise ValueError(f"window {window} does not fit in a run of {t_end - log.t[0]:.6g} s")
    sel = log.t >= t_end - window - 1e-9
    if not np.any(sel):
        raise ValueError("empty window")
    start = log.switch_time if start is None else start
    post = log.t >= start - 1e-9
    if not np.any(post):
        raise ValueError("no samples after the switch time")

    qn = np.linalg.norm(log.Q_e[:, 1:], axis=1)
    wn = np.linalg.norm(log.omega, axis=1)
    cycle = {}
    for ph in np.unique(log.phase):
        ct = log.cycle_time[log.phase == ph]
        cycle[int(ph)] = float(np.mean(ct)) if np.all(np.isfinite(ct)) and ct.size else float("nan")
    return Metrics(
        steady_q=float(qn[sel].mean()),
        steady_omega=float(wn[sel].mean()),
        mse_q=float(np.mean(qn[post] ** 2)),
        mse_omega=float(np.mean(wn[post] ** 2)),
        est_error=estimation_error(log)[sel].mean(axis=0),
        cycle_time=cycle,
        window=float(window),
        diverged=bool(log.diverged),
    )


def steady_window(log: RunLog, fraction: float = 0.2) -> float:
    """Length of the final ``fraction`` of the last phase, in seconds."""
    t_end = log.t[-1] + log.T_s
    last_start = log.retarget_time if log.retarget_time is not None else log.switch_time
    return fraction * (t_end - last_start)
