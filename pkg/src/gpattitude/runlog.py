"""Per-step simulation record and its CSV/JSON serialization.

CSV column order (one row per sampling instant ``t_k = k T_s``)::

    t, phase, Q0..Q3, Qe0..Qe3, w0..w2, u0..u2, mu0..mu2, var0..var2,
    delta0..delta2, gain_norm, cycle_time

``phase`` is 0 during collection, 1 after the controller switch and 2 after
the re-maneuver.  ``u`` is the torque held over ``[t_k, t_k + T_s)``;
``mu``/``var`` are the model outputs used to compute it and ``delta`` is
the true uncertainty at the same instant.  ``cycle_time`` is NaN unless
timing was requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

COLUMNS = (
    ["t", "phase"]
    + [f"Q{i}" for i in range(4)]
    + [f"Qe{i}" for i in range(4)]
    + [f"w{i}" for i in range(3)]
    + [f"u{i}" for i in range(3)]
    + [f"mu{i}" for i in range(3)]
    + [f"var{i}" for i in range(3)]
    + [f"delta{i}" for i in range(3)]
    + ["gain_norm", "cycle_time"]
)

_BLOCKS = {
    "Q": (2, 6), "Q_e": (6, 10), "omega": (10, 13), "u": (13, 16),
    "mu": (16, 19), "var": (19, 22), "delta": (22, 25),
}


@dataclass
class RunLog:
    """Arrays of length ``n`` (rows) for one simulated run."""

    t: np.ndarray
    phase: np.ndarray
    Q: np.ndarray
    Q_e: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    mu: np.ndarray
    var: np.ndarray
    delta: np.ndarray
    gain_norm: np.ndarray
    cycle_time: np.ndarray
    mode: str = ""
    T_s: float = 0.1
    switch_time: float = 0.0
    retarget_time: Optional[float] = None
    diverged: bool = False
    divergence_time: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int, **kw) -> "RunLog":
        nan = lambda *s: np.full(s, np.nan)
        return cls(
            t=nan(n), phase=np.zeros(n, dtype=int), Q=nan(n, 4), Q_e=nan(n, 4),
            omega=nan(n, 3), u=nan(n, 3), mu=np.zeros((n, 3)), var=np.zeros((n, 3)),
            delta=nan(n, 3), gain_norm=nan(n), cycle_time=nan(n), **kw,
        )

    def __len__(self) -> int:
        return len(self.t)

    def truncate(self, n: int) -> "RunLog":
        arrays = {k: getattr(self, k)[:n].copy() for k in ["t", "phase", "Q", "Q_e", "omega", "u", "mu", "var", "delta", "gain_norm", "cycle_time"]}
        return RunLog(**arrays, mode=self.mode, T_s=self.T_s, switch_time=self.switch_time,
                      retarget_time=self.retarget_time, diverged=self.diverged,
                      divergence_time=self.divergence_time, meta=dict(self.meta))

    def table(self) -> np.ndarray:
        return np.column_stack([
            self.t, self.phase, self.Q, self.Q_e, self.omega, self.u, self.mu,
            self.var, self.delta, self.gain_norm, self.cycle_time,
        ])

    def header(self) -> dict:
        return {
            "mode": self.mode, "T_s": self.T_s, "switch_time": self.switch_time,
            "retarget_time": self.retarget_time, "diverged": self.diverged,
            "divergence_time": self.divergence_time,
        }

    def save_csv(self, path) -> None:
        np.savetxt(path, self.table(), delimiter=",", header=",".join(COLUMNS), comments="", fmt="%.17g")
        Path(str(path) + ".json").write_text(json.dumps(self.header(), indent=2))

    @classmethod
    def load_csv(cls, path) -> "RunLog":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        side = Path(str(path) + ".json")
        header = json.loads(side.read_text()) if side.exists() else {}
        kw = {name: data[:, a:b].copy() for name, (a, b) in _BLOCKS.items()}
        return cls(
            t=data[:, 0].copy(), phase=data[:, 1].astype(int), gain_norm=data[:, 25].copy(),
            cycle_time=data[:, 26].copy(), **kw, **header,
        )

    def identical(self, other: "RunLog") -> bool:
        """Bit-for-bit equality of every deterministic column."""
        a, b = self.table()[:, :-1], other.table()[:, :-1]
        return a.shape == b.shape and a.tobytes() == b.tobytes()
