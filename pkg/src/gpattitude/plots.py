"""Plotting scripts for saved runs.

The core package never imports matplotlib.  ``emit_plot_scripts`` writes small
standalone scripts next to the CSV files; each one reads the CSVs with numpy
and saves a PNG when executed.  ``render`` runs those scripts in-process and
is the only place that needs the optional ``plots`` extra.
"""

from __future__ import annotations

import runpy
from pathlib import Path
from typing import Dict, List, Optional, Sequence

_PREAMBLE = '''\
"""{title}

Generated by gpattitude emit-plots.  Run with ``python {name}``.
"""
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent
RUNS = {runs!r}


def load(name):
    with open(HERE / name) as f:
        cols = f.readline().strip().split(",")
    data = np.loadtxt(HERE / name, delimiter=",", skiprows=1, ndmin=2)
    return {{c: data[:, i] for i, c in enumerate(cols)}}


def mark_phases(ax, d):
    ph = d["phase"]
    for k in np.flatnonzero(np.diff(ph) != 0):
        ax.axvline(d["t"][k + 1], color="0.6", lw=0.8, ls="--")

'''

_BODIES = {
    "attitude_error": ("Norm of the attitude-error vector part", '''
fig, ax = plt.subplots(figsize=(7, 3.5))
for label, name in RUNS.items():
    d = load(name)
    qn = np.sqrt(d["Qe1"] ** 2 + d["Qe2"] ** 2 + d["Qe3"] ** 2)
    ax.semilogy(d["t"], qn, label=label, lw=1)
mark_phases(ax, d)
ax.set_xlabel("t [s]")
ax.set_ylabel(r"$\\|q_e\\|$")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "attitude_error.png", dpi=150)
'''),
    "angular_velocity": ("Angular velocity components", '''
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
for label, name in RUNS.items():
    d = load(name)
    for j, ax in enumerate(axes):
        ax.plot(d["t"], d[f"w{j}"], label=label, lw=1)
for j, ax in enumerate(axes):
    ax.set_ylabel(rf"$\\omega_{j + 1}$ [rad/s]")
    mark_phases(ax, d)
axes[0].legend()
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(HERE / "angular_velocity.png", dpi=150)
'''),
    "control_torque": ("Applied control torque", '''
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
for label, name in RUNS.items():
    d = load(name)
    for j, ax in enumerate(axes):
        ax.step(d["t"], d[f"u{j}"], where="post", label=label, lw=1)
for j, ax in enumerate(axes):
    ax.set_ylabel(rf"$u_{j + 1}$ [N m]")
    mark_phases(ax, d)
axes[0].legend()
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(HERE / "control_torque.png", dpi=150)
'''),
    "estimation": ("Predicted against true uncertainty with a 2-sigma band", '''
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
for label, name in RUNS.items():
    d = load(name)
    if not np.any(d["mu0"] != 0):
        continue
    post = d["phase"] > 0
    for j, ax in enumerate(axes):
        t, mu, sd = d["t"][post], d[f"mu{j}"][post], np.sqrt(d[f"var{j}"][post])
        ax.plot(t, mu, label=label, lw=1)
        ax.fill_between(t, mu - 2 * sd, mu + 2 * sd, alpha=0.2)
truth = load(next(iter(RUNS.values())))
for j, ax in enumerate(axes):
    ax.plot(truth["t"], truth[f"delta{j}"], "k", lw=0.8, label="true")
    ax.set_ylabel(rf"$\\Delta_{j + 1}$")
axes[0].legend()
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(HERE / "estimation.png", dpi=150)
'''),
    "estimation_error": ("Absolute estimation error per dimension", '''
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
for label, name in RUNS.items():
    d = load(name)
    post = d["phase"] > 0
    if not np.any(d["mu0"][post] != 0):
        continue
    for j, ax in enumerate(axes):
        ax.semilogy(d["t"][post], np.abs(d[f"mu{j}"] - d[f"delta{j}"])[post], label=label, lw=1)
for j, ax in enumerate(axes):
    ax.set_ylabel(rf"$|\\mu_{j + 1} - \\Delta_{j + 1}|$")
axes[0].legend()
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(HERE / "estimation_error.png", dpi=150)
'''),
    "gain_norm": ("Norm of the feedback gains", '''
fig, ax = plt.subplots(figsize=(7, 3))
for label, name in RUNS.items():
    d = load(name)
    ax.plot(d["t"], d["gain_norm"], label=label, lw=1)
ax.set_xlabel("t [s]")
ax.set_ylabel("gain norm")
ax.legend()
fig.tight_layout()
fig.savefig(HERE / "gain_norm.png", dpi=150)
'''),
}

_MONTE_CARLO = ("Monte Carlo steady-state error and MSE", '''
d = load(RUNS["montecarlo"])
ok = d["diverged"] == 0
fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.8))
a.loglog(d["steady_q"][ok], d["steady_omega"][ok], "k*", ms=4)
a.axvline(1e-2, color="r", lw=0.8)
a.axhline(1e-2, color="r", lw=0.8)
a.set_xlabel(r"steady-state $\\|q_e\\|$")
a.set_ylabel(r"steady-state $\\|\\omega\\|$ [rad/s]")
b.loglog(d["mse_q"][ok], d["mse_omega"][ok], "k*", ms=4)
b.axvline(1e-4, color="r", lw=0.8)
b.set_xlabel(r"MSE $q_e$")
b.set_ylabel(r"MSE $\\omega$")
fig.tight_layout()
fig.savefig(HERE / "montecarlo.png", dpi=150)
''')


def _write(out: Path, name: str, title: str, body: str, runs: Dict[str, str]) -> Path:
    path = out / f"plot_{name}.py"
    path.write_text(_PREAMBLE.format(title=title, name=path.name, runs=runs) + body.lstrip("\n"))
    return path


def emit_plot_scripts(run_dir, figures: Optional[Sequence[str]] = None) -> List[Path]:
    """Write one plotting script per figure into ``run_dir``.

    Run CSVs are discovered as ``run_<mode>.csv``; a ``montecarlo.csv``
    table adds the Monte Carlo scatter.  Paths inside the scripts are
    relative to the script, so the directory can be moved as a whole.
    """
    out = Path(run_dir)
    runs = {p.stem[len("run_"):]: p.name for p in sorted(out.glob("run_*.csv"))}
    names = list(figures) if figures is not None else list(_BODIES)
    unknown = set(names) - set(_BODIES) - {"montecarlo"}
    if unknown:
        raise ValueError(f"unknown figures: {sorted(unknown)}")
    written = []
    if runs:
        for name in names:
            if name in _BODIES:
                title, body = _BODIES[name]
                written.append(_write(out, name, title, body, runs))
    if (out / "montecarlo.csv").exists() and (figures is None or "montecarlo" in names):
        title, body = _MONTE_CARLO
        written.append(_write(out, "montecarlo", title, body, {"montecarlo": "montecarlo.csv"}))
    if not written:
        raise FileNotFoundError(f"no run_*.csv or montecarlo.csv in {out}")
    return written


def render(scripts: Sequence[Path]) -> List[Path]:
    """Execute emitted scripts; requires matplotlib."""
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("rendering needs matplotlib; install the 'plots' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pngs = []
    for s in scripts:
        runpy.run_path(str(s), run_name="__main__")
        plt.close("all")
        pngs.append(Path(s).with_name(Path(s).stem[len("plot_"):] + ".png"))
    return pngs
