"""Command-line entry point: ``gpattitude <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, ScenarioConfig
from .gp import Dataset, GPModel
from .metrics import metrics, steady_window
from .montecarlo import monte_carlo
from .plots import emit_plot_scripts, render
from .runlog import RunLog
from .scenario import MODES, ScenarioError, TrainedModels, collect, run_paired, run_scenario, train_models
from .sparse import SPGPModel

logger = logging.getLogger("gpattitude")


def _load_config(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise SystemExit("--config and --preset are mutually exclusive")
    cfg = ScenarioConfig.load(args.config) if args.config else PRESETS[args.preset or "stabilization"]()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def cmd_collect(args) -> int:
    cfg = _load_config(args)
    out = _out(args)
    phase1 = collect(cfg)
    phase1.dataset.save(out / "dataset.csv")
    phase1.log.truncate(cfg.k_switch).save_csv(out / "run_collect.csv")
    cfg.save(out / "config.yaml")
    print(f"wrote {phase1.dataset.N} training pairs to {out / 'dataset.csv'}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out(args)
    ds_path = Path(args.dataset) if args.dataset else out / "dataset.csv"
    ds = Dataset.load(ds_path)
    models = train_models(cfg, ds, full_gp=not args.sparse_only and cfg.gp.train_full_gp)
    models.spgp.save(out / "spgp.json")
    if models.gp is not None:
        models.gp.save(out / "gp.json")
    for j, d in enumerate(models.spgp.dims):
        h = d.hyp
        print(f"dim {j}: sigma_f2={h.sigma_f2:.3g} sigma_eps2={h.sigma_eps2:.3g} "
              f"lengthscales={np.array2string(h.lengthscales, precision=3)}")
    return 0


def _load_models(model_dir: Path, dataset: Dataset):
    spgp = SPGPModel.load(model_dir / "spgp.json", dataset)
    gp_path = model_dir / "gp.json"
    gp = GPModel.load(gp_path, dataset) if gp_path.exists() else None
    return TrainedModels(spgp, gp)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.timing:
        cfg.record_timing = True
    out = _out(args)
    modes = list(MODES) if args.mode == "all" else [args.mode]
    if args.models:
        phase1 = collect(cfg)
        models = _load_models(Path(args.models), phase1.dataset)
        logs = {m: run_scenario(cfg, m, models, phase1) for m in modes}
    else:
        logs = run_paired(cfg, modes)
    cfg.save(out / "config.yaml")
    status = 0
    for mode, log in logs.items():
        log.save_csv(out / f"run_{mode}.csv")
        if log.diverged:
            print(f"{mode}: diverged at t={log.divergence_time:.1f} s")
            status = 1
            continue
        m = metrics(log, steady_window(log, cfg.steady_window_fraction))
        _dump(out / f"metrics_{mode}.json", m.to_dict())
        print(f"{mode}: steady |q_e|={m.steady_q:.3e} |w|={m.steady_omega:.3e} "
              f"MSE q_e={m.mse_q:.3e} est.err={np.array2string(m.est_error, precision=2)}")
    return status


def cmd_montecarlo(args) -> int:
    cfg = _load_config(args)
    out = _out(args)
    res = monte_carlo(cfg, n_runs=args.n_runs, workers=args.workers)
    res.save_csv(out / "montecarlo.csv")
    summary = res.summary()
    _dump(out / "montecarlo.json", {"summary": summary, "runs": res.table()})
    print(json.dumps(summary, indent=2))
    return 0


def cmd_metrics(args) -> int:
    log = RunLog.load_csv(args.log)
    window = args.window if args.window is not None else steady_window(log, args.fraction)
    print(json.dumps(metrics(log, window).to_dict(), indent=2, default=_json_default))
    return 0


def cmd_emit_plots(args) -> int:
    scripts = emit_plot_scripts(args.dir)
    for s in scripts:
        print(s)
    if args.render:
        for png in render(scripts):
            print(png)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpattitude", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp):
        sp.add_argument("--config", help="scenario YAML file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario (default: stabilization)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--out", default="out", help="output directory (default: out)")

    sp = sub.add_parser("collect", help="run the baseline phase and save the training set")
    scenario_args(sp)
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("train", help="fit the sparse (and full) GP on a saved training set")
    scenario_args(sp)
    sp.add_argument("--dataset", help="training CSV (default: <out>/dataset.csv)")
    sp.add_argument("--sparse-only", action="store_true", help="skip the full GP")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("run", help="simulate a scenario in one or all controller modes")
    scenario_args(sp)
    sp.add_argument("--mode", choices=list(MODES) + ["all"], default="all")
    sp.add_argument("--models", help="directory with spgp.json/gp.json from 'train'")
    sp.add_argument("--timing", action="store_true", help="record per-cycle compute time")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("montecarlo", help="randomized-parameter sweep in rosgp mode")
    scenario_args(sp)
    sp.add_argument("--n-runs", type=int, default=50)
    sp.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("metrics", help="summary metrics of a saved run CSV")
    sp.add_argument("log", help="run CSV written by 'run'")
    sp.add_argument("--window", type=float, help="steady-state window in seconds")
    sp.add_argument("--fraction", type=float, default=0.2, help="window as a fraction of the last phase")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("emit-plots", help="write plotting scripts for the CSVs in a directory")
    sp.add_argument("dir", nargs="?", default="out")
    sp.add_argument("--render", action="store_true", help="also run the scripts (needs matplotlib)")
    sp.set_defaults(func=cmd_emit_plots)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
