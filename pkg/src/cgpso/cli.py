"""Command-line front end.

Subcommands: `simulate` writes benchmark datasets as CSV, `train` fits a
model to a dataset with any of the six optimisers, `evaluate` scores a saved
model on a dataset, `gradcheck` compares analytic and finite-difference
gradients on a small dataset, and `experiment` runs a JSON-described batch.

Exit codes: 0 on success, 1 on runtime failures (bad config, missing files,
diverged runs), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import systems
from .data import load_dataset_csv, save_dataset_csv, split_dataset
from .harness import (ConfigError, ExperimentConfig, build_bounds,
                      run_experiment)
from .kernel import Hyperparameters, KernelConfig, sample_hyperparameters
from .local import FitnessProblem, restarted_local
from .model import (HyperparameterObjective, condition, load_model,
                    mse_per_output, nll, save_model)
from .numerics import RngStream, fd_gradient
from .pso import PsoConfig, VARIANTS

_GRADCHECK_MAX_POINTS = 20


def _range_arg(text: str):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as e:
        raise argparse.ArgumentTypeError(
            f"expected LOW:HIGH, got {text!r}") from e


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cgpso",
        description="Convolved-GP modelling with swarm-trained hyperparameters")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a benchmark system to CSV")
    sim.add_argument("system", choices=("narx", "ltv", "nltv"))
    sim.add_argument("--n", type=int, default=None,
                     help="number of dataset rows (system default if omitted)")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--second-output", choices=("linear", "nonlinear"),
                     default=None, help="narx only: derive a second channel")
    sim.add_argument("--u-low", type=float, default=None)
    sim.add_argument("--u-high", type=float, default=None)
    sim.add_argument("--dt", type=float, default=0.05, help="ltv step size")
    sim.add_argument("--t-end", type=float, default=None,
                     help="ltv horizon; rows = t_end / dt")
    sim.add_argument("--trajectory", choices=("step", "curve"), default="step",
                     help="nltv row-count preset")
    sim.add_argument("--hold", type=int, default=1,
                     help="nltv: steps each input level is held")
    sim.add_argument("--settle", type=int, default=0,
                     help="nltv: keep only rows with this many unchanged "
                          "input steps behind them")
    sim.add_argument("--noise", type=float, default=0.005,
                     help="nltv output noise scale")

    tr = sub.add_parser("train", help="fit hyperparameters to a dataset CSV")
    tr.add_argument("data", help="dataset CSV")
    tr.add_argument("--opt", default="pso_hybrid",
                    choices=tuple(VARIANTS) + ("cg_restarts", "bfgs_restarts"))
    tr.add_argument("--fitness", default="mse", choices=("mse", "nll"))
    tr.add_argument("--train", type=int, required=True,
                    help="training rows per output")
    tr.add_argument("--val", type=int, default=0,
                    help="validation rows per output (needed for mse fitness)")
    tr.add_argument("--range", type=_range_arg, default=(1e-8, 100.0),
                    metavar="LOW:HIGH", help="search range for all coordinates")
    tr.add_argument("--sigma2-range", type=_range_arg, default=None,
                    metavar="LOW:HIGH", help="separate noise-variance range")
    tr.add_argument("--q", type=int, default=1, help="latent groups")
    tr.add_argument("--np", type=int, default=20, help="swarm size")
    tr.add_argument("--tmax", type=int, default=500, help="iteration cap")
    tr.add_argument("--patience", type=int, default=10,
                    help="stalled iterations before restart/refine")
    tr.add_argument("--tau", type=float, default=0.5,
                    help="hybrid switch fraction")
    tr.add_argument("--restarts", type=int, default=100,
                    help="cg/bfgs: number of random starts")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--force", action="store_true")

    ev = sub.add_parser("evaluate", help="score a saved model on a dataset")
    ev.add_argument("model", help="model file from train")
    ev.add_argument("data", help="dataset CSV")
    ev.add_argument("--out", default=None, help="optional per-output CSV")

    gc = sub.add_parser("gradcheck",
                        help="compare analytic and finite-difference gradients")
    gc.add_argument("data", help=f"dataset CSV, at most "
                                 f"{_GRADCHECK_MAX_POINTS} rows total")
    gc.add_argument("--objective", default="both",
                    choices=("nll", "mse", "both"))
    gc.add_argument("--trials", type=int, default=5)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tol", type=float, default=1e-5,
                    help="max allowed relative error")
    gc.add_argument("--q", type=int, default=1)

    ex = sub.add_parser("experiment", help="run a JSON experiment config")
    ex.add_argument("config", help="experiment JSON")
    ex.add_argument("--out", required=True, help="output directory")
    ex.add_argument("--jobs", type=int, default=1)
    ex.add_argument("--seeds", type=int, default=None,
                    help="override the config's n_seeds")
    ex.add_argument("--force", action="store_true",
                    help="write into a non-empty output directory")
    return p


def cmd_simulate(args) -> int:
    if args.system == "narx":
        ds = systems.make_narx_dataset(
            n_rows=args.n if args.n is not None else 1000,
            u_low=args.u_low if args.u_low is not None else -2.0,
            u_high=args.u_high if args.u_high is not None else 4.0,
            seed=args.seed)
        if args.second_output:
            ds = systems.derive_second_output(ds, kind=args.second_output)
    elif args.system == "ltv":
        if args.t_end is not None:
            n = int(round(args.t_end / args.dt))
        else:
            n = args.n if args.n is not None else 200
        ds = systems.make_ltv_dataset(n_rows=n, dt=args.dt)
    else:
        ds = systems.make_nltv_dataset(
            trajectory=args.trajectory, n_rows=args.n,
            u_low=args.u_low if args.u_low is not None else 0.0,
            u_high=args.u_high if args.u_high is not None else 1.0,
            seed=args.seed, noise_scale=args.noise,
            hold=args.hold, settle=args.settle)
    save_dataset_csv(ds, args.out)
    per = "+".join(str(s) for s in ds.sizes)
    print(f"wrote {ds.sizes[0]} records per output ({per} rows) to {args.out}")
    return 0


def cmd_train(args) -> int:
    if args.fitness == "mse" and args.val < 1:
        print("error: --fitness mse needs --val >= 1", file=sys.stderr)
        return 2
    full = load_dataset_csv(args.data)
    out_dir = Path(args.out)
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        print(f"error: {out_dir} is not empty (use --force)", file=sys.stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    train, val, _ = split_dataset(full, n_train=args.train, n_val=args.val,
                                  rng=RngStream(args.seed, 1))
    kconfig = KernelConfig(input_dim=full.input_dim,
                           n_outputs=full.n_outputs, n_latent=args.q)
    range_spec = {"default": args.range}
    if args.sigma2_range:
        range_spec["sigma2"] = args.sigma2_range
    bounds = build_bounds(kconfig, range_spec)
    objective = HyperparameterObjective(
        train, kconfig, fitness=args.fitness,
        eval_data=val if args.fitness == "mse" else None)
    problem = FitnessProblem(objective=objective.value, bounds=bounds,
                             gradient=objective.gradient)
    pso_cfg = PsoConfig(n_particles=args.np, max_iters=args.tmax,
                        stagnation_patience=args.patience,
                        switch_fraction=args.tau, seed=args.seed)
    if args.opt in VARIANTS:
        res = VARIANTS[args.opt](problem, pso_cfg)
        theta, fun = res.x, res.fun
        res.trace.to_csv(out_dir / "trace.csv")
    else:
        res = restarted_local(problem, method=args.opt.replace("_restarts", ""),
                              n_restarts=args.restarts,
                              rng=RngStream(args.seed, 2))
        theta, fun = res.x, res.fun
    hp = Hyperparameters.unflatten(theta, kconfig)
    model = condition(hp, train)
    save_model(model, out_dir / "model.txt")
    train_mse = mse_per_output(train, model)
    print(f"optimizer {args.opt}, fitness {args.fitness}")
    print(f"final fitness {fun:.6g} after {res.n_evals} evaluations")
    for d, v in enumerate(train_mse):
        print(f"train mse output {d + 1}: {v:.6g}")
    print(f"model written to {out_dir / 'model.txt'}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    data = load_dataset_csv(args.data)
    per = mse_per_output(data, model)
    weights = np.array(data.sizes, dtype=float)
    ok = ~np.isnan(per)
    total = float(np.sum(per[ok] * weights[ok]) / np.sum(weights[ok]))
    try:
        data_nll = nll(data, model.hp)
    except Exception:
        data_nll = float("nan")
    for d, v in enumerate(per):
        print(f"mse output {d + 1}: {v:.6g}")
    print(f"mse overall: {total:.6g}")
    print(f"nll: {data_nll:.6g}")
    if args.out:
        lines = ["output_index,mse,n_points"]
        for d, v in enumerate(per):
            lines.append(f"{d},{v:.17g},{data.sizes[d]}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    data = load_dataset_csv(args.data)
    if data.total_points > _GRADCHECK_MAX_POINTS:
        print(f"error: gradcheck is meant for tiny datasets "
              f"(<= {_GRADCHECK_MAX_POINTS} rows, got {data.total_points})",
              file=sys.stderr)
        return 2
    kconfig = KernelConfig(input_dim=data.input_dim,
                           n_outputs=data.n_outputs, n_latent=args.q)
    objectives = (["nll", "mse"] if args.objective == "both"
                  else [args.objective])
    rng = RngStream(args.seed)
    worst = 0.0
    print("objective trial  max_rel_err")
    for obj_name in objectives:
        objective = HyperparameterObjective(
            data, kconfig, fitness=obj_name,
            eval_data=data if obj_name == "mse" else None)
        for trial in range(args.trials):
            hp = sample_hyperparameters(kconfig, rng, low=0.1, high=2.0)
            vec = hp.flatten()
            analytic = objective.gradient(vec)
            numeric = fd_gradient(objective.value, vec, h=1e-6)
            scale = np.maximum(np.abs(analytic), np.maximum(np.abs(numeric), 1e-8))
            rel = float(np.max(np.abs(analytic - numeric) / scale))
            worst = max(worst, rel)
            print(f"{obj_name:9s} {trial + 1:5d}  {rel:.3e}")
    if worst <= args.tol:
        print(f"PASS worst relative error {worst:.3e} <= {args.tol:g}")
        return 0
    print(f"FAIL worst relative error {worst:.3e} > {args.tol:g}")
    return 1


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.seeds is not None:
        d = cfg.to_dict()
        d["n_seeds"] = args.seeds
        cfg = ExperimentConfig.from_dict(d)
    results, agg = run_experiment(cfg, args.out, jobs=args.jobs,
                                  force=args.force)
    n_failed = sum(1 for r in results if r.status != "ok")
    print(f"{len(results)} cells, {n_failed} failed; outputs in {args.out}")
    for row in agg:
        tag = "/".join(v for v in (row["optimizer"], row["fitness"],
                                   row["sweep"]) if v)
        print(f"  {tag}: median mse {row['median_mse']:.6g}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - uniform runtime exit code
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
