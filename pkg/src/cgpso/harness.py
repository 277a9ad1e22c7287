"""Batch experiment harness.

Takes a JSON experiment description, runs every (optimizer, fitness, sweep
value, seed) cell, and writes a results bundle: `raw.csv` with one row per
cell, `aggregate.csv` with per-group medians, `timings.csv` with wall-clock
seconds, optional per-cell convergence traces, and a human-readable
`report.txt`.

Everything except the timings is deterministic for a fixed config: cells are
seeded from the master seed and their position in the enumeration, and rows
are collected in enumeration order even when cells run in parallel worker
processes, so re-running an experiment reproduces `raw.csv` byte for byte.

The raw results deliberately carry no wall-clock fields; timings live in
their own file so the deterministic outputs stay comparable across runs.
"""

from __future__ import annotations

import copy
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from . import pso as pso_mod
from . import systems
from .data import Dataset, split_dataset
from .kernel import Hyperparameters, KernelConfig
from .local import Bounds, FitnessProblem, restarted_local
from .model import HyperparameterObjective, condition, mse_per_output, nll
from .numerics import RngStream
from .pso import PsoConfig, VARIANTS

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "run_grid",
    "nll_vs_mse_demo",
    "training_size_sweep",
    "convergence_traces",
    "run_experiment",
    "prepare_cell",
    "aggregate_rows",
]

# Coordinates of precision-like hyperparameters must stay strictly positive;
# search ranges get their lower edge floored here.
_RANGE_FLOOR = 1e-8

_LOCAL_METHODS = ("cg_restarts", "bfgs_restarts")
_MODES = ("grid", "nll_vs_mse", "size_sweep", "traces")
_SYSTEMS = ("narx", "ltv", "nltv")


class ConfigError(Exception):
    """An experiment description failed validation; the message names the
    offending field."""


def _need(d: dict, key: str, types, where: str):
    if key not in d:
        raise ConfigError(f"field '{where}.{key}': missing")
    v = d[key]
    if types is not None and not isinstance(v, types):
        raise ConfigError(
            f"field '{where}.{key}': expected {types}, got {type(v).__name__}")
    return v


def _range_pair(v, where: str):
    if (not isinstance(v, (list, tuple)) or len(v) != 2
            or not all(isinstance(x, (int, float)) for x in v)):
        raise ConfigError(f"field '{where}': expected [low, high]")
    lo, hi = float(v[0]), float(v[1])
    lo = max(lo, _RANGE_FLOOR)
    if not lo < hi:
        raise ConfigError(f"field '{where}': need low < high after flooring "
                          f"at {_RANGE_FLOOR:g}")
    return lo, hi


@dataclass
class ExperimentConfig:
    """Validated experiment description; see `from_dict` for the schema."""

    name: str
    mode: str
    seed: int
    n_seeds: int
    system: dict
    split: dict
    kernel: dict
    fitness: list
    optimizers: list
    range: dict
    pso: dict
    local: dict
    sweep: dict | None
    save_traces: bool

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("field '<root>': expected an object")
        name = _need(d, "name", str, "<root>")
        mode = d.get("mode", "grid")
        if mode not in _MODES:
            raise ConfigError(f"field 'mode': must be one of {_MODES}")
        seed = _need(d, "seed", int, "<root>")
        n_seeds = int(d.get("n_seeds", 10))
        if n_seeds < 1:
            raise ConfigError("field 'n_seeds': must be >= 1")

        system = dict(_need(d, "system", dict, "<root>"))
        sysname = _need(system, "name", str, "system")
        if sysname not in _SYSTEMS:
            raise ConfigError(f"field 'system.name': must be one of {_SYSTEMS}")

        split = dict(_need(d, "split", dict, "<root>"))
        train = _need(split, "train", int, "split")
        if train < 1:
            raise ConfigError("field 'split.train': must be >= 1")
        val = split.get("val", 0)
        if not isinstance(val, int) or val < 0:
            raise ConfigError("field 'split.val': must be an integer >= 0")
        test = split.get("test")
        if test is not None and test != "all" and (
                not isinstance(test, int) or test < 1):
            raise ConfigError("field 'split.test': integer >= 1, \"all\" or null")

        kernel = dict(d.get("kernel", {}))
        if int(kernel.get("n_latent", 1)) < 1:
            raise ConfigError("field 'kernel.n_latent': must be >= 1")

        fitness = _need(d, "fitness", list, "<root>")
        if not fitness or any(f not in ("nll", "mse") for f in fitness):
            raise ConfigError("field 'fitness': non-empty subset of [nll, mse]")
        if "mse" in fitness and val < 1:
            raise ConfigError("field 'split.val': mse fitness needs a "
                              "validation split")

        optimizers = _need(d, "optimizers", list, "<root>")
        known = tuple(VARIANTS) + _LOCAL_METHODS
        if not optimizers or any(o not in known for o in optimizers):
            raise ConfigError(f"field 'optimizers': non-empty subset of {known}")

        rng_spec = dict(d.get("range", {}))
        rng_spec["default"] = _range_pair(rng_spec.get("default", [_RANGE_FLOOR, 100.0]),
                                         "range.default")
        if "sigma2" in rng_spec and rng_spec["sigma2"] is not None:
            rng_spec["sigma2"] = _range_pair(rng_spec["sigma2"], "range.sigma2")

        pso = dict(d.get("pso", {}))
        valid_pso = {f.name for f in dc_fields(PsoConfig)} - {"seed"}
        for key in pso:
            if key not in valid_pso:
                raise ConfigError(f"field 'pso.{key}': unknown setting")

        local = dict(d.get("local", {}))
        for key in local:
            if key not in ("max_iters", "grad_tol", "n_restarts", "budget"):
                raise ConfigError(f"field 'local.{key}': unknown setting")

        sweep = d.get("sweep")
        if sweep is not None:
            sweep = dict(sweep)
            _need(sweep, "path", str, "sweep")
            values = _need(sweep, "values", list, "sweep")
            if not values:
                raise ConfigError("field 'sweep.values': must be non-empty")

        return ExperimentConfig(
            name=name, mode=mode, seed=seed, n_seeds=n_seeds, system=system,
            split=split, kernel=kernel, fitness=list(fitness),
            optimizers=list(optimizers), range=rng_spec, pso=pso, local=local,
            sweep=sweep, save_traces=bool(d.get("save_traces", False)))

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigError(f"invalid JSON: {e}") from e
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "mode": self.mode, "seed": self.seed,
            "n_seeds": self.n_seeds, "system": self.system,
            "split": self.split, "kernel": self.kernel,
            "fitness": self.fitness, "optimizers": self.optimizers,
            "range": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in self.range.items()},
            "pso": self.pso, "local": self.local, "sweep": self.sweep,
            "save_traces": self.save_traces,
        }


def apply_override(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of the config with one dotted-path setting replaced, e.g.
    apply_override(cfg, "pso.n_particles", 50)."""
    d = copy.deepcopy(cfg.to_dict())
    parts = path.split(".")
    node = d
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"sweep path '{path}': no such field")
        node = node[p]
    if parts[-1] not in node and parts[0] not in ("pso", "local", "kernel",
                                                  "range", "system", "split"):
        raise ConfigError(f"sweep path '{path}': no such field")
    node[parts[-1]] = value
    return ExperimentConfig.from_dict(d)


def system_n_outputs(system: dict) -> int:
    if system["name"] == "narx":
        return 2 if system.get("second_output") else 1
    return 2


def build_system_dataset(system: dict) -> Dataset:
    """Simulate the configured system and return its regression dataset."""
    name = system["name"]
    if name == "narx":
        ds = systems.make_narx_dataset(
            n_rows=int(system.get("n_rows", 1000)),
            u_low=float(system.get("u_low", -2.0)),
            u_high=float(system.get("u_high", 4.0)),
            seed=int(system.get("seed", 0)))
        second = system.get("second_output")
        if second:
            ds = systems.derive_second_output(ds, kind=second)
        return ds
    if name == "ltv":
        return systems.make_ltv_dataset(
            n_rows=int(system.get("n_rows", 200)),
            dt=float(system.get("dt", 0.05)))
    return systems.make_nltv_dataset(
        trajectory=system.get("trajectory", "step"),
        n_rows=system.get("n_rows"),
        u_low=float(system.get("u_low", 0.0)),
        u_high=float(system.get("u_high", 1.0)),
        seed=int(system.get("seed", 0)),
        noise_scale=float(system.get("noise_scale", 0.005)),
        hold=int(system.get("hold", 1)),
        settle=int(system.get("settle", 0)))


def build_bounds(kconfig: KernelConfig, range_spec: dict) -> Bounds:
    """Per-coordinate search box: the default range everywhere, with an
    optional separate range for the noise coordinates."""
    lo_d, hi_d = range_spec["default"]
    lo = np.full(kconfig.n_hyperparameters, lo_d)
    hi = np.full(kconfig.n_hyperparameters, hi_d)
    if range_spec.get("sigma2"):
        lo_s, hi_s = range_spec["sigma2"]
        for d in range(kconfig.n_outputs):
            i = kconfig.idx_sigma2(d)
            lo[i], hi[i] = lo_s, hi_s
    return Bounds(lo=lo, hi=hi)


def _pso_budget(pso_cfg: PsoConfig) -> int:
    # initial sweep plus one sweep per iteration
    return pso_cfg.n_particles * (pso_cfg.max_iters + 1)


def enumerate_cells(cfg: ExperimentConfig) -> list:
    """Deterministic cell order: sweep value, optimizer, fitness, seed."""
    sweep_values = cfg.sweep["values"] if cfg.sweep else [None]
    cells = []
    index = 0
    for sv in sweep_values:
        for opt in cfg.optimizers:
            for fit in cfg.fitness:
                for seed_index in range(cfg.n_seeds):
                    cells.append({
                        "index": index, "sweep_value": sv, "optimizer": opt,
                        "fitness": fit, "seed_index": seed_index,
                        "config": cfg.to_dict(),
                    })
                    index += 1
    return cells


@dataclass
class CellResult:
    index: int
    optimizer: str
    fitness: str
    sweep_value: object
    seed_index: int
    status: str
    final_fitness: float = float("nan")
    train_nll: float = float("nan")
    mse_total: float = float("nan")
    mse_outputs: list = field(default_factory=list)
    n_evals: int = 0
    n_grad_evals: int = 0
    theta: np.ndarray | None = None
    elapsed_s: float = 0.0
    trace: object = None


def prepare_cell(cell: dict):
    """Resolve one cell to its concrete ingredients: (train, val, test)
    datasets, kernel configuration, search bounds, objective and problem.
    Deterministic in the cell description alone."""
    cfg = ExperimentConfig.from_dict(cell["config"])
    if cell["sweep_value"] is not None:
        cfg = apply_override(cfg, cfg.sweep["path"], cell["sweep_value"])
    full = build_system_dataset(cfg.system)
    split_rng = RngStream(cfg.seed, 4 * cell["index"] + 1)
    train, val, test = split_dataset(
        full, n_train=int(cfg.split["train"]), n_val=int(cfg.split.get("val", 0)),
        n_test=cfg.split.get("test"), rng=split_rng)
    kconfig = KernelConfig(input_dim=full.input_dim, n_outputs=full.n_outputs,
                           n_latent=int(cfg.kernel.get("n_latent", 1)))
    bounds = build_bounds(kconfig, cfg.range)
    objective = HyperparameterObjective(
        train, kconfig, fitness=cell["fitness"],
        eval_data=val if cell["fitness"] == "mse" else None)
    problem = FitnessProblem(objective=objective.value, bounds=bounds,
                             gradient=objective.gradient)
    return cfg, train, val, test, kconfig, bounds, objective, problem


def run_cell(cell: dict) -> CellResult:
    """Execute one cell; failures are captured in the status field rather
    than raised, so a bad cell cannot take down the whole grid."""
    out = CellResult(index=cell["index"], optimizer=cell["optimizer"],
                     fitness=cell["fitness"], sweep_value=cell["sweep_value"],
                     seed_index=cell["seed_index"], status="ok")
    t0 = time.perf_counter()
    try:
        cfg, train, val, test, kconfig, bounds, objective, problem = \
            prepare_cell(cell)
        opt = cell["optimizer"]
        pso_cfg = PsoConfig(**cfg.pso)
        opt_rng = RngStream(cfg.seed, 4 * cell["index"] + 2)
        if opt in VARIANTS:
            pso_cfg.seed = int(opt_rng.integers(0, 2 ** 62))
            res = VARIANTS[opt](problem, pso_cfg)
            theta, fun = res.x, res.fun
            out.n_evals, out.n_grad_evals = res.n_evals, res.n_grad_evals
            out.trace = res.trace
        else:
            budget = cfg.local.get("budget", "matched")
            max_evals = _pso_budget(pso_cfg) if budget == "matched" else int(budget)
            res = restarted_local(
                problem, method=opt.replace("_restarts", ""),
                n_restarts=int(cfg.local.get("n_restarts", 10 ** 6)),
                rng=opt_rng, max_evals=max_evals,
                max_iters=int(cfg.local.get("max_iters", 100)),
                grad_tol=float(cfg.local.get("grad_tol", 1e-6)))
            theta, fun = res.x, res.fun
            out.n_evals, out.n_grad_evals = res.n_evals, res.n_grad_evals
        out.final_fitness = float(fun)
        out.theta = np.asarray(theta, dtype=float)
        hp = Hyperparameters.unflatten(out.theta, kconfig)
        model = condition(hp, train)
        try:
            out.train_nll = nll(train, hp)
        except Exception:
            out.train_nll = float("nan")
        score_set = test if test is not None else (val if val is not None else train)
        per_out = mse_per_output(score_set, model)
        out.mse_outputs = [float(v) for v in per_out]
        weights = np.array(score_set.sizes, dtype=float)
        ok = ~np.isnan(per_out)
        out.mse_total = float(np.sum(per_out[ok] * weights[ok])
                              / np.sum(weights[ok]))
    except Exception as e:  # noqa: BLE001 - cell isolation is the point
        out.status = f"failed:{type(e).__name__}"
    out.elapsed_s = time.perf_counter() - t0
    return out


def run_grid(cfg: ExperimentConfig, jobs: int = 1):
    """Run every cell of the experiment, single-process or in a worker pool.

    Returns the list of CellResult in enumeration order; the order (and all
    deterministic fields) do not depend on `jobs`.
    """
    cells = enumerate_cells(cfg)
    if jobs <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells, chunksize=1))


# --- output files ----------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _sweep_str(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return _fmt(v)


def write_raw_csv(results: list, n_outputs: int, path):
    cols = (["index", "optimizer", "fitness", "sweep", "seed", "status",
             "final_fitness", "train_nll", "mse_total"]
            + [f"mse_y{d + 1}" for d in range(n_outputs)]
            + ["n_evals", "n_grad_evals", "theta"])
    lines = [",".join(cols)]
    for r in results:
        mse_cols = [
            _fmt(r.mse_outputs[d]) if d < len(r.mse_outputs) else "nan"
            for d in range(n_outputs)]
        theta = (";".join(f"{v:.17g}" for v in r.theta)
                 if r.theta is not None else "")
        lines.append(",".join(
            [str(r.index), r.optimizer, r.fitness, _sweep_str(r.sweep_value),
             str(r.seed_index), r.status, _fmt(r.final_fitness),
             _fmt(r.train_nll), _fmt(r.mse_total)] + mse_cols
            + [str(r.n_evals), str(r.n_grad_evals), theta]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_timings_csv(results: list, path):
    lines = ["index,elapsed_s"]
    for r in results:
        lines.append(f"{r.index},{r.elapsed_s:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate_rows(results: list, n_outputs: int) -> list:
    """Per-(optimizer, fitness, sweep) summary over seeds; failed cells are
    counted but excluded from the statistics.  Pure function of the raw
    rows, so aggregates can be recomputed and checked."""
    groups = {}
    order = []
    for r in results:
        key = (r.optimizer, r.fitness, _sweep_str(r.sweep_value))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    rows = []
    for key in order:
        rs = groups[key]
        ok = [r for r in rs if r.status == "ok"]
        row = {
            "optimizer": key[0], "fitness": key[1], "sweep": key[2],
            "n_ok": len(ok), "n_failed": len(rs) - len(ok),
        }
        def stat(name, vals):
            vals = np.asarray(vals, dtype=float)
            row[f"median_{name}"] = float(np.median(vals)) if vals.size else float("nan")
            row[f"mean_{name}"] = float(np.mean(vals)) if vals.size else float("nan")
            row[f"min_{name}"] = float(np.min(vals)) if vals.size else float("nan")
        stat("mse", [r.mse_total for r in ok])
        for d in range(n_outputs):
            vals = [r.mse_outputs[d] for r in ok
                    if d < len(r.mse_outputs) and not np.isnan(r.mse_outputs[d])]
            row[f"median_mse_y{d + 1}"] = (float(np.median(vals))
                                           if vals else float("nan"))
        stat("final_fitness", [r.final_fitness for r in ok])
        stat("train_nll", [r.train_nll for r in ok])
        row["mean_evals"] = (float(np.mean([r.n_evals + r.n_grad_evals
                                            for r in ok]))
                             if ok else float("nan"))
        rows.append(row)
    return rows


def write_aggregate_csv(agg_rows: list, path):
    if not agg_rows:
        Path(path).write_text("\n")
        return
    cols = list(agg_rows[0].keys())
    lines = [",".join(cols)]
    for row in agg_rows:
        lines.append(",".join(_fmt(row[c]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _median_timings(results: list) -> dict:
    groups = {}
    for r in results:
        key = (r.optimizer, r.fitness, _sweep_str(r.sweep_value))
        groups.setdefault(key, []).append(r.elapsed_s)
    return {k: float(np.median(v)) for k, v in groups.items()}


def write_report(cfg: ExperimentConfig, results: list, agg_rows: list, path):
    lines = [f"experiment: {cfg.name}", f"mode: {cfg.mode}", "",
             "config:", json.dumps(cfg.to_dict(), indent=2), "", "results:"]
    for row in agg_rows:
        head = f"  {row['optimizer']}/{row['fitness']}"
        if row["sweep"]:
            head += f"/sweep={row['sweep']}"
        lines.append(f"{head}: median mse {row['median_mse']:.6g} "
                     f"(ok {row['n_ok']}, failed {row['n_failed']})")
    med_t = _median_timings(results)
    lines += ["", "median wall-clock seconds per cell:"]
    for key, sec in med_t.items():
        tag = "/".join(str(k) for k in key if k != "")
        lines.append(f"  {tag}: {sec:.3f}")
    if cfg.mode == "nll_vs_mse" and cfg.sweep:
        lines += ["", "search-range comparison (all models trained by nll):"]
        med = {}
        for sv in cfg.sweep["values"]:
            key = _sweep_str(sv)
            ok = [r for r in results
                  if _sweep_str(r.sweep_value) == key and r.status == "ok"]
            if not ok:
                continue
            med[key] = (float(np.median([r.mse_total for r in ok])),
                        float(np.median([r.train_nll for r in ok])))
            lines.append(f"  range [{key}]: median test mse {med[key][0]:.6g}, "
                         f"median train nll {med[key][1]:.6g}")
        if len(med) == 2:
            (ka, (mse_a, nll_a)), (kb, (mse_b, nll_b)) = med.items()
            lines.append(f"  mse prefers range [{ka if mse_a < mse_b else kb}]; "
                         f"nll prefers range [{ka if nll_a < nll_b else kb}]")
            n_dis, n_pairs = _disagreement_tally(results, cfg)
            lines.append(f"  per-seed metric orderings disagree in "
                         f"{n_dis}/{n_pairs} seed pairs")
    Path(path).write_text("\n".join(lines) + "\n")


def _disagreement_tally(results: list, cfg: ExperimentConfig):
    """Count seeds where the NLL ordering of the two swept models
    contradicts their MSE ordering."""
    keys = [_sweep_str(v) for v in cfg.sweep["values"]]
    by_cell = {(_sweep_str(r.sweep_value), r.seed_index): r
               for r in results if r.status == "ok"}
    n_dis = n_pairs = 0
    for s in range(cfg.n_seeds):
        a = by_cell.get((keys[0], s))
        b = by_cell.get((keys[1], s))
        if a is None or b is None:
            continue
        n_pairs += 1
        mse_first = a.mse_total < b.mse_total
        nll_first = a.train_nll < b.train_nll
        if mse_first != nll_first:
            n_dis += 1
    return n_dis, n_pairs


def write_outputs(cfg: ExperimentConfig, results: list, out_dir,
                  force: bool = False):
    """Write the full results bundle into `out_dir` (must be empty or absent
    unless `force`)."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise FileExistsError(f"{out} is not empty; pass force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    n_out = system_n_outputs(cfg.system)
    write_raw_csv(results, n_out, out / "raw.csv")
    write_timings_csv(results, out / "timings.csv")
    agg = aggregate_rows(results, n_out)
    write_aggregate_csv(agg, out / "aggregate.csv")
    write_report(cfg, results, agg, out / "report.txt")
    if cfg.save_traces or cfg.mode == "traces":
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for r in results:
            if r.trace is not None:
                r.trace.to_csv(tdir / f"cell_{r.index:04d}_{r.optimizer}"
                                      f"_{r.fitness}_s{r.seed_index}.csv")
        _write_median_traces(results, tdir)
    return agg


def _write_median_traces(results: list, tdir: Path):
    """Per-variant median of the gbest curves over seeds (traces truncated
    to the shortest run in the group)."""
    groups = {}
    for r in results:
        if r.trace is not None and r.status == "ok":
            groups.setdefault(r.optimizer, []).append(r.trace.gbest_values())
    for opt, curves in groups.items():
        n = min(len(c) for c in curves)
        med = np.median(np.stack([c[:n] for c in curves]), axis=0)
        lines = ["t,median_gbest_fitness"]
        for t, v in enumerate(med):
            lines.append(f"{t},{v:.17g}")
        (tdir / f"median_{opt}.csv").write_text("\n".join(lines) + "\n")


def nll_vs_mse_demo(cfg: ExperimentConfig, jobs: int = 1):
    """Train one model per search range under NLL fitness and report both
    metrics for each, flagging seeds where the orderings disagree.

    The mode forces fitness = [nll] and, unless the config supplies its own
    sweep, sweeps the default range over [floor, 1] and [floor, 100]."""
    d = cfg.to_dict()
    d["mode"] = "nll_vs_mse"
    d["fitness"] = ["nll"]
    if d.get("sweep") is None:
        d["sweep"] = {"path": "range.default",
                      "values": [[_RANGE_FLOOR, 1.0], [_RANGE_FLOOR, 100.0]]}
    cfg = ExperimentConfig.from_dict(d)
    return cfg, run_grid(cfg, jobs=jobs)


def training_size_sweep(cfg: ExperimentConfig, jobs: int = 1):
    """Grid over training-set sizes; requires sweep.path == 'split.train'."""
    if cfg.sweep is None or cfg.sweep.get("path") != "split.train":
        raise ConfigError("field 'sweep.path': size_sweep needs 'split.train'")
    return cfg, run_grid(cfg, jobs=jobs)


def convergence_traces(cfg: ExperimentConfig, jobs: int = 1):
    """Grid run with per-cell traces forced on."""
    d = cfg.to_dict()
    d["save_traces"] = True
    cfg = ExperimentConfig.from_dict(d)
    return cfg, run_grid(cfg, jobs=jobs)


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int = 1,
                   force: bool = False):
    """Dispatch on the config's mode, run, and write the results bundle."""
    if cfg.mode == "nll_vs_mse":
        cfg, results = nll_vs_mse_demo(cfg, jobs=jobs)
    elif cfg.mode == "size_sweep":
        cfg, results = training_size_sweep(cfg, jobs=jobs)
    elif cfg.mode == "traces":
        cfg, results = convergence_traces(cfg, jobs=jobs)
    else:
        results = run_grid(cfg, jobs=jobs)
    agg = write_outputs(cfg, results, out_dir, force=force)
    return results, agg
