"""Experiment runner: reproduces the three comparisons end to end.

Experiments are configured through a TOML file (one section per
experiment plus a [run] section); every hyperparameter that the source
material leaves open appears explicitly in ``print-defaults`` so the
calibration choices are visible. Artifacts are CSV files plus a JSON
manifest with content hashes; sequential reruns with the same config
reproduce identical hashes.
"""

import argparse
import hashlib
import json
import shutil
import sys
import time
import warnings
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import models
from .adjoint import pendulum_cost, pnaa_fit, quadratic_cost, tilted_cost
from .finetune import (
    FinetuneConfig,
    build_pretrained_model,
    finetune_adjoint_matching,
    finetune_trbsde,
    sample_terminal,
)
from .oracles import LinearModelConfig, mc_cost_map, mse_vs_oracle, tilted_mixture
from .pendulum import SupportOptConfig, optimize_support
from .score import GaussianMixture1D
from .sde import GaussianSampler, TimeGrid, ZeroControl, domain_seed, path_rng, simulate_forward
from .trbsde import SolvePhiConfig, solve_phi

DEFAULTS = {
    "run": {
        "experiment": "lq-sweep",
        "seed": 0,
    },
    "lq-sweep": {
        "epsilons": [0.2, 0.5, 1.0],
        "n_seeds": 10,
        "T": 2.0,
        "n_steps": 100,
        "n_paths": 2000,
        "J_f": 10,
        "reg_steps": 2000,
        "score_steps": 2000,
        "batch_size": 128,
        "pnaa_steps": 20000,
        "eval_n": 10000,
    },
    "pendulum": {
        "iters": 1500,
        "step": 0.02,
        "n_points": 50,
        "methods": ["trbsde", "pnaa"],
        "refresh_every": 500,
        "n_paths": 1000,
        "J_f": 5,
        "reg_steps": 1000,
        "score_steps": 1000,
        "pnaa_steps": 5000,
        "T": 2.0,
        "n_steps": 100,
        "history_every": 100,
        "cost_rollouts": 200,
        "map_resolution": 50,
        "map_rollouts": 200,
        "theta_range": [-6.283185307179586, 6.283185307179586],
        "omega_range": [-3.0, 3.0],
    },
    "finetune": {
        "betas": [0.02, 0.05, 0.125, 0.16666666666666666, 1.0],
        "lam": 8.0,
        "T_gen": 1.0,
        "n_steps": 150,
        "k_f": 40,
        "J_f": 2,
        "o_f": 50,
        "q0_update_every": 5,
        "n_paths": 1000,
        "reg_steps": 250,
        "score_steps": 300,
        "batch_size": 128,
        "q0_lr": 0.01,
        "final_samples": 10000,
    },
}

EXPERIMENT_DESCRIPTIONS = {
    "lq-sweep": "linear 2-D model: costate-map MSE of TR-BSDE vs PNAA across noise levels",
    "pendulum": "stochastic pendulum: empirical initial-distribution optimization + cost map",
    "finetune": "1-D diffusion fine-tuning toward tilted targets, TR-BSDE vs adjoint matching",
}


class ConfigError(ValueError):
    pass


def load_config(path):
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    cfg = {k: dict(v) for k, v in DEFAULTS.items()}
    for section, values in raw.items():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(values, dict):
            raise ConfigError(f"section [{section}] must be a table")
        for key, val in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            cfg[section][key] = val
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    exp = cfg["run"]["experiment"]
    if exp not in EXPERIMENT_DESCRIPTIONS:
        raise ConfigError(
            f"unknown experiment {exp!r}; known: {sorted(EXPERIMENT_DESCRIPTIONS)}"
        )
    lq = cfg["lq-sweep"]
    if any(e <= 0 for e in lq["epsilons"]):
        raise ConfigError("lq-sweep epsilons must be positive")
    if lq["n_seeds"] < 1:
        raise ConfigError("lq-sweep n_seeds must be >= 1")
    ft = cfg["finetune"]
    if any(b < 0 for b in ft["betas"]):
        raise ConfigError("finetune betas must be nonnegative")
    pend = cfg["pendulum"]
    if pend["iters"] < 1:
        raise ConfigError("pendulum iters must be >= 1")
    for m in pend["methods"]:
        if m not in ("trbsde", "pnaa", "pathwise"):
            raise ConfigError(f"unknown pendulum method {m!r}")
    return cfg


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def print_defaults(file=None):
    file = file if file is not None else sys.stdout
    for section, values in DEFAULTS.items():
        print(f"[{section}]", file=file)
        for key, val in values.items():
            print(f"{key} = {_toml_value(val)}", file=file)
        print(file=file)


def _fmt(x):
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def fmt_beta(beta):
    return f"{beta:g}"


def run_lq_sweep(cfg, seed, out_dir, log):
    p = cfg["lq-sweep"]
    grid = TimeGrid(0.0, p["T"], p["n_steps"])
    rows = []
    for i_eps, eps in enumerate(p["epsilons"]):
        lcfg = LinearModelConfig(eps=eps, T=p["T"])
        model = models.linear_model(eps=eps)
        cost = quadratic_cost(np.eye(2))
        q0 = GaussianSampler(np.zeros(2))
        for s in range(p["n_seeds"]):
            run_seed = domain_seed(seed, 1000 * (i_eps + 1) + s)
            sp = SolvePhiConfig(
                grid=grid,
                n_paths=p["n_paths"],
                J_f=p["J_f"],
                score_steps=p["score_steps"],
                reg_steps=p["reg_steps"],
                batch_size=p["batch_size"],
            )
            phi, _ = solve_phi(model, ZeroControl(), cost, q0, sp, seed=run_seed)
            mse_tr = mse_vs_oracle(phi, lcfg, p["eval_n"], seed=domain_seed(run_seed, 9))
            batch = simulate_forward(
                model, q0, ZeroControl(), grid, p["n_paths"], domain_seed(run_seed, 11)
            )
            phat, _ = pnaa_fit(
                batch, model, cost, steps=p["pnaa_steps"],
                batch_size=p["batch_size"], seed=domain_seed(run_seed, 12) % (2**32),
            )
            mse_pn = mse_vs_oracle(phat, lcfg, p["eval_n"], seed=domain_seed(run_seed, 9))
            rows.append(("trbsde", eps, s, mse_tr))
            rows.append(("pnaa", eps, s, mse_pn))
            log(f"eps={eps} seed={s}: mse trbsde={mse_tr:.5f} pnaa={mse_pn:.5f}")
    write_csv(out_dir / "lq_mse.csv", ["method", "epsilon", "seed", "mse"], rows)
    return ["lq_mse.csv"]


def run_pendulum(cfg, seed, out_dir, log):
    p = cfg["pendulum"]
    model = models.pendulum_model()
    cost = pendulum_cost()
    grid = TimeGrid(0.0, p["T"], p["n_steps"])
    thetas, omegas, costmap = mc_cost_map(
        model,
        cost,
        theta_range=tuple(p["theta_range"]),
        omega_range=tuple(p["omega_range"]),
        resolution=p["map_resolution"],
        rollouts=p["map_rollouts"],
        grid=grid,
        seed=domain_seed(seed, 1),
    )
    map_rows = [
        (thetas[i], omegas[j], costmap[i, j])
        for i in range(len(thetas))
        for j in range(len(omegas))
    ]
    write_csv(out_dir / "pendulum_map.csv", ["theta", "omega", "cost"], map_rows)

    rng = path_rng(domain_seed(seed, 2), 0)
    points0 = np.column_stack([
        rng.uniform(p["theta_range"][0], p["theta_range"][1], p["n_points"]),
        rng.uniform(p["omega_range"][0], p["omega_range"][1], p["n_points"]),
    ])
    opt_cfg = SupportOptConfig(
        iters=p["iters"],
        step=p["step"],
        refresh_every=p["refresh_every"],
        n_paths=p["n_paths"],
        J_f=p["J_f"],
        reg_steps=p["reg_steps"],
        score_steps=p["score_steps"],
        pnaa_steps=p["pnaa_steps"],
        history_every=p["history_every"],
        cost_rollouts=p["cost_rollouts"],
        grid=grid,
    )
    point_rows = []
    cost_rows = []
    for method in p["methods"]:
        init, history = optimize_support(
            method, model, cost, points0, opt_cfg, seed=domain_seed(seed, 3)
        )
        for rec in history:
            cost_rows.append((method, rec["iter"], rec["mean_cost"], rec["n_frozen"]))
            for i, pt in enumerate(rec["points"]):
                point_rows.append((method, rec["iter"], i, pt[0], pt[1]))
        log(f"{method}: mean cost {history[0]['mean_cost']:.4f} -> {history[-1]['mean_cost']:.4f}")
    write_csv(
        out_dir / "pendulum_points.csv",
        ["method", "iter", "i", "theta", "omega"],
        point_rows,
    )
    write_csv(
        out_dir / "pendulum_cost.csv",
        ["method", "iter", "mean_cost", "n_frozen"],
        cost_rows,
    )
    return ["pendulum_map.csv", "pendulum_points.csv", "pendulum_cost.csv"]


def run_finetune(cfg, seed, out_dir, log):
    p = cfg["finetune"]
    target = GaussianMixture1D([0.5, 0.5], [-3.0, 3.0], [1.0, 1.0])
    model = build_pretrained_model(target, lam=p["lam"], T_gen=p["T_gen"], n_steps=p["n_steps"])
    fcfg = FinetuneConfig(
        k_f=p["k_f"],
        J_f=p["J_f"],
        o_f=p["o_f"],
        q0_update_every=p["q0_update_every"],
        n_paths=p["n_paths"],
        reg_steps=p["reg_steps"],
        score_steps=p["score_steps"],
        batch_size=p["batch_size"],
        q0_lr=p["q0_lr"],
    )
    hist_rows = []
    outputs = []
    for i_beta, beta in enumerate(p["betas"]):
        cost = tilted_cost(beta, 3.0)
        tilted = tilted_mixture(target, beta, 3.0)
        xs = np.linspace(-8.0, 8.0, 801)
        curve = out_dir / f"tilted_curve_{fmt_beta(beta)}.csv"
        write_csv(curve, ["x", "density"], list(zip(xs, tilted.pdf(xs))))
        outputs.append(curve.name)
        for i_m, (method, fn) in enumerate(
            (("trbsde", finetune_trbsde), ("adjoint_matching", finetune_adjoint_matching))
        ):
            control, q0, info = fn(
                model, cost, fcfg, seed=domain_seed(seed, 100 * (i_beta + 1) + i_m)
            )
            for row in info["history"]:
                hist_rows.append(
                    (method, beta, row["iter"], row["total"], row["terminal"],
                     row["running"], row["kl"], row["mu"], row["Q"], row["w1"])
                )
            samples = sample_terminal(
                model, control, q0, p["final_samples"], domain_seed(seed, 4242)
            )
            sfile = out_dir / f"samples_{method}_{fmt_beta(beta)}.csv"
            write_csv(sfile, ["x"], [(x,) for x in samples])
            outputs.append(sfile.name)
            log(f"beta={beta:g} {method}: best iter {info['best_iter']}, "
                f"{info['n_forward_sims']} path-sims, {info['n_opt_steps']} opt steps")
    write_csv(
        out_dir / "finetune_hist.csv",
        ["method", "beta", "iter", "total", "terminal", "running", "kl", "mu", "Q", "w1"],
        hist_rows,
    )
    outputs.append("finetune_hist.csv")
    return outputs


RUNNERS = {
    "lq-sweep": run_lq_sweep,
    "pendulum": run_pendulum,
    "finetune": run_finetune,
}


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_experiment(cfg, out_dir, threads=None, quiet=False):
    out_dir = Path(out_dir)
    created = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    log = (lambda msg: None) if quiet else (lambda msg: print(msg, flush=True))
    if threads:
        try:
            import numba

            numba.set_num_threads(max(1, threads))
        except ImportError:
            pass
    exp = cfg["run"]["experiment"]
    seed = cfg["run"]["seed"]
    t0 = time.time()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            files = RUNNERS[exp](cfg, seed, out_dir, log)
        cfg_echo = out_dir / "config_echo.toml"
        with open(cfg_echo, "w") as fh:
            for section, values in cfg.items():
                fh.write(f"[{section}]\n")
                for key, val in values.items():
                    fh.write(f"{key} = {_toml_value(val)}\n")
                fh.write("\n")
        files = list(files) + ["config_echo.toml"]
        manifest = {
            "config": cfg,
            "seeds": [seed],
            "outputs": [
                {"path": f, "sha256": sha256_file(out_dir / f)} for f in sorted(files)
            ],
            "runtime_s": round(time.time() - t0, 3),
        }
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        log(f"wrote {len(files)} artifacts to {out_dir}")
        return out_dir
    except Exception:
        # do not leave half-written artifact directories behind
        if created:
            shutil.rmtree(out_dir, ignore_errors=True)
        else:
            for f in out_dir.glob("*"):
                if f.is_file():
                    f.unlink()
        raise


def main(argv=None):
    parser = argparse.ArgumentParser(prog="socgrad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int, default=None,
                       help="cap worker threads (numba); simulation itself is sequential")
    p_run.add_argument("--deterministic", action="store_true",
                       help="force sequential reductions (currently always on)")
    p_run.add_argument("--quiet", action="store_true")

    p_val = sub.add_parser("validate-config", help="parse and validate a config file")
    p_val.add_argument("--config", required=True)

    sub.add_parser("list-experiments", help="list known experiment ids")
    sub.add_parser("print-defaults", help="print the full default config as TOML")

    args = parser.parse_args(argv)
    if args.command == "list-experiments":
        for name, desc in EXPERIMENT_DESCRIPTIONS.items():
            print(f"{name}: {desc}")
        return 0
    if args.command == "print-defaults":
        print_defaults()
        return 0
    if args.command == "validate-config":
        try:
            load_config(args.config)
        except (ConfigError, OSError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 1
        print("config ok")
        return 0
    cfg = load_config(args.config)
    run_experiment(cfg, args.out, threads=args.threads, quiet=args.quiet)
    return 0


if __name__ == "__main__":
    sys.exit(main())
