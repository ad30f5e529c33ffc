"""Batch experiment driver.

Subcommands: run, optimize, estimate, compare-schedulers,
validate-properties, cost-surface.  Every command reads one config file
(--config), honors --seed and --out overrides, writes CSV artifacts into the
output directory, and exits non-zero with a diagnostic line on failure.
Identical config + seed reruns produce byte-identical files; all reported
times are simulated, never host wall-clock.
"""

import argparse
import os
import sys

import numpy as np

from . import costmodel, datagen, learner, optimizer, system
from .config import ConfigError, needs_for_command, parse_config
from .costmodel import ConvergenceCoeffs
from .csvio import write_csv
from .learner import TrainConfig, run_fedavg
from .optimizer import AcsConfig, EstimationPlan
from .scheduler import Strategy

_DATA_DOMAIN, _PROFILE_DOMAIN, _TRAIN_DOMAIN, _PILOT_DOMAIN = range(4)


def _sub_seed(seed, domain):
    return int(np.random.SeedSequence(seed, spawn_key=(100, domain)).generate_state(1)[0])


def build_dataset(config):
    seed = _sub_seed(config.seed, _DATA_DOMAIN)
    kind = config.require("dataset.kind")
    if kind == "synthetic":
        return datagen.gen_synthetic(
            alpha=config.get("dataset.alpha", 1.0),
            beta=config.get("dataset.beta", 1.0),
            n_clients=config.require("dataset.n_clients"),
            size_mean=config.get("dataset.size_mean", 100.0),
            size_std=config.get("dataset.size_std", 50.0),
            seed=seed,
            n_features=config.get("dataset.dim", 60),
            n_classes=config.get("dataset.classes", 10),
        )
    pool = datagen.load_idx(config.require("dataset.images"), config.require("dataset.labels"))
    return datagen.partition_by_label(
        pool,
        n_clients=config.require("dataset.n_clients"),
        labels_per_client=config.get("dataset.labels_per_client", 2),
        samples_per_client=config.require("dataset.samples_per_client"),
        seed=seed,
    )


def build_profile(config, n_clients):
    path = config.get("system.profile")
    if path is not None:
        profile = system.load_profile(path)
        if profile.n_clients != n_clients:
            raise ConfigError(
                [f"system.profile has {profile.n_clients} clients, dataset has {n_clients}"]
            )
        return profile
    return system.sample_profile(
        n_clients=n_clients,
        t_p_mean=config.get("system.t_p_mean", 0.5),
        t_p_std=config.get("system.t_p_std", 0.15),
        e_p_mean=config.get("system.e_p_mean", 0.01),
        t_m_mean=config.get("system.t_m_mean", 0.2),
        e_m_mean=config.get("system.e_m_mean", 0.02),
        jitter=config.get("system.jitter", 0.1),
        seed=_sub_seed(config.seed, _PROFILE_DOMAIN),
        comm_spread=config.get("system.comm_spread", 0.2),
    )


def build_train_config(config, k, e):
    return TrainConfig(
        k=k,
        e=e,
        batch_size=config.get("train.batch_size", 64),
        eta0=config.get("train.eta0", 0.1),
        max_rounds=config.get("train.max_rounds", 300),
        target_loss=config.get("train.target_loss"),
        seed=_sub_seed(config.seed, _TRAIN_DOMAIN),
    )


def _estimation_plan(config):
    return EstimationPlan(
        pairs=config.require("estimate.pairs"),
        loss_a=config.require("estimate.loss_a"),
        loss_b=config.require("estimate.loss_b"),
        round_cap=config.get("estimate.round_cap", 500),
    )


def _resolve_coeffs(config, dataset, profile, costs, out_dir):
    """rho from the config when given, otherwise estimated from pilot runs
    (which also emits estimation.csv and records the overhead)."""
    rho = config.get("rho")
    if rho is not None:
        return ConvergenceCoeffs(rho=rho, n_clients=dataset.n_clients), None
    estimate = optimizer.estimate_rho(
        _estimation_plan(config),
        dataset,
        profile,
        costs,
        batch_size=config.get("train.batch_size", 64),
        eta0=config.get("train.eta0", 0.1),
        strategy=config.strategy,
        seed=_sub_seed(config.seed, _PILOT_DOMAIN),
    )
    optimizer.write_estimation_csv(estimate.records, os.path.join(out_dir, "estimation.csv"))
    return ConvergenceCoeffs(rho=estimate.rho, n_clients=dataset.n_clients), estimate


def _grid_ranges(config, n_clients):
    k_max = min(config.get("control.k_max", n_clients), n_clients)
    e_max = config.get("control.e_max", 100)
    return range(1, k_max + 1), range(1, e_max + 1)


def cmd_run(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    costs = system.averaged_costs(profile, config.gamma)
    mode = config.require("mode")

    if mode == "fixed":
        k, e = config.require("control.k"), config.require("control.e")
    else:
        coeffs, estimate = _resolve_coeffs(config, dataset, profile, costs, out_dir)
        if mode == "optimize":
            solution = (
                estimate.solution
                if estimate is not None
                else optimizer.acs_optimize(costs, coeffs, AcsConfig())
            )
        else:
            k_range, e_range = _grid_ranges(config, dataset.n_clients)
            solution = optimizer.grid_search(costs, coeffs, k_range, e_range)
        optimizer.write_solution_csv(
            solution,
            os.path.join(out_dir, "solution.csv"),
            rho=coeffs.rho,
            overhead=None if estimate is None else estimate.overhead,
        )
        k, e = solution.k_star, solution.e_star

    _, traces = run_fedavg(dataset, profile, build_train_config(config, k, e), config.strategy)
    learner.export_traces(traces, os.path.join(out_dir, "traces.csv"))
    print(f"run: K={k} E={e} rounds={len(traces)} final_loss={traces[-1].loss:.6f}")
    return 0


def cmd_optimize(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    costs = system.averaged_costs(profile, config.gamma)
    coeffs, estimate = _resolve_coeffs(config, dataset, profile, costs, out_dir)
    solution = (
        estimate.solution
        if estimate is not None
        else optimizer.acs_optimize(costs, coeffs, AcsConfig())
    )
    optimizer.write_solution_csv(
        solution,
        os.path.join(out_dir, "solution.csv"),
        rho=coeffs.rho,
        overhead=None if estimate is None else estimate.overhead,
    )
    print(
        f"optimize: K*={solution.k_star} E*={solution.e_star} R*={solution.r_star} "
        f"cost={solution.predicted_cost:.6g}"
    )
    return 0


def cmd_estimate(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    costs = system.averaged_costs(profile, config.gamma)
    estimate = optimizer.estimate_rho(
        _estimation_plan(config),
        dataset,
        profile,
        costs,
        batch_size=config.get("train.batch_size", 64),
        eta0=config.get("train.eta0", 0.1),
        strategy=config.strategy,
        seed=_sub_seed(config.seed, _PILOT_DOMAIN),
    )
    optimizer.write_estimation_csv(estimate.records, os.path.join(out_dir, "estimation.csv"))
    optimizer.write_solution_csv(
        estimate.solution,
        os.path.join(out_dir, "solution.csv"),
        rho=estimate.rho,
        overhead=estimate.overhead,
    )
    print(f"estimate: rho={estimate.rho:.6g} overhead_ratio={estimate.overhead:.4f}")
    return 0


def cmd_compare_schedulers(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    target = config.require("train.target_loss")
    variable = config.require("sweep.variable").lower()
    values = config.require("sweep.values")

    rows = []
    for value in values:
        if variable == "e":
            k, e = config.require("sweep.k"), value
        else:
            k, e = value, config.require("sweep.e")
        for strategy in Strategy:
            _, traces = run_fedavg(
                dataset, profile, build_train_config(config, k, e), strategy
            )
            reached = traces[-1].loss <= target
            total = sum(t.time_s for t in traces)
            rows.append([strategy.value, variable, value, total, len(traces), reached])
    write_csv(
        os.path.join(out_dir, "schedulers.csv"),
        ["strategy", "sweep_variable", "sweep_value", "total_time_s", "rounds", "reached"],
        rows,
    )
    print(f"compare-schedulers: {len(values)} sweep points x {len(Strategy)} strategies")
    return 0


def cmd_validate_properties(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    costs = system.averaged_costs(profile, config.gamma)
    coeffs = ConvergenceCoeffs(rho=config.require("rho"), n_clients=dataset.n_clients)
    findings = optimizer.verify_properties(costs, coeffs)
    optimizer.write_properties_csv(findings, os.path.join(out_dir, "properties.csv"))
    failed = [f.name for f in findings if not f.passed]
    print(
        f"validate-properties: {len(findings) - len(failed)}/{len(findings)} passed"
        + (f"; failed: {', '.join(failed)}" if failed else "")
    )
    return 0


def cmd_cost_surface(config, out_dir):
    dataset = build_dataset(config)
    profile = build_profile(config, dataset.n_clients)
    costs = system.averaged_costs(profile, config.gamma)
    coeffs = ConvergenceCoeffs(rho=config.require("rho"), n_clients=dataset.n_clients)
    k_range, e_range = _grid_ranges(config, dataset.n_clients)
    costmodel.dump_cost_surface(
        os.path.join(out_dir, "cost_surface.csv"), costs, coeffs, k_range, e_range
    )
    print(f"cost-surface: {len(k_range)} x {len(e_range)} grid written")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "optimize": cmd_optimize,
    "estimate": cmd_estimate,
    "compare-schedulers": cmd_compare_schedulers,
    "validate-properties": cmd_validate_properties,
    "cost-surface": cmd_cost_surface,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="fedcost",
        description="Federated-learning cost simulation and control-variable optimization.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        config = parse_config(args.config)
        if args.seed is not None:
            config.raw["seed"] = args.seed
        if args.out is not None:
            config.raw["out"] = args.out
        problems = needs_for_command(config, args.command)
        if problems:
            raise ConfigError(problems)
        out_dir = config.out
        os.makedirs(out_dir, exist_ok=True)
        return _COMMANDS[args.command](config, out_dir)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
