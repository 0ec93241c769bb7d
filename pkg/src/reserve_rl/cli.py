"""Command-line pipeline for the reserving experiments.

Subcommands mirror the experiment stages and each writes its artifacts
(plus a manifest with content digests) into its own directory under
``--out``:

* ``ingest``      parse, validate, split, and normalize a triangle CSV
* ``train``       curriculum-train policies on the training split
* ``evaluate``    compare the trained policies with static baselines
* ``stress``      fixed-shock stress battery on the trained policies
* ``baselines``   classical reserve tables and bootstrap summary
* ``sensitivity`` retrain/evaluate over a tail-level x floor grid
* ``report``      merge all metric tables produced so far

Exit codes: 0 success, 1 configuration/usage errors, 2 data errors,
3 numerical failures.  ``RESERVE_RL_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .agent import EnvFactory, train_curriculum, write_training_log
from .baselines import (
    BootstrapResult,
    bootstrap_chain_ladder,
    bootstrap_runner,
    bornhuetter_ferguson,
    bornhuetter_ferguson_runner,
    chain_ladder_runner,
    chain_ladder_ultimates,
    implied_loss_ratio,
    write_reserve_rows_csv,
)
from .config import (
    FLOOR_FORMS,
    RunConfig,
    build_manifest,
    config_fingerprint,
    config_to_ini,
    git_blob_sha1,
    load_config,
    to_env_config,
    to_ppo_config,
    to_schedule,
    write_manifest,
)
from .env import ReserveEnv
from .errors import ConfigError, DataError, NumericalError, ReserveRlError
from .evaluate import (
    EvalOutcome,
    constant_runner,
    emit_report,
    evaluate_models,
    greedy_runner,
    regime_conditions,
    sensitivity_sweep,
    stress_conditions,
)
from .nets import load_networks, save_networks
from .regimes import ShockMode
from .triangles import (
    DevelopmentFactors,
    SplitSpec,
    age_to_age_factors,
    normalize,
    parse_triangle_csv,
    split_rolling_origin,
    write_triangle_csv,
)

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """Argparse variant that reports usage problems through our error
    taxonomy (exit code 1) instead of its built-in exit(2)."""

    def error(self, message: str) -> None:  # noqa: D102 - argparse override
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="reserve-rl", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="INI run configuration", default=None)
    parser.add_argument("--out", help="artifact root directory", default="runs")
    parser.add_argument(
        "--seed-list",
        help="comma-separated training seeds overriding the config",
        default=None,
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=1,
        help="worker count (accepted for interface stability; execution "
        "is serial and seed streams are already partitioned)",
    )
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration and exit",
    )
    sub = parser.add_subparsers(dest="command")

    p_ingest = sub.add_parser("ingest", help="validate, split, and normalize a triangle")
    p_ingest.add_argument("--triangle", required=True, help="raw triangle CSV")

    p_train = sub.add_parser("train", help="train policies on the training split")
    p_train.add_argument("--data", default=None, help="ingest artifact directory")
    p_train.add_argument("--levels", default=None, help="comma-separated curriculum levels")

    p_eval = sub.add_parser("evaluate", help="compare policies and baselines per regime")
    p_eval.add_argument("--data", default=None)
    p_eval.add_argument("--policies", default=None, help="training artifact directory")
    p_eval.add_argument("--traces", action="store_true", help="also write step traces")

    p_stress = sub.add_parser("stress", help="fixed-shock stress battery")
    p_stress.add_argument("--data", default=None)
    p_stress.add_argument("--policies", default=None)
    p_stress.add_argument("--traces", action="store_true")

    p_base = sub.add_parser("baselines", help="classical reserve tables on the training years")
    p_base.add_argument("--triangle", required=True, help="raw triangle CSV")

    p_sens = sub.add_parser("sensitivity", help="tail-level x floor sensitivity grid")
    p_sens.add_argument("--data", default=None)

    sub.add_parser("report", help="merge metric tables into one report")
    return parser


def _seeds(args: argparse.Namespace, cfg: RunConfig) -> tuple[int, ...]:
    if args.seed_list is None:
        return cfg.run.seeds
    try:
        seeds = tuple(int(part) for part in args.seed_list.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --seed-list {args.seed_list!r}") from exc
    if not seeds:
        raise ConfigError("--seed-list is empty")
    return seeds


def _outdir(args: argparse.Namespace, name: str) -> str:
    path = os.path.join(args.out, name)
    os.makedirs(path, exist_ok=True)
    return path


class IngestArtifacts:
    """Lazy view over an ingest directory's outputs."""

    def __init__(self, directory: str) -> None:
        self.directory = directory
        self.train_path = os.path.join(directory, "train_triangle.csv")
        self.test_path = os.path.join(directory, "test_triangle.csv")
        self.factors_path = os.path.join(directory, "factors.json")
        try:
            self.train = parse_triangle_csv(self.train_path)
            self.test = parse_triangle_csv(self.test_path)
            with open(self.factors_path) as handle:
                doc = json.load(handle)
            self.factors = DevelopmentFactors(factors=tuple(doc["factors"]))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(
                f"ingest artifacts missing or unreadable in {directory!r}: {exc}"
            ) from exc

    @property
    def horizon(self) -> int:
        return len(self.factors) + 1

    def input_paths(self) -> dict[str, str]:
        return {
            "train_triangle.csv": self.train_path,
            "test_triangle.csv": self.test_path,
            "factors.json": self.factors_path,
        }

    def input_digests(self) -> dict[str, str]:
        return {name: git_blob_sha1(p) for name, p in self.input_paths().items()}


def _factories(
    data: IngestArtifacts, cfg: RunConfig
) -> tuple[EnvFactory, EnvFactory]:
    """Training factory on the train triangle, evaluation on the test one.

    Both pin the same horizon so policies see identical episode lengths.
    """
    horizon = cfg.env.horizon if cfg.env.horizon is not None else data.horizon

    def train_factory(mode: ShockMode, rng: np.random.Generator) -> ReserveEnv:
        env_cfg = to_env_config(cfg, shock_mode=mode, horizon=horizon)
        return ReserveEnv(data.train, data.factors, env_cfg, rng)

    def eval_factory(mode: ShockMode, rng: np.random.Generator) -> ReserveEnv:
        env_cfg = to_env_config(cfg, shock_mode=mode, horizon=horizon)
        return ReserveEnv(data.test, data.factors, env_cfg, rng)

    return train_factory, eval_factory


def cmd_ingest(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "ingest")
    tri = parse_triangle_csv(args.triangle)
    split = SplitSpec(a_train=cfg.run.a_train, a_test=cfg.run.a_test)
    normalized, params = normalize(tri, split)
    train_tri, test_tri = split_rolling_origin(normalized, split)
    factors = age_to_age_factors(train_tri)

    train_path = os.path.join(out, "train_triangle.csv")
    test_path = os.path.join(out, "test_triangle.csv")
    write_triangle_csv(train_tri, train_path)
    write_triangle_csv(test_tri, test_path)
    with open(os.path.join(out, "normalization.json"), "w") as handle:
        json.dump({"scale": params.scale, "offset": params.offset}, handle,
                  sort_keys=True, separators=(",", ":"))
        handle.write("\n")
    with open(os.path.join(out, "factors.json"), "w") as handle:
        json.dump({"factors": list(factors.factors)}, handle,
                  sort_keys=True, separators=(",", ":"))
        handle.write("\n")
    manifest = build_manifest(
        "ingest", cfg,
        inputs={"triangle": args.triangle},
        outputs=["train_triangle.csv", "test_triangle.csv",
                 "normalization.json", "factors.json"],
    )
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(f"ingest: {tri.n_accident_years} years -> "
          f"{train_tri.n_accident_years} train / {test_tri.n_accident_years} test, "
          f"scale {params.scale!r}")
    return 0


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "train")
    data = IngestArtifacts(args.data or os.path.join(args.out, "ingest"))
    seeds = _seeds(args, cfg)
    levels = None
    if args.levels is not None:
        try:
            levels = tuple(int(part) for part in args.levels.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --levels {args.levels!r}") from exc
    schedule = to_schedule(cfg, levels)
    train_factory, _ = _factories(data, cfg)
    result = train_curriculum(train_factory, to_ppo_config(cfg), schedule, seeds)

    fingerprint = config_fingerprint(cfg)
    outputs = ["training_log.csv"]
    for seed, trained in sorted(result.policies.items()):
        name = f"policy_seed{seed}.json"
        save_networks(os.path.join(out, name), trained.policy, trained.value,
                      fingerprint, seed)
        outputs.append(name)
    write_training_log(result.log, os.path.join(out, "training_log.csv"))
    manifest = build_manifest("train", cfg, inputs=data.input_paths(), outputs=outputs)
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    for seed in seeds:
        print(f"train: seed {seed} finished with {result.updates[seed]} updates")
    return 0


def _load_policies(directory: str, seeds: tuple[int, ...], cfg: RunConfig):
    fingerprint = config_fingerprint(cfg)
    policies = {}
    for seed in seeds:
        path = os.path.join(directory, f"policy_seed{seed}.json")
        try:
            policy, _value, saved_fp, saved_seed = load_networks(path)
        except OSError as exc:
            raise DataError(f"missing trained policy {path!r}: {exc}") from exc
        if saved_seed != seed:
            raise DataError(f"{path!r} holds seed {saved_seed}, expected {seed}")
        if saved_fp != fingerprint:
            log.warning("policy %s was trained under a different config fingerprint", path)
        policies[seed] = policy
    return policies


def _baseline_models(data: IngestArtifacts, cfg: RunConfig):
    elr = cfg.baselines.elr
    if elr is None:
        elr = implied_loss_ratio(data.train, data.factors)
    boot_rng = np.random.default_rng(cfg.baselines.bootstrap_seed)
    boot = bootstrap_chain_ladder(data.train, cfg.baselines.bootstrap_sims, boot_rng)
    return {
        "chain_ladder": chain_ladder_runner(data.factors),
        "bornhuetter_ferguson": bornhuetter_ferguson_runner(data.factors, elr),
        "bootstrap": bootstrap_runner(boot),
    }


def _write_traces(outcome: EvalOutcome, directory: str) -> list[str]:
    os.makedirs(directory, exist_ok=True)
    written = []
    for (model, label), trace in sorted(outcome.traces.items()):
        safe = label.replace(":", "_").replace(",", "_").replace(".", "p")
        name = f"{model}__{safe}.csv"
        trace.write_csv(os.path.join(directory, name))
        written.append(name)
    return written


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "eval")
    data = IngestArtifacts(args.data or os.path.join(args.out, "ingest"))
    seeds = _seeds(args, cfg)
    policies = _load_policies(args.policies or os.path.join(args.out, "train"), seeds, cfg)
    _, eval_factory = _factories(data, cfg)

    models = {"rl_cvar": lambda seed: greedy_runner(policies[seed])}
    for name, runner in _baseline_models(data, cfg).items():
        models[name] = constant_runner(runner)
    outcome = evaluate_models(
        models,
        eval_factory,
        regime_conditions(cfg.eval.regimes),
        seeds,
        cfg.eval.episodes,
        lob=cfg.run.lob,
        crn_base=cfg.eval.crn_base,
        keep_traces=args.traces,
    )
    csv_path = os.path.join(out, "metrics.csv")
    emit_report(outcome.rows, csv_path, sidecar={
        "config_fingerprint": config_fingerprint(cfg),
        "seeds": list(seeds),
        "inputs": data.input_digests(),
    })
    outputs = ["metrics.csv", "metrics.json"]
    if args.traces:
        outputs += [os.path.join("traces", n)
                    for n in _write_traces(outcome, os.path.join(out, "traces"))]
    manifest = build_manifest("evaluate", cfg, inputs=data.input_paths(), outputs=outputs)
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    for row in outcome.rows:
        print(f"evaluate: {row.model:24s} {row.condition:12s} "
              f"rar={row.rar:.3f} cvar95={row.cvar95:.4f} ces={row.ces:.3f} rvr={row.rvr:.3f}")
    return 0


def cmd_stress(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "stress")
    data = IngestArtifacts(args.data or os.path.join(args.out, "ingest"))
    seeds = _seeds(args, cfg)
    policies = _load_policies(args.policies or os.path.join(args.out, "train"), seeds, cfg)
    _, eval_factory = _factories(data, cfg)

    models = {"rl_cvar": lambda seed: greedy_runner(policies[seed])}
    outcome = evaluate_models(
        models,
        eval_factory,
        stress_conditions(cfg.eval.shocks),
        seeds,
        cfg.eval.episodes,
        lob=cfg.run.lob,
        crn_base=cfg.eval.crn_base,
        keep_traces=args.traces,
    )
    csv_path = os.path.join(out, "stress_metrics.csv")
    emit_report(outcome.rows, csv_path, sidecar={
        "config_fingerprint": config_fingerprint(cfg),
        "seeds": list(seeds),
        "inputs": data.input_digests(),
    })
    outputs = ["stress_metrics.csv", "stress_metrics.json"]
    if args.traces:
        outputs += [os.path.join("traces", n)
                    for n in _write_traces(outcome, os.path.join(out, "traces"))]
    manifest = build_manifest("stress", cfg, inputs=data.input_paths(), outputs=outputs)
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    for row in outcome.rows:
        print(f"stress: {row.condition:12s} rar={row.rar:.3f} "
              f"cvar95={row.cvar95:.4f} ces={row.ces:.3f} rvr={row.rvr:.3f}")
    return 0


def cmd_baselines(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "baselines")
    tri = parse_triangle_csv(args.triangle)
    split = SplitSpec(a_train=cfg.run.a_train, a_test=cfg.run.a_test)
    train_tri, _ = split_rolling_origin(tri, split)
    factors = age_to_age_factors(train_tri)

    rows = chain_ladder_ultimates(train_tri, factors)
    elr = cfg.baselines.elr
    if elr is None:
        elr = implied_loss_ratio(train_tri, factors)
    rows += bornhuetter_ferguson(train_tri, factors, elr)
    write_reserve_rows_csv(rows, os.path.join(out, "reserves.csv"))

    boot_rng = np.random.default_rng(cfg.baselines.bootstrap_seed)
    boot = bootstrap_chain_ladder(train_tri, cfg.baselines.bootstrap_sims, boot_rng)
    with open(os.path.join(out, "bootstrap.json"), "w") as handle:
        json.dump(_bootstrap_summary(boot, elr), handle, sort_keys=True, separators=(",", ":"))
        handle.write("\n")

    manifest = build_manifest("baselines", cfg, inputs={"triangle": args.triangle},
                              outputs=["reserves.csv", "bootstrap.json"])
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    total_cl = sum(r.reserve for r in rows if r.method == "chain_ladder")
    print(f"baselines: chain-ladder total reserve {total_cl!r}, "
          f"bootstrap mean {boot.mean!r} (sd {boot.stddev!r}), elr {elr!r}")
    return 0


def _bootstrap_summary(boot: BootstrapResult, elr: float) -> dict:
    return {
        "n_sims": boot.n_sims,
        "mean": boot.mean,
        "stddev": boot.stddev,
        "quantiles": {repr(q): v for q, v in sorted(boot.quantiles.items())},
        "n_retries": boot.n_retries,
        "elr": elr,
    }


def cmd_sensitivity(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "sensitivity")
    data = IngestArtifacts(args.data or os.path.join(args.out, "ingest"))
    seeds = _seeds(args, cfg)
    horizon = cfg.env.horizon if cfg.env.horizon is not None else data.horizon

    def cell_factories(alpha, floor):
        def train_factory(mode: ShockMode, rng: np.random.Generator) -> ReserveEnv:
            env_cfg = to_env_config(cfg, shock_mode=mode, alpha=alpha,
                                    floor=floor, horizon=horizon)
            return ReserveEnv(data.train, data.factors, env_cfg, rng)

        def eval_factory(mode: ShockMode, rng: np.random.Generator) -> ReserveEnv:
            env_cfg = to_env_config(cfg, shock_mode=mode, alpha=alpha,
                                    floor=floor, horizon=horizon)
            return ReserveEnv(data.test, data.factors, env_cfg, rng)

        return train_factory, eval_factory

    alphas: list[float | None] = list(cfg.eval.sweep_alphas)
    outcome = sensitivity_sweep(
        cell_factories,
        to_ppo_config(cfg),
        to_schedule(cfg),
        alphas,
        FLOOR_FORMS,
        eval_levels=cfg.eval.regimes,
        episodes_per_level=cfg.eval.sweep_episodes_per_level,
        seeds=seeds,
        lob=cfg.run.lob,
        crn_base=cfg.eval.crn_base,
    )
    csv_path = os.path.join(out, "sensitivity.csv")
    emit_report(outcome.rows, csv_path, sidecar={
        "config_fingerprint": config_fingerprint(cfg),
        "seeds": list(seeds),
        "inputs": data.input_digests(),
    })
    manifest = build_manifest("sensitivity", cfg, inputs=data.input_paths(),
                              outputs=["sensitivity.csv", "sensitivity.json"])
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    for row in outcome.rows:
        print(f"sensitivity: {row.condition:28s} rar={row.rar:.3f} "
              f"cvar95={row.cvar95:.4f} rvr={row.rvr:.3f}")
    return 0


def cmd_report(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = _outdir(args, "reports")
    sources = [
        os.path.join(args.out, "eval", "metrics.csv"),
        os.path.join(args.out, "stress", "stress_metrics.csv"),
        os.path.join(args.out, "sensitivity", "sensitivity.csv"),
    ]
    merged: list[str] = []
    header: str | None = None
    found = []
    for source in sources:
        if not os.path.exists(source):
            continue
        with open(source) as handle:
            lines = handle.read().splitlines()
        if not lines:
            continue
        if header is None:
            header = lines[0]
        elif lines[0] != header:
            raise DataError(f"{source!r} has a mismatched header")
        merged.extend(lines[1:])
        found.append(source)
    if header is None or not merged:
        raise DataError("no metric tables found to merge; run evaluate/stress/sensitivity first")
    report_path = os.path.join(out, "combined_metrics.csv")
    with open(report_path, "w", newline="") as handle:
        handle.write(header + "\n")
        for line in merged:
            handle.write(line + "\n")
    manifest = build_manifest("report", cfg,
                              inputs={os.path.relpath(s, args.out): s for s in found},
                              outputs=["combined_metrics.csv"])
    write_manifest(os.path.join(out, "manifest.json"), manifest)
    print(f"report: merged {len(merged)} rows from {len(found)} tables")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "stress": cmd_stress,
    "baselines": cmd_baselines,
    "sensitivity": cmd_sensitivity,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("RESERVE_RL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        if args.print_config:
            print(config_to_ini(cfg), end="")
            return 0
        if args.command is None:
            raise ConfigError("a subcommand is required (see --help)")
        if args.workers > 1:
            log.info("--workers %d requested; executing serially with "
                     "partitioned seed streams", args.workers)
        return _COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ReserveRlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
