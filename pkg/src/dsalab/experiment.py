"""Replica fan-out, seeding, checkpointing, and CSV emission.

Replica k draws everything from seed base_seed + k: one child stream drives
the environment dynamics, a second the agent (internally split again into
weight-init, exploration, and replay-sampling streams). Outputs are written
atomically, and a fixed (config, base_seed) pair reproduces them bit for bit
regardless of the worker count.
"""

from __future__ import annotations

import logging
import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .agent import TrainingTrace, evaluate_policy, run_training
from .baselines import BaselineKind, make_schedule, run_random_access
from .config import ExperimentConfig
from .env import NetworkEnv
from .errors import ValidationError
from .metrics import RunTrace, average_runs, write_aggregate_csv, write_windows_csv

logger = logging.getLogger("dsalab")


@dataclass
class ExperimentResult:
    traces: list[RunTrace]
    windows_csv: Path
    aggregate_csv: Path
    checkpoints: list[Path]


def replica_rngs(base_seed: int, replica: int):
    """(env_rng, agent_rng) for one replica, derived from seed base_seed + replica."""
    env_ss, agent_ss = np.random.SeedSequence(base_seed + replica).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(agent_ss)


def save_checkpoint_atomic(path: Path, params: nn.MlpParams) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    nn.save_checkpoint(tmp, params)
    os.replace(tmp, path)


def _run_replica(config: ExperimentConfig, replica: int) -> tuple[RunTrace, list[str]]:
    seed = config.base_seed + replica
    env_rng, agent_rng = replica_rngs(config.base_seed, replica)
    env = NetworkEnv(config.scenario, config.hyperparams.subset_size, env_rng)
    out = Path(config.out_dir)
    checkpoints: list[str] = []

    if config.policy == "random_access":
        trace = run_random_access(env, config.total_steps, agent_rng, window_len=config.window_len)
        logger.info("replica %d (random access) done", replica)
        return RunTrace(replica, seed, trace.windows), checkpoints

    def checkpoint_hook(step: int, agent) -> None:
        path = out / f"ckpt_r{replica:02d}_step{step}.txt"
        save_checkpoint_atomic(path, agent.policy)
        checkpoints.append(str(path))

    schedule = None
    if config.policy != "ddqsa":
        kind = BaselineKind(config.policy)
        schedule = make_schedule(kind, config.hyperparams.n_channels, config.hyperparams.subset_size)
    trace, agent = run_training(
        env,
        config.hyperparams,
        config.total_steps,
        agent_rng,
        sensing_schedule=schedule,
        window_len=config.window_len,
        checkpoint_hook=checkpoint_hook,
        checkpoint_every=config.checkpoint_every,
    )
    final = out / f"ckpt_r{replica:02d}_final.txt"
    save_checkpoint_atomic(final, agent.policy)
    checkpoints.append(str(final))
    logger.info("replica %d (%s) done", replica, config.policy)
    return RunTrace(replica, seed, trace.windows), checkpoints


def _worker(args) -> tuple[RunTrace, list[str]]:
    config, replica = args
    return _run_replica(config, replica)


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run all replicas, write per-window and aggregate CSVs plus checkpoints."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = config.workers if config.workers > 0 else (os.cpu_count() or 1)
    workers = min(workers, config.n_replicas)
    jobs = [(config, k) for k in range(config.n_replicas)]
    if workers > 1:
        # Each worker runs one replica at a time; keep BLAS single-threaded
        # so processes do not fight over the cores.
        os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
        os.environ.setdefault("OMP_NUM_THREADS", "1")
        os.environ.setdefault("MKL_NUM_THREADS", "1")
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(workers) as pool:
            results = pool.map(_worker, jobs)
    else:
        results = [_worker(job) for job in jobs]

    traces = [trace for trace, _ in results]
    checkpoints = [Path(p) for _, paths in results for p in paths]
    windows_csv = out / "windows.csv"
    aggregate_csv = out / "aggregate.csv"
    write_windows_csv(windows_csv, traces)
    write_aggregate_csv(aggregate_csv, average_runs(traces))
    return ExperimentResult(traces, windows_csv, aggregate_csv, checkpoints)


def evaluate_checkpoint(
    config: ExperimentConfig, checkpoint_path, steps: int, seed: int | None = None
) -> TrainingTrace:
    """Frozen-policy rollout of a saved network under the config's scenario."""
    if config.policy == "random_access":
        raise ValidationError("random_access learns nothing; there is no checkpoint to evaluate")
    params = nn.load_checkpoint(checkpoint_path)
    env_rng, agent_rng = replica_rngs(seed if seed is not None else config.base_seed, 0)
    env = NetworkEnv(config.scenario, config.hyperparams.subset_size, env_rng)
    schedule = None
    if config.policy != "ddqsa":
        kind = BaselineKind(config.policy)
        schedule = make_schedule(kind, config.hyperparams.n_channels, config.hyperparams.subset_size)
    return evaluate_policy(
        env,
        config.hyperparams,
        params,
        steps,
        agent_rng,
        sensing_schedule=schedule,
        window_len=config.window_len,
    )
