"""Experiment configuration: a flat key = value file.

Schema (defaults in parentheses; '#' starts a comment):

    scenario       cyclic | fixed_channel | lowest_index | lowest_index_flipping (cyclic)
    policy         ddqsa | random_access | random_sensing | alternating (ddqsa)
    n_channels     channel count N (4)
    subset_size    channels sensed per slot L (2)
    history        observation history length H (2 for cyclic, 6 otherwise)
    p_stay, p_switch, p_dswitch   cyclic transition probabilities (required for cyclic)
    pu_end_prob_<i>  per-PU idle-return probabilities, space separated, last entry 1
                     (frame scenarios; defaults to the four benchmark chains when N=4)
    gamma          discount (0.8)
    learning_rate  Adam step size (1e-4)
    replay_capacity  (30000)
    target_sync    gradient steps between target-network copies (20)
    batch_size     (64)
    hidden         hidden layer widths, space separated (128 128)
    p_ac           transmit probability per slot (1.0)
    window         metrics window length (100)
    total_steps    slots per replica (1000000)
    n_replicas     independent replicas (30)
    seed           base seed; replica k uses seed+k (1)
    out            output directory (results)
    workers        parallel replica processes, 0 = one per CPU (1)
    checkpoint_every  slots between checkpoints (100000)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .agent import Hyperparams
from .env import (
    BENCHMARK_PU_CHAINS,
    Cyclic,
    CyclicParams,
    FixedChannel,
    LowestIndex,
    LowestIndexFlipping,
    PuChain,
    Scenario,
)
from .errors import ParseError, ValidationError

POLICIES = ("ddqsa", "random_access", "random_sensing", "alternating")

_SCENARIO_KINDS = {
    "cyclic": Cyclic,
    "fixed_channel": FixedChannel,
    "lowest_index": LowestIndex,
    "lowest_index_flipping": LowestIndexFlipping,
}

_KNOWN_KEYS = {
    "scenario", "policy", "n_channels", "subset_size", "history",
    "p_stay", "p_switch", "p_dswitch",
    "gamma", "learning_rate", "replay_capacity", "target_sync", "batch_size",
    "hidden", "p_ac", "window", "total_steps", "n_replicas", "seed", "out",
    "workers", "checkpoint_every",
}

_PU_KEY = re.compile(r"pu_end_prob_(\d+)$")


@dataclass
class ExperimentConfig:
    scenario: Scenario
    policy: str
    hyperparams: Hyperparams
    total_steps: int = 1_000_000
    n_replicas: int = 30
    base_seed: int = 1
    out_dir: str = "results"
    window_len: int = 100
    workers: int = 1
    checkpoint_every: int = 100_000
    raw: dict = field(default_factory=dict, repr=False)


def parse_kv_file(path) -> dict[str, str]:
    """Read a flat key = value file; duplicate or malformed lines are errors."""
    raw: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(f"expected 'key = value', got {text!r}", line=lineno)
            key, value = (part.strip() for part in text.split("=", 1))
            if not key or not value:
                raise ParseError(f"empty key or value in {text!r}", line=lineno)
            if key in raw:
                raise ParseError(f"duplicate key {key!r}", line=lineno)
            raw[key] = value
    return raw


def load_config(path) -> ExperimentConfig:
    return build_config(parse_kv_file(path))


def _get(raw, key, kind, default):
    if key not in raw:
        if default is None:
            raise ValidationError("required key is missing", key=key)
        return default
    try:
        if kind is bool:
            return raw[key].lower() in ("1", "true", "yes")
        return kind(raw[key])
    except ValueError as exc:
        raise ValidationError(f"cannot parse {raw[key]!r} as {kind.__name__}: {exc}", key=key)


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in value.replace(",", " ").split())


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in value.replace(",", " ").split())


def build_config(raw: dict[str, str], overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw key-value mapping into an ExperimentConfig.

    `overrides` (already-typed values, e.g. from CLI flags) take precedence
    over file contents and defaults.
    """
    for key in raw:
        if key not in _KNOWN_KEYS and not _PU_KEY.match(key):
            raise ValidationError("unknown key", key=key)

    scenario_name = _get(raw, "scenario", str, "cyclic")
    if scenario_name not in _SCENARIO_KINDS:
        raise ValidationError(f"must be one of {sorted(_SCENARIO_KINDS)}", key="scenario")
    policy = _get(raw, "policy", str, "ddqsa")
    if policy not in POLICIES:
        raise ValidationError(f"must be one of {POLICIES}", key="policy")

    n_channels = _get(raw, "n_channels", int, 4)
    subset_size = _get(raw, "subset_size", int, 2)

    if scenario_name == "cyclic":
        probs = {k: _get(raw, k, float, None) for k in ("p_stay", "p_switch", "p_dswitch")}
        try:
            scenario: Scenario = Cyclic(CyclicParams(n_channels, **probs))
        except ValueError as exc:
            raise ValidationError(str(exc), key="p_stay/p_switch/p_dswitch")
        default_history = 2
    else:
        chains = _parse_chains(raw, n_channels)
        try:
            scenario = _SCENARIO_KINDS[scenario_name](n_channels, chains)
        except ValueError as exc:
            raise ValidationError(str(exc), key="pu_end_prob_*")
        default_history = 6

    try:
        hyperparams = Hyperparams(
            n_channels=n_channels,
            subset_size=subset_size,
            history_len=_get(raw, "history", int, default_history),
            gamma=_get(raw, "gamma", float, 0.8),
            learning_rate=_get(raw, "learning_rate", float, 1e-4),
            replay_capacity=_get(raw, "replay_capacity", int, 30_000),
            target_sync=_get(raw, "target_sync", int, 20),
            batch_size=_get(raw, "batch_size", int, 64),
            hidden=_get(raw, "hidden", _ints, (128, 128)),
            p_ac=_get(raw, "p_ac", float, 1.0),
        )
    except ValueError as exc:
        raise ValidationError(str(exc))

    config = ExperimentConfig(
        scenario=scenario,
        policy=policy,
        hyperparams=hyperparams,
        total_steps=_get(raw, "total_steps", int, 1_000_000),
        n_replicas=_get(raw, "n_replicas", int, 30),
        base_seed=_get(raw, "seed", int, 1),
        out_dir=_get(raw, "out", str, "results"),
        window_len=_get(raw, "window", int, 100),
        workers=_get(raw, "workers", int, 1),
        checkpoint_every=_get(raw, "checkpoint_every", int, 100_000),
        raw=dict(raw),
    )
    for name, value in (overrides or {}).items():
        if value is not None:
            setattr(config, name, value)
    for name in ("total_steps", "n_replicas", "window_len", "checkpoint_every"):
        if getattr(config, name) < 1:
            raise ValidationError("must be >= 1", key=name)
    if config.workers < 0:
        raise ValidationError("must be >= 0 (0 = one per CPU)", key="workers")
    return config


def _parse_chains(raw: dict[str, str], n_channels: int) -> tuple[PuChain, ...]:
    keys = sorted((int(m.group(1)), k) for k in raw if (m := _PU_KEY.match(k)))
    if not keys:
        if n_channels != 4:
            raise ValidationError(
                "frame scenarios default to the 4-PU benchmark chains only for "
                "n_channels=4; specify chains explicitly",
                key="pu_end_prob_0",
            )
        return BENCHMARK_PU_CHAINS
    if [i for i, _ in keys] != list(range(len(keys))):
        raise ValidationError(
            f"PU chain indices must be contiguous from 0, got {[i for i, _ in keys]}",
            key="pu_end_prob_*",
        )
    chains = []
    for _, key in keys:
        try:
            chains.append(PuChain(_floats(raw[key])))
        except ValueError as exc:
            raise ValidationError(str(exc), key=key)
    return tuple(chains)
