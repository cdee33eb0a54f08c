"""Windowed throughput bookkeeping and multi-replica aggregation.

Per window of `window_len` slots: eta is the success count / window_len,
eta_bound the feasible count / window_len, and the relative throughput
rho = successes / feasible_steps. A slot is feasible when a free channel
existed *and* the SU transmitted; on always-transmitting runs this is
exactly "a free channel existed", and on partially idle runs it keeps rho
comparable across transmit probabilities (idle slots still advance the
window clock, which is why low-P_ac curves are noisier).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, NoFeasibleSteps


@dataclass
class WindowStats:
    tau: int                 # 1-based window index
    successes: int
    feasible_steps: int
    window_len: int = 100

    def __post_init__(self):
        if not 0 <= self.successes <= self.feasible_steps <= self.window_len:
            raise ValueError(
                f"window {self.tau}: successes={self.successes}, "
                f"feasible={self.feasible_steps}, len={self.window_len}"
            )

    @property
    def eta(self) -> float:
        return self.successes / self.window_len

    @property
    def eta_bound(self) -> float:
        return self.feasible_steps / self.window_len


def relative_throughput(stats: WindowStats) -> float:
    """rho = successes / feasible_steps; undefined when nothing was feasible."""
    if stats.feasible_steps == 0:
        raise NoFeasibleSteps(f"window {stats.tau} has no feasible step")
    return stats.successes / stats.feasible_steps


def rho_or_nan(stats: WindowStats) -> float:
    try:
        return relative_throughput(stats)
    except NoFeasibleSteps:
        return float("nan")


class ThroughputRecorder:
    """Accumulates per-slot outcomes into consecutive fixed-length windows."""

    def __init__(self, window_len: int = 100, on_window=None):
        if window_len < 1:
            raise ValueError("window_len must be >= 1")
        self.window_len = window_len
        self.on_window = on_window
        self.windows: list[WindowStats] = []
        self._successes = 0
        self._feasible = 0
        self._steps = 0

    def update(self, reward, free_exists: bool) -> None:
        """Record one slot; reward None means the SU stayed idle."""
        if reward == 1:
            self._successes += 1
        if free_exists and reward is not None:
            self._feasible += 1
        self._steps += 1
        if self._steps == self.window_len:
            self._close(self.window_len)

    def flush(self) -> None:
        """Close a trailing partial window, if any (reported, never dropped)."""
        if self._steps:
            self._close(self._steps)

    def _close(self, length: int) -> None:
        stats = WindowStats(len(self.windows) + 1, self._successes, self._feasible, length)
        self.windows.append(stats)
        self._successes = self._feasible = self._steps = 0
        if self.on_window is not None:
            self.on_window(stats.tau, stats.eta, stats.eta_bound)

    @property
    def total_successes(self) -> int:
        return sum(w.successes for w in self.windows) + self._successes


@dataclass
class RunTrace:
    """Windowed results of one replica."""

    replica: int
    seed: int
    windows: list[WindowStats] = field(default_factory=list)

    def rho(self) -> np.ndarray:
        """Per-window relative throughput, NaN where undefined."""
        return np.array([rho_or_nan(w) for w in self.windows])


@dataclass
class Aggregate:
    tau: np.ndarray
    rho_mean: np.ndarray
    rho_std: np.ndarray
    n_replicas: np.ndarray


def average_runs(traces: list[RunTrace]) -> Aggregate:
    """Per-window mean/std of rho over replicas (undefined windows excluded per-window)."""
    if not traces:
        raise LengthMismatch("no traces to aggregate")
    lengths = {len(t.windows) for t in traces}
    if len(lengths) != 1:
        raise LengthMismatch(f"traces have differing window counts: {sorted(lengths)}")
    rho = np.vstack([t.rho() for t in traces])
    defined = ~np.isnan(rho)
    n = defined.sum(axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.where(n > 0, np.nanmean(rho, axis=0), np.nan)
        std = np.where(n > 0, np.nanstd(rho, axis=0), np.nan)
    tau = np.array([w.tau for w in traces[0].windows])
    return Aggregate(tau, mean, std, n)


def _atomic_write(path, write_fn) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        write_fn(fh)
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_windows_csv(path, traces: list[RunTrace]) -> None:
    """One row per window per replica: replica,seed,tau,eta,eta_bound,rho."""

    def write(fh):
        w = csv.writer(fh)
        w.writerow(["replica", "seed", "tau", "eta", "eta_bound", "rho"])
        for t in traces:
            for win in t.windows:
                w.writerow(
                    [t.replica, t.seed, win.tau, _fmt(win.eta), _fmt(win.eta_bound), _fmt(rho_or_nan(win))]
                )

    _atomic_write(path, write)


def write_aggregate_csv(path, agg: Aggregate) -> None:
    """One row per window: tau,rho_mean,rho_std,n_replicas."""

    def write(fh):
        w = csv.writer(fh)
        w.writerow(["tau", "rho_mean", "rho_std", "n_replicas"])
        for tau, m, s, n in zip(agg.tau, agg.rho_mean, agg.rho_std, agg.n_replicas):
            w.writerow([tau, _fmt(m), _fmt(s), n])

    _atomic_write(path, write)
