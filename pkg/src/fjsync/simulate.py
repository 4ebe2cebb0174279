"""Discrete-event simulation of the two-branch fork-join network.

Every arrival forks into two partner jobs sharing one id.  Each branch is an
M/M/N FIFO queue; the branch departure epochs are produced by the exact
Kiefer-Wolfowitz recursion (a job seizes the earliest-free of the N servers),
which yields the same event times as an explicit event-queue engine.  The
ideal synchronizer stores the first partner of each pair and releases the
pair the instant the second partner arrives, so the recorded wait is
t_sync = |t_a - t_b|.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .analytic import INFINITE, NetworkParams, _is_infinite


@dataclass(frozen=True)
class Job:
    """One branch copy of a forked arrival; partners share id and fork_time."""

    id: int
    fork_time: float
    branch: str


@dataclass(frozen=True)
class SojournSample:
    id: int
    t_a: float
    t_b: float
    t_sync: float
    first_branch: str


@dataclass(frozen=True)
class SimResult:
    """Per-pair sojourn record of one seeded run.

    Array fields hold the post-warmup samples in pair order.  Occupancy
    statistics are measured over the full run horizon [0, last departure].
    """

    params: NetworkParams
    n_jobs: int
    seed: int
    warmup_fraction: float
    ids: np.ndarray
    t_a: np.ndarray
    t_b: np.ndarray
    t_sync: np.ndarray
    first_branch: np.ndarray  # 'a' / 'b'
    t_mean_emp: float
    sync_occupancy_mean: float
    max_memory: int
    fork_times: np.ndarray      # all pairs, including warmup
    dep_a: np.ndarray           # branch-a departure epochs, all pairs
    dep_b: np.ndarray

    def samples(self):
        for i in range(len(self.ids)):
            yield SojournSample(
                int(self.ids[i]),
                float(self.t_a[i]),
                float(self.t_b[i]),
                float(self.t_sync[i]),
                str(self.first_branch[i]),
            )

    def summary(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "n_jobs": self.n_jobs,
            "seed": self.seed,
            "warmup_fraction": self.warmup_fraction,
            "n_samples": int(len(self.ids)),
            "t_mean_emp": self.t_mean_emp,
            "sync_occupancy_mean": self.sync_occupancy_mean,
            "max_memory": self.max_memory,
        }

    def write_samples_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "t_a", "t_b", "t_sync", "first_branch"])
            for i in range(len(self.ids)):
                writer.writerow(
                    [
                        int(self.ids[i]),
                        f"{self.t_a[i]:.17g}",
                        f"{self.t_b[i]:.17g}",
                        f"{self.t_sync[i]:.17g}",
                        str(self.first_branch[i]),
                    ]
                )

    def write_summary_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


@njit(cache=True, nogil=True)
def _mmn_departures(arrivals, services, n_servers):
    """Exact FIFO M/M/N departure epochs: earliest-free-server assignment."""
    free = np.zeros(n_servers)
    dep = np.empty(arrivals.size)
    for j in range(arrivals.size):
        k = 0
        for m in range(1, n_servers):
            if free[m] < free[k]:
                k = m
        start = arrivals[j] if arrivals[j] > free[k] else free[k]
        dep[j] = start + services[j]
        free[k] = dep[j]
    return dep


def _branch_departures(arrivals, services, n_servers):
    if _is_infinite(n_servers):
        return arrivals + services
    return _mmn_departures(arrivals, services, int(n_servers))


def _exponential(rng: np.random.Generator, rate: float, n: int) -> np.ndarray:
    # inverse transform, monotone in the uniform draw
    return -np.log1p(-rng.random(n)) / rate


def run_simulation(
    params: NetworkParams,
    n_jobs: int,
    seed: int,
    warmup_fraction: float = 0.0,
) -> SimResult:
    """Simulate n_jobs forked pairs through the network and the synchronizer.

    Three PRNG substreams (arrivals, branch-a services, branch-b services)
    are spawned from the seed, so branch variance stays isolated.  Identical
    (params, n_jobs, seed, warmup_fraction) give a bit-identical result.
    """
    if n_jobs < 1:
        raise ValueError("n_jobs must be >= 1")
    if not 0 <= warmup_fraction < 1:
        raise ValueError("warmup_fraction must lie in [0, 1)")
    stream_arr, stream_a, stream_b = (
        np.random.Generator(np.random.PCG64(s))
        for s in np.random.SeedSequence(seed).spawn(3)
    )
    fork_times = np.cumsum(_exponential(stream_arr, params.lam, n_jobs))
    dep_a = _branch_departures(
        fork_times, _exponential(stream_a, params.mu_a, n_jobs), params.n_a
    )
    dep_b = _branch_departures(
        fork_times, _exponential(stream_b, params.mu_b, n_jobs), params.n_b
    )
    t_a = dep_a - fork_times
    t_b = dep_b - fork_times
    t_sync = np.abs(t_a - t_b)
    first = np.where(t_a <= t_b, "a", "b")

    skip = int(warmup_fraction * n_jobs)
    keep = slice(skip, None)
    times, counts = _occupancy_steps(dep_a, dep_b)
    horizon = times[-1] if times.size else 0.0
    occ_mean = (
        float(np.sum(counts[:-1] * np.diff(times)) / horizon) if horizon > 0 else 0.0
    )
    return SimResult(
        params=params,
        n_jobs=n_jobs,
        seed=seed,
        warmup_fraction=warmup_fraction,
        ids=np.arange(n_jobs)[keep],
        t_a=t_a[keep],
        t_b=t_b[keep],
        t_sync=t_sync[keep],
        first_branch=first[keep],
        t_mean_emp=float(np.mean(t_sync[keep])),
        sync_occupancy_mean=occ_mean,
        max_memory=int(counts.max(initial=0)),
        fork_times=fork_times,
        dep_a=dep_a,
        dep_b=dep_b,
    )


def synchronizer_step(memory: dict, job: Job, time: float):
    """One monitor action of the ideal synchronizer.

    Stores ``job`` if its partner is absent, otherwise removes the waiting
    partner and returns the matched pair.  Mutates ``memory`` (id -> stored
    (Job, arrival time)) and returns None when the job has to wait.
    """
    held = memory.get(job.id)
    if held is not None:
        stored_job, stored_time = held
        if stored_job.branch == job.branch:
            raise RuntimeError(
                f"duplicate arrival for id={job.id} branch={job.branch}: simulator bug"
            )
        del memory[job.id]
        return (stored_job, stored_time), (job, time)
    memory[job.id] = (job, time)
    return None


def _occupancy_steps(dep_a, dep_b):
    """Piecewise-constant unmatched count: +1 at the first partner's arrival,
    -1 at the second's, merged over all pairs in time order."""
    first = np.minimum(dep_a, dep_b)
    second = np.maximum(dep_a, dep_b)
    times = np.concatenate([first, second])
    deltas = np.concatenate([np.ones(first.size), -np.ones(second.size)])
    order = np.argsort(times, kind="stable")
    return times[order], np.cumsum(deltas[order])


def occupancy_trace(result: SimResult):
    """Synchronizer memory occupancy as (event times, counts after event)."""
    if result.fork_times.size == 0:
        return np.array([]), np.array([])
    return _occupancy_steps(result.dep_a, result.dep_b)
