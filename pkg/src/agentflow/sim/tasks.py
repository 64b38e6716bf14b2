"""Seeded task arrival generation (Poisson process in ticks)."""

from __future__ import annotations

import random
from typing import NamedTuple

from ..engine import derive_seed


class TaskArrival(NamedTuple):
    tick: int
    amr_index: int
    task_id: str


def generate_tasks(
    rate_per_min: float,
    duration_ticks: int,
    ticks_per_second: int,
    seed: int,
    n_amrs: int = 1,
) -> list[TaskArrival]:
    """Poisson arrivals over [0, duration) with a uniformly chosen issuing AMR.

    The per-tick rate is rate_per_min / 60 / ticks_per_second, so the
    expected count is rate_per_min * duration in minutes.
    """
    if rate_per_min < 0:
        raise ValueError("task rate must be non-negative")
    if rate_per_min == 0:
        return []
    rng = random.Random(derive_seed(seed, "tasks"))
    lam = rate_per_min / 60.0 / ticks_per_second
    arrivals: list[TaskArrival] = []
    t = 0.0
    idx = 0
    while True:
        t += rng.expovariate(lam)
        tick = int(t)
        if tick >= duration_ticks:
            break
        arrivals.append(TaskArrival(tick, rng.randrange(n_amrs), f"t{idx:06d}"))
        idx += 1
    return arrivals


def failure_schedule(
    node_ids: list[str],
    controller_fraction: float,
    edge_fraction: float,
    window_start: int,
    window_end: int,
    seed: int,
) -> list[tuple[int, str]]:
    """Seeded crash-stop schedule, nested across fractions.

    A single seeded permutation with per-node failure times is drawn for the
    whole pool; a fraction selects a prefix of it. Raising either fraction
    therefore only adds failures, leaving existing (tick, node) pairs
    untouched, which keeps failure-rate sweeps paired run-for-run.
    """
    if not node_ids:
        return []
    rng = random.Random(derive_seed(seed, "faults"))
    order = list(node_ids)
    rng.shuffle(order)
    span = max(1, window_end - window_start)
    times = {node: window_start + int(rng.random() * span) for node in order}
    count = max(
        int(controller_fraction * len(node_ids) + 0.5),
        int(edge_fraction * len(node_ids) + 0.5),
    )
    count = min(count, len(node_ids))
    chosen = order[:count]
    return sorted(((times[node], node) for node in chosen))
