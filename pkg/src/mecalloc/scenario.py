"""Reproducible scenario generation: placement, pathloss, default budgets.

APs sit at the quadrant centers of a square region and users are placed
uniformly at random inside it. The channel gain of a pair follows the
log-distance pathloss 30.6 + 36.7*log10(d) dB with a 1 m distance floor.
The generator is numpy's PCG64, so a seed pins the scenario exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .model import Scenario, StructuralError, TaskSpec

GENERATOR_NAME = "numpy-pcg64"


@dataclass(frozen=True)
class GenParams:
    num_users: int = 8
    num_aps: int = 4
    region_m: float = 200.0
    bandwidth_hz: float = 1e7
    noise_psd_w_per_hz: float = 10.0 ** (-20.4)  # -174 dBm/Hz
    task_bits: float = 1.5e6
    deadline_s: float = 0.5
    cycles_per_bit: float = 1e3
    capacity_cps: float = 2.5e10
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1 or self.num_aps < 1:
            raise StructuralError("need at least one user and one AP")
        for name in ("region_m", "bandwidth_hz", "noise_psd_w_per_hz",
                     "task_bits", "deadline_s", "cycles_per_bit", "capacity_cps"):
            if getattr(self, name) <= 0:
                raise StructuralError(f"GenParams.{name} must be positive")


def pathloss_gain(distance_m: float) -> float:
    """Linear power gain of the log-distance model, floored at 1 m."""
    d = max(float(distance_m), 1.0)
    return 10.0 ** (-(30.6 + 36.7 * math.log10(d)) / 10.0)


def _ap_grid(num_aps, region):
    """AP positions: quadrant centers for 4, otherwise a near-square grid."""
    cols = int(math.ceil(math.sqrt(num_aps)))
    rows = int(math.ceil(num_aps / cols))
    pos = []
    for idx in range(num_aps):
        r, c = divmod(idx, cols)
        pos.append(((c + 0.5) * region / cols, (r + 0.5) * region / rows))
    return np.array(pos)


def generate(params: GenParams) -> Scenario:
    """Draw a scenario from the parameters; deterministic for a seed."""
    rng = np.random.Generator(np.random.PCG64(params.seed))
    users = rng.uniform(0.0, params.region_m, size=(params.num_users, 2))
    aps = _ap_grid(params.num_aps, params.region_m)
    dist = np.linalg.norm(users[:, None, :] - aps[None, :, :], axis=2)
    gains = np.array([[pathloss_gain(dij) for dij in row] for row in dist])
    task = TaskSpec(input_bits=params.task_bits, deadline_s=params.deadline_s,
                    cycles_per_bit=params.cycles_per_bit)
    return Scenario(
        num_users=params.num_users,
        num_aps=params.num_aps,
        gains=gains,
        tasks=(task,) * params.num_users,
        bandwidth_hz=params.bandwidth_hz,
        compute_capacity=np.full(params.num_aps, params.capacity_cps),
        noise_psd=params.noise_psd_w_per_hz,
    )


def provenance(params: GenParams) -> dict:
    return {"generator": GENERATOR_NAME, "seed": params.seed,
            "params": asdict(params)}


def override_parameter(scenario: Scenario, name: str, value: float) -> Scenario:
    """A copy of the scenario with one swept parameter replaced."""
    if value <= 0:
        raise StructuralError(f"{name} must be positive, got {value}")
    tasks = scenario.tasks
    bandwidth = scenario.bandwidth_hz
    capacity = scenario.compute_capacity
    if name == "deadline_s":
        tasks = tuple(TaskSpec(t.input_bits, value, t.cycles_per_bit) for t in tasks)
    elif name == "task_bits":
        tasks = tuple(TaskSpec(value, t.deadline_s, t.cycles_per_bit) for t in tasks)
    elif name == "bandwidth_hz":
        bandwidth = value
    elif name == "capacity_cps":
        capacity = np.full(scenario.num_aps, value)
    else:
        raise StructuralError(f"unknown sweep parameter {name!r}")
    return Scenario(
        num_users=scenario.num_users,
        num_aps=scenario.num_aps,
        gains=scenario.gains,
        tasks=tasks,
        bandwidth_hz=bandwidth,
        compute_capacity=capacity,
        noise_psd=scenario.noise_psd,
    )
