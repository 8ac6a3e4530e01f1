"""Domain records and constraint validation for multi-AP edge offloading.

Everything is SI internally (bits, Hz, seconds, Watts, Joules, CPU
cycles per second); milli-joules appear only at reporting boundaries.
All records are immutable value types and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class StructuralError(ValueError):
    """Malformed input: dimension mismatch, NaN, or negative entries."""


class InfeasiblePairError(ValueError):
    """A (user, AP) operating point cannot meet its deadline."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class InfeasibilityError(RuntimeError):
    """A subproblem has no feasible solution; names the offending entity."""

    def __init__(self, message, user=None, ap=None):
        super().__init__(message)
        self.user = user
        self.ap = ap


class BracketError(RuntimeError):
    """A bisection bracket does not enclose the target."""


class ConvergenceError(RuntimeError):
    """An iteration budget was exhausted before reaching tolerance."""


class DegenerateInputError(ValueError):
    """Input leaves nothing to solve (e.g. no active pairs)."""


class InternalConsistencyError(RuntimeError):
    """A step that must not increase energy did; indicates a solver bug."""


def _as_matrix(values, rows, cols, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape != (rows, cols):
        raise StructuralError(f"{name}: expected shape ({rows}, {cols}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{name}: contains NaN or infinite entries")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TaskSpec:
    """One user's computing task: input size, deadline, cycle demand per bit."""

    input_bits: float
    deadline_s: float
    cycles_per_bit: float

    def __post_init__(self):
        for name in ("input_bits", "deadline_s", "cycles_per_bit"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise StructuralError(f"TaskSpec.{name} must be a positive finite real, got {v}")

    @property
    def required_cycles(self):
        # derived, never stored: W = eta * L
        return self.cycles_per_bit * self.input_bits


@dataclass(frozen=True)
class Scenario:
    """A network instance: K users, M APs, channel gains and budgets.

    gains[i, j] is the linear channel power gain from user i to AP j.
    compute_capacity[j] is AP j's server capacity in cycles/s and
    bandwidth_hz the system-wide uplink bandwidth shared by all pairs.
    """

    num_users: int
    num_aps: int
    gains: np.ndarray
    tasks: tuple
    bandwidth_hz: float
    compute_capacity: np.ndarray
    noise_psd: float

    def __post_init__(self):
        if self.num_users < 1 or self.num_aps < 1:
            raise StructuralError("need at least one user and one AP")
        g = _as_matrix(self.gains, self.num_users, self.num_aps, "gains")
        if np.any(g <= 0):
            raise StructuralError("gains must be strictly positive")
        object.__setattr__(self, "gains", g)
        tasks = tuple(self.tasks)
        if len(tasks) != self.num_users:
            raise StructuralError(f"expected {self.num_users} tasks, got {len(tasks)}")
        object.__setattr__(self, "tasks", tasks)
        cap = np.asarray(self.compute_capacity, dtype=float)
        if cap.shape != (self.num_aps,) or np.any(~np.isfinite(cap)) or np.any(cap <= 0):
            raise StructuralError("compute_capacity must be M positive finite reals")
        cap = cap.copy()
        cap.setflags(write=False)
        object.__setattr__(self, "compute_capacity", cap)
        if not (math.isfinite(self.bandwidth_hz) and self.bandwidth_hz > 0):
            raise StructuralError("bandwidth_hz must be positive")
        if not (math.isfinite(self.noise_psd) and self.noise_psd > 0):
            raise StructuralError("noise_psd must be positive")

    @property
    def task_bits(self):
        return np.array([t.input_bits for t in self.tasks])

    @property
    def deadlines_s(self):
        return np.array([t.deadline_s for t in self.tasks])

    @property
    def cycles_per_bit(self):
        return np.array([t.cycles_per_bit for t in self.tasks])

    def noise_over_gain(self):
        """K x M matrix of N0 / h ratios, the per-pair energy scale."""
        return self.noise_psd / self.gains


@dataclass(frozen=True)
class Allocation:
    """A full operating point: data split, bandwidth and compute matrices."""

    data: np.ndarray
    bandwidth: np.ndarray
    compute: np.ndarray

    def __post_init__(self):
        shapes = {np.asarray(m).shape for m in (self.data, self.bandwidth, self.compute)}
        if len(shapes) != 1:
            raise StructuralError(f"allocation matrices disagree in shape: {shapes}")
        rows, cols = shapes.pop()
        for name in ("data", "bandwidth", "compute"):
            m = _as_matrix(getattr(self, name), rows, cols, name)
            if np.any(m < 0):
                raise StructuralError(f"{name}: negative entries")
            object.__setattr__(self, name, m)

    def slack(self, scenario):
        """Per-pair deadline slack t = D - eta*L/q (t = D where no compute)."""
        d = scenario.deadlines_s[:, None]
        eta = scenario.cycles_per_bit[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = d - eta * self.data / self.compute
        return np.where(self.compute > 0, t, np.where(self.data > 0, -np.inf, d))


@dataclass(frozen=True)
class PairPoint:
    """One (user, AP) operating point on which all link formulas act.

    Exactly one of compute_cps / slack_s is authoritative at construction;
    the other is derived through t = D - eta*L/q (use the classmethods).
    """

    data_bits: float
    bandwidth_hz: float
    compute_cps: float
    slack_s: float
    deadline_s: float
    cycles_per_bit: float
    noise_over_gain: float

    @classmethod
    def from_compute(cls, data_bits, bandwidth_hz, compute_cps, deadline_s,
                     cycles_per_bit, noise_over_gain):
        if compute_cps <= 0:
            raise StructuralError("compute_cps must be positive")
        slack = deadline_s - cycles_per_bit * data_bits / compute_cps
        return cls(data_bits, bandwidth_hz, compute_cps, slack, deadline_s,
                   cycles_per_bit, noise_over_gain)

    @classmethod
    def from_slack(cls, data_bits, bandwidth_hz, slack_s, deadline_s,
                   cycles_per_bit, noise_over_gain):
        if data_bits > 0:
            if not 0 < slack_s < deadline_s:
                raise InfeasiblePairError(
                    f"slack {slack_s} outside (0, deadline) for loaded pair")
            compute = cycles_per_bit * data_bits / (deadline_s - slack_s)
        else:
            slack_s = deadline_s
            compute = math.inf  # unloaded pair: any compute meets the deadline
        return cls(data_bits, bandwidth_hz, compute, slack_s, deadline_s,
                   cycles_per_bit, noise_over_gain)

    def __post_init__(self):
        if self.data_bits < 0:
            raise StructuralError("data_bits must be nonnegative")
        for name in ("deadline_s", "cycles_per_bit", "noise_over_gain"):
            if getattr(self, name) <= 0:
                raise StructuralError(f"{name} must be positive")
        if self.data_bits == 0 and self.slack_s != self.deadline_s:
            raise StructuralError("zero-data pair must have slack equal to its deadline")


@dataclass(frozen=True)
class SolveConfig:
    """Solver tolerances and iteration budgets.

    epsilon_j is the outer stop threshold in Joules; bisect_tol the
    relative tolerance shared by every bisection and by the equality
    residual checks. activity_threshold_bits is the data size below
    which a pair is frozen at L = x = q = 0 and excluded from the KKT
    systems (zero-data pairs would make the rate formula indeterminate).
    """

    epsilon_j: float = 1e-5
    bisect_tol: float = 1e-9
    max_outer_iters: int = 100
    max_inner_iters: int = 200
    activity_threshold_bits: float = 0.0

    def __post_init__(self):
        if self.epsilon_j <= 0 or self.bisect_tol <= 0:
            raise StructuralError("tolerances must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise StructuralError("iteration budgets must be positive")
        if self.activity_threshold_bits < 0:
            raise StructuralError("activity threshold must be nonnegative")

    @classmethod
    def for_scenario(cls, scenario, **overrides):
        """Default configuration with the activity threshold tied to task sizes."""
        thr = 1e-6 * min(t.input_bits for t in scenario.tasks)
        overrides.setdefault("activity_threshold_bits", thr)
        return cls(**overrides)


@dataclass(frozen=True)
class Violation:
    """One violated constraint with its (relative, where meaningful) residual."""

    constraint: str
    where: tuple
    residual: float

    def __str__(self):
        return f"{self.constraint}{list(self.where)}: residual {self.residual:.3e}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "all constraints satisfied"
        return "\n".join(str(v) for v in self.violations)


# exponents above this overflow float64 through 2**u; such points only
# arise from degenerate brackets and are rejected rather than propagated
EXPONENT_CAP = 700.0 / math.log(2.0)


def active_mask(allocation, cfg):
    return allocation.data > cfg.activity_threshold_bits


def budget_residuals(scenario, allocation, cfg):
    """Relative residuals of the three budget equalities.

    The bandwidth total is checked only when at least one pair is active,
    and each AP's compute total only when it serves an active pair; an
    idle resource has nobody to be assigned to.
    """
    act = active_mask(allocation, cfg)
    out = {}
    bits = scenario.task_bits
    for i in range(scenario.num_users):
        out[f"data_user_{i}"] = abs(allocation.data[i].sum() - bits[i]) / bits[i]
    if act.any():
        out["bandwidth_total"] = abs(allocation.bandwidth.sum() - scenario.bandwidth_hz) \
            / scenario.bandwidth_hz
    for j in range(scenario.num_aps):
        if act[:, j].any():
            cap = scenario.compute_capacity[j]
            out[f"compute_ap_{j}"] = abs(allocation.compute[:, j].sum() - cap) / cap
    return out


def validate(scenario, allocation, cfg):
    """Check an allocation against every constraint; pure function.

    Returns a ValidationReport listing the violated constraints with
    residuals. Structural problems (shape mismatch, NaN, negatives) raise
    StructuralError instead of being reported.
    """
    if allocation.data.shape != (scenario.num_users, scenario.num_aps):
        raise StructuralError(
            f"allocation shape {allocation.data.shape} does not match scenario "
            f"({scenario.num_users}, {scenario.num_aps})")
    bad = []
    tol = cfg.bisect_tol

    demand = scenario.cycles_per_bit * scenario.task_bits / scenario.deadlines_s
    total_demand = demand.sum()
    total_cap = scenario.compute_capacity.sum()
    if total_demand >= total_cap:
        bad.append(Violation("aggregate compute demand exceeds capacity", (),
                             total_demand / total_cap - 1.0))

    for name, res in budget_residuals(scenario, allocation, cfg).items():
        if res > tol:
            kind, _, idx = name.rpartition("_")
            where = (int(idx),) if idx.isdigit() else ()
            bad.append(Violation(f"budget equality {kind}", where, res))

    act = active_mask(allocation, cfg)
    slack = allocation.slack(scenario)
    d = scenario.deadlines_s[:, None]
    eta = scenario.cycles_per_bit[:, None]
    for i, j in zip(*np.nonzero(act)):
        i, j = int(i), int(j)
        if allocation.compute[i, j] <= 0:
            bad.append(Violation("no compute on loaded pair", (i, j), 1.0))
            continue
        if slack[i, j] <= 0:
            bad.append(Violation("nonpositive slack", (i, j), -slack[i, j] / d[i, 0]))
            continue
        if allocation.bandwidth[i, j] <= 0:
            bad.append(Violation("no bandwidth on loaded pair", (i, j), 1.0))
            continue
        u = allocation.data[i, j] / (allocation.bandwidth[i, j] * slack[i, j])
        if u > EXPONENT_CAP:
            bad.append(Violation("rate exponent overflow", (i, j), u / EXPONENT_CAP - 1.0))

    # per-AP load implied by this data split must be servable at all
    load = (eta * allocation.data / d).sum(axis=0)
    for j in range(scenario.num_aps):
        if act[:, j].any() and load[j] >= scenario.compute_capacity[j]:
            bad.append(Violation("ap compute overload", (j,),
                                 load[j] / scenario.compute_capacity[j] - 1.0))

    return ValidationReport(tuple(bad))


# ---------------------------------------------------------------------------
# JSON serialization (matrices row-major; values round-trip to 1e-12 relative)

def scenario_to_dict(scenario):
    return {
        "num_users": scenario.num_users,
        "num_aps": scenario.num_aps,
        "gains": scenario.gains.tolist(),
        "tasks": [
            {"input_bits": t.input_bits, "deadline_s": t.deadline_s,
             "cycles_per_bit": t.cycles_per_bit}
            for t in scenario.tasks
        ],
        "bandwidth_hz": scenario.bandwidth_hz,
        "compute_capacity": scenario.compute_capacity.tolist(),
        "noise_psd": scenario.noise_psd,
    }


def scenario_from_dict(d):
    return Scenario(
        num_users=int(d["num_users"]),
        num_aps=int(d["num_aps"]),
        gains=d["gains"],
        tasks=tuple(TaskSpec(**t) for t in d["tasks"]),
        bandwidth_hz=float(d["bandwidth_hz"]),
        compute_capacity=d["compute_capacity"],
        noise_psd=float(d["noise_psd"]),
    )


def allocation_to_dict(allocation):
    return {
        "data": allocation.data.tolist(),
        "bandwidth": allocation.bandwidth.tolist(),
        "compute": allocation.compute.tolist(),
    }


def allocation_from_dict(d):
    return Allocation(data=d["data"], bandwidth=d["bandwidth"], compute=d["compute"])


def save_scenario(scenario, path, provenance=None):
    doc = scenario_to_dict(scenario)
    if provenance:
        doc["provenance"] = provenance
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scenario(path):
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
