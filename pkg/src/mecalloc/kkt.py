"""Monotone-bisection machinery and the KKT subproblem solvers.

Each subproblem pins two of the three variable blocks (data split L,
bandwidth x, compute q) and solves the stationarity condition of the
third by nested bisection: an inner root per pair against the current
dual, and an outer search driving the budget sum onto its constraint.

  solve_daa: per-user data duals nu (the data constraint multiplier,
             stored with positive sign), roots of dE/dL = nu;
  solve_baa: one global bandwidth dual beta > 0, roots of dE/dx + beta = 0;
  solve_caa: per-AP compute duals mu >= 0 over the deadline slack t,
             roots of dE/dt + mu * eta*L/(D-t)^2 = 0;
  solve_bcaa: exact alternation of solve_baa and solve_caa (each step is
             the global minimum of a convex block, so energy never rises).

Every function being bisected is strictly monotone on its bracket, and
every budget sum is strictly monotone in its dual, so the searches never
lose the root. Duals span many decades at SI magnitudes; the outer
searches therefore bisect the dual's base-10 logarithm. Searches that
share a family (one dual per user, or one per AP) advance in lockstep so
each iteration is a single vectorized pass over all pairs.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import (
    BracketError,
    ConvergenceError,
    DegenerateInputError,
    InfeasibilityError,
    SolveConfig,
    StructuralError,
)
from .physics import energy_matrix

LN2 = math.log(2.0)

# keeps every slack at least this fraction of the deadline away from the
# t = 0 singularity of 2**(L/(x t))
SLACK_MARGIN = 1e-6

# fixed halving count for the vectorized per-pair root solves; shrinks
# any bracket to float64 resolution
INNER_ITERS = 48

_EXPANSION_CAP = 400


@dataclass(frozen=True)
class DualVariable:
    """A Lagrange/auxiliary multiplier found by outer bisection.

    kind "lambda_data" stores the nonnegative reparameterization of the
    per-user data multiplier (the raw multiplier is its negative);
    "beta_bandwidth" is global and strictly positive; "mu_compute" is
    per-AP and nonnegative. owner is the user/AP index, or None for the
    global bandwidth dual.
    """

    kind: str
    value: float
    owner: Optional[int] = None

    def __post_init__(self):
        if self.kind == "beta_bandwidth":
            if self.value <= 0:
                raise StructuralError("bandwidth dual must be positive")
        elif self.kind in ("mu_compute", "lambda_data"):
            if self.value < 0:
                raise StructuralError(f"{self.kind} dual must be nonnegative")
        else:
            raise StructuralError(f"unknown dual kind {self.kind!r}")


@dataclass(frozen=True)
class SolveDiagnostic:
    dual: DualVariable
    residual: float
    iterations: int


@dataclass
class BisectionProblem:
    """A monotone scalar root search: find v with evaluate(v) = target.

    evaluate must be monotone on [lower, upper] and the endpoint values
    must bracket the target. The search stops when the interval width
    falls below tol * max(1, |midpoint|), or earlier when target_tol is
    set and the residual |evaluate(mid) - target| drops below it.
    """

    evaluate: Callable[[float], float]
    lower: float
    upper: float
    target: float = 0.0
    tol: float = 1e-9
    max_iters: int = 200
    target_tol: Optional[float] = None


def bisect(problem: BisectionProblem) -> float:
    lo, hi = problem.lower, problem.upper
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    f_lo = problem.evaluate(lo) - problem.target
    f_hi = problem.evaluate(hi) - problem.target
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise BracketError(
            f"no sign change across bracket: f({lo}) - target = {f_lo:.3e}, "
            f"f({hi}) - target = {f_hi:.3e}")
    increasing = f_hi > f_lo
    for _ in range(problem.max_iters):
        mid = 0.5 * (lo + hi)
        fm = problem.evaluate(mid) - problem.target
        if fm == 0.0 or (problem.target_tol is not None and abs(fm) <= problem.target_tol):
            return mid
        if (fm < 0) == increasing:
            lo = mid
        else:
            hi = mid
        if hi - lo <= problem.tol * max(1.0, abs(mid)):
            return 0.5 * (lo + hi)
    raise ConvergenceError(
        f"bisection did not reach tolerance in {problem.max_iters} iterations "
        f"(bracket [{lo}, {hi}])")


def _quiet_overflow(fn):
    """Solver entry wrapper: overflowed exponentials inside bracket probes
    only ever feed sign tests, so the warnings are noise."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        with np.errstate(over="ignore"):
            return fn(*args, **kwargs)
    return wrapper


def _vec_bisect(go_right, lo, hi, iters=INNER_ITERS):
    """Simultaneous bisection over an array of independent brackets.

    go_right(mid) returns a boolean array marking the entries whose root
    lies to the right of mid.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        right = go_right(mid)
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    return 0.5 * (lo + hi)


def _solve_duals(budget_of, targets, cfg, starts, increasing):
    """Lockstep family of monotone dual searches on log10 scale.

    budget_of maps a per-group dual vector to the per-group budget sums;
    each group's search is an independent geometric bracket expansion
    followed by bisection, but every probe evaluates all groups at once.
    A group stops as soon as its budget residual is inside half the
    configured relative tolerance (the caller still verifies).

    Returns (duals, evaluation count).
    """
    targets = np.asarray(targets, dtype=float)
    duals = np.clip(np.asarray(starts, dtype=float), 1e-280, 1e280)
    tol = 0.5 * cfg.bisect_tol * np.abs(targets)
    calls = 0

    def lo_ok(b):
        # True where the candidate qualifies as a lower bracket endpoint
        return (b >= targets) ^ increasing

    b = budget_of(duals)
    calls += 1
    best = duals.copy()
    done = np.abs(b - targets) <= tol
    lo = duals.copy()
    hi = duals.copy()
    need_hi = ~done & lo_ok(b)
    need_lo = ~done & ~lo_ok(b)
    for _ in range(_EXPANSION_CAP):
        pending = need_hi | need_lo
        if not pending.any():
            break
        cand = np.where(need_hi, hi * 2.0, np.where(need_lo, lo * 0.5, best))
        b = budget_of(np.where(pending, cand, best))
        calls += 1
        ok = lo_ok(b)
        hit = pending & (np.abs(b - targets) <= tol)
        # hunters ride the probe until the opposite endpoint qualifies:
        # a hi hunter stops when the candidate stops working as a lower
        # endpoint (the previous probe remains the valid lower end), and
        # symmetrically for lo hunters
        hi = np.where(need_hi, cand, hi)
        lo = np.where(need_hi & ok & ~hit, cand, lo)
        lo = np.where(need_lo, cand, lo)
        hi = np.where(need_lo & ~ok & ~hit, cand, hi)
        need_hi = need_hi & ok & ~hit
        need_lo = need_lo & ~ok & ~hit
        best = np.where(hit, cand, best)
        done |= hit
    else:
        raise BracketError("dual bracket not found by geometric expansion")

    with np.errstate(divide="ignore"):
        llo = np.log10(np.maximum(lo, 1e-300))
        lhi = np.log10(np.maximum(hi, 1e-300))
    for _ in range(cfg.max_inner_iters):
        if done.all():
            break
        mid = 0.5 * (llo + lhi)
        probe = np.where(done, best, 10.0 ** mid)
        b = budget_of(probe)
        calls += 1
        ok = lo_ok(b)
        hit = ~done & ((np.abs(b - targets) <= tol) | (lhi - llo <= 1e-13))
        best = np.where(hit, probe, best)
        done |= hit
        llo = np.where(~done & ok, mid, llo)
        lhi = np.where(~done & ~ok, mid, lhi)
    if not done.all():
        raise ConvergenceError(
            f"dual search exhausted {cfg.max_inner_iters} bisection steps")
    return best, calls


# ---------------------------------------------------------------------------
# stationarity functions (vectorized over pairs; overflow maps to +-inf,
# which only ever feeds sign tests during bracketing)

def _data_marginal(L, x, q, d, eta, a):
    """dE/dL at fixed (x, q); strictly increasing in L, equals a*ln2 at L=0.

    Callers suppress overflow warnings: an overflowed exponential only
    ever feeds sign tests during bracketing.
    """
    c = eta / q
    t = d - c * L
    s = L / (x * t)
    p = np.exp(s * LN2)
    return a * x * ((d * LN2 / (x * t) - c) * p + c)


def _bandwidth_stationarity(x, L, t, a, beta):
    """dE/dx + beta at fixed (L, t); strictly increasing in x."""
    u = L / (x * t)
    p = np.exp(u * LN2)
    return a * t * (p * (1.0 - u * LN2) - 1.0) + beta


def _slack_stationarity(t, L, x, d, w, a, mu):
    """dE/dt + mu * w/(d-t)^2 at fixed (L, x); strictly increasing in t."""
    u = L / (x * t)
    p = np.exp(u * LN2)
    return a * x * (p * (1.0 - u * LN2) - 1.0) + mu * w / (d - t) ** 2


# ---------------------------------------------------------------------------
# DAA: data allocation for fixed bandwidth and compute

def _data_roots(nu, x, q, d, eta, a, upper):
    """Per-pair loads satisfying dE/dL = nu, clipped to [0, upper]."""
    at_zero = a * LN2 >= nu
    at_cap = _data_marginal(upper, x, q, d, eta, a) <= nu
    roots = _vec_bisect(
        lambda mid: _data_marginal(mid, x, q, d, eta, a) < nu,
        np.zeros_like(upper), upper)
    return np.where(at_zero, 0.0, np.where(at_cap, upper, roots))


@_quiet_overflow
def solve_daa(scenario, x, q, cfg: SolveConfig, diag=None, dual_guess=None):
    """Optimal data split per user for fixed bandwidth and compute.

    Each user's row is an independent convex problem; its multiplier is
    located by bisection on the row sum, and pairs whose optimal load
    falls below the activity threshold are frozen at zero with the
    surviving pairs re-solved so the row budget stays exact.
    """
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    K, M = scenario.num_users, scenario.num_aps
    noise = scenario.noise_over_gain()
    d_user = scenario.deadlines_s
    eta_user = scenario.cycles_per_bit
    bits = scenario.task_bits
    usable = (q > 0) & (x > 0)
    nus = np.asarray(dual_guess, dtype=float).copy() if dual_guess is not None \
        else None

    for _ in range(M + 1):
        if not usable.any(axis=1).all():
            i = int(np.nonzero(~usable.any(axis=1))[0][0])
            raise InfeasibilityError(
                f"user {i}: no usable (bandwidth, compute) pair to carry data",
                user=i)
        ui, uj = np.nonzero(usable)
        xv, qv, av = x[ui, uj], q[ui, uj], noise[ui, uj]
        dv, etav = d_user[ui], eta_user[ui]
        upper = (1.0 - SLACK_MARGIN) * dv * qv / etav
        room = np.bincount(ui, weights=upper, minlength=K)
        if np.any(room < bits):
            i = int(np.nonzero(room < bits)[0][0])
            raise InfeasibilityError(
                f"user {i}: maximal feasible loads carry {room[i]:.6g} "
                f"of {bits[i]:.6g} bits", user=i)

        def row_sums(nu_users):
            roots = _data_roots(nu_users[ui], xv, qv, dv, etav, av, upper)
            return np.bincount(ui, weights=roots, minlength=K)

        if nus is None:
            # just above the smallest zero-load marginal of each row
            nus = np.full(K, np.inf)
            np.minimum.at(nus, ui, av)
            nus *= LN2 * 2.0
        nus, calls = _solve_duals(row_sums, bits, cfg, nus, increasing=True)
        roots = _data_roots(nus[ui], xv, qv, dv, etav, av, upper)
        crumbs = (roots > 0) & (roots <= cfg.activity_threshold_bits)
        if crumbs.any():
            usable = usable.copy()
            usable[ui[crumbs], uj[crumbs]] = False
            continue
        sums = np.bincount(ui, weights=roots, minlength=K)
        resid = np.abs(sums - bits) / bits
        if np.any(resid > cfg.bisect_tol):
            i = int(np.argmax(resid))
            raise ConvergenceError(f"user {i}: data row sum residual {resid[i]:.3e}")
        out = np.zeros((K, M))
        out[ui, uj] = roots * (bits / sums)[ui]
        if diag is not None:
            for i in range(K):
                diag.append(SolveDiagnostic(
                    DualVariable("lambda_data", float(nus[i]), owner=i),
                    residual=float(resid[i]), iterations=calls))
        return out
    raise ConvergenceError("activity freezing did not settle")


# ---------------------------------------------------------------------------
# BAA: bandwidth allocation for fixed data and slack

def _bandwidth_roots(beta, L, t, a, hi0):
    hi = np.array(hi0, dtype=float)
    for _ in range(_EXPANSION_CAP):
        too_low = _bandwidth_stationarity(hi, L, t, a, beta) <= 0
        if not too_low.any():
            break
        hi = np.where(too_low, hi * 2.0, hi)
    else:
        raise BracketError("bandwidth root bracket not found")
    lo = np.full_like(hi, 1e-300)
    return _vec_bisect(
        lambda mid: _bandwidth_stationarity(mid, L, t, a, beta) < 0, lo, hi)


@_quiet_overflow
def solve_baa(scenario, t, L, cfg: SolveConfig, diag=None, dual_guess=None):
    """Bandwidth split across all active pairs for fixed data and slack.

    A single global dual beta > 0 prices bandwidth; each pair's share is
    the unique root of its stationarity condition and the dual search
    drives the total onto the system bandwidth.
    """
    L = np.asarray(L, dtype=float)
    t = np.asarray(t, dtype=float)
    act = L > cfg.activity_threshold_bits
    if not act.any():
        raise DegenerateInputError("no active pairs to allocate bandwidth to")
    d = np.broadcast_to(scenario.deadlines_s[:, None], L.shape)
    if np.any(t[act] <= 0) or np.any(t[act] >= d[act]):
        raise StructuralError("slack must be interior (0, deadline) on active pairs")
    B = scenario.bandwidth_hz
    Lv = L[act]
    tv = t[act]
    av = scenario.noise_over_gain()[act]
    hi0 = np.full(Lv.shape, B)

    def total(beta_vec):
        return np.array([_bandwidth_roots(beta_vec[0], Lv, tv, av, hi0).sum()])

    start = np.array([dual_guess if dual_guess else 1.0])
    betas, calls = _solve_duals(total, np.array([B]), cfg, start, increasing=False)
    beta = float(betas[0])
    roots = _bandwidth_roots(beta, Lv, tv, av, hi0)
    if abs(roots.sum() - B) > cfg.bisect_tol * B:
        raise ConvergenceError(
            f"bandwidth sum residual {abs(roots.sum() - B) / B:.3e}")
    if diag is not None:
        diag.append(SolveDiagnostic(
            DualVariable("beta_bandwidth", beta),
            residual=abs(roots.sum() - B) / B, iterations=calls))
    out = np.zeros_like(L)
    out[act] = roots * (B / roots.sum())
    return out


# ---------------------------------------------------------------------------
# CAA: compute allocation (through the slack substitution), per AP

def _slack_roots(mu, L, x, d, w, a):
    lo = d * 1e-12
    hi = d * (1.0 - 1e-12)
    return _vec_bisect(
        lambda mid: _slack_stationarity(mid, L, x, d, w, a, mu) < 0, lo, hi)


@_quiet_overflow
def _caa_joint(scenario, x, L, aps, cfg, dual_guess=None):
    """Slack columns for several APs at once; one dual search per AP.

    Energy falls as compute grows, so each AP's capacity binds: mu_j is
    driven until the implied demand sum_i eta*L/(D - t) meets capacity.
    Returns (slack matrix for the requested columns, duals, residuals,
    evaluation count); inactive users keep their deadline as slack.
    """
    L = np.asarray(L, dtype=float)
    x = np.asarray(x, dtype=float)
    act = L > cfg.activity_threshold_bits
    d_user = scenario.deadlines_s
    eta_user = scenario.cycles_per_bit
    noise = scenario.noise_over_gain()

    pairs_i, group = [], []
    for gid, j in enumerate(aps):
        users = np.nonzero(act[:, j])[0]
        if users.size == 0:
            raise DegenerateInputError(f"AP {j} serves no active user")
        pairs_i.append(users)
        group.append(np.full(users.size, gid))
    ui = np.concatenate(pairs_i)
    uj = np.concatenate([np.full(p.size, j) for p, j in zip(pairs_i, aps)])
    gid = np.concatenate(group)
    n_groups = len(aps)

    Lv = L[ui, uj]
    xv = x[ui, uj]
    if np.any(xv <= 0):
        bad = int(uj[np.nonzero(xv <= 0)[0][0]])
        raise StructuralError(f"AP {bad}: active user without bandwidth")
    dv = d_user[ui]
    wv = eta_user[ui] * Lv
    av = noise[ui, uj]
    caps = np.array([scenario.compute_capacity[j] for j in aps])
    base_load = np.bincount(gid, weights=wv / dv, minlength=n_groups)
    if np.any(base_load >= caps):
        g = int(np.nonzero(base_load >= caps)[0][0])
        raise InfeasibilityError(
            f"AP {aps[g]}: compute demand {base_load[g]:.6g} exceeds capacity "
            f"{caps[g]:.6g}", ap=aps[g])

    def demand(mus):
        roots = _slack_roots(mus[gid], Lv, xv, dv, wv, av)
        return np.bincount(gid, weights=wv / (dv - roots), minlength=n_groups)

    starts = np.asarray(dual_guess, dtype=float) if dual_guess is not None \
        else np.ones(n_groups)
    mus, calls = _solve_duals(demand, caps, cfg, starts, increasing=False)
    roots = _slack_roots(mus[gid], Lv, xv, dv, wv, av)
    qv = wv / (dv - roots)
    sums = np.bincount(gid, weights=qv, minlength=n_groups)
    resid = np.abs(sums - caps) / caps
    if np.any(resid > cfg.bisect_tol):
        g = int(np.argmax(resid))
        raise ConvergenceError(
            f"AP {aps[g]}: compute sum residual {resid[g]:.3e}")
    qv = qv * (caps / sums)[gid]
    t_cols = np.broadcast_to(d_user[:, None], (L.shape[0], n_groups)).copy()
    t_cols[ui, gid] = dv - wv / qv
    return t_cols, mus, resid, calls


@_quiet_overflow
def solve_caa(scenario, x, L, ap, cfg: SolveConfig, diag=None, dual_guess=None):
    """Slack (hence compute) split among one AP's active users at fixed x."""
    guess = np.array([dual_guess]) if dual_guess else None
    t_cols, mus, resid, calls = _caa_joint(scenario, x, L, [ap], cfg, guess)
    if diag is not None:
        diag.append(SolveDiagnostic(
            DualVariable("mu_compute", float(mus[0]), owner=ap),
            residual=float(resid[0]), iterations=calls))
    return t_cols[:, 0]


# ---------------------------------------------------------------------------
# BCAA: joint bandwidth and compute allocation for fixed data

def _proportional_compute(scenario, L, act):
    """Capacity split proportional to eta*L/D; keeps every slack interior."""
    d = scenario.deadlines_s[:, None]
    eta = scenario.cycles_per_bit[:, None]
    w = np.where(act, eta * np.asarray(L, dtype=float) / d, 0.0)
    q = np.zeros_like(w)
    for j in range(scenario.num_aps):
        tot = w[:, j].sum()
        if tot > 0:
            q[:, j] = w[:, j] * (scenario.compute_capacity[j] / tot)
    return q


@_quiet_overflow
def solve_bcaa(scenario, L, cfg: SolveConfig, diag=None, warm=None):
    """Jointly optimal (x, q) for a fixed data split.

    Alternates the bandwidth and per-AP compute solvers; each step solves
    its block exactly, so the energy sequence is non-increasing, and the
    fixed-L problem is convex, so the alternation reaches its global
    optimum. Stops once a full round improves energy by less than a tenth
    of the outer tolerance.

    warm, when given, is a caller-owned dict this function reads and
    refreshes between calls of one outer loop: the previous compute split
    seeds the slack and the previous duals seed the searches. Any entry
    incompatible with the current active set is ignored.

    Returns (x, q, rounds).
    """
    L = np.asarray(L, dtype=float)
    act = L > cfg.activity_threshold_bits
    if not act.any():
        raise DegenerateInputError("no active pairs")
    M = L.shape[1]
    d = scenario.deadlines_s[:, None]
    eta = scenario.cycles_per_bit[:, None]
    aps = [j for j in range(M) if act[:, j].any()]
    for j in aps:
        rows = act[:, j]
        load = float((eta[rows, 0] * L[rows, j] / d[rows, 0]).sum())
        if load >= scenario.compute_capacity[j]:
            raise InfeasibilityError(
                f"AP {j}: data split demands {load:.6g} cycles/s of "
                f"{scenario.compute_capacity[j]:.6g}", ap=j)

    warm = warm if warm is not None else {}
    q_prev = warm.get("q")
    if q_prev is not None and q_prev.shape == L.shape and np.all(q_prev[act] > 0):
        q = np.where(act, q_prev, 0.0)
        t = np.where(act, d - eta * L / np.where(q > 0, q, 1.0), d)
        if np.any(t[act] <= 0):
            q = _proportional_compute(scenario, L, act)
            t = np.where(act, d - eta * L / np.where(q > 0, q, 1.0), d)
    else:
        q = _proportional_compute(scenario, L, act)
        t = np.where(act, d - eta * L / np.where(q > 0, q, 1.0), d)

    eps_inner = cfg.epsilon_j / 10.0
    steps = []
    beta_guess = warm.get("beta")
    mus_prev = warm.get("mus", {})
    mu_guess = np.array([mus_prev.get(j, 1.0) for j in aps]) if mus_prev else None
    energy_prev = None
    rounds = 0
    for rounds in range(1, cfg.max_inner_iters + 1):
        x = solve_baa(scenario, t, L, cfg, diag=steps, dual_guess=beta_guess)
        beta_guess = steps[-1].dual.value
        t_cols, mus, resid, calls = _caa_joint(scenario, x, L, aps, cfg,
                                               dual_guess=mu_guess)
        mu_guess = mus
        for g, j in enumerate(aps):
            t[:, j] = t_cols[:, g]
            steps.append(SolveDiagnostic(
                DualVariable("mu_compute", float(mus[g]), owner=j),
                residual=float(resid[g]), iterations=calls))
        energy = float(energy_matrix(scenario, L, x, t,
                                     cfg.activity_threshold_bits).sum())
        if energy_prev is not None and energy_prev - energy <= eps_inner:
            break
        energy_prev = energy
    else:
        raise ConvergenceError(
            f"bandwidth/compute alternation still improving after "
            f"{cfg.max_inner_iters} rounds (last energy {energy:.6e} J)")
    if diag is not None:
        diag.extend(steps)

    q = np.where(act, eta * L / np.maximum(d - t, 1e-300), 0.0)
    for j in range(M):
        tot = q[:, j].sum()
        if tot > 0:
            q[:, j] *= scenario.compute_capacity[j] / tot
    warm.update(q=q, beta=beta_guess, mus={j: float(mus[g]) for g, j in enumerate(aps)})
    return x, q, rounds
