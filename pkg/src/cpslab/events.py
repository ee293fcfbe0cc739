"""The event families F^j(tau, h, delta, c) and Monte Carlo positivity tests.

With L_t = X_{tau+t} - X_tau:

    F^0  = {sup_{[0, T-tau)} |L| < delta}
    F^+1 = {sup_{[0, h]} L < delta} & {sup_{[h, T-tau)} L < -c}
    F^-1 = {inf_{[0, h]} L > -delta} & {inf_{[h, T-tau)} L > c}

Membership is evaluated on the linearly interpolated path: every grid point in
a window plus the interpolated window endpoints. Right-open windows end at the
last grid point before T. An unbounded delta drops the first-window
constraint.

Conditional positivity given F_tau is replaced by positivity within every
populated quantile bin of X_tau.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import _hitting
from .errors import ParameterError, SpecViolation
from .pathgen import Ensemble, ModelSpec, TimeGrid, as_ensemble, simulate_ensemble
from .transforms import UNBOUNDED, Unbounded, resolve

__all__ = [
    "DeterministicTime",
    "FirstHit",
    "EventSpec",
    "EventEstimate",
    "EventLattice",
    "ConditionReport",
    "DEFAULT_LATTICE",
    "event_member",
    "event_members",
    "estimate_event",
    "wilson_interval",
    "check_condition_A",
    "check_NA_condition",
    "cfs_violation_witness",
    "CfsWitnessReport",
]


@dataclass(frozen=True)
class DeterministicTime:
    s: float

    def max_time(self) -> float:
        return self.s

    def label(self) -> str:
        return f"t={self.s:g}"


@dataclass(frozen=True)
class FirstHit:
    """First time the path equals ``level``, capped at ``cap``."""

    level: float
    cap: float

    def max_time(self) -> float:
        return self.cap

    def label(self) -> str:
        return f"hit({self.level:g})^{self.cap:g}"


TauRule = DeterministicTime | FirstHit


@dataclass(frozen=True)
class EventSpec:
    j: int
    tau_rule: TauRule
    h: float
    delta: float | Unbounded
    c: float

    def __post_init__(self):
        if self.j not in (-1, 0, 1):
            raise ParameterError("j must be -1, 0 or +1")
        if not self.h > 0:
            raise ParameterError("h must be positive")
        if not isinstance(self.delta, Unbounded) and not self.delta > 0:
            raise ParameterError("delta must be positive")
        if not self.c > 0:
            raise ParameterError("c must be positive")
        if self.tau_rule.max_time() < 0:
            raise ParameterError("tau rule must not take negative values")

    def check_horizon(self, horizon: float) -> None:
        if not self.h < horizon:
            raise SpecViolation(f"h={self.h:g} must lie in (0, T={horizon:g})")
        if not self.tau_rule.max_time() < horizon - self.h:
            raise SpecViolation(
                f"tau rule {self.tau_rule.label()} can reach "
                f"{self.tau_rule.max_time():g} >= T - h = {horizon - self.h:g}"
            )

    def to_json(self) -> dict:
        return {
            "j": self.j,
            "tau": self.tau_rule.label(),
            "h": self.h,
            "delta": self.delta.to_json() if isinstance(self.delta, Unbounded) else self.delta,
            "c": self.c,
        }


def _resolve_tau(ens: Ensemble, rule: TauRule) -> tuple[np.ndarray, np.ndarray]:
    n = ens.n_paths
    if isinstance(rule, DeterministicTime):
        t = np.full(n, float(rule.s))
        return t, _hitting.interp_at(ens.values, ens.grid.dt, t)
    t, x, _ = _hitting.first_hit(
        ens.values,
        ens.grid.dt,
        float(ens.grid.horizon),
        np.zeros(n),
        float(rule.level),
        float(rule.level),
        np.full(n, float(rule.cap)),
    )
    return t, x


def event_members(ensemble, spec: EventSpec) -> tuple[np.ndarray, np.ndarray]:
    """Membership indicator per path, and X_tau per path."""
    ens = as_ensemble(ensemble)
    grid = ens.grid
    spec.check_horizon(grid.horizon)
    tau, x_tau = _resolve_tau(ens, spec.tau_rule)
    dt = grid.dt
    last_inner = grid.n_steps - 1
    # right-open window end: the last grid point before T
    t_end = np.full(ens.n_paths, last_inner * dt)
    if spec.j == 0:
        hi, lo = _hitting.window_extrema(ens.values, dt, tau, np.maximum(t_end, tau), last_inner)
        if isinstance(spec.delta, Unbounded):
            return np.ones(ens.n_paths, dtype=bool), x_tau
        member = (hi - x_tau < spec.delta) & (lo - x_tau > -spec.delta)
        return member, x_tau
    t_h = tau + spec.h
    hi2, lo2 = _hitting.window_extrema(ens.values, dt, t_h, np.maximum(t_end, t_h), last_inner)
    if spec.j == 1:
        member = hi2 - x_tau < -spec.c
    else:
        member = lo2 - x_tau > spec.c
    if not isinstance(spec.delta, Unbounded):
        hi1, lo1 = _hitting.window_extrema(ens.values, dt, tau, t_h, grid.n_steps)
        if spec.j == 1:
            member &= hi1 - x_tau < spec.delta
        else:
            member &= lo1 - x_tau > -spec.delta
    return member, x_tau


def event_member(path, spec: EventSpec) -> bool:
    member, _ = event_members(path, spec)
    return bool(member[0])


def wilson_interval(hits: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 1.0
    lo, hi = proportion_confint(hits, n, alpha=alpha, method="wilson")
    # the closed form is exactly 0 (resp. 1) at the boundary; drop rounding residue
    lo = 0.0 if hits == 0 else float(lo)
    hi = 1.0 if hits == n else float(hi)
    return lo, hi


@dataclass
class EventEstimate:
    spec: EventSpec
    n_paths: int
    hits: int
    wilson_lo: float
    wilson_hi: float
    bin_edges: list = field(default_factory=list)
    bin_hits: list = field(default_factory=list)
    bin_totals: list = field(default_factory=list)

    @property
    def p_hat(self) -> float:
        return self.hits / self.n_paths

    @property
    def populated_bins(self) -> int:
        return sum(1 for t in self.bin_totals if t > 0)

    @property
    def empty_bins(self) -> int:
        return sum(1 for t in self.bin_totals if t == 0)

    @property
    def positive(self) -> bool:
        """Every populated X_tau bin has at least one member path."""
        return all(h > 0 for h, t in zip(self.bin_hits, self.bin_totals) if t > 0)

    def to_json(self) -> dict:
        return {
            **self.spec.to_json(),
            "n_paths": self.n_paths,
            "hits": self.hits,
            "p_hat": self.p_hat,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "bin_edges": self.bin_edges,
            "bin_hits": self.bin_hits,
            "bin_totals": self.bin_totals,
            "positive": self.positive,
        }


def _bin_counts(member: np.ndarray, x_tau: np.ndarray, bins: int):
    if bins <= 1:
        return [], [int(member.sum())], [len(member)]
    edges = np.quantile(x_tau, np.linspace(0.0, 1.0, bins + 1))
    # interior edges decide the bin; ties collapse bins, which then stay empty
    idx = np.searchsorted(edges[1:-1], x_tau, side="right")
    totals = np.bincount(idx, minlength=bins)
    hits = np.bincount(idx, weights=member.astype(float), minlength=bins).astype(int)
    return edges.tolist(), hits.tolist(), totals.tolist()


def estimate_event(ensemble, spec: EventSpec, bins: int = 1, min_paths: int = 1000) -> EventEstimate:
    ens = as_ensemble(ensemble)
    if ens.n_paths < min_paths:
        raise ParameterError(f"need at least {min_paths} paths, got {ens.n_paths}")
    member, x_tau = event_members(ens, spec)
    hits = int(member.sum())
    lo, hi = wilson_interval(hits, ens.n_paths)
    edges, bh, bt = _bin_counts(member, x_tau, bins)
    return EventEstimate(spec, ens.n_paths, hits, lo, hi, edges, bh, bt)


# --- lattices -----------------------------------------------------------


@dataclass(frozen=True)
class EventLattice:
    tau_rules: tuple = (DeterministicTime(0.0),)
    h: tuple = (0.25,)
    delta: tuple = (0.5,)
    c: tuple = (0.25,)

    def specs(self, js: Sequence[int], unbounded_delta: bool = False):
        deltas = (UNBOUNDED,) if unbounded_delta else self.delta
        for rule, h, d, c, j in itertools.product(self.tau_rules, self.h, deltas, self.c, js):
            yield EventSpec(j, rule, h, d, c)

    def validate(self, horizon: float) -> list[str]:
        problems = []
        for rule, h in itertools.product(self.tau_rules, self.h):
            try:
                EventSpec(0, rule, h, 1.0, 1.0).check_horizon(horizon)
            except (SpecViolation, ParameterError) as exc:
                problems.append(str(exc))
        return problems


DEFAULT_LATTICE = EventLattice(
    tau_rules=(DeterministicTime(0.0), DeterministicTime(0.25), FirstHit(0.25, 0.25)),
    h=(0.125, 0.25),
    delta=(1.5, 2.0),
    c=(0.1, 0.25),
)


@dataclass
class ConditionReport:
    condition: str
    model_tag: str
    n_paths: int
    bins: int
    cells: list[EventEstimate]
    surrogate: str = (
        "conditional positivity given F_tau checked as positivity within every "
        "populated quantile bin of X_tau"
    )
    note: str = ""

    @property
    def failing(self) -> list[EventEstimate]:
        return [c for c in self.cells if not c.positive]

    @property
    def passed(self) -> bool:
        return not self.failing

    def to_json(self) -> dict:
        return {
            "condition": self.condition,
            "model": self.model_tag,
            "n_paths": self.n_paths,
            "bins": self.bins,
            "verdict": "PASS" if self.passed else "FAIL",
            "surrogate": self.surrogate,
            "note": self.note,
            "failing_cells": [c.spec.to_json() for c in self.failing],
            "cells": [c.to_json() for c in self.cells],
        }


def _run_lattice(ens, specs, bins):
    cells = []
    for spec in specs:
        spec.check_horizon(ens.grid.horizon)
        cells.append(estimate_event(ens, spec, bins))
    return cells


def _ensemble_for(model, grid, n_paths, base_seed):
    if isinstance(model, Ensemble):
        return model
    return simulate_ensemble(model, grid, n_paths, base_seed)


def check_condition_A(
    model: ModelSpec | Ensemble,
    grid: TimeGrid | None = None,
    lattice: EventLattice = DEFAULT_LATTICE,
    n_paths: int = 10_000,
    base_seed: int = 0,
    bins: int = 8,
) -> ConditionReport:
    ens = _ensemble_for(model, grid, n_paths, base_seed)
    cells = _run_lattice(ens, list(lattice.specs((-1, 0, 1))), bins)
    return ConditionReport("A", ens.model_tag, ens.n_paths, bins, cells)


def check_NA_condition(
    model: ModelSpec | Ensemble,
    grid: TimeGrid | None = None,
    lattice: EventLattice = DEFAULT_LATTICE,
    n_paths: int = 10_000,
    base_seed: int = 0,
    bins: int = 8,
) -> ConditionReport:
    ens = _ensemble_for(model, grid, n_paths, base_seed)
    cells = _run_lattice(ens, list(lattice.specs((-1, 1), unbounded_delta=True)), bins)
    return ConditionReport(
        "NA",
        ens.model_tag,
        ens.n_paths,
        bins,
        cells,
        note="F^j(tau,h,delta,c) is contained in F^j(tau,h,inf,c): a PASS of condition A "
        "on matching (tau, h, c) implies a PASS here",
    )


# --- CFS witness --------------------------------------------------------


@dataclass
class CfsWitnessReport:
    alpha: float
    transform_id: str
    n_paths: int
    inside_tube: int
    sup_min: float

    @property
    def fraction_inside(self) -> float:
        return self.inside_tube / self.n_paths

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "transform_id": self.transform_id,
            "tube": "g(t) = -t",
            "n_paths": self.n_paths,
            "inside_tube": self.inside_tube,
            "fraction_inside": self.fraction_inside,
            "min_sup_distance": self.sup_min,
        }


def cfs_violation_witness(
    alpha: float,
    n_paths: int,
    grid: TimeGrid | None = None,
    base_seed: int = 0,
    transform: str = "piecewise_ex3",
) -> CfsWitnessReport:
    """Count paths of S = alpha * f(B) with sup_t |S_t - S_0 + t| < alpha.

    The sup runs over the grid and over the first time |B| = 1, where
    S = alpha * f(+-1) exactly.
    """
    if not 0 < alpha <= 1:
        raise ParameterError("alpha must lie in (0, 1]")
    grid = grid or TimeGrid(1.0, 1024)
    if grid.horizon != 1.0:
        raise ParameterError("the witness lives on [0, 1]")
    f = resolve(transform)
    spec = ModelSpec("transformed", transform_id=transform)
    ens = simulate_ensemble(spec, grid, n_paths, base_seed)
    s = alpha * ens.values
    s0 = s[:, :1]
    dist = np.abs(s - s0 + grid.times[None, :]).max(axis=1)
    n = ens.n_paths
    t_hit, b_hit, hit = _hitting.first_hit(
        ens.driver, grid.dt, 1.0, np.zeros(n), -1.0, 1.0, np.ones(n)
    )
    s_hit = alpha * f(b_hit)
    d_hit = np.where(hit, np.abs(s_hit - s0[:, 0] + t_hit), 0.0)
    dist = np.maximum(dist, d_hit)
    inside = int(np.count_nonzero(dist < alpha))
    return CfsWitnessReport(alpha, transform, n, inside, float(dist.min()))
