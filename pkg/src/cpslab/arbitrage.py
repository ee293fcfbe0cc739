"""Simple trading strategies on simulated ensembles and arbitrage certificates.

A strategy is an ordered list of legs (entry rule, exit rule, size). Each rule
is evaluated from the previous trade time; a trade closer than ``min_wait`` to
the previous one is deferred to the earliest admissible time, and a leg that
cannot be completed by T is voided together with every later leg.

Gains are frictionless: sum over legs of size * (price at exit - price at
entry).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _hitting
from .errors import ParameterError
from .events import DeterministicTime
from .pathgen import Ensemble, as_ensemble
from .transforms import resolve

__all__ = [
    "DeterministicTime",
    "FirstHitAbs",
    "Leg",
    "StrategySpec",
    "PnlReport",
    "ScanLattice",
    "ScanResult",
    "PRICE_MAPS",
    "evaluate_strategy",
    "scan_threshold_strategies",
    "buy_and_hold_until_exit",
]

PRICE_MAPS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": np.exp,
    "identity": lambda x: np.asarray(x, dtype=float),
}


@dataclass(frozen=True)
class FirstHitAbs:
    """First time >= start at which |path| equals ``level``, capped at ``cap``.

    ``on="driver"`` watches the driving path of a transformed model; the traded
    process is then f(driver) at the hit, with the driver snapped to +-level.
    """

    level: float
    cap: float
    on: str = "process"

    def __post_init__(self):
        if not self.level >= 0:
            raise ParameterError("level must be non-negative")
        if self.on not in ("process", "driver"):
            raise ParameterError("on must be 'process' or 'driver'")

    def label(self) -> str:
        src = "" if self.on == "process" else "driver:"
        return f"|{src}x|={self.level:g}^{self.cap:g}"


Rule = DeterministicTime | FirstHitAbs


@dataclass(frozen=True)
class Leg:
    entry: Rule
    exit: Rule
    size: float


@dataclass(frozen=True)
class StrategySpec:
    legs: tuple[Leg, ...]
    min_wait: float = 0.0

    def __post_init__(self):
        if self.min_wait < 0:
            raise ParameterError("min_wait must be non-negative")

    def negated(self) -> "StrategySpec":
        legs = tuple(Leg(l.entry, l.exit, -l.size) for l in self.legs)
        return StrategySpec(legs, self.min_wait)

    def label(self) -> str:
        parts = [f"{l.size:+g}[{l.entry.label()} -> {l.exit.label()}]" for l in self.legs]
        return " ; ".join(parts) + f" (h={self.min_wait:g})"


@dataclass
class PnlReport:
    n_paths: int
    gains: np.ndarray = field(repr=False)
    tol: float
    strategy: StrategySpec | None = None
    clipped_rules: int = 0
    deferred_trades: int = 0
    voided_legs: int = 0
    base_seed: int | None = None

    @property
    def frac_negative_beyond_tol(self) -> float:
        return float(np.count_nonzero(self.gains <= -self.tol) / self.n_paths) if self.tol > 0 else float(
            np.count_nonzero(self.gains < 0) / self.n_paths
        )

    @property
    def frac_positive_beyond_tol(self) -> float:
        return float(np.count_nonzero(self.gains > self.tol) / self.n_paths)

    @property
    def verdict(self) -> str:
        neg, pos = self.frac_negative_beyond_tol, self.frac_positive_beyond_tol
        if neg == 0 and pos > 0:
            return "arbitrage_certificate"
        if neg > 0 and pos == 0:
            # the opposite position would be a certificate; flag rather than claim
            return "inconclusive"
        return "no_arbitrage_evidence"

    def summary(self) -> dict:
        g = self.gains
        q = np.quantile(g, [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99])
        return {
            "min": float(g.min()),
            "max": float(g.max()),
            "mean": math.fsum(g.tolist()) / len(g),
            "quantiles": dict(zip(["q01", "q05", "q25", "q50", "q75", "q95", "q99"], q.tolist())),
        }

    def to_json(self) -> dict:
        return {
            "strategy": None if self.strategy is None else self.strategy.label(),
            "n_paths": self.n_paths,
            "gains": self.summary(),
            "tol": self.tol,
            "frac_negative_beyond_tol": self.frac_negative_beyond_tol,
            "frac_positive_beyond_tol": self.frac_positive_beyond_tol,
            "verdict": self.verdict,
            "clipped_rules": self.clipped_rules,
            "deferred_trades": self.deferred_trades,
            "voided_legs": self.voided_legs,
            "replay": {"base_seed": self.base_seed, "seed_derivation": "splitmix64(base_seed, i)"},
        }


class _Resolver:
    def __init__(self, ens: Ensemble, price_map: str):
        self.ens = ens
        self.dt = ens.grid.dt
        self.T = float(ens.grid.horizon)
        self.price = PRICE_MAPS[price_map]
        self.f = resolve(ens.transform_id) if ens.transform_id else None
        self.clipped = 0

    def trade(self, rule: Rule, start: np.ndarray):
        """Rule time (>= start) and the process value there, per path."""
        n = self.ens.n_paths
        if isinstance(rule, DeterministicTime):
            s = float(rule.s)
            if s > self.T:
                self.clipped += 1
                s = self.T
            t = np.maximum(np.full(n, s), start)
            return t, _hitting.interp_at(self.ens.values, self.dt, t)
        cap = float(rule.cap)
        if cap > self.T:
            self.clipped += 1
            cap = self.T
        src = self.ens.values if rule.on == "process" else self.ens.hitting_driver
        lvl = float(rule.level)
        t, x, hit = _hitting.first_hit(src, self.dt, self.T, start, -lvl, lvl, np.full(n, cap))
        if rule.on == "driver" and self.ens.driver is not None:
            value = _hitting.interp_at(self.ens.values, self.dt, t)
            if self.f is not None:
                value = np.where(hit, self.f(x), value)
            return t, value
        return t, x


def evaluate_strategy(
    ensemble,
    strategy: StrategySpec,
    price_map: str = "exp",
    tol: float = 1e-9,
) -> PnlReport:
    ens = as_ensemble(ensemble)
    if price_map not in PRICE_MAPS:
        raise ParameterError(f"unknown price map {price_map!r}")
    res = _Resolver(ens, price_map)
    n = ens.n_paths
    h = strategy.min_wait
    gains = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    last_trade = np.full(n, -np.inf)
    deferred = voided = 0
    for leg in strategy.legs:
        start = np.maximum(last_trade, 0.0)
        t_in, x_in = res.trade(leg.entry, start)
        early = t_in < last_trade + h
        deferred += int(np.count_nonzero(early & alive))
        t_in = np.where(early, last_trade + h, t_in)
        x_in = np.where(early, _hitting.interp_at(ens.values, res.dt, np.minimum(t_in, res.T)), x_in)
        t_out, x_out = res.trade(leg.exit, np.minimum(t_in, res.T))
        early = t_out < t_in + h
        deferred += int(np.count_nonzero(early & alive))
        t_out = np.where(early, t_in + h, t_out)
        x_out = np.where(early, _hitting.interp_at(ens.values, res.dt, np.minimum(t_out, res.T)), x_out)
        ok = alive & (t_in <= res.T) & (t_out <= res.T)
        voided += int(np.count_nonzero(alive & ~ok))
        if leg.size != 0:
            gains = gains + np.where(ok, leg.size * (res.price(x_out) - res.price(x_in)), 0.0)
        alive = ok
        last_trade = np.where(ok, t_out, last_trade)
    return PnlReport(
        n,
        gains,
        tol,
        strategy,
        clipped_rules=res.clipped,
        deferred_trades=deferred,
        voided_legs=voided,
        base_seed=ens.base_seed,
    )


def buy_and_hold_until_exit(level: float = 1.0, horizon: float = 1.0, on: str = "driver") -> StrategySpec:
    """Long one unit at 0, sold at the first time |driver| = level (capped at T)."""
    return StrategySpec((Leg(DeterministicTime(0.0), FirstHitAbs(level, horizon, on), 1.0),))


# --- lattice scan -------------------------------------------------------


@dataclass(frozen=True)
class ScanLattice:
    entry_times: tuple = (0.0, 0.25, 0.5)
    exit_levels: tuple = (0.1, 0.25, 0.5, 1.0)
    exit_times: tuple = (0.5, 1.0)
    sources: tuple = ("process", "driver")
    sizes: tuple = (1.0, -1.0)

    def strategies(self, horizon: float, has_driver: bool, min_wait: float):
        sources = self.sources if has_driver else tuple(s for s in self.sources if s == "process") or ("process",)
        exits: list[Rule] = [FirstHitAbs(l, horizon, s) for s in sources for l in self.exit_levels]
        for s_in in self.entry_times:
            exits_here = exits + [DeterministicTime(s) for s in self.exit_times if s > s_in]
            for ex, size in itertools.product(exits_here, self.sizes):
                yield StrategySpec((Leg(DeterministicTime(s_in), ex, size),), min_wait)

    def is_empty(self) -> bool:
        return not self.entry_times or not (self.exit_levels or self.exit_times) or not self.sizes


@dataclass
class ScanResult:
    best: PnlReport
    n_evaluated: int
    n_available: int
    certificate_found: bool
    min_wait: float
    # max min-gain over available positive-mean strategies; -inf if there are none
    objective: float = -math.inf

    def to_json(self) -> dict:
        return {
            "min_wait": self.min_wait,
            "objective": self.objective if math.isfinite(self.objective) else None,
            "n_evaluated": self.n_evaluated,
            "n_available": self.n_available,
            "certificate_found": self.certificate_found,
            "best": self.best.to_json(),
            "claim": "lower bound on arbitrage opportunities within the lattice; "
            "absence of a certificate is not a proof of no-arbitrage",
        }


def scan_threshold_strategies(
    ensemble,
    min_wait: float,
    lattice: ScanLattice = ScanLattice(),
    tol: float = 1e-9,
    price_map: str = "exp",
) -> ScanResult:
    """Best lattice strategy by (positive mean, min gain, mean, -index).

    A strategy is available at ``min_wait`` only if no trade needs deferring
    on any path, so availability shrinks as ``min_wait`` grows. With nothing
    available the no-trade strategy (all gains 0) is returned. The scan
    objective, the best min gain among available positive-mean strategies,
    can only shrink as ``min_wait`` grows.
    """
    ens = as_ensemble(ensemble)
    if lattice.is_empty():
        raise ParameterError("empty strategy lattice")
    best_key = None
    best = None
    n_eval = n_avail = 0
    cert = False
    objective = -math.inf
    for idx, strat in enumerate(
        lattice.strategies(float(ens.grid.horizon), ens.driver is not None, min_wait)
    ):
        rep = evaluate_strategy(ens, strat, price_map, tol)
        n_eval += 1
        if rep.deferred_trades or rep.voided_legs:
            continue
        n_avail += 1
        cert |= rep.verdict == "arbitrage_certificate"
        g = rep.gains
        mean = math.fsum(g.tolist()) / len(g)
        key = (mean > 0, float(g.min()), mean, -idx)
        if mean > 0:
            objective = max(objective, key[1])
        if best_key is None or key > best_key:
            best_key, best = key, rep
    if best is None:
        best = PnlReport(ens.n_paths, np.zeros(ens.n_paths), tol, StrategySpec((), min_wait),
                         base_seed=ens.base_seed)
    return ScanResult(best, n_eval, n_avail, cert, min_wait, objective)
