"""Experiment configuration: TOML files parsed into frozen dataclasses.

Unknown keys are errors. Every problem is reported with its dotted field path
(TOML syntax errors carry the parser's line and column).

Layout::

    experiment = "condition-test"
    n_paths = 10000
    base_seed = 0
    output_dir = "out/bm"          # optional

    [model]  kind, sigma, x0, hurst, transform_id, driver_kind, delta0
    [grid]   horizon, n_steps
    [ladder]     cps-build: eps0 (list), crossing_mode, beta, reweight, min_visits
    [events]     condition-test / na-test: bins, h, delta, c, [[events.tau]]
    [arbitrage]  arbitrage-scan: min_wait (list), price_map, tol,
                 [arbitrage.lattice], [[arbitrage.legs]]
    [transform]  transform-analyze: id, box, resolution, delta0, reference_d
    [witness]    cfs-witness: alpha (list), transform
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import arbitrage as arb
from . import events as ev
from .errors import ConfigurationError, CpsLabError
from .pathgen import ModelSpec, TimeGrid
from .retirement import MODES
from .transforms import analyze_drop, check_drop_hypothesis, resolve

EXPERIMENTS = (
    "cps-build",
    "condition-test",
    "na-test",
    "arbitrage-scan",
    "transform-analyze",
    "cfs-witness",
)

# experiment -> parameter block it reads
BLOCKS = {
    "cps-build": "ladder",
    "condition-test": "events",
    "na-test": "events",
    "arbitrage-scan": "arbitrage",
    "transform-analyze": "transform",
    "cfs-witness": "witness",
}
NEEDS_MODEL = {"cps-build", "condition-test", "na-test", "arbitrage-scan"}

DEFAULT_DROP_BOX = (-10.0, 10.0)
DEFAULT_DROP_RESOLUTION = 100_000


@dataclass(frozen=True)
class LadderBlock:
    eps0: tuple[float, ...] = (0.2,)
    crossing_mode: str = "interpolated"
    beta: float = 0.1
    reweight: bool = False
    min_visits: int = 200


@dataclass(frozen=True)
class EventsBlock:
    lattice: ev.EventLattice = ev.DEFAULT_LATTICE
    bins: int = 8


@dataclass(frozen=True)
class ArbitrageBlock:
    min_wait: tuple[float, ...] = (0.0,)
    price_map: str = "exp"
    tol: float = 1e-9
    lattice: arb.ScanLattice = arb.ScanLattice()
    legs: tuple[arb.Leg, ...] = ()


@dataclass(frozen=True)
class TransformBlock:
    id: str = "identity"
    box: tuple[float, float] = DEFAULT_DROP_BOX
    resolution: int = DEFAULT_DROP_RESOLUTION
    delta0: float | None = None
    reference_d: float | None = None
    tol: float = 1e-3


@dataclass(frozen=True)
class WitnessBlock:
    alpha: tuple[float, ...] = (0.5, 1.0)
    transform: str = "piecewise_ex3"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_paths: int
    base_seed: int
    grid: TimeGrid
    params: Any
    model: ModelSpec | None = None
    delta0: float | None = None
    output_dir: str | None = None
    source_sha256: str = ""
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, base_seed=int(seed))


class _Reader:
    """Pops typed values from a TOML table while recording problems."""

    def __init__(self, table: dict, path: str, problems: list[str]):
        self.table = dict(table)
        self.path = path
        self.problems = problems

    def _where(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind, default=None, required=False):
        if key not in self.table:
            if required:
                self.problems.append(f"{self._where(key)}: missing required key")
            return default
        value = self.table.pop(key)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is float and isinstance(value, float) and not math.isfinite(value):
            self.problems.append(f"{self._where(key)}: must be finite")
            return default
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            self.problems.append(
                f"{self._where(key)}: expected {kind.__name__}, got {type(value).__name__}"
            )
            return default
        return value

    def floats(self, key, default, required=False):
        """A float or a list of floats, returned as a tuple."""
        if key not in self.table:
            if required:
                self.problems.append(f"{self._where(key)}: missing required key")
            return default
        raw = self.table.pop(key)
        items = raw if isinstance(raw, list) else [raw]
        out = []
        for item in items:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                self.problems.append(f"{self._where(key)}: expected numbers, got {item!r}")
                return default
            if not math.isfinite(item):
                self.problems.append(f"{self._where(key)}: must be finite")
                return default
            out.append(float(item))
        if not out:
            self.problems.append(f"{self._where(key)}: empty list")
            return default
        return tuple(out)

    def sub(self, key, required=False) -> "_Reader | None":
        if key not in self.table:
            if required:
                self.problems.append(f"{self._where(key)}: missing required table")
            return None
        value = self.table.pop(key)
        if not isinstance(value, dict):
            self.problems.append(f"{self._where(key)}: expected a table")
            return None
        return _Reader(value, self._where(key), self.problems)

    def tables(self, key) -> list["_Reader"]:
        if key not in self.table:
            return []
        value = self.table.pop(key)
        if not isinstance(value, list) or not all(isinstance(v, dict) for v in value):
            self.problems.append(f"{self._where(key)}: expected an array of tables")
            return []
        return [_Reader(v, f"{self._where(key)}[{i}]", self.problems) for i, v in enumerate(value)]

    def done(self):
        for key in sorted(self.table):
            self.problems.append(f"{self._where(key)}: unknown key")
        self.table.clear()


def _build(problems, where, factory, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (CpsLabError, ValueError, TypeError) as exc:
        problems.append(f"{where}: {exc}")
        return None


def _parse_model(r: _Reader):
    kind = r.get("kind", str, required=True)
    sigma = r.get("sigma", float, 1.0)
    x0 = r.get("x0", float, 0.0)
    hurst = r.get("hurst", float)
    transform_id = r.get("transform_id", str)
    driver_kind = r.get("driver_kind", str, "brownian")
    delta0 = r.get("delta0", float)
    r.done()
    if kind is None:
        return None, delta0
    model = _build(
        r.problems, r.path, ModelSpec, kind, sigma, x0, hurst, transform_id, driver_kind
    )
    if model is not None and transform_id is not None:
        _build(r.problems, f"{r.path}.transform_id", resolve, transform_id)
    return model, delta0


def _parse_grid(r: _Reader | None, problems):
    if r is None:
        return TimeGrid(1.0, 1024)
    horizon = r.get("horizon", float, 1.0)
    n_steps = r.get("n_steps", int, 1024)
    r.done()
    return _build(problems, "grid", TimeGrid, horizon, n_steps) or TimeGrid(1.0, 1024)


def _parse_ladder(r: _Reader):
    eps0 = r.floats("eps0", (0.2,))
    mode = r.get("crossing_mode", str, "interpolated")
    beta = r.get("beta", float, 0.1)
    reweight = r.get("reweight", bool, False)
    min_visits = r.get("min_visits", int, 200)
    r.done()
    if any(not e > 0 for e in eps0):
        r.problems.append("ladder.eps0: every value must be positive")
    if mode not in MODES:
        r.problems.append(f"ladder.crossing_mode: must be one of {MODES}")
    if not 0 < beta < 1:
        r.problems.append("ladder.beta: must lie in (0, 1)")
    if min_visits < 1:
        r.problems.append("ladder.min_visits: must be >= 1")
    return LadderBlock(eps0, mode, beta, reweight, min_visits)


def _parse_tau(r: _Reader):
    kind = r.get("kind", str, required=True)
    if kind == "deterministic":
        s = r.get("s", float, required=True)
        r.done()
        return None if s is None else _build(r.problems, r.path, ev.DeterministicTime, s)
    if kind == "first_hit":
        level = r.get("level", float, required=True)
        cap = r.get("cap", float, required=True)
        r.done()
        if level is None or cap is None:
            return None
        return _build(r.problems, r.path, ev.FirstHit, level, cap)
    r.done()
    if kind is not None:
        r.problems.append(f"{r.path}.kind: must be 'deterministic' or 'first_hit'")
    return None


def _parse_events(r: _Reader):
    base = ev.DEFAULT_LATTICE
    bins = r.get("bins", int, 8)
    h = r.floats("h", base.h)
    delta = r.floats("delta", base.delta)
    c = r.floats("c", base.c)
    taus = [_parse_tau(t) for t in r.tables("tau")] or list(base.tau_rules)
    r.done()
    if bins < 1:
        r.problems.append("events.bins: must be >= 1")
    for name, values in (("h", h), ("delta", delta), ("c", c)):
        if any(not v > 0 for v in values):
            r.problems.append(f"events.{name}: every value must be positive")
    lattice = ev.EventLattice(tuple(t for t in taus if t is not None), h, delta, c)
    return EventsBlock(lattice, bins)


def _parse_rule(r: _Reader | None, horizon: float):
    if r is None:
        return None
    kind = r.get("kind", str, required=True)
    if kind == "deterministic":
        s = r.get("s", float, required=True)
        r.done()
        if s is not None and not 0 <= s <= horizon:
            r.problems.append(f"{r.path}.s: must lie in [0, T={horizon:g}]")
        return None if s is None else ev.DeterministicTime(s)
    if kind == "first_hit_abs":
        level = r.get("level", float, required=True)
        cap = r.get("cap", float, horizon)
        on = r.get("on", str, "process")
        r.done()
        if cap is not None and not 0 <= cap <= horizon:
            r.problems.append(f"{r.path}.cap: must lie in [0, T={horizon:g}]")
        if level is None:
            return None
        return _build(r.problems, r.path, arb.FirstHitAbs, level, cap, on)
    r.done()
    if kind is not None:
        r.problems.append(f"{r.path}.kind: must be 'deterministic' or 'first_hit_abs'")
    return None


def _parse_arbitrage(r: _Reader, horizon: float):
    min_wait = r.floats("min_wait", (0.0,))
    price_map = r.get("price_map", str, "exp")
    tol = r.get("tol", float, 1e-9)
    lat = r.sub("lattice")
    lattice = arb.ScanLattice()
    if lat is not None:
        d = arb.ScanLattice()
        entry = lat.floats("entry_times", d.entry_times)
        levels = lat.floats("exit_levels", d.exit_levels)
        times = lat.floats("exit_times", d.exit_times)
        sizes = lat.floats("sizes", d.sizes)
        sources = lat.get("sources", list, list(d.sources))
        lat.done()
        if any(s not in ("process", "driver") for s in sources):
            r.problems.append("arbitrage.lattice.sources: entries must be 'process' or 'driver'")
        for name, values in (("entry_times", entry), ("exit_times", times)):
            if any(not 0 <= v <= horizon for v in values):
                r.problems.append(f"arbitrage.lattice.{name}: times must lie in [0, T={horizon:g}]")
        lattice = arb.ScanLattice(entry, levels, times, tuple(sources), sizes)
    legs = []
    for leg in r.tables("legs"):
        entry = _parse_rule(leg.sub("entry", required=True), horizon)
        exit_ = _parse_rule(leg.sub("exit", required=True), horizon)
        size = leg.get("size", float, 1.0)
        leg.done()
        if entry is not None and exit_ is not None:
            legs.append(arb.Leg(entry, exit_, size))
    r.done()
    if price_map not in arb.PRICE_MAPS:
        r.problems.append(f"arbitrage.price_map: must be one of {sorted(arb.PRICE_MAPS)}")
    if tol < 0:
        r.problems.append("arbitrage.tol: must be non-negative")
    if any(h < 0 for h in min_wait):
        r.problems.append("arbitrage.min_wait: must be non-negative")
    if lattice.is_empty():
        r.problems.append("arbitrage.lattice: empty strategy lattice")
    return ArbitrageBlock(min_wait, price_map, tol, lattice, tuple(legs))


def _parse_transform(r: _Reader):
    tid = r.get("id", str, required=True) or "identity"
    box = r.floats("box", DEFAULT_DROP_BOX)
    resolution = r.get("resolution", int, DEFAULT_DROP_RESOLUTION)
    delta0 = r.get("delta0", float)
    reference_d = r.get("reference_d", float)
    tol = r.get("tol", float, 1e-3)
    r.done()
    _build(r.problems, "transform.id", resolve, tid)
    if len(box) != 2 or not box[1] > box[0]:
        r.problems.append("transform.box: expected [lo, hi] with lo < hi")
        box = DEFAULT_DROP_BOX
    if resolution < 1000:
        r.problems.append("transform.resolution: must be >= 1000")
    if delta0 is not None and not delta0 > 0:
        r.problems.append("transform.delta0: must be positive")
    return TransformBlock(tid, (box[0], box[1]), resolution, delta0, reference_d, tol)


def _parse_witness(r: _Reader):
    alpha = r.floats("alpha", (0.5, 1.0))
    transform = r.get("transform", str, "piecewise_ex3")
    r.done()
    if any(not 0 < a <= 1 for a in alpha):
        r.problems.append("witness.alpha: every value must lie in (0, 1]")
    _build(r.problems, "witness.transform", resolve, transform)
    return WitnessBlock(alpha, transform)


def _semantic_checks(cfg: ExperimentConfig, problems: list[str]) -> None:
    horizon = cfg.grid.horizon
    if cfg.experiment in ("condition-test", "na-test"):
        for msg in cfg.params.lattice.validate(horizon):
            problems.append(f"events: {msg}")
        if not cfg.params.lattice.tau_rules:
            problems.append("events.tau: no valid tau rule")
        if cfg.n_paths < 1000:
            problems.append("n_paths: event estimates need at least 1000 paths")
    if cfg.experiment == "cfs-witness" and horizon != 1.0:
        problems.append("grid.horizon: the witness lives on [0, 1]")
    # drop/rise hypothesis for transformed models
    model = cfg.model
    if model is None or model.kind != "transformed":
        return
    spec = resolve(model.transform_id)
    if spec.is_monotone:
        return
    deltas = []
    if cfg.delta0 is not None:
        deltas.append(("model.delta0", cfg.delta0))
    elif cfg.experiment == "cps-build":
        deltas.extend(
            (f"ladder.eps0={e:g}", math.log1p(e)) for e in cfg.params.eps0
        )
    if not deltas:
        return
    analysis = cached_drop_analysis(spec.id, DEFAULT_DROP_BOX, DEFAULT_DROP_RESOLUTION)
    if analysis.tails == "neither":
        problems.append(
            f"model.transform_id: {spec.id!r} has neither (-inf,+inf) nor (+inf,-inf) tails"
        )
        return
    for where, d0 in deltas:
        msg = check_drop_hypothesis(analysis, d0)
        if msg:
            problems.append(f"{where}: {msg}")


_DROP_CACHE: dict = {}


def cached_drop_analysis(transform_id: str, box, resolution: int):
    key = (transform_id, tuple(box), int(resolution))
    if key not in _DROP_CACHE:
        _DROP_CACHE[key] = analyze_drop(resolve(transform_id), box, resolution)
    return _DROP_CACHE[key]


def parse_config(data: dict, source_sha256: str = "") -> ExperimentConfig:
    """Build an ExperimentConfig from parsed TOML, raising on any problem."""
    problems: list[str] = []
    top = _Reader(data, "", problems)
    experiment = top.get("experiment", str, required=True)
    n_paths = top.get("n_paths", int, 1000)
    base_seed = top.get("base_seed", int, 0)
    output_dir = top.get("output_dir", str)
    if experiment is not None and experiment not in EXPERIMENTS:
        problems.append(f"experiment: must be one of {', '.join(EXPERIMENTS)}")
        experiment = None
    if n_paths < 1:
        problems.append("n_paths: must be >= 1")
    if base_seed < 0:
        problems.append("base_seed: must be non-negative")

    model = delta0 = None
    model_r = top.sub("model", required=experiment in NEEDS_MODEL)
    if model_r is not None:
        model, delta0 = _parse_model(model_r)
    grid = _parse_grid(top.sub("grid"), problems)

    params = None
    parsers = {
        "ladder": _parse_ladder,
        "events": _parse_events,
        "arbitrage": lambda r: _parse_arbitrage(r, grid.horizon),
        "transform": _parse_transform,
        "witness": _parse_witness,
    }
    for block, parse in parsers.items():
        r = top.sub(block)
        if r is None:
            continue
        if BLOCKS.get(experiment) != block:
            problems.append(f"{block}: table not used by experiment {experiment!r}")
            continue
        params = parse(r)
    top.done()
    if experiment is not None and params is None:
        block = BLOCKS[experiment]
        if block == "transform":
            problems.append("transform: missing required table")
        else:
            params = {
                "ladder": LadderBlock,
                "events": EventsBlock,
                "arbitrage": ArbitrageBlock,
                "witness": WitnessBlock,
            }[block]()
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
    cfg = ExperimentConfig(
        experiment, n_paths, base_seed, grid, params, model, delta0, output_dir,
        source_sha256, data,
    )
    _semantic_checks(cfg, problems)
    if problems:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    return parse_config(data, hashlib.sha256(raw).hexdigest())
