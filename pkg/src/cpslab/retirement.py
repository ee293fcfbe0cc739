"""First-exit ladders, the retired geometric walk, and the sandwich check.

Given a log-price path X and a cost parameter eps0 the ladder is

    tau_0 = 0,  tau_{n+1} = inf{t >= tau_n : |X_t - X_{tau_n}| >= b} ^ T,
    b = log(1 + eps0),

with sign R_n of each exit (0 once tau_n = T) and walk
Z_n = Z_0 (1 + eps0)^{R_1 + ... + R_n}, Z_0 = exp(X_0).

In ``interpolated`` mode exits are found on the linear interpolation of the
grid values and X_{tau_n} is snapped to X_0 + k_n * b, so every rung moves
exactly one barrier width. ``grid_snap`` mode exits at the first grid point in
the exit set and keeps the overshoot.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ContractError, ParameterError
from .pathgen import SamplePath

__all__ = [
    "LadderParams",
    "LadderResult",
    "SandwichReport",
    "build_ladder",
    "validate_sandwich",
    "effective_epsilon",
]

MODES = ("interpolated", "grid_snap")


@dataclass(frozen=True)
class LadderParams:
    eps0: float
    crossing_mode: str = "interpolated"

    def __post_init__(self):
        if not (math.isfinite(self.eps0) and self.eps0 > 0):
            raise ParameterError(f"eps0 must be positive, got {self.eps0}")
        if self.crossing_mode not in MODES:
            raise ParameterError(f"crossing_mode must be one of {MODES}")

    @property
    def barrier(self) -> float:
        return math.log1p(self.eps0)


@dataclass(frozen=True, eq=False)
class LadderResult:
    """Arrays indexed by rung n = 0..N (``signs`` by n = 1..N).

    ``z_values`` includes Z_N, which repeats Z_{N-1} since R_N = 0.
    """

    taus: np.ndarray
    levels: np.ndarray
    signs: np.ndarray
    x_at_tau: np.ndarray
    z_values: np.ndarray
    retired_at: int
    params: LadderParams
    path_seed: int
    n_steps: int

    @property
    def n_rungs(self) -> int:
        """Number of non-retirement exits."""
        return self.retired_at - 1

    @property
    def log_z(self) -> np.ndarray:
        return self.x_at_tau[0] + self.levels * self.params.barrier

    def to_json(self) -> dict:
        return {
            "taus": self.taus.tolist(),
            "signs": self.signs.tolist(),
            "levels": self.levels.tolist(),
            "z_values": self.z_values.tolist(),
            "retired_at": self.retired_at,
            "eps0": self.params.eps0,
            "crossing_mode": self.params.crossing_mode,
        }


@numba.njit(cache=True, nogil=True)
def _ladder_kernel(x, dt, horizon, b, snap_grid):
    n = x.shape[0] - 1
    cap = n + 2
    if not snap_grid:
        cap += int(np.sum(np.abs(np.diff(x))) / b) + 2
    taus = np.empty(cap)
    levels = np.empty(cap, dtype=np.int64)
    xs = np.empty(cap)
    base = x[0]
    taus[0] = 0.0
    levels[0] = 0
    xs[0] = base
    m = 1
    k = 0
    ref = base
    done = False
    for i in range(1, n + 1):
        if done:
            break
        while True:
            dx = x[i] - ref
            if dx >= b:
                sgn = 1
            elif dx <= -b:
                sgn = -1
            else:
                break
            if snap_grid:
                t = i * dt
                new_ref = x[i]
            else:
                new_ref = base + (k + sgn) * b
                step = x[i] - x[i - 1]
                frac = (new_ref - x[i - 1]) / step
                if frac < 0.0:
                    frac = 0.0
                elif frac > 1.0:
                    frac = 1.0
                t = (i - 1 + frac) * dt
            if t >= horizon:
                done = True
                break
            k += sgn
            ref = new_ref
            taus[m] = t
            levels[m] = k
            xs[m] = ref
            m += 1
            if snap_grid:
                break
    taus[m] = horizon
    levels[m] = k
    xs[m] = x[n]
    m += 1
    return taus[:m], levels[:m], xs[:m]


def build_ladder(path: SamplePath, params: LadderParams) -> LadderResult:
    grid = path.grid
    taus, levels, xs = _ladder_kernel(
        path.values,
        grid.dt,
        float(grid.horizon),
        params.barrier,
        params.crossing_mode == "grid_snap",
    )
    signs = np.diff(levels).astype(np.int8)
    n_ret = len(taus) - 1
    x0 = path.values[0]
    if params.crossing_mode == "interpolated":
        z = np.exp(x0 + levels * params.barrier)
    else:
        z = math.exp(x0) * (1.0 + params.eps0) ** levels.astype(float)
    return LadderResult(
        taus=taus.copy(),
        levels=levels.copy(),
        signs=signs,
        x_at_tau=xs.copy(),
        z_values=z,
        retired_at=n_ret,
        params=params,
        path_seed=path.seed,
        n_steps=grid.n_steps,
    )


@dataclass
class SandwichReport:
    """Extremes of the three factors whose product bounds Z~_t / Y_t.

    ``walk_to_price`` is Z_n / Y_{tau_n}; ``anchor_to_price`` is
    Y_{tau_{n-1}} / Y_t for grid t in [tau_{n-1}, tau_n); ``rung_move`` is
    Y_{tau_n} / Y_{tau_{n-1}}. ``violations`` counts log-factors outside
    [-b - tol, b + tol].
    """

    eps0: float
    crossing_mode: str
    factor_min: dict = field(default_factory=dict)
    factor_max: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    tolerance: float = 0.0
    max_abs_increment: float = 0.0
    envelope: tuple[float, float] = (0.0, 0.0)

    @property
    def n_violations(self) -> int:
        return int(sum(self.violations.values()))

    @property
    def ok(self) -> bool:
        return self.n_violations == 0

    def to_json(self) -> dict:
        return {
            "eps0": self.eps0,
            "crossing_mode": self.crossing_mode,
            "factor_min": self.factor_min,
            "factor_max": self.factor_max,
            "violations": self.violations,
            "tolerance": self.tolerance,
            "max_abs_increment": self.max_abs_increment,
            "envelope": list(self.envelope),
        }


def validate_sandwich(
    path: SamplePath, ladder: LadderResult, params: LadderParams
) -> SandwichReport:
    if ladder.path_seed != path.seed or ladder.n_steps != path.grid.n_steps:
        raise ContractError("ladder was not built from this path")
    if ladder.params != params:
        raise ContractError("ladder was built with different parameters")
    if ladder.x_at_tau[0] != path.values[0]:
        raise ContractError("ladder start does not match the path")
    b = params.barrier
    x = path.values
    times = path.grid.times
    inc = float(np.max(np.abs(np.diff(x))))
    tol = 0.0 if params.crossing_mode == "interpolated" else inc

    # rung index n-1 owning each grid time: tau_{n-1} <= t < tau_n, T in the last rung
    exits = ladder.taus[1:-1]
    owner = np.searchsorted(exits, times, side="right")
    anchor = ladder.x_at_tau[owner] - x

    if params.crossing_mode == "interpolated":
        walk = ladder.log_z - ladder.x_at_tau
        # exits are snapped, so every non-final rung moves by exactly R_n * b
        move = ladder.signs.astype(float) * b
        move[-1] = ladder.x_at_tau[-1] - ladder.x_at_tau[-2]
    else:
        walk = x[0] + ladder.levels * b - ladder.x_at_tau
        move = np.diff(ladder.x_at_tau)

    factors = {"walk_to_price": walk, "anchor_to_price": anchor, "rung_move": move}
    rep = SandwichReport(params.eps0, params.crossing_mode, tolerance=tol, max_abs_increment=inc)
    for name, logs in factors.items():
        rep.factor_min[name] = float(np.exp(logs.min()))
        rep.factor_max[name] = float(np.exp(logs.max()))
        rep.violations[name] = int(np.count_nonzero(np.abs(logs) > b + tol))
    e = 3 * (b + tol)
    rep.envelope = (math.exp(-e), math.exp(e))
    return rep


def effective_epsilon(eps0: float) -> float:
    """Cost level (1 + eps0)^3 - 1 certified by an eps0 ladder.

    eps0 is read as the shortest decimal that round-trips to the float (what
    the user typed), cubed in exact rational arithmetic and rounded once.
    """
    e = Fraction(repr(float(eps0)))
    return float((1 + e) ** 3 - 1)
