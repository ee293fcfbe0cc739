"""Deterministic continuous transforms f and their drop/rise functionals.

For a transform f the drop constant is d = inf_{y >= x} (f(y) - f(x)) and the
rise constant is d0 = sup_{y >= x} (f(y) - f(x)). Both are computed by a
brute-force grid oracle on a caller-supplied box, and scale linearly under
f -> alpha * f.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import ConfigurationError, ContractError, ParameterError

__all__ = [
    "UNBOUNDED",
    "Unbounded",
    "TransformSpec",
    "DropAnalysis",
    "BUILTINS",
    "resolve",
    "evaluate",
    "analyze_drop",
    "alpha_bound",
    "classify_limits",
    "check_drop_hypothesis",
]


class Unbounded:
    """Tagged marker for an infinite drop or rise constant."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def to_json(self):
        return {"unbounded": True}


UNBOUNDED = Unbounded()


def _identity(x):
    return np.asarray(x, dtype=float) * 1.0


def _sigmoid_like(x):
    x = np.asarray(x, dtype=float)
    return x + np.tanh(x)


def _cubic_plus_square(x):
    x = np.asarray(x, dtype=float)
    return x**3 + x**2


def _piecewise_ex3(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= -1.0, np.abs(x), x + 2.0)


BUILTINS: MappingProxyType = MappingProxyType(
    {
        "identity": _identity,
        "monotone_sigmoid_like": _sigmoid_like,
        "cubic_plus_square": _cubic_plus_square,
        "piecewise_ex3": _piecewise_ex3,
    }
)
MONOTONE_BUILTINS = frozenset({"identity", "monotone_sigmoid_like"})


@dataclass(frozen=True)
class TransformSpec:
    """A builtin, or ``alpha * builtin`` for the scaled kind.

    ``alpha`` may be negative, which flips the tail case (a) <-> (b).
    """

    id: str
    kind: str
    builtin_name: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.builtin_name not in BUILTINS:
            raise ConfigurationError(f"unknown builtin transform {self.builtin_name!r}")
        if self.kind not in ("builtin", "scaled"):
            raise ConfigurationError(f"unknown transform kind {self.kind!r}")
        if not (math.isfinite(self.alpha) and self.alpha != 0):
            raise ParameterError("alpha must be a finite non-zero real")
        if self.kind == "builtin" and self.alpha != 1.0:
            raise ParameterError("builtin transforms carry alpha = 1")

    @classmethod
    def scaled(cls, builtin_name: str, alpha: float) -> "TransformSpec":
        return cls(f"{alpha!r}*{builtin_name}", "scaled", builtin_name, float(alpha))

    @property
    def is_monotone(self) -> bool:
        """Non-decreasing (a negative scale turns a monotone builtin around)."""
        return self.builtin_name in MONOTONE_BUILTINS and self.alpha > 0

    def __call__(self, x):
        y = BUILTINS[self.builtin_name](x)
        return y if self.kind == "builtin" else self.alpha * y


_SCALED_ID = re.compile(r"^\s*([-+0-9.eE]+)\s*\*\s*([a-z_0-9]+)\s*$")


def resolve(transform_id: str) -> TransformSpec:
    """Look up a builtin by name, or parse a scaled id such as ``"0.5*piecewise_ex3"``."""
    if transform_id in BUILTINS:
        return TransformSpec(transform_id, "builtin", transform_id)
    m = _SCALED_ID.match(transform_id or "")
    if m and m.group(2) in BUILTINS:
        try:
            alpha = float(m.group(1))
        except ValueError:
            pass
        else:
            return TransformSpec.scaled(m.group(2), alpha)
    raise ConfigurationError(f"unknown transform id {transform_id!r}")


def evaluate(spec: TransformSpec | str, x):
    if isinstance(spec, str):
        spec = resolve(spec)
    y = spec(x)
    return float(y) if np.ndim(y) == 0 else y


# --- tails --------------------------------------------------------------


def classify_limits(spec: TransformSpec, probe: float = 1e3) -> str:
    """'case_a' for (-inf, +inf) tails, 'case_b' for (+inf, -inf), else 'neither'."""
    if probe < 1e3:
        raise ParameterError("probe must be >= 1e3")
    with np.errstate(over="ignore", invalid="ignore"):
        r1, r2 = spec(probe), spec(2 * probe)
        l1, l2 = spec(-probe), spec(-2 * probe)
    vals = np.array([r1, r2, l1, l2], dtype=float)
    if not np.all(np.isfinite(vals)):
        return "neither"
    if r2 > r1 > 0 and l2 < l1 < 0:
        return "case_a"
    if r2 < r1 < 0 and l2 > l1 > 0:
        return "case_b"
    return "neither"


# --- drop oracle --------------------------------------------------------


@dataclass(frozen=True)
class DropAnalysis:
    transform_id: str
    d: float | Unbounded
    d0: float | Unbounded
    search_box: tuple[float, float]
    grid_resolution: int
    tails: str

    def to_json(self) -> dict:
        def enc(v):
            return v.to_json() if isinstance(v, Unbounded) else v

        return {
            "transform_id": self.transform_id,
            "d": enc(self.d),
            "d0": enc(self.d0),
            "search_box": list(self.search_box),
            "grid_resolution": self.grid_resolution,
            "tails": self.tails,
        }


def _grid_drop_rise(values: np.ndarray) -> tuple[float, float]:
    # min over i of (min_{j>=i} f_j - f_i), and the max analogue
    suffix_min = np.minimum.accumulate(values[::-1])[::-1]
    suffix_max = np.maximum.accumulate(values[::-1])[::-1]
    d = float(np.min(suffix_min - values))
    d0 = float(np.max(suffix_max - values))
    return d, d0


def analyze_drop(
    spec: TransformSpec, box: tuple[float, float], resolution: int
) -> DropAnalysis:
    """Grid oracle for d and d0 on ``resolution`` equal cells of ``box``.

    A functional whose tails force it to be infinite (d0 for case (a) tails,
    d for case (b)) is reported as ``UNBOUNDED``; the other one is the grid
    value on the box.
    """
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise ParameterError("search box must be non-empty")
    if int(resolution) != resolution or resolution < 1000:
        raise ParameterError("resolution must be an integer >= 1000")
    xs = np.linspace(lo, hi, int(resolution) + 1)
    d, d0 = _grid_drop_rise(np.asarray(spec(xs), dtype=float))
    tails = classify_limits(spec, max(1e3, 2 * max(abs(lo), abs(hi))))
    if tails == "case_a":
        d0 = UNBOUNDED
    elif tails == "case_b":
        d = UNBOUNDED
    return DropAnalysis(spec.id, d, d0, (lo, hi), int(resolution), tails)


def alpha_bound(spec: TransformSpec, delta0: float, analysis: DropAnalysis):
    """Admissible scalings (0, upper); ``upper`` may be ``UNBOUNDED``."""
    if analysis.transform_id != spec.id:
        raise ContractError(
            f"analysis is for {analysis.transform_id!r}, not {spec.id!r}"
        )
    if not delta0 > 0:
        raise ParameterError("delta0 must be positive")
    tails = analysis.tails
    if tails == "neither":
        tails = classify_limits(spec)
    if tails == "case_a":
        drop = analysis.d
        if isinstance(drop, Unbounded):
            raise ContractError("case (a) tails with an unbounded drop")
        return (0.0, UNBOUNDED if drop == 0 else delta0 / abs(drop))
    if tails == "case_b":
        rise = analysis.d0
        if isinstance(rise, Unbounded):
            raise ContractError("case (b) tails with an unbounded rise")
        return (0.0, UNBOUNDED if rise == 0 else delta0 / rise)
    raise ContractError(f"{spec.id!r} has neither (-inf,+inf) nor (+inf,-inf) tails")


def check_drop_hypothesis(analysis: DropAnalysis, delta0: float) -> str | None:
    """Return a message if the drop/rise condition for ``delta0`` fails, else None."""
    if analysis.tails == "case_a":
        if isinstance(analysis.d, Unbounded) or not analysis.d > -delta0:
            return (
                f"case (a) tails require min_(y>=x)(f(y)-f(x)) > -delta0; "
                f"got d={analysis.d} with delta0={delta0:g}"
            )
        return None
    if analysis.tails == "case_b":
        if isinstance(analysis.d0, Unbounded) or not analysis.d0 < delta0:
            return (
                f"case (b) tails require max_(y>=x)(f(y)-f(x)) < delta0; "
                f"got d0={analysis.d0} with delta0={delta0:g}"
            )
        return None
    return (
        f"transform {analysis.transform_id!r} has neither (-inf,+inf) nor (+inf,-inf) tails"
    )


