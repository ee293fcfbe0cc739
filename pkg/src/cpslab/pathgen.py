"""Seeded path ensembles for Brownian and fractional Brownian drivers.

Paths live on a uniform grid; off-grid values are defined by linear
interpolation of the grid values. Transformed paths also carry the driving
path so that hitting rules can be resolved on the driver.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, NumericalError, ParameterError

__all__ = [
    "TimeGrid",
    "SamplePath",
    "ModelSpec",
    "derive_seed",
    "generate_brownian",
    "generate_fbm",
    "generate_ensemble",
    "iter_ensemble",
    "fbm_covariance",
    "write_path_csv",
    "write_ensemble",
    "read_ensemble",
    "ENSEMBLE_MAGIC",
    "Ensemble",
    "simulate_ensemble",
    "as_ensemble",
    "regenerate",
]

_MASK64 = (1 << 64) - 1
EIGEN_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ParameterError(f"horizon must be positive, got {self.horizon}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ParameterError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.horizon
        return t


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One simulated path. ``values`` is X on the grid (log-price units)."""

    grid: TimeGrid
    values: np.ndarray
    seed: int
    model_tag: str
    driver: np.ndarray | None = None
    transform_id: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_steps + 1,):
            raise ParameterError(
                f"expected {self.grid.n_steps + 1} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise NumericalError("path contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def hitting_driver(self) -> np.ndarray:
        return self.values if self.driver is None else self.driver

    def value_at(self, t: float) -> float:
        return float(np.interp(t, self.grid.times, self.values))

    def price(self) -> np.ndarray:
        return np.exp(self.values)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    sigma: float = 1.0
    x0: float = 0.0
    hurst: float | None = None
    transform_id: str | None = None
    driver_kind: str = "brownian"

    def __post_init__(self):
        if self.kind not in ("brownian", "fractional_brownian", "transformed"):
            raise ParameterError(f"unknown model kind {self.kind!r}")
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        uses_hurst = self.kind == "fractional_brownian" or (
            self.kind == "transformed" and self.driver_kind == "fractional_brownian"
        )
        if uses_hurst != (self.hurst is not None):
            raise ParameterError("hurst is required exactly for fractional Brownian drivers")
        if (self.kind == "transformed") != (self.transform_id is not None):
            raise ParameterError("transform_id is required exactly for transformed models")
        if self.kind == "transformed" and self.driver_kind not in (
            "brownian",
            "fractional_brownian",
        ):
            raise ParameterError(f"unknown driver kind {self.driver_kind!r}")

    @property
    def tag(self) -> str:
        base = self.kind if self.kind != "transformed" else self.driver_kind
        if base == "fractional_brownian":
            base = f"fbm(H={self.hurst:g})"
        if self.kind == "transformed":
            return f"{self.transform_id}({base})"
        return base

    def driver_spec(self) -> "ModelSpec":
        if self.kind != "transformed":
            return self
        return ModelSpec(self.driver_kind, self.sigma, self.x0, self.hurst)


def derive_seed(base_seed: int, index: int) -> int:
    """splitmix64 finaliser of ``base_seed * 2**32 + index``.

    Injective in ``index`` for a fixed base seed (the finaliser is a bijection on
    64-bit words) for indices below 2**32.
    """
    z = ((base_seed & _MASK64) * 0x9E3779B97F4A7C15 + index + 1) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & _MASK64))


def _check_sigma(sigma: float):
    if not (np.isfinite(sigma) and sigma > 0):
        raise ParameterError(f"sigma must be positive, got {sigma}")


def generate_brownian(grid: TimeGrid, sigma: float, x0: float, seed: int) -> SamplePath:
    _check_sigma(sigma)
    incr = _rng(seed).standard_normal(grid.n_steps) * np.sqrt(grid.dt)
    values = np.empty(grid.n_steps + 1)
    values[0] = 0.0
    np.cumsum(incr, out=values[1:])
    return SamplePath(grid, x0 + sigma * values, seed, "brownian")


def fbm_covariance(s, t, hurst: float):
    """Closed-form covariance E[B^H_s B^H_t]."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(t - s) ** h2)


class _FgnSampler:
    """Unit-step fractional Gaussian noise of length n, circulant embedding.

    Falls back to a dense Cholesky factor of the Toeplitz covariance when the
    embedding has eigenvalues below ``-EIGEN_ZERO_TOL``.
    """

    def __init__(self, n: int, hurst: float):
        self.n = n
        self.hurst = hurst
        k = np.arange(n + 1, dtype=float)
        h2 = 2.0 * hurst
        gamma = 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)
        row = np.concatenate([gamma[: n + 1], gamma[1:n][::-1]])
        eig = np.fft.fft(row).real
        if eig.min() < -EIGEN_ZERO_TOL:
            self.sqrt_eig = None
            try:
                self.chol = linalg.cholesky(linalg.toeplitz(gamma[:n]), lower=True)
            except linalg.LinAlgError as exc:
                raise NumericalError("fBm covariance factorisation failed") from exc
        else:
            eig[eig < 0] = 0.0
            self.sqrt_eig = np.sqrt(eig / (2 * n))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        n = self.n
        if self.sqrt_eig is None:
            return self.chol @ rng.standard_normal(n)
        m = 2 * n
        w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        return np.fft.fft(self.sqrt_eig * w)[:n].real


_SAMPLER_CACHE: dict[tuple[int, float], _FgnSampler] = {}


def _fgn_sampler(n: int, hurst: float) -> _FgnSampler:
    key = (n, float(hurst))
    sampler = _SAMPLER_CACHE.get(key)
    if sampler is None:
        if len(_SAMPLER_CACHE) > 16:
            _SAMPLER_CACHE.clear()
        sampler = _SAMPLER_CACHE[key] = _FgnSampler(n, hurst)
    return sampler


def generate_fbm(
    grid: TimeGrid, hurst: float, sigma: float, x0: float, seed: int
) -> SamplePath:
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"hurst must lie in (0, 1), got {hurst}")
    _check_sigma(sigma)
    noise = _fgn_sampler(grid.n_steps, hurst).sample(_rng(seed))
    values = np.empty(grid.n_steps + 1)
    values[0] = 0.0
    np.cumsum(noise, out=values[1:])
    values *= grid.dt**hurst
    return SamplePath(grid, x0 + sigma * values, seed, f"fbm(H={hurst:g})")


def _generate_one(spec: ModelSpec, grid: TimeGrid, seed: int) -> SamplePath:
    drv = spec.driver_spec()
    if drv.kind == "brownian":
        path = generate_brownian(grid, drv.sigma, drv.x0, seed)
    else:
        path = generate_fbm(grid, drv.hurst, drv.sigma, drv.x0, seed)
    if spec.kind != "transformed":
        return path
    from .transforms import resolve

    f = resolve(spec.transform_id)
    return SamplePath(
        grid,
        f(path.values),
        seed,
        spec.tag,
        driver=path.values,
        transform_id=spec.transform_id,
    )


def iter_ensemble(
    spec: ModelSpec, grid: TimeGrid, n_paths: int, base_seed: int
) -> Iterator[SamplePath]:
    """Lazily yield the ensemble; memory stays at one path."""
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    if spec.kind == "transformed":
        from .transforms import resolve

        resolve(spec.transform_id)  # fail before simulating
    for i in range(n_paths):
        yield _generate_one(spec, grid, derive_seed(base_seed, i))


def generate_ensemble(
    spec: ModelSpec, grid: TimeGrid, n_paths: int, base_seed: int
) -> list[SamplePath]:
    return list(iter_ensemble(spec, grid, n_paths, base_seed))


def regenerate(spec: ModelSpec, grid: TimeGrid, seed: int) -> SamplePath:
    """Rebuild a single path from its recorded seed."""
    return _generate_one(spec, grid, seed)


# --- export -------------------------------------------------------------

ENSEMBLE_MAGIC = b"CPSLENS\x00"
ENSEMBLE_VERSION = 1
# header: magic, u32 version, u32 n_paths, u32 n_steps, f64 horizon, u32 tag length
_HEADER = struct.Struct("<8sIIIdI")


def write_path_csv(path: SamplePath, target: str | Path) -> None:
    data = np.column_stack([path.grid.times, path.values])
    np.savetxt(target, data, delimiter=",", header="t,value", comments="", fmt="%.17g")


def write_ensemble(paths: Sequence[SamplePath], target: str | Path) -> None:
    """Binary container: header, tag, then per path a u64 seed and f64 values (LE)."""
    if not paths:
        raise ParameterError("empty ensemble")
    grid = paths[0].grid
    tag = paths[0].model_tag.encode()
    with open(target, "wb") as fh:
        fh.write(
            _HEADER.pack(
                ENSEMBLE_MAGIC, ENSEMBLE_VERSION, len(paths), grid.n_steps, grid.horizon, len(tag)
            )
        )
        fh.write(tag)
        for p in paths:
            if p.grid != grid:
                raise ParameterError("all paths must share one grid")
            fh.write(struct.pack("<Q", p.seed & _MASK64))
            fh.write(p.values.astype("<f8").tobytes())


def read_ensemble(source: str | Path) -> list[SamplePath]:
    raw = Path(source).read_bytes()
    magic, version, n_paths, n_steps, horizon, tag_len = _HEADER.unpack_from(raw, 0)
    if magic != ENSEMBLE_MAGIC:
        raise ConfigurationError("not a cpslab ensemble file")
    if version != ENSEMBLE_VERSION:
        raise ConfigurationError(f"unsupported ensemble version {version}")
    off = _HEADER.size
    tag = raw[off : off + tag_len].decode()
    off += tag_len
    grid = TimeGrid(horizon, n_steps)
    out = []
    for _ in range(n_paths):
        (seed,) = struct.unpack_from("<Q", raw, off)
        off += 8
        vals = np.frombuffer(raw, dtype="<f8", count=n_steps + 1, offset=off).astype(float)
        off += 8 * (n_steps + 1)
        out.append(SamplePath(grid, vals, seed, tag))
    return out


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Stacked paths: ``values`` has one row per path."""

    grid: TimeGrid
    values: np.ndarray
    seeds: np.ndarray
    model_tag: str
    driver: np.ndarray | None = None
    transform_id: str | None = None
    base_seed: int | None = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def hitting_driver(self) -> np.ndarray:
        return self.values if self.driver is None else self.driver

    def path(self, i: int) -> SamplePath:
        drv = None if self.driver is None else self.driver[i]
        return SamplePath(
            self.grid, self.values[i], int(self.seeds[i]), self.model_tag, drv, self.transform_id
        )

    def __iter__(self):
        return (self.path(i) for i in range(self.n_paths))

    @classmethod
    def from_paths(cls, paths: Sequence[SamplePath]) -> "Ensemble":
        if not paths:
            raise ParameterError("empty ensemble")
        first = paths[0]
        drivers = [p.driver for p in paths]
        driver = None if first.driver is None else np.stack(drivers)
        return cls(
            first.grid,
            np.stack([p.values for p in paths]),
            np.array([p.seed for p in paths], dtype=np.uint64),
            first.model_tag,
            driver,
            first.transform_id,
        )


def simulate_ensemble(
    spec: ModelSpec, grid: TimeGrid, n_paths: int, base_seed: int
) -> Ensemble:
    paths = list(iter_ensemble(spec, grid, n_paths, base_seed))
    ens = Ensemble.from_paths(paths)
    return Ensemble(
        ens.grid, ens.values, ens.seeds, spec.tag, ens.driver, ens.transform_id, base_seed
    )


def as_ensemble(obj) -> Ensemble:
    if isinstance(obj, Ensemble):
        return obj
    if isinstance(obj, SamplePath):
        return Ensemble.from_paths([obj])
    return Ensemble.from_paths(list(obj))
