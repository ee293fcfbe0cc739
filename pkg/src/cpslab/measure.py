"""Martingale measure for the retired walk on its level chain.

Under Q each live rung retires with probability beta and otherwise steps
up/down with

    q_plus  = (1 - beta) / (eps0 + 2),
    q_minus = (1 - beta) (1 + eps0) / (eps0 + 2),

the unique split of 1 - beta with q_plus (1 + eps0) + q_minus / (1 + eps0) = 1 - beta,
so Z is a Q-martingale that retires geometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateEnsembleError, ParameterError
from .retirement import LadderResult

__all__ = [
    "ChainMeasure",
    "PathWeight",
    "make_chain_measure",
    "expected_terminal",
    "terminal_decomposition",
    "reweight_ensemble",
    "normalized_weights",
    "weighted_mean_se",
    "conditional_cps_values",
    "DEFAULT_BETA",
]

DEFAULT_BETA = 0.1


@dataclass(frozen=True)
class ChainMeasure:
    eps0: float
    beta: float
    q_plus: float
    q_minus: float
    q_zero: float

    def prob(self, sign: int) -> float:
        return {1: self.q_plus, -1: self.q_minus, 0: self.q_zero}[int(sign)]

    @property
    def log_probs(self) -> np.ndarray:
        """log q indexed by sign + 1 (so [-1, 0, +1] -> [0, 1, 2])."""
        return np.log([self.q_minus, self.q_zero, self.q_plus])

    def martingale_residual(self) -> float:
        g = 1.0 + self.eps0
        return self.q_plus * g + self.q_minus / g + self.q_zero - 1.0

    def to_json(self) -> dict:
        return {
            "eps0": self.eps0,
            "beta": self.beta,
            "q_plus": self.q_plus,
            "q_minus": self.q_minus,
            "q_zero": self.q_zero,
        }


def make_chain_measure(eps0: float, beta: float = DEFAULT_BETA) -> ChainMeasure:
    if not (math.isfinite(eps0) and eps0 > 0):
        raise ParameterError("eps0 must be positive")
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    live = 1.0 - beta
    return ChainMeasure(
        eps0=eps0,
        beta=beta,
        q_plus=live / (eps0 + 2.0),
        q_minus=live * (1.0 + eps0) / (eps0 + 2.0),
        q_zero=beta,
    )


def terminal_decomposition(
    chain: ChainMeasure, z0: float, horizon_rungs: int
) -> tuple[float, float]:
    """(E_Q[Z_N; N <= n], E_Q[Z_n; N > n]) by dynamic programming over levels.

    Probabilities and values are carried in log space; level k is reachable
    only for |k| <= n, so no further truncation happens.
    """
    if int(horizon_rungs) != horizon_rungs or horizon_rungs < 1:
        raise ParameterError("horizon_rungs must be an integer >= 1")
    if not z0 > 0:
        raise ParameterError("z0 must be positive")
    n = int(horizon_rungs)
    lq_m, lq_0, lq_p = np.log(chain.q_minus), np.log(chain.q_zero), np.log(chain.q_plus)
    step = math.log1p(chain.eps0)
    levels = np.arange(-n, n + 1)
    log_alive = np.full(2 * n + 1, -np.inf)
    log_alive[n] = 0.0
    retired_terms = []
    for _ in range(n):
        retired_terms.append(log_alive + lq_0 + levels * step)
        nxt = np.full_like(log_alive, -np.inf)
        nxt[1:] = np.logaddexp(nxt[1:], log_alive[:-1] + lq_p)
        nxt[:-1] = np.logaddexp(nxt[:-1], log_alive[1:] + lq_m)
        log_alive = nxt
    log_z0 = math.log(z0)
    retired = math.exp(log_z0 + logsumexp(np.concatenate(retired_terms)))
    alive = math.exp(log_z0 + logsumexp(log_alive + levels * step))
    return retired, alive


def expected_terminal(chain: ChainMeasure, z0: float, horizon_rungs: int) -> float:
    """E_Q[Z_{n ^ N}]: retired mass plus the mass still alive after n rungs."""
    retired, alive = terminal_decomposition(chain, z0, horizon_rungs)
    return retired + alive


# --- empirical change of measure ----------------------------------------


@dataclass(frozen=True)
class PathWeight:
    path_seed: int
    log_weight: float


def _states(signs: np.ndarray, n_buckets: int) -> np.ndarray:
    """State id 3 * bucket + (previous sign + 1); rung 0 has previous sign 0."""
    bucket = np.minimum(np.arange(len(signs)), n_buckets - 1)
    prev = np.concatenate(([0], signs[:-1])).astype(np.int64) if len(signs) else np.zeros(0, np.int64)
    return 3 * bucket + prev + 1


def reweight_ensemble(
    ladders: Sequence[LadderResult], chain: ChainMeasure, min_visits: int = 200
) -> list[PathWeight]:
    """Radon-Nikodym weights turning the empirical ladder law into Q.

    The state of rung n is its index together with the sign of the rung that
    led to it; rung indices from the first one visited fewer than
    ``min_visits`` times onward share a single tail bucket. The previous sign
    matters on a discretised path: an exit inside a grid cell reveals the
    slope of that cell, so the next exit leans in the same direction.
    p_hat(sign | state) are empirical frequencies from the same ensemble and
    each rung contributes log q(R_n) - log p_hat(R_n | state).

    A state whose observed signs include exactly one of +1/-1 cannot be
    reweighted into a martingale step, and one whose steps all come from a
    single path has no frequency to speak of; both raise
    DegenerateEnsembleError.
    """
    if not ladders:
        raise DegenerateEnsembleError("empty ensemble")
    lengths = np.array([len(lad.signs) for lad in ladders])
    # visits of rung index n = number of ladders with more than n signs
    visits = np.bincount(lengths, minlength=lengths.max() + 1)[::-1].cumsum()[::-1][1:]
    sparse = np.flatnonzero(visits < min_visits)
    n_buckets = int(sparse[0]) + 1 if sparse.size else len(visits)
    counts = np.zeros((3 * n_buckets, 3), dtype=np.int64)
    movers = np.zeros(3 * n_buckets, dtype=np.int64)  # paths with a +-1 step in the state
    per_path = []
    for lad in ladders:
        if lad.params.eps0 != chain.eps0:
            raise ParameterError("ladder eps0 does not match the chain")
        states = _states(lad.signs, n_buckets)
        cols = lad.signs.astype(np.int64) + 1
        np.add.at(counts, (states, cols), 1)
        movers[np.unique(states[cols != 1])] += 1
        per_path.append((states, cols))
    moved = (counts[:, 0] + counts[:, 2]) > 0
    one_sided = moved & ((counts[:, 0] > 0) != (counts[:, 2] > 0))
    if np.any(one_sided):
        bad = np.flatnonzero(one_sided).tolist()
        raise DegenerateEnsembleError(
            f"states {bad[:10]} observe only one step direction; enlarge the ensemble"
        )
    if np.any(moved & (movers < 2)):
        bad = np.flatnonzero(moved & (movers < 2)).tolist()
        raise DegenerateEnsembleError(
            f"states {bad[:10]} have step frequencies from a single path; enlarge the ensemble"
        )
    with np.errstate(divide="ignore"):
        log_p = np.log(counts / np.maximum(counts.sum(axis=1, keepdims=True), 1))
    log_q = chain.log_probs
    out = []
    for lad, (states, cols) in zip(ladders, per_path):
        lw = math.fsum((log_q[cols] - log_p[states, cols]).tolist())
        out.append(PathWeight(lad.path_seed, lw))
    return out


def normalized_weights(weights: Sequence[PathWeight]) -> np.ndarray:
    lw = np.array([w.log_weight for w in weights])
    return np.exp(lw - logsumexp(lw))


def weighted_mean_se(values: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    """Self-normalised weighted mean and its delta-method standard error."""
    values = np.asarray(values, dtype=float)
    w = np.asarray(w, dtype=float)
    w = w / math.fsum(w.tolist())
    mean = math.fsum((w * values).tolist())
    se = math.sqrt(math.fsum((w**2 * (values - mean) ** 2).tolist()))
    return mean, se


def conditional_cps_values(chain: ChainMeasure, ladder: LadderResult) -> np.ndarray:
    """Z~ at the rung times, which is the walk itself: Z~_{tau_n} = Z_n."""
    if ladder.params.eps0 != chain.eps0:
        raise ParameterError("ladder eps0 does not match the chain")
    return ladder.z_values.copy()
