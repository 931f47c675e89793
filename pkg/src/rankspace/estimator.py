"""Rank-space sampling cardinality estimator.

Pipeline for one box:

1. ``recursive_filter`` trims the box's Z-interval into disjoint sub-intervals.
2. ``project_to_ranks`` maps each sub-interval to the half-open range of
   global ranks it covers; their total length is ``r_sum``.
3. ``b`` ranks are drawn uniformly with replacement from that union, decoded
   back to keys with ``rank2key`` and tested against the box.
4. ``est = count / b * r_sum`` is unbiased, with variance
   ``card**2 * (1/eta - 1) / b`` where ``eta = card / r_sum``.
5. With hybrid estimation on, the probability that the estimate undershoots
   the truth by the factor ``q_bound`` is evaluated from the sampling
   evidence; when it exceeds ``1 - confidence`` the exact index scan answers
   instead.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .filtering import FilterConfig, ZInterval, recursive_filter
from .index import CountedIndex
from .zorder import QueryBox


@dataclass(frozen=True)
class EstimatorConfig:
    budget: int = 20_000
    q_bound: float = 20.0
    confidence: float = 1 - 1e-7
    hybrid: bool = True
    seed: int = 0
    gaussian_approx: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.q_bound > 1:
            raise ValueError("q_bound must be > 1")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class RankIntervalSet:
    starts: np.ndarray  # inclusive, 0-based exclusive rank of the interval's first key
    ends: np.ndarray    # exclusive
    r_sum: int

    def __len__(self):
        return len(self.starts)

    def as_pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.starts.tolist(), self.ends.tolist()))


@dataclass(frozen=True)
class EstimateResult:
    est: float
    count: int
    b: int
    r_sum: int
    overflow_prob: float
    used_exact_scan: bool
    n_intervals: int = 0
    elapsed: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "est": self.est, "count": self.count, "b": self.b, "r_sum": self.r_sum,
            "overflow_prob": self.overflow_prob, "used_exact_scan": self.used_exact_scan,
            "n_intervals": self.n_intervals, "elapsed": self.elapsed,
        }


def project_to_ranks(intervals: list[ZInterval], index: CountedIndex) -> RankIntervalSet:
    starts, ends = [], []
    for q in intervals:
        s = index.key2rank_exclusive(q.low)
        e = index.key2rank(q.up)
        if e > s:
            starts.append(s)
            ends.append(e)
    starts = np.array(starts, dtype=np.int64)
    ends = np.array(ends, dtype=np.int64)
    return RankIntervalSet(starts, ends, int((ends - starts).sum()))


def sample_from_ranks(ranks: RankIntervalSet, b: int, rng: np.random.Generator) -> np.ndarray:
    """``b`` uniform draws (with replacement) over the union, as 1-indexed global ranks."""
    if ranks.r_sum < 1:
        raise ValueError("cannot sample from an empty rank space")
    lengths = ranks.ends - ranks.starts
    cum = np.cumsum(lengths)
    u = rng.integers(0, ranks.r_sum, size=b, dtype=np.int64)
    which = np.searchsorted(cum, u, side="right")
    offset = u - (cum[which] - lengths[which])
    return ranks.starts[which] + offset + 1


def _trial_count(count: int, r_sum: int, b: int, q_bound: float) -> int:
    # ceil(est * q_bound) computed exactly, est = count * r_sum / b
    return math.ceil(Fraction(count * r_sum, b) * Fraction(q_bound))


def overflow_probability(est: float, q_bound: float, count: int, b: int, r_sum: int,
                         gaussian_approx: bool = False) -> float:
    """Binomial probability of seeing ``count`` hits if the truth were ``q_bound * est``.

    Evaluated in log space.  ``count == 0`` returns 1.  With ``gaussian_approx``
    the normal density replaces the pmf once ``est * q_bound > 20``.
    """
    if count < 0 or count > b:
        raise ValueError(f"count {count} outside [0, {b}]")
    if count == 0:
        return 1.0
    trials = _trial_count(count, r_sum, b, q_bound)
    if b > r_sum:
        # b/r_sum is no longer a probability; use the draw-level likelihood
        # count ~ Binomial(b, trials / r_sum) of sampling with replacement
        return _binom_pmf(count, b, min(1.0, trials / r_sum), gaussian_approx and est * q_bound > 20)
    return _binom_pmf(count, trials, b / r_sum, gaussian_approx and est * q_bound > 20)


def _binom_pmf(k: int, n: int, p: float, gaussian: bool = False) -> float:
    if k > n or k < 0:
        return 0.0
    if p >= 1.0:
        return 1.0 if k == n else 0.0
    if p <= 0.0:
        return 1.0 if k == 0 else 0.0
    if gaussian:
        mu = n * p
        var = n * p * (1 - p)
        return math.exp(-((k - mu) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
    logp = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
            + (n - k) * math.log1p(-p) + k * math.log(p))
    return math.exp(logp)


class Estimator:
    """Binds an index to filtering and sampling settings."""

    def __init__(self, index: CountedIndex, filter_config: FilterConfig = FilterConfig(),
                 config: EstimatorConfig = EstimatorConfig()):
        self.index = index
        self.filter_config = filter_config
        self.config = config

    def rank_space(self, box: QueryBox) -> RankIntervalSet:
        return project_to_ranks(recursive_filter(box, self.filter_config), self.index)

    def sample_count(self, box: QueryBox, ranks: RankIntervalSet, rng: np.random.Generator) -> int:
        samples = sample_from_ranks(ranks, self.config.budget, rng)
        keys = self.index.rank2key_many(samples)
        return int(np.count_nonzero(box.contains_many(keys)))

    def estimate(self, box: QueryBox, rng: np.random.Generator | None = None) -> EstimateResult:
        t0 = time.perf_counter()
        cfg = self.config
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        ranks = self.rank_space(box)
        if ranks.r_sum == 0:
            return EstimateResult(0.0, 0, cfg.budget, 0, 0.0, False, 0, time.perf_counter() - t0)
        count = self.sample_count(box, ranks, rng)
        est = count / cfg.budget * ranks.r_sum
        prob = overflow_probability(est, cfg.q_bound, count, cfg.budget, ranks.r_sum, cfg.gaussian_approx)
        exact = False
        if cfg.hybrid and prob > 1 - cfg.confidence:
            est = float(self.index.range_query_exact(box).card)
            exact = True
        return EstimateResult(float(est), count, cfg.budget, ranks.r_sum, prob, exact,
                              len(ranks), time.perf_counter() - t0)


def estimate(box: QueryBox, index: CountedIndex, filter_config: FilterConfig = FilterConfig(),
             config: EstimatorConfig = EstimatorConfig(),
             rng: np.random.Generator | None = None) -> EstimateResult:
    return Estimator(index, filter_config, config).estimate(box, rng)
