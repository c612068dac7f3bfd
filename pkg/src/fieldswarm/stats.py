"""Margin-shifted Welch tests, Benjamini-Hochberg, and group pooling.

The margin test asks a stronger question than "is A better than B": it
tests H0 "A is NOT at least `margin` better than B", where better means
lower for error-like metrics and higher for score-like metrics.  Shifting
B by the margin factor reduces this to a one-sided two-sample problem on
summary statistics, so published-style (n, mean, sd) rows are enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from scipy.stats import t as t_dist

from .errors import ValidationError

DIRECTIONS = ("lower", "higher")


@dataclass(frozen=True)
class SampleStats:
    """Summary of one sample: size, mean, standard deviation."""

    n: int
    mean: float
    sd: float

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("sample stats require n >= 2")
        if self.sd < 0:
            raise ValidationError("sd must be >= 0")
        if not (math.isfinite(self.mean) and math.isfinite(self.sd)):
            raise ValidationError("mean and sd must be finite")

    @property
    def variance(self) -> float:
        return self.sd * self.sd


def welch_margin_test(
    a: SampleStats, b: SampleStats, relative_margin: float, direction: str
) -> float:
    """One-sided Welch p-value for "a beats b by at least the margin".

    direction "lower": beat means mean_a <= (1 - margin) * mean_b.
    direction "higher": beat means mean_a >= (1 + margin) * mean_b.
    Small p rejects H0 (a is NOT that much better) in favor of the beat.
    """
    if direction not in DIRECTIONS:
        raise ValidationError(f"direction must be one of {DIRECTIONS}")
    if not 0 <= relative_margin < 1:
        raise ValidationError("relative_margin must lie in [0, 1)")
    c = 1.0 - relative_margin if direction == "lower" else 1.0 + relative_margin

    diff = a.mean - c * b.mean
    va = a.variance / a.n
    vb = (c * c) * b.variance / b.n
    se = math.sqrt(va + vb)
    if se == 0.0:
        if diff == 0.0:
            return 0.5
        better = diff < 0 if direction == "lower" else diff > 0
        return 0.0 if better else 1.0

    t_stat = diff / se
    df = (va + vb) ** 2 / (
        va * va / (a.n - 1) + vb * vb / (b.n - 1)
    )
    if direction == "lower":
        return float(t_dist.cdf(t_stat, df))
    return float(t_dist.sf(t_stat, df))


def bh_adjust(p_values: Sequence[float], alpha: float) -> list[bool]:
    """Step-up Benjamini-Hochberg: reject ranks 1..k*, k* = max{k: p_(k) <= k a/m}."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    for p in p_values:
        if not 0 <= p <= 1:
            raise ValidationError(f"p-value {p} outside [0, 1]")
    m = len(p_values)
    if m == 0:
        return []
    order = sorted(range(m), key=lambda i: p_values[i])
    k_star = 0
    for rank, idx in enumerate(order, start=1):
        if p_values[idx] <= rank * alpha / m:
            k_star = rank
    reject = [False] * m
    for rank, idx in enumerate(order, start=1):
        if rank <= k_star:
            reject[idx] = True
    return reject


def pooled_stats(groups: Sequence[SampleStats]) -> SampleStats:
    """Pool equal-size groups: mean of means, mean of variances, summed n."""
    if not groups:
        raise ValidationError("pooled_stats needs at least one group")
    sizes = {g.n for g in groups}
    if len(sizes) != 1:
        raise ValidationError(f"groups must share a sample size, got {sorted(sizes)}")
    mean = sum(g.mean for g in groups) / len(groups)
    variance = sum(g.variance for g in groups) / len(groups)
    return SampleStats(
        n=sum(g.n for g in groups), mean=mean, sd=math.sqrt(variance)
    )
