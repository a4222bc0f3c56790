"""Utility metrics for top-c selection runs.

Two set metrics score a run's emitted positives against the true top-c:
a rank-weighted cumulative score (ncr) and plain F1. A third estimator
measures (alpha, beta)-accuracy empirically: the probability that a run
misclassifies some query by more than alpha around its threshold, or stops
before every query was seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .svt import SvtOutcome


@dataclass(frozen=True)
class GroundTruth:
    """True ranking of a dataset's items, score-descending with id tie-break.

    ``ranked_ids`` covers every item; ``scores[i]`` is the true score of
    ``ranked_ids[i]``. c is the selection size the metrics target.
    """

    ranked_ids: tuple[int, ...]
    scores: tuple[float, ...]
    threshold: float
    c: int

    def __post_init__(self) -> None:
        if self.c < 1:
            raise ValueError(f"c must be at least 1, got {self.c}")
        if len(self.ranked_ids) != len(self.scores):
            raise ValueError("ranked_ids and scores must align")
        if len(set(self.ranked_ids)) != len(self.ranked_ids):
            raise ValueError("item ids must be unique")
        keys = [(-s, i) for s, i in zip(self.scores, self.ranked_ids)]
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError("ranking must be score-descending with "
                             "ascending-id tie-break")

    @classmethod
    def from_items(cls, items: Iterable[tuple[int, float]], threshold: float,
                   c: int) -> "GroundTruth":
        ordered = sorted(items, key=lambda item: (-item[1], item[0]))
        return cls(ranked_ids=tuple(i for i, _ in ordered),
                   scores=tuple(float(s) for _, s in ordered),
                   threshold=float(threshold), c=c)

    def top_c_ids(self) -> tuple[int, ...]:
        return self.ranked_ids[:self.c]


def ncr(positives: Iterable[int], truth: GroundTruth) -> float:
    """Rank-weighted top-c recovery, normalized to [0, 1].

    An emitted id with true rank i <= c and true score at or above the
    threshold contributes c - i + 1; anything ranked beyond c or scoring
    below the threshold contributes nothing. The sum is divided by
    c(c+1)/2, the score of a perfect selection.
    """
    emitted = list(dict.fromkeys(positives))
    if len(emitted) > truth.c:
        raise ValueError(f"at most c={truth.c} positives expected, "
                         f"got {len(emitted)}")
    credit = {}
    for rank0, (item, score) in enumerate(zip(truth.ranked_ids[:truth.c],
                                              truth.scores[:truth.c])):
        if score >= truth.threshold:
            credit[item] = truth.c - rank0
    total = sum(credit.get(item, 0) for item in emitted)
    return 2.0 * total / (truth.c * (truth.c + 1))


def f1(positives: Iterable[int], truth: GroundTruth) -> float:
    """F1 of the emitted set against the true top-c set."""
    emitted = set(positives)
    target = set(truth.top_c_ids())
    tp = len(emitted & target)
    denom = 2 * tp + len(emitted - target) + len(target - emitted)
    return 2.0 * tp / denom if denom else 0.0


def alpha_beta_estimate(runner: Callable[[np.random.Generator], SvtOutcome],
                        alpha: float, truth: GroundTruth, trials: int,
                        rng: np.random.Generator) -> float:
    """Empirical failure rate of a run closure at tolerance alpha.

    A trial fails when some positive answer's true score is below
    threshold - alpha, some negative answer's true score is above
    threshold + alpha, or the run halted with queries never evaluated.

    Args:
        runner: closure running one mechanism invocation with the given rng.
        alpha: score tolerance (nonnegative).
        truth: ground truth carrying every queried id's true score.
        trials: number of Monte-Carlo repetitions, at least 1.
        rng: the random stream shared by all trials.

    Returns:
        The fraction of failed trials.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    score_of = dict(zip(truth.ranked_ids, truth.scores))
    n_items = len(truth.ranked_ids)
    low = truth.threshold - alpha
    high = truth.threshold + alpha
    failures = 0
    for _ in range(trials):
        outcome = runner(rng)
        seen = set()
        bad = False
        for ans in outcome.answers:
            seen.add(ans.query_id)
            score = score_of[ans.query_id]
            if (score < low) if ans.flagged else (score > high):
                bad = True
                break
        failures += bad or len(seen) < n_items
    return failures / trials


def accuracy_alpha_bound(k: int, eps: float, beta: float) -> float:
    """Tolerance guaranteeing failure rate at most beta for the corrected
    exponential mechanism with c=1, unit sensitivity, and an even split:
    alpha = 4(ln k + ln(2/beta))/eps."""
    if k < 1 or not eps > 0 or not 0.0 < beta < 1.0:
        raise ValueError("need k >= 1, eps > 0, beta in (0, 1)")
    return 4.0 * (math.log(k) + math.log(2.0 / beta)) / eps


def accuracy_beta_bound(k: int, eps: float, alpha: float) -> float:
    """Inverse of :func:`accuracy_alpha_bound`: beta = 2k exp(-alpha eps/4),
    capped at 1."""
    if k < 1 or not eps > 0 or alpha < 0:
        raise ValueError("need k >= 1, eps > 0, alpha >= 0")
    return min(1.0, 2.0 * k * math.exp(-alpha * eps / 4.0))
