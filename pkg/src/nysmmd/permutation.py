"""The permutation two-sample test: threshold selection and decision rule.

The observed statistic is compared against the empirical quantile of its
permuted replicates.  When it lands exactly on the threshold order
statistic, the test rejects with a calibrated probability, which makes the
rejection probability under the null exactly alpha (for landmark sampling
schemes that are equivariant under relabeling of the pooled data).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .kernels import GaussianKernel, median_heuristic, DEFAULT_BANDWIDTH_SUBSET
from .leverage import (
    DEFAULT_AKRLS_BUDGET,
    DEFAULT_EXACT_FALLBACK,
    LandmarkSet,
    approx_krls,
    default_regularization,
    exact_krls,
    sample_landmarks,
)
from .features import DEFAULT_RANK_TOLERANCE, build_nystrom, build_rff
from .statistics import PooledSample, permutation_weights, permuted_statistics

NYSTROM_SAMPLERS = ("uniform", "akrls", "exact_krls")
LANDMARK_SOURCES = ("pooled", "split")

# Statistics are bounded by 2 for a unit-bounded kernel, so replicates below
# this are pure cancellation round-off.  When EVERY replicate is that small
# (degenerate data, e.g. all points equal), the values are snapped to exact
# zeros; otherwise the residues, which are not exchangeable, would leak
# through the bitwise-equality tie rule and break the exact level.
DEGENERATE_TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class NystromMethod:
    """Projected-MMD statistic with landmarks sampled from the data.

    Attributes:
        n_landmarks: Feature dimension ell.
        sampler: "uniform", "akrls", or "exact_krls".
        source: "pooled" samples landmarks from the stacked data (the
            default; required for the exact-level guarantee).  "split"
            computes scores and draws landmarks from each sample
            separately, proportionally to the sample sizes; it mirrors a
            common experimental setup but voids exactness of the level.
        regularization: Ridge level for the leverage scores; defaults to
            16 * log(4 / 0.05) / n.
        budget, fallback_threshold: Passed to the approximate scores.
        rank_tolerance: Spectral cutoff for the landmark pseudo-inverse.
    """

    n_landmarks: int
    sampler: str = "uniform"
    source: str = "pooled"
    regularization: float | None = None
    budget: int = DEFAULT_AKRLS_BUDGET
    fallback_threshold: int = DEFAULT_EXACT_FALLBACK
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE

    def __post_init__(self):
        if self.n_landmarks < 1:
            raise ValueError("n_landmarks must be at least 1")
        if self.sampler not in NYSTROM_SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.source not in LANDMARK_SOURCES:
            raise ValueError(f"unknown landmark source {self.source!r}")


@dataclass(frozen=True)
class RffMethod:
    """Random-Fourier-feature baseline with an even feature count."""

    n_features: int

    def __post_init__(self):
        if self.n_features < 2 or self.n_features % 2 != 0:
            raise ValueError(f"n_features must be even and >= 2, got {self.n_features}")


@dataclass(frozen=True)
class ExactMethod:
    """Exact MMD statistic; permutations recompute a quadratic form.

    The pooled kernel matrix is formed once (O(n^2) memory) and each
    permuted statistic costs one weighted quadratic form, so this mode is
    intended for baselines at small n.
    """


MethodSpec = NystromMethod | RffMethod | ExactMethod


@dataclass(frozen=True)
class TestConfig:
    """Level, permutation count, seed, and bandwidth policy of a test.

    The recommended operating regime is 1 / (P + 1) <= alpha; smaller alpha
    still runs but the threshold saturates at the largest replicate, which
    costs power (a warning is emitted).
    """

    alpha: float = 0.05
    n_permutations: int = 199
    seed: int = 0
    bandwidth: float | None = None
    bandwidth_subset: int = DEFAULT_BANDWIDTH_SUBSET
    keep_statistics: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be at least 1")
        if self.alpha * (self.n_permutations + 1) < 1.0:
            warnings.warn(
                f"alpha={self.alpha} is below 1/(P+1)={1 / (self.n_permutations + 1):.4g}; "
                "the test cannot reject except through tie randomization",
                stacklevel=2)


@dataclass(frozen=True)
class TestOutcome:
    """Result of one permutation test.

    Attributes:
        reject: Decision; always true when statistic > threshold.
        statistic: The observed (unpermuted) statistic.
        threshold: The threshold order statistic among all P + 1 values.
        threshold_index: Index of the threshold in sorted order.
        randomized: True only when the decision used tie randomization,
            i.e. statistic == threshold exactly.
        rejection_probability: The tie-branch rejection probability when
            randomized, else None.
        statistics: All P + 1 statistic values (entry 0 observed), or None
            when not retained.
        bandwidth: Kernel bandwidth the test ran with.
    """

    reject: bool
    statistic: float
    threshold: float
    threshold_index: int
    randomized: bool
    rejection_probability: float | None
    statistics: np.ndarray | None = None
    bandwidth: float | None = None

    def to_dict(self) -> dict:
        """JSON-friendly summary (drops the replicate vector)."""
        return {
            "reject": self.reject,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "threshold_index": self.threshold_index,
            "randomized": self.randomized,
            "rejection_probability": self.rejection_probability,
            "bandwidth": self.bandwidth,
        }


def quantile_index(alpha: float, n_permutations: int) -> int:
    """Index of the threshold order statistic: ceil((1 - alpha)(P + 1) - 1).

    Evaluated in exact rational arithmetic on the binary value of alpha so
    the ceiling never flips on float round-off; the result is clamped to
    [0, P].
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if n_permutations < 1:
        raise ValueError("n_permutations must be at least 1")
    exact = (1 - Fraction(alpha)) * (n_permutations + 1) - 1
    return min(max(math.ceil(exact), 0), n_permutations)


def decide(statistics, alpha: float, tie_break_draw: float) -> TestOutcome:
    """Apply the threshold-and-randomize decision rule to replicate values.

    Args:
        statistics: Vector of P + 1 values; entry 0 is the observed
            statistic, the rest are permuted replicates.
        alpha: Target level.
        tie_break_draw: A uniform [0, 1) variate consumed only when the
            observed statistic ties the threshold exactly (bitwise float
            equality; with continuous data ties essentially occur only in
            degenerate cases).

    Returns:
        TestOutcome without bandwidth information.
    """
    statistics = np.asarray(statistics, dtype=np.float64)
    if statistics.ndim != 1 or statistics.size == 0:
        raise ValueError("statistics must be a nonempty 1-d vector")
    if not np.isfinite(statistics).all():
        raise ValueError("statistics contain non-finite values")
    n_permutations = statistics.size - 1
    index = quantile_index(alpha, n_permutations) if n_permutations >= 1 else 0
    threshold = float(np.sort(statistics)[index])
    observed = float(statistics[0])

    randomized = False
    probability = None
    if observed > threshold:
        reject = True
    elif observed == threshold:
        m_greater = int(np.count_nonzero(statistics > threshold))
        m_equal = int(np.count_nonzero(statistics == threshold))
        probability = (alpha * (n_permutations + 1) - m_greater) / m_equal
        probability = min(max(probability, 0.0), 1.0)
        randomized = True
        reject = tie_break_draw < probability
    else:
        reject = False
    return TestOutcome(reject=reject, statistic=observed, threshold=threshold,
                       threshold_index=index, randomized=randomized,
                       rejection_probability=probability, statistics=statistics)


def _seed_int(seed_sequence: np.random.SeedSequence) -> int:
    return int(seed_sequence.generate_state(2, np.uint64)[0])


def _split_landmarks(pooled: PooledSample, method: NystromMethod,
                     kernel: GaussianKernel, regularization: float,
                     scores_seed: int, draw_seed: int) -> LandmarkSet:
    """Landmarks drawn separately from each sample, proportionally to size."""
    ell_x = int(round(method.n_landmarks * pooled.n_x / pooled.n))
    ell_x = min(max(ell_x, 0), method.n_landmarks)
    ell_y = method.n_landmarks - ell_x
    parts = []
    indices = []
    sampler = "uniform"
    sides = [(pooled.points[:pooled.n_x], ell_x, 0),
             (pooled.points[pooled.n_x:], ell_y, pooled.n_x)]
    for side_number, (side_points, ell_side, offset) in enumerate(sides):
        if ell_side == 0:
            continue
        scores = _side_scores(side_points, method, kernel, regularization,
                              scores_seed + side_number)
        drawn = sample_landmarks(side_points, ell_side, draw_seed + side_number,
                                 scores=scores)
        sampler = drawn.sampler
        parts.append(drawn.points)
        indices.append(drawn.indices + offset)
    return LandmarkSet(indices=np.concatenate(indices),
                       points=np.vstack(parts), sampler=sampler)


def _side_scores(side_points, method, kernel, regularization, seed):
    if method.sampler == "uniform":
        return None
    if method.sampler == "exact_krls":
        return exact_krls(kernel.gram(side_points, side_points), regularization)
    return approx_krls(side_points, kernel, regularization, seed,
                       budget=method.budget,
                       fallback_threshold=method.fallback_threshold)


def _nystrom_statistics(pooled, method, kernel, config, perm_seed,
                        scores_ss, draw_ss):
    regularization = (method.regularization
                      if method.regularization is not None
                      else default_regularization(pooled.n))
    scores_seed = _seed_int(scores_ss)
    draw_seed = _seed_int(draw_ss)
    if method.source == "split":
        landmarks = _split_landmarks(pooled, method, kernel, regularization,
                                     scores_seed, draw_seed)
    else:
        scores = _side_scores(pooled.points, method, kernel, regularization,
                              scores_seed)
        landmarks = sample_landmarks(pooled.points, method.n_landmarks,
                                     draw_seed, scores=scores)
    feature_map = build_nystrom(landmarks, kernel, method.rank_tolerance)
    return permuted_statistics(pooled, feature_map, config.n_permutations,
                               perm_seed)


def _exact_statistics(pooled, kernel, config, perm_seed):
    gram = kernel.gram(pooled.points, pooled.points)
    weights = permutation_weights(pooled, config.n_permutations, perm_seed)
    quad = np.einsum("pi,ij,pj->p", weights, gram, weights, optimize=True)
    return np.sqrt(np.maximum(quad, 0.0))


def run_test(x, y, config: TestConfig, method: MethodSpec) -> TestOutcome:
    """Run the full permutation test on two samples.

    Orchestrates bandwidth selection (median heuristic on the pooled data
    unless the config pins a bandwidth), landmark or frequency construction,
    the single-pass permuted statistics, and the decision rule.  Fully
    deterministic for a fixed config seed; the tie-break variate is drawn
    from its own stream whether or not a tie occurs, so outcomes are
    reproducible across code paths.
    """
    pooled = PooledSample.from_samples(x, y)
    root = np.random.SeedSequence(config.seed)
    bandwidth_ss, scores_ss, draw_ss, perm_ss, tie_ss = root.spawn(5)
    tie_break = float(np.random.default_rng(tie_ss).uniform())

    if config.bandwidth is not None:
        bandwidth = float(config.bandwidth)
    else:
        bandwidth = median_heuristic(pooled.points, config.bandwidth_subset,
                                     seed=_seed_int(bandwidth_ss))
    kernel = GaussianKernel(bandwidth)
    perm_seed = _seed_int(perm_ss)

    if isinstance(method, NystromMethod):
        statistics = _nystrom_statistics(pooled, method, kernel, config,
                                         perm_seed, scores_ss, draw_ss)
    elif isinstance(method, RffMethod):
        feature_map = build_rff(pooled.points.shape[1], method.n_features,
                                kernel, _seed_int(draw_ss))
        statistics = permuted_statistics(pooled, feature_map,
                                         config.n_permutations, perm_seed)
    elif isinstance(method, ExactMethod):
        statistics = _exact_statistics(pooled, kernel, config, perm_seed)
    else:
        raise TypeError(f"unknown method spec {method!r}")

    if statistics.max() <= DEGENERATE_TIE_TOLERANCE:
        statistics = np.zeros_like(statistics)
    outcome = decide(statistics, config.alpha, tie_break)
    return TestOutcome(reject=outcome.reject, statistic=outcome.statistic,
                       threshold=outcome.threshold,
                       threshold_index=outcome.threshold_index,
                       randomized=outcome.randomized,
                       rejection_probability=outcome.rejection_probability,
                       statistics=outcome.statistics if config.keep_statistics else None,
                       bandwidth=bandwidth)
