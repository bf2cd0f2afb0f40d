"""Receiver detectors: weighted-sum family and maximum-likelihood sequence detection.

Weighted-sum detectors compare a weighted count sum per bit interval against a
threshold; matched-filter weights equal the expected current-interval signal
at each sampling time. The sequence detector runs a trellis over candidate
bit windows of configurable width, scoring Poisson log-likelihoods with the
full interference history of each surviving path, so widening the window to
the whole sequence reproduces exhaustive maximum-likelihood detection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SignalModel, p_obs
from .errors import DomainError

LOG_MEAN_FLOOR = 1e-300  # keeps a zero-mean path finite; such paths lose, not crash

THRESHOLD_CRITERIA = ("analytic", "empirical")


@dataclass(frozen=True)
class WeightedSumSpec:
    """Weights (length M) and decision threshold of a weighted-sum detector."""

    weights: np.ndarray
    threshold: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size < 1 or np.any(w < 0) or not np.any(w > 0):
            raise DomainError("weights must be non-negative with at least one positive entry")
        if self.threshold <= 0:
            raise DomainError("threshold must be positive")
        object.__setattr__(self, "weights", w)

    def decide(self, counts) -> int:
        return weighted_sum_decide(self, counts)

    def detect(self, matrix) -> np.ndarray:
        """Per-interval decisions for a whole observation matrix (B, M)."""
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != self.weights.size:
            raise DomainError("observation matrix width does not match the weights")
        return (m @ self.weights >= self.threshold).astype(np.int64)


@dataclass(frozen=True)
class ViterbiSpec:
    """Trellis width (explicit memory, in bit intervals) and the signal model."""

    memory: int
    model: SignalModel

    def __post_init__(self):
        if self.memory < 1:
            raise DomainError("memory must be at least 1")

    def detect(self, matrix) -> np.ndarray:
        return ml_sequence_detect(matrix, self)


def matched_filter_weights(model: SignalModel) -> np.ndarray:
    """Sample weights equal to the expected current-interval transmitter signal.

    Uses the emission of the current interval only, so the weights are
    identical for every interval regardless of the transmitted sequence.
    """
    offsets = np.asarray(model.tx.sample_offsets_s, dtype=float)
    return model.tx.molecules_per_bit * np.asarray(p_obs(model, offsets), dtype=float)


def weighted_sum_decide(spec: WeightedSumSpec, counts) -> int:
    """1 when the weighted count sum reaches the threshold, else 0."""
    c = np.asarray(counts, dtype=float).ravel()
    if c.size != spec.weights.size:
        raise DomainError(f"expected {spec.weights.size} counts, got {c.size}")
    return int(float(c @ spec.weights) >= spec.threshold)


def _mean_tables(model: SignalModel, n_intervals: int):
    """Per-lag expected single-emission counts and the noise means.

    ``table[lag, m]`` is the expected transmitter count at offset g(m) of an
    interval ``lag`` intervals after an emission. Noise is returned as an
    (n_intervals, M) array.
    """
    tx = model.tx
    offsets = np.asarray(tx.sample_offsets_s, dtype=float)
    lags = np.arange(n_intervals)[:, None] * tx.bit_interval_s + offsets[None, :]
    table = tx.molecules_per_bit * np.asarray(p_obs(model, lags.ravel())).reshape(lags.shape)
    if callable(tx.noise_mean):
        times = np.arange(n_intervals)[:, None] * tx.bit_interval_s + offsets[None, :]
        noise = np.asarray(tx.noise_mean(times), dtype=float)
    else:
        noise = np.full((n_intervals, offsets.size), float(tx.noise_mean))
    return table, noise


def ml_sequence_detect(observations, spec: ViterbiSpec) -> np.ndarray:
    """Most likely transmitted sequence given all observations.

    Trellis states enumerate the last ``memory`` candidate bits; every state
    keeps its full surviving prefix so interference older than the window
    still enters the per-sample Poisson means exactly. Ties prefer the path
    whose differing bit is 0 (and the lowest state index at readout), which
    makes decisions deterministic.
    """
    obs = np.asarray(observations, dtype=np.int64)
    if obs.ndim != 2:
        raise DomainError("observations must be a (B, M) matrix")
    n_bits, n_samples = obs.shape
    model = spec.model
    if n_samples != model.tx.samples_per_interval:
        raise DomainError("observation matrix width does not match the sampling schedule")
    memory = min(spec.memory, n_bits)

    table, noise = _mean_tables(model, n_bits)

    def extend_loglik(prev_ll, bits_so_far, j):
        lam = noise[j] + bits_so_far[::-1] @ table[: bits_so_far.size]
        lam = np.maximum(lam, LOG_MEAN_FLOOR)
        return prev_ll + float(obs[j] @ np.log(lam) - lam.sum())

    # survivors[state] = (cumulative log likelihood, full bit history array)
    survivors = {0: (0.0, np.zeros(0, dtype=np.int64))}
    for j in range(n_bits):
        level = min(j + 1, memory)
        new_survivors = {}
        for state in range(2**level):
            bit = state & 1
            if j < memory:
                preds = [state >> 1]
            else:
                preds = [state >> 1, (state >> 1) | (1 << (memory - 1))]
            best = None
            for pred in preds:
                if pred not in survivors:
                    continue
                prev_ll, prev_bits = survivors[pred]
                bits = np.append(prev_bits, bit)
                ll = extend_loglik(prev_ll, bits, j)
                # strict > keeps the first (0-valued leaving bit) candidate on ties
                if best is None or ll > best[0]:
                    best = (ll, bits)
            new_survivors[state] = best
        survivors = new_survivors

    best_state = max(survivors, key=lambda s: (survivors[s][0], -s))
    return survivors[best_state][1]


def exhaustive_ml_detect(observations, model: SignalModel) -> np.ndarray:
    """Brute-force argmax over all 2^B sequences; oracle for the trellis detector."""
    obs = np.asarray(observations, dtype=np.int64)
    n_bits, _ = obs.shape
    if n_bits > 20:
        raise DomainError("exhaustive search is limited to short sequences")
    table, noise = _mean_tables(model, n_bits)
    best = None
    for code in range(2**n_bits):
        bits = np.array([(code >> k) & 1 for k in range(n_bits)], dtype=np.int64)
        ll = 0.0
        for j in range(n_bits):
            lam = noise[j] + bits[: j + 1][::-1] @ table[: j + 1]
            lam = np.maximum(lam, LOG_MEAN_FLOOR)
            ll += float(obs[j] @ np.log(lam) - lam.sum())
        if best is None or ll > best[0] + 1e-12:
            best = (ll, bits)
    return best[1]


def threshold_grid_limit(model: SignalModel, weights) -> int:
    """Upper end of the candidate threshold grid: mean + 6 sigma under all ones."""
    w = np.asarray(weights, dtype=float)
    n_bits = model.tx.sequence_length
    table, noise = _mean_tables(model, n_bits)
    lam = noise[-1] + table.sum(axis=0)  # worst-case interference: every interval a one
    mu = float(lam @ w)
    sigma = math.sqrt(float(lam @ (w**2)))
    return max(int(math.ceil(mu + 6.0 * sigma)), 2)


def optimize_threshold(model: SignalModel, weights, sequence_ensemble=None,
                       criterion: str = "analytic", samples=None) -> float:
    """Decision threshold minimizing the average error probability.

    ``analytic`` scores integer candidate thresholds with the expected error
    over the given sequence ensemble (coarse grid first, then a local descent
    that certifies err(xi) <= err(xi +/- 1)). ``empirical`` takes observed
    ``samples = (weighted_sums, true_bits)`` and scans every integer candidate
    exactly. Ties resolve toward the smaller threshold.
    """
    from . import error_analysis  # local import; error_analysis has no detector needs

    w = np.asarray(weights, dtype=float)
    if criterion not in THRESHOLD_CRITERIA:
        raise DomainError(f"unknown criterion {criterion!r}; expected one of {THRESHOLD_CRITERIA}")

    if criterion == "empirical":
        if samples is None:
            raise DomainError("empirical threshold search needs samples=(sums, bits)")
        sums, bits = samples
        sums = np.asarray(sums, dtype=float)
        bits = np.asarray(bits, dtype=np.int64)
        if sums.size == 0 or sums.size != bits.size:
            raise DomainError("sums and bits must be equal-length and non-empty")
        ones = np.sort(sums[bits == 1])
        zeros = np.sort(sums[bits == 0])
        grid = np.arange(1, int(math.ceil(sums.max())) + 2)
        missed = np.searchsorted(ones, grid, side="left")          # true 1, sum < xi
        false = zeros.size - np.searchsorted(zeros, grid, side="left")  # true 0, sum >= xi
        errors = missed + false
        return float(grid[int(np.argmin(errors))])

    if sequence_ensemble is None or len(sequence_ensemble) == 0:
        raise DomainError("analytic threshold search needs a non-empty sequence ensemble")
    seqs = np.asarray(sequence_ensemble, dtype=np.int64)

    def err(xi):
        return error_analysis.average_error_probability(model, seqs, w, float(xi))

    lo, hi = 1, threshold_grid_limit(model, w)
    # narrow the integer range around the coarse minimum, then scan it densely
    while hi - lo + 1 > 64:
        grid = np.unique(np.linspace(lo, hi, num=64).astype(np.int64))
        values = np.array([err(x) for x in grid])
        idx = int(np.argmin(values))
        lo = int(grid[max(idx - 1, 0)])
        hi = int(grid[min(idx + 1, grid.size - 1)])
    grid = np.arange(lo, hi + 1)
    values = np.array([err(x) for x in grid])
    return float(grid[int(np.argmin(values))])
