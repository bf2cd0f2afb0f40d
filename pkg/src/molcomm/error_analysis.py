"""Expected and simulated bit error probabilities.

The weighted-sum detector admits closed-form error probabilities: with equal
weights the sum of the per-sample Poisson counts is itself Poisson and the
exact (incomplete-gamma) tail applies; with unequal weights the sum is not
Poisson and a Gaussian with matched mean/variance and a continuity correction
stands in. Monte Carlo estimation runs seeded particle realizations, applies
any detector, and reports per-interval error frequencies with confidence
half-widths.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .channel import SignalModel, as_bit_array, p_obs
from .environment import EnvironmentSpec, TransmissionSpec
from .errors import DomainError, NumericsError
from .particles import RealizationPlan, SimConfig, draw_sequence, inject_noise, realization_seed_sequence

logger = logging.getLogger(__name__)

TAIL_METHODS = ("auto", "poisson", "gaussian")

METHOD_ANALYTIC_POISSON = "analytic_poisson"
METHOD_ANALYTIC_GAUSSIAN = "analytic_gaussian"
METHOD_MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class BerReport:
    """Per-interval and average bit error probability of one evaluation."""

    per_interval: np.ndarray
    average: float
    ensemble_size: int
    method: str
    ci95_half_width: float | None = None

    def __post_init__(self):
        p = np.asarray(self.per_interval, dtype=float)
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise DomainError("error probabilities must lie in [0, 1]")
        object.__setattr__(self, "per_interval", np.clip(p, 0.0, 1.0))


def _interference_means(model: SignalModel, sequences: np.ndarray) -> np.ndarray:
    """Expected total count per (sequence, interval, sample), full interference.

    Builds the per-lag response table once and applies it to every sequence by
    matrix product, which is just the superposition over earlier emissions.
    """
    tx = model.tx
    n_bits = sequences.shape[1]
    offsets = np.asarray(tx.sample_offsets_s, dtype=float)
    m = offsets.size
    lags = np.arange(n_bits)[:, None] * tx.bit_interval_s + offsets[None, :]
    table = tx.molecules_per_bit * np.asarray(p_obs(model, lags.ravel())).reshape(n_bits, m)

    # lag_mat[l, j, m] = response at interval j, sample m, to an emission in interval l
    lag_mat = np.zeros((n_bits, n_bits, m))
    for l in range(n_bits):
        lag_mat[l, l:, :] = table[: n_bits - l, :]
    means = np.tensordot(sequences.astype(float), lag_mat, axes=([1], [0]))

    if callable(tx.noise_mean):
        times = np.arange(n_bits)[:, None] * tx.bit_interval_s + offsets[None, :]
        means = means + np.asarray(tx.noise_mean(times), dtype=float)[None, :, :]
    else:
        means = means + float(tx.noise_mean)
    return means


def _poisson_sum_tail(total_mean, threshold_counts) -> np.ndarray:
    """Pr(Poisson(total_mean) < threshold_counts) via the incomplete-gamma identity."""
    mu = np.asarray(total_mean, dtype=float)
    q = np.ceil(np.asarray(threshold_counts, dtype=float))
    out = np.where(q > 0, special.gammaincc(np.maximum(q, 1.0), mu), 0.0)
    return out


def _gaussian_sum_tail(mean, variance, xi) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(variance, dtype=float)
    degenerate = var <= 0
    if np.any(degenerate):
        logger.warning("weighted-sum variance is zero somewhere; tail degenerates to a step")
    safe = np.where(degenerate, 1.0, var)
    z = (xi - 0.5 - mean) / np.sqrt(2.0 * safe)
    out = 0.5 * (1.0 + special.erf(z))
    return np.where(degenerate, (mean < xi).astype(float), out)


def _resolve_method(weights: np.ndarray, method: str) -> str:
    if method not in TAIL_METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {TAIL_METHODS}")
    equal = np.allclose(weights, weights[0])
    if method == "auto":
        return "poisson" if equal else "gaussian"
    if method == "poisson" and not equal:
        raise DomainError("a weighted sum with unequal weights is not Poisson; use the gaussian method")
    return method


def weighted_sum_tail(model: SignalModel, sequence, j: int, weights, xi: float,
                      method: str = "auto") -> float:
    """Pr(sum_m w_m * count_{j,m} < xi) for the given transmitted sequence.

    Equal weights use the exact Poisson tail of the summed mean; unequal
    weights use the Gaussian surrogate with mean sum(w*lam) and variance
    sum(w^2*lam), continuity-corrected.
    """
    bits = as_bit_array(sequence)
    if not 0 <= j < bits.size:
        raise DomainError(f"interval index {j} out of range for a {bits.size}-bit sequence")
    w = np.asarray(weights, dtype=float).ravel()
    chosen = _resolve_method(w, method)
    lam = _interference_means(model, bits[None, :])[0, j, :]
    if lam.size != w.size:
        raise DomainError("weights length does not match the sampling schedule")
    if chosen == "poisson":
        return float(_poisson_sum_tail(lam.sum(), xi / w[0]))
    return float(_gaussian_sum_tail(lam @ w, lam @ w**2, xi))


def analytic_bit_error(model: SignalModel, sequence, j: int, weights, xi: float,
                       method: str = "auto") -> float:
    """Expected error probability of bit j under the weighted-sum rule."""
    bits = as_bit_array(sequence)
    tail = weighted_sum_tail(model, bits, j, weights, xi, method)
    return tail if bits[j] == 1 else 1.0 - tail


def error_report(model: SignalModel, sequence_ensemble, weights, xi: float,
                 method: str = "auto") -> BerReport:
    """Analytic per-interval and average error over an ensemble of sequences."""
    seqs = np.asarray(sequence_ensemble, dtype=np.int64)
    if seqs.ndim != 2 or seqs.shape[0] == 0:
        raise DomainError("sequence ensemble must be a non-empty (S, B) array")
    w = np.asarray(weights, dtype=float).ravel()
    chosen = _resolve_method(w, method)
    lam = _interference_means(model, seqs)
    if chosen == "poisson":
        tails = _poisson_sum_tail(lam.sum(axis=2), xi / w[0])
        tag = METHOD_ANALYTIC_POISSON
    else:
        tails = _gaussian_sum_tail(lam @ w, lam @ (w**2), xi)
        tag = METHOD_ANALYTIC_GAUSSIAN
    errors = np.where(seqs == 1, tails, 1.0 - tails)
    return BerReport(
        per_interval=errors.mean(axis=0),
        average=float(errors.mean()),
        ensemble_size=seqs.shape[0],
        method=tag,
    )


def average_error_probability(model: SignalModel, sequence_ensemble, weights, xi: float,
                              method: str = "auto") -> float:
    """Ensemble- and interval-averaged expected error of a weighted-sum detector."""
    return error_report(model, sequence_ensemble, weights, xi, method).average


def sequence_ensemble(tx: TransmissionSpec, size: int, seed: int) -> np.ndarray:
    """Random (size, B) ensemble of bit sequences drawn per-bit with p_one."""
    if size < 1:
        raise DomainError("ensemble size must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), 0x656E73)))
    return (rng.random((size, tx.sequence_length)) < tx.p_one).astype(np.int64)


def _as_detector(detector):
    if hasattr(detector, "detect"):
        return lambda matrix, index: detector.detect(matrix)
    if callable(detector):
        return detector
    raise DomainError("detector must expose .detect(matrix) or be callable(matrix, index)")


def monte_carlo_ber(env: EnvironmentSpec, tx: TransmissionSpec, config: SimConfig,
                    detector, progress: bool = False) -> BerReport:
    """Simulated bit error rate of a detector over seeded particle realizations.

    Draws a fresh sequence per realization, simulates the channel, applies any
    configured additive noise, and scores the detector's decisions. The 95%
    half-width uses the normal approximation on the pooled bit count.
    """
    detect = _as_detector(detector)
    plan = RealizationPlan(env, tx, config)
    n_real = config.realization_count
    errors_per_interval = np.zeros(tx.sequence_length)
    iterator = range(n_real)
    if progress:
        from tqdm import tqdm
        iterator = tqdm(iterator, desc="monte-carlo ber", unit="real", disable=None)
    for i in iterator:
        try:
            bits = draw_sequence(tx, config.master_seed, i)
            matrix = plan.run(bits, i)
            if callable(tx.noise_mean) or tx.noise_mean > 0:
                noise_seed = int(realization_seed_sequence(config.master_seed, i).generate_state(3, np.uint64)[2])
                matrix = inject_noise(matrix, tx.noise_mean, noise_seed, times_s=tx.sample_times())
            decisions = np.asarray(detect(matrix, i), dtype=np.int64)
            errors_per_interval += decisions != bits
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise
            raise NumericsError(f"realization {i} failed: {exc}") from exc
    per_interval = errors_per_interval / n_real
    total_bits = n_real * tx.sequence_length
    p = float(errors_per_interval.sum() / total_bits)
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 1e-300) / total_bits)
    return BerReport(
        per_interval=per_interval,
        average=p,
        ensemble_size=n_real,
        method=METHOD_MONTE_CARLO,
        ci95_half_width=half,
    )
