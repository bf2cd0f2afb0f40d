"""Closed-form expected receiver signal and Poisson observation statistics.

The expected count inside the receiver due to one impulsive emission is the
free-diffusion Green's function evaluated at the flow-shifted distance, scaled
by the receiver volume (uniform concentration assumption: the concentration at
the sphere center stands in for the whole sphere). Enzymatic degradation
enters as a multiplicative exp(-k*C_Etot*t). Counts at any instant are treated
as Poisson with that expected value; intersymbol interference is the plain sum
over all earlier emissions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .environment import (
    NO_DEGRADATION,
    STRICT_BOUND,
    APPROXIMATION,
    EnvironmentSpec,
    TransmissionSpec,
    effective_distance,
)
from .errors import DomainError

POISSON_CDF_METHODS = ("direct", "gamma", "gaussian")


def as_bit_array(bits) -> np.ndarray:
    """Validate and normalize a bit sequence to an int array of 0/1."""
    arr = np.asarray(bits, dtype=np.int64).ravel()
    if arr.size < 1:
        raise DomainError("bit sequence must contain at least one bit")
    if not np.all((arr == 0) | (arr == 1)):
        raise DomainError("bit sequence entries must be 0 or 1")
    return arr


@dataclass(frozen=True)
class SignalModel:
    """Environment + transmission pair with a chosen degradation handling.

    ``degradation_mode`` selects the effective first-order rate used in the
    channel response: ``strict_bound`` (upper bound on degradation),
    ``approximation`` (usually tighter), or ``none`` to force the
    enzyme-free formulas regardless of the configured reactions.
    """

    env: EnvironmentSpec
    tx: TransmissionSpec
    degradation_mode: str = NO_DEGRADATION

    def __post_init__(self):
        if self.degradation_mode not in (NO_DEGRADATION, STRICT_BOUND, APPROXIMATION):
            raise DomainError(f"unknown degradation_mode {self.degradation_mode!r}")

    @property
    def decay_rate(self) -> float:
        """First-order degradation rate k*C_Etot in s^-1 (0 without enzymes)."""
        return self.env.decay_rate(self.degradation_mode)


def point_concentration(model: SignalModel, distance_m, t_s):
    """Expected point concentration (molecule/m^3) of one emission at lag t.

    N_em / (4*pi*D*t)^(3/2) * exp(-k*C_Etot*t - d^2 / (4*D*t)). Treated as an
    equality although it is a lower bound once enzymes are present.
    """
    t = np.asarray(t_s, dtype=float)
    d = np.asarray(distance_m, dtype=float)
    if np.any(t <= 0):
        raise DomainError("time must be positive")
    if np.any(d < 0):
        raise DomainError("distance must be non-negative")
    diff = model.env.diffusion_a
    n_em = model.tx.molecules_per_bit
    out = (n_em / (4.0 * math.pi * diff * t) ** 1.5
           * np.exp(-model.decay_rate * t - d**2 / (4.0 * diff * t)))
    return out if out.ndim else float(out)


def p_obs(model: SignalModel, t_s):
    """Probability that a single emitted molecule is inside the receiver at lag t."""
    t = np.asarray(t_s, dtype=float)
    if np.any(t <= 0):
        raise DomainError("time must be positive")
    d = effective_distance(model.env, t)
    conc = point_concentration(model, d, t)
    out = model.env.receiver_volume_m3 * np.asarray(conc) / model.tx.molecules_per_bit
    return out if out.ndim else float(out)


def peak_single_emission(model: SignalModel) -> tuple[float, float]:
    """(time, expected count) at the maximum of the single-emission response.

    With no flow and no degradation the maximizer is x0^2/(6*D) exactly; that
    point seeds a golden-section refinement so flow/enzyme cases work too.
    """
    x0 = model.env.receiver_distance_m
    t0 = x0**2 / (6.0 * model.env.diffusion_a)
    lo, hi = t0 / 50.0, t0 * 50.0
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi

    def value(t):
        return model.tx.molecules_per_bit * p_obs(model, t)

    c = b - golden * (b - a)
    d = a + golden * (b - a)
    for _ in range(200):
        if value(c) > value(d):
            b = d
        else:
            a = c
        c = b - golden * (b - a)
        d = a + golden * (b - a)
        if b - a < 1e-12 * t0:
            break
    t_peak = 0.5 * (a + b)
    return t_peak, value(t_peak)


def expected_tx_signal(model: SignalModel, bits, t_s):
    """Expected receiver count from the transmitter at time t for a bit sequence.

    Sums N_em * p_obs(t - (j-1)*T) over every interval j that has started
    before t; no truncation of the interference tail. Accepts scalar or
    array t (strictly positive).
    """
    w = as_bit_array(bits)
    t = np.asarray(t_s, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t <= 0):
        raise DomainError("time must be positive")
    t_int = model.tx.bit_interval_s
    starts = np.arange(w.size) * t_int
    lags = t[None, :] - starts[:, None]              # (B, n_times)
    active = (lags > 0) & (w[:, None] > 0)
    total = np.zeros_like(t)
    if np.any(active):
        vals = np.zeros_like(lags)
        vals[active] = p_obs(model, lags[active])
        total = model.tx.molecules_per_bit * vals.sum(axis=0)
    return float(total[0]) if scalar else total


def expected_total_signal(model: SignalModel, bits, t_s):
    """Transmitter contribution plus the external-noise mean."""
    sig = expected_tx_signal(model, bits, t_s)
    noise = model.tx.noise_mean
    if callable(noise):
        noise = np.asarray(noise(np.asarray(t_s, dtype=float)))
    return sig + noise


def poisson_pmf(count, mean):
    """Poisson probability mass, evaluated in log space for stability."""
    k = np.asarray(count)
    mu = np.asarray(mean, dtype=float)
    if np.any(mu < 0):
        raise DomainError("mean must be non-negative")
    if np.any(k < 0) or not np.issubdtype(k.dtype, np.integer):
        k = np.asarray(count, dtype=np.int64)
        if np.any(k < 0):
            raise DomainError("count must be a non-negative integer")
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = special.xlogy(k, mu) - mu - special.gammaln(k + 1.0)
    out = np.exp(logp)
    # xlogy(0, 0) = 0 gives the right limit pmf(0; 0) = 1
    return out if out.ndim else float(out)


def poisson_cdf(count_exclusive, mean, method: str = "direct"):
    """Pr(X < count_exclusive) for X ~ Poisson(mean).

    ``direct`` sums the mass function; ``gamma`` uses the regularized upper
    incomplete gamma identity Pr(X < n) = Q(n, mean); ``gaussian`` applies the
    normal approximation with a -0.5 continuity correction.
    """
    if method not in POISSON_CDF_METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {POISSON_CDF_METHODS}")
    n = np.asarray(count_exclusive, dtype=np.int64)
    mu = np.asarray(mean, dtype=float)
    if np.any(n < 0):
        raise DomainError("count must be non-negative")
    if np.any(mu < 0):
        raise DomainError("mean must be non-negative")

    if method == "direct":
        def one(ni, mui):
            if ni == 0:
                return 0.0
            ks = np.arange(ni)
            return float(np.sum(poisson_pmf(ks, mui)))
        if n.ndim == 0 and mu.ndim == 0:
            return one(int(n), float(mu))
        return np.vectorize(one)(n, mu)

    if method == "gamma":
        out = np.where(n > 0, special.gammaincc(np.maximum(n, 1), mu), 0.0)
        return out if out.ndim else float(out)

    # gaussian with continuity correction; a zero-mean Poisson is surely 0
    out = np.where(
        mu > 0,
        0.5 * (1.0 + special.erf((n - 0.5 - mu) / np.sqrt(2.0 * np.where(mu > 0, mu, 1.0)))),
        (n > 0).astype(float),
    )
    return out if out.ndim else float(out)
