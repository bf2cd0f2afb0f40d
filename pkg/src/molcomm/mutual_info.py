"""Mutual information between two receiver observations of one emission.

A molecule seen inside the receiver is assumed uniformly distributed over the
sphere; diffusing it forward a lag gives the probability it is still inside
(``p_stay``, in closed form, with an adaptive-quadrature twin as the
independent oracle). Combining departures (binomial) with fresh arrivals
(Poisson) yields the joint distribution of two counts, from which the mutual
information follows. An empirical plug-in estimator over simulated count
pairs mirrors the analytic path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .channel import SignalModel, p_obs, poisson_pmf
from .environment import NO_DEGRADATION, EnvironmentSpec
from .errors import ConfigurationError, DomainError, NumericsError

ARRIVAL_MODELS = ("poisson", "binomial")


@dataclass(frozen=True)
class SamplePairSpec:
    """Two observation times of a single emission and the summation budget.

    ``molecule_count`` is the number of molecules released at t = 0.
    ``truncation_mass`` is the minimum probability mass each count support
    must cover when the joint distribution is built.
    """

    t1_s: float
    t2_s: float
    molecule_count: int
    truncation_mass: float = 1.0 - 1e-9

    def __post_init__(self):
        if not 0.0 < self.t1_s < self.t2_s:
            raise DomainError("need 0 < t1 < t2")
        if self.molecule_count < 1:
            raise DomainError("molecule_count must be at least 1")
        if not 0.0 < self.truncation_mass < 1.0:
            raise DomainError("truncation_mass must lie in (0, 1)")

    @property
    def lag_s(self) -> float:
        return self.t2_s - self.t1_s


@dataclass(frozen=True)
class CountDistribution:
    """Discrete probability mass over molecule counts starting at ``offset``."""

    offset: int
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if np.any(m < -1e-15):
            raise DomainError("masses must be non-negative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise DomainError(f"masses must sum to 1 within 1e-9, got {m.sum()!r}")
        object.__setattr__(self, "masses", m)

    @property
    def support(self) -> np.ndarray:
        return self.offset + np.arange(self.masses.size)


@dataclass(frozen=True)
class JointCountDistribution:
    """Joint mass over a pair of counts, row index = first count."""

    s1_values: np.ndarray
    s2_values: np.ndarray
    masses: np.ndarray  # shape (len(s1_values), len(s2_values))


def residual_concentration(env: EnvironmentSpec, r_m, t_o_s,
                           degradation_mode: str = NO_DEGRADATION):
    """Point concentration at radius r a lag t_o after a uniform in-sphere start.

    Green's-function solution for one molecule initially uniform inside the
    receiver sphere, no flow. Multiplied by the first-order survival factor
    when a degradation mode is selected. Accepts scalar or array r.
    """
    t_o = float(t_o_s)
    if t_o <= 0:
        raise DomainError("lag must be positive")
    r = np.asarray(r_m, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    rr = env.receiver_radius_m
    diff = env.diffusion_a
    s = 2.0 * math.sqrt(diff * t_o)

    erf_part = special.erf((rr - r) / s) + special.erf((rr + r) / s)
    out = 3.0 / (8.0 * math.pi * rr**3) * erf_part

    # (exp(-((rr+r)/s)^2) - exp(-((rr-r)/s)^2)) / r cancels badly for small r;
    # switch to its analytic limit there.
    arg = 2.0 * rr * r / s**2
    small = arg < 1e-4
    coef = 3.0 / (4.0 * math.pi * rr**3) * math.sqrt(diff * t_o / math.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        gauss_part = np.where(
            small,
            -coef * np.exp(-(rr**2 + r**2) / s**2) * (2.0 * rr / s**2) * 2.0,
            coef * (np.exp(-((rr + r) / s) ** 2) - np.exp(-((rr - r) / s) ** 2)) / np.where(r > 0, r, 1.0),
        )
    out = out + gauss_part

    rate = env.decay_rate(degradation_mode)
    if rate > 0:
        out = out * math.exp(-rate * t_o)
    return float(out[0]) if scalar else out


def p_stay(env: EnvironmentSpec, t_o_s: float, degradation_mode: str = NO_DEGRADATION) -> float:
    """Probability that a molecule inside the receiver is still inside after t_o.

    Closed form of the radial integral of ``residual_concentration`` over the
    sphere; survival factor applied when degradation is enabled.
    """
    t_o = float(t_o_s)
    if t_o <= 0:
        raise DomainError("lag must be positive")
    rr = env.receiver_radius_m
    dt = env.diffusion_a * t_o
    ratio = 2.0 * dt / rr**2
    value = special.erf(rr / math.sqrt(dt)) + (1.0 / rr) * math.sqrt(dt / math.pi) * (
        (1.0 - ratio) * math.exp(-(rr**2) / dt) + ratio - 3.0
    )
    rate = env.decay_rate(degradation_mode)
    if rate > 0:
        value *= math.exp(-rate * t_o)
    return value


def p_stay_quadrature(env: EnvironmentSpec, t_o_s: float,
                      degradation_mode: str = NO_DEGRADATION) -> float:
    """Adaptive-quadrature evaluation of the stay probability.

    Integrates 4*pi*r^2 * residual_concentration over the sphere; serves as
    the independent oracle for the closed form, so it must be tighter than
    the 1e-9 agreement it is used to certify.
    """
    t_o = float(t_o_s)
    if t_o <= 0:
        raise DomainError("lag must be positive")
    rr = env.receiver_radius_m

    def integrand(r):
        return 4.0 * math.pi * r**2 * residual_concentration(env, r, t_o)

    # the integrand develops a boundary layer of width ~sqrt(D*t_o) at r = rr
    width = 2.0 * math.sqrt(env.diffusion_a * t_o)
    pts = [p for p in (rr - 5 * width, rr - width) if 0.0 < p < rr]
    value, abserr = integrate.quad(
        integrand, 0.0, rr, epsabs=1e-13, epsrel=1e-12, limit=400,
        points=pts or None,
    )
    if abserr > 1e-10:
        raise NumericsError(
            f"stay-probability quadrature did not converge: estimate {value!r}, "
            f"reported error {abserr!r} at lag {t_o!r}s"
        )
    rate = env.decay_rate(degradation_mode)
    if rate > 0:
        value *= math.exp(-rate * t_o)
    return value


def p_leave(env: EnvironmentSpec, t_o_s: float, degradation_mode: str = NO_DEGRADATION) -> float:
    """Probability that a molecule inside the receiver is outside (and intact) after t_o."""
    rate = env.decay_rate(degradation_mode)
    return math.exp(-rate * float(t_o_s)) - p_stay(env, t_o_s, degradation_mode)


def p_arrive(model: SignalModel, t1_s: float, t2_s: float) -> float:
    """Probability that a molecule not inside at t1 is inside the receiver at t2.

    p_obs(t2) - p_obs(t1) * p_stay(t2 - t1). A tiny negative from floating
    point is clamped; anything beyond -1e-12 means the model components are
    inconsistent and raises.
    """
    if not 0.0 < t1_s < t2_s:
        raise DomainError("need 0 < t1 < t2")
    value = p_obs(model, t2_s) - p_obs(model, t1_s) * p_stay(
        model.env, t2_s - t1_s, model.degradation_mode
    )
    if value < -1e-12:
        raise NumericsError(
            f"arrival probability {value!r} is negative beyond tolerance; "
            "the stay/observation model is inconsistent at these times"
        )
    return max(value, 0.0)


def _require_no_flow(model: SignalModel):
    if any(v != 0.0 for v in model.env.flow_m_s):
        raise ConfigurationError(
            [("environment.flow_m_s",
              "two-sample mutual information is only defined for zero flow; "
              "disable flow or drop the MI analysis for this environment")]
        )


def _arrival_distribution(spec: SamplePairSpec, model: SignalModel, s1: int,
                          arrival_model: str) -> np.ndarray:
    """Mass function of the number of fresh arrivals between t1 and t2."""
    arr_p = p_arrive(model, spec.t1_s, spec.t2_s)
    if arrival_model == "poisson":
        lam = spec.molecule_count * arr_p
        hi = int(stats.poisson.ppf(spec.truncation_mass, lam)) if lam > 0 else 0
        return poisson_pmf(np.arange(hi + 1), lam)
    if arrival_model == "binomial":
        n_out = max(spec.molecule_count - s1, 0)
        return stats.binom.pmf(np.arange(n_out + 1), n_out, arr_p)
    raise DomainError(f"unknown arrival model {arrival_model!r}; expected one of {ARRIVAL_MODELS}")


def conditional_count_dist(spec: SamplePairSpec, model: SignalModel, s1: int,
                           arrival_model: str = "poisson") -> CountDistribution:
    """Distribution of the second count given ``s1`` molecules seen at t1.

    Molecules present at t1 depart independently with probability p_leave;
    fresh arrivals are Poisson with mean N * p_arrive (or exactly binomial
    over the N - s1 outside molecules with ``arrival_model='binomial'``,
    useful when N is small).
    """
    if s1 < 0:
        raise DomainError("s1 must be non-negative")
    _require_no_flow(model)
    leave = p_leave(model.env, spec.lag_s, model.degradation_mode)
    stay_counts = np.arange(s1 + 1)
    stay_pmf = stats.binom.pmf(stay_counts, s1, 1.0 - leave)
    arrive_pmf = _arrival_distribution(spec, model, s1, arrival_model)
    masses = np.convolve(stay_pmf, arrive_pmf)
    return CountDistribution(offset=0, masses=masses)


def joint_count_dist(spec: SamplePairSpec, model: SignalModel,
                     arrival_model: str = "poisson") -> JointCountDistribution:
    """Joint distribution of the two counts over truncated supports.

    Rows follow the Poisson marginal of the first count; each row is the
    conditional distribution scaled by that marginal mass. Supports cover at
    least ``truncation_mass`` of each marginal.
    """
    _require_no_flow(model)
    lam1 = spec.molecule_count * p_obs(model, spec.t1_s)
    lam2 = spec.molecule_count * p_obs(model, spec.t2_s)
    s1_hi = int(stats.poisson.ppf(spec.truncation_mass, lam1)) if lam1 > 0 else 0
    s2_hi = int(stats.poisson.ppf(spec.truncation_mass, lam2)) if lam2 > 0 else 0

    rows = []
    width = s2_hi + 1
    marg1 = poisson_pmf(np.arange(s1_hi + 1), lam1)
    for s1 in range(s1_hi + 1):
        cond = conditional_count_dist(spec, model, s1, arrival_model).masses
        width = max(width, cond.size)
        rows.append(cond)
    joint = np.zeros((s1_hi + 1, width))
    for s1, cond in enumerate(rows):
        joint[s1, : cond.size] = marg1[s1] * cond
    return JointCountDistribution(
        s1_values=np.arange(s1_hi + 1),
        s2_values=np.arange(width),
        masses=joint,
    )


def mutual_information(spec: SamplePairSpec, model: SignalModel,
                       arrival_model: str = "poisson") -> float:
    """Mutual information (bits) between the two counts of a sample pair.

    Sums joint * log2(joint / (marginal1 * marginal2)) over the truncated
    supports, with Poisson marginals at both times; zero-mass cells
    contribute nothing.
    """
    joint = joint_count_dist(spec, model, arrival_model)
    lam1 = spec.molecule_count * p_obs(model, spec.t1_s)
    lam2 = spec.molecule_count * p_obs(model, spec.t2_s)
    m1 = poisson_pmf(joint.s1_values, lam1)
    m2 = poisson_pmf(joint.s2_values, lam2)
    prod = np.outer(m1, m2)
    mask = (joint.masses > 0) & (prod > 0)
    mi = float(np.sum(joint.masses[mask] * np.log2(joint.masses[mask] / prod[mask])))
    if mi < -1e-6:
        raise NumericsError(f"mutual information {mi!r} is negative beyond truncation error")
    return max(mi, 0.0)


def empirical_mutual_information(pairs) -> float:
    """Plug-in mutual information (bits) from observed (s1, s2) count pairs."""
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise DomainError("need at least two (s1, s2) pairs")
    s1 = arr[:, 0]
    s2 = arr[:, 1]
    n = arr.shape[0]
    joint = np.zeros((s1.max() + 1, s2.max() + 1))
    np.add.at(joint, (s1, s2), 1.0)
    joint /= n
    m1 = joint.sum(axis=1)
    m2 = joint.sum(axis=0)
    prod = np.outer(m1, m2)
    mask = joint > 0
    return float(np.sum(joint[mask] * np.log2(joint[mask] / prod[mask])))
