"""Particle-based stochastic simulator of the diffusive channel.

Free molecules random-walk with drift; observations count how many sit inside
the receiver sphere at the scheduled sampling times. Enzymatic degradation is
available in two flavors: ``first_order`` (each information molecule dies at
rate k*C_Etot, the lumped model the analytics assume) and ``explicit``
(individual enzyme molecules with binding, unbinding, and conversion).
External noise is added to finished observation matrices, never simulated
spatially.

For ``off``/``first_order`` modes the runner leaps exactly between scheduled
events (see _kernels); the ``explicit`` mode steps at the configured time
resolution because binding checks need it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import spatial

from . import _kernels
from .environment import (
    APPROXIMATION,
    EnvironmentSpec,
    TransmissionSpec,
)
from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

ENZYME_MODES = ("off", "first_order", "explicit")


@dataclass(frozen=True)
class SimConfig:
    """Stepping resolution, seeding, and the enzyme handling of a run."""

    time_step_s: float
    master_seed: int
    realization_count: int = 1
    enzyme_mode: str = "off"
    degradation_mode: str = APPROXIMATION

    def __post_init__(self):
        if self.time_step_s <= 0:
            raise DomainError("time_step_s must be positive")
        if self.realization_count < 1:
            raise DomainError("realization_count must be at least 1")
        if self.enzyme_mode not in ENZYME_MODES:
            raise DomainError(f"unknown enzyme_mode {self.enzyme_mode!r}; expected one of {ENZYME_MODES}")


@dataclass
class SimState:
    """Mutable per-realization particle state (positions in meters)."""

    a_pos: np.ndarray            # free information molecules, shape (n, 3)
    e_pos: np.ndarray            # free enzymes
    ea_pos: np.ndarray           # bound complexes
    time_s: float
    rng: np.random.Generator
    emitted: int = 0
    degraded: int = 0

    @classmethod
    def empty(cls, rng: np.random.Generator) -> "SimState":
        z = np.zeros((0, 3))
        return cls(a_pos=z.copy(), e_pos=z.copy(), ea_pos=z.copy(), time_s=0.0, rng=rng)

    def emit(self, count: int):
        """Release ``count`` information molecules at the transmitter (origin)."""
        self.a_pos = np.vstack([self.a_pos, np.zeros((count, 3))])
        self.emitted += count

    def molecule_balance(self) -> tuple[int, int]:
        """(accounted, emitted) molecule totals; equal when conservation holds."""
        return self.a_pos.shape[0] + self.ea_pos.shape[0] + self.degraded, self.emitted


def realization_seed_sequence(master_seed: int, realization_index: int) -> np.random.SeedSequence:
    if realization_index < 0:
        raise DomainError("realization index must be non-negative")
    return np.random.SeedSequence(entropy=(int(master_seed) & (2**63 - 1), int(realization_index)))


def _kernel_seed(master_seed: int, realization_index: int) -> np.uint64:
    ss = realization_seed_sequence(master_seed, realization_index)
    return _kernels.normalize_seed(int(ss.generate_state(1, np.uint64)[0]))


def draw_sequence(tx: TransmissionSpec, master_seed: int, realization_index: int) -> np.ndarray:
    """Deterministic per-realization bit sequence, Bernoulli(p_one) per bit."""
    ss = realization_seed_sequence(master_seed, realization_index).spawn(2)[1]
    rng = np.random.default_rng(ss)
    return (rng.random(tx.sequence_length) < tx.p_one).astype(np.int64)


def diffuse_step(state: SimState, dt_s: float, env: EnvironmentSpec) -> SimState:
    """One Brownian step with drift for every species, in place.

    Per-axis displacement is Gaussian with variance 2*D*dt plus the uniform
    flow displacement v*dt.
    """
    drift = np.asarray(env.flow_m_s) * dt_s
    for attr, name in (("a_pos", "a"), ("e_pos", "e"), ("ea_pos", "ea")):
        pos = getattr(state, attr)
        if pos.shape[0] == 0:
            continue
        spec = env.species.get(name)
        if spec is None:
            raise ConfigurationError([(f"environment.species.{name}", "species required for this step")])
        sigma = math.sqrt(2.0 * spec.diffusion_m2_s * dt_s)
        pos += sigma * state.rng.standard_normal(pos.shape) + drift
    state.time_s += dt_s
    return state


def binding_radius(env: EnvironmentSpec, dt_s: float) -> float:
    """Per-step binding radius reproducing the second-order rate in a well-mixed bath.

    An information molecule binds when it ends a step within this radius of a
    free enzyme, so the per-step binding probability is C_E * (4/3)*pi*r^3 and
    the implied rate is k1*C_E when r = (3*k1*dt / (4*pi))^(1/3). The radius
    is dt-dependent by construction; halving dt shrinks it accordingly.
    """
    if env.reactions is None:
        raise ConfigurationError([("environment.enzymes", "explicit mode requires reaction parameters")])
    return (3.0 * env.reactions.binding_rate * dt_s / (4.0 * math.pi)) ** (1.0 / 3.0)


def _reflect_into_box(pos: np.ndarray, half_side: float, center_x: float):
    """Mirror-reflect positions into the enzyme box (single bounce)."""
    lo = np.array([center_x - half_side, -half_side, -half_side])
    hi = np.array([center_x + half_side, half_side, half_side])
    over = pos > hi
    pos[over] = (2.0 * np.broadcast_to(hi, pos.shape) - pos)[over]
    under = pos < lo
    pos[under] = (2.0 * np.broadcast_to(lo, pos.shape) - pos)[under]
    np.clip(pos, lo, hi, out=pos)


def react_step(state: SimState, dt_s: float, env: EnvironmentSpec, mode: str,
               degradation_mode: str = APPROXIMATION) -> SimState:
    """Apply one step of enzyme kinetics to the state, in place.

    ``first_order``: every free information molecule independently degrades
    with probability 1 - exp(-k*C_Etot*dt). ``explicit``: molecules bind a
    free enzyme they ended the step near, bound complexes unbind or convert
    with the configured branch rates, and complexes that left the enzyme box
    resolve immediately.
    """
    if mode == "off":
        return state
    if mode == "first_order":
        rate = env.decay_rate(degradation_mode)
        if rate > 0 and state.a_pos.shape[0] > 0:
            survive = state.rng.random(state.a_pos.shape[0]) >= -math.expm1(-rate * dt_s)
            state.degraded += int(np.count_nonzero(~survive))
            state.a_pos = state.a_pos[survive]
        return state
    if mode != "explicit":
        raise ConfigurationError([("simulation.enzyme_mode", f"unknown mode {mode!r}")])

    rx = env.reactions
    if rx is None:
        raise ConfigurationError([("environment.enzymes", "explicit mode requires reaction parameters")])
    half_side = env.enzyme_region_side_m / 2.0
    center_x = env.receiver_distance_m / 2.0

    # resolve bound complexes: unbind (release molecule + enzyme) or convert
    if state.ea_pos.shape[0] > 0:
        total = rx.unbinding_rate + rx.conversion_rate
        resolve_p = -math.expm1(-total * dt_s) if total > 0 else 0.0
        u = state.rng.random(state.ea_pos.shape[0])
        outside = np.any(np.abs(state.ea_pos - np.array([center_x, 0.0, 0.0])) > half_side, axis=1)
        resolving = (u < resolve_p) | outside
        if np.any(resolving):
            sites = state.ea_pos[resolving]
            unbind_frac = rx.unbinding_rate / total if total > 0 else 0.0
            unbinds = state.rng.random(sites.shape[0]) < unbind_frac
            released = sites[unbinds]
            if released.size:
                state.a_pos = np.vstack([state.a_pos, released])
            state.degraded += int(np.count_nonzero(~unbinds))
            enzymes_back = sites.copy()
            _reflect_into_box(enzymes_back, half_side, center_x)
            state.e_pos = np.vstack([state.e_pos, enzymes_back])
            state.ea_pos = state.ea_pos[~resolving]

    # keep free enzymes inside their box
    if state.e_pos.shape[0] > 0:
        _reflect_into_box(state.e_pos, half_side, center_x)

    # bind molecules that ended the step within the binding radius of a free enzyme
    if state.a_pos.shape[0] > 0 and state.e_pos.shape[0] > 0:
        r_bind = binding_radius(env, dt_s)
        tree = spatial.cKDTree(state.e_pos)
        neighbors = tree.query_ball_point(state.a_pos, r_bind)
        used_e: set[int] = set()
        bound_a = []
        for a_idx, cands in enumerate(neighbors):
            for e_idx in cands:
                if e_idx not in used_e:
                    used_e.add(e_idx)
                    bound_a.append(a_idx)
                    break
        if bound_a:
            bound_a_arr = np.asarray(bound_a, dtype=np.int64)
            new_ea = state.a_pos[bound_a_arr]
            state.ea_pos = np.vstack([state.ea_pos, new_ea])
            keep_a = np.ones(state.a_pos.shape[0], dtype=bool)
            keep_a[bound_a_arr] = False
            state.a_pos = state.a_pos[keep_a]
            keep_e = np.ones(state.e_pos.shape[0], dtype=bool)
            keep_e[list(used_e)] = False
            state.e_pos = state.e_pos[keep_e]
    return state


def observe(state: SimState, env: EnvironmentSpec) -> int:
    """Number of free information molecules inside the receiver sphere."""
    if state.a_pos.shape[0] == 0:
        return 0
    center = np.array([env.receiver_distance_m, 0.0, 0.0])
    d2 = np.sum((state.a_pos - center) ** 2, axis=1)
    return int(np.count_nonzero(d2 <= env.receiver_radius_m**2))


def _check_grid_multiple(value: float, step: float, key: str):
    ratio = value / step
    if abs(ratio - round(ratio)) > 1e-6:
        raise ConfigurationError(
            [(key, f"{value!r} s is not an integer multiple of the time step {step!r} s; "
                   "observation and emission times must land on the stepping grid")]
        )


class RealizationPlan:
    """Precompiled event schedule shared by all realizations of one setup.

    Builds the merged, sorted list of emission and observation events once and
    keeps the leap parameters (per-gap Gaussian sigma, flow displacement) as
    kernel-ready arrays. Observations sort before a coincident emission, so a
    sample taken exactly at an interval boundary sees the pre-emission state.
    """

    def __init__(self, env: EnvironmentSpec, tx: TransmissionSpec, config: SimConfig):
        self.env = env
        self.tx = tx
        self.config = config

        dt = config.time_step_s
        _check_grid_multiple(tx.bit_interval_s, dt, "transmission.bit_interval_s")
        for m, g in enumerate(tx.sample_offsets_s, start=1):
            _check_grid_multiple(g, dt, f"transmission.sample_offsets_s[{m - 1}]")

        sample_times = tx.sample_times().ravel()
        emit_times = np.arange(tx.sequence_length) * tx.bit_interval_s
        times = np.concatenate([sample_times, emit_times])
        kinds = np.concatenate([np.zeros(sample_times.size, np.int64),
                                np.ones(emit_times.size, np.int64)])
        payload = np.concatenate([np.arange(sample_times.size), np.arange(emit_times.size)])
        order = np.lexsort((kinds, times))
        self.times = times[order]
        self.slots = np.where(kinds[order] == 0, payload[order], -1).astype(np.int64)
        self._emit_event_index = np.full(tx.sequence_length, -1, dtype=np.int64)
        emit_positions = np.nonzero(kinds[order] == 1)[0]
        self._emit_event_index[payload[order][emit_positions]] = emit_positions

        gaps = np.diff(self.times, prepend=self.times[0])
        gaps[0] = 0.0
        diff = env.diffusion_a
        self.sigma = np.sqrt(2.0 * diff * gaps)
        vx, vy, vz = env.flow_m_s
        self.drift_x = vx * gaps
        self.drift_y = vy * gaps
        self.drift_z = vz * gaps

        if config.enzyme_mode == "first_order":
            self.decay_rate = env.decay_rate(config.degradation_mode)
        else:
            self.decay_rate = 0.0

    def run(self, bits, realization_index: int) -> np.ndarray:
        """Observation matrix (B, M) for one seeded realization."""
        bits = np.asarray(bits, dtype=np.int64)
        if bits.size != self.tx.sequence_length:
            raise DomainError(
                f"sequence length {bits.size} does not match the configured {self.tx.sequence_length}"
            )
        emits = np.zeros(self.times.size, dtype=np.int64)
        emits[self._emit_event_index] = bits * self.tx.molecules_per_bit
        counts = np.zeros(self.tx.sequence_length * self.tx.samples_per_interval, dtype=np.int64)
        seed = _kernel_seed(self.config.master_seed, realization_index)
        _kernels.walk_schedule(
            seed, self.times, self.slots, emits, self.sigma,
            self.drift_x, self.drift_y, self.drift_z,
            self.env.receiver_distance_m, self.env.receiver_radius_m**2,
            self.decay_rate, counts,
        )
        return counts.reshape(self.tx.sequence_length, self.tx.samples_per_interval)


def _run_explicit(env: EnvironmentSpec, tx: TransmissionSpec, config: SimConfig,
                  bits: np.ndarray, realization_index: int) -> np.ndarray:
    """Fixed-step realization with explicit enzyme molecules."""
    if env.reactions is None or env.enzyme_region_side_m <= 0:
        raise ConfigurationError(
            [("environment.enzymes", "explicit mode needs reactions and a positive enzyme region side")]
        )
    rng = np.random.default_rng(realization_seed_sequence(config.master_seed, realization_index))
    state = SimState.empty(rng)

    half_side = env.enzyme_region_side_m / 2.0
    center_x = env.receiver_distance_m / 2.0
    n_enzymes = int(round(env.enzyme_concentration * env.enzyme_region_side_m**3))
    state.e_pos = rng.uniform(-half_side, half_side, size=(n_enzymes, 3))
    state.e_pos[:, 0] += center_x

    dt = config.time_step_s
    matrix = np.zeros((tx.sequence_length, tx.samples_per_interval), dtype=np.int64)
    sample_steps = {}
    for j in range(tx.sequence_length):
        for m, g in enumerate(tx.sample_offsets_s):
            step = int(round((j * tx.bit_interval_s + g) / dt))
            sample_steps.setdefault(step, []).append((j, m))
    emit_steps = {int(round(j * tx.bit_interval_s / dt)): j
                  for j in range(tx.sequence_length) if bits[j]}

    n_steps = max(sample_steps)
    if 0 in emit_steps:
        state.emit(tx.molecules_per_bit)
    for step in range(1, n_steps + 1):
        diffuse_step(state, dt, env)
        react_step(state, dt, env, "explicit")
        for j, m in sample_steps.get(step, ()):
            matrix[j, m] = observe(state, env)
        if step in emit_steps:
            state.emit(tx.molecules_per_bit)
    return matrix


def run_realization(env: EnvironmentSpec, tx: TransmissionSpec, config: SimConfig,
                    bits, realization_index: int) -> np.ndarray:
    """One full seeded realization: emissions, transport, and receiver counts.

    Deterministic given (master_seed, realization_index) for a fixed build;
    realizations with distinct indices use independent streams, so ensembles
    may run in any order or in parallel.
    """
    bits = np.asarray(bits, dtype=np.int64)
    if config.enzyme_mode == "explicit":
        if bits.size != tx.sequence_length:
            raise DomainError("sequence length does not match the transmission spec")
        dt = config.time_step_s
        _check_grid_multiple(tx.bit_interval_s, dt, "transmission.bit_interval_s")
        for m, g in enumerate(tx.sample_offsets_s):
            _check_grid_multiple(g, dt, f"transmission.sample_offsets_s[{m}]")
        return _run_explicit(env, tx, config, bits, realization_index)
    return RealizationPlan(env, tx, config).run(bits, realization_index)


def inject_noise(matrix: np.ndarray, noise_mean, seed: int, times_s=None) -> np.ndarray:
    """Add independent Poisson noise counts to every observation.

    ``noise_mean`` is either a constant expected count or a callable of the
    sampling time; the callable form requires ``times_s`` with the matrix
    shape. Returns a new matrix.
    """
    matrix = np.asarray(matrix)
    if callable(noise_mean):
        if times_s is None:
            raise DomainError("a time-varying noise mean needs the sampling times")
        means = np.asarray(noise_mean(np.asarray(times_s, dtype=float)), dtype=float)
        means = np.broadcast_to(means, matrix.shape)
    else:
        if noise_mean < 0:
            raise DomainError("noise mean must be non-negative")
        if noise_mean == 0:
            return matrix.copy()
        means = np.full(matrix.shape, float(noise_mean))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed) & (2**63 - 1), 0x6E6F6973)))
    return matrix + rng.poisson(means)
