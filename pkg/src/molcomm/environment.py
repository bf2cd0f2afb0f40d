"""Physical environment, transmission schedule, and elementary physics.

Everything downstream (analytic channel, particle simulator, detectors)
pulls its physical constants from the two spec objects defined here.
All quantities are SI: meters, seconds, kelvin, molecule/m^3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

BOLTZMANN_J_PER_K = 1.38e-23
AVOGADRO_PER_MOL = 6.02214076e23

# selectors for the effective degradation rate constant
STRICT_BOUND = "strict_bound"
APPROXIMATION = "approximation"
NO_DEGRADATION = "none"

DEGRADATION_MODES = (STRICT_BOUND, APPROXIMATION)


def einstein_diffusion(temperature_k: float, viscosity_pa_s: float, radius_m: float) -> float:
    """Stokes-Einstein diffusion coefficient k_B*T / (6*pi*eta*R) in m^2/s.

    Valid for a spherical molecule in a uniform fluid; real coefficients are
    usually measured, so callers may override the result per species.
    """
    if temperature_k <= 0 or viscosity_pa_s <= 0 or radius_m <= 0:
        raise DomainError(
            "temperature, viscosity and radius must all be positive, got "
            f"({temperature_k}, {viscosity_pa_s}, {radius_m})"
        )
    return BOLTZMANN_J_PER_K * temperature_k / (6.0 * math.pi * viscosity_pa_s * radius_m)


def receiver_volume(radius_m: float) -> float:
    """Volume of the spherical observation region, (4/3)*pi*r^3."""
    if radius_m <= 0:
        raise DomainError(f"receiver radius must be positive, got {radius_m}")
    return 4.0 / 3.0 * math.pi * radius_m**3


def celsius_to_kelvin(temperature_c: float) -> float:
    return temperature_c + 273.15


def molar_to_number_density(concentration_mol_per_l: float) -> float:
    """Convert mol/L to molecule/m^3 (1 L = 1e-3 m^3)."""
    return concentration_mol_per_l * AVOGADRO_PER_MOL * 1e3


@dataclass(frozen=True)
class SpeciesSpec:
    """A diffusing molecular species (information molecule, enzyme, or complex)."""

    name: str
    radius_m: float
    diffusion_m2_s: float

    def __post_init__(self):
        if self.radius_m <= 0:
            raise DomainError(f"species {self.name!r}: radius must be positive")
        if self.diffusion_m2_s <= 0:
            raise DomainError(f"species {self.name!r}: diffusion coefficient must be positive")

    @classmethod
    def from_radius(cls, name: str, radius_m: float, temperature_k: float,
                    viscosity_pa_s: float, diffusion_m2_s: float | None = None) -> "SpeciesSpec":
        """Build a species, deriving D from the Einstein relation unless overridden."""
        if diffusion_m2_s is None:
            diffusion_m2_s = einstein_diffusion(temperature_k, viscosity_pa_s, radius_m)
        return cls(name=name, radius_m=radius_m, diffusion_m2_s=diffusion_m2_s)


@dataclass(frozen=True)
class ReactionSpec:
    """Michaelis-Menten rates for enzymatic degradation of information molecules.

    ``binding_rate`` is second order (molecule^-1 m^3 s^-1); the unbinding and
    conversion rates are first order (s^-1). ``enzyme_concentration`` is the
    total enzyme number density in molecule/m^3 (0 disables degradation).
    """

    binding_rate: float
    unbinding_rate: float
    conversion_rate: float
    enzyme_concentration: float

    def __post_init__(self):
        for name in ("binding_rate", "unbinding_rate", "conversion_rate", "enzyme_concentration"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be non-negative")


def degradation_rate_constant(reactions: ReactionSpec, mode: str) -> float:
    """Effective second-order degradation constant for the lumped first-order model.

    ``strict_bound`` returns the binding rate itself (a lower bound on survival,
    hence an upper bound on degradation); ``approximation`` folds in the fate of
    the bound complex, k1*k2/(k-1+k2), and is the better estimate whenever
    unbinding is not negligible. Both coincide when the unbinding rate is 0.
    """
    if mode == STRICT_BOUND:
        return reactions.binding_rate
    if mode == APPROXIMATION:
        denom = reactions.unbinding_rate + reactions.conversion_rate
        if denom == 0.0:
            raise DomainError("approximation mode needs unbinding_rate + conversion_rate > 0")
        return reactions.binding_rate * reactions.conversion_rate / denom
    raise DomainError(f"unknown degradation mode {mode!r}; expected one of {DEGRADATION_MODES}")


@dataclass(frozen=True)
class EnvironmentSpec:
    """Fluid environment, receiver geometry, flow, and (optional) enzyme kinetics.

    The receiver is a passive sphere centered at ``(receiver_distance_m, 0, 0)``
    with the transmitter at the origin. ``flow_m_s`` is a steady uniform drift
    applied to every diffusing molecule. ``enzyme_region_side_m`` bounds the
    cube in which explicit enzyme molecules are simulated; it is a
    simulator-only knob standing in for an effectively infinite region and has
    no analytic counterpart.
    """

    temperature_k: float
    viscosity_pa_s: float
    flow_m_s: tuple[float, float, float]
    species: dict[str, SpeciesSpec]
    reactions: ReactionSpec | None
    receiver_distance_m: float
    receiver_radius_m: float
    enzyme_region_side_m: float = 0.0

    def __post_init__(self):
        if self.temperature_k <= 0:
            raise DomainError("temperature must be positive")
        if self.viscosity_pa_s <= 0:
            raise DomainError("viscosity must be positive")
        if self.receiver_distance_m <= 0:
            raise DomainError("receiver distance must be positive")
        if self.receiver_radius_m <= 0:
            raise DomainError("receiver radius must be positive")
        if self.receiver_distance_m <= self.receiver_radius_m:
            raise DomainError("receiver must not contain the transmitter "
                              f"(distance {self.receiver_distance_m} <= radius {self.receiver_radius_m})")
        if "a" not in self.species:
            raise DomainError("species table must define the information molecule 'a'")
        if len(self.flow_m_s) != 3:
            raise DomainError("flow must have three velocity components")

    @property
    def diffusion_a(self) -> float:
        return self.species["a"].diffusion_m2_s

    @property
    def receiver_volume_m3(self) -> float:
        return receiver_volume(self.receiver_radius_m)

    @property
    def enzyme_concentration(self) -> float:
        return self.reactions.enzyme_concentration if self.reactions is not None else 0.0

    def decay_rate(self, mode: str) -> float:
        """First-order degradation rate k*C_Etot in s^-1 for the chosen mode."""
        if mode == NO_DEGRADATION or self.reactions is None:
            return 0.0
        return degradation_rate_constant(self.reactions, mode) * self.enzyme_concentration


def effective_distance(env: EnvironmentSpec, t_s):
    """Distance from the flow-shifted emission center to the receiver center.

    A molecule cloud released at the origin drifts with the flow, so at time t
    its center sits at v*t and the relevant distance to the receiver is
    sqrt((x0 - vx*t)^2 + (vy*t)^2 + (vz*t)^2). Accepts scalar or array t.
    """
    t = np.asarray(t_s, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    vx, vy, vz = env.flow_m_s
    d = np.sqrt((env.receiver_distance_m - vx * t) ** 2 + (vy * t) ** 2 + (vz * t) ** 2)
    return d if d.ndim else float(d)


def peclet_number(env: EnvironmentSpec, speed_m_s: float) -> float:
    """Convection/diffusion dominance ratio x0*v/D for the information molecule."""
    if speed_m_s < 0:
        raise DomainError("speed must be non-negative")
    return env.receiver_distance_m * speed_m_s / env.diffusion_a


@dataclass(frozen=True)
class TransmissionSpec:
    """ON/OFF-keyed transmission schedule and the receiver sampling grid.

    ``sample_offsets_s`` are the M within-interval observation times g(m),
    strictly increasing in (0, bit_interval_s]. The global sampling time of
    observation m in interval j is (j-1)*bit_interval_s + g(m). ``noise_mean``
    is the expected count contributed by external sources at any sample
    (constant here; the simulator accepts a callable for time-varying means).
    """

    molecules_per_bit: int
    bit_interval_s: float
    p_one: float
    sequence_length: int
    sample_offsets_s: tuple[float, ...]
    noise_mean: float = 0.0

    def __post_init__(self):
        if self.molecules_per_bit <= 0:
            raise DomainError("molecules_per_bit must be positive")
        if self.bit_interval_s <= 0:
            raise DomainError("bit_interval_s must be positive")
        if not 0.0 <= self.p_one <= 1.0:
            raise DomainError("p_one must lie in [0, 1]")
        if self.sequence_length < 1:
            raise DomainError("sequence_length must be at least 1")
        offs = np.asarray(self.sample_offsets_s, dtype=float)
        if offs.size < 1:
            raise DomainError("at least one sample offset is required")
        if np.any(offs <= 0) or np.any(np.diff(offs) <= 0):
            raise DomainError("sample offsets must be strictly increasing and positive")
        if offs[-1] > self.bit_interval_s * (1 + 1e-12):
            raise DomainError("sample offsets must not exceed the bit interval")
        if self.noise_mean < 0:
            raise DomainError("noise_mean must be non-negative")

    @property
    def samples_per_interval(self) -> int:
        return len(self.sample_offsets_s)

    def sample_times(self) -> np.ndarray:
        """Global sampling times t(j, m) as a (sequence_length, M) array."""
        offs = np.asarray(self.sample_offsets_s, dtype=float)
        starts = np.arange(self.sequence_length)[:, None] * self.bit_interval_s
        return starts + offs[None, :]


def equally_spaced_offsets(bit_interval_s: float, samples_per_interval: int) -> tuple[float, ...]:
    """Default sampling grid g(m) = m*T/M, m = 1..M."""
    if samples_per_interval < 1:
        raise DomainError("samples_per_interval must be at least 1")
    m = np.arange(1, samples_per_interval + 1, dtype=float)
    return tuple(m * bit_interval_s / samples_per_interval)
