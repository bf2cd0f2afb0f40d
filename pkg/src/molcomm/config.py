"""Configuration loading, validation, and resolution into spec objects.

A single JSON or TOML file describes the physical environment, the
transmission schedule, and the simulation controls. Every field is
addressable by its dotted key path, which is how validation errors are
reported. Defaults implement the base case: no flow, no enzymes, no noise.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .environment import (
    APPROXIMATION,
    STRICT_BOUND,
    EnvironmentSpec,
    ReactionSpec,
    SpeciesSpec,
    TransmissionSpec,
    celsius_to_kelvin,
    equally_spaced_offsets,
    molar_to_number_density,
)
from .errors import ConfigurationError
from .particles import ENZYME_MODES, SimConfig

# keys that must be present in every config file; everything else has a default
REQUIRED_KEYS = (
    "environment.temperature_c",
    "environment.viscosity_pa_s",
    "environment.receiver_distance_m",
    "environment.receiver_radius_m",
    "transmission.molecules_per_bit",
    "transmission.bit_interval_s",
    "simulation.time_step_s",
)

DEFAULTS = {
    "environment": {
        "temperature_c": 25.0,
        "viscosity_pa_s": 1e-3,
        "flow_m_s": [0.0, 0.0, 0.0],
        "receiver_distance_m": 300e-9,
        "receiver_radius_m": 45e-9,
        "species": {
            "a": {"radius_m": 0.5e-9, "diffusion_m2_s": None},
            "e": {"radius_m": 2.5e-9, "diffusion_m2_s": None},
            "ea": {"radius_m": 3.0e-9, "diffusion_m2_s": None},
        },
        "enzymes": {
            "enabled": False,
            "concentration_um": 84.0,
            "binding_rate_m3_s": 2e-19,
            "unbinding_rate_s": 1e4,
            "conversion_rate_s": 1e6,
            "region_side_multiple": 10.0,
        },
    },
    "transmission": {
        "molecules_per_bit": 5000,
        "bit_interval_s": 200e-6,
        "p_one": 0.5,
        "sequence_length": 100,
        "samples_per_interval": 10,
        "sample_offsets_s": None,
        "noise_mean": 0.0,
    },
    "simulation": {
        "time_step_s": 0.5e-6,
        "master_seed": 1,
        "realizations": 200,
        "enzyme_mode": "first_order",
        "degradation_mode": APPROXIMATION,
    },
    "experiments": {},
}


@dataclass(frozen=True)
class ResolvedConfig:
    """Validated spec objects plus the fully-resolved raw tree for manifests."""

    env: EnvironmentSpec
    tx: TransmissionSpec
    sim: SimConfig
    experiments: dict
    raw: dict


def _merge(defaults: dict, override: dict, path: str, problems: list) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            problems.append((here, "unknown key"))
            continue
        if isinstance(defaults[key], dict) and not isinstance(value, dict):
            problems.append((here, "expected a table of keys"))
        elif isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, here, problems)
        else:
            out[key] = value
    return out


def _lookup(tree: dict, dotted: str):
    node = tree
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return None
        node = node[part]
    return node


def _number(tree, dotted, problems, minimum=None, strict=False, maximum=None):
    value = _lookup(tree, dotted)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        problems.append((dotted, f"expected a number, got {value!r}"))
        return None
    if minimum is not None and (value <= minimum if strict else value < minimum):
        cmp = ">" if strict else ">="
        problems.append((dotted, f"must be {cmp} {minimum}, got {value!r}"))
        return None
    if maximum is not None and value > maximum:
        problems.append((dotted, f"must be <= {maximum}, got {value!r}"))
        return None
    return value


def _integer(tree, dotted, problems, minimum=None):
    value = _number(tree, dotted, problems, minimum=minimum)
    if value is None:
        return None
    if float(value) != int(value):
        problems.append((dotted, f"expected an integer, got {value!r}"))
        return None
    return int(value)


def load_raw(path: str | Path) -> dict:
    """Parse the file as TOML or JSON by extension (TOML when ambiguous)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError([(str(path), f"invalid JSON: {exc}")]) from exc
    else:
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError([(str(path), f"invalid TOML: {exc}")]) from exc
    if not isinstance(data, dict):
        raise ConfigurationError([(str(path), "top level must be a table/object")])
    return data


def resolve_config(data: dict) -> ResolvedConfig:
    """Validate a raw config tree, apply defaults, and build the spec objects.

    Raises ConfigurationError carrying every violated invariant with its
    dotted key path; an empty tree reports the required keys.
    """
    problems: list[tuple[str, str]] = []
    missing = [k for k in REQUIRED_KEYS if _lookup(data, k) is None]
    if missing:
        problems.extend((k, "required key is missing") for k in missing)
    # the experiments table is free-form; each runner validates its own knobs
    data = dict(data)
    experiments_raw = data.pop("experiments", {})
    if not isinstance(experiments_raw, dict):
        problems.append(("experiments", "expected a table of experiment settings"))
        experiments_raw = {}
    tree = _merge({k: v for k, v in DEFAULTS.items() if k != "experiments"}, data, "", problems)
    tree["experiments"] = copy.deepcopy(experiments_raw)
    if problems:
        raise ConfigurationError(problems)

    temperature_c = _number(tree, "environment.temperature_c", problems, minimum=-273.15, strict=True)
    viscosity = _number(tree, "environment.viscosity_pa_s", problems, minimum=0.0, strict=True)
    x0 = _number(tree, "environment.receiver_distance_m", problems, minimum=0.0, strict=True)
    r_obs = _number(tree, "environment.receiver_radius_m", problems, minimum=0.0, strict=True)
    flow = _lookup(tree, "environment.flow_m_s")
    if not (isinstance(flow, (list, tuple)) and len(flow) == 3
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in flow)):
        problems.append(("environment.flow_m_s", f"expected three velocity components, got {flow!r}"))
        flow = [0.0, 0.0, 0.0]

    n_per_bit = _integer(tree, "transmission.molecules_per_bit", problems, minimum=1)
    t_int = _number(tree, "transmission.bit_interval_s", problems, minimum=0.0, strict=True)
    p_one = _number(tree, "transmission.p_one", problems, minimum=0.0, maximum=1.0)
    seq_len = _integer(tree, "transmission.sequence_length", problems, minimum=1)
    m_samples = _integer(tree, "transmission.samples_per_interval", problems, minimum=1)
    noise_mean = _number(tree, "transmission.noise_mean", problems, minimum=0.0)

    dt = _number(tree, "simulation.time_step_s", problems, minimum=0.0, strict=True)
    seed = _integer(tree, "simulation.master_seed", problems, minimum=0)
    realizations = _integer(tree, "simulation.realizations", problems, minimum=1)
    enzyme_mode = _lookup(tree, "simulation.enzyme_mode")
    if enzyme_mode not in ENZYME_MODES:
        problems.append(("simulation.enzyme_mode", f"must be one of {ENZYME_MODES}, got {enzyme_mode!r}"))
    degradation_mode = _lookup(tree, "simulation.degradation_mode")
    if degradation_mode not in (STRICT_BOUND, APPROXIMATION):
        problems.append(("simulation.degradation_mode",
                         f"must be {STRICT_BOUND!r} or {APPROXIMATION!r}, got {degradation_mode!r}"))
    if problems:
        raise ConfigurationError(problems)

    temperature_k = celsius_to_kelvin(temperature_c)

    species = {}
    for name in ("a", "e", "ea"):
        radius = _number(tree, f"environment.species.{name}.radius_m", problems, minimum=0.0, strict=True)
        override = _lookup(tree, f"environment.species.{name}.diffusion_m2_s")
        if radius is None:
            continue
        try:
            species[name] = SpeciesSpec.from_radius(name, radius, temperature_k, viscosity,
                                                    diffusion_m2_s=override)
        except Exception as exc:
            problems.append((f"environment.species.{name}", str(exc)))

    enz = tree["environment"]["enzymes"]
    reactions = None
    region_side = 0.0
    if enz.get("enabled"):
        conc_um = _number(tree, "environment.enzymes.concentration_um", problems, minimum=0.0)
        k_bind = _number(tree, "environment.enzymes.binding_rate_m3_s", problems, minimum=0.0)
        k_unbind = _number(tree, "environment.enzymes.unbinding_rate_s", problems, minimum=0.0)
        k_convert = _number(tree, "environment.enzymes.conversion_rate_s", problems, minimum=0.0)
        side_mult = _number(tree, "environment.enzymes.region_side_multiple", problems, minimum=0.0, strict=True)
        if not problems:
            reactions = ReactionSpec(
                binding_rate=k_bind,
                unbinding_rate=k_unbind,
                conversion_rate=k_convert,
                enzyme_concentration=molar_to_number_density(conc_um * 1e-6),
            )
            region_side = side_mult * x0
    if problems:
        raise ConfigurationError(problems)

    offsets = _lookup(tree, "transmission.sample_offsets_s")
    if offsets is None:
        offsets = equally_spaced_offsets(t_int, int(m_samples))
    else:
        if not (isinstance(offsets, (list, tuple)) and
                all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in offsets)):
            raise ConfigurationError([("transmission.sample_offsets_s", "expected a list of times")])
        offsets = tuple(float(v) for v in offsets)

    try:
        env = EnvironmentSpec(
            temperature_k=temperature_k,
            viscosity_pa_s=float(viscosity),
            flow_m_s=tuple(float(v) for v in flow),
            species=species,
            reactions=reactions,
            receiver_distance_m=float(x0),
            receiver_radius_m=float(r_obs),
            enzyme_region_side_m=region_side,
        )
    except Exception as exc:
        raise ConfigurationError([("environment", str(exc))]) from exc

    try:
        tx = TransmissionSpec(
            molecules_per_bit=int(n_per_bit),
            bit_interval_s=float(t_int),
            p_one=float(p_one),
            sequence_length=int(seq_len),
            sample_offsets_s=offsets,
            noise_mean=float(noise_mean),
        )
    except Exception as exc:
        raise ConfigurationError([("transmission", str(exc))]) from exc

    effective_mode = enzyme_mode if reactions is not None else "off"
    try:
        sim = SimConfig(
            time_step_s=float(dt),
            master_seed=int(seed),
            realization_count=int(realizations),
            enzyme_mode=effective_mode,
            degradation_mode=degradation_mode,
        )
    except Exception as exc:
        raise ConfigurationError([("simulation", str(exc))]) from exc

    # sampling times must land on the stepping grid (checked again at run time,
    # but reporting it here gives the key path)
    for idx, g in enumerate(tx.sample_offsets_s):
        ratio = g / sim.time_step_s
        if abs(ratio - round(ratio)) > 1e-6:
            problems.append((f"transmission.sample_offsets_s[{idx}]",
                             f"{g!r} s is not a multiple of simulation.time_step_s"))
    ratio = tx.bit_interval_s / sim.time_step_s
    if abs(ratio - round(ratio)) > 1e-6:
        problems.append(("transmission.bit_interval_s",
                         "must be a multiple of simulation.time_step_s"))
    if problems:
        raise ConfigurationError(problems)

    tree["transmission"]["sample_offsets_s"] = list(offsets)
    experiments = tree.get("experiments") or {}
    return ResolvedConfig(env=env, tx=tx, sim=sim, experiments=experiments, raw=tree)


def validate_config(path: str | Path) -> ResolvedConfig:
    """Load and resolve a config file, raising with key-path diagnostics."""
    return resolve_config(load_raw(path))
