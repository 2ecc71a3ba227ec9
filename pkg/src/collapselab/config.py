"""Scenario files: INI-style sections, one per scenario, with unit-tagged values.

Example::

    [born]
    experiment = gambler_ruin
    seed = 7
    amplitudes = 0.6, 0.8
    lambda = 1 1/tu
    t_final = 10 tu

Toy finite-basis models use the model time unit ``tu``; spatial models use
CGS or eV units. A dimensional key without a unit is an error.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

EXPERIMENTS = ("gambler_ruin", "offdiag_decay", "nonmarkov_compare", "csl_rates",
               "gravity_compare", "kernel_scan", "parameter_report")

# unit tables: factor to the internal unit of each quantity kind
UNITS: dict[str, dict[str, float]] = {
    "model_time": {"tu": 1.0},
    "model_rate": {"1/tu": 1.0, "tu^-1": 1.0},
    "length": {"cm": 1.0, "m": 100.0, "mm": 0.1, "um": 1e-4, "nm": 1e-7},
    "rate": {"1/s": 1.0, "s^-1": 1.0, "Hz": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9},
    "mass": {"g": 1.0, "kg": 1e3},
    "number_density": {"1/cm^3": 1.0, "cm^-3": 1.0, "1/m^3": 1e-6},
    "energy": {"eV": 1.0, "keV": 1e3, "MeV": 1e6},
    "count_rate": {"counts/keV/kg/day": 1.0},
    "count": {"nucleons": 1.0, "particles": 1.0},
}

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


class ConfigError(ValueError):
    """Malformed scenario file; ``str()`` names the section, key and line."""


@dataclass(frozen=True)
class Param:
    kind: str                 # int, float, str, floats, or a key of UNITS
    default: Any = None
    required: bool = False
    choices: tuple[str, ...] | None = None


_TOY = {
    "amplitudes": Param("floats", (0.6, 0.8)),
    "eigenvalues": Param("floats", (1.0, -1.0)),
    "lambda": Param("model_rate", 1.0),
    "t_final": Param("model_time", 10.0),
    "n_steps": Param("int", None),
    "trajectories": Param("int", 10000),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "gambler_ruin": {**_TOY,
                     "engine": Param("str", "nonlinear", choices=("nonlinear", "linear", "both")),
                     "endpoint_width": Param("float", 41.0),
                     "epsilon": Param("float", 1e-3),
                     "dwell_steps": Param("int", 10)},
    "offdiag_decay": {**_TOY, "t_final": Param("model_time", 1.0), "n_times": Param("int", 10)},
    "nonmarkov_compare": {**_TOY, "t_final": Param("model_time", 1.0),
                          "alpha": Param("model_rate", 100.0), "n_steps": Param("int", 1000)},
    "csl_rates": {"lambda": Param("rate", 1e-16), "a": Param("length", 1e-5),
                  "n_particles": Param("count", 1e24), "mass": Param("mass", None),
                  "clump_n": Param("count", 1000.0), "separation": Param("length", 1e-4),
                  "cube_side": Param("length", 1e-4), "density": Param("number_density", 1e25),
                  "spacing": Param("length", None), "germanium_limit": Param("count_rate", 0.2)},
    "gravity_compare": {"a": Param("length", 1e-5), "mass": Param("mass", 1e-14),
                        "separation": Param("length", 8e-5), "spacing": Param("length", None)},
    "kernel_scan": {"kind": Param("str", "spacelike", choices=("spacelike", "timelike", "nonrel")),
                    "a": Param("length", 1.0), "x_min": Param("length", 0.05),
                    "x_max": Param("length", 20.0), "n_points": Param("int", 400)},
    "parameter_report": {"lambda": Param("rate", 1e-16), "a": Param("length", 1e-5)},
}

RESERVED = ("experiment", "seed", "output_dir")


@dataclass(frozen=True)
class Scenario:
    name: str
    experiment: str
    parameters: dict[str, Any]
    seed: int = 0
    output_dir: Path | None = None
    raw: dict[str, str] = field(default_factory=dict, compare=False)


def parse_quantity(text: str, kind: str, where: str) -> Any:
    text = text.strip()
    if kind == "int":
        try:
            return int(float(text)) if re.fullmatch(_NUMBER, text) and float(text).is_integer() else int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if kind == "float":
        if not re.fullmatch(_NUMBER, text):
            raise ConfigError(f"{where}: expected a number, got {text!r}")
        return float(text)
    if kind == "str":
        return text
    if kind == "floats":
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts or not all(re.fullmatch(_NUMBER, p) for p in parts):
            raise ConfigError(f"{where}: expected comma-separated numbers, got {text!r}")
        return tuple(float(p) for p in parts)
    table = UNITS[kind]
    m = re.fullmatch(rf"({_NUMBER})\s*(\S+)?", text)
    if not m:
        raise ConfigError(f"{where}: cannot parse quantity {text!r}")
    if m.group(2) is None:
        raise ConfigError(f"{where}: {kind.replace('_', ' ')} needs a unit (one of {', '.join(table)})")
    if m.group(2) not in table:
        raise ConfigError(f"{where}: unknown unit {m.group(2)!r} for {kind.replace('_', ' ')}; "
                          f"use one of {', '.join(table)}")
    return float(m.group(1)) * table[m.group(2)]


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    where, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif section and "=" in s and not s.startswith(("#", ";")):
            where[(section, s.split("=", 1)[0].strip())] = i
    return where


def parse_scenarios(text: str, source: str = "<config>") -> list[Scenario]:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _line_numbers(text)
    out = []
    for name in cp.sections():
        sec = cp[name]

        def where(key, name=name):
            ln = lines.get((name, key))
            return f"{source}:{ln} [{name}] {key}" if ln else f"{source} [{name}] {key}"

        exp = sec.get("experiment")
        if exp is None:
            raise ConfigError(f"{source} [{name}]: missing 'experiment'")
        if exp not in SCHEMAS:
            raise ConfigError(f"{where('experiment')}: unknown experiment {exp!r}; "
                              f"choose from {', '.join(EXPERIMENTS)}")
        schema = SCHEMAS[exp]
        unknown = [k for k in sec if k not in schema and k not in RESERVED]
        if unknown:
            raise ConfigError(f"{where(unknown[0])}: unknown key for {exp}; allowed: {', '.join(schema)}")
        params = {}
        for key, spec in schema.items():
            if key in sec:
                val = parse_quantity(sec[key], spec.kind, where(key))
                if spec.choices and val not in spec.choices:
                    raise ConfigError(f"{where(key)}: {val!r} not in {spec.choices}")
                params[key] = val
            elif spec.required:
                raise ConfigError(f"{source} [{name}]: missing required key {key!r}")
            else:
                params[key] = spec.default
        seed = parse_quantity(sec.get("seed", "0"), "int", where("seed"))
        outdir = Path(sec["output_dir"]) if "output_dir" in sec else None
        raw = {k: sec[k] for k in sec}
        out.append(Scenario(name, exp, params, seed, outdir, raw))
    return out


def load_scenarios(path) -> list[Scenario]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from None
    return parse_scenarios(text, str(p))


def scenario_to_text(sc: Scenario) -> str:
    """Section text that parses back to an equivalent scenario."""
    lines = [f"[{sc.name}]"] + [f"{k} = {v}" for k, v in sc.raw.items()]
    return "\n".join(lines) + "\n"
