"""Experiment configuration: a flat ``key = value`` file with dotted keys.

Grammar (one entry per line)::

    # comment            (also allowed after a value)
    key.sub = value

Values are parsed by the key's declared type: integers, floats, booleans
(``true``/``false``), strings (bare or double-quoted) and comma-separated
lists. Unknown keys and duplicate keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .initial_data import PRESETS

BESSE_CHECKS = tuple(f"besse{k}" for k in range(1, 8))
REQUIRED_CHECKS = BESSE_CHECKS + ("thm1-ricci", "thm1-scalar", "ds-dt", "df-dt", "i3", "i5", "i7", "ibp")
EXTRA_CHECKS = ("curvature", "bianchi", "ds-dt-control")
ALL_CHECKS = REQUIRED_CHECKS + EXTRA_CHECKS
DEFAULT_STRICT = BESSE_CHECKS + ("ibp",)


class ConfigError(ValueError):
    pass


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in _str_list(text))


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    # allow "2pi"-style multiples of pi for lengths
    low = text.lower().replace(" ", "")
    if low.endswith("pi"):
        head = low[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(text)


# key -> value parser
SCHEMA = {
    "name": str,
    "seed": int,
    "grid.dim": int,
    "grid.n": int,
    "grid.length": _float,
    "preset.name": str,
    "preset.amplitude": float,
    "preset.frequency": int,
    "preset.phi_amplitude": float,
    "preset.u_amplitude": float,
    "preset.cutoff": int,
    "preset.phi_const": float,
    "preset.u_const": float,
    "flow.a": float,
    "flow.B": float,
    "flow.gauge": str,
    "flow.reference": str,
    "flow.c_cfl": float,
    "flow.u_floor": float,
    "flow.steps": int,
    "flow.f_variant": str,
    "flow.frozen_geometry": _bool,
    "checks": _str_list,
    "strict": _str_list,
    "eps": _float_list,
    "besse.tol": float,
    "refine.levels": int,
    "output.dir": str,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    seed: int = 7
    dim: int = 2
    n: int = 64
    length: float = 2 * math.pi
    preset: str = "conformal-bump"
    preset_params: dict = field(default_factory=dict)
    a: float = 0.5
    B: float = 0.3
    gauge: str = "plain"
    reference: str = "initial"
    c_cfl: float = 0.1
    u_floor: float = 1e-8
    steps: int = 8
    f_variant: str = "theorem"
    frozen_geometry: bool = False
    checks: tuple[str, ...] = REQUIRED_CHECKS
    strict: tuple[str, ...] = DEFAULT_STRICT
    eps: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    besse_tol: float = 1e-6
    levels: int = 3
    output_dir: str = "out"

    def __post_init__(self):
        bad = [c for c in self.checks if c not in ALL_CHECKS]
        if bad:
            raise ConfigError(f"unknown check(s) {bad}; valid: {', '.join(ALL_CHECKS)}")
        if len(set(self.checks)) != len(self.checks):
            raise ConfigError("duplicate entries in checks")
        bad = [c for c in self.strict if c not in ALL_CHECKS]
        if bad:
            raise ConfigError(f"unknown strict check(s) {bad}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        if self.dim not in (2, 3):
            raise ConfigError("grid.dim must be 2 or 3")
        if self.levels < 1:
            raise ConfigError("refine.levels must be >= 1")
        if self.steps < 4:
            raise ConfigError("flow.steps must be >= 4 (five time levels for the time stencil)")
        if len(self.eps) < 2 or any(e <= 0 for e in self.eps):
            raise ConfigError("eps needs at least two positive entries")
        if self.gauge not in ("plain", "deturck"):
            raise ConfigError("flow.gauge must be plain or deturck")
        if self.reference not in ("initial", "flat"):
            raise ConfigError("flow.reference must be initial or flat")
        if self.f_variant not in ("theorem", "intro"):
            raise ConfigError("flow.f_variant must be theorem or intro")

    def preset_kwargs(self) -> dict:
        kw = dict(self.preset_params)
        if self.preset == "random-smooth":
            kw.setdefault("seed", self.seed)
        return kw

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "grid": {"dim": self.dim, "n": self.n, "length": self.length},
            "preset": {"name": self.preset, **self.preset_params},
            "flow": {
                "a": self.a,
                "B": self.B,
                "gauge": self.gauge,
                "reference": self.reference,
                "c_cfl": self.c_cfl,
                "u_floor": self.u_floor,
                "steps": self.steps,
                "f_variant": self.f_variant,
                "frozen_geometry": self.frozen_geometry,
            },
            "checks": list(self.checks),
            "strict": list(self.strict),
            "eps": list(self.eps),
            "besse_tol": self.besse_tol,
            "levels": self.levels,
        }


_ATTR = {
    "name": "name",
    "seed": "seed",
    "grid.dim": "dim",
    "grid.n": "n",
    "grid.length": "length",
    "preset.name": "preset",
    "flow.a": "a",
    "flow.B": "B",
    "flow.gauge": "gauge",
    "flow.reference": "reference",
    "flow.c_cfl": "c_cfl",
    "flow.u_floor": "u_floor",
    "flow.steps": "steps",
    "flow.f_variant": "f_variant",
    "flow.frozen_geometry": "frozen_geometry",
    "checks": "checks",
    "strict": "strict",
    "eps": "eps",
    "besse.tol": "besse_tol",
    "refine.levels": "levels",
    "output.dir": "output_dir",
}


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    values, preset_params, seen = {}, {}, set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        try:
            parsed = SCHEMA[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
        if key.startswith("preset.") and key != "preset.name":
            preset_params[key.split(".", 1)[1]] = parsed
        else:
            values[_ATTR[key]] = parsed
    return ExperimentConfig(preset_params=preset_params, **values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
