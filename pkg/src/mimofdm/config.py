"""Sectioned key-value experiment files.

Keys carry their unit in the name (``bandwidth_hz``, ``tau_rms_s``).  Lists
are comma separated; numeric ranges may be written ``start:stop:step``
(stop included).  Unknown sections or keys are rejected in strict mode
and reported as warnings otherwise.

Example::

    [experiment]
    kind = link
    seed = 7

    [ofdm]
    num_subcarriers = 64
    cp_fraction = 0.25
    bandwidth_hz = 20e6
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .fading import JakesConfig
from .harness import CHANNEL_MODES, DETECTORS, ScenarioConfig
from .heuristics import TUNED_DE, TUNED_PSO, _nearest_key
from .ofdm import OfdmConfig

KINDS = ("link", "jakes", "complexity")
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _floats(s):
    out = []
    for part in s.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            a, b, c = (float(x) for x in part.split(":"))
            if c <= 0:
                raise ValueError("range step must be positive")
            n = int(math.floor((b - a) / c + 1e-9)) + 1
            out.extend(round(a + i * c, 10) for i in range(n))
        else:
            out.append(float(part))
    if not out:
        raise ValueError("empty list")
    return tuple(out)


def _ints(s):
    return tuple(_int(str(v)) for v in _floats(s))


def _words(s):
    out = tuple(w.strip().lower() for w in s.split(",") if w.strip())
    if not out:
        raise ValueError("empty list")
    return out


def _antennas(s):
    out = []
    for w in _words(s):
        a, _, b = w.partition("x")
        out.append((_int(a), _int(b or a)))
    return tuple(out)


def _positive(v):
    return all(x > 0 for x in np.atleast_1d(v))


def _nonneg(v):
    return all(x >= 0 for x in np.atleast_1d(v))


def _unit(v):
    return all(0 <= x <= 1 for x in np.atleast_1d(v))


# section -> key -> (parser, default, check, description)
SCHEMA = {
    "experiment": {
        "kind": (str, "link", lambda v: v in KINDS, f"one of {KINDS}"),
        "name": (str, "", None, ""),
        "seed": (_int, REQUIRED, _nonneg, "non-negative integer"),
    },
    "ofdm": {
        "num_subcarriers": (_ints, REQUIRED, lambda v: all(n > 0 and n & (n - 1) == 0 for n in v), "powers of two"),
        "cp_fraction": (_floats, REQUIRED, lambda v: all(0 <= x < 1 for x in v), "in [0, 1)"),
        "bandwidth_hz": (_float, REQUIRED, _positive, "positive"),
    },
    "channel": {
        "mode": (str, "block", lambda v: v in CHANNEL_MODES, f"one of {CHANNEL_MODES}"),
        "tau_rms_s": (_float, REQUIRED, _nonneg, "non-negative"),
        "pdp_floor_db": (_float, -30.0, lambda v: v < 0, "negative"),
        "max_doppler_hz": (_float, 0.0, _nonneg, "non-negative"),
        "num_oscillators": (_int, 1024, _positive, "positive"),
    },
    "link": {
        "modulation_order": (_int, REQUIRED, lambda v: v in (4, 16, 64, 256), "4, 16, 64 or 256"),
        "antennas": (_antennas, ((1, 1),), lambda v: all(a > 0 and b > 0 for a, b in v), "like 2x2, 4x4"),
        "array": (_words, ("ula",), lambda v: all(w in ("ula", "ura") for w in v), "ula or ura"),
        "rho": (_floats, (0.0,), _unit, "in [0, 1]"),
        "detectors": (_words, ("zf",), lambda v: all(w in DETECTORS for w in v), f"from {DETECTORS}"),
        "ebn0_db": (_floats, REQUIRED, None, ""),
    },
    "stopping": {
        "min_errors": (_int, 200, _positive, "positive"),
        "min_trials": (_int, 20, _nonneg, "non-negative"),
        "max_trials": (_int, 2000, _positive, "positive"),
    },
    "pso": {
        "tuned": (_bool, True, None, ""),
        "n_pop": (_int, 40, _positive, "positive"),
        "n_iter": (_int, 100, _positive, "positive"),
        "c1": (_float, 4.0, _nonneg, "non-negative"),
        "c2": (_float, 1.0, _nonneg, "non-negative"),
        "w0": (_float, 1.5, None, ""),
        "inertia_decay": (_float, 0.99, _positive, "positive"),
        "v_max": (_float, 1.0, _positive, "positive"),
    },
    "de": {
        "tuned": (_bool, True, None, ""),
        "n_ind": (_int, 40, lambda v: v >= 4, ">= 4"),
        "n_gen": (_int, 100, _positive, "positive"),
        "f_mut": (_float, 0.6, lambda v: 0 <= v <= 2, "in [0, 2]"),
        "f_cr": (_float, 0.6, _unit, "in [0, 1]"),
    },
    "jakes": {
        "num_oscillators": (_int, REQUIRED, _positive, "positive"),
        "max_doppler_hz": (_float, REQUIRED, _positive, "positive"),
        "sample_period_s": (_float, REQUIRED, _positive, "positive"),
        "num_samples": (_int, REQUIRED, lambda v: v >= 256, ">= 256"),
        "num_waveforms": (_int, 1, _positive, "positive"),
    },
    "complexity": {
        "nt": (_ints, (2, 4, 8, 16), _positive, "positive"),
        "population_per_dim": (_int, 5, _positive, "positive"),
        "iterations": (_int, 50, _positive, "positive"),
        "modulation_order": (_int, 4, lambda v: v in (4, 16, 64, 256), "4, 16, 64 or 256"),
    },
    "calibration": {
        "detector": (str, "pso", lambda v: v in ("pso", "de"), "pso or de"),
        "trials": (_int, 100, _positive, "positive"),
        "n_pop": (_ints, None, _positive, "positive"),
        "n_iter": (_ints, None, _positive, "positive"),
        "c1": (_floats, None, _nonneg, "non-negative"),
        "c2": (_floats, None, _nonneg, "non-negative"),
        "w0": (_floats, None, None, ""),
        "n_ind": (_ints, None, lambda v: all(x >= 4 for x in v), ">= 4"),
        "n_gen": (_ints, None, _positive, "positive"),
        "f_mut": (_floats, None, lambda v: all(0 <= x <= 2 for x in v), "in [0, 2]"),
        "f_cr": (_floats, None, _unit, "in [0, 1]"),
    },
    "sensibility": {
        "ebn0_db": (_float, 15.0, None, ""),
    },
}

# sections whose required keys apply for each experiment kind
REQUIRED_SECTIONS = {
    "link": ("experiment", "ofdm", "channel", "link"),
    "jakes": ("experiment", "jakes"),
    "complexity": ("experiment",),
}


@dataclass(frozen=True)
class JakesSettings:
    num_oscillators: int
    max_doppler: float
    sample_period: float
    num_samples: int
    num_waveforms: int = 1

    def jakes_config(self) -> JakesConfig:
        return JakesConfig(self.num_oscillators, self.max_doppler, self.sample_period, self.num_waveforms)


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    values: dict = field(default_factory=dict)  # section -> key -> parsed value
    explicit: dict = field(default_factory=dict)  # section -> set of keys given in the file
    source: str = ""
    warnings: list = field(default_factory=list)

    def get(self, section, key):
        return self.values[section][key]

    @property
    def name(self) -> str:
        return self.values["experiment"]["name"]

    def jakes(self) -> JakesSettings:
        j = self.values["jakes"]
        return JakesSettings(j["num_oscillators"], j["max_doppler_hz"], j["sample_period_s"],
                             j["num_samples"], j["num_waveforms"])

    def detector_params(self, detector: str, rho: float) -> dict:
        if detector not in ("pso", "de"):
            return {}
        sec = dict(self.values[detector])
        tuned = sec.pop("tuned")
        if tuned:
            table = TUNED_PSO if detector == "pso" else TUNED_DE
            for k, v in table[_nearest_key(table, rho)].items():
                if k not in self.explicit.get(detector, ()):
                    sec[k] = v
        return sec

    def scenarios(self, **overrides) -> list:
        """Every (cp, N, antennas, array, rho, detector) combination."""
        if self.kind != "link":
            raise ConfigError(f"experiment kind {self.kind!r} has no link scenarios")
        o, ch, lk, st = (self.values[s] for s in ("ofdm", "channel", "link", "stopping"))
        out = []
        combos = itertools.product(o["num_subcarriers"], o["cp_fraction"], lk["antennas"],
                                   lk["array"], lk["rho"], lk["detectors"])
        for n, cp, (nt, nr), arr, rho, det in combos:
            kw = dict(
                ofdm=OfdmConfig(n, cp, o["bandwidth_hz"]),
                order=lk["modulation_order"], nt=nt, nr=nr, array_kind=arr, rho=rho,
                detector=det, detector_params=self.detector_params(det, rho),
                channel_mode=ch["mode"], tau_rms=ch["tau_rms_s"], pdp_floor_db=ch["pdp_floor_db"],
                max_doppler=ch["max_doppler_hz"], num_oscillators=ch["num_oscillators"],
                ebn0_db=lk["ebn0_db"], min_errors=st["min_errors"], min_trials=st["min_trials"],
                max_trials=st["max_trials"], seed=self.seed,
            )
            kw.update(overrides)
            sid = scenario_label(self.name, kw["ofdm"], nt, nr, arr, rho, det)
            try:
                out.append(ScenarioConfig(**kw, scenario_id=sid))
            except ValueError as exc:
                raise ConfigError(f"scenario {sid}: {exc}") from exc
        return out

    def calibration_grid(self) -> dict:
        cal = self.values["calibration"]
        return {k: list(v) for k, v in cal.items() if k not in ("detector", "trials") and v is not None}

    def to_ini(self) -> str:
        """Canonical text form; parsing it yields an equal config."""
        cp = configparser.ConfigParser(interpolation=None)
        for sec, keys in self.explicit.items():
            cp.add_section(sec)
            for k in sorted(keys):
                cp.set(sec, k, _format(self.values[sec][k]))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def scenario_label(name, ofdm, nt, nr, array, rho, detector) -> str:
    return (f"{name or 'run'}-n{ofdm.num_subcarriers}-cp{ofdm.cp_fraction:g}-{nt}x{nr}"
            f"-{array}-rho{rho:g}-{detector}")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{a}x{b}" for a, b in v)
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def preset_names() -> list:
    root = resources.files("mimofdm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    path = resources.files("mimofdm") / "presets" / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return path.read_text()


def parse_config_text(text: str, strict: bool = True, source: str = "<text>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: malformed config: {exc}") from exc

    problems, unknown = [], []
    for sec in cp.sections():
        if sec not in SCHEMA:
            unknown.append(f"unknown section [{sec}]")
            continue
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                unknown.append(f"unknown key {sec}.{key}")
    if strict:
        problems.extend(unknown)

    raw_kind = cp.get("experiment", "kind", fallback="link").strip()
    kind = raw_kind if raw_kind in KINDS else "link"
    values, explicit, missing = {}, {}, []
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parse, default, check, hint) in keys.items():
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                explicit.setdefault(sec, set()).add(key)
                try:
                    v = parse(raw)
                except ValueError as exc:
                    problems.append(f"{sec}.{key}: cannot parse {raw!r} ({exc})")
                    continue
                if check is not None and not check(v):
                    problems.append(f"{sec}.{key}: value {raw!r} out of range ({hint})")
                    continue
                values[sec][key] = v
            elif default is REQUIRED:
                if sec in REQUIRED_SECTIONS[kind]:
                    missing.append(f"{sec}.{key}")
                values[sec][key] = None
            else:
                values[sec][key] = default
    if missing:
        problems.append("missing required keys: " + ", ".join(missing))
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))
    cfg = ExperimentConfig(kind, values["experiment"]["seed"], values, explicit, source, unknown)
    if kind == "link":
        cfg.scenarios()  # cross-field validation
    elif kind == "jakes":
        try:
            cfg.jakes().jakes_config()
        except ValueError as exc:
            raise ConfigError(f"{source}: jakes: {exc}") from exc
    return cfg


def parse_config(path, strict: bool = True) -> ExperimentConfig:
    """Parse a config file, or a bundled preset when ``path`` names one."""
    p = Path(path)
    if p.is_file():
        return parse_config_text(p.read_text(), strict, str(p))
    if str(path) in preset_names():
        return parse_config_text(preset_text(str(path)), strict, f"preset:{path}")
    raise ConfigError(f"config file {path} not found")


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with ``section__key=value`` replacements marked explicit."""
    values = {s: dict(v) for s, v in cfg.values.items()}
    explicit = {s: set(v) for s, v in cfg.explicit.items()}
    for name, v in changes.items():
        sec, key = name.split("__")
        values[sec][key] = v
        explicit.setdefault(sec, set()).add(key)
    seed = values["experiment"]["seed"]
    return dataclasses.replace(cfg, seed=seed, values=values, explicit=explicit)
