"""
Plain-text experiment configuration with explicit units.

A config is a list of ``[section]`` blocks of ``key = value`` lines; ``#``
starts a comment.  Shared sections are ``[output]``, ``[numerics]``,
``[fit]`` and ``[postprocess]``; every ``[experiment NAME]`` section
describes one curve.  Physical quantities carry a unit::

    [experiment spc]
    kind = g2
    geometry = measurement-induced
    gamma = 1/1.76 ns        # a rate given as an inverse lifetime
    gamma_p = 0.568 /ns      # or directly as a rate
    gamma_d = 0 /ps
    phonons = deformation-potential
    temperature = 4 K

Values are stored in ps, 1/ps, meV and K.  ``dump_config`` writes a config
that parses back to an equal object.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace

from coopg2.bath import (
    BARE_NORMALIZATION,
    TEXTBOOK_NORMALIZATION,
    DeformationPotentialSD,
    OhmicSD,
    SpectralDensity,
)
from coopg2.constants import omega_from_mev
from coopg2.dynamics import Geometry, Numerics, Scenario
from coopg2.errors import ConfigError
from coopg2.quantum import LindbladSpec

TIME_UNITS = {"fs": 1e-3, "ps": 1.0, "ns": 1e3, "us": 1e6}
ENERGY_UNITS = {"uev": 1e-3, "mev": 1.0, "ev": 1e3}
KINDS = ("g2", "coherence")
METHODS = ("pipeline", "regression")
PHONON_KINDS = ("none", "deformation-potential", "inGaAs-deformation", "ohmic")  # the middle two are synonyms
FIT_MODELS = ("PpdModel", "InitialDropModel")
INITIAL_STATES = ("psi_s", "psi_a", "ee", "gg")

# sane ranges for numerics (inclusive)
NUMERIC_RANGES = dict(
    dt=(1e-3, 1.0),
    t_mem=(0.1, 100.0),
    svd_threshold=(1e-14, 1e-3),
    max_bond=(1, 4096),
    tau_fine=(0.0, 1e3),
    tau_max=(1.0, 1e6),
    n_coarse=(0, 100000),
    stationarity_tol=(1e-14, 1e-3),
)


# -- unit parsing -------------------------------------------------------------

def _number(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not finite: {text!r}")
    return value


def parse_time(text: str) -> float:
    """``"1.76 ns"`` -> 1760.0 (ps)."""
    m = re.fullmatch(r"\s*(\S+)\s*([a-zA-Z]+)\s*", text)
    if not m or m.group(2) not in TIME_UNITS:
        raise ValueError(f"expected a time with unit {'/'.join(TIME_UNITS)}, got {text!r}")
    return _number(m.group(1)) * TIME_UNITS[m.group(2)]


def parse_rate(text: str) -> float:
    """Rate in 1/ps from ``"0.5 /ns"``, ``"0.5 ns^-1"`` or ``"1/1.76 ns"``."""
    s = text.strip()
    m = re.fullmatch(r"1\s*/\s*(\S+)\s*([a-zA-Z]+)", s)
    if m and m.group(2) in TIME_UNITS:
        life = _number(m.group(1)) * TIME_UNITS[m.group(2)]
        if life <= 0:
            raise ValueError(f"lifetime must be positive in {text!r}")
        return 1.0 / life
    m = re.fullmatch(r"(\S+)\s*(?:/\s*([a-zA-Z]+)|([a-zA-Z]+)\s*\^\s*-1)", s)
    unit = m and (m.group(2) or m.group(3))
    if not m or unit not in TIME_UNITS:
        raise ValueError(f"expected a rate like '0.5 /ns', '0.5 ns^-1' or '1/1.76 ns', got {text!r}")
    return _number(m.group(1)) / TIME_UNITS[unit]


def parse_energy(text: str) -> float:
    """``"2.9 meV"`` -> 2.9 (meV)."""
    m = re.fullmatch(r"\s*(\S+)\s*([a-zA-Z]+)\s*", text)
    if not m or m.group(2).lower() not in ENERGY_UNITS:
        raise ValueError(f"expected an energy in meV/eV, got {text!r}")
    return _number(m.group(1)) * ENERGY_UNITS[m.group(2).lower()]


def parse_temperature(text: str) -> float:
    m = re.fullmatch(r"\s*(\S+)\s*K\s*", text)
    if not m:
        raise ValueError(f"expected a temperature in K, got {text!r}")
    value = _number(m.group(1))
    if value < 0:
        raise ValueError("temperature must be >= 0 K")
    return value


def _with_unit(unit: str):
    def parse(text: str) -> float:
        m = re.fullmatch(r"\s*(\S+)\s*(\S+)\s*", text)
        if not m or m.group(2) != unit:
            raise ValueError(f"expected a value in {unit}, got {text!r}")
        return _number(m.group(1))
    return parse


def parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _choice(options):
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return value
    return parse


def _list_of(options):
    def parse(text: str) -> tuple:
        items = tuple(x.strip() for x in text.split(",") if x.strip())
        for item in items:
            if item not in options:
                raise ValueError(f"unknown entry {item!r}; expected {', '.join(options)}")
        return items
    return parse


def parse_normalization(text: str) -> float:
    low = text.strip().lower()
    if low == "textbook":
        return TEXTBOOK_NORMALIZATION
    if low == "bare":
        return BARE_NORMALIZATION
    value = _number(low)
    if value <= 0:
        raise ValueError("normalization must be positive")
    return value


def fmt_time(ps: float) -> str:
    return f"{ps!r} ps"


def fmt_rate(per_ps: float) -> str:
    return f"{per_ps!r} /ps"


# -- config objects -----------------------------------------------------------

@dataclass(frozen=True)
class PhononConfig:
    kind: str = "none"
    temperature: float | None = None  # K
    # deformation potential
    d_e: float = 7.0  # eV
    d_h: float = -3.5  # eV
    electron_confinement: float = 2.9  # meV
    hole_confinement: float = 4.4  # meV
    mass_density: float = 5370.0  # kg/m^3
    sound_speed: float = 5110.0  # m/s
    normalization: float = TEXTBOOK_NORMALIZATION
    # ohmic
    alpha: float = 7.5e-5
    cutoff: float = 4.0  # meV

    def spectral_density(self) -> SpectralDensity | None:
        if self.kind == "none":
            return None
        if self.temperature is None:
            raise ConfigError("phonons need a temperature", field="temperature")
        if self.kind in ("deformation-potential", "inGaAs-deformation"):
            return DeformationPotentialSD(self.mass_density, self.sound_speed, self.d_e, self.d_h,
                                          omega_from_mev(self.electron_confinement),
                                          omega_from_mev(self.hole_confinement), self.temperature,
                                          self.normalization)
        return OhmicSD(self.alpha, omega_from_mev(self.cutoff), self.temperature)


@dataclass(frozen=True)
class ExperimentConfig:
    """One curve: a scenario plus what to do with it."""

    name: str
    kind: str = "g2"
    geometry: str = "measurement-induced"
    gamma: float = 1.0 / 1760.0  # 1/ps
    gamma_p: float = 1.0 / 1760.0
    gamma_d: float = 0.0
    ppd_extra: float = 0.0
    phonons: PhononConfig = field(default_factory=PhononConfig)
    method: str = "pipeline"
    fits: tuple = ()
    convolve: bool = False
    t_max: float = 20.0  # ps, coherence runs
    stride: int = 1
    initial: str = "psi_s"
    note: str = ""

    def scenario(self, numerics: Numerics) -> Scenario:
        geometry = Geometry(self.geometry)
        spec = LindbladSpec(self.gamma, self.gamma_p, self.gamma_d, geometry.decay_mode)
        return Scenario(spec, geometry, self.phonons.spectral_density(), self.ppd_extra, numerics)


@dataclass(frozen=True)
class SuiteConfig:
    tag: str = "custom"
    experiments: tuple = ()
    numerics: Numerics = field(default_factory=Numerics)
    fit_window: tuple = (1.0, math.inf)  # ps
    irf_fwhm: float | None = None  # ps

    def experiment(self, name: str) -> ExperimentConfig:
        for exp in self.experiments:
            if exp.name == name:
                return exp
        raise KeyError(name)


# -- parsing ------------------------------------------------------------------

PHONON_KEYS = {
    "phonons": ("kind", _choice(PHONON_KINDS)),
    "temperature": ("temperature", parse_temperature),
    "d_e": ("d_e", _with_unit("eV")),
    "d_h": ("d_h", _with_unit("eV")),
    "electron_confinement": ("electron_confinement", parse_energy),
    "hole_confinement": ("hole_confinement", parse_energy),
    "mass_density": ("mass_density", _with_unit("kg/m^3")),
    "sound_speed": ("sound_speed", _with_unit("m/s")),
    "normalization": ("normalization", parse_normalization),
    "alpha": ("alpha", _number),
    "cutoff": ("cutoff", parse_energy),
}

EXPERIMENT_KEYS = {
    "kind": _choice(KINDS),
    "geometry": _choice([g.value for g in Geometry]),
    "gamma": parse_rate,
    "gamma_p": parse_rate,
    "gamma_d": parse_rate,
    "ppd_extra": parse_rate,
    "method": _choice(METHODS),
    "fits": _list_of(FIT_MODELS),
    "convolve": parse_bool,
    "t_max": parse_time,
    "stride": parse_int,
    "initial": _choice(INITIAL_STATES),
    "note": str.strip,
}

NUMERICS_KEYS = {
    "dt": parse_time,
    "t_mem": parse_time,
    "svd_threshold": _number,
    "max_bond": parse_int,
    "tau_fine": parse_time,
    "tau_max": parse_time,
    "n_coarse": parse_int,
    "richardson": parse_bool,
    "stationarity_tol": _number,
}


def _sections(text: str):
    """Yield ``(section, header_line, [(key, value, line)])``."""
    current, head, items = None, 0, []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            if current is not None:
                yield current, head, items
            current, head, items = " ".join(line[1:-1].split()), lineno, []
            if current in seen:
                raise ConfigError(f"duplicate section [{current}]", line=lineno)
            seen.add(current)
            continue
        if current is None:
            raise ConfigError("key outside of a section", line=lineno)
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key = key.strip()
        if any(k == key for k, _, _ in items):
            raise ConfigError("duplicate key", field=key, line=lineno)
        items.append((key, value.strip(), lineno))
    if current is not None:
        yield current, head, items


def _convert(parser, key, value, lineno):
    try:
        return parser(value)
    except ValueError as exc:
        raise ConfigError(str(exc), field=key, line=lineno) from None


def parse_config(text: str) -> SuiteConfig:
    """Parse config text; raises ``ConfigError`` naming the line and field."""
    tag = "custom"
    num_values, fit_window, irf = {}, [1.0, math.inf], None
    experiments = []
    for section, head, items in _sections(text):
        if section == "output":
            for key, value, ln in items:
                if key != "tag":
                    raise ConfigError("unknown key in [output]", field=key, line=ln)
                tag = value
        elif section == "numerics":
            for key, value, ln in items:
                if key not in NUMERICS_KEYS:
                    raise ConfigError("unknown key in [numerics]", field=key, line=ln)
                num_values[key] = (_convert(NUMERICS_KEYS[key], key, value, ln), ln)
        elif section == "fit":
            for key, value, ln in items:
                if key == "window_start":
                    fit_window[0] = _convert(parse_time, key, value, ln)
                elif key == "window_end":
                    fit_window[1] = math.inf if value.strip() == "inf" else _convert(parse_time, key, value, ln)
                else:
                    raise ConfigError("unknown key in [fit]", field=key, line=ln)
        elif section == "postprocess":
            for key, value, ln in items:
                if key != "irf_fwhm":
                    raise ConfigError("unknown key in [postprocess]", field=key, line=ln)
                irf = _convert(parse_time, key, value, ln)
                if irf <= 0:
                    raise ConfigError("must be positive", field=key, line=ln)
        elif section.startswith("experiment "):
            experiments.append(_parse_experiment(section.split(" ", 1)[1], head, items))
        else:
            raise ConfigError(f"unknown section [{section}]", line=head)
    if not experiments:
        raise ConfigError("config defines no [experiment NAME] section")
    names = [e.name for e in experiments]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names must be unique")
    numerics = _build_numerics(num_values)
    if fit_window[0] > fit_window[1]:
        raise ConfigError("window_start exceeds window_end", field="window_start")
    return SuiteConfig(tag, tuple(experiments), numerics, tuple(fit_window), irf)


def _parse_experiment(name: str, head: int, items) -> ExperimentConfig:
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise ConfigError(f"experiment name {name!r} may only use letters, digits, '_', '-', '.'", line=head)
    values, phonon_values = {}, {}
    lines = {}
    for key, value, ln in items:
        lines[key] = ln
        if key in EXPERIMENT_KEYS:
            values[key] = _convert(EXPERIMENT_KEYS[key], key, value, ln)
        elif key in PHONON_KEYS:
            attr, parser = PHONON_KEYS[key]
            phonon_values[attr] = _convert(parser, key, value, ln)
        else:
            raise ConfigError(f"unknown key in [experiment {name}]", field=key, line=ln)
    for rate in ("gamma", "gamma_p", "gamma_d", "ppd_extra"):
        if values.get(rate, 0.0) < 0:
            raise ConfigError("rates must be >= 0", field=rate, line=lines[rate])
    for required in ("gamma", "gamma_p"):
        if required not in values:
            raise ConfigError(f"[experiment {name}] needs a value", field=required, line=head)
    phonons = PhononConfig(**phonon_values)
    if phonons.kind != "none" and phonons.temperature is None:
        raise ConfigError(f"[experiment {name}] has phonons but no temperature", field="temperature", line=head)
    if values.get("stride", 1) < 1:
        raise ConfigError("must be >= 1", field="stride", line=lines["stride"])
    exp = ExperimentConfig(name=name, phonons=phonons, **values)
    if exp.method == "regression" and phonons.kind != "none":
        raise ConfigError("the regression method needs phonons = none", field="method", line=lines["method"])
    if exp.kind == "coherence" and (exp.fits or exp.convolve):
        raise ConfigError("fits and convolution apply to g2 experiments only", line=head)
    return exp


def _build_numerics(values: dict) -> Numerics:
    plain = {}
    for key, (value, ln) in values.items():
        if key in NUMERIC_RANGES:
            lo, hi = NUMERIC_RANGES[key]
            if not lo <= value <= hi:
                raise ConfigError(f"{value!r} outside the sane range [{lo:g}, {hi:g}]", field=key, line=ln)
        plain[key] = value
    dt = plain.get("dt", Numerics.dt)
    t_mem = plain.get("t_mem", Numerics.t_mem)
    if dt > t_mem:
        raise ConfigError(f"dt ({dt} ps) exceeds t_mem ({t_mem} ps)", field="dt", line=values.get("dt", (0, None))[1])
    try:
        return Numerics(**plain)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> SuiteConfig:
    with open(path) as fh:
        return parse_config(fh.read())


# -- writing --------------------------------------------------------------------

def dump_config(cfg: SuiteConfig) -> str:
    """Text that ``parse_config`` maps back to ``cfg``."""
    out = ["[output]", f"tag = {cfg.tag}", "", "[numerics]"]
    num = cfg.numerics
    for f in fields(Numerics):
        value = getattr(num, f.name)
        if f.name in ("dt", "t_mem", "tau_fine", "tau_max"):
            out.append(f"{f.name} = {fmt_time(value)}")
        elif isinstance(value, bool):
            out.append(f"{f.name} = {'true' if value else 'false'}")
        else:
            out.append(f"{f.name} = {value!r}")
    out += ["", "[fit]", f"window_start = {fmt_time(cfg.fit_window[0])}",
            "window_end = " + ("inf" if math.isinf(cfg.fit_window[1]) else fmt_time(cfg.fit_window[1]))]
    if cfg.irf_fwhm is not None:
        out += ["", "[postprocess]", f"irf_fwhm = {fmt_time(cfg.irf_fwhm)}"]
    for exp in cfg.experiments:
        out += ["", f"[experiment {exp.name}]"] + _dump_experiment(exp)
    return "\n".join(out) + "\n"


def _dump_experiment(exp: ExperimentConfig) -> list:
    lines = [f"kind = {exp.kind}", f"geometry = {exp.geometry}", f"method = {exp.method}"]
    for rate in ("gamma", "gamma_p", "gamma_d", "ppd_extra"):
        lines.append(f"{rate} = {fmt_rate(getattr(exp, rate))}")
    if exp.fits:
        lines.append("fits = " + ", ".join(exp.fits))
    lines.append(f"convolve = {'true' if exp.convolve else 'false'}")
    if exp.kind == "coherence":
        lines += [f"t_max = {fmt_time(exp.t_max)}", f"stride = {exp.stride}", f"initial = {exp.initial}"]
    if exp.note:
        lines.append(f"note = {exp.note}")
    ph = exp.phonons
    lines.append(f"phonons = {ph.kind}")
    if ph.temperature is not None:
        lines.append(f"temperature = {ph.temperature!r} K")
    if ph.kind in ("deformation-potential", "inGaAs-deformation"):
        lines += [f"d_e = {ph.d_e!r} eV", f"d_h = {ph.d_h!r} eV",
                  f"electron_confinement = {ph.electron_confinement!r} meV",
                  f"hole_confinement = {ph.hole_confinement!r} meV",
                  f"mass_density = {ph.mass_density!r} kg/m^3", f"sound_speed = {ph.sound_speed!r} m/s",
                  f"normalization = {ph.normalization!r}"]
    elif ph.kind == "ohmic":
        lines += [f"alpha = {ph.alpha!r}", f"cutoff = {ph.cutoff!r} meV"]
    return lines


def with_numerics(cfg: SuiteConfig, **changes) -> SuiteConfig:
    return replace(cfg, numerics=replace(cfg.numerics, **changes))
