"""INI run configurations for the experiment drivers.

A file holds one section, ``[accuracy]`` or ``[bistability]``. Unknown keys
are rejected so that typos do not silently fall back to defaults.

Example::

    [accuracy]
    k = 5
    q = 1
    h0 = 0.1
    methods = fem-adaptive, fem-uniform
    stop = max_elements:50000
"""
import configparser
from dataclasses import asdict, dataclass, fields

import numpy as np

from .problem import PENALTY


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


METHODS = ("fem-adaptive", "fem-uniform", "cipfem-adaptive", "cipfem-uniform")


def _parse_stop(text):
    kind, _, value = text.partition(":")
    kind = kind.strip()
    if kind not in ("estimator_factor", "max_elements", "iterations") or not value:
        raise ConfigError(f"bad stop rule {text!r}; use kind:value")
    return kind, float(value)


def _parse_schedule(text):
    """``a:b:n`` (n evenly spaced values) or a comma-separated list."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        a, b, n = text.split(":")
        return tuple(float(x) for x in np.linspace(float(a), float(b), int(n)))
    return tuple(float(x) for x in text.split(","))


@dataclass
class AccuracyConfig:
    k: float = 5.0
    q: float = 1.0
    R: float = 0.25
    h0: float = 0.1
    methods: tuple = ("fem-adaptive",)
    theta_D: float = 0.4
    b: int = 1
    gamma_re: float = PENALTY.real
    gamma_im: float = PENALTY.imag
    stop: tuple = ("iterations", 10.0)
    max_iterations: int = 60
    tol_newton: float = 1e-9
    rate_window: int = 6
    projection: bool = False
    max_elements_cap: int = 2_000_000

    @property
    def gamma(self):
        return complex(self.gamma_re, self.gamma_im)

    def validate(self):
        if self.k <= 0 or self.q <= 0 or self.R <= 0 or self.h0 <= 0:
            raise ConfigError("k, q, R and h0 must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"methods must be drawn from {METHODS}, got {bad}")
        if not 0 < self.theta_D <= 1 or self.b < 1:
            raise ConfigError("need 0 < theta_D <= 1 and b >= 1")
        if self.rate_window < 2:
            raise ConfigError("rate_window must be at least 2")
        if self.gamma_im < 0:
            raise ConfigError("gamma_im must be non-negative")


@dataclass
class BistabilityConfig:
    m: int = 20
    k0: float = 9.6
    contrast: float = 2.5
    epsilon: float = 1e-12
    I_up: tuple = tuple(float(x) for x in np.linspace(0.0, 6e5, 20))
    I_down: tuple = ()
    I_mid: tuple = ()
    markers: tuple = ()
    gamma_re: float = PENALTY.real
    gamma_im: float = PENALTY.imag
    tol_newton: float = 1e-9
    max_newton: int = 50
    max_halvings: int = 5
    jump_threshold: float = 0.25

    @property
    def gamma(self):
        return complex(self.gamma_re, self.gamma_im)

    def validate(self):
        if self.m < 2 or self.m % 2:
            raise ConfigError("m must be an even integer >= 2")
        if min(self.k0, self.contrast) <= 0 or self.epsilon < 0:
            raise ConfigError("k0 and contrast must be positive, epsilon non-negative")
        if not self.I_up:
            raise ConfigError("I_up must contain at least one intensity")
        if any(I < 0 for I in self.I_up + self.I_down + self.I_mid):
            raise ConfigError("intensities must be non-negative")
        for label, _, _ in self.markers:
            if not label:
                raise ConfigError("marker labels must be non-empty")


def _markers(text):
    """``A:300000:up, B:300000:mid`` -> ((label, I, branch), ...)."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3 or parts[2] not in ("up", "down", "mid"):
            raise ConfigError(f"bad marker {item!r}; use label:I:up|down|mid")
        out.append((parts[0], float(parts[1]), parts[2]))
    return tuple(out)


_CONVERTERS = {
    "methods": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "stop": _parse_stop,
    "I_up": _parse_schedule,
    "I_down": _parse_schedule,
    "I_mid": _parse_schedule,
    "markers": _markers,
    "projection": lambda s: s.strip().lower() in ("1", "yes", "true", "on"),
}

SECTIONS = {"accuracy": AccuracyConfig, "bistability": BistabilityConfig}


def _build(cls, section, items):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, text in items:
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        conv = _CONVERTERS.get(key)
        try:
            if conv is not None:
                kwargs[key] = conv(text)
            else:
                kind = type(known[key].default)
                kwargs[key] = kind(float(text)) if kind is int else kind(text)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
    cfg = cls(**kwargs)
    cfg.validate()
    return cfg


def load_config(path, section):
    """Parse ``path`` and return the dataclass of ``section``.

    Raises
    ------
    FileNotFoundError
        If ``path`` does not exist.
    ConfigError
        On syntax errors, unknown keys or invalid values.
    """
    if section not in SECTIONS:
        raise ConfigError(f"unknown section {section!r}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    with open(path) as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    if not parser.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    extra = [s for s in parser.sections() if s != section]
    if extra:
        raise ConfigError(f"unexpected sections {extra}")
    return _build(SECTIONS[section], section, parser.items(section))


def config_to_dict(cfg):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
