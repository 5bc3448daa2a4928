"""INI run configuration with strict key checking.

Every value is read through :class:`RunConfig`, which records the keys it
has consumed; :meth:`RunConfig.finish` rejects leftovers so a typo never
passes silently.  Errors carry the ``section.key`` path.
"""
from __future__ import annotations

import configparser
import math

from .errors import ConfigError
from .synthdata import DiskMode, Domain, RectMode

_MISSING = object()


def _parser():
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str  # keys are case sensitive (R, N_b)
    return p


class RunConfig:
    def __init__(self, parser=None):
        self._p = parser or _parser()
        self._used = {}

    @classmethod
    def from_file(cls, path):
        p = _parser()
        try:
            with open(path) as fh:
                p.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(str(path), f"unparseable config: {exc}") from None
        return cls(p)

    @classmethod
    def from_string(cls, text):
        p = _parser()
        try:
            p.read_string(text)
        except configparser.Error as exc:
            raise ConfigError("<string>", f"unparseable config: {exc}") from None
        return cls(p)

    def sections(self, prefix=None):
        names = self._p.sections()
        if prefix is None:
            return names
        return [s for s in names if s == prefix or s.startswith(prefix + ".")]

    def has(self, section, key=None):
        if key is None:
            return self._p.has_section(section)
        return self._p.has_option(section, key)

    def raw(self, section, key, default=_MISSING):
        self._used.setdefault(section, set()).add(key)
        if self._p.has_option(section, key):
            return self._p.get(section, key).strip()
        if default is _MISSING:
            raise ConfigError(f"{section}.{key}", "required key is missing")
        return default

    def get_str(self, section, key, default=_MISSING, choices=None):
        v = self.raw(section, key, default)
        if choices is not None and v not in choices:
            raise ConfigError(f"{section}.{key}", f"must be one of {sorted(choices)}, got {v!r}")
        return v

    def get_float(self, section, key, default=_MISSING, lo=None, hi=None, lo_open=False):
        v = self.raw(section, key, default)
        path = f"{section}.{key}"
        try:
            x = float(v)
        except (TypeError, ValueError):
            raise ConfigError(path, f"not a number: {v!r}") from None
        if not math.isfinite(x):
            raise ConfigError(path, "must be finite")
        if lo is not None and (x < lo or (lo_open and x == lo)):
            raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {x}")
        if hi is not None and x > hi:
            raise ConfigError(path, f"must be <= {hi}, got {x}")
        return x

    def get_int(self, section, key, default=_MISSING, lo=None, hi=None):
        v = self.raw(section, key, default)
        path = f"{section}.{key}"
        try:
            x = int(str(v))
        except (TypeError, ValueError):
            raise ConfigError(path, f"not an integer: {v!r}") from None
        if lo is not None and x < lo:
            raise ConfigError(path, f"must be >= {lo}, got {x}")
        if hi is not None and x > hi:
            raise ConfigError(path, f"must be <= {hi}, got {x}")
        return x

    def get_list(self, section, key, default=_MISSING, sep=","):
        v = self.raw(section, key, default)
        if isinstance(v, (list, tuple)):
            return list(v)
        return [p.strip() for p in str(v).split(sep) if p.strip()]

    def get_float_list(self, section, key, default=_MISSING, lo=None, lo_open=False):
        items = self.get_list(section, key, default)
        out = []
        for it in items:
            try:
                x = float(it)
            except (TypeError, ValueError):
                raise ConfigError(f"{section}.{key}", f"not a number: {it!r}") from None
            if not math.isfinite(x) or (lo is not None and (x < lo or (lo_open and x == lo))):
                raise ConfigError(f"{section}.{key}", f"invalid entry {it!r}")
            out.append(x)
        return out

    def finish(self, allowed_sections):
        """Reject sections or keys that no reader consumed."""
        for sec in self._p.sections():
            base = sec.split(".", 1)[0]
            if base not in allowed_sections:
                raise ConfigError(sec, "unknown section")
            used = self._used.get(sec, set())
            for key in self._p.options(sec):
                if key not in used:
                    raise ConfigError(f"{sec}.{key}", "unknown key")


def read_domain(cfg, section="domain"):
    kind = cfg.get_str(section, "kind", "disk", choices=("disk", "rect"))
    if kind == "disk":
        return Domain.disk(cfg.get_float(section, "R", 1.0, lo=0, lo_open=True))
    return Domain.rectangle(
        cfg.get_float(section, "a", lo=0, lo_open=True),
        cfg.get_float(section, "b", lo=0, lo_open=True),
    )


def read_modes(cfg, domain):
    """Mode list from ``[mode]`` / ``[mode.<name>]`` sections, in file order."""
    names = cfg.sections("mode")
    if not names:
        raise ConfigError("mode", "at least one [mode] section is required")
    modes = []
    for sec in names:
        try:
            if domain.kind == "disk":
                modes.append(DiskMode(
                    cfg.get_int(sec, "m", 0, lo=0),
                    cfg.get_int(sec, "k", 1, lo=1),
                    cfg.get_str(sec, "azimuth", "cos", choices=("cos", "sin")),
                    cfg.get_float(sec, "amplitude", 1.0),
                    cfg.get_float(sec, "t_phase", 0.0),
                ))
            else:
                modes.append(RectMode(
                    cfg.get_int(sec, "n", 1, lo=1),
                    cfg.get_int(sec, "m", 1, lo=1),
                    cfg.get_float(sec, "amplitude", 1.0),
                    cfg.get_float(sec, "t_phase", 0.0),
                ))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(sec, str(exc)) from None
    return modes


def read_target(cfg, section, key="target"):
    vals = cfg.get_float_list(section, key)
    if len(vals) != 3:
        raise ConfigError(f"{section}.{key}", "expected 'x, y, t'")
    return vals
