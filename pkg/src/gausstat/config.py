"""
TOML run configuration with a strict schema, record CSV output and the
run manifest.

Schema (defaults in parentheses)::

    [system]      u (0), v (2), N (64), m (1.0), box (from N and density)
    [forces]      eps (1.0), rc (1.0), xi (0.5), gauge_shift (none),
                  charges ("alternating")
    [thermostat]  kind ("IK"), alpha_const (1.0), mtilde (1.0),
                  vtilde_eps (0.0), vtilde_rc (1.0)
    [integrator]  dt (1e-3), steps (100000), record_every (10),
                  projection (true), reflection_tol (1e-12), k0 (h0),
                  reorth_every (10)
    [study]       sizes ([16, 32, 64, 128, 256]), density (0.4), h0 (1.5),
                  seeds (4), transient (0.2), seed (0), workers (1)

``xi`` is either a magnitude, placed along the first periodic dimension, or
a full d-vector. ``k0`` is the kinetic (or total) energy per particle used
as the constraint target of ``simulate``; it defaults to ``h0``.
"""

import csv
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone

import numpy as np
import tomli

from .errors import ParseError, ValidationError
from .forces import ForceFieldSpec
from .geometry import SystemSpec
from .integrator import RECORD_FIELDS, IntegratorConfig, Records
from .thermostats import KINDS, ThermostatMode

__all__ = [
    "Config", "parse_config", "parse_config_text", "emit_records", "read_records",
    "RunManifest", "config_hash", "CONSTANT_HYPOTHESIS",
]

CONSTANT_HYPOTHESIS = "α, m are constants >0"


@dataclass(frozen=True)
class SystemSection:
    u: int = 0
    v: int = 2
    N: int = 64
    m: float = 1.0
    box: object = None


@dataclass(frozen=True)
class ForcesSection:
    eps: float = 1.0
    rc: float = 1.0
    xi: object = 0.5
    gauge_shift: object = None
    charges: str = "alternating"


@dataclass(frozen=True)
class ThermostatSection:
    kind: str = "IK"
    alpha_const: float = 1.0
    mtilde: float = 1.0
    vtilde_eps: float = 0.0
    vtilde_rc: float = 1.0


@dataclass(frozen=True)
class IntegratorSection:
    dt: float = 1e-3
    steps: int = 100_000
    record_every: int = 10
    projection: bool = True
    reflection_tol: float = 1e-12
    k0: object = None
    reorth_every: int = 10


@dataclass(frozen=True)
class StudySection:
    sizes: tuple = (16, 32, 64, 128, 256)
    density: float = 0.4
    h0: float = 1.5
    seeds: int = 4
    transient: float = 0.2
    seed: int = 0
    workers: int = 1


SECTIONS = {
    "system": SystemSection,
    "forces": ForcesSection,
    "thermostat": ThermostatSection,
    "integrator": IntegratorSection,
    "study": StudySection,
}


def _freeze(v):
    if isinstance(v, list):
        return tuple(_freeze(x) for x in v)
    return v


@dataclass(frozen=True)
class Config:
    system: SystemSection = field(default_factory=SystemSection)
    forces: ForcesSection = field(default_factory=ForcesSection)
    thermostat: ThermostatSection = field(default_factory=ThermostatSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    study: StudySection = field(default_factory=StudySection)

    def system_spec(self, n=None):
        s = self.system
        n = s.N if n is None else n
        if s.box is None:
            return SystemSpec.at_density(n, self.study.density, s.u, s.v, s.m)
        return SystemSpec(s.u, s.v, s.box, n, s.m)

    def force_field(self):
        f = self.forces
        d = self.system.u + self.system.v
        if isinstance(f.xi, tuple):
            xi = f.xi
        else:
            vec = np.zeros(d)
            vec[self.system.u if self.system.v else 0] = f.xi
            xi = tuple(vec)
        return ForceFieldSpec(f.eps, f.rc, xi, f.charges, f.gauge_shift)

    def thermostat_mode(self):
        t = self.thermostat
        return ThermostatMode(t.kind, t.alpha_const, t.mtilde, t.vtilde_eps, t.vtilde_rc)

    def target(self, n=None):
        """Constraint target for a run of n particles: N times k0."""
        n = self.system.N if n is None else n
        k0 = self.integrator.k0 if self.integrator.k0 is not None else self.study.h0
        return n * k0

    def integrator_config(self, n=None):
        i = self.integrator
        return IntegratorConfig(i.dt, self.target(n), i.projection, i.reflection_tol)

    def study_config(self, workers=None, steps=None):
        from .driver import EquivalenceStudyConfig
        s, f = self.study, self.forces
        xi = f.xi if not isinstance(f.xi, tuple) else float(np.linalg.norm(f.xi))
        return EquivalenceStudyConfig(
            sizes=s.sizes, density=s.density, xi_magnitude=float(xi), h0=s.h0,
            steps=self.integrator.steps if steps is None else steps,
            transient=s.transient, seeds=s.seeds,
            record_every=self.integrator.record_every, dt=self.integrator.dt,
            wall_dims=self.system.u, torus_dims=self.system.v,
            pair_epsilon=f.eps, pair_range=f.rc, charges=f.charges, mass=self.system.m,
            base_seed=s.seed, workers=s.workers if workers is None else workers,
        )

    def as_dict(self):
        return asdict(self)


def _line_of(text, section, key):
    """1-based line where ``key`` is assigned inside ``[section]``."""
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[\s*([^\]]+?)\s*\]", stripped)
        if m:
            current = m.group(1)
            if section is not None and key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
            return i
    return None


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _validate(cfg):
    s, f, t, i, st = cfg.system, cfg.forces, cfg.thermostat, cfg.integrator, cfg.study
    _require(s.m > 0, f"mass m = {s.m}: {CONSTANT_HYPOTHESIS}")
    _require(t.alpha_const > 0, f"alpha_const = {t.alpha_const}: {CONSTANT_HYPOTHESIS}")
    _require(t.kind in KINDS, f"thermostat kind {t.kind!r} is not one of {sorted(KINDS)}")
    _require(t.mtilde > 0, f"mtilde = {t.mtilde} must be > 0")
    _require(s.u >= 0 and s.v >= 0 and s.u + s.v >= 1, "need u, v >= 0 and u + v >= 1")
    _require(s.N >= 1, f"N = {s.N} must be >= 1")
    _require(f.eps >= 0 and f.rc > 0, "need eps >= 0 and rc > 0")
    _require(f.charges in ("uniform", "alternating"), f"charges {f.charges!r} unknown")
    _require(i.dt > 0, f"dt = {i.dt} must be > 0")
    _require(i.steps >= 0, "steps must be >= 0")
    _require(i.record_every >= 1 and i.reorth_every >= 1, "record_every, reorth_every must be >= 1")
    _require(i.reflection_tol > 0, "reflection_tol must be > 0")
    _require(st.density > 0, "density must be > 0")
    _require(len(st.sizes) >= 3, "the size ladder needs at least 3 sizes")
    _require(st.seeds >= 2, "need at least 2 seeds per size")
    _require(0 <= st.transient < 1, "transient fraction must lie in [0, 1)")
    _require(st.workers >= 1, "workers must be >= 1")
    d = s.u + s.v
    if isinstance(f.xi, tuple):
        _require(len(f.xi) == d, f"xi has {len(f.xi)} components, the system has d = {d}")
    try:
        spec = cfg.system_spec()
        ff = cfg.force_field()
        ff.check(spec)
        ff.field_arrays(spec)
        mode = cfg.thermostat_mode()
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if mode.kind == "IE" and ff.gauge_shift is not None:
        g = np.broadcast_to(np.asarray(ff.gauge_shift, dtype=float), (s.N, d))
        _require(not np.any(g[:, s.u:]), "an IE run needs a single-valued energy: "
                 "gauge_shift must vanish along periodic dimensions")


def parse_config_text(text):
    """Parse and validate configuration text; see the module docstring."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else None
        raise ParseError(f"line {line}: {exc}" if line else str(exc), line=line) from None
    parts = {}
    for name, table in doc.items():
        if name not in SECTIONS:
            line = _line_of(text, name, None)
            raise ParseError(f"line {line}: unknown section [{name}]", line=line)
        if not isinstance(table, dict):
            raise ParseError(f"'{name}' must be a [section]", line=_line_of(text, None, name))
        allowed = {f.name: f for f in fields(SECTIONS[name])}
        kwargs = {}
        for key, value in table.items():
            if key not in allowed:
                line = _line_of(text, name, key)
                raise ParseError(f"line {line}: unknown key '{key}' in [{name}]", line=line)
            kwargs[key] = _freeze(value)
        try:
            parts[name] = SECTIONS[name](**kwargs)
        except TypeError as exc:
            raise ParseError(str(exc)) from None
    cfg = Config(**parts)
    _check_types(cfg, text)
    _validate(cfg)
    return cfg


def _check_types(cfg, text):
    numeric = (int, float)
    for sec_name in SECTIONS:
        sec = getattr(cfg, sec_name)
        default = SECTIONS[sec_name]()
        for f in fields(sec):
            v, d = getattr(sec, f.name), getattr(default, f.name)
            if d is None or v is d:
                continue
            ok = True
            if isinstance(d, bool):
                ok = isinstance(v, bool)
            elif isinstance(d, int):
                ok = isinstance(v, int) and not isinstance(v, bool)
            elif isinstance(d, float):
                ok = isinstance(v, numeric) and not isinstance(v, bool)
            elif isinstance(d, str):
                ok = isinstance(v, str)
            elif isinstance(d, tuple):
                ok = isinstance(v, tuple)
            if not ok:
                line = _line_of(text, sec_name, f.name)
                raise ParseError(f"line {line}: [{sec_name}] {f.name} has the wrong type "
                                 f"({type(v).__name__})", line=line)


def parse_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def config_hash(cfg):
    """sha256 over the canonical JSON of every parameter."""
    blob = json.dumps(cfg.as_dict(), sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


def emit_records(records, path):
    """CSV with a fixed header and 17 significant digits per value."""
    data = records.data if isinstance(records, Records) else np.asarray(records, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RECORD_FIELDS) + "\n")
        for row in data.reshape(-1, len(RECORD_FIELDS)):
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    return path


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RECORD_FIELDS:
            raise ValueError(f"unexpected header {header}")
        rows = [[float(v) for v in row] for row in reader]
    return Records(np.array(rows, dtype=float).reshape(-1, len(RECORD_FIELDS)))


@dataclass
class RunManifest:
    config_hash: str
    seeds: list
    version: str
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    @staticmethod
    def now():
        return datetime.now(timezone.utc).isoformat()

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=1)
        return path
