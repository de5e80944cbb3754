"""
Time integration of the thermostatted equations of motion

    dp/dt = -dV/dq + xi - alpha p,    dq/dt = p/m

with classical RK4, elastic reflection at walls located by bisection in
time, and rescaling of p back onto the constraint surface after each step.
"""

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import InfeasibleEnergy, MaxReflections, PackingFailure, ZeroMomentum
from .forces import ForceFieldSpec, total_force, total_potential
from .geometry import PhasePoint, SystemSpec, minimum_image
from .thermostats import ThermostatMode, alpha_for

__all__ = [
    "IntegratorConfig", "StepReport", "ObservableRecord", "Records",
    "initialize", "vector_field", "step", "run",
    "save_checkpoint", "load_checkpoint", "RECORD_FIELDS",
]

RECORD_FIELDS = ("t", "K", "H", "alpha", "J", "V", "heat_rate", "stat_residual")

MAX_PACKING_ATTEMPTS = 10 ** 6
MAX_ENERGY_RESAMPLES = 100
MIN_SEPARATION = 0.8


@dataclass(frozen=True)
class IntegratorConfig:
    """
    ``target`` is the conserved value: K0 for IK (and the initial kinetic
    energy for constant alpha), H0 for IE, or the generalized energy.
    """

    dt: float = 1e-3
    target: float = 1.0
    projection: bool = True
    reflection_tol: float = 1e-12

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.reflection_tol <= 0:
            raise ValueError("reflection_tol must be > 0")


@dataclass
class StepReport:
    state: PhasePoint
    alpha_used: float
    reflections: int
    constraint_residual_before_projection: float


class ObservableRecord(NamedTuple):
    t: float
    K: float
    H: float
    alpha: float
    J: float
    V: float
    heat_rate: float
    stat_residual: float


class Records:
    """
    Recorded observables, one row per record, columns as in RECORD_FIELDS.

    Columns are available as attributes (``rec.K``); iteration yields
    ObservableRecord tuples. ``final_state`` is the phase point after the
    last step.
    """

    def __init__(self, data, final_state=None, steps=0, max_residual=0.0,
                 sum_residual=0.0, reflections=0):
        self.data = np.asarray(data, dtype=float).reshape(-1, len(RECORD_FIELDS))
        self.final_state = final_state
        self.steps = steps
        self.max_residual = max_residual
        self.sum_residual = sum_residual
        self.reflections = reflections

    def __len__(self):
        return self.data.shape[0]

    def __iter__(self):
        for row in self.data:
            yield ObservableRecord(*row)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Records(self.data[i])
        return ObservableRecord(*self.data[i])

    def __getattr__(self, name):
        if name in RECORD_FIELDS:
            return self.data[:, RECORD_FIELDS.index(name)]
        raise AttributeError(name)

    def after(self, fraction):
        """Drop the leading ``fraction`` of records (transient)."""
        start = int(round(fraction * len(self)))
        return self[start:]


def _check_gauge(spec, ff, mode):
    if mode.kind != "IE" or ff.gauge_shift is None:
        return
    _, g = ff.field_arrays(spec)
    if np.any(g[:, spec.wall_dims:] != 0):
        raise ValueError("an IE run needs a single-valued energy: the gauge shift "
                         "must vanish along periodic dimensions")


def _pack(spec, ff, mode, target):
    _check_gauge(spec, ff, mode)
    xi, g = ff.field_arrays(spec)
    prm = np.array([spec.mass, ff.pair_epsilon, ff.pair_range, mode.alpha_const,
                    mode.mtilde, mode.vtilde_epsilon, mode.vtilde_range, target],
                   dtype=float)
    iprm = np.array([spec.wall_dims, mode.code, ff.cells], dtype=np.int64)
    mag = ff.field_magnitude
    jnorm = 1.0 / (spec.n_particles * spec.mass * mag) if mag > 0 else 0.0
    return spec.box, prm, iprm, xi, np.ascontiguousarray(xi + g), jnorm


def _raise(err, what=""):
    if err == K.OK:
        return
    if err == K.ERR_ZERO_MOMENTUM:
        raise ZeroMomentum(f"p^2 vanished {what}".strip())
    if err == K.ERR_INFEASIBLE:
        raise InfeasibleEnergy(f"constraint needs negative kinetic energy {what}; "
                               "dt is probably too large".strip())
    if err == K.ERR_MAX_REFLECTIONS:
        raise MaxReflections(f"more than {K.MAX_REFLECTIONS} reflections in one step {what}".strip())
    raise RuntimeError(f"kernel error code {err}")


def _sample_positions(rng, spec, rc):
    n, d = spec.n_particles, spec.dim
    box = spec.box
    q = np.empty((n, d))
    dmin2 = (MIN_SEPARATION * rc) ** 2
    attempts = 0
    for i in range(n):
        while True:
            attempts += 1
            if attempts > MAX_PACKING_ATTEMPTS:
                raise PackingFailure(
                    f"placed {i} of {n} particles in {MAX_PACKING_ATTEMPTS} attempts")
            trial = rng.uniform(0.0, 1.0, d) * box
            if i == 0:
                break
            dq = minimum_image(q[:i] - trial, spec)
            if np.min(np.sum(dq * dq, axis=1)) >= dmin2:
                break
        q[i] = trial
    return q


def initialize(seed, spec, ffield, mode, target):
    """
    Random start: positions uniform with minimum pair separation 0.8 rc,
    Gaussian momenta with zero total momentum (N > 1), rescaled so the
    mode's constrained energy equals ``target`` exactly.
    """
    ffield.check(spec)
    rng = np.random.default_rng(seed)
    n, d = spec.n_particles, spec.dim
    vt = mode.vtilde()
    for _ in range(MAX_ENERGY_RESAMPLES):
        q = _sample_positions(rng, spec, ffield.pair_range)
        p = rng.standard_normal((n, d))
        if n > 1:
            p -= p.mean(axis=0)
        x = PhasePoint(q, p)
        if mode.kind in ("IK", "constant"):
            kin, m = target, spec.mass
        elif mode.kind == "IE":
            kin, m = target - total_potential(x, spec, ffield), spec.mass
        else:
            kin, m = target - total_potential(x, spec, vt), mode.mtilde
        if kin > 0:
            x.p *= np.sqrt(2.0 * m * kin / x.p2())
            return x
    raise InfeasibleEnergy(
        f"target energy {target} lies below the potential energy of "
        f"{MAX_ENERGY_RESAMPLES} sampled configurations")


def vector_field(x, mode, spec, ffield):
    """(dq/dt, dp/dt) at x."""
    alpha = alpha_for(mode, x, spec, ffield)
    return x.p / spec.mass, total_force(x, spec, ffield) - alpha * x.p


def step(x, cfg, mode, spec, ffield):
    box, prm, iprm, xi, xi_full, _ = _pack(spec, ffield, mode, cfg.target)
    q, p = x.q.copy(), x.p.copy()
    w = K.workspace(*q.shape)
    alpha, nref, resid, err = K.full_step(q, p, cfg.dt, cfg.reflection_tol, cfg.projection,
                                          box, prm, iprm, xi, xi_full, xi_full - xi, w)
    _raise(err)
    return StepReport(PhasePoint(q, p), alpha, nref, resid)


def run(x0, cfg, mode, spec, ffield, n_steps, record_every=1, step0=0):
    """
    Advance ``n_steps`` steps from ``x0``. Records are taken at the start
    and after every ``record_every`` steps; ``step0`` offsets the clock so a
    continued run lines up with the original.
    """
    if n_steps < 0 or record_every < 1:
        raise ValueError("need n_steps >= 0 and record_every >= 1")
    box, prm, iprm, xi, xi_full, jnorm = _pack(spec, ffield, mode, cfg.target)
    q, p = x0.q.copy(), x0.p.copy()
    rec = np.zeros((n_steps // record_every + 1, len(RECORD_FIELDS)))
    stats = np.zeros(4)
    nrec, err = K.run_loop(q, p, n_steps, record_every, step0, cfg.dt, cfg.reflection_tol,
                           cfg.projection, box, prm, iprm, xi, xi_full, jnorm, rec, stats)
    _raise(err, f"at step {step0 + int(stats[3]) + 1}")
    return Records(rec[:nrec], PhasePoint(q, p), steps=int(stats[3]),
                   max_residual=stats[0], sum_residual=stats[1], reflections=int(stats[2]))


def save_checkpoint(path, state, spec, ffield, mode, cfg, step_index, seed):
    """JSON snapshot; floats are written with repr so they reload bit-exactly."""
    doc = {
        "format": "gausstat-checkpoint/1",
        "spec": asdict(spec),
        "ffield": asdict(ffield),
        "mode": asdict(mode),
        "cfg": asdict(cfg),
        "step": int(step_index),
        "seed": seed,
        "q": state.q.tolist(),
        "p": state.p.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    ff = doc["ffield"]
    if ff["gauge_shift"] is not None:
        ff["gauge_shift"] = np.array(ff["gauge_shift"])
    return {
        "spec": SystemSpec(**doc["spec"]),
        "ffield": ForceFieldSpec(**ff),
        "mode": ThermostatMode(**doc["mode"]),
        "cfg": IntegratorConfig(**doc["cfg"]),
        "step": doc["step"],
        "seed": doc["seed"],
        "state": PhasePoint(np.array(doc["q"]), np.array(doc["p"])),
    }
