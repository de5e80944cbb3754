"""
Finite-size comparison of isokinetic and isoenergetic steady states, and
the certification suite that runs every physics check in one go.

State points are matched IE -> IK: an IE run at H0 = N h0 measures the mean
kinetic energy, which then becomes K0 for the IK partner runs.
"""

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .analysis import (
    BlockStats, block_average, check_proposition, lyapunov_spectrum, steady_state,
    stationarity_residual, volume_averaged_alphas, alpha_gap,
)
from .forces import ForceFieldSpec, grad_V, hessian_V, total_potential
from .geometry import PhasePoint, SystemSpec
from .integrator import IntegratorConfig, initialize, run, vector_field
from .thermostats import ThermostatMode

__all__ = [
    "EquivalenceStudyConfig", "EquivalenceRow", "EquivalenceReport", "MatchedState",
    "match_state_points", "run_equivalence_study", "CheckResult",
    "run_certification_suite", "run_seed",
]

ROLES = {"match": 0, "ik": 1, "ie": 2}


@dataclass(frozen=True)
class EquivalenceStudyConfig:
    sizes: tuple = (16, 32, 64, 128, 256)
    density: float = 0.4
    xi_magnitude: float = 0.5
    h0: float = 1.5
    steps: int = 200_000
    transient: float = 0.2
    seeds: int = 4
    record_every: int = 10
    dt: float = 1e-3
    wall_dims: int = 0
    torus_dims: int = 2
    pair_epsilon: float = 1.0
    pair_range: float = 1.0
    charges: str = "alternating"
    mass: float = 1.0
    base_seed: int = 0
    workers: int = 1
    n_blocks: int = 8

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(sorted(int(n) for n in self.sizes)))
        if len(self.sizes) < 3:
            raise ValueError("the size ladder needs at least 3 sizes")
        if self.seeds < 2:
            raise ValueError("need at least 2 seeds per size")
        if not 0 <= self.transient < 1:
            raise ValueError("transient fraction must lie in [0, 1)")

    def system(self, n):
        return SystemSpec.at_density(n, self.density, self.wall_dims, self.torus_dims, self.mass)

    def forces(self):
        xi = np.zeros(self.wall_dims + self.torus_dims)
        xi[self.wall_dims if self.torus_dims else 0] = self.xi_magnitude
        return ForceFieldSpec(self.pair_epsilon, self.pair_range, tuple(xi), self.charges)


def run_seed(config, n, role, k):
    """Deterministic seed for run k of a given role at size n."""
    ss = np.random.SeedSequence([config.base_seed, n, ROLES[role], k])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _steady_run(config, n, kind, target, seed):
    """One run; returns steady-state statistics of the intensive observables."""
    spec = config.system(n)
    ff = config.forces()
    mode = ThermostatMode(kind)
    cfg = IntegratorConfig(dt=config.dt, target=target)
    x0 = initialize(seed, spec, ff, mode, target)
    rec = run(x0, cfg, mode, spec, ff, config.steps, config.record_every)
    seg, settled = steady_state(rec, kind, config.transient, config.n_blocks)
    nb = config.n_blocks
    return {
        "N": n, "kind": kind, "seed": seed, "target": target, "settled": settled,
        "K": block_average(seg.K, nb, integrated=True),
        "J": block_average(seg.J, nb, integrated=True),
        "V_per_N": block_average(seg.V / n, nb, integrated=True),
        "alpha": block_average(seg.alpha, nb, integrated=True),
        "max_residual": rec.max_residual,
    }


def _task(args):
    config, n, kind, target, seed = args
    return _steady_run(config, n, kind, target, seed)


def _map(config, jobs):
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_task, jobs))
    return [_task(j) for j in jobs]


def _pool(stats):
    """Mean over seeds with the pooled standard error sqrt(sum se^2)/n."""
    means = np.array([s.mean for s in stats])
    ses = np.array([s.stderr for s in stats])
    n = len(stats)
    return BlockStats(float(means.mean()), float(np.sqrt(np.sum(ses ** 2)) / n),
                      stats[0].n_blocks * n, stats[0].block_len)


@dataclass
class MatchedState:
    k0: float
    stderr: float
    per_seed: list

    def __float__(self):
        return self.k0


def match_state_points(n, config, _runs=None):
    """K0 for the IK partner of an IE system at H0 = N h0."""
    h0_total = n * config.h0
    if _runs is None:
        jobs = [(config, n, "IE", h0_total, run_seed(config, n, "match", k))
                for k in range(config.seeds)]
        _runs = _map(config, jobs)
    pooled = _pool([r["K"] for r in _runs])
    return MatchedState(pooled.mean, pooled.stderr, [r["K"].mean for r in _runs])


@dataclass
class EquivalenceRow:
    N: int
    K0: float
    K0_stderr: float
    J_IK: BlockStats
    J_IE: BlockStats
    V_IK: BlockStats
    V_IE: BlockStats
    alpha_IK: BlockStats
    alpha_IE: BlockStats
    settled: bool

    @staticmethod
    def _delta(a, b):
        return a.mean - b.mean, float(np.hypot(a.stderr, b.stderr))

    @property
    def dJ(self):
        return self._delta(self.J_IK, self.J_IE)

    @property
    def dV(self):
        return self._delta(self.V_IK, self.V_IE)

    @property
    def dalpha(self):
        return self._delta(self.alpha_IK, self.alpha_IE)

    def as_dict(self):
        d = asdict(self)
        d["dJ"], d["dV_per_N"], d["dalpha"] = self.dJ, self.dV, self.dalpha
        return d


@dataclass
class EquivalenceReport:
    rows: list
    config: EquivalenceStudyConfig

    def row(self, n):
        return next(r for r in self.rows if r.N == n)

    def current_gap_shrinks(self):
        """|dJ(N_max)| < |dJ(N_min)|."""
        return abs(self.rows[-1].dJ[0]) < abs(self.rows[0].dJ[0])

    def alpha_gap_trend(self, n_sigma=3.0):
        """
        Per size: |dalpha(N)| does not exceed |dalpha(N_min)| by more than
        n_sigma combined standard errors.
        """
        ref = abs(self.rows[0].dalpha[0])
        return [abs(r.dalpha[0]) <= ref + n_sigma * r.dalpha[1] for r in self.rows]

    def intensive_spread(self):
        """Relative spread (max - min)/mean of K0/N over the ladder."""
        k = np.array([r.K0 / r.N for r in self.rows])
        return float((k.max() - k.min()) / k.mean())

    def table(self):
        lines = ["    N        K0/N      J_IK              J_IE              dJ                dV/N              dalpha"]
        for r in self.rows:
            fmt = lambda s: f"{s.mean: .5f}+-{s.stderr:.5f}"
            pair = lambda d: f"{d[0]: .5f}+-{d[1]:.5f}"
            lines.append(f"{r.N:5d}  {r.K0 / r.N:9.5f}  {fmt(r.J_IK)}  {fmt(r.J_IE)}  "
                         f"{pair(r.dJ)}  {pair(r.dV)}  {pair(r.dalpha)}")
        return "\n".join(lines)


def _persist(out_dir, row):
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"equivalence_N{row.N:05d}.json")
    with open(path, "w") as fh:
        json.dump(row.as_dict(), fh, indent=1, default=_jsonable)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def run_equivalence_study(config, out_dir=None):
    """
    For every N: match K0 from IE runs, then run IK at K0 and IE at H0 from
    fresh seeds, and compare steady-state current, potential energy per
    particle and friction. Completed sizes are written to ``out_dir``.
    """
    ie_jobs, match_jobs = [], []
    for n in config.sizes:
        for k in range(config.seeds):
            match_jobs.append((config, n, "IE", n * config.h0, run_seed(config, n, "match", k)))
            ie_jobs.append((config, n, "IE", n * config.h0, run_seed(config, n, "ie", k)))
    first = _map(config, match_jobs + ie_jobs)
    by_n = {n: {"match": [], "ie": []} for n in config.sizes}
    for job, res in zip(match_jobs + ie_jobs, first):
        role = "match" if job in match_jobs else "ie"
        by_n[job[1]][role].append(res)

    matched = {n: match_state_points(n, config, by_n[n]["match"]) for n in config.sizes}
    ik_jobs = [(config, n, "IK", matched[n].k0, run_seed(config, n, "ik", k))
               for n in config.sizes for k in range(config.seeds)]
    ik_res = _map(config, ik_jobs)
    for job, res in zip(ik_jobs, ik_res):
        by_n[job[1]].setdefault("ik", []).append(res)

    rows = []
    for n in config.sizes:
        ik, ie = by_n[n]["ik"], by_n[n]["ie"]
        row = EquivalenceRow(
            N=n, K0=matched[n].k0, K0_stderr=matched[n].stderr,
            J_IK=_pool([r["J"] for r in ik]), J_IE=_pool([r["J"] for r in ie]),
            V_IK=_pool([r["V_per_N"] for r in ik]), V_IE=_pool([r["V_per_N"] for r in ie]),
            alpha_IK=_pool([r["alpha"] for r in ik]), alpha_IE=_pool([r["alpha"] for r in ie]),
            settled=all(r["settled"] for r in ik + ie + by_n[n]["match"]),
        )
        _persist(out_dir, row)
        rows.append(row)
    return EquivalenceReport(rows, config)


@dataclass
class CheckResult:
    name: str
    passed: bool
    evidence: dict = field(default_factory=dict)
    error: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        ev = ", ".join(f"{k}={_short(v)}" for k, v in self.evidence.items())
        tail = f" [{self.error}]" if self.error else ""
        return f"{status}  {self.name}: {ev}{tail}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


@dataclass(frozen=True)
class CertificationSettings:
    """Sizes and run lengths of the certification checks."""

    n_constraint: int = 64
    constraint_steps: int = 20_000
    n_gauge: int = 16
    gauge_steps: int = 10_000
    n_stationarity: int = 64
    stationarity_steps: int = 200_000
    stationarity_xi: float = 0.2
    n_proposition: int = 16
    proposition_alpha: float = 1.0
    proposition_k0: float = 200.0
    proposition_density: float = 0.8
    proposition_steps: int = 400_000
    lyapunov_steps: int = 1_000_000
    lyapunov_xi: float = 0.2
    lyapunov_h0: float = 0.5
    lyapunov_density: float = 0.75
    order_time: float = 2.0
    density: float = 0.4
    h0: float = 1.5
    seed: int = 7


def _check(name, fn):
    try:
        passed, evidence = fn()
        return CheckResult(name, bool(passed), evidence)
    except Exception as exc:  # the suite reports, never raises
        return CheckResult(name, False, {}, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def _color_ff(xi, d=2, **kw):
    v = np.zeros(d)
    v[-1 if d == 1 else 0] = xi
    return ForceFieldSpec(1.0, 1.0, tuple(v), "alternating", **kw)


def ie_identity_residual(x, spec, ff, mode):
    """|dH/dt| from the vector field at x: p.pdot/m + dV/dq.p/m."""
    dq, dp = vector_field(x, mode, spec, ff)
    gv = grad_V(x, spec, ff)
    return abs(float(np.dot(dp.ravel(), dq.ravel()) + np.dot(gv.ravel(), dq.ravel())))


def _constraint_checks(s):
    out = []
    spec = SystemSpec.at_density(s.n_constraint, s.density)
    ff = _color_ff(0.5)
    for kind in ("IK", "IE"):
        def fn(kind=kind):
            mode = ThermostatMode(kind)
            target = s.n_constraint * s.h0
            cfg = IntegratorConfig(target=target)
            x0 = initialize(s.seed, spec, ff, mode, target)
            rec = run(x0, cfg, mode, spec, ff, s.constraint_steps, 100)
            obs = rec.K if kind == "IK" else rec.H
            drift = float(np.max(np.abs(obs / target - 1.0)))
            ev = {"max_rel_dev": drift, "max_pre_projection": rec.max_residual}
            ok = drift < 1e-10 and rec.max_residual < 1e-8
            if kind == "IE":
                worst = 0.0
                x = x0
                for _ in range(5):
                    worst = max(worst, ie_identity_residual(x, spec, ff, mode))
                    x = run(x, cfg, mode, spec, ff, 1000, 1000).final_state
                ev["max_dHdt"] = worst
                ok = ok and worst < 1e-12
            return ok, ev
        out.append(_check(f"constraint_{kind}", fn))
    return out


def _gauge_check(s):
    def fn():
        # a wall along dimension 0 keeps g.q single-valued for the IE energy
        spec = SystemSpec(1, 1, (np.sqrt(s.n_gauge / s.density),) * 2, s.n_gauge)
        base = ForceFieldSpec(1.0, 1.0, (0.0, 0.5), "alternating")
        shifted = replace(base, gauge_shift=(0.3, 0.0))
        ev = {}
        ok = True
        for kind in ("IK", "IE"):
            mode = ThermostatMode(kind)
            target = s.n_gauge * s.h0
            x0 = initialize(s.seed, spec, base, mode, target)
            cfg_a = IntegratorConfig(target=target)
            cfg_b = IntegratorConfig(target=target + (total_potential(x0, spec, shifted)
                                                      - total_potential(x0, spec, base))
                                     if kind == "IE" else target)
            a = run(x0, cfg_a, mode, spec, base, s.gauge_steps, s.gauge_steps)
            b = run(x0, cfg_b, mode, spec, shifted, s.gauge_steps, s.gauge_steps)
            diff = max(np.max(np.abs(a.final_state.q - b.final_state.q)),
                       np.max(np.abs(a.final_state.p - b.final_state.p)))
            ev[f"{kind}_max_diff"] = float(diff)
            ok = ok and (diff <= 1e-12 if kind == "IK" else diff > 1e-6)
        return ok, ev
    return _check("gauge_invariance", fn)


def _stationarity_check(s):
    def fn():
        n = s.n_stationarity
        spec = SystemSpec.at_density(n, s.density)
        ff = _color_ff(s.stationarity_xi)
        mode = ThermostatMode("IE")
        cfg = IntegratorConfig(target=n * s.h0)
        x0 = initialize(s.seed, spec, ff, mode, cfg.target)
        rec = run(x0, cfg, mode, spec, ff, s.stationarity_steps, 10)
        seg, settled = steady_state(rec, "IE")
        st = stationarity_residual(seg)
        ik, ie = volume_averaged_alphas(seg, spec, ff)
        gap = alpha_gap(seg, spec)
        ok = st.within(3.0) and gap.within(3.0)
        return ok, {"stat_mean": st.mean, "stat_se": st.stderr, "alpha_IK'": ik.mean,
                    "alpha_IE'": ie.mean, "gap": gap.mean, "gap_se": gap.stderr,
                    "settled": settled}
    return _check("stationarity", fn)


def _proposition_checks(s):
    res = {}

    def fn_bounds():
        n = s.n_proposition
        spec = SystemSpec.at_density(n, s.proposition_density)
        ff = _color_ff(0.5)
        mode = ThermostatMode.constant(s.proposition_alpha)
        cfg = IntegratorConfig(target=s.proposition_k0)
        x0 = initialize(s.seed, spec, ff, mode, cfg.target)
        rec = run(x0, cfg, mode, spec, ff, s.proposition_steps, 10)
        rep = check_proposition(rec, spec, ff, cfg)
        res["report"] = rep
        ok = rep.descent_verified and rep.descent_samples > 0 and rep.bound5_ok and rep.bound6_ok
        return ok, {"bound5": rep.bound5_rhs, "max_H": rep.post_transient_max_H_like,
                    "bound6": rep.bound6_rhs, "max_p2": rep.post_transient_max_p2,
                    "descent_samples": rep.descent_samples}

    def fn_closed():
        spec = SystemSpec(0, 1, (10.0,), 1)
        ff = ForceFieldSpec(0.0, 1.0, (0.5,))
        alpha = 1.0
        mode = ThermostatMode.constant(alpha)
        cfg = IntegratorConfig(dt=1e-3)
        x0 = PhasePoint([[1.0]], [[2.0]])
        rec = run(x0, cfg, mode, spec, ff, 40_000, 10)
        rep = check_proposition(rec, spec, ff, cfg, eps_tol=1e-7)
        b = rep.bound6_rhs
        ok = b - 1e-3 <= rep.post_transient_max_p2 <= b + 1e-6
        return ok, {"bound6": b, "max_p2": rep.post_transient_max_p2}

    def fn_identity():
        rep = res.get("report")
        if rep is None:
            raise RuntimeError("bounds run did not complete")
        ev = {}
        ok = True
        for name, st in rep.identity7_values.items():
            ev[f"mean[{name}]"] = st.mean
            ev[f"se[{name}]"] = st.stderr
            ev[f"decay[{name}]"] = rep.identity7_decay[name]
            ok = ok and st.within(3.0) and rep.identity7_decay[name] > 1.4
        return ok, ev

    return [_check("proposition_bounds", fn_bounds),
            _check("proposition_closed_form", fn_closed),
            _check("proposition_identity", fn_identity)]


def _lyapunov_check(s):
    def fn():
        # a strongly chaotic state; near-laminar states pair trivially
        n = 4
        spec = SystemSpec.at_density(n, s.lyapunov_density)
        ff = _color_ff(s.lyapunov_xi)
        mode = ThermostatMode("IE")
        cfg = IntegratorConfig(target=n * s.lyapunov_h0)
        x0 = initialize(s.seed, spec, ff, mode, cfg.target)
        x0 = run(x0, cfg, mode, spec, ff, 20_000, 20_000).final_state
        rep = lyapunov_spectrum(x0, cfg, mode, spec, ff, s.lyapunov_steps)
        rel = abs(rep.sum_exponents - rep.contraction_average) / abs(rep.contraction_average)
        near_zero = float(np.min(np.abs(rep.exponents)))
        spread = rep.pairing_scores[rep.best_exclusion]
        ok = rel < 0.02 and near_zero < 0.02 and spread < 0.05
        return ok, {"sum": rep.sum_exponents, "contraction": rep.contraction_average,
                    "rel_err": rel, "min_abs": near_zero, "pair_spread": spread,
                    "exclusion": rep.best_exclusion, "c": rep.pairing_center}
    return _check("lyapunov", fn)


def rk4_order_ratio(spec, ff, mode, x0, target, dt, horizon):
    """Projection work (summed pre-projection residual) at 2 dt over that at dt."""
    acc = []
    for h in (dt, 2 * dt):
        cfg = IntegratorConfig(dt=h, target=target)
        n = int(round(horizon / h))
        acc.append(run(x0, cfg, mode, spec, ff, n, n).sum_residual)
    return acc[1] / acc[0], acc


def _order_check(s):
    def fn():
        # IE: its per-step residual sits well above roundoff at dt = 1e-3
        n = 64
        spec = SystemSpec.at_density(n, s.density)
        ff = _color_ff(0.5)
        mode = ThermostatMode("IE")
        x0 = initialize(s.seed, spec, ff, mode, n * s.h0)
        ratio, acc = rk4_order_ratio(spec, ff, mode, x0, n * s.h0, 1e-3, s.order_time)
        return 8 <= ratio <= 32, {"ratio": ratio, "sum_resid_dt": acc[0], "sum_resid_2dt": acc[1]}
    return _check("rk4_order", fn)


def _oracle_check(s):
    def fn():
        rng = np.random.default_rng(s.seed)
        spec = SystemSpec(0, 2, (3.0, 3.0), 6)
        ff = ForceFieldSpec(1.0, 1.0)
        x = PhasePoint(rng.uniform(0, 3.0, (6, 2)), np.zeros((6, 2)))
        g = grad_V(x, spec, ff)
        h = 1e-6
        fd = np.zeros_like(g)
        for i in range(6):
            for k in range(2):
                xp, xm = x.copy(), x.copy()
                xp.q[i, k] += h
                xm.q[i, k] -= h
                fd[i, k] = (total_potential(xp, spec, ff) - total_potential(xm, spec, ff)) / (2 * h)
        gerr = float(np.max(np.abs(fd - g)))
        H = hessian_V(x, spec, ff)
        hfd = np.zeros_like(H)
        for a in range(12):
            xp, xm = x.copy(), x.copy()
            xp.q.ravel()[a] += h
            xm.q.ravel()[a] -= h
            hfd[:, a] = (grad_V(xp, spec, ff) - grad_V(xm, spec, ff)).ravel() / (2 * h)
        herr = float(np.max(np.abs(hfd - H)))
        big = SystemSpec.at_density(256, s.density)
        xb = initialize(s.seed, big, ff, ThermostatMode("IK"), 256.0)
        cerr = float(np.max(np.abs(grad_V(xb, big, ff, "cells") - grad_V(xb, big, ff, "direct"))))
        ok = gerr < 1e-6 and herr < 1e-5 and cerr < 1e-12
        return ok, {"grad_fd": gerr, "hess_fd": herr, "cells_vs_direct": cerr}
    return _check("oracles", fn)


def run_certification_suite(settings=None):
    """Run every check; failures and exceptions are reported, not raised."""
    s = settings or CertificationSettings()
    results = []
    results += _constraint_checks(s)
    results.append(_gauge_check(s))
    results.append(_stationarity_check(s))
    results += _proposition_checks(s)
    results.append(_lyapunov_check(s))
    results.append(_order_check(s))
    results.append(_oracle_check(s))
    return results
