"""
Steady-state statistics and the checks built on them: block error bars,
the large-volume friction estimators, the stationarity residual, Lyapunov
spectra, and the constant-friction bounds.

Time averages of recorded series integrate the samples with Simpson's rule,
so the average of an exact time derivative equals (end - start) / duration
up to a fourth-order quadrature error. Error bars come from block means.
"""

import math
import statistics
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import _kernels as K
from .errors import DegenerateFrame, TooShort, TransientNotEnded, ZeroMomentum
from .forces import xi_at
from .geometry import PhasePoint
from .integrator import _pack

__all__ = [
    "BlockStats", "LyapunovReport", "PropositionReport", "block_average",
    "time_average", "steady_state", "volume_averaged_alphas", "alpha_gap",
    "stationarity_residual", "lyapunov_spectrum", "pairing", "check_proposition",
]

DEFAULT_BLOCKS = 8


@dataclass(frozen=True)
class BlockStats:
    mean: float
    stderr: float
    n_blocks: int
    block_len: int

    def within(self, n_sigma=3.0, value=0.0):
        return abs(self.mean - value) <= n_sigma * self.stderr


def _blocks(series, n_blocks):
    x = np.asarray(series, dtype=float)
    if n_blocks < 4:
        raise ValueError("need at least 4 blocks")
    if x.size < 4 * n_blocks:
        raise TooShort(f"{x.size} samples cannot fill {n_blocks} blocks of 4")
    blen = x.size // n_blocks
    # the leading remainder is dropped: it is the part nearest the transient
    return x[x.size - blen * n_blocks:].reshape(n_blocks, blen), blen


def time_average(series):
    """Simpson-rule average of a uniformly sampled series over its time span."""
    x = np.asarray(series, dtype=float)
    if x.size < 3:
        return float(x.mean())
    return float(simpson(x, dx=1.0) / (x.size - 1))


def _block_means(b):
    # correctly rounded sums: blocks with equal contents get equal means
    return np.array([math.fsum(row) for row in b]) / b.shape[1]


def _sem(means):
    # statistics.stdev works in exact arithmetic, so equal means give exactly 0
    return float(statistics.stdev(means.tolist()) / np.sqrt(means.size))


def block_average(series, n_blocks=DEFAULT_BLOCKS, integrated=False):
    """
    Mean with a block standard error.

    The standard error is the sample standard deviation of the block means
    over sqrt(n_blocks). With ``integrated=True`` the reported mean is the
    time average (Simpson rule) of the whole series instead of the mean of
    block means.
    """
    b, blen = _blocks(series, n_blocks)
    means = _block_means(b)
    se = _sem(means)
    mean = time_average(series) if integrated else float(means.mean())
    return BlockStats(mean, se, n_blocks, blen)


def _ratio(num, den, n_blocks):
    """Ratio of time averages with a delta-method block error."""
    bn, blen = _blocks(num, n_blocks)
    bd, _ = _blocks(den, n_blocks)
    mn, md = time_average(num), time_average(den)
    r = mn / md
    lin = (_block_means(bn) - r * _block_means(bd)) / md
    return BlockStats(r, _sem(lin), n_blocks, blen)


def steady_state(records, kind, fraction=0.2, n_blocks=DEFAULT_BLOCKS):
    """
    Drop the leading ``fraction`` of the records. Also report whether the
    free energy-like observable (K for IE, H otherwise) has settled: the means
    over the last two quarters differ by less than one combined standard error.
    """
    seg = records.after(fraction)
    obs = seg.K if kind == "IE" else seg.H
    n = len(obs)
    q3, q4 = obs[n // 2: 3 * n // 4], obs[3 * n // 4:]
    try:
        s3 = block_average(q3, 4)
        s4 = block_average(q4, 4)
    except TooShort:
        return seg, False
    sig = np.hypot(s3.stderr, s4.stderr)
    settled = abs(s3.mean - s4.mean) <= sig or sig == 0 and s3.mean == s4.mean
    return seg, bool(settled)


def _dot_series(records, spec):
    m = spec.mass
    p2 = 2.0 * m * records.K
    xp = m * records.heat_rate + records.alpha * p2
    gradvp = m * records.stat_residual
    return p2, xp, gradvp


def volume_averaged_alphas(records, spec, ffield=None, n_blocks=DEFAULT_BLOCKS):
    """
    Large-volume friction estimators from one steady-state segment:

        alpha_IK' = <(-dV/dq + xi).p> / <p.p>,   alpha_IE' = <xi.p> / <p.p>

    with averages per unit volume over time. The dot products are rebuilt
    from the recorded K, alpha, heat rate and stationarity integrand.
    """
    p2, xp, gradvp = _dot_series(records, spec)
    vol = spec.volume
    ik = _ratio((xp - gradvp) / vol, p2 / vol, n_blocks)
    ie = _ratio(xp / vol, p2 / vol, n_blocks)
    return ik, ie


def alpha_gap(records, spec, n_blocks=DEFAULT_BLOCKS):
    """alpha_IK' - alpha_IE' = -<dV/dq.p>/<p.p>, with its own block error."""
    p2, _, gradvp = _dot_series(records, spec)
    return _ratio(-gradvp, p2, n_blocks)


def stationarity_residual(records, n_blocks=DEFAULT_BLOCKS):
    """Time average of dV/dq.p/m over the segment, with a block error."""
    return block_average(records.stat_residual, n_blocks, integrated=True)


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    pairing_center: float
    pairing_residuals: np.ndarray
    sum_exponents: float
    contraction_average: float
    best_exclusion: int = 0
    pairing_scores: dict = field(default_factory=dict)
    centers: dict = field(default_factory=dict)


def pairing(exponents, exclude):
    """
    Pair sums after dropping the ``exclude`` exponents nearest zero.
    Returns (sums, center c, relative spread std(sums)/|2c|).
    """
    lam = np.sort(np.asarray(exponents, dtype=float))[::-1]
    if exclude:
        drop = np.argsort(np.abs(lam), kind="stable")[:exclude]
        lam = np.delete(lam, drop)
    half = lam.size // 2
    sums = lam[:half] + lam[::-1][:half]
    c = float(sums.mean() / 2.0)
    spread = float(sums.std() / abs(2.0 * c)) if c != 0 else np.inf
    return sums, c, spread


def lyapunov_spectrum(x0, cfg, mode, spec, ffield, n_steps, reorth_every=10,
                      exclusions=(0, 1, 2)):
    """
    Full Lyapunov spectrum from tangent-space RK4 with periodic QR.

    ``contraction_average`` is the time average of the phase-space
    divergence -(D-1) alpha, D = N d, which holds for both IK and IE.
    """
    if spec.wall_dims != 0:
        raise ValueError("Lyapunov spectra are only computed for fully periodic systems")
    if mode.kind not in ("IK", "IE"):
        raise ValueError("Lyapunov spectra need an IK or IE thermostat")
    if spec.n_particles > 8:
        raise ValueError("tangent dynamics is limited to N <= 8")
    box, prm, iprm, xi, xi_full, _ = _pack(spec, ffield, mode, cfg.target)
    q, p = x0.q.copy(), x0.p.copy()
    D2 = 2 * q.size
    W = np.eye(D2)
    logs = np.zeros(D2)
    div = np.zeros(1)
    err = K.lyapunov_loop(q, p, W, n_steps, reorth_every, cfg.dt, cfg.projection,
                          box, prm, iprm, xi, xi_full, logs, div)
    if err == K.ERR_DEGENERATE_FRAME:
        raise DegenerateFrame("QR produced a vanishing diagonal")
    if err == K.ERR_ZERO_MOMENTUM:
        raise ZeroMomentum("p^2 vanished during tangent propagation")
    if err != K.OK:
        raise RuntimeError(f"kernel error code {err}")
    T = n_steps * cfg.dt
    lam = np.sort(logs / T)[::-1]
    scores, centers = {}, {}
    for k in exclusions:
        _, c, spread = pairing(lam, k)
        scores[k], centers[k] = spread, c
    best = min(scores, key=scores.get)
    sums0, _, _ = pairing(lam, 0)
    report = LyapunovReport(
        exponents=lam,
        pairing_center=centers[best],
        pairing_residuals=sums0 - 2.0 * centers[best],
        sum_exponents=float(lam.sum()),
        contraction_average=float(div[0] / T),
        best_exclusion=best,
        pairing_scores=scores,
        centers=centers,
    )
    report.final_state = PhasePoint(q, p)
    return report


@dataclass
class PropositionReport:
    bound5_rhs: float
    bound6_rhs: float
    post_transient_max_H_like: float
    post_transient_max_p2: float
    identity7_values: dict
    descent_verified: bool
    identity7_decay: dict = field(default_factory=dict)
    eps_tol: float = 0.0
    transient_end_time: float = 0.0
    descent_samples: int = 0
    mass: float = 1.0

    @property
    def bound5_ok(self):
        return self.post_transient_max_H_like <= self.bound5_rhs + self.eps_tol

    @property
    def bound6_ok(self):
        # eps_tol is an energy; p^2 = 2m (H - V) carries it as 2 m eps_tol
        return self.post_transient_max_p2 <= self.bound6_rhs + 2.0 * self.mass * self.eps_tol


IDENTITY7_PHI = {
    "1": lambda x: np.ones_like(x),
    "x": lambda x: x,
    "x^2": lambda x: x * x,
}


def proposition_bounds(spec, ffield, alpha):
    """Right-hand sides of the two lim-sup bounds for constant friction."""
    if ffield.gauge_shift is not None:
        raise ValueError("the bounds are evaluated for an unshifted potential")
    m = spec.mass
    x = PhasePoint(np.zeros((spec.n_particles, spec.dim)), np.zeros((spec.n_particles, spec.dim)))
    xi2 = float(np.sum(xi_at(x, spec, ffield) ** 2))
    vmax, vmin = ffield.max_potential(spec.n_particles), 0.0
    b5 = xi2 / (2.0 * m * alpha ** 2) + vmax
    b6 = xi2 / alpha ** 2 + 2.0 * m * (vmax - vmin)
    return b5, b6


def check_proposition(records, spec, ffield, cfg=None, eps_tol=None, descent_margin=0.1,
                      n_blocks=DEFAULT_BLOCKS):
    """
    Certify the constant-friction bounds and ergodic identity on a run.

    The transient ends at the first record with H <= bound5 + eps_tol. The
    default eps_tol is 1e-6 plus three standard deviations of H over the
    second half of the run. Descent is checked on consecutive records while
    H stays above bound5 + descent_margin * bound5. The identity averages
    Phi(K) (xi.p - alpha p^2) over the post-transient segment for
    Phi in {1, x, x^2}; the decay ratio compares the average over the first
    quarter of that segment with the average over all of it.
    """
    alpha = records.alpha
    if not np.all(alpha == alpha[0]) or alpha[0] <= 0:
        raise ValueError("records must come from a constant-alpha run with alpha > 0")
    m = spec.mass
    b5, b6 = proposition_bounds(spec, ffield, float(alpha[0]))
    H = records.H
    p2 = 2.0 * m * records.K
    if eps_tol is None:
        eps_tol = 1e-6 + 3.0 * float(np.std(H[len(H) // 2:]))
    below = np.nonzero(H <= b5 + eps_tol)[0]
    if below.size == 0:
        raise TransientNotEnded(
            f"H stayed above {b5 + eps_tol:.6g} for the whole run (min {H.min():.6g})")
    start = int(below[0])

    above = H[:-1] >= b5 + descent_margin * b5
    steps_down = np.diff(H) < 0
    descent_ok = bool(np.all(steps_down[above]))

    post = records[start:]
    kin = post.K
    work = m * post.heat_rate
    values, decay = {}, {}
    quarter = len(post) // 4
    for name, phi in IDENTITY7_PHI.items():
        integrand = phi(kin) * work
        try:
            values[name] = block_average(integrand, n_blocks, integrated=True)
        except TooShort:
            values[name] = BlockStats(time_average(integrand), np.inf, 0, 0)
        short = abs(time_average(integrand[: quarter + 1]))
        full = abs(time_average(integrand))
        decay[name] = short / full if full > 0 else np.inf

    return PropositionReport(
        bound5_rhs=b5,
        bound6_rhs=b6,
        post_transient_max_H_like=float(H[start:].max()),
        post_transient_max_p2=float(p2[start:].max()),
        identity7_values=values,
        descent_verified=descent_ok,
        identity7_decay=decay,
        eps_tol=eps_tol,
        transient_end_time=float(records.t[start]),
        descent_samples=int(above.sum()),
        mass=m,
    )
