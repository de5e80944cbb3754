import numpy as np
import pytest
from scipy.integrate import simpson

from gausstat.errors import InfeasibleEnergy, MaxReflections, PackingFailure
from gausstat.analysis import block_average
from gausstat.forces import ForceFieldSpec, grad_V, total_potential
from gausstat.geometry import PhasePoint, SystemSpec, minimum_image
from gausstat.integrator import (
    IntegratorConfig, Records, initialize, load_checkpoint, run, save_checkpoint, step,
    vector_field,
)
from gausstat.thermostats import ThermostatMode

from conftest import color_field

IK, IE = ThermostatMode("IK"), ThermostatMode("IE")


def test_initialize_exact_kinetic_energy():
    spec = SystemSpec(0, 2, (5.0, 5.0), 2)
    x = initialize(1, spec, ForceFieldSpec(), IK, 1.0)
    assert abs(x.p2() / 2 - 1.0) < 1e-14
    assert np.allclose(x.p.sum(axis=0), 0.0, atol=1e-15)


def test_initialize_ie_energy(torus16):
    ff = color_field(0.5)
    x = initialize(3, torus16, ff, IE, 24.0)
    assert x.p2() / 2 + total_potential(x, torus16, ff) == pytest.approx(24.0, rel=1e-14)


def test_initialize_deterministic(torus16):
    a = initialize(42, torus16, ForceFieldSpec(), IK, 16.0)
    b = initialize(42, torus16, ForceFieldSpec(), IK, 16.0)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.p, b.p)
    c = initialize(43, torus16, ForceFieldSpec(), IK, 16.0)
    assert not np.array_equal(a.q, c.q)


def test_initialize_min_separation(torus16):
    x = initialize(5, torus16, ForceFieldSpec(), IK, 16.0)
    dmin = np.inf
    for i in range(16):
        for j in range(i + 1, 16):
            dmin = min(dmin, np.linalg.norm(minimum_image(x.q[i] - x.q[j], torus16)))
    assert dmin >= 0.8


def test_initialize_errors():
    with pytest.raises(PackingFailure):
        initialize(0, SystemSpec.at_density(64, 1.5), ForceFieldSpec(), IK, 64.0)
    with pytest.raises(InfeasibleEnergy):
        initialize(0, SystemSpec.at_density(16, 0.4), ForceFieldSpec(), IE, -1.0)


def test_vector_field_examples(rng, torus16):
    free = ForceFieldSpec(0.0, 1.0)
    x = PhasePoint(rng.uniform(0, 5, (16, 2)), rng.standard_normal((16, 2)))
    dq, dp = vector_field(x, IK, torus16, free)
    assert np.array_equal(dq, x.p) and np.all(dp == 0)

    spec1 = SystemSpec(0, 1, (5.0,), 1)
    x1 = PhasePoint([[1.0]], [[0.7]])
    _, dp = vector_field(x1, IE, spec1, ForceFieldSpec(0.0, 1.0, (0.5,)))
    assert abs(dp[0, 0]) < 1e-15

    ff = color_field(0.5)
    for seed in range(5):
        x = initialize(seed, torus16, ff, IE, 24.0)
        dq, dp = vector_field(x, IE, torus16, ff)
        hdot = np.dot(dp.ravel(), dq.ravel()) + np.dot(grad_V(x, torus16, ff).ravel(), dq.ravel())
        assert abs(hdot) < 1e-12


def test_constant_alpha_step_matches_closed_form():
    spec = SystemSpec(0, 1, (10.0,), 1)
    ff = ForceFieldSpec(0.0, 1.0, (0.5,))
    alpha, dt, p0 = 0.8, 1e-3, 2.0
    rep = step(PhasePoint([[1.0]], [[p0]]), IntegratorConfig(dt=dt, target=2.0),
               ThermostatMode.constant(alpha), spec, ff)
    exact = 0.5 / alpha + (p0 - 0.5 / alpha) * np.exp(-alpha * dt)
    assert abs(rep.state.p[0, 0] - exact) < 1e-13
    assert rep.alpha_used == alpha and rep.reflections == 0


@pytest.mark.parametrize("mode, tol", [(IK, 1e-12), (IE, 1e-10)])
def test_constraint_held_every_step(torus16, mode, tol):
    ff = color_field(0.5)
    target = 24.0
    x0 = initialize(2, torus16, ff, mode, target)
    rec = run(x0, IntegratorConfig(target=target), mode, torus16, ff, 10_000, 1)
    obs = rec.K if mode.kind == "IK" else rec.H
    assert np.max(np.abs(obs / target - 1)) < tol


@pytest.mark.parametrize("mode", [IK, IE])
def test_drift_without_projection_is_small(torus16, mode):
    ff = color_field(0.5)
    x0 = initialize(2, torus16, ff, mode, 24.0)
    rec = run(x0, IntegratorConfig(target=24.0, projection=False), mode, torus16, ff, 10_000, 100)
    obs = rec.K if mode.kind == "IK" else rec.H
    assert np.max(np.abs(obs / 24.0 - 1)) < 1e-6


def test_generalized_energy_conserved(torus16):
    ff = color_field(0.5)
    mode = ThermostatMode("generalized", mtilde=2.0, vtilde_epsilon=0.5, vtilde_range=0.9)
    x0 = initialize(4, torus16, ff, mode, 20.0)
    for proj in (True, False):
        rec = run(x0, IntegratorConfig(target=20.0, projection=proj), mode, torus16, ff, 5000, 5000)
        x = rec.final_state
        e = x.p2() / (2 * 2.0) + total_potential(x, torus16, mode.vtilde())
        assert e == pytest.approx(20.0, rel=1e-12 if proj else 1e-7)


def test_equilibrium_alpha_averages_to_zero(torus16):
    ff = ForceFieldSpec()
    x0 = initialize(9, torus16, ff, IK, 24.0)
    rec = run(x0, IntegratorConfig(target=24.0), IK, torus16, ff, 100_000, 10)
    assert block_average(rec.alpha, 8).within(3.0)
    assert np.all(rec.J == 0)


def test_record_subsampling(torus16):
    ff = color_field(0.5)
    x0 = initialize(1, torus16, ff, IE, 24.0)
    cfg = IntegratorConfig(target=24.0)
    a = run(x0, cfg, IE, torus16, ff, 500, 1)
    b = run(x0, cfg, IE, torus16, ff, 500, 10)
    assert np.array_equal(a.data[::10], b.data)
    assert np.array_equal(a.final_state.q, b.final_state.q)


def test_free_particle_streams():
    spec = SystemSpec(0, 2, (3.0, 2.0), 1)
    x0 = PhasePoint([[0.5, 0.5]], [[1.3, -0.7]])
    rec = run(x0, IntegratorConfig(target=float(x0.p2() / 2)), IK, spec, ForceFieldSpec(0.0), 1000, 1000)
    expect = np.mod(x0.q + x0.p * 1.0, spec.box)
    assert np.max(np.abs(rec.final_state.q - expect)) < 1e-10


def test_walls_reflect_and_conserve_kinetic_energy():
    spec = SystemSpec(1, 1, (3.0, 6.0), 12)
    ff = ForceFieldSpec(1.0, 1.0, (0.0, 0.5), "alternating")
    x0 = initialize(8, spec, ff, IK, 36.0)
    cfg = IntegratorConfig(target=36.0)
    x = x0
    total_ref = 0
    for _ in range(20):
        rec = run(x, cfg, IK, spec, ff, 500, 500)
        x = rec.final_state
        total_ref += rec.reflections
        vmax = np.sqrt(x.p2())
        assert np.all(x.q[:, 0] >= -cfg.reflection_tol * vmax)
        assert np.all(x.q[:, 0] <= 3.0 + cfg.reflection_tol * vmax)
        assert np.all((x.q[:, 1] >= 0) & (x.q[:, 1] < 6.0))
    assert total_ref > 0
    assert x.p2() / 2 == pytest.approx(36.0, rel=1e-12)


def test_single_reflection_is_exact():
    spec = SystemSpec(1, 0, (1.0,), 1)
    ff = ForceFieldSpec(0.0)
    x0 = PhasePoint([[0.9995]], [[1.0]])
    rep = step(x0, IntegratorConfig(target=0.5), IK, spec, ff)
    assert rep.reflections == 1
    assert rep.state.q[0, 0] == pytest.approx(0.9995, abs=1e-12)
    assert rep.state.p[0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_max_reflections():
    spec = SystemSpec(1, 0, (1e-3,), 1)
    x0 = PhasePoint([[5e-4]], [[1e3]])
    with pytest.raises(MaxReflections):
        step(x0, IntegratorConfig(target=5e5), IK, spec, ForceFieldSpec(0.0))


def test_time_reversal_ik(torus16):
    """Flipping p retraces an IK trajectory; the field is left as it is."""
    ff = color_field(0.5)
    x0 = initialize(6, torus16, ff, IK, 24.0)
    cfg = IntegratorConfig(target=24.0)
    fwd = run(x0, cfg, IK, torus16, ff, 100, 100).final_state
    back = run(PhasePoint(fwd.q, -fwd.p), cfg, IK, torus16, ff, 100, 100).final_state
    dq = minimum_image(back.q - x0.q, torus16)
    assert np.max(np.abs(dq)) < 1e-8
    assert np.max(np.abs(back.p + x0.p)) < 1e-8


def test_time_reversal_with_flipped_field_does_not_retrace(torus16):
    ff = color_field(0.5)
    flipped = color_field(-0.5)
    x0 = initialize(6, torus16, ff, IK, 24.0)
    cfg = IntegratorConfig(target=24.0)
    fwd = run(x0, cfg, IK, torus16, ff, 100, 100).final_state
    back = run(PhasePoint(fwd.q, -fwd.p), cfg, IK, torus16, flipped, 100, 100).final_state
    assert np.max(np.abs(back.p + x0.p)) > 1e-6


def test_heat_rate_bookkeeping(torus16):
    """
    Integrated heat rate equals the change of p^2/2m + V at constant alpha,
    with an error bounded by C dt^4 per unit time. RK4 and Simpson errors
    partly cancel, so the check is a uniform bound rather than a ratio.
    """
    ff = color_field(0.5)
    mode = ThermostatMode.constant(1.0)
    x0 = initialize(3, torus16, ff, mode, 100.0)
    T = 1.0
    for dt in (4e-3, 2e-3, 1e-3, 5e-4):
        n = int(round(T / dt))
        rec = run(x0, IntegratorConfig(dt=dt, target=100.0), mode, torus16, ff, n, 1)
        gain = simpson(rec.heat_rate, x=rec.t)
        change = rec.H[-1] - rec.H[0]
        assert abs(change) > 10
        assert abs(gain - change) <= 1e3 * dt ** 4 * T


def test_checkpoint_continuation(tmp_path, torus16):
    ff = color_field(0.5)
    x0 = initialize(11, torus16, ff, IE, 24.0)
    cfg = IntegratorConfig(target=24.0)
    full = run(x0, cfg, IE, torus16, ff, 2000, 10)
    half = run(x0, cfg, IE, torus16, ff, 1000, 10)
    path = tmp_path / "ck.json"
    save_checkpoint(path, half.final_state, torus16, ff, IE, cfg, 1000, 11)
    ck = load_checkpoint(path)
    assert ck["spec"] == torus16 and ck["ffield"] == ff and ck["mode"] == IE
    rest = run(ck["state"], ck["cfg"], ck["mode"], ck["spec"], ck["ffield"], 1000, 10,
               step0=ck["step"])
    joined = np.vstack([half.data, rest.data[1:]])
    assert np.max(np.abs(joined - full.data)) <= 1e-12


def test_records_container(torus16):
    ff = color_field(0.5)
    x0 = initialize(1, torus16, ff, IK, 24.0)
    rec = run(x0, IntegratorConfig(target=24.0), IK, torus16, ff, 100, 10)
    assert len(rec) == 11 and rec.t[-1] == pytest.approx(0.1)
    first = next(iter(rec))
    assert first.t == 0 and first.K == pytest.approx(24.0)
    assert isinstance(rec[2:], Records) and len(rec.after(0.5)) == 5
    with pytest.raises(AttributeError):
        rec.nonsense


def test_run_deterministic(torus16):
    ff = color_field(0.5)
    x0 = initialize(1, torus16, ff, IE, 24.0)
    a = run(x0, IntegratorConfig(target=24.0), IE, torus16, ff, 300, 3)
    b = run(x0, IntegratorConfig(target=24.0), IE, torus16, ff, 300, 3)
    assert np.array_equal(a.data, b.data)


def test_ie_gauge_along_torus_refused(torus16):
    ff = color_field(0.5, gauge_shift=(0.1, 0.0))
    with pytest.raises(ValueError):
        run(initialize(1, torus16, color_field(0.5), IE, 24.0), IntegratorConfig(target=24.0),
            IE, torus16, ff, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(reflection_tol=-1.0)
