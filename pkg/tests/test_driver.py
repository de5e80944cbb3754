import json
from dataclasses import replace

import numpy as np
import pytest

import gausstat.thermostats as thermostats
from gausstat.driver import (
    CertificationSettings, EquivalenceStudyConfig, match_state_points,
    run_certification_suite, run_equivalence_study, run_seed,
)

SMALL = EquivalenceStudyConfig(sizes=(4, 8, 16), steps=20_000, seeds=2, record_every=10)

QUICK = CertificationSettings(
    n_constraint=16, constraint_steps=2000, n_gauge=8, gauge_steps=2000,
    n_stationarity=16, stationarity_steps=20_000, proposition_steps=100_000,
    lyapunov_steps=10_000, order_time=0.5,
)

CHECKS = {"constraint_IK", "constraint_IE", "gauge_invariance", "stationarity",
          "proposition_bounds", "proposition_closed_form", "proposition_identity",
          "lyapunov", "rk4_order", "oracles"}


def test_config_invariants():
    with pytest.raises(ValueError):
        EquivalenceStudyConfig(sizes=(16, 32))
    with pytest.raises(ValueError):
        EquivalenceStudyConfig(seeds=1)
    assert EquivalenceStudyConfig(sizes=(64, 16, 32)).sizes == (16, 32, 64)


def test_seeds_are_distinct_and_stable():
    seeds = {run_seed(SMALL, n, role, k) for n in SMALL.sizes
             for role in ("match", "ik", "ie") for k in range(SMALL.seeds)}
    assert len(seeds) == 3 * 3 * 2
    assert run_seed(SMALL, 8, "ik", 1) == run_seed(SMALL, 8, "ik", 1)


def test_match_without_potential_is_exact():
    cfg = replace(SMALL, pair_epsilon=0.0)
    m = match_state_points(8, cfg)
    assert m.k0 == pytest.approx(8 * cfg.h0, rel=1e-13)


def test_match_reproducible_across_seeds():
    a = match_state_points(16, SMALL)
    b = match_state_points(16, replace(SMALL, base_seed=99))
    assert abs(a.k0 - b.k0) <= 3 * np.hypot(a.stderr, b.stderr)


def test_equilibrium_kinetic_energy_consistent():
    cfg = replace(SMALL, xi_magnitude=0.0, steps=50_000)
    a = match_state_points(32, cfg)
    b = match_state_points(32, replace(cfg, base_seed=5))
    assert abs(a.k0 - b.k0) / 32 <= 3 * np.hypot(a.stderr, b.stderr) / 32


def test_ladder_without_potential():
    rep = run_equivalence_study(replace(SMALL, pair_epsilon=0.0))
    for r in rep.rows:
        d, se = r.dJ
        assert abs(d) <= 3 * se
        assert r.V_IK.mean == 0.0 and r.V_IE.mean == 0.0


def test_ladder_without_field():
    rep = run_equivalence_study(replace(SMALL, xi_magnitude=0.0))
    for r in rep.rows:
        assert r.J_IK.within(3.0) and r.J_IE.within(3.0)


def test_study_deterministic_and_persisted(tmp_path):
    a = run_equivalence_study(SMALL, tmp_path)
    b = run_equivalence_study(replace(SMALL, workers=2))
    assert [r.as_dict() for r in a.rows] == [r.as_dict() for r in b.rows]
    assert [r.N for r in a.rows] == [4, 8, 16]
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["equivalence_N00004.json", "equivalence_N00008.json",
                     "equivalence_N00016.json"]
    doc = json.loads((tmp_path / files[0]).read_text())
    assert doc["N"] == 4 and len(doc["dJ"]) == 2
    assert "N" in a.table()


def test_certification_suite_completes():
    results = run_certification_suite(QUICK)
    assert {r.name for r in results} == CHECKS
    for r in results:
        assert r.evidence or r.error
        assert r.line().startswith(("PASS", "FAIL"))
    byname = {r.name: r for r in results}
    for name in ("constraint_IK", "constraint_IE", "gauge_invariance", "oracles",
                 "proposition_closed_form"):
        assert byname[name].passed, byname[name].line()


def test_broken_ie_friction_is_caught(monkeypatch):
    original = thermostats.alpha_ie
    monkeypatch.setattr(thermostats, "alpha_ie", lambda xi, p: -original(xi, p))
    results = {r.name: r for r in run_certification_suite(QUICK)}
    assert not results["constraint_IE"].passed
    assert results["constraint_IE"].evidence["max_dHdt"] > 1e-6


def test_suite_reports_errors_instead_of_raising():
    results = run_certification_suite(replace(QUICK, proposition_density=2.0))
    byname = {r.name: r for r in results}
    assert not byname["proposition_bounds"].passed
    assert "PackingFailure" in byname["proposition_bounds"].error
    assert not byname["proposition_identity"].passed
