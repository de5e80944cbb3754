"""
Command-line entry point.

    gausstat simulate    --config c.toml [--seed 7] [--out DIR]
    gausstat equivalence --config c.toml [--out DIR] [--workers 4]
    gausstat proposition --config c.toml [--seed 7] [--out DIR]
    gausstat lyapunov    --config c.toml [--seed 7] [--out DIR]
    gausstat certify     --config c.toml [--out DIR]

Exit status: 0 on success, 1 when a physics check fails, 2 on a usage or
configuration error.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .analysis import check_proposition, lyapunov_spectrum
from .config import CONSTANT_HYPOTHESIS, RunManifest, config_hash, emit_records, parse_config
from .driver import run_certification_suite, run_equivalence_study
from .errors import GaussStatError, ParseError, ValidationError
from .integrator import initialize, run, save_checkpoint

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="gausstat", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in [
        ("simulate", "single run: records CSV, checkpoint and manifest"),
        ("equivalence", "matched IK/IE size ladder"),
        ("proposition", "constant-friction bounds and ergodic identity"),
        ("lyapunov", "Lyapunov spectrum and pairing"),
        ("certify", "every physics check"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=".", metavar="DIR")
        p.add_argument("--workers", type=int, default=None)
    return ap


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, default=_json_default)
    return path


def _seed(args, cfg):
    return cfg.study.seed if args.seed is None else args.seed


def _manifest(cfg, seeds):
    return RunManifest(config_hash(cfg), list(seeds), __version__, RunManifest.now())


def cmd_simulate(cfg, args):
    seed = _seed(args, cfg)
    spec, ff, mode = cfg.system_spec(), cfg.force_field(), cfg.thermostat_mode()
    icfg = cfg.integrator_config()
    man = _manifest(cfg, [seed])
    x0 = initialize(seed, spec, ff, mode, icfg.target)
    rec = run(x0, icfg, mode, spec, ff, cfg.integrator.steps, cfg.integrator.record_every)
    out = args.out
    paths = [emit_records(rec, os.path.join(out, "records.csv"))]
    ck = os.path.join(out, "checkpoint.json")
    save_checkpoint(ck, rec.final_state, spec, ff, mode, icfg, rec.steps, seed)
    paths.append(ck)
    man.outputs = paths
    man.finished = RunManifest.now()
    man.write(os.path.join(out, "manifest.json"))
    print(f"{len(rec)} records, max pre-projection residual {rec.max_residual:.3g}, "
          f"{rec.reflections} wall reflections")
    return EXIT_OK


def cmd_equivalence(cfg, args):
    study = cfg.study_config(workers=args.workers)
    if args.seed is not None:
        study = replace(study, base_seed=args.seed)
    man = _manifest(cfg, [study.base_seed])
    rep = run_equivalence_study(study, os.path.join(args.out, "sizes"))
    print(rep.table())
    shrinks = rep.current_gap_shrinks()
    trend = rep.alpha_gap_trend()
    spread = rep.intensive_spread()
    summary = {"rows": [r.as_dict() for r in rep.rows], "current_gap_shrinks": shrinks,
               "alpha_gap_trend": trend, "k0_per_particle_spread": spread}
    man.outputs = [_dump(os.path.join(args.out, "equivalence.json"), summary)]
    man.finished = RunManifest.now()
    man.write(os.path.join(args.out, "manifest.json"))
    ok = shrinks and all(trend) and spread < 0.05
    print(f"|dJ| shrinks: {shrinks}; dalpha trend: {trend}; K0/N spread {spread:.3%}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_proposition(cfg, args):
    mode = cfg.thermostat_mode()
    if mode.kind != "constant":
        print(f"proposition needs kind = \"constant\": the bounds assume {CONSTANT_HYPOTHESIS}",
              file=sys.stderr)
        return EXIT_USAGE
    seed = _seed(args, cfg)
    spec, ff, icfg = cfg.system_spec(), cfg.force_field(), cfg.integrator_config()
    man = _manifest(cfg, [seed])
    x0 = initialize(seed, spec, ff, mode, icfg.target)
    rec = run(x0, icfg, mode, spec, ff, cfg.integrator.steps, cfg.integrator.record_every)
    rep = check_proposition(rec, spec, ff, icfg)
    doc = {
        "bound5_rhs": rep.bound5_rhs, "bound6_rhs": rep.bound6_rhs, "eps_tol": rep.eps_tol,
        "post_transient_max_H_like": rep.post_transient_max_H_like,
        "post_transient_max_p2": rep.post_transient_max_p2,
        "transient_end_time": rep.transient_end_time,
        "descent_verified": rep.descent_verified, "descent_samples": rep.descent_samples,
        "bound5_ok": rep.bound5_ok, "bound6_ok": rep.bound6_ok,
        "identity7": {k: {**asdict(v), "decay": rep.identity7_decay[k]}
                      for k, v in rep.identity7_values.items()},
    }
    man.outputs = [_dump(os.path.join(args.out, "proposition.json"), doc)]
    man.finished = RunManifest.now()
    man.write(os.path.join(args.out, "manifest.json"))
    ok = rep.descent_verified and rep.bound5_ok and rep.bound6_ok and all(
        v.within(3.0) and rep.identity7_decay[k] > 1.4 for k, v in rep.identity7_values.items())
    for k, v in doc.items():
        print(f"{k}: {v}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_lyapunov(cfg, args):
    seed = _seed(args, cfg)
    spec, ff, mode, icfg = (cfg.system_spec(), cfg.force_field(), cfg.thermostat_mode(),
                            cfg.integrator_config())
    man = _manifest(cfg, [seed])
    x0 = initialize(seed, spec, ff, mode, icfg.target)
    rep = lyapunov_spectrum(x0, icfg, mode, spec, ff, cfg.integrator.steps,
                            cfg.integrator.reorth_every)
    rel = abs(rep.sum_exponents - rep.contraction_average) / abs(rep.contraction_average) \
        if rep.contraction_average else float(abs(rep.sum_exponents) > 0) * np.inf
    doc = {
        "exponents": rep.exponents, "sum_exponents": rep.sum_exponents,
        "contraction_average": rep.contraction_average, "sum_rule_rel_err": rel,
        "pairing_center": rep.pairing_center, "best_exclusion": rep.best_exclusion,
        "pairing_scores": {str(k): v for k, v in rep.pairing_scores.items()},
    }
    man.outputs = [_dump(os.path.join(args.out, "lyapunov.json"), doc)]
    man.finished = RunManifest.now()
    man.write(os.path.join(args.out, "manifest.json"))
    for k, v in doc.items():
        print(f"{k}: {v}")
    ok = rel < 0.02 and rep.pairing_scores[rep.best_exclusion] < 0.05 \
        and float(np.min(np.abs(rep.exponents))) < 0.02
    return EXIT_OK if ok else EXIT_FAIL


def cmd_certify(cfg, args):
    from .driver import CertificationSettings
    s = CertificationSettings(density=cfg.study.density, h0=cfg.study.h0)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    man = _manifest(cfg, [s.seed])
    results = run_certification_suite(s)
    for r in results:
        print(r.line())
    doc = [{"name": r.name, "passed": r.passed, "evidence": r.evidence, "error": r.error}
           for r in results]
    man.outputs = [_dump(os.path.join(args.out, "certify.json"), doc)]
    man.finished = RunManifest.now()
    man.write(os.path.join(args.out, "manifest.json"))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "simulate": cmd_simulate,
    "equivalence": cmd_equivalence,
    "proposition": cmd_proposition,
    "lyapunov": cmd_lyapunov,
    "certify": cmd_certify,
}


def main(argv=None):
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = parse_config(args.config)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.workers is not None and args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(args.out, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GaussStatError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
