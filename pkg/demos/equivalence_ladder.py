"""
Matched IK/IE runs across system sizes.

The first table uses the default state point (|xi| = 0.5). There the system
forms lanes (see lane_formation.py) and both ensembles end in the same
collisionless state, so every difference is pure noise. The second table
uses |xi| = 0.2, where collisions persist.

    python demos/equivalence_ladder.py [steps] [workers]
"""

import sys

from gausstat.driver import EquivalenceStudyConfig, run_equivalence_study

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1

for xi in (0.5, 0.2):
    cfg = EquivalenceStudyConfig(xi_magnitude=xi, steps=steps, workers=workers)
    rep = run_equivalence_study(cfg)
    print(f"\n|xi| = {xi}, {steps} steps per run, {cfg.seeds} seeds per size")
    print(rep.table())
    print(f"|dJ| shrinks from N={cfg.sizes[0]} to N={cfg.sizes[-1]}: {rep.current_gap_shrinks()}")
    print(f"K0/N spread over the ladder: {rep.intensive_spread():.2%}")
