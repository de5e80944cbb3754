"""
Why the default field strength gives a quiet steady state.

With alternating colour charges and |xi| = 0.5 at density 0.4, the two
species sort themselves into counter-streaming lanes. Once the lanes are
clean the particles stop meeting, V drops to zero, and the IE friction
settles at the value that balances the field on free streaming. At
|xi| = 0.2 the kinetic energy stays high enough relative to the drive that
collisions continue.

    python demos/lane_formation.py [N] [steps]
"""

import sys

import numpy as np

from gausstat import IntegratorConfig, SystemSpec, ThermostatMode, initialize, run
from gausstat.forces import ForceFieldSpec

n = int(sys.argv[1]) if len(sys.argv) > 1 else 64
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 200_000
h0 = 1.5

spec = SystemSpec.at_density(n, 0.4)
mode = ThermostatMode("IE")

for xi in (0.5, 0.2):
    ff = ForceFieldSpec(1.0, 1.0, (xi, 0.0), "alternating")
    cfg = IntegratorConfig(target=n * h0)
    x0 = initialize(1, spec, ff, mode, cfg.target)
    rec = run(x0, cfg, mode, spec, ff, steps, 100)
    print(f"\n|xi| = {xi}")
    print("      t     V/N      K/N       J     alpha")
    chunks = np.array_split(np.arange(len(rec)), 10)
    for idx in chunks:
        d = rec.data[idx]
        print(f"{d[0, 0]:7.0f}  {d[:, 5].mean() / n:6.4f}  {d[:, 1].mean() / n:7.4f}  "
              f"{d[:, 4].mean():6.4f}  {d[:, 3].mean():7.4f}")

    # free streaming at fixed H = K: every particle moves along its own
    # charge direction with |p| = sqrt(2 h0 m) and alpha = xi / |p|
    if xi == 0.5:
        p = np.sqrt(2 * h0)
        print(f"lane limit: J = {p:.4f}, alpha = {xi / p:.4f}")
